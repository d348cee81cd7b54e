//! Differentiable primitives for the sequence network.
//!
//! The topology is fixed: a dense layer feeds a single-layer GRU whose state
//! passes through a second dense layer into the typed output layer. Both
//! dense layers use the swish activation. Because the shape never changes,
//! the backward pass is written out by hand against the recorded forward
//! trace and verified against central finite differences in the tests.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SynthError};

/// Serde adapter storing an `f64` slice as base64 of its little-endian
/// bytes. Model files stay compact and bit-exact across platforms.
pub mod f64_base64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(data: &[f64], serializer: S) -> Result<S::Ok, S::Error> {
        let mut bytes = Vec::with_capacity(data.len() * 8);
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        serializer.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<f64>, D::Error> {
        let text = String::deserialize(deserializer)?;
        let bytes = STANDARD
            .decode(text.as_bytes())
            .map_err(serde::de::Error::custom)?;
        if bytes.len() % 8 != 0 {
            return Err(serde::de::Error::custom(
                "flat array length is not a multiple of 8 bytes",
            ));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Row-major dense matrix. Serializes as a shape header plus the flat
/// base64-encoded element array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    #[serde(with = "f64_base64")]
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn uniform<R: Rng>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Matrix {
        Matrix {
            rows,
            cols,
            data: (0..rows * cols)
                .map(|_| rng.random_range(-bound..bound))
                .collect(),
        }
    }

    /// `W · x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (i, out_i) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            *out_i = row.iter().zip(x).map(|(w, v)| w * v).sum();
        }
        out
    }

    /// `Wᵀ · v`
    pub fn matvec_t(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, vi) in v.iter().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (o, w) in out.iter_mut().zip(row) {
                *o += vi * w;
            }
        }
        out
    }

    /// `self += u ⊗ v`
    pub fn add_outer(&mut self, u: &[f64], v: &[f64]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for (i, ui) in u.iter().enumerate() {
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (w, vj) in row.iter_mut().zip(v) {
                *w += ui * vj;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `x · sigmoid(x)`
pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

fn swish_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    s + x * s * (1.0 - s)
}

/// `log(1 + eˣ)`, computed without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Derivative of softplus, which is just the sigmoid.
pub fn softplus_prime(x: f64) -> f64 {
    sigmoid(x)
}

/// Normalized exponentials, stabilized by subtracting the max logit.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

/// `W·x + b`
pub fn dense(weights: &Matrix, bias: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if weights.cols != x.len() || weights.rows != bias.len() {
        return Err(SynthError::ShapeMismatch(format!(
            "dense: W is {}x{}, b has {}, x has {}",
            weights.rows,
            weights.cols,
            bias.len(),
            x.len()
        )));
    }
    let mut out = weights.matvec(x);
    for (o, b) in out.iter_mut().zip(bias) {
        *o += b;
    }
    Ok(out)
}

/// Gate weights for the single GRU layer. Each matrix acts on `[h_prev; x]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruWeights {
    pub w_update: Matrix,
    #[serde(with = "f64_base64")]
    pub b_update: Vec<f64>,
    pub w_reset: Matrix,
    #[serde(with = "f64_base64")]
    pub b_reset: Vec<f64>,
    pub w_candidate: Matrix,
    #[serde(with = "f64_base64")]
    pub b_candidate: Vec<f64>,
}

/// One GRU update:
/// `z = σ(W_z·[h;x]+b_z)`, `r = σ(W_r·[h;x]+b_r)`,
/// `h̃ = tanh(W_h·[r⊙h;x]+b_h)`, `h' = (1−z)⊙h + z⊙h̃`.
pub fn gru_step(weights: &GruWeights, h_prev: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let (h_next, _, _, _) = gru_step_traced(weights, h_prev, x)?;
    Ok(h_next)
}

#[allow(clippy::type_complexity)]
fn gru_step_traced(
    weights: &GruWeights,
    h_prev: &[f64],
    x: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    let h = h_prev.len();
    if weights.w_update.cols != h + x.len() || weights.w_update.rows != h {
        return Err(SynthError::ShapeMismatch(format!(
            "gru: W is {}x{}, h_prev has {}, x has {}",
            weights.w_update.rows,
            weights.w_update.cols,
            h,
            x.len()
        )));
    }
    let mut concat = Vec::with_capacity(h + x.len());
    concat.extend_from_slice(h_prev);
    concat.extend_from_slice(x);

    let z: Vec<f64> = dense(&weights.w_update, &weights.b_update, &concat)?
        .into_iter()
        .map(sigmoid)
        .collect();
    let r: Vec<f64> = dense(&weights.w_reset, &weights.b_reset, &concat)?
        .into_iter()
        .map(sigmoid)
        .collect();

    let mut gated = Vec::with_capacity(h + x.len());
    gated.extend(r.iter().zip(h_prev).map(|(ri, hi)| ri * hi));
    gated.extend_from_slice(x);
    let candidate: Vec<f64> = dense(&weights.w_candidate, &weights.b_candidate, &gated)?
        .into_iter()
        .map(f64::tanh)
        .collect();

    let h_next: Vec<f64> = (0..h)
        .map(|i| (1.0 - z[i]) * h_prev[i] + z[i] * candidate[i])
        .collect();
    Ok((h_next, z, r, candidate))
}

// ---------------------------------------------------------------------------
// The full network
// ---------------------------------------------------------------------------

/// All trainable parameters. Also doubles as the gradient container, since a
/// gradient has exactly the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    pub input_dim: usize,
    pub hidden: usize,
    pub output_dim: usize,
    pub w_in: Matrix,
    #[serde(with = "f64_base64")]
    pub b_in: Vec<f64>,
    pub gru: GruWeights,
    pub w_hidden: Matrix,
    #[serde(with = "f64_base64")]
    pub b_hidden: Vec<f64>,
    pub w_out: Matrix,
    #[serde(with = "f64_base64")]
    pub b_out: Vec<f64>,
}

pub type Gradient = WeightSet;

impl WeightSet {
    /// Seeded initialization, uniform in `±1/√fan_in` per layer.
    pub fn init<R: Rng>(input_dim: usize, hidden: usize, output_dim: usize, rng: &mut R) -> Self {
        let gate = |rng: &mut R| {
            let bound = 1.0 / ((2 * hidden) as f64).sqrt();
            (
                Matrix::uniform(hidden, 2 * hidden, bound, rng),
                (0..hidden).map(|_| rng.random_range(-bound..bound)).collect::<Vec<f64>>(),
            )
        };
        let b_in_bound = 1.0 / (input_dim.max(1) as f64).sqrt();
        let w_in = Matrix::uniform(hidden, input_dim, b_in_bound, rng);
        let b_in = (0..hidden)
            .map(|_| rng.random_range(-b_in_bound..b_in_bound))
            .collect();
        let (w_update, b_update) = gate(rng);
        let (w_reset, b_reset) = gate(rng);
        let (w_candidate, b_candidate) = gate(rng);
        let hid_bound = 1.0 / (hidden as f64).sqrt();
        let w_hidden = Matrix::uniform(hidden, hidden, hid_bound, rng);
        let b_hidden = (0..hidden)
            .map(|_| rng.random_range(-hid_bound..hid_bound))
            .collect();
        let w_out = Matrix::uniform(output_dim, hidden, hid_bound, rng);
        let b_out = (0..output_dim)
            .map(|_| rng.random_range(-hid_bound..hid_bound))
            .collect();
        WeightSet {
            input_dim,
            hidden,
            output_dim,
            w_in,
            b_in,
            gru: GruWeights {
                w_update,
                b_update,
                w_reset,
                b_reset,
                w_candidate,
                b_candidate,
            },
            w_hidden,
            b_hidden,
            w_out,
            b_out,
        }
    }

    pub fn zeros_like(&self) -> WeightSet {
        let mut copy = self.clone();
        for slice in copy.params_mut() {
            slice.fill(0.0);
        }
        copy
    }

    /// Flat views over every parameter array, in a fixed order.
    pub fn params(&self) -> Vec<&[f64]> {
        vec![
            &self.w_in.data,
            &self.b_in,
            &self.gru.w_update.data,
            &self.gru.b_update,
            &self.gru.w_reset.data,
            &self.gru.b_reset,
            &self.gru.w_candidate.data,
            &self.gru.b_candidate,
            &self.w_hidden.data,
            &self.b_hidden,
            &self.w_out.data,
            &self.b_out,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.w_in.data,
            &mut self.b_in,
            &mut self.gru.w_update.data,
            &mut self.gru.b_update,
            &mut self.gru.w_reset.data,
            &mut self.gru.b_reset,
            &mut self.gru.w_candidate.data,
            &mut self.gru.b_candidate,
            &mut self.w_hidden.data,
            &mut self.b_hidden,
            &mut self.w_out.data,
            &mut self.b_out,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|s| s.len()).sum()
    }

    /// Verifies that every array matches the declared dimensions. Run after
    /// deserializing untrusted model files.
    pub fn check_shapes(&self) -> Result<()> {
        let h = self.hidden;
        let expect = [
            (&self.w_in, h, self.input_dim, self.b_in.len()),
            (&self.gru.w_update, h, 2 * h, self.gru.b_update.len()),
            (&self.gru.w_reset, h, 2 * h, self.gru.b_reset.len()),
            (&self.gru.w_candidate, h, 2 * h, self.gru.b_candidate.len()),
            (&self.w_hidden, h, h, self.b_hidden.len()),
            (&self.w_out, self.output_dim, h, self.b_out.len()),
        ];
        for (matrix, rows, cols, bias_len) in expect {
            if matrix.rows != rows
                || matrix.cols != cols
                || matrix.data.len() != rows * cols
                || bias_len != rows
            {
                return Err(SynthError::ShapeMismatch(format!(
                    "stored weights are {}x{} with {} elements and bias {}, expected {}x{}",
                    matrix.rows,
                    matrix.cols,
                    matrix.data.len(),
                    bias_len,
                    rows,
                    cols
                )));
            }
        }
        if !self.is_finite() {
            return Err(SynthError::ShapeMismatch(
                "stored weights contain non-finite values".into(),
            ));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn global_norm(&self) -> f64 {
        self.params()
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for slice in self.params_mut() {
            for v in slice.iter_mut() {
                *v *= factor;
            }
        }
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
struct StepTrace {
    input: Vec<f64>,
    preact_in: Vec<f64>,
    gru_input: Vec<f64>,
    update: Vec<f64>,
    reset: Vec<f64>,
    candidate: Vec<f64>,
    hidden: Vec<f64>,
    preact_hidden: Vec<f64>,
    post_hidden: Vec<f64>,
}

/// Recorded forward computation over one sequence.
#[derive(Debug, Clone)]
pub struct Tape {
    steps: Vec<StepTrace>,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Runs one input through the network given the previous hidden state.
/// Returns the raw output and the next hidden state.
pub fn forward_step(
    weights: &WeightSet,
    h_prev: &[f64],
    input: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let preact_in = dense(&weights.w_in, &weights.b_in, input)?;
    let gru_input: Vec<f64> = preact_in.iter().map(|&v| swish(v)).collect();
    let (hidden, _, _, _) = gru_step_traced(&weights.gru, h_prev, &gru_input)?;
    let preact_hidden = dense(&weights.w_hidden, &weights.b_hidden, &hidden)?;
    let post_hidden: Vec<f64> = preact_hidden.iter().map(|&v| swish(v)).collect();
    let output = dense(&weights.w_out, &weights.b_out, &post_hidden)?;
    Ok((output, hidden))
}

/// Runs a whole sequence of inputs, recording the tape for `backward`.
/// Outputs one raw vector per input.
pub fn forward_sequence(
    weights: &WeightSet,
    inputs: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Tape)> {
    let mut steps = Vec::with_capacity(inputs.len());
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut h_prev = vec![0.0; weights.hidden];
    for input in inputs {
        let preact_in = dense(&weights.w_in, &weights.b_in, input)?;
        let gru_input: Vec<f64> = preact_in.iter().map(|&v| swish(v)).collect();
        let (hidden, update, reset, candidate) =
            gru_step_traced(&weights.gru, &h_prev, &gru_input)?;
        let preact_hidden = dense(&weights.w_hidden, &weights.b_hidden, &hidden)?;
        let post_hidden: Vec<f64> = preact_hidden.iter().map(|&v| swish(v)).collect();
        let output = dense(&weights.w_out, &weights.b_out, &post_hidden)?;
        outputs.push(output);
        steps.push(StepTrace {
            input: input.clone(),
            preact_in,
            gru_input,
            update,
            reset,
            candidate,
            hidden: hidden.clone(),
            preact_hidden,
            post_hidden,
        });
        h_prev = hidden;
    }
    Ok((outputs, Tape { steps }))
}

/// Reverse-mode gradients of a scalar loss with respect to every weight,
/// given `∂loss/∂output` for each step of the tape. Accumulates into `grad`.
pub fn backward(
    weights: &WeightSet,
    tape: &Tape,
    output_grads: &[Vec<f64>],
    grad: &mut Gradient,
) -> Result<()> {
    if output_grads.len() != tape.steps.len() {
        return Err(SynthError::ShapeMismatch(format!(
            "backward: {} output grads for {} steps",
            output_grads.len(),
            tape.steps.len()
        )));
    }
    let h = weights.hidden;
    let mut carry = vec![0.0; h];

    for (t, step) in tape.steps.iter().enumerate().rev() {
        let go = &output_grads[t];
        if go.len() != weights.output_dim {
            return Err(SynthError::ShapeMismatch(format!(
                "backward: output grad {t} has {} entries, expected {}",
                go.len(),
                weights.output_dim
            )));
        }

        // Output layer.
        grad.w_out.add_outer(go, &step.post_hidden);
        for (b, g) in grad.b_out.iter_mut().zip(go) {
            *b += g;
        }
        let d_post = weights.w_out.matvec_t(go);
        let d_preact_hidden: Vec<f64> = d_post
            .iter()
            .zip(&step.preact_hidden)
            .map(|(g, &p)| g * swish_prime(p))
            .collect();
        grad.w_hidden.add_outer(&d_preact_hidden, &step.hidden);
        for (b, g) in grad.b_hidden.iter_mut().zip(&d_preact_hidden) {
            *b += g;
        }

        // Gradient flowing into the GRU state: direct path plus BPTT carry.
        let mut gh = weights.w_hidden.matvec_t(&d_preact_hidden);
        for (g, c) in gh.iter_mut().zip(&carry) {
            *g += c;
        }

        let zeros;
        let h_prev: &[f64] = if t == 0 {
            zeros = vec![0.0; h];
            &zeros
        } else {
            &tape.steps[t - 1].hidden
        };

        let z = &step.update;
        let r = &step.reset;
        let cand = &step.candidate;

        let d_z: Vec<f64> = (0..h).map(|i| gh[i] * (cand[i] - h_prev[i])).collect();
        let d_cand: Vec<f64> = (0..h).map(|i| gh[i] * z[i]).collect();
        let mut d_h_prev: Vec<f64> = (0..h).map(|i| gh[i] * (1.0 - z[i])).collect();

        // Candidate gate (tanh).
        let d_acts_cand: Vec<f64> = d_cand
            .iter()
            .zip(cand)
            .map(|(g, &c)| g * (1.0 - c * c))
            .collect();
        let mut gated = Vec::with_capacity(2 * h);
        gated.extend((0..h).map(|i| r[i] * h_prev[i]));
        gated.extend_from_slice(&step.gru_input);
        grad.gru.w_candidate.add_outer(&d_acts_cand, &gated);
        for (b, g) in grad.gru.b_candidate.iter_mut().zip(&d_acts_cand) {
            *b += g;
        }
        let d_gated = weights.gru.w_candidate.matvec_t(&d_acts_cand);
        let mut d_x: Vec<f64> = d_gated[h..].to_vec();
        let d_r: Vec<f64> = (0..h).map(|i| d_gated[i] * h_prev[i]).collect();
        for i in 0..h {
            d_h_prev[i] += d_gated[i] * r[i];
        }

        // Reset and update gates (sigmoid).
        let mut concat = Vec::with_capacity(2 * h);
        concat.extend_from_slice(h_prev);
        concat.extend_from_slice(&step.gru_input);

        let d_acts_reset: Vec<f64> = (0..h).map(|i| d_r[i] * r[i] * (1.0 - r[i])).collect();
        grad.gru.w_reset.add_outer(&d_acts_reset, &concat);
        for (b, g) in grad.gru.b_reset.iter_mut().zip(&d_acts_reset) {
            *b += g;
        }
        let d_concat_r = weights.gru.w_reset.matvec_t(&d_acts_reset);

        let d_acts_update: Vec<f64> = (0..h).map(|i| d_z[i] * z[i] * (1.0 - z[i])).collect();
        grad.gru.w_update.add_outer(&d_acts_update, &concat);
        for (b, g) in grad.gru.b_update.iter_mut().zip(&d_acts_update) {
            *b += g;
        }
        let d_concat_z = weights.gru.w_update.matvec_t(&d_acts_update);

        for i in 0..h {
            d_h_prev[i] += d_concat_r[i] + d_concat_z[i];
            d_x[i] += d_concat_r[h + i] + d_concat_z[h + i];
        }

        // Input dense layer.
        let d_preact_in: Vec<f64> = d_x
            .iter()
            .zip(&step.preact_in)
            .map(|(g, &p)| g * swish_prime(p))
            .collect();
        grad.w_in.add_outer(&d_preact_in, &step.input);
        for (b, g) in grad.b_in.iter_mut().zip(&d_preact_in) {
            *b += g;
        }

        carry = d_h_prev;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Adaptive-moment gradient descent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first_moment: WeightSet,
    second_moment: WeightSet,
}

impl Adam {
    pub fn new(weights: &WeightSet, learning_rate: f64) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: weights.zeros_like(),
            second_moment: weights.zeros_like(),
        }
    }

    pub fn update(&mut self, weights: &mut WeightSet, grad: &Gradient) {
        self.step += 1;
        let bias1 = 1.0 - self.beta1.powi(self.step as i32);
        let bias2 = 1.0 - self.beta2.powi(self.step as i32);
        let mut m = self.first_moment.params_mut();
        let mut v = self.second_moment.params_mut();
        let g = grad.params();
        let mut w = weights.params_mut();
        for k in 0..g.len() {
            let (mk, vk, gk, wk) = (&mut m[k], &mut v[k], g[k], &mut w[k]);
            for i in 0..gk.len() {
                mk[i] = self.beta1 * mk[i] + (1.0 - self.beta1) * gk[i];
                vk[i] = self.beta2 * vk[i] + (1.0 - self.beta2) * gk[i] * gk[i];
                let m_hat = mk[i] / bias1;
                let v_hat = vk[i] / bias2;
                wk[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

/// Rescales the gradient in place when its global norm exceeds `max_norm`.
pub fn clip_global_norm(grad: &mut Gradient, max_norm: f64) {
    let norm = grad.global_norm();
    if norm > max_norm && norm > 0.0 {
        grad.scale(max_norm / norm);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn seeded(n: u64) -> rand_chacha::ChaCha12Rng {
        crate::rng::stream(n, "nn-test", 0)
    }

    #[test]
    fn dense_identity_passes_through() {
        let w = Matrix {
            rows: 2,
            cols: 2,
            data: vec![1.0, 0.0, 0.0, 1.0],
        };
        assert_eq!(
            dense(&w, &[0.0, 0.0], &[1.0, 2.0]).unwrap(),
            vec![1.0, 2.0]
        );
    }

    #[test]
    fn dense_zero_weights_return_bias() {
        let w = Matrix::zeros(2, 2);
        assert_eq!(
            dense(&w, &[3.0, 3.0], &[-1.0, 4.0]).unwrap(),
            vec![3.0, 3.0]
        );
    }

    #[test]
    fn dense_row_sums() {
        let w = Matrix {
            rows: 1,
            cols: 2,
            data: vec![1.0, 1.0],
        };
        assert_eq!(dense(&w, &[0.0], &[2.0, 3.0]).unwrap(), vec![5.0]);
    }

    #[test]
    fn dense_rejects_shape_mismatch() {
        let w = Matrix::zeros(2, 3);
        assert!(matches!(
            dense(&w, &[0.0, 0.0], &[1.0, 2.0]),
            Err(SynthError::ShapeMismatch(_))
        ));
    }

    fn zero_gru(h: usize) -> GruWeights {
        GruWeights {
            w_update: Matrix::zeros(h, 2 * h),
            b_update: vec![0.0; h],
            w_reset: Matrix::zeros(h, 2 * h),
            b_reset: vec![0.0; h],
            w_candidate: Matrix::zeros(h, 2 * h),
            b_candidate: vec![0.0; h],
        }
    }

    #[test]
    fn gru_all_zero_weights_halve_the_state() {
        // z = sigmoid(0) = 0.5, candidate = tanh(0) = 0, so h' = 0.5 h.
        let gru = zero_gru(3);
        let h = gru_step(&gru, &[0.4, -0.2, 1.0], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(h, vec![0.2, -0.1, 0.5]);
    }

    #[test]
    fn gru_zero_state_zero_candidate_stays_zero() {
        let mut gru = zero_gru(2);
        // Arbitrary update/reset weights, candidate weights zero.
        gru.w_update.data.iter_mut().for_each(|w| *w = 0.3);
        gru.w_reset.data.iter_mut().for_each(|w| *w = -0.7);
        let h = gru_step(&gru, &[0.0, 0.0], &[0.5, -0.5]).unwrap();
        assert_eq!(h, vec![0.0, 0.0]);
    }

    #[test]
    fn gru_state_stays_bounded() {
        let mut rng = seeded(11);
        for _ in 0..1000 {
            let h = 4;
            let rand_matrix = |rng: &mut rand_chacha::ChaCha12Rng| Matrix {
                rows: h,
                cols: 2 * h,
                data: (0..h * 2 * h).map(|_| rng.random_range(-3.0..3.0)).collect(),
            };
            let gru = GruWeights {
                w_update: rand_matrix(&mut rng),
                b_update: (0..h).map(|_| rng.random_range(-3.0..3.0)).collect(),
                w_reset: rand_matrix(&mut rng),
                b_reset: (0..h).map(|_| rng.random_range(-3.0..3.0)).collect(),
                w_candidate: rand_matrix(&mut rng),
                b_candidate: (0..h).map(|_| rng.random_range(-3.0..3.0)).collect(),
            };
            let h_prev: Vec<f64> = (0..h).map(|_| rng.random_range(-0.999..0.999)).collect();
            let x: Vec<f64> = (0..h).map(|_| rng.random_range(-5.0..5.0)).collect();
            let h_next = gru_step(&gru, &h_prev, &x).unwrap();
            assert!(h_next.iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn activation_values() {
        assert_eq!(swish(0.0), 0.0);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-12);
        let s = softmax(&[5.5, 5.5]);
        assert_eq!(s, vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_sums_to_one_and_shift_invariant() {
        let mut rng = seeded(5);
        for _ in 0..200 {
            let v: Vec<f64> = (0..6).map(|_| rng.random_range(-30.0..30.0)).collect();
            let s = softmax(&v);
            assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = v.iter().map(|x| x + 17.25).collect();
            let s2 = softmax(&shifted);
            for (a, b) in s.iter().zip(&s2) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_linear_map_gradient_is_the_input() {
        // The output layer is linear, so with loss = o_0 the gradient of
        // w_out is exactly its input (the post-hidden activation).
        let weights = WeightSet::init(1, 1, 1, &mut seeded(3));
        let (_, tape) = forward_sequence(&weights, &[vec![2.0]]).unwrap();
        let mut grad = weights.zeros_like();
        backward(&weights, &tape, &[vec![1.0]], &mut grad).unwrap();
        let expected = {
            let preact_in = dense(&weights.w_in, &weights.b_in, &[2.0]).unwrap();
            let gru_in: Vec<f64> = preact_in.iter().map(|&v| swish(v)).collect();
            let h = gru_step(&weights.gru, &[0.0], &gru_in).unwrap();
            let pre_hid = dense(&weights.w_hidden, &weights.b_hidden, &h).unwrap();
            swish(pre_hid[0])
        };
        assert!((grad.w_out.data[0] - expected).abs() < 1e-12);
        assert!((grad.b_out[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn swish_gradient_at_zero_is_half() {
        assert!((swish_prime(0.0) - 0.5).abs() < 1e-12);
    }

    fn flat_get(w: &WeightSet, mut idx: usize) -> f64 {
        for s in w.params() {
            if idx < s.len() {
                return s[idx];
            }
            idx -= s.len();
        }
        panic!("index out of range");
    }

    fn flat_bump(w: &mut WeightSet, mut idx: usize, delta: f64) {
        for s in w.params_mut() {
            if idx < s.len() {
                s[idx] += delta;
                return;
            }
            idx -= s.len();
        }
        panic!("index out of range");
    }

    #[test]
    fn full_network_gradient_matches_finite_differences() {
        let mut rng = seeded(7);
        let (d_in, h, k) = (4, 8, 6);
        let mut weights = WeightSet::init(d_in, h, k, &mut rng);
        let inputs: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..d_in).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let targets: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();

        // loss = 0.5 Σ (o - target)², so ∂loss/∂o = o - target.
        fn loss_of(w: &WeightSet, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
            let (outputs, _) = forward_sequence(w, inputs).unwrap();
            outputs
                .iter()
                .zip(targets)
                .map(|(o, t)| {
                    o.iter()
                        .zip(t)
                        .map(|(a, b)| 0.5 * (a - b) * (a - b))
                        .sum::<f64>()
                })
                .sum()
        }

        let (outputs, tape) = forward_sequence(&weights, &inputs).unwrap();
        let output_grads: Vec<Vec<f64>> = outputs
            .iter()
            .zip(&targets)
            .map(|(o, t)| o.iter().zip(t).map(|(a, b)| a - b).collect())
            .collect();
        let mut grad = weights.zeros_like();
        backward(&weights, &tape, &output_grads, &mut grad).unwrap();

        let eps = 1e-5;
        let mut max_rel = 0.0f64;
        for flat_idx in 0..weights.param_count() {
            let analytic = flat_get(&grad, flat_idx);
            flat_bump(&mut weights, flat_idx, eps);
            let plus = loss_of(&weights, &inputs, &targets);
            flat_bump(&mut weights, flat_idx, -2.0 * eps);
            let minus = loss_of(&weights, &inputs, &targets);
            flat_bump(&mut weights, flat_idx, eps);
            let numeric = (plus - minus) / (2.0 * eps);
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            max_rel = max_rel.max((analytic - numeric).abs() / denom);
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }
}
