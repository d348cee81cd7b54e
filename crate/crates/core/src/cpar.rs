//! The conditional probabilistic auto-regressive sequence model.
//!
//! The network sees the encoded context concatenated with the previous
//! encoded step and emits one distribution-parameter vector per step:
//! `(μ, σ, m)` for each continuous column, `(r, ρ, m)` for each discrete
//! column (negative binomial on the integer offset from the column minimum),
//! one probability per category for each categorical column, and a single
//! terminal parameter `τ`. Training is teacher-forced over framed sequences;
//! sampling feeds each sampled row back until `τ` crosses 0.5 or the length
//! cap is reached.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Result, SynthError};
use crate::nn::{
    backward, clip_global_norm, forward_sequence, forward_step, sigmoid, softmax, softplus, Adam,
    Gradient, WeightSet,
};
use crate::transforms::{EncoderSpec, FramedSequence, Slot, TransformState};

const LN_2PI: f64 = 1.8378770664093453;

/// Parameter floors applied when decoding raw network outputs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Floors {
    pub sigma: f64,
    pub r: f64,
    pub prob: f64,
}

impl Default for Floors {
    fn default() -> Self {
        Floors {
            sigma: 1e-3,
            r: 1e-3,
            prob: 1e-6,
        }
    }
}

/// Output slots for one column's distribution parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParamSlots {
    Continuous {
        mu: usize,
        sigma: usize,
        missing: usize,
        /// Encoded value a sampled missing cell carries, mirroring how the
        /// transforms encode imputed training cells.
        missing_fill: f64,
    },
    Discrete {
        r: usize,
        rho: usize,
        missing: usize,
        /// `max - min` of the raw column; converts encoded values to counts.
        span: f64,
        missing_fill: f64,
    },
    Categorical {
        start: usize,
        len: usize,
    },
}

/// One modeled column: where it lives in the input step vector and where its
/// parameters live in the output vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub input: Slot,
    pub params: ParamSlots,
}

/// Maps the network output vector onto per-column distribution parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterLayout {
    pub columns: Vec<ColumnSpec>,
    /// Slot of the terminal parameter τ.
    pub terminal: usize,
    pub output_width: usize,
    /// Width of one encoded step row (including the start/stop markers).
    pub step_width: usize,
    pub start_flag: usize,
    pub stop_flag: usize,
}

impl ParameterLayout {
    /// Derives the layout from fitted transforms: three parameter slots per
    /// numeric column, one per category, plus the terminal slot.
    pub fn from_state(state: &TransformState) -> ParameterLayout {
        let mut columns = Vec::with_capacity(state.step_columns.len());
        let mut offset = 0usize;
        for (name, slot) in &state.step_layout.columns {
            let encoder = &state.encoders[name];
            let params = match &encoder.spec {
                EncoderSpec::ZScore { mean, std, impute } => {
                    let params = ParamSlots::Continuous {
                        mu: offset,
                        sigma: offset + 1,
                        missing: offset + 2,
                        missing_fill: (impute - mean) / std,
                    };
                    offset += 3;
                    params
                }
                EncoderSpec::MinMax { min, max, impute } => {
                    let span = (max - min) as f64;
                    let fill = if span > 0.0 {
                        (impute - *min as f64) / span
                    } else {
                        0.0
                    };
                    let params = ParamSlots::Discrete {
                        r: offset,
                        rho: offset + 1,
                        missing: offset + 2,
                        span,
                        missing_fill: fill,
                    };
                    offset += 3;
                    params
                }
                EncoderSpec::OneHot { .. } => {
                    let len = encoder.spec.width();
                    let params = ParamSlots::Categorical { start: offset, len };
                    offset += len;
                    params
                }
            };
            columns.push(ColumnSpec {
                name: name.clone(),
                input: slot.clone(),
                params,
            });
        }
        ParameterLayout {
            columns,
            terminal: offset,
            output_width: offset + 1,
            step_width: state.step_layout.width,
            start_flag: state.step_layout.start,
            stop_flag: state.step_layout.stop,
        }
    }

    /// Total parameter slots taken by the columns (everything but τ).
    pub fn column_slot_count(&self) -> usize {
        self.terminal
    }

    fn neutral_step(&self) -> Vec<f64> {
        let mut row = vec![0.0; self.step_width];
        for col in &self.columns {
            if let Slot::OneHot { start, .. } = col.input {
                row[start] = 1.0;
            }
        }
        row
    }

    pub fn start_step(&self) -> Vec<f64> {
        let mut row = self.neutral_step();
        row[self.start_flag] = 1.0;
        row
    }

    pub fn stop_step(&self) -> Vec<f64> {
        let mut row = self.neutral_step();
        row[self.stop_flag] = 1.0;
        row
    }
}

/// Decoded distribution parameters for one column.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnDistribution {
    Continuous { mu: f64, sigma: f64, missing: f64 },
    Discrete { r: f64, rho: f64, missing: f64 },
    Categorical { probs: Vec<f64> },
}

/// Decoded parameters for one step, plus the terminal probability.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDistribution {
    pub columns: Vec<ColumnDistribution>,
    pub terminal: f64,
}

fn clamp_prob(p: f64, floor: f64) -> f64 {
    p.clamp(floor, 1.0 - floor)
}

/// Applies the typed output activations: softplus on μ/σ/r slots, sigmoid on
/// m/ρ/τ slots, softmax within each categorical block, then the floors.
pub fn decode_step(
    raw_output: &[f64],
    layout: &ParameterLayout,
    floors: &Floors,
) -> Result<StepDistribution> {
    if raw_output.len() != layout.output_width {
        return Err(SynthError::ShapeMismatch(format!(
            "decode_step: raw output has {} slots, layout expects {}",
            raw_output.len(),
            layout.output_width
        )));
    }
    let mut columns = Vec::with_capacity(layout.columns.len());
    for col in &layout.columns {
        columns.push(match col.params {
            ParamSlots::Continuous {
                mu, sigma, missing, ..
            } => ColumnDistribution::Continuous {
                mu: softplus(raw_output[mu]),
                sigma: softplus(raw_output[sigma]).max(floors.sigma),
                missing: clamp_prob(sigmoid(raw_output[missing]), floors.prob),
            },
            ParamSlots::Discrete {
                r, rho, missing, ..
            } => ColumnDistribution::Discrete {
                r: softplus(raw_output[r]).max(floors.r),
                rho: clamp_prob(sigmoid(raw_output[rho]), floors.prob),
                missing: clamp_prob(sigmoid(raw_output[missing]), floors.prob),
            },
            ParamSlots::Categorical { start, len } => {
                let mut probs = softmax(&raw_output[start..start + len]);
                for p in probs.iter_mut() {
                    *p = clamp_prob(*p, floors.prob);
                }
                let sum: f64 = probs.iter().sum();
                for p in probs.iter_mut() {
                    *p /= sum;
                }
                ColumnDistribution::Categorical { probs }
            }
        });
    }
    Ok(StepDistribution {
        columns,
        terminal: clamp_prob(sigmoid(raw_output[layout.terminal]), floors.prob),
    })
}

// ---------------------------------------------------------------------------
// Loss functions
// ---------------------------------------------------------------------------

/// Gaussian negative log-density plus the missing-flag cross-entropy.
pub fn loss_continuous(x: f64, is_missing: bool, mu: f64, sigma: f64, m: f64) -> f64 {
    if is_missing {
        -m.ln()
    } else {
        let z = (x - mu) / sigma;
        sigma.ln() + 0.5 * LN_2PI + 0.5 * z * z - (1.0 - m).ln()
    }
}

/// Log-density of `f(x) = Γ(x+r)/(Γ(r)·x!)·(1−ρ)^r·ρ^x`.
pub fn negative_binomial_ln_pmf(count: i64, r: f64, rho: f64) -> Result<f64> {
    if count < 0 {
        return Err(SynthError::NegativeCount(count));
    }
    let k = count as f64;
    Ok(ln_gamma(k + r) - ln_gamma(r) - ln_gamma(k + 1.0) + r * (1.0 - rho).ln() + k * rho.ln())
}

/// Negative binomial negative log-density plus the missing-flag cross-entropy.
pub fn loss_discrete(count: i64, is_missing: bool, r: f64, rho: f64, m: f64) -> Result<f64> {
    if is_missing {
        return Ok(-m.ln());
    }
    Ok(-negative_binomial_ln_pmf(count, r, rho)? - (1.0 - m).ln())
}

/// Cross-entropy against the true category.
pub fn loss_categorical(true_index: usize, probs: &[f64]) -> Result<f64> {
    if true_index >= probs.len() {
        return Err(SynthError::IndexOutOfRange {
            index: true_index,
            len: probs.len(),
        });
    }
    Ok(-probs[true_index].ln())
}

/// Binary cross-entropy on the stop signal.
pub fn loss_termination(is_terminal: bool, tau: f64) -> f64 {
    if is_terminal {
        -tau.ln()
    } else {
        -(1.0 - tau).ln()
    }
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// How often the optimizer steps during one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// One update over the summed loss of all sequences.
    Epoch,
    /// One update per sequence.
    Sequence,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CparModel {
    pub weights: WeightSet,
    pub layout: ParameterLayout,
    pub context_width: usize,
    pub epochs_trained: usize,
    pub seed: u64,
    pub max_sequence_length: usize,
    pub floors: Floors,
}

impl CparModel {
    pub fn new(
        state: &TransformState,
        hidden: usize,
        max_sequence_length: usize,
        floors: Floors,
        seed: u64,
    ) -> CparModel {
        let layout = ParameterLayout::from_state(state);
        let input_dim = state.context_width + layout.step_width;
        let mut rng = crate::rng::stream(seed, "init", 0);
        let weights = WeightSet::init(input_dim, hidden, layout.output_width, &mut rng);
        CparModel {
            weights,
            layout,
            context_width: state.context_width,
            epochs_trained: 0,
            seed,
            max_sequence_length,
            floors,
        }
    }
}

/// Computes the loss of one raw output against one encoded target row,
/// optionally accumulating `∂loss/∂raw` into `grad`.
///
/// Losses are evaluated through numerically stable log-forms of the output
/// activations so gradients stay exact; the σ and r floors are the only
/// kinks, and they only bind for extreme outputs.
fn step_loss(
    layout: &ParameterLayout,
    floors: &Floors,
    raw: &[f64],
    target: &[f64],
    is_terminal: bool,
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    if raw.len() != layout.output_width {
        return Err(SynthError::ShapeMismatch(format!(
            "step_loss: raw output has {} slots, layout expects {}",
            raw.len(),
            layout.output_width
        )));
    }
    if target.len() != layout.step_width {
        return Err(SynthError::ShapeMismatch(format!(
            "step_loss: target row has {} slots, layout expects {}",
            target.len(),
            layout.step_width
        )));
    }
    let mut loss = 0.0;

    // Binary cross-entropy through the sigmoid in stable form:
    // ln σ(a) = -softplus(-a), ln(1-σ(a)) = -softplus(a).
    fn bernoulli(raw: &[f64], slot: usize, hit: bool, grad: &mut Option<&mut [f64]>) -> f64 {
        let a = raw[slot];
        if hit {
            if let Some(g) = grad.as_deref_mut() {
                g[slot] += -(1.0 - sigmoid(a));
            }
            softplus(-a)
        } else {
            if let Some(g) = grad.as_deref_mut() {
                g[slot] += sigmoid(a);
            }
            softplus(a)
        }
    }

    for col in &layout.columns {
        match (&col.params, &col.input) {
            (
                ParamSlots::Continuous {
                    mu: mu_slot,
                    sigma: sigma_slot,
                    missing: m_slot,
                    ..
                },
                Slot::Numeric { value, flag },
            ) => {
                let x = target[*value];
                let is_missing = target[*flag] > 0.5;
                loss += bernoulli(raw, *m_slot, is_missing, &mut grad);
                if !is_missing {
                    let mu = softplus(raw[*mu_slot]);
                    let raw_sigma = softplus(raw[*sigma_slot]);
                    let sigma = raw_sigma.max(floors.sigma);
                    let z = (x - mu) / sigma;
                    loss += sigma.ln() + 0.5 * LN_2PI + 0.5 * z * z;
                    if let Some(g) = grad.as_deref_mut() {
                        g[*mu_slot] += -z / sigma * sigmoid(raw[*mu_slot]);
                        if raw_sigma > floors.sigma {
                            g[*sigma_slot] +=
                                (1.0 / sigma - z * z / sigma) * sigmoid(raw[*sigma_slot]);
                        }
                    }
                }
            }
            (
                ParamSlots::Discrete {
                    r: r_slot,
                    rho: rho_slot,
                    missing: m_slot,
                    span,
                    ..
                },
                Slot::Numeric { value, flag },
            ) => {
                let is_missing = target[*flag] > 0.5;
                loss += bernoulli(raw, *m_slot, is_missing, &mut grad);
                if !is_missing {
                    let count = (target[*value] * span).round();
                    if count < 0.0 {
                        return Err(SynthError::NegativeCount(count as i64));
                    }
                    let k = count;
                    let raw_r = softplus(raw[*r_slot]);
                    let r = raw_r.max(floors.r);
                    let a = raw[*rho_slot];
                    // -ln f with r·ln(1-ρ) + k·ln ρ written via softplus.
                    loss += -(ln_gamma(k + r) - ln_gamma(r) - ln_gamma(k + 1.0))
                        + r * softplus(a)
                        + k * softplus(-a);
                    if let Some(g) = grad.as_deref_mut() {
                        if raw_r > floors.r {
                            g[*r_slot] += -(digamma(k + r) - digamma(r) - softplus(a))
                                * sigmoid(raw[*r_slot]);
                        }
                        let rho = sigmoid(a);
                        g[*rho_slot] += r * rho - k * (1.0 - rho);
                    }
                }
            }
            (
                ParamSlots::Categorical { start, len },
                Slot::OneHot {
                    start: in_start,
                    len: in_len,
                },
            ) => {
                debug_assert_eq!(len, in_len);
                let true_index = target[*in_start..in_start + in_len]
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                let logits = &raw[*start..start + len];
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
                loss += lse - logits[true_index];
                if let Some(g) = grad.as_deref_mut() {
                    for (j, l) in logits.iter().enumerate() {
                        g[start + j] += (l - lse).exp() - f64::from(j == true_index);
                    }
                }
            }
            (params, input) => {
                return Err(SynthError::ShapeMismatch(format!(
                    "column '{}' has inconsistent slots {:?} / {:?}",
                    col.name, params, input
                )))
            }
        }
    }

    loss += bernoulli(raw, layout.terminal, is_terminal, &mut grad);
    Ok(loss)
}

fn sequence_inputs(context: &[f64], steps: &[Vec<f64>]) -> Vec<Vec<f64>> {
    steps[..steps.len() - 1]
        .iter()
        .map(|step| {
            let mut input = Vec::with_capacity(context.len() + step.len());
            input.extend_from_slice(context);
            input.extend_from_slice(step);
            input
        })
        .collect()
}

/// Computes one framed sequence's loss, optionally accumulating its weight
/// gradient.
fn sequence_loss(
    model: &CparModel,
    framed: &FramedSequence,
    mut grad: Option<&mut Gradient>,
) -> Result<f64> {
    if framed.steps.len() < 2 {
        return Err(SynthError::MissingFraming("start/stop"));
    }
    if framed.context_numeric.len() != model.context_width {
        return Err(SynthError::ShapeMismatch(format!(
            "sequence '{}' has context width {}, model expects {}",
            framed.key,
            framed.context_numeric.len(),
            model.context_width
        )));
    }
    let inputs = sequence_inputs(&framed.context_numeric, &framed.steps);
    let (outputs, tape) = forward_sequence(&model.weights, &inputs)?;
    let mut total = 0.0;
    let mut output_grads = Vec::with_capacity(outputs.len());
    for (p, raw) in outputs.iter().enumerate() {
        let target = &framed.steps[p + 1];
        let is_terminal = p + 1 == framed.steps.len() - 1;
        let mut g = grad.as_ref().map(|_| vec![0.0; model.layout.output_width]);
        total += step_loss(
            &model.layout,
            &model.floors,
            raw,
            target,
            is_terminal,
            g.as_deref_mut(),
        )?;
        if let Some(g) = g {
            output_grads.push(g);
        }
    }
    if let Some(grad) = grad.as_deref_mut() {
        backward(&model.weights, &tape, &output_grads, grad)?;
    }
    Ok(total)
}

/// Total loss: triple sum over sequences, steps and parameter groups, with
/// the termination loss at every step (the stop row contributes the
/// terminal-positive case).
pub fn total_loss(framed_sequences: &[FramedSequence], model: &CparModel) -> Result<f64> {
    let mut total = 0.0;
    for framed in framed_sequences {
        total += sequence_loss(model, framed, None)?;
    }
    Ok(total)
}

/// Loss plus exact gradient over a set of framed sequences.
pub fn loss_and_gradient(
    model: &CparModel,
    framed_sequences: &[FramedSequence],
) -> Result<(f64, Gradient)> {
    let mut grad = model.weights.zeros_like();
    let mut total = 0.0;
    for framed in framed_sequences {
        total += sequence_loss(model, framed, Some(&mut grad))?;
    }
    Ok((total, grad))
}

/// Owns the optimizer state across epochs.
pub struct Trainer {
    pub model: CparModel,
    optimizer: Adam,
    grad_clip: f64,
    update_mode: UpdateMode,
}

impl Trainer {
    pub fn new(
        model: CparModel,
        learning_rate: f64,
        grad_clip: f64,
        update_mode: UpdateMode,
    ) -> Trainer {
        let optimizer = Adam::new(&model.weights, learning_rate);
        Trainer {
            model,
            optimizer,
            grad_clip,
            update_mode,
        }
    }

    /// Runs one teacher-forced pass over every sequence and applies the
    /// optimizer per the update mode. Returns the summed epoch loss.
    pub fn train_epoch(&mut self, framed_sequences: &[FramedSequence]) -> Result<f64> {
        if framed_sequences.is_empty() {
            return Err(SynthError::ShapeMismatch(
                "train_epoch requires at least one sequence".into(),
            ));
        }
        let epoch = self.model.epochs_trained;
        let mut total = 0.0;
        match self.update_mode {
            UpdateMode::Epoch => {
                let (loss, mut grad) = loss_and_gradient(&self.model, framed_sequences)?;
                total = loss;
                if !total.is_finite() {
                    return Err(SynthError::NonFiniteLoss(epoch));
                }
                if !grad.is_finite() {
                    return Err(SynthError::NonFiniteGradient(format!("epoch {epoch}")));
                }
                clip_global_norm(&mut grad, self.grad_clip);
                self.optimizer.update(&mut self.model.weights, &grad);
            }
            UpdateMode::Sequence => {
                for framed in framed_sequences {
                    let mut grad = self.model.weights.zeros_like();
                    let loss = sequence_loss(&self.model, framed, Some(&mut grad))?;
                    total += loss;
                    if !loss.is_finite() {
                        return Err(SynthError::NonFiniteLoss(epoch));
                    }
                    if !grad.is_finite() {
                        return Err(SynthError::NonFiniteGradient(format!("epoch {epoch}")));
                    }
                    clip_global_norm(&mut grad, self.grad_clip);
                    self.optimizer.update(&mut self.model.weights, &grad);
                }
            }
        }
        self.model.epochs_trained += 1;
        Ok(total)
    }
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// One sampled framed sequence (start row first, stop row last).
#[derive(Debug, Clone)]
pub struct SampledSteps {
    pub steps: Vec<Vec<f64>>,
    pub hit_cap: bool,
}

fn sample_step_row<R: Rng>(
    dist: &StepDistribution,
    layout: &ParameterLayout,
    rng: &mut R,
) -> Vec<f64> {
    let mut row = vec![0.0; layout.step_width];
    for (col, d) in layout.columns.iter().zip(&dist.columns) {
        match (d, &col.input, &col.params) {
            (
                ColumnDistribution::Continuous { mu, sigma, missing },
                Slot::Numeric { value, flag },
                ParamSlots::Continuous { missing_fill, .. },
            ) => {
                if rng.random::<f64>() < *missing {
                    row[*value] = *missing_fill;
                    row[*flag] = 1.0;
                } else {
                    row[*value] = Normal::new(*mu, *sigma).unwrap().sample(rng);
                }
            }
            (
                ColumnDistribution::Discrete { r, rho, missing },
                Slot::Numeric { value, flag },
                ParamSlots::Discrete {
                    span, missing_fill, ..
                },
            ) => {
                if rng.random::<f64>() < *missing {
                    row[*value] = *missing_fill;
                    row[*flag] = 1.0;
                } else {
                    // Poisson-Gamma mixture, valid for non-integer r.
                    let scale = rho / (1.0 - rho);
                    let lambda = Gamma::new(*r, scale).unwrap().sample(rng);
                    let count = if lambda > 1e-12 {
                        Poisson::new(lambda).unwrap().sample(rng)
                    } else {
                        0.0
                    };
                    row[*value] = if *span > 0.0 {
                        (count / span).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                }
            }
            (ColumnDistribution::Categorical { probs }, Slot::OneHot { start, len }, _) => {
                let u: f64 = rng.random();
                let mut cumulative = 0.0;
                let mut choice = len - 1;
                for (j, p) in probs.iter().enumerate() {
                    cumulative += p;
                    if u < cumulative {
                        choice = j;
                        break;
                    }
                }
                row[start + choice] = 1.0;
            }
            _ => unreachable!("layout built from the same state"),
        }
    }
    row
}

/// Generates one framed sequence autoregressively.
///
/// The first row is always sampled (a sequence has at least one step); from
/// then on the sequence ends as soon as τ > 0.5 or the cap is reached.
/// `min_steps` raises the lower bound for callers that want to force longer
/// extrapolations; it is clamped to the cap.
pub fn sample_sequence<R: Rng>(
    model: &CparModel,
    context_vector: &[f64],
    rng: &mut R,
    min_steps: usize,
) -> Result<SampledSteps> {
    if context_vector.len() != model.context_width {
        return Err(SynthError::ShapeMismatch(format!(
            "sample_sequence: context has width {}, model expects {}",
            context_vector.len(),
            model.context_width
        )));
    }
    let layout = &model.layout;
    let min_steps = min_steps.max(1).min(model.max_sequence_length);
    let mut steps = vec![layout.start_step()];
    let mut hidden = vec![0.0; model.weights.hidden];
    let mut hit_cap = false;

    loop {
        let mut input = Vec::with_capacity(model.context_width + layout.step_width);
        input.extend_from_slice(context_vector);
        input.extend_from_slice(steps.last().unwrap());
        let (raw, next_hidden) = forward_step(&model.weights, &hidden, &input)?;
        hidden = next_hidden;
        let dist = decode_step(&raw, layout, &model.floors)?;
        let sampled_rows = steps.len() - 1;
        if sampled_rows >= min_steps && dist.terminal > 0.5 {
            break;
        }
        if sampled_rows >= model.max_sequence_length {
            hit_cap = true;
            break;
        }
        steps.push(sample_step_row(&dist, layout, rng));
    }
    steps.push(layout.stop_step());
    Ok(SampledSteps { steps, hit_cap })
}
