//! Gaussian copula over the per-sequence context table.
//!
//! Marginals are empirical: numeric columns keep their sorted values for an
//! interpolated ECDF inverse, categorical columns become frequency intervals
//! partitioning [0,1]. Each cell maps to a normal score via the probit of
//! its (jittered, for categories) ECDF value; the Pearson correlation of
//! those scores is the dependence structure. Sampling draws correlated
//! normals and pushes them back through the inverse marginals, yielding
//! brand-new context rows under fresh sequence keys.
//!
//! Numeric columns that contain missing cells are mean-imputed and get an
//! explicit 0/1 companion column inside the copula, so missingness can
//! correlate with everything else.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{ColumnKind, Value};
use crate::error::{Result, SynthError};

/// The deduplicated context table: one row per sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextTable {
    pub columns: Vec<String>,
    pub kinds: Vec<ColumnKind>,
    pub rows: Vec<Vec<Value>>,
}

/// Empirical marginal of one modeled copula column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Marginal {
    /// Sorted values; inverse is the interpolated empirical quantile.
    Numeric { sorted: Vec<f64> },
    /// Labels with their cumulative frequency boundaries; `None` is the
    /// missing category. Intervals are disjoint and cover [0,1].
    Categorical {
        labels: Vec<Option<String>>,
        cumulative: Vec<f64>,
    },
}

/// What a modeled copula column describes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnRole {
    /// The (possibly imputed) value of a context column.
    Value { column: String },
    /// The 0/1 missingness companion of a numeric context column.
    MissingFlag { column: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CopulaModel {
    pub context_columns: Vec<String>,
    pub kinds: Vec<ColumnKind>,
    pub roles: Vec<ColumnRole>,
    pub marginals: Vec<Marginal>,
    /// Pearson correlation of the normal scores, projected to PSD with a
    /// unit diagonal.
    pub correlation: Vec<Vec<f64>>,
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// ECDF value of `x` within `sorted`, clipped to `[1/(2n), 1 - 1/(2n)]`.
fn clipped_ecdf(sorted: &[f64], x: f64) -> f64 {
    let n = sorted.len() as f64;
    let rank = sorted.partition_point(|v| *v <= x) as f64;
    (rank / n).clamp(1.0 / (2.0 * n), 1.0 - 1.0 / (2.0 * n))
}

/// Interpolated empirical quantile (bounded by the observed min/max).
fn ecdf_inverse(sorted: &[f64], u: f64) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let pos = u.clamp(0.0, 1.0) * (m - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(m - 1);
    let t = pos - lo as f64;
    let (a, b) = (sorted[lo], sorted[hi]);
    if a == b {
        a
    } else {
        a * (1.0 - t) + b * t
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va < 1e-24 || vb < 1e-24 {
        return 0.0;
    }
    (cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0)
}

/// Clips negative eigenvalues at zero and renormalizes the diagonal to one.
fn project_psd(correlation: &mut [Vec<f64>]) {
    let d = correlation.len();
    if d == 0 {
        return;
    }
    let m = DMatrix::from_fn(d, d, |i, j| correlation[i][j]);
    let eigen = m.symmetric_eigen();
    if eigen.eigenvalues.iter().all(|l| *l >= 0.0) {
        return;
    }
    let clipped = DVector::from_iterator(d, eigen.eigenvalues.iter().map(|l| l.max(0.0)));
    let rebuilt =
        &eigen.eigenvectors * DMatrix::from_diagonal(&clipped) * eigen.eigenvectors.transpose();
    let scale: Vec<f64> = (0..d)
        .map(|i| {
            let v: f64 = rebuilt[(i, i)];
            if v > 1e-12 {
                1.0 / v.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    for i in 0..d {
        for j in 0..d {
            correlation[i][j] = if i == j {
                1.0
            } else {
                rebuilt[(i, j)] * scale[i] * scale[j]
            };
        }
    }
}

/// Square factor `A` with `A·Aᵀ = correlation`, from the eigendecomposition
/// (valid for singular PSD matrices where a Cholesky factor is not).
fn psd_factor(correlation: &[Vec<f64>]) -> DMatrix<f64> {
    let d = correlation.len();
    if d == 0 {
        return DMatrix::zeros(0, 0);
    }
    let m = DMatrix::from_fn(d, d, |i, j| correlation[i][j]);
    let eigen = m.symmetric_eigen();
    let roots = DVector::from_iterator(d, eigen.eigenvalues.iter().map(|l| l.max(0.0).sqrt()));
    &eigen.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// Fits the context model on one-row-per-sequence data.
///
/// `seed` drives the uniform draws that place each categorical cell inside
/// its frequency interval before the probit.
pub fn fit_copula(table: &ContextTable, seed: u64) -> Result<CopulaModel> {
    if table.rows.is_empty() {
        return Err(SynthError::EmptyContextTable);
    }
    let n = table.rows.len();
    let normal = standard_normal();
    let mut rng = crate::rng::stream(seed, "copula-fit", 0);

    let mut roles = Vec::new();
    let mut marginals = Vec::new();
    let mut scores: Vec<Vec<f64>> = Vec::new();

    for (c, column) in table.columns.iter().enumerate() {
        let kind = table.kinds[c];
        if kind.is_categorical() {
            let mut labels: Vec<Option<String>> = Vec::new();
            let mut counts: Vec<usize> = Vec::new();
            for row in &table.rows {
                let label = match &row[c] {
                    Value::Text(s) => Some(s.clone()),
                    Value::Missing => None,
                    other => {
                        return Err(SynthError::BadCell {
                            line: 0,
                            column: column.clone(),
                            reason: format!("expected a category, found {other:?}"),
                        })
                    }
                };
                match labels.iter().position(|l| *l == label) {
                    Some(i) => counts[i] += 1,
                    None => {
                        labels.push(label);
                        counts.push(1);
                    }
                }
            }
            let mut cumulative = Vec::with_capacity(labels.len());
            let mut acc = 0.0;
            for count in &counts {
                acc += *count as f64 / n as f64;
                cumulative.push(acc);
            }
            *cumulative.last_mut().unwrap() = 1.0;

            // Probit of a uniform draw inside each cell's interval.
            let mut col_scores = Vec::with_capacity(n);
            for row in &table.rows {
                let label = match &row[c] {
                    Value::Text(s) => Some(s.clone()),
                    _ => None,
                };
                let i = labels.iter().position(|l| *l == label).unwrap();
                let lo = if i == 0 { 0.0 } else { cumulative[i - 1] };
                let hi = cumulative[i];
                let u: f64 = lo + rng.random::<f64>() * (hi - lo);
                col_scores.push(normal.inverse_cdf(u.clamp(1e-12, 1.0 - 1e-12)));
            }
            roles.push(ColumnRole::Value {
                column: column.clone(),
            });
            marginals.push(Marginal::Categorical { labels, cumulative });
            scores.push(col_scores);
        } else {
            let observed: Vec<f64> = table
                .rows
                .iter()
                .filter_map(|row| row[c].as_f64())
                .collect();
            if observed.is_empty() {
                return Err(SynthError::EmptyColumn(column.clone()));
            }
            let mean = observed.iter().sum::<f64>() / observed.len() as f64;
            let has_missing = table.rows.iter().any(|row| row[c].is_missing());

            // Mean-imputed values; the copula never sees a missing cell.
            let values: Vec<f64> = table
                .rows
                .iter()
                .map(|row| row[c].as_f64().unwrap_or(mean))
                .collect();
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

            let col_scores: Vec<f64> = values
                .iter()
                .map(|x| normal.inverse_cdf(clipped_ecdf(&sorted, *x)))
                .collect();
            roles.push(ColumnRole::Value {
                column: column.clone(),
            });
            marginals.push(Marginal::Numeric { sorted });
            scores.push(col_scores);

            if has_missing {
                let labels = vec![Some("0".to_string()), Some("1".to_string())];
                let missing_rate =
                    table.rows.iter().filter(|row| row[c].is_missing()).count() as f64 / n as f64;
                let cumulative = vec![1.0 - missing_rate, 1.0];
                let mut flag_scores = Vec::with_capacity(n);
                for row in &table.rows {
                    let i = usize::from(row[c].is_missing());
                    let lo = if i == 0 { 0.0 } else { cumulative[0] };
                    let hi = cumulative[i];
                    let u: f64 = lo + rng.random::<f64>() * (hi - lo);
                    flag_scores.push(normal.inverse_cdf(u.clamp(1e-12, 1.0 - 1e-12)));
                }
                roles.push(ColumnRole::MissingFlag {
                    column: column.clone(),
                });
                marginals.push(Marginal::Categorical { labels, cumulative });
                scores.push(flag_scores);
            }
        }
    }

    let d = scores.len();
    let mut correlation = vec![vec![0.0; d]; d];
    for i in 0..d {
        correlation[i][i] = 1.0;
        for j in i + 1..d {
            let r = pearson(&scores[i], &scores[j]);
            correlation[i][j] = r;
            correlation[j][i] = r;
        }
    }
    project_psd(&mut correlation);

    Ok(CopulaModel {
        context_columns: table.columns.clone(),
        kinds: table.kinds.clone(),
        roles,
        marginals,
        correlation,
    })
}

/// Synthetic context rows plus their fresh sequence keys.
#[derive(Debug, Clone)]
pub struct SampledContexts {
    pub keys: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

/// Draws `n` brand-new context rows. Keys are `key-0 … key-(n-1)`; callers
/// that must avoid clashing with real keys pass a different prefix through
/// [`sample_context_with_prefix`].
pub fn sample_context(model: &CopulaModel, n: usize, seed: u64) -> SampledContexts {
    sample_context_with_prefix(model, n, seed, "key-")
}

pub fn sample_context_with_prefix(
    model: &CopulaModel,
    n: usize,
    seed: u64,
    key_prefix: &str,
) -> SampledContexts {
    let normal = standard_normal();
    let d = model.marginals.len();
    let factor = psd_factor(&model.correlation);
    let mut rng = crate::rng::stream(seed, "copula-sample", 0);

    let mut keys = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        keys.push(format!("{key_prefix}{i}"));
        let gaussian: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let z = &factor * DVector::from_vec(gaussian);

        // Invert each marginal; flag columns then overwrite their value cell.
        let mut cells: Vec<Value> = Vec::with_capacity(model.context_columns.len());
        let mut cell_of_role: Vec<Option<usize>> = Vec::with_capacity(d);
        for (m, (role, marginal)) in model.roles.iter().zip(&model.marginals).enumerate() {
            let u = normal.cdf(z[m]);
            match (role, marginal) {
                (ColumnRole::Value { column }, Marginal::Numeric { sorted }) => {
                    let x = ecdf_inverse(sorted, u);
                    let c = model
                        .context_columns
                        .iter()
                        .position(|name| name == column)
                        .unwrap();
                    let value = match model.kinds[c] {
                        ColumnKind::Continuous => Value::Float(x),
                        _ => Value::Int(x.round() as i64),
                    };
                    cell_of_role.push(Some(cells.len()));
                    cells.push(value);
                }
                (ColumnRole::Value { .. }, Marginal::Categorical { labels, cumulative }) => {
                    let j = interval_lookup(cumulative, u);
                    cell_of_role.push(Some(cells.len()));
                    cells.push(match &labels[j] {
                        Some(label) => Value::Text(label.clone()),
                        None => Value::Missing,
                    });
                }
                (ColumnRole::MissingFlag { column }, Marginal::Categorical { cumulative, .. }) => {
                    cell_of_role.push(None);
                    if interval_lookup(cumulative, u) == 1 {
                        let value_idx = model
                            .roles
                            .iter()
                            .take(m)
                            .position(
                                |r| matches!(r, ColumnRole::Value { column: vc } if vc == column),
                            )
                            .and_then(|ri| cell_of_role[ri])
                            .expect("flag follows its value column");
                        cells[value_idx] = Value::Missing;
                    }
                }
                _ => unreachable!("roles and marginals are built together"),
            }
        }
        rows.push(cells);
    }
    SampledContexts { keys, rows }
}

fn interval_lookup(cumulative: &[f64], u: f64) -> usize {
    cumulative
        .iter()
        .position(|hi| u < *hi)
        .unwrap_or(cumulative.len() - 1)
}
