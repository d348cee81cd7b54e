//! Reversible numeric preprocessing and sequence framing.
//!
//! Continuous columns are z-scored, discrete columns min-max normalized,
//! categoricals one-hot encoded with missing values as their own category.
//! Numeric columns carry a companion missing flag. Framing prepends a start
//! row and appends a stop row, adds the two marker columns, and pulls the
//! encoded context out into a separate fixed-width vector. Every transform
//! has an exact inverse on non-missing values.
//!
//! When the dataset declares a sequence index, that column is modeled as its
//! per-step delta (first delta zero) so sampled sequences can span arbitrary
//! index ranges; the per-sequence start values are kept for reconstruction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset, Sequence, Value};
use crate::error::{Result, SynthError};

/// Internal label for the missing category in one-hot vocabularies.
pub const MISSING_CATEGORY: &str = "\u{27e8}missing\u{27e9}";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum EncoderSpec {
    /// `(x - mean) / std`, with a companion missing flag.
    ZScore { mean: f64, std: f64, impute: f64 },
    /// `(x - min) / (max - min)`, with a companion missing flag.
    MinMax { min: i64, max: i64, impute: f64 },
    /// One-hot over a fixed vocabulary; missing, when present, is the last slot.
    OneHot {
        categories: Vec<String>,
        missing_slot: bool,
    },
}

impl EncoderSpec {
    /// Number of reals this encoder contributes to a flat row.
    pub fn width(&self) -> usize {
        match self {
            EncoderSpec::ZScore { .. } | EncoderSpec::MinMax { .. } => 2,
            EncoderSpec::OneHot {
                categories,
                missing_slot,
            } => categories.len() + usize::from(*missing_slot),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnEncoder {
    pub kind: ColumnKind,
    pub spec: EncoderSpec,
}

/// Where each column of a flat encoded row lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slot {
    Numeric { value: usize, flag: usize },
    OneHot { start: usize, len: usize },
}

/// Layout of one encoded step row: per-column slots followed by the
/// start/stop marker columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepLayout {
    pub columns: Vec<(String, Slot)>,
    pub start: usize,
    pub stop: usize,
    pub width: usize,
}

impl StepLayout {
    pub fn slot_of(&self, column: &str) -> Option<&Slot> {
        self.columns
            .iter()
            .find(|(name, _)| name == column)
            .map(|(_, slot)| slot)
    }
}

/// Fitted, invertible per-column encoders plus the framing layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformState {
    pub encoders: BTreeMap<String, ColumnEncoder>,
    pub step_columns: Vec<String>,
    pub context_columns: Vec<String>,
    pub index_column: Option<String>,
    /// Sorted first-index values of the real sequences, raw scale.
    pub index_starts: Vec<f64>,
    pub step_layout: StepLayout,
    /// Per-column slots of the encoded context vector.
    pub context_layout: Vec<(String, Slot)>,
    pub context_width: usize,
}

/// One sequence in model space: encoded context plus framed encoded steps
/// (start row first, stop row last).
#[derive(Debug, Clone)]
pub struct FramedSequence {
    pub key: String,
    pub context_numeric: Vec<f64>,
    pub steps: Vec<Vec<f64>>,
    /// Raw first index value, kept so deltas can be re-integrated.
    pub index_start: Option<f64>,
}

fn population_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn fit_zscore(column: &str, values: &[f64]) -> Result<EncoderSpec> {
    if values.is_empty() {
        return Err(SynthError::EmptyColumn(column.to_string()));
    }
    let (mean, std) = population_stats(values);
    // Constant column: store unit std so Z(x) = 0 and the stored mean
    // still inverts exactly.
    let std = if std > 0.0 { std } else { 1.0 };
    Ok(EncoderSpec::ZScore {
        mean,
        std,
        impute: mean,
    })
}

/// Fits encoders on the full dataset.
///
/// Numeric imputation value is the column mean; categoricals get a dedicated
/// missing category. The sequence index, when present, is fitted on per-step
/// deltas rather than raw values.
pub fn fit(dataset: &Dataset) -> Result<TransformState> {
    let step_columns = dataset.step_column_order();
    let context_columns = dataset.context_column_order();
    let index_column = dataset.metadata.sequence_index.clone();
    let sequences = crate::data::partition_sequences(dataset);

    let mut encoders: BTreeMap<String, ColumnEncoder> = BTreeMap::new();
    let mut index_starts: Vec<f64> = Vec::new();

    for column in step_columns.iter().chain(context_columns.iter()) {
        let kind = dataset
            .metadata
            .kind_of(column)
            .ok_or_else(|| SynthError::UnknownColumn(column.clone()))?;
        let col_pos = dataset
            .columns
            .iter()
            .position(|c| c == column)
            .expect("validated dataset");

        let spec = if index_column.as_deref() == Some(column.as_str()) {
            // Model the index as its per-step delta, first delta zero.
            let mut deltas = Vec::new();
            for seq in &sequences {
                let step_pos = step_columns
                    .iter()
                    .position(|c| c == column)
                    .expect("index is a step column");
                let mut prev: Option<f64> = None;
                for step in &seq.steps {
                    let v = step[step_pos]
                        .as_f64()
                        .expect("validated index cell is numeric");
                    deltas.push(match prev {
                        Some(p) => v - p,
                        None => 0.0,
                    });
                    prev = Some(v);
                }
                index_starts.push(
                    seq.steps[0][step_pos]
                        .as_f64()
                        .expect("validated index cell is numeric"),
                );
            }
            fit_zscore(column, &deltas)?
        } else {
            match kind {
                ColumnKind::Continuous | ColumnKind::Datetime => {
                    let values: Vec<f64> = dataset
                        .rows
                        .iter()
                        .filter_map(|row| row[col_pos].as_f64())
                        .collect();
                    fit_zscore(column, &values)?
                }
                ColumnKind::Discrete => {
                    let values: Vec<i64> = dataset
                        .rows
                        .iter()
                        .filter_map(|row| match &row[col_pos] {
                            Value::Int(v) => Some(*v),
                            _ => None,
                        })
                        .collect();
                    if values.is_empty() {
                        return Err(SynthError::EmptyColumn(column.clone()));
                    }
                    let min = *values.iter().min().unwrap();
                    let max = *values.iter().max().unwrap();
                    let impute = values.iter().sum::<i64>() as f64 / values.len() as f64;
                    EncoderSpec::MinMax { min, max, impute }
                }
                ColumnKind::Categorical | ColumnKind::Boolean => {
                    let mut categories: Vec<String> = if kind == ColumnKind::Boolean {
                        vec!["False".into(), "True".into()]
                    } else {
                        Vec::new()
                    };
                    let mut missing_slot = false;
                    for row in &dataset.rows {
                        match &row[col_pos] {
                            Value::Text(s) => {
                                if !categories.contains(s) {
                                    categories.push(s.clone());
                                }
                            }
                            Value::Missing => missing_slot = true,
                            other => {
                                return Err(SynthError::BadCell {
                                    line: 0,
                                    column: column.clone(),
                                    reason: format!("expected a category, found {other:?}"),
                                })
                            }
                        }
                    }
                    EncoderSpec::OneHot {
                        categories,
                        missing_slot,
                    }
                }
            }
        };
        encoders.insert(column.clone(), ColumnEncoder { kind, spec });
    }

    index_starts.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut offset = 0usize;
    let mut layout_columns = Vec::with_capacity(step_columns.len());
    for column in &step_columns {
        let spec = &encoders[column].spec;
        let slot = match spec {
            EncoderSpec::ZScore { .. } | EncoderSpec::MinMax { .. } => Slot::Numeric {
                value: offset,
                flag: offset + 1,
            },
            EncoderSpec::OneHot { .. } => Slot::OneHot {
                start: offset,
                len: spec.width(),
            },
        };
        offset += spec.width();
        layout_columns.push((column.clone(), slot));
    }
    let step_layout = StepLayout {
        columns: layout_columns,
        start: offset,
        stop: offset + 1,
        width: offset + 2,
    };

    let mut context_layout = Vec::with_capacity(context_columns.len());
    let mut ctx_offset = 0usize;
    for column in &context_columns {
        let spec = &encoders[column].spec;
        let slot = match spec {
            EncoderSpec::ZScore { .. } | EncoderSpec::MinMax { .. } => Slot::Numeric {
                value: ctx_offset,
                flag: ctx_offset + 1,
            },
            EncoderSpec::OneHot { .. } => Slot::OneHot {
                start: ctx_offset,
                len: spec.width(),
            },
        };
        ctx_offset += spec.width();
        context_layout.push((column.clone(), slot));
    }

    Ok(TransformState {
        encoders,
        step_columns,
        context_columns,
        index_column,
        index_starts,
        step_layout,
        context_width: ctx_offset,
        context_layout,
    })
}

/// Encodes one cell into its real-vector fragment.
pub fn encode_value(state: &TransformState, column: &str, cell: &Value) -> Result<Vec<f64>> {
    let encoder = state
        .encoders
        .get(column)
        .ok_or_else(|| SynthError::UnknownColumn(column.to_string()))?;
    match &encoder.spec {
        EncoderSpec::ZScore { mean, std, impute } => match cell {
            Value::Missing => Ok(vec![(impute - mean) / std, 1.0]),
            other => {
                let x = other.as_f64().ok_or_else(|| SynthError::BadCell {
                    line: 0,
                    column: column.to_string(),
                    reason: format!("expected a number, found {other:?}"),
                })?;
                Ok(vec![(x - mean) / std, 0.0])
            }
        },
        EncoderSpec::MinMax { min, max, impute } => {
            let span = (max - min) as f64;
            let norm = |x: f64| if span > 0.0 { (x - *min as f64) / span } else { 0.0 };
            match cell {
                Value::Missing => Ok(vec![norm(*impute), 1.0]),
                other => {
                    let x = other.as_f64().ok_or_else(|| SynthError::BadCell {
                        line: 0,
                        column: column.to_string(),
                        reason: format!("expected a number, found {other:?}"),
                    })?;
                    Ok(vec![norm(x), 0.0])
                }
            }
        }
        EncoderSpec::OneHot {
            categories,
            missing_slot,
        } => {
            let width = categories.len() + usize::from(*missing_slot);
            let mut fragment = vec![0.0; width];
            match cell {
                Value::Missing => {
                    if !missing_slot {
                        return Err(SynthError::UnseenCategory {
                            column: column.to_string(),
                            value: MISSING_CATEGORY.to_string(),
                        });
                    }
                    fragment[width - 1] = 1.0;
                }
                Value::Text(s) => {
                    let idx = categories.iter().position(|c| c == s).ok_or_else(|| {
                        SynthError::UnseenCategory {
                            column: column.to_string(),
                            value: s.clone(),
                        }
                    })?;
                    fragment[idx] = 1.0;
                }
                other => {
                    return Err(SynthError::BadCell {
                        line: 0,
                        column: column.to_string(),
                        reason: format!("expected a category, found {other:?}"),
                    })
                }
            }
            Ok(fragment)
        }
    }
}

/// Decodes a fragment back into a cell. Exact inverse of `encode_value` on
/// non-missing values; a raised flag dominates and decodes to missing.
pub fn decode_value(state: &TransformState, column: &str, fragment: &[f64]) -> Result<Value> {
    let encoder = state
        .encoders
        .get(column)
        .ok_or_else(|| SynthError::UnknownColumn(column.to_string()))?;
    let malformed = |reason: String| SynthError::MalformedFragment {
        column: column.to_string(),
        reason,
    };
    if fragment.iter().any(|v| !v.is_finite()) {
        return Err(malformed("non-finite fragment".into()));
    }
    match &encoder.spec {
        EncoderSpec::ZScore { mean, std, .. } => {
            if fragment.len() != 2 {
                return Err(malformed(format!(
                    "expected (value, flag), got {} reals",
                    fragment.len()
                )));
            }
            if fragment[1] > 0.5 {
                return Ok(Value::Missing);
            }
            let x = fragment[0] * std + mean;
            // The sequence index decodes to its raw delta; integration and
            // rounding happen in `unframe`.
            if state.index_column.as_deref() == Some(column) {
                return Ok(Value::Float(x));
            }
            match encoder.kind {
                ColumnKind::Datetime => Ok(Value::Int(x.round() as i64)),
                _ => Ok(Value::Float(x)),
            }
        }
        EncoderSpec::MinMax { min, max, .. } => {
            if fragment.len() != 2 {
                return Err(malformed(format!(
                    "expected (value, flag), got {} reals",
                    fragment.len()
                )));
            }
            if fragment[1] > 0.5 {
                return Ok(Value::Missing);
            }
            let span = (max - min) as f64;
            let x = *min as f64 + fragment[0] * span;
            let rounded = x.round().clamp(*min as f64, *max as f64) as i64;
            Ok(Value::Int(rounded))
        }
        EncoderSpec::OneHot {
            categories,
            missing_slot,
        } => {
            let width = categories.len() + usize::from(*missing_slot);
            if fragment.len() != width {
                return Err(malformed(format!(
                    "expected {width} one-hot reals, got {}",
                    fragment.len()
                )));
            }
            let argmax = fragment
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            if *missing_slot && argmax == width - 1 {
                Ok(Value::Missing)
            } else {
                Ok(Value::Text(categories[argmax].clone()))
            }
        }
    }
}

/// Neutral filler row used for the start/stop markers: numeric slots zero
/// with flag zero, one-hot slots on their first category.
fn neutral_row(layout: &StepLayout) -> Vec<f64> {
    let mut row = vec![0.0; layout.width];
    for (_, slot) in &layout.columns {
        if let Slot::OneHot { start, .. } = slot {
            row[*start] = 1.0;
        }
    }
    row
}

pub fn start_row(layout: &StepLayout) -> Vec<f64> {
    let mut row = neutral_row(layout);
    row[layout.start] = 1.0;
    row
}

pub fn stop_row(layout: &StepLayout) -> Vec<f64> {
    let mut row = neutral_row(layout);
    row[layout.stop] = 1.0;
    row
}

/// Encodes a context record into the fixed-width context vector.
pub fn encode_context(state: &TransformState, context: &[Value]) -> Result<Vec<f64>> {
    if context.len() != state.context_columns.len() {
        return Err(SynthError::ShapeMismatch(format!(
            "context record has {} cells, expected {}",
            context.len(),
            state.context_columns.len()
        )));
    }
    let mut out = Vec::with_capacity(state.context_width);
    for (column, cell) in state.context_columns.iter().zip(context) {
        out.extend(encode_value(state, column, cell)?);
    }
    Ok(out)
}

fn decode_context(state: &TransformState, context_numeric: &[f64]) -> Result<Vec<Value>> {
    if context_numeric.len() != state.context_width {
        return Err(SynthError::ShapeMismatch(format!(
            "context vector has {} reals, expected {}",
            context_numeric.len(),
            state.context_width
        )));
    }
    let mut cells = Vec::with_capacity(state.context_columns.len());
    for (column, slot) in &state.context_layout {
        let fragment = match slot {
            Slot::Numeric { value, flag } => vec![context_numeric[*value], context_numeric[*flag]],
            Slot::OneHot { start, len } => context_numeric[*start..start + len].to_vec(),
        };
        cells.push(decode_value(state, column, &fragment)?);
    }
    Ok(cells)
}

/// Encodes one raw step record (aligned with `step_columns`) into a flat row
/// with zeroed start/stop markers. `index_delta` replaces the raw index cell
/// when the dataset has a sequence index.
fn encode_step(
    state: &TransformState,
    step: &[Value],
    index_delta: Option<f64>,
) -> Result<Vec<f64>> {
    let mut row = vec![0.0; state.step_layout.width];
    for ((column, slot), cell) in state.step_layout.columns.iter().zip(step) {
        let fragment = if state.index_column.as_deref() == Some(column.as_str()) {
            let delta = index_delta.expect("index delta supplied for index column");
            encode_value(state, column, &Value::Float(delta))?
        } else {
            encode_value(state, column, cell)?
        };
        match slot {
            Slot::Numeric { value, flag } => {
                row[*value] = fragment[0];
                row[*flag] = fragment[1];
            }
            Slot::OneHot { start, len } => {
                row[*start..start + len].copy_from_slice(&fragment);
            }
        }
    }
    Ok(row)
}

/// Converts a raw sequence into model space: encoded context, encoded steps,
/// and the start/stop framing rows.
pub fn frame(state: &TransformState, sequence: &Sequence) -> Result<FramedSequence> {
    let context_numeric = encode_context(state, &sequence.context)?;
    let index_pos = state
        .index_column
        .as_ref()
        .map(|c| state.step_columns.iter().position(|s| s == c).unwrap());

    let mut steps = Vec::with_capacity(sequence.steps.len() + 2);
    steps.push(start_row(&state.step_layout));
    let mut prev_index: Option<f64> = None;
    let mut index_start = None;
    for step in &sequence.steps {
        let delta = match index_pos {
            Some(pos) => {
                let raw = step[pos].as_f64().ok_or_else(|| SynthError::BadCell {
                    line: 0,
                    column: state.index_column.clone().unwrap(),
                    reason: "index cell is not numeric".into(),
                })?;
                if index_start.is_none() {
                    index_start = Some(raw);
                }
                let d = prev_index.map(|p| raw - p).unwrap_or(0.0);
                prev_index = Some(raw);
                Some(d)
            }
            None => None,
        };
        steps.push(encode_step(state, step, delta)?);
    }
    steps.push(stop_row(&state.step_layout));

    Ok(FramedSequence {
        key: sequence.key.clone(),
        context_numeric,
        steps,
        index_start,
    })
}

/// Strips the framing and decodes back to a raw sequence. Exactly the first
/// and last rows are treated as framing; interior stop markers are the
/// sampler's concern, not ours.
pub fn unframe(state: &TransformState, framed: &FramedSequence) -> Result<Sequence> {
    let layout = &state.step_layout;
    if framed.steps.len() < 2 {
        return Err(SynthError::MissingFraming("start/stop"));
    }
    if framed.steps[0][layout.start] <= 0.5 {
        return Err(SynthError::MissingFraming("start"));
    }
    if framed.steps[framed.steps.len() - 1][layout.stop] <= 0.5 {
        return Err(SynthError::MissingFraming("stop"));
    }

    let context = decode_context(state, &framed.context_numeric)?;
    let index_kind = state
        .index_column
        .as_ref()
        .map(|c| state.encoders[c].kind);
    let mut cumulative = framed.index_start.unwrap_or(0.0);

    let mut steps = Vec::with_capacity(framed.steps.len() - 2);
    for encoded in &framed.steps[1..framed.steps.len() - 1] {
        let mut cells = Vec::with_capacity(layout.columns.len());
        for (column, slot) in &layout.columns {
            let fragment = match slot {
                Slot::Numeric { value, flag } => vec![encoded[*value], encoded[*flag]],
                Slot::OneHot { start, len } => encoded[*start..start + len].to_vec(),
            };
            let mut cell = decode_value(state, column, &fragment)?;
            if state.index_column.as_deref() == Some(column.as_str()) {
                let delta = match cell {
                    Value::Float(d) => d,
                    _ => 0.0,
                };
                cumulative += delta;
                cell = match index_kind.unwrap() {
                    ColumnKind::Datetime | ColumnKind::Discrete => {
                        Value::Int(cumulative.round() as i64)
                    }
                    _ => Value::Float(cumulative),
                };
            }
            cells.push(cell);
        }
        steps.push(cells);
    }

    Ok(Sequence {
        key: framed.key.clone(),
        context,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{validate, Metadata, RawTable};
    use std::collections::{BTreeMap, BTreeSet};

    fn dataset(header: &[&str], rows: &[&[&str]], metadata: Metadata) -> Dataset {
        let raw = RawTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: rows
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|c| {
                            if c.is_empty() {
                                None
                            } else {
                                Some(c.to_string())
                            }
                        })
                        .collect()
                })
                .collect(),
        };
        validate(&raw, &metadata).unwrap()
    }

    fn meta(
        key: &str,
        index: Option<&str>,
        context: &[&str],
        types: &[(&str, ColumnKind)],
    ) -> Metadata {
        Metadata {
            sequence_key: key.to_string(),
            sequence_index: index.map(|s| s.to_string()),
            context_columns: context.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(),
            column_types: types
                .iter()
                .map(|(n, k)| (n.to_string(), *k))
                .collect::<BTreeMap<_, _>>(),
        }
    }

    #[test]
    fn continuous_fit_stores_population_stats() {
        let ds = dataset(
            &["k", "v"],
            &[&["a", "8"], &["a", "12"]],
            meta("k", None, &[], &[("v", ColumnKind::Continuous)]),
        );
        let state = fit(&ds).unwrap();
        match &state.encoders["v"].spec {
            EncoderSpec::ZScore { mean, std, impute } => {
                assert!((mean - 10.0).abs() < 1e-12);
                assert!((std - 2.0).abs() < 1e-12);
                assert!((impute - 10.0).abs() < 1e-12);
            }
            other => panic!("unexpected encoder {other:?}"),
        }
    }

    #[test]
    fn discrete_fit_stores_min_max() {
        let ds = dataset(
            &["k", "v"],
            &[&["a", "0"], &["a", "5"], &["a", "10"]],
            meta("k", None, &[], &[("v", ColumnKind::Discrete)]),
        );
        let state = fit(&ds).unwrap();
        match &state.encoders["v"].spec {
            EncoderSpec::MinMax { min, max, .. } => {
                assert_eq!(*min, 0);
                assert_eq!(*max, 10);
            }
            other => panic!("unexpected encoder {other:?}"),
        }
    }

    #[test]
    fn categorical_fit_appends_missing_category() {
        let ds = dataset(
            &["k", "v"],
            &[&["a", "LOW"], &["a", "HIGH"], &["a", ""]],
            meta("k", None, &[], &[("v", ColumnKind::Categorical)]),
        );
        let state = fit(&ds).unwrap();
        match &state.encoders["v"].spec {
            EncoderSpec::OneHot {
                categories,
                missing_slot,
            } => {
                assert_eq!(categories, &["LOW".to_string(), "HIGH".to_string()]);
                assert!(missing_slot);
            }
            other => panic!("unexpected encoder {other:?}"),
        }
    }

    #[test]
    fn all_missing_numeric_column_is_empty() {
        let ds = dataset(
            &["k", "v"],
            &[&["a", ""], &["a", ""]],
            meta("k", None, &[], &[("v", ColumnKind::Continuous)]),
        );
        assert!(matches!(fit(&ds), Err(SynthError::EmptyColumn(_))));
    }

    #[test]
    fn zscore_encoding_matches_hand_values() {
        let ds = dataset(
            &["k", "v"],
            &[&["a", "8"], &["a", "12"]],
            meta("k", None, &[], &[("v", ColumnKind::Continuous)]),
        );
        let state = fit(&ds).unwrap();
        assert_eq!(
            encode_value(&state, "v", &Value::Float(12.0)).unwrap(),
            vec![1.0, 0.0]
        );
        // Missing encodes the imputed mean, which z-scores to zero.
        assert_eq!(
            encode_value(&state, "v", &Value::Missing).unwrap(),
            vec![0.0, 1.0]
        );
        assert_eq!(
            decode_value(&state, "v", &[1.0, 0.0]).unwrap(),
            Value::Float(12.0)
        );
        assert_eq!(
            decode_value(&state, "v", &[0.37, 1.0]).unwrap(),
            Value::Missing
        );
    }

    #[test]
    fn minmax_endpoints_encode_to_unit_interval() {
        let ds = dataset(
            &["k", "v"],
            &[&["a", "0"], &["a", "5"], &["a", "10"]],
            meta("k", None, &[], &[("v", ColumnKind::Discrete)]),
        );
        let state = fit(&ds).unwrap();
        assert_eq!(
            encode_value(&state, "v", &Value::Int(0)).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            encode_value(&state, "v", &Value::Int(10)).unwrap(),
            vec![1.0, 0.0]
        );
        assert_eq!(decode_value(&state, "v", &[1.0, 0.0]).unwrap(), Value::Int(10));
        // Out-of-range fragments clamp into [min, max].
        assert_eq!(decode_value(&state, "v", &[1.4, 0.0]).unwrap(), Value::Int(10));
    }

    #[test]
    fn one_hot_decodes_by_argmax() {
        let ds = dataset(
            &["k", "v"],
            &[&["a", "LOW"], &["a", "HIGH"], &["a", ""]],
            meta("k", None, &[], &[("v", ColumnKind::Categorical)]),
        );
        let state = fit(&ds).unwrap();
        assert_eq!(
            decode_value(&state, "v", &[0.0, 1.0, 0.0]).unwrap(),
            Value::Text("HIGH".into())
        );
        assert_eq!(
            decode_value(&state, "v", &[0.1, 0.2, 0.7]).unwrap(),
            Value::Missing
        );
        assert!(matches!(
            encode_value(&state, "v", &Value::Text("MEDIUM".into())),
            Err(SynthError::UnseenCategory { .. })
        ));
        assert!(matches!(
            decode_value(&state, "v", &[1.0, 0.0]),
            Err(SynthError::MalformedFragment { .. })
        ));
    }

    #[test]
    fn framing_adds_two_rows_and_marker_columns() {
        let ds = dataset(
            &["k", "c", "v"],
            &[&["a", "red", "1"], &["a", "red", "2"], &["a", "red", "3"]],
            meta(
                "k",
                None,
                &["c"],
                &[
                    ("c", ColumnKind::Categorical),
                    ("v", ColumnKind::Continuous),
                ],
            ),
        );
        let state = fit(&ds).unwrap();
        let sequences = crate::data::partition_sequences(&ds);
        let framed = frame(&state, &sequences[0]).unwrap();
        assert_eq!(framed.steps.len(), 5);
        let layout = &state.step_layout;
        assert_eq!(framed.steps[0][layout.start], 1.0);
        assert_eq!(framed.steps[0][layout.stop], 0.0);
        assert_eq!(framed.steps[4][layout.start], 0.0);
        assert_eq!(framed.steps[4][layout.stop], 1.0);
        for step in &framed.steps[1..4] {
            assert_eq!(step[layout.start], 0.0);
            assert_eq!(step[layout.stop], 0.0);
        }
        // Context pulled out of the step rows: one one-hot slot, once.
        assert_eq!(framed.context_numeric.len(), 1);
        assert_eq!(framed.context_numeric, vec![1.0]);
        // Step rows carry only v plus markers: (value, flag, start, stop).
        assert_eq!(layout.width, 4);
    }

    #[test]
    fn empty_context_set_encodes_to_empty_vector() {
        let ds = dataset(
            &["k", "v"],
            &[&["a", "1"], &["a", "2"]],
            meta("k", None, &[], &[("v", ColumnKind::Continuous)]),
        );
        let state = fit(&ds).unwrap();
        let sequences = crate::data::partition_sequences(&ds);
        let framed = frame(&state, &sequences[0]).unwrap();
        assert!(framed.context_numeric.is_empty());
    }

    #[test]
    fn unframe_inverts_frame() {
        let ds = dataset(
            &["patient", "sex", "smoker", "t", "hr", "note"],
            &[
                &["p0", "M", "true", "2024-01-01", "60.5", "ok"],
                &["p0", "M", "true", "2024-01-02", "", "bad"],
                &["p0", "M", "true", "2024-01-04", "61.25", "ok"],
                &["p1", "F", "false", "2024-02-01", "70.0", ""],
            ],
        meta(
                "patient",
                Some("t"),
                &["sex", "smoker"],
                &[
                    ("sex", ColumnKind::Categorical),
                    ("smoker", ColumnKind::Boolean),
                    ("t", ColumnKind::Datetime),
                    ("hr", ColumnKind::Continuous),
                    ("note", ColumnKind::Categorical),
                ],
            ),
        );
        let state = fit(&ds).unwrap();
        for seq in crate::data::partition_sequences(&ds) {
            let framed = frame(&state, &seq).unwrap();
            let back = unframe(&state, &framed).unwrap();
            assert_eq!(back.key, seq.key);
            assert_eq!(back.context, seq.context);
            assert_eq!(back.steps.len(), seq.steps.len());
            for (got, want) in back.steps.iter().zip(&seq.steps) {
                for (g, w) in got.iter().zip(want) {
                    match (g, w) {
                        (Value::Float(a), Value::Float(b)) => {
                            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0))
                        }
                        _ => assert_eq!(g, w),
                    }
                }
            }
        }
    }

    #[test]
    fn interior_stop_marker_is_ignored_at_unframe() {
        let ds = dataset(
            &["k", "v"],
            &[&["a", "1"], &["a", "2"], &["a", "3"]],
            meta("k", None, &[], &[("v", ColumnKind::Continuous)]),
        );
        let state = fit(&ds).unwrap();
        let sequences = crate::data::partition_sequences(&ds);
        let mut framed = frame(&state, &sequences[0]).unwrap();
        framed.steps[2][state.step_layout.stop] = 1.0;
        // Oracle: strip exactly the first and last rows.
        let back = unframe(&state, &framed).unwrap();
        assert_eq!(back.steps.len(), 3);
    }

    #[test]
    fn unframe_requires_framing_rows() {
        let ds = dataset(
            &["k", "v"],
            &[&["a", "1"]],
            meta("k", None, &[], &[("v", ColumnKind::Continuous)]),
        );
        let state = fit(&ds).unwrap();
        let sequences = crate::data::partition_sequences(&ds);
        let mut framed = frame(&state, &sequences[0]).unwrap();
        framed.steps[0][state.step_layout.start] = 0.0;
        assert!(matches!(
            unframe(&state, &framed),
            Err(SynthError::MissingFraming("start"))
        ));
    }

    #[test]
    fn encoded_continuous_column_is_standardized() {
        let values = [3.0, 7.5, 1.25, -4.0, 10.0, 2.5];
        let rows: Vec<Vec<&str>> = Vec::new();
        drop(rows);
        let raw_rows: Vec<[String; 2]> = values
            .iter()
            .map(|v| ["a".to_string(), v.to_string()])
            .collect();
        let raw = RawTable {
            header: vec!["k".into(), "v".into()],
            rows: raw_rows
                .iter()
                .map(|r| r.iter().map(|c| Some(c.clone())).collect())
                .collect(),
        };
        let metadata = meta("k", None, &[], &[("v", ColumnKind::Continuous)]);
        let ds = validate(&raw, &metadata).unwrap();
        let state = fit(&ds).unwrap();
        let encoded: Vec<f64> = values
            .iter()
            .map(|v| encode_value(&state, "v", &Value::Float(*v)).unwrap()[0])
            .collect();
        let n = encoded.len() as f64;
        let mean = encoded.iter().sum::<f64>() / n;
        let std = (encoded.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-9);
        assert!((std - 1.0).abs() < 1e-9);
    }
}
