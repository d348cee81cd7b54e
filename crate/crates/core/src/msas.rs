//! Multi-sequence aggregate similarity.
//!
//! For a chosen per-sequence statistic (length, mean, median, standard
//! deviation, or the mean inter-row difference at some lag), the statistic is
//! computed for every real and every synthetic sequence, the two resulting
//! samples are compared with the two-sample Kolmogorov-Smirnov D, and the
//! score is `1 - D`, averaged over the applicable columns. Sequences too
//! short for a lag are skipped rather than padded.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::data::{ColumnKind, Dataset, Sequence, Value};
use crate::error::{Result, SynthError};

/// `D = sup |ECDF_x(v) - ECDF_y(v)|`.
pub fn ks_statistic(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(SynthError::EmptySample);
    }
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() || j < ys.len() {
        let v = match (xs.get(i), ys.get(j)) {
            (Some(a), Some(b)) => a.min(*b),
            (Some(a), None) => *a,
            (None, Some(b)) => *b,
            (None, None) => unreachable!(),
        };
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// The per-sequence statistics the metric understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatisticKind {
    Length,
    Mean,
    Median,
    Std,
    /// Mean of `v[t + lag] - v[t]` over pairs with both values present.
    InterRowDiff { lag: usize },
}

impl StatisticKind {
    pub fn name(&self) -> String {
        match self {
            StatisticKind::Length => "length".into(),
            StatisticKind::Mean => "mean".into(),
            StatisticKind::Median => "median".into(),
            StatisticKind::Std => "std".into(),
            StatisticKind::InterRowDiff { lag } => format!("inter_row_diff_lag_{lag:02}"),
        }
    }
}

/// Computes one statistic for one sequence column. `Ok(None)` means the
/// sequence is skipped (too short for the lag, or no usable values).
pub fn sequence_statistic(
    sequence: &Sequence,
    column: usize,
    kind: StatisticKind,
) -> Result<Option<f64>> {
    if kind == StatisticKind::Length {
        return Ok(Some(sequence.steps.len() as f64));
    }
    let mut values: Vec<Option<f64>> = Vec::with_capacity(sequence.steps.len());
    for step in &sequence.steps {
        values.push(match &step[column] {
            Value::Missing => None,
            Value::Float(v) => Some(*v),
            Value::Int(v) => Some(*v as f64),
            Value::Text(_) => {
                return Err(SynthError::NonNumericColumn(format!("column #{column}")))
            }
        });
    }
    match kind {
        StatisticKind::Length => unreachable!(),
        StatisticKind::Mean | StatisticKind::Median | StatisticKind::Std => {
            let mut present: Vec<f64> = values.into_iter().flatten().collect();
            if present.is_empty() {
                return Ok(None);
            }
            let n = present.len() as f64;
            Ok(Some(match kind {
                StatisticKind::Mean => present.iter().sum::<f64>() / n,
                StatisticKind::Median => {
                    present.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let mid = present.len() / 2;
                    if present.len() % 2 == 1 {
                        present[mid]
                    } else {
                        (present[mid - 1] + present[mid]) / 2.0
                    }
                }
                StatisticKind::Std => {
                    let mean = present.iter().sum::<f64>() / n;
                    (present.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
                }
                _ => unreachable!(),
            }))
        }
        StatisticKind::InterRowDiff { lag } => {
            if lag < 1 {
                return Err(SynthError::ShapeMismatch("lag must be >= 1".into()));
            }
            if values.len() < lag + 1 {
                return Ok(None);
            }
            let mut diffs = Vec::new();
            for t in 0..values.len() - lag {
                if let (Some(a), Some(b)) = (values[t], values[t + lag]) {
                    diffs.push(b - a);
                }
            }
            if diffs.is_empty() {
                return Ok(None);
            }
            Ok(Some(diffs.iter().sum::<f64>() / diffs.len() as f64))
        }
    }
}

/// Scores for one statistic.
#[derive(Debug, Clone, Serialize)]
pub struct StatisticScores {
    /// Per-column score in [0,1]. Empty for the column-independent length
    /// statistic, whose score lives in `aggregate` alone.
    pub columns: BTreeMap<String, f64>,
    /// Arithmetic mean of the column scores.
    pub aggregate: f64,
    pub skipped_real: usize,
    pub skipped_synthetic: usize,
}

/// Computes `1 - D` per applicable column for one statistic.
///
/// `columns` pairs each applicable column name with its index in the step
/// records; it may be empty only for the length statistic, which is counted
/// once rather than per column.
pub fn msas(
    real_sequences: &[Sequence],
    synthetic_sequences: &[Sequence],
    columns: &[(String, usize)],
    kind: StatisticKind,
) -> Result<StatisticScores> {
    if real_sequences.is_empty() || synthetic_sequences.is_empty() {
        return Err(SynthError::EmptySample);
    }
    let mut skipped_real = 0usize;
    let mut skipped_synthetic = 0usize;
    let collect = |sequences: &[Sequence],
                       column: usize,
                       skipped: &mut usize|
     -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(sequences.len());
        for seq in sequences {
            match sequence_statistic(seq, column, kind)? {
                Some(v) => out.push(v),
                None => *skipped += 1,
            }
        }
        Ok(out)
    };

    if kind == StatisticKind::Length {
        let x = collect(real_sequences, 0, &mut skipped_real)?;
        let y = collect(synthetic_sequences, 0, &mut skipped_synthetic)?;
        let score = 1.0 - ks_statistic(&x, &y)?;
        return Ok(StatisticScores {
            columns: BTreeMap::new(),
            aggregate: score,
            skipped_real,
            skipped_synthetic,
        });
    }

    if columns.is_empty() {
        return Err(SynthError::NoApplicableColumn(kind.name()));
    }
    let mut scores = BTreeMap::new();
    for (name, idx) in columns {
        let x = collect(real_sequences, *idx, &mut skipped_real)?;
        let y = collect(synthetic_sequences, *idx, &mut skipped_synthetic)?;
        if x.is_empty() || y.is_empty() {
            // Every sequence was skipped on one side; the column carries no
            // sample for this statistic.
            continue;
        }
        scores.insert(name.clone(), 1.0 - ks_statistic(&x, &y)?);
    }
    if scores.is_empty() {
        return Err(SynthError::NoApplicableColumn(kind.name()));
    }
    let aggregate = scores.values().sum::<f64>() / scores.len() as f64;
    Ok(StatisticScores {
        columns: scores,
        aggregate,
        skipped_real,
        skipped_synthetic,
    })
}

/// The full report: every statistic, every applicable column.
#[derive(Debug, Clone, Serialize)]
pub struct MsasReport {
    /// Keyed by statistic name; `inter_row_diff_average` is the mean of the
    /// per-lag aggregates.
    pub statistics: BTreeMap<String, StatisticScores>,
    pub lag_range: (usize, usize),
    /// Lags whose score could not be computed (every sequence too short).
    pub skipped_lags: Vec<usize>,
}

impl MsasReport {
    pub fn score(&self, statistic: &str) -> Option<f64> {
        self.statistics.get(statistic).map(|s| s.aggregate)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text table: the summary statistics followed by the per-lag
    /// breakdown per column.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let columns: Vec<String> = self
            .statistics
            .get("mean")
            .map(|s| s.columns.keys().cloned().collect())
            .unwrap_or_default();

        let mut header = format!("{:<34}", "Statistic");
        for col in &columns {
            header.push_str(&format!(" {col:>12}"));
        }
        header.push_str(&format!(" {:>12}", "Aggregate"));
        out.push_str(&header);
        out.push('\n');
        out.push_str(&"-".repeat(header.len()));
        out.push('\n');

        let mut push_row = |label: &str, key: &str| {
            if let Some(scores) = self.statistics.get(key) {
                let mut line = format!("{label:<34}");
                for col in &columns {
                    match scores.columns.get(col) {
                        Some(v) => line.push_str(&format!(" {v:>12.3}")),
                        None => line.push_str(&format!(" {:>12}", "-")),
                    }
                }
                line.push_str(&format!(" {:>12.3}", scores.aggregate));
                out.push_str(&line);
                out.push('\n');
            }
        };

        push_row("Sequence Length", "length");
        push_row("Column Mean", "mean");
        push_row("Column Median", "median");
        push_row("Column Standard Deviation", "std");
        for lag in self.lag_range.0..=self.lag_range.1 {
            push_row(
                &format!("Inter-Row Difference (lag {lag})"),
                &format!("inter_row_diff_lag_{lag:02}"),
            );
        }
        push_row("Inter-Row Difference (average)", "inter_row_diff_average");
        out
    }
}

/// Step columns eligible for value statistics: numeric, time-varying, and
/// not the sequence index.
pub fn value_columns(dataset: &Dataset) -> Vec<(String, usize)> {
    dataset
        .step_column_order()
        .iter()
        .enumerate()
        .filter(|(_, name)| Some(name.as_str()) != dataset.metadata.sequence_index.as_deref())
        .filter(|(_, name)| {
            dataset
                .metadata
                .kind_of(name)
                .map(ColumnKind::is_numeric)
                .unwrap_or(false)
        })
        .map(|(i, name)| (name.clone(), i))
        .collect()
}

/// Runs every statistic (length, mean, median, std, lags `1..=lag_max` and
/// their average) over two validated datasets.
pub fn evaluate(real: &Dataset, synthetic: &Dataset, lag_max: usize) -> Result<MsasReport> {
    let real_sequences = crate::data::partition_sequences(real);
    let synthetic_sequences = crate::data::partition_sequences(synthetic);
    let columns = value_columns(real);

    let mut statistics = BTreeMap::new();
    statistics.insert(
        "length".to_string(),
        msas(
            &real_sequences,
            &synthetic_sequences,
            &[],
            StatisticKind::Length,
        )?,
    );
    for kind in [StatisticKind::Mean, StatisticKind::Median, StatisticKind::Std] {
        statistics.insert(
            kind.name(),
            msas(&real_sequences, &synthetic_sequences, &columns, kind)?,
        );
    }

    let mut skipped_lags = Vec::new();
    let mut lag_entries: Vec<StatisticScores> = Vec::new();
    for lag in 1..=lag_max {
        let kind = StatisticKind::InterRowDiff { lag };
        match msas(&real_sequences, &synthetic_sequences, &columns, kind) {
            Ok(scores) => {
                statistics.insert(kind.name(), scores.clone());
                lag_entries.push(scores);
            }
            Err(SynthError::NoApplicableColumn(_)) => skipped_lags.push(lag),
            Err(other) => return Err(other),
        }
    }
    if !lag_entries.is_empty() {
        // Per-column mean over the lags where the column was scored, plus
        // the headline average of per-lag aggregates.
        let mut per_column: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for entry in &lag_entries {
            for (col, score) in &entry.columns {
                let slot = per_column.entry(col.clone()).or_insert((0.0, 0));
                slot.0 += score;
                slot.1 += 1;
            }
        }
        let columns = per_column
            .into_iter()
            .map(|(col, (sum, count))| (col, sum / count as f64))
            .collect();
        let aggregate =
            lag_entries.iter().map(|e| e.aggregate).sum::<f64>() / lag_entries.len() as f64;
        statistics.insert(
            "inter_row_diff_average".to_string(),
            StatisticScores {
                columns,
                aggregate,
                skipped_real: lag_entries.iter().map(|e| e.skipped_real).sum(),
                skipped_synthetic: lag_entries.iter().map(|e| e.skipped_synthetic).sum(),
            },
        );
    }

    Ok(MsasReport {
        statistics,
        lag_range: (1, lag_max),
        skipped_lags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn ks_identical_samples_have_zero_distance() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(ks_statistic(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn ks_disjoint_supports_have_distance_one() {
        assert_eq!(ks_statistic(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn ks_half_overlap_example() {
        // ECDF step points: at 1, F = 0.5 vs G = 0; between 2 and 3,
        // F = 1 vs G = 0.5. D = 0.5 either way.
        assert_eq!(ks_statistic(&[1.0, 2.0], &[2.0, 3.0]).unwrap(), 0.5);
    }

    #[test]
    fn ks_rejects_empty_samples() {
        assert!(matches!(
            ks_statistic(&[], &[1.0]),
            Err(SynthError::EmptySample)
        ));
    }

    /// Brute-force oracle: evaluate both ECDFs at every candidate point.
    fn ks_oracle(x: &[f64], y: &[f64]) -> f64 {
        let mut d: f64 = 0.0;
        for v in x.iter().chain(y.iter()) {
            let fx = x.iter().filter(|a| **a <= *v).count() as f64 / x.len() as f64;
            let fy = y.iter().filter(|a| **a <= *v).count() as f64 / y.len() as f64;
            d = d.max((fx - fy).abs());
        }
        d
    }

    #[test]
    fn ks_matches_brute_force_oracle() {
        let mut rng = crate::rng::stream(31, "ks", 0);
        for _ in 0..500 {
            let n = rng.random_range(1..40);
            let m = rng.random_range(1..40);
            // Coarse grid to force plenty of ties.
            let x: Vec<f64> = (0..n)
                .map(|_| (rng.random_range(-10..10) as f64) * 0.5)
                .collect();
            let y: Vec<f64> = (0..m)
                .map(|_| (rng.random_range(-10..10) as f64) * 0.5)
                .collect();
            let got = ks_statistic(&x, &y).unwrap();
            let want = ks_oracle(&x, &y);
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    fn seq(key: &str, values: &[Option<f64>]) -> Sequence {
        Sequence {
            key: key.into(),
            context: vec![],
            steps: values
                .iter()
                .map(|v| {
                    vec![match v {
                        Some(v) => Value::Float(*v),
                        None => Value::Missing,
                    }]
                })
                .collect(),
        }
    }

    #[test]
    fn statistic_examples() {
        let s = seq("a", &[Some(1.0), Some(2.0), Some(3.0)]);
        assert_eq!(
            sequence_statistic(&s, 0, StatisticKind::InterRowDiff { lag: 1 }).unwrap(),
            Some(1.0)
        );
        assert_eq!(
            sequence_statistic(&s, 0, StatisticKind::Length).unwrap(),
            Some(3.0)
        );
        let c = seq("b", &[Some(5.0), Some(5.0), Some(5.0), Some(5.0)]);
        assert_eq!(
            sequence_statistic(&c, 0, StatisticKind::Mean).unwrap(),
            Some(5.0)
        );
        assert_eq!(
            sequence_statistic(&c, 0, StatisticKind::Std).unwrap(),
            Some(0.0)
        );
        assert_eq!(
            sequence_statistic(&c, 0, StatisticKind::Median).unwrap(),
            Some(5.0)
        );
    }

    #[test]
    fn short_sequences_are_skipped_for_lags() {
        let s = seq("a", &[Some(1.0), Some(2.0)]);
        assert_eq!(
            sequence_statistic(&s, 0, StatisticKind::InterRowDiff { lag: 5 }).unwrap(),
            None
        );
        // Long enough but no complete pair.
        let gappy = seq("b", &[Some(1.0), None, Some(3.0), None]);
        assert_eq!(
            sequence_statistic(&gappy, 0, StatisticKind::InterRowDiff { lag: 1 }).unwrap(),
            None
        );
        assert_eq!(
            sequence_statistic(&gappy, 0, StatisticKind::InterRowDiff { lag: 2 }).unwrap(),
            Some(2.0)
        );
    }

    #[test]
    fn non_numeric_column_is_rejected() {
        let s = Sequence {
            key: "a".into(),
            context: vec![],
            steps: vec![vec![Value::Text("x".into())]],
        };
        assert!(matches!(
            sequence_statistic(&s, 0, StatisticKind::Mean),
            Err(SynthError::NonNumericColumn(_))
        ));
    }

    fn random_sequences(seed: u64, count: usize) -> Vec<Sequence> {
        let mut rng = crate::rng::stream(seed, "msas-data", 0);
        (0..count)
            .map(|i| {
                let len = rng.random_range(3..12);
                let values: Vec<Option<f64>> = (0..len)
                    .map(|_| {
                        if rng.random::<f64>() < 0.1 {
                            None
                        } else {
                            Some(rng.random_range(-5.0..5.0))
                        }
                    })
                    .collect();
                seq(&format!("s{i}"), &values)
            })
            .collect()
    }

    #[test]
    fn self_comparison_scores_exactly_one() {
        let cols = vec![("v".to_string(), 0usize)];
        for seed in 0..50 {
            let sequences = random_sequences(seed, 8);
            for kind in [
                StatisticKind::Length,
                StatisticKind::Mean,
                StatisticKind::Median,
                StatisticKind::Std,
                StatisticKind::InterRowDiff { lag: 1 },
                StatisticKind::InterRowDiff { lag: 3 },
            ] {
                let entry = msas(&sequences, &sequences, &cols, kind).unwrap();
                assert_eq!(entry.aggregate, 1.0, "kind {kind:?} seed {seed}");
            }
        }
    }

    #[test]
    fn scores_are_permutation_invariant() {
        let cols = vec![("v".to_string(), 0usize)];
        let real = random_sequences(3, 10);
        let synth = random_sequences(4, 9);
        let mut shuffled = synth.clone();
        shuffled.reverse();
        for kind in [StatisticKind::Mean, StatisticKind::InterRowDiff { lag: 2 }] {
            let a = msas(&real, &synth, &cols, kind).unwrap();
            let b = msas(&real, &shuffled, &cols, kind).unwrap();
            assert_eq!(a.columns, b.columns);
        }
    }

    #[test]
    fn large_offsets_drive_the_mean_score_to_zero() {
        let cols = vec![("v".to_string(), 0usize)];
        let real = random_sequences(5, 10);
        let offset = |sequences: &[Sequence], c: f64| -> Vec<Sequence> {
            sequences
                .iter()
                .map(|s| Sequence {
                    key: s.key.clone(),
                    context: vec![],
                    steps: s
                        .steps
                        .iter()
                        .map(|row| {
                            row.iter()
                                .map(|v| match v {
                                    Value::Float(x) => Value::Float(x + c),
                                    other => other.clone(),
                                })
                                .collect()
                        })
                        .collect(),
                })
                .collect()
        };
        let small = msas(&real, &offset(&real, 0.5), &cols, StatisticKind::Mean)
            .unwrap()
            .aggregate;
        let large = msas(&real, &offset(&real, 1e6), &cols, StatisticKind::Mean)
            .unwrap()
            .aggregate;
        assert!(large <= small);
        assert_eq!(large, 0.0);
    }

    #[test]
    fn no_applicable_column_is_an_error() {
        let real = random_sequences(6, 3);
        assert!(matches!(
            msas(&real, &real, &[], StatisticKind::Mean),
            Err(SynthError::NoApplicableColumn(_))
        ));
    }
}
