//! Bundled synthetic data generators for tests and the experiment runner.
//!
//! `drift` is the reference fixture: 50 sequences of 15 to 40 daily steps,
//! two AR(1) continuous columns whose level depends on the context, one
//! categorical step column derived from the value's position relative to
//! its level, and two context columns (one categorical regime, one
//! continuous baseline). Everything is a closed-form function of the seed.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{ColumnKind, Metadata, RawTable};

/// Number of sequences the drift generator emits.
pub const DRIFT_SEQUENCES: usize = 50;

/// Metadata for the drift table.
pub fn drift_metadata() -> Metadata {
    Metadata {
        sequence_key: "symbol".into(),
        sequence_index: Some("date".into()),
        context_columns: ["regime".to_string(), "baseline".to_string()]
            .into_iter()
            .collect::<BTreeSet<_>>(),
        column_types: [
            ("date".to_string(), ColumnKind::Datetime),
            ("regime".to_string(), ColumnKind::Categorical),
            ("baseline".to_string(), ColumnKind::Continuous),
            ("value".to_string(), ColumnKind::Continuous),
            ("volume".to_string(), ColumnKind::Continuous),
            ("state".to_string(), ColumnKind::Categorical),
        ]
        .into_iter()
        .collect::<BTreeMap<_, _>>(),
    }
}

/// Generates the drift table. Same seed, same table.
pub fn drift(seed: u64) -> RawTable {
    let mut rng = crate::rng::stream(seed, "drift-generator", 0);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let header: Vec<String> = [
        "symbol", "date", "regime", "baseline", "value", "volume", "state",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();

    let day = 86_400i64;
    let origin = 1_704_067_200i64; // 2024-01-01 UTC
    let mut rows: Vec<Vec<Option<String>>> = Vec::new();

    for i in 0..DRIFT_SEQUENCES {
        let key = format!("seq-{i}");
        let length = rng.random_range(15..=40usize);
        let calm = rng.random::<f64>() < 0.6;
        let regime = if calm { "calm" } else { "volatile" };
        let (phi, noise_sd): (f64, f64) = if calm { (0.85, 2.0) } else { (0.6, 6.0) };
        let baseline = 100.0 + 8.0 * unit.sample(&mut rng);
        let vol_level = 50.0 + 6.0 * unit.sample(&mut rng);
        let start_day = rng.random_range(0..120i64);

        // Start both AR(1) chains at their stationary distribution.
        let mut value = baseline + noise_sd / (1.0 - phi * phi).sqrt() * unit.sample(&mut rng);
        let vol_sd: f64 = if calm { 3.0 } else { 7.0 };
        let vol_phi: f64 = 0.7;
        let mut volume =
            vol_level + vol_sd / (1.0 - vol_phi * vol_phi).sqrt() * unit.sample(&mut rng);

        for t in 0..length {
            let epoch = origin + (start_day + t as i64) * day;
            let date = chrono::DateTime::from_timestamp(epoch, 0)
                .unwrap()
                .format("%Y-%m-%d")
                .to_string();
            let state = if value < baseline - 3.0 {
                "low"
            } else if value > baseline + 3.0 {
                "high"
            } else {
                "mid"
            };
            rows.push(vec![
                Some(key.clone()),
                Some(date),
                Some(regime.to_string()),
                Some(baseline.to_string()),
                Some(value.to_string()),
                Some(volume.to_string()),
                Some(state.to_string()),
            ]);
            value = baseline + phi * (value - baseline) + noise_sd * unit.sample(&mut rng);
            volume = vol_level + vol_phi * (volume - vol_level) + vol_sd * unit.sample(&mut rng);
        }
    }

    RawTable { header, rows }
}
