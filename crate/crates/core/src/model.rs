//! End-to-end pipeline and single-file persistence.
//!
//! `SynthModel` owns everything sampling needs: the metadata, the fitted
//! transforms, the copula context model and the trained sequence network.
//! It persists as one JSON document whose weight arrays are base64-encoded
//! flat little-endian `f64`s, so a saved model reloads bit-exactly.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::copula::{self, ContextTable, CopulaModel};
use crate::cpar::{self, CparModel, Trainer};
use crate::data::{
    self, assemble_rows, partition_sequences, validate, Dataset, DatetimeFormat, Metadata,
    RawTable, Sequence, Value,
};
use crate::error::{Result, SynthError};
use crate::generator;
use crate::msas::{self, MsasReport};
use crate::transforms::{self, FramedSequence, TransformState};

pub const FORMAT_VERSION: u32 = 1;

/// A fitted end-to-end model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthModel {
    pub metadata: Metadata,
    /// Original header order; synthetic tables reuse it exactly.
    pub columns: Vec<String>,
    pub datetime_formats: BTreeMap<String, DatetimeFormat>,
    pub transforms: TransformState,
    pub copula: CopulaModel,
    pub cpar: CparModel,
    pub config: RunConfig,
    /// Real sequence keys, kept so synthetic keys can avoid them and so the
    /// default sample count matches the real count.
    pub real_keys: Vec<String>,
}

/// One sampled sequence, before reassembly into a flat table.
#[derive(Debug, Clone)]
pub struct SampledSequence {
    pub sequence: Sequence,
    pub hit_cap: bool,
}

fn context_table(dataset: &Dataset, sequences: &[Sequence]) -> ContextTable {
    let columns = dataset.context_column_order();
    let kinds = columns
        .iter()
        .map(|c| dataset.metadata.kind_of(c).expect("validated"))
        .collect();
    ContextTable {
        columns,
        kinds,
        rows: sequences.iter().map(|s| s.context.clone()).collect(),
    }
}

impl SynthModel {
    /// Runs the full fitting pipeline: transforms, context copula, framed
    /// sequences, then the training loop. `progress` receives
    /// `(epoch, epoch_loss)` after every epoch.
    pub fn fit(
        dataset: &Dataset,
        config: &RunConfig,
        mut progress: impl FnMut(usize, f64),
    ) -> Result<SynthModel> {
        config.check()?;
        let sequences = partition_sequences(dataset);
        let state = transforms::fit(dataset)?;
        let copula = copula::fit_copula(&context_table(dataset, &sequences), config.seed)?;

        let framed: Vec<FramedSequence> = sequences
            .iter()
            .map(|s| transforms::frame(&state, s))
            .collect::<Result<_>>()?;

        let longest = sequences.iter().map(|s| s.steps.len()).max().unwrap_or(1);
        let cap = config.max_sequence_length.unwrap_or(4 * longest);
        let model = CparModel::new(
            &state,
            config.hidden_size,
            cap,
            config.floors,
            config.seed,
        );
        let mut trainer = Trainer::new(
            model,
            config.learning_rate,
            config.grad_clip,
            config.update_mode,
        );
        for epoch in 0..config.epochs {
            let loss = trainer.train_epoch(&framed)?;
            progress(epoch, loss);
        }

        Ok(SynthModel {
            metadata: dataset.metadata.clone(),
            columns: dataset.columns.clone(),
            datetime_formats: dataset.datetime_formats.clone(),
            transforms: state,
            copula,
            cpar: trainer.model,
            config: config.clone(),
            real_keys: sequences.into_iter().map(|s| s.key).collect(),
        })
    }

    /// Default sample count: one synthetic sequence per real sequence.
    pub fn default_sample_count(&self) -> usize {
        self.config.sample_count.unwrap_or(self.real_keys.len())
    }

    /// Key prefix guaranteed not to collide with any real key: every
    /// synthetic key starts with the prefix, so no real key may.
    fn synthetic_key_prefix(&self) -> String {
        let mut prefix = "key-".to_string();
        while self.real_keys.iter().any(|k| k.starts_with(&prefix)) {
            prefix.insert(0, 's');
        }
        prefix
    }

    /// Samples `n` brand-new sequences: copula contexts first, then one
    /// autoregressive rollout per context. Deterministic in `(self, n, seed)`.
    pub fn sample_sequences(
        &self,
        n: usize,
        seed: u64,
        min_steps: usize,
    ) -> Result<Vec<SampledSequence>> {
        let contexts =
            copula::sample_context_with_prefix(&self.copula, n, seed, &self.synthetic_key_prefix());
        let mut out = Vec::with_capacity(n);
        for (i, (key, context)) in contexts
            .keys
            .into_iter()
            .zip(contexts.rows.into_iter())
            .enumerate()
        {
            let context_numeric = transforms::encode_context(&self.transforms, &context)?;
            let mut rng = crate::rng::stream(seed, "cpar-sample", i as u64);
            let index_start = if self.transforms.index_column.is_some() {
                let starts = &self.transforms.index_starts;
                let pick = rng.random_range(0..starts.len());
                Some(starts[pick])
            } else {
                None
            };
            let sampled = cpar::sample_sequence(&self.cpar, &context_numeric, &mut rng, min_steps)?;
            let framed = FramedSequence {
                key,
                context_numeric,
                steps: sampled.steps,
                index_start,
            };
            let mut sequence = transforms::unframe(&self.transforms, &framed)?;
            // The copula's raw cells are exact; prefer them over the decoded
            // round trip of the encoded context.
            sequence.context = context;
            out.push(SampledSequence {
                sequence,
                hit_cap: sampled.hit_cap,
            });
        }
        Ok(out)
    }

    /// Samples a full synthetic table with the original column schema.
    pub fn sample_table(&self, n: usize, seed: u64) -> Result<Vec<Vec<Value>>> {
        let sampled = self.sample_sequences(n, seed, 1)?;
        let sequences: Vec<Sequence> = sampled.into_iter().map(|s| s.sequence).collect();
        Ok(assemble_rows(&self.columns, &self.metadata, &sequences))
    }

    /// Writes a synthetic table as CSV at `path`.
    pub fn sample_to_csv(&self, path: &Path, n: usize, seed: u64) -> Result<()> {
        let rows = self.sample_table(n, seed)?;
        let file = std::fs::File::create(path)?;
        data::write_csv(
            file,
            &self.columns,
            &rows,
            &self.metadata,
            &self.datetime_formats,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            model: self.clone(),
        };
        let mut out = serde_json::to_string_pretty(&file)?;
        out.push('\n');
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SynthModel> {
        let mut text = String::new();
        std::fs::File::open(path)?.read_to_string(&mut text)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let found = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .unwrap_or(0) as u32;
        if found != FORMAT_VERSION {
            return Err(SynthError::VersionMismatch {
                found,
                expected: FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_value(value)?;
        file.model.cpar.weights.check_shapes()?;
        Ok(file.model)
    }
}

/// On-disk layout: a version header wrapping the model. Self-describing and
/// loadable without the original data.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    model: SynthModel,
}

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------

/// Where the experiment's real data comes from.
pub enum ExperimentSource {
    /// CSV and metadata paths.
    Files { data: PathBuf, metadata: PathBuf },
    /// A bundled generator by name (currently `drift`).
    Generator { name: String, seed: u64 },
}

/// Paths and scores produced by one experiment run.
pub struct ExperimentOutput {
    pub model_path: PathBuf,
    pub synthetic_path: PathBuf,
    pub report_path: PathBuf,
    pub report: MsasReport,
    pub model: SynthModel,
}

pub fn load_dataset(data: &Path, metadata: &Path) -> Result<Dataset> {
    let raw = RawTable::from_path(data)?;
    let meta = Metadata::from_path(metadata)?;
    validate(&raw, &meta)
}

fn generated_dataset(name: &str, seed: u64) -> Result<(RawTable, Metadata)> {
    match name {
        "drift" => Ok((generator::drift(seed), generator::drift_metadata())),
        other => Err(SynthError::InvalidConfig(format!(
            "unknown bundled generator '{other}' (available: drift)"
        ))),
    }
}

/// Fit, sample and evaluate end to end, writing the full bundle into
/// `out_dir`: real data (when generated), model file, synthetic CSV, MSAS
/// report (JSON and text) and a run manifest with config, seeds and wall
/// times. The synthetic CSV and the report JSON are byte-deterministic for a
/// fixed config and seed; wall times live only in the manifest.
pub fn run_experiment(
    source: &ExperimentSource,
    config: &RunConfig,
    out_dir: &Path,
    mut progress: impl FnMut(usize, f64),
) -> Result<ExperimentOutput> {
    config.check()?;
    std::fs::create_dir_all(out_dir)?;

    let (dataset, source_description) = match source {
        ExperimentSource::Files { data, metadata } => (
            load_dataset(data, metadata)?,
            format!("files: {} + {}", data.display(), metadata.display()),
        ),
        ExperimentSource::Generator { name, seed } => {
            let (raw, meta) = generated_dataset(name, *seed)?;
            let dataset = validate(&raw, &meta)?;
            // Keep the generated inputs next to the outputs.
            let data_path = out_dir.join("data.csv");
            let file = std::fs::File::create(&data_path)?;
            data::write_csv(
                file,
                &dataset.columns,
                &dataset.rows,
                &dataset.metadata,
                &dataset.datetime_formats,
            )?;
            std::fs::write(
                out_dir.join("metadata.json"),
                serde_json::to_string_pretty(&meta)?,
            )?;
            (dataset, format!("generator: {name} (seed {seed})"))
        }
    };

    let fit_start = Instant::now();
    let model = SynthModel::fit(&dataset, config, &mut progress)?;
    let fit_seconds = fit_start.elapsed().as_secs_f64();

    let model_path = out_dir.join("model.json");
    model.save(&model_path)?;

    let sample_start = Instant::now();
    let n = model.default_sample_count();
    let synthetic_path = out_dir.join("synthetic.csv");
    model.sample_to_csv(&synthetic_path, n, config.seed)?;
    let sample_seconds = sample_start.elapsed().as_secs_f64();

    let evaluate_start = Instant::now();
    let synthetic_raw = RawTable::from_path(&synthetic_path)?;
    let synthetic = validate(&synthetic_raw, &dataset.metadata)?;
    let report = msas::evaluate(&dataset, &synthetic, config.msas_lag_max)?;
    let evaluate_seconds = evaluate_start.elapsed().as_secs_f64();

    let report_path = out_dir.join("msas.json");
    std::fs::write(&report_path, report.to_json())?;
    std::fs::write(out_dir.join("msas.txt"), report.to_text())?;

    let manifest = serde_json::json!({
        "source": source_description,
        "config": config,
        "sequences_sampled": n,
        "wall_times_seconds": {
            "fit": fit_seconds,
            "sample": sample_seconds,
            "evaluate": evaluate_seconds,
        },
    });
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;

    Ok(ExperimentOutput {
        model_path,
        synthetic_path,
        report_path,
        report,
        model,
    })
}
