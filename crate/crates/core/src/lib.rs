//! Generative modeling for multi-sequence tabular data.
//!
//! The pipeline fits two models to a validated dataset: a Gaussian copula
//! over the per-sequence context columns, and an autoregressive recurrent
//! network (CPAR) over the framed step rows. Sampling runs the two in the
//! same order, producing brand-new sequences for brand-new contexts, and the
//! MSAS metric scores how closely per-sequence statistics of the synthetic
//! data match the real data.

pub mod config;
pub mod copula;
pub mod cpar;
pub mod data;
pub mod error;
pub mod generator;
pub mod model;
pub mod msas;
pub mod nn;
pub mod rng;
pub mod transforms;

pub use config::RunConfig;
pub use data::{partition_sequences, validate, ColumnKind, Dataset, Metadata, Sequence, Value};
pub use error::{Result, SynthError};
pub use model::SynthModel;
