//! Centroid-based one-shot exemplar selection for LLM ensembles.
//!
//! The pipeline: load a labeled review corpus ([`dataset`]), embed the
//! example pool ([`embedding`]), pick one exemplar per k-means cluster
//! ([`selection`]), prompt N base models that each pair one exemplar with one
//! seed ([`prompting`], [`inference`]), combine their ratings by median
//! ([`ensemble`]), and score the result ([`metrics`], [`report`]).
//! [`pipeline`] wires the stages together with reproducible artifacts.

pub mod dataset;
pub mod embedding;
pub mod ensemble;
pub mod error;
mod http;
pub mod inference;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod prompting;
pub mod report;
pub mod rng;
pub mod selection;

pub use dataset::{CorpusStats, Sample, SplitSpec};
pub use embedding::{EmbedderSpec, Embedding};
pub use ensemble::{median_aggregate, EnsembleConfig, EnsembleRecord};
pub use error::{BackendError, Error, Result};
pub use http::{RetryPolicy, API_KEY_ENV};
pub use inference::{Backend, GenerationParams, MockModelSpec, Prediction};
pub use metrics::{ConsistencyReport, EvalReport, PairedTestResult};
pub use pipeline::ExperimentConfig;
pub use prompting::PromptTemplate;
pub use selection::{ExampleSet, KMeansResult, Strategy};
