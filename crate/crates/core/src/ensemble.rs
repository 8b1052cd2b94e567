//! Ensemble orchestration and median aggregation.
//!
//! Base model `M{i}` pairs exemplar `i` with seed `i`; all models share the
//! remaining generation parameters. Per-sample ratings are combined by their
//! median, and the number of distinct ratings measures self-consistency.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::inference::{run_batch, Backend, BatchOptions, GenerationParams, Prediction, SampleFailure};
use crate::prompting::PromptTemplate;
use crate::selection::ExampleSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_models: usize,
    pub example_set: ExampleSet,
    pub seeds: Vec<u64>,
    pub params: GenerationParams,
}

impl EnsembleConfig {
    /// Seeds 1..=k, one model per exemplar.
    pub fn new(example_set: ExampleSet, params: GenerationParams) -> Self {
        let k = example_set.examples.len();
        Self {
            n_models: k,
            seeds: (1..=k as u64).collect(),
            example_set,
            params,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_models == 0 {
            return Err(Error::Config("n_models must be positive".into()));
        }
        if self.seeds.len() != self.n_models
            || self.example_set.examples.len() != self.n_models
            || self.example_set.k != self.n_models
        {
            return Err(Error::Config(format!(
                "n_models ({}), seeds ({}) and exemplars ({}) must agree",
                self.n_models,
                self.seeds.len(),
                self.example_set.examples.len()
            )));
        }
        self.params.validate()
    }
}

pub fn model_id(index: usize) -> String {
    format!("M{}", index + 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub sample_id: String,
    /// Ground-truth label, carried so records can be evaluated standalone.
    pub label: u8,
    pub per_model: BTreeMap<String, Prediction>,
    pub median_rating: Option<u8>,
    pub n_unique: usize,
    pub n_valid: usize,
}

impl EnsembleRecord {
    pub fn valid_ratings(&self) -> Vec<u8> {
        self.per_model.values().filter_map(|p| p.rating).collect()
    }
}

/// Median of ordinal ratings. With an even count the two middle values are
/// averaged and `x.5` rounds up.
pub fn median_aggregate(ratings: &[u8]) -> Result<u8> {
    if ratings.is_empty() {
        return Err(Error::Empty("median of an empty rating list"));
    }
    let mut sorted = ratings.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    if n % 2 == 1 {
        Ok(sorted[n / 2])
    } else {
        let sum = u16::from(sorted[n / 2 - 1]) + u16::from(sorted[n / 2]);
        Ok(sum.div_ceil(2) as u8)
    }
}

/// Number of distinct valid ratings in a record.
pub fn consistency(record: &EnsembleRecord) -> Result<usize> {
    let distinct: BTreeSet<u8> = record.valid_ratings().into_iter().collect();
    if distinct.is_empty() {
        return Err(Error::Empty("record has no valid predictions"));
    }
    Ok(distinct.len())
}

/// Builds one record per test sample from per-model prediction lists.
pub fn assemble_records(test: &[Sample], per_model: &[Vec<Prediction>]) -> Vec<EnsembleRecord> {
    let mut by_sample: BTreeMap<&str, BTreeMap<String, Prediction>> = BTreeMap::new();
    for preds in per_model {
        for p in preds {
            by_sample
                .entry(p.sample_id.as_str())
                .or_default()
                .insert(p.model_id.clone(), p.clone());
        }
    }
    test.iter()
        .map(|s| {
            let per_model = by_sample.remove(s.id.as_str()).unwrap_or_default();
            let valid: Vec<u8> = per_model.values().filter_map(|p| p.rating).collect();
            let n_unique = valid.iter().collect::<BTreeSet<_>>().len();
            EnsembleRecord {
                sample_id: s.id.clone(),
                label: s.label,
                median_rating: median_aggregate(&valid).ok(),
                n_unique,
                n_valid: valid.len(),
                per_model,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub max_in_flight: usize,
    /// Directory for per-model checkpoint files (`<model_id>.jsonl`).
    pub checkpoint_dir: Option<PathBuf>,
    pub checkpoint_every: usize,
    pub abort_after_consecutive_failures: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            max_in_flight: 4,
            checkpoint_dir: None,
            checkpoint_every: 20,
            abort_after_consecutive_failures: 10,
        }
    }
}

impl RunOptions {
    fn batch(&self, model_id: String) -> BatchOptions {
        BatchOptions {
            checkpoint: self
                .checkpoint_dir
                .as_ref()
                .map(|d| d.join(format!("{model_id}.jsonl"))),
            model_id,
            max_in_flight: self.max_in_flight,
            checkpoint_every: self.checkpoint_every,
            abort_after_consecutive_failures: self.abort_after_consecutive_failures,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub records: Vec<EnsembleRecord>,
    /// Per-model predictions in model order, each in test order.
    pub predictions: Vec<Vec<Prediction>>,
    pub failures: Vec<SampleFailure>,
    pub queried: usize,
}

pub fn run_ensemble(
    config: &EnsembleConfig,
    test: &[Sample],
    template: &PromptTemplate,
    backend: &dyn Backend,
    opts: &RunOptions,
) -> Result<EnsembleRun> {
    config.validate()?;
    let mut predictions = Vec::with_capacity(config.n_models);
    let mut failures = Vec::new();
    let mut queried = 0;
    for (i, (example, &seed)) in config.example_set.examples.iter().zip(&config.seeds).enumerate() {
        let id = model_id(i);
        log::info!(
            "running {id} (example {}, seed {seed}) on {} samples",
            example.id,
            test.len()
        );
        let pair = [(example.text.as_str(), example.label)];
        let prompt_fn = |s: &Sample| template.render(&pair, &s.text);
        let outcome = run_batch(
            test,
            &prompt_fn,
            &config.params.with_seed(seed),
            backend,
            &opts.batch(id),
        )?;
        queried += outcome.queried;
        failures.extend(outcome.failures);
        predictions.push(outcome.predictions);
    }
    Ok(EnsembleRun {
        records: assemble_records(test, &predictions),
        predictions,
        failures,
        queried,
    })
}

/// Model id of the single k-shot comparison model.
pub fn kshot_model_id(k: usize) -> String {
    format!("{k}-shot")
}

/// One model prompted with every exemplar at once, using `params.seed`.
pub fn run_kshot(
    example_set: &ExampleSet,
    test: &[Sample],
    template: &PromptTemplate,
    params: &GenerationParams,
    backend: &dyn Backend,
    opts: &RunOptions,
) -> Result<crate::inference::BatchOutcome> {
    let pairs = example_set.pairs();
    let prompt_fn = |s: &Sample| template.render(&pairs, &s.text);
    run_batch(
        test,
        &prompt_fn,
        params,
        backend,
        &opts.batch(kshot_model_id(pairs.len())),
    )
}
