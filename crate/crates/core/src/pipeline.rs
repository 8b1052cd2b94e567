//! Experiment configuration and the end-to-end pipeline:
//! ingest → split → embed → select → ensemble run → evaluate → consistency.
//!
//! Every artifact carries the config hash: JSON documents have a top-level
//! `config_hash`, JSONL rows carry it as an extra field. The hash covers
//! every setting that can change results (and the template text) but not the
//! output directory or concurrency knobs, so reruns of the same experiment
//! in different directories are byte-identical.
//!
//! Run directory layout:
//!
//! ```text
//! manifest.json      config, config hash, test-set hash, RNG version
//! stats.json         pool and test summary statistics
//! test.jsonl         the test split
//! examples.json      selected exemplars and label histogram
//! predictions.jsonl  every base-model (and k-shot) prediction
//! records.jsonl      per-sample ensemble records
//! report.json        per-model, Avg., Ens and k-shot metrics
//! consistency.json   metrics stratified by n_unique
//! summary.txt        the above as aligned tables
//! checkpoints/<hash>/ resumable per-model progress
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{self, CorpusStats, LoadOptions, Sample, SplitSpec};
use crate::embedding::{self, EmbedderSpec};
use crate::ensemble::{self, EnsembleConfig, EnsembleRecord, RunOptions};
use crate::error::{Error, Result};
use crate::inference::{Backend, BackendSpec, GenerationParams, Prediction};
use crate::io;
use crate::metrics::{self, ConsistencyReport};
use crate::prompting::PromptTemplate;
use crate::report::{self, Comparison, RunReport};
use crate::rng::{SplitMix64, RNG_VERSION};
use crate::selection::{self, ExampleSet, Strategy};

pub const DEFAULT_TEMPERATURES: [f64; 2] = [0.8, 1.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub corpus: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_category: Option<String>,
    pub split: SplitSpec,
    pub embedder: EmbedderSpec,
    pub strategy: Strategy,
    pub k: usize,
    /// Seed for exemplar selection (k-means++ or RSE draw).
    pub selection_seed: u64,
    /// Cluster a seeded subsample of the pool instead of all of it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection_subsample: Option<usize>,
    /// One generation seed per base model; empty means `1..=k`.
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
    pub backend: BackendSpec,
    /// Also run a single model prompted with all k exemplars.
    #[serde(default)]
    pub kshot: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_file: Option<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    #[serde(default = "default_abort_after")]
    pub abort_after_consecutive_failures: usize,
}

fn default_in_flight() -> usize {
    4
}

fn default_checkpoint_every() -> usize {
    20
}

fn default_abort_after() -> usize {
    10
}

impl ExperimentConfig {
    /// Defaults (18,000/1,000 split, k = 5, seeds 1..=5,
    /// top_p 0.9, one new token) with the offline embedder and a mock backend.
    pub fn new(corpus: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            corpus: corpus.into(),
            filter_category: None,
            split: SplitSpec::standard(0),
            embedder: EmbedderSpec::deterministic(embedding::DEFAULT_DIM),
            strategy: Strategy::Cre,
            k: 5,
            selection_seed: 0,
            selection_subsample: None,
            seeds: Vec::new(),
            temperature: 1.5,
            top_p: 0.9,
            max_new_tokens: 1,
            backend: BackendSpec::Mock(crate::inference::MockModelSpec {
                noise_floor: 0.2,
                temperature_gain: 0.1,
            }),
            kshot: false,
            template_file: None,
            output_dir: output_dir.into(),
            max_in_flight: default_in_flight(),
            checkpoint_every: default_checkpoint_every(),
            abort_after_consecutive_failures: default_abort_after(),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        io::read_json(path.as_ref())
    }

    pub fn model_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (1..=self.k as u64).collect()
        } else {
            self.seeds.clone()
        }
    }

    pub fn params(&self, seed: u64) -> GenerationParams {
        GenerationParams {
            temperature: self.temperature,
            top_p: self.top_p,
            max_new_tokens: self.max_new_tokens,
            seed,
        }
    }

    /// Checks every setting, including that the corpus and template exist.
    pub fn validate(&self) -> Result<()> {
        self.validate_settings()?;
        if !self.corpus.is_file() {
            return Err(Error::Config(format!(
                "corpus {} does not exist",
                self.corpus.display()
            )));
        }
        if let Some(t) = &self.template_file {
            if !t.is_file() {
                return Err(Error::Config(format!("template {} does not exist", t.display())));
            }
        }
        Ok(())
    }

    /// Checks the settings alone, without touching the filesystem.
    pub fn validate_settings(&self) -> Result<()> {
        self.params(0).validate()?;
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if self.model_seeds().len() != self.k {
            return Err(Error::Config(format!(
                "{} seeds given for k = {}",
                self.seeds.len(),
                self.k
            )));
        }
        if self.split.pool_size < self.k {
            return Err(Error::Config("pool is smaller than k".into()));
        }
        if self.selection_subsample.is_some_and(|n| n < self.k) {
            return Err(Error::Config("selection subsample is smaller than k".into()));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be positive".into()));
        }
        self.embedder.validate()?;
        self.backend.validate()?;
        Ok(())
    }

    pub fn template(&self) -> Result<PromptTemplate> {
        match &self.template_file {
            Some(p) => PromptTemplate::from_file(p),
            None => Ok(PromptTemplate::default()),
        }
    }

    /// SHA-256 over the result-affecting settings and the template text.
    pub fn config_hash(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            for key in [
                "output_dir",
                "max_in_flight",
                "checkpoint_every",
                "abort_after_consecutive_failures",
            ] {
                obj.remove(key);
            }
            let template_text = match &self.template_file {
                Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
                None => crate::prompting::DEFAULT_TEMPLATE.to_string(),
            };
            obj.insert("template_text".into(), template_text.into());
        }
        Ok(hash_json(&v))
    }

    pub fn run_options(&self, hash: &str) -> RunOptions {
        RunOptions {
            max_in_flight: self.max_in_flight,
            checkpoint_dir: Some(self.output_dir.join("checkpoints").join(&hash[..16])),
            checkpoint_every: self.checkpoint_every,
            abort_after_consecutive_failures: self.abort_after_consecutive_failures,
        }
    }
}

/// Hex SHA-256 of a JSON value's compact serialization (object keys sorted).
pub fn hash_json(v: &serde_json::Value) -> String {
    fn canonical(v: &serde_json::Value) -> serde_json::Value {
        match v {
            serde_json::Value::Object(m) => {
                let sorted: BTreeMap<_, _> = m.iter().map(|(k, v)| (k.clone(), canonical(v))).collect();
                serde_json::to_value(sorted).expect("map of values serializes")
            }
            serde_json::Value::Array(a) => serde_json::Value::Array(a.iter().map(canonical).collect()),
            other => other.clone(),
        }
    }
    let bytes = serde_json::to_vec(&canonical(v)).expect("JSON value serializes");
    hex::encode(Sha256::digest(bytes))
}

/// Serializes `inner` and adds a top-level `config_hash` field.
pub fn stamp<T: Serialize>(hash: &str, inner: &T) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(inner)?;
    match v.as_object_mut() {
        Some(obj) => {
            obj.insert("config_hash".into(), hash.into());
            Ok(v)
        }
        None => Err(Error::Config("only JSON objects can carry a config hash".into())),
    }
}

/// Inverse of [`stamp`].
pub fn unstamp<T: DeserializeOwned>(mut v: serde_json::Value) -> Result<(Option<String>, T)> {
    let hash = v
        .as_object_mut()
        .and_then(|o| o.remove("config_hash"))
        .and_then(|h| h.as_str().map(str::to_string));
    Ok((hash, serde_json::from_value(v)?))
}

pub fn write_stamped_jsonl<T: Serialize>(path: &Path, hash: &str, items: &[T]) -> Result<()> {
    let rows = items.iter().map(|i| stamp(hash, i)).collect::<Result<Vec<_>>>()?;
    io::write_jsonl(path, rows)
}

pub fn read_stamped_jsonl<T: DeserializeOwned>(path: &Path) -> Result<(Option<String>, Vec<T>)> {
    let mut hash = None;
    let mut out = Vec::new();
    for row in io::read_jsonl::<serde_json::Value>(path)? {
        let (h, item) = unstamp(row)?;
        hash = hash.or(h);
        out.push(item);
    }
    Ok((hash, out))
}

pub fn write_stamped_json<T: Serialize>(path: &Path, hash: &str, inner: &T) -> Result<()> {
    io::write_json(path, &stamp(hash, inner)?)
}

pub fn read_stamped_json<T: DeserializeOwned>(path: &Path) -> Result<(Option<String>, T)> {
    unstamp(io::read_json(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsArtifact {
    pub pool: CorpusStats,
    pub test: CorpusStats,
    pub rejected_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamplesArtifact {
    pub example_set: ExampleSet,
    pub label_histogram: BTreeMap<u8, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub rng: String,
    pub strategy: Strategy,
    pub temperature: f64,
    pub n_models: usize,
    pub test_set_hash: String,
    pub n_test: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

pub struct Ingested {
    pub pool: Vec<Sample>,
    pub test: Vec<Sample>,
    pub stats: StatsArtifact,
}

pub fn ingest(cfg: &ExperimentConfig) -> Result<Ingested> {
    let corpus = dataset::load_corpus(
        &cfg.corpus,
        &LoadOptions {
            filter_category: cfg.filter_category.clone(),
        },
    )?;
    if !corpus.rejected.is_empty() {
        log::warn!("{} corpus rows rejected", corpus.rejected.len());
    }
    let split = dataset::split_corpus(&corpus.samples, &cfg.split)?;
    let stats = StatsArtifact {
        pool: dataset::summarize(&split.pool)?,
        test: dataset::summarize(&split.test)?,
        rejected_rows: corpus.rejected.len(),
    };
    Ok(Ingested {
        pool: split.pool,
        test: split.test,
        stats,
    })
}

/// Selects exemplars from the pool, embedding it first for CRE.
pub fn select_examples(
    pool: &[Sample],
    strategy: Strategy,
    k: usize,
    seed: u64,
    subsample: Option<usize>,
    embedder: &EmbedderSpec,
) -> Result<ExampleSet> {
    let candidates: Vec<Sample> = match subsample {
        Some(n) if n < pool.len() => {
            let mut ordered: Vec<&Sample> = pool.iter().collect();
            ordered.sort_by(|a, b| a.id.cmp(&b.id));
            SplitMix64::new(seed ^ 0x5355_4253_414d_504c)
                .sample_indices(ordered.len(), n)
                .into_iter()
                .map(|i| ordered[i].clone())
                .collect()
        }
        _ => pool.to_vec(),
    };
    match strategy {
        Strategy::Rse => selection::select_rse(&candidates, k, seed),
        Strategy::Cre => {
            let texts: Vec<String> = candidates.iter().map(|s| s.text.clone()).collect();
            let vectors = embedding::embed_batch(&texts, embedder)?;
            selection::select_cre(&candidates, &vectors, k, seed)
        }
    }
}

pub fn examples_artifact(set: ExampleSet) -> ExamplesArtifact {
    ExamplesArtifact {
        label_histogram: selection::label_histogram(&set),
        example_set: set,
    }
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub records: Vec<EnsembleRecord>,
    pub predictions: Vec<Prediction>,
    pub report: RunReport,
    pub consistency: ConsistencyReport,
}

/// Runs the ensemble (and optional k-shot model) and writes predictions,
/// records, report, consistency and manifest into `out`.
#[allow(clippy::too_many_arguments)]
pub fn run_and_evaluate(
    out: &Path,
    hash: &str,
    example_set: &ExampleSet,
    test: &[Sample],
    template: &PromptTemplate,
    params: GenerationParams,
    seeds: Vec<u64>,
    kshot: bool,
    backend: &dyn Backend,
    opts: &RunOptions,
    config_json: Option<serde_json::Value>,
) -> Result<RunArtifacts> {
    let mut ens_cfg = EnsembleConfig::new(example_set.clone(), params);
    ens_cfg.seeds = seeds.clone();
    let run = ensemble::run_ensemble(&ens_cfg, test, template, backend, opts).map_err(|e| e.in_stage("run"))?;
    let mut failures = run.failures.clone();
    let kshot_out = if kshot {
        let outcome = ensemble::run_kshot(example_set, test, template, &params.with_seed(seeds[0]), backend, opts)
            .map_err(|e| e.in_stage("kshot"))?;
        failures.extend(outcome.failures.clone());
        Some((
            ensemble::kshot_model_id(example_set.examples.len()),
            outcome.predictions,
        ))
    } else {
        None
    };

    let per_model: Vec<(String, Vec<Prediction>)> = run
        .predictions
        .iter()
        .enumerate()
        .map(|(i, p)| (ensemble::model_id(i), p.clone()))
        .collect();
    let report = report::build_run_report(&run.records, &per_model, kshot_out.clone(), failures)
        .map_err(|e| e.in_stage("evaluate"))?;
    let consistency =
        metrics::stratify_by_consistency(&run.records, &report::truth_map(&run.records), ens_cfg.n_models)
            .map_err(|e| e.in_stage("consistency"))?;

    let mut predictions: Vec<Prediction> = run.predictions.into_iter().flatten().collect();
    if let Some((_, p)) = kshot_out {
        predictions.extend(p);
    }
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        rng: RNG_VERSION.to_string(),
        strategy: example_set.strategy,
        temperature: params.temperature,
        n_models: ens_cfg.n_models,
        test_set_hash: dataset::sample_id_hash(test),
        n_test: test.len(),
        config: config_json,
    };
    write_stamped_jsonl(&out.join("predictions.jsonl"), hash, &predictions)?;
    write_stamped_jsonl(&out.join("records.jsonl"), hash, &run.records)?;
    write_stamped_json(&out.join("report.json"), hash, &report)?;
    write_stamped_json(&out.join("consistency.json"), hash, &consistency)?;
    write_stamped_json(&out.join("manifest.json"), hash, &manifest)?;
    io::write_atomic(
        &out.join("summary.txt"),
        summary_text(example_set, params.temperature, &report, &consistency).as_bytes(),
    )?;
    Ok(RunArtifacts {
        records: run.records,
        predictions,
        report,
        consistency,
    })
}

pub fn summary_text(set: &ExampleSet, temperature: f64, report: &RunReport, consistency: &ConsistencyReport) -> String {
    let mut s = String::new();
    writeln!(s, "{} examples, T = {temperature}", set.strategy).unwrap();
    writeln!(
        s,
        "exemplars: {}",
        set.examples
            .iter()
            .map(|e| format!("{} ({})", e.id, e.label))
            .collect::<Vec<_>>()
            .join(", ")
    )
    .unwrap();
    writeln!(s, "\nEffect of ensemble").unwrap();
    s.push_str(&report::format_run_table(report));
    writeln!(s, "\nF1 by label").unwrap();
    s.push_str(&report::format_f1_table(report));
    if let Some(k) = &report.kshot {
        writeln!(s, "\n{} vs ensemble (lift over {})", k.model_id, k.model_id).unwrap();
        writeln!(
            s,
            "Acc.  {:>7.3}{:>7.3}{:>+8.1}%",
            k.eval.accuracy,
            report.ensemble.accuracy,
            report::lift(report.ensemble.accuracy, k.eval.accuracy)
        )
        .unwrap();
        writeln!(
            s,
            "F1    {:>7.3}{:>7.3}{:>+8.1}%",
            k.eval.macro_f1,
            report.ensemble.macro_f1,
            report::lift(report.ensemble.macro_f1, k.eval.macro_f1)
        )
        .unwrap();
        writeln!(
            s,
            "RMSE  {:>7.3}{:>7.3}{:>+8.1}%",
            k.eval.rmse,
            report.ensemble.rmse,
            report::lift(report.ensemble.rmse, k.eval.rmse)
        )
        .unwrap();
    }
    writeln!(s, "\nSelf-consistency").unwrap();
    s.push_str(&report::format_consistency(consistency));
    if !report.failures.is_empty() {
        writeln!(s, "\n{} generation failures (see report.json)", report.failures.len()).unwrap();
    }
    s
}

/// The full pipeline for one configuration.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let hash = cfg.config_hash()?;
    let template = cfg.template()?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let data = ingest(cfg).map_err(|e| e.in_stage("ingest"))?;
    write_stamped_json(&out.join("stats.json"), &hash, &data.stats)?;
    dataset::write_samples(out.join("test.jsonl"), &data.test)?;

    let set = select_examples(
        &data.pool,
        cfg.strategy,
        cfg.k,
        cfg.selection_seed,
        cfg.selection_subsample,
        &cfg.embedder,
    )
    .map_err(|e| e.in_stage("select"))?;
    write_stamped_json(&out.join("examples.json"), &hash, &examples_artifact(set.clone()))?;

    let backend = cfg.backend.build();
    run_and_evaluate(
        out,
        &hash,
        &set,
        &data.test,
        &template,
        cfg.params(0),
        cfg.model_seeds(),
        cfg.kshot,
        backend.as_ref(),
        &cfg.run_options(&hash),
        Some(serde_json::to_value(cfg)?),
    )
}

#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub config_hash: Option<String>,
    pub manifest: Option<RunManifest>,
    pub records: Vec<EnsembleRecord>,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let (config_hash, records) = read_stamped_jsonl::<EnsembleRecord>(&dir.join("records.jsonl"))?;
    let manifest_path = dir.join("manifest.json");
    let manifest = if manifest_path.exists() {
        Some(read_stamped_json::<RunManifest>(&manifest_path)?.1)
    } else {
        None
    };
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        config_hash,
        manifest,
        records,
    })
}

fn record_id_hash(records: &[EnsembleRecord]) -> String {
    let samples: Vec<Sample> = records
        .iter()
        .map(|r| Sample::new(r.sample_id.clone(), "-", r.label))
        .collect();
    dataset::sample_id_hash(&samples)
}

/// Paired comparison of two run directories' ensemble predictions.
pub fn compare_runs(a: &Path, b: &Path) -> Result<Comparison> {
    let ra = load_run(a)?;
    let rb = load_run(b)?;
    let ha = record_id_hash(&ra.records);
    let hb = record_id_hash(&rb.records);
    if ha != hb {
        return Err(Error::RunMismatch(format!(
            "test sets differ ({} has {}, {} has {})",
            a.display(),
            &ha[..12],
            b.display(),
            &hb[..12]
        )));
    }
    if let (Some(ma), Some(mb)) = (&ra.manifest, &rb.manifest) {
        if ma.test_set_hash != mb.test_set_hash {
            return Err(Error::RunMismatch("manifests report different test sets".into()));
        }
    }
    report::compare_records(&ra.records, &rb.records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub name: String,
    pub strategy: Strategy,
    pub temperature: f64,
    pub config_hash: String,
    pub average: report::MetricTriple,
    pub ensemble: report::MetricTriple,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kshot: Option<report::MetricTriple>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridComparison {
    pub a: String,
    pub b: String,
    pub comparison: Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub cells: Vec<GridCell>,
    pub comparisons: Vec<GridComparison>,
}

pub fn cell_name(strategy: Strategy, temperature: f64) -> String {
    format!("{}-t{temperature}", strategy.to_string().to_lowercase())
}

/// One run per (strategy, temperature) cell under `cfg.output_dir`, plus
/// temperature comparisons within each strategy and strategy comparisons at
/// each temperature.
pub fn run_grid(cfg: &ExperimentConfig, strategies: &[Strategy], temperatures: &[f64]) -> Result<GridReport> {
    let mut cells = Vec::new();
    for &strategy in strategies {
        for &temperature in temperatures {
            let name = cell_name(strategy, temperature);
            let mut cell_cfg = cfg.clone();
            cell_cfg.strategy = strategy;
            cell_cfg.temperature = temperature;
            cell_cfg.output_dir = cfg.output_dir.join(&name);
            log::info!("grid cell {name}");
            let art = run_pipeline(&cell_cfg)?;
            cells.push(GridCell {
                name,
                strategy,
                temperature,
                config_hash: cell_cfg.config_hash()?,
                average: art.report.average,
                ensemble: (&art.report.ensemble).into(),
                kshot: art.report.kshot.as_ref().map(|k| (&k.eval).into()),
            });
        }
    }
    let mut comparisons = Vec::new();
    let dir = |s, t| cfg.output_dir.join(cell_name(s, t));
    for &s in strategies {
        for pair in temperatures.windows(2) {
            comparisons.push(GridComparison {
                a: cell_name(s, pair[0]),
                b: cell_name(s, pair[1]),
                comparison: compare_runs(&dir(s, pair[0]), &dir(s, pair[1]))?,
            });
        }
    }
    for &t in temperatures {
        for pair in strategies.windows(2) {
            comparisons.push(GridComparison {
                a: cell_name(pair[1], t),
                b: cell_name(pair[0], t),
                comparison: compare_runs(&dir(pair[1], t), &dir(pair[0], t))?,
            });
        }
    }
    let grid = GridReport { cells, comparisons };
    let hash = hash_json(&serde_json::to_value(
        grid.cells.iter().map(|c| &c.config_hash).collect::<Vec<_>>(),
    )?);
    write_stamped_json(&cfg.output_dir.join("grid.json"), &hash, &grid)?;
    io::write_atomic(&cfg.output_dir.join("grid.txt"), format_grid(&grid).as_bytes())?;
    Ok(grid)
}

pub fn format_grid(grid: &GridReport) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "{:<12}{:>10}{:>10}{:>10}{:>10}{:>10}{:>10}",
        "cell", "Avg.Acc", "Avg.F1", "Avg.RMSE", "Ens.Acc", "Ens.F1", "Ens.RMSE"
    )
    .unwrap();
    for c in &grid.cells {
        writeln!(
            s,
            "{:<12}{:>10.3}{:>10.3}{:>10.3}{:>10.3}{:>10.3}{:>10.3}",
            c.name,
            c.average.accuracy,
            c.average.macro_f1,
            c.average.rmse,
            c.ensemble.accuracy,
            c.ensemble.macro_f1,
            c.ensemble.rmse
        )
        .unwrap();
    }
    for g in &grid.comparisons {
        writeln!(s, "\n{} vs {}", g.a, g.b).unwrap();
        s.push_str(&report::format_comparison(&g.a, &g.b, &g.comparison));
    }
    s
}
