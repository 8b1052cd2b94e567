//! `creens` command-line interface.
//!
//! Exit codes: 0 on success, 1 for invalid input or configuration, 2 for
//! runtime failures (I/O, backend, aborted batches).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use creens_core::dataset::{self, LoadOptions, Sample};
use creens_core::inference::{BackendSpec, MockModelSpec, RemoteSpec, WireFormat};
use creens_core::metrics::ConsistencyReport;
use creens_core::pipeline::{self, ExamplesArtifact, StatsArtifact};
use creens_core::report::{self, RunReport};
use creens_core::{EmbedderSpec, Error, ExperimentConfig, SplitSpec, Strategy};

#[derive(Parser)]
#[command(
    name = "creens",
    version,
    about = "Exemplar selection and seeded LLM ensembles for rating prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the corpus, split it and write pool.jsonl, test.jsonl and stats.json.
    Ingest(ConfigArgs),
    /// Select exemplars from pool.jsonl and write examples.json.
    Select(ConfigArgs),
    /// Run the ensemble over test.jsonl with examples.json.
    Run(ConfigArgs),
    /// Print the metric tables of a run, optionally against a second run.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        against: Option<PathBuf>,
    },
    /// Paired significance tests between two runs on the same test set.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Print metrics stratified by the number of distinct model answers.
    Consistency {
        #[arg(long)]
        run: PathBuf,
    },
    /// Ingest, select, run and evaluate in one go.
    Pipeline(ConfigArgs),
    /// Run every strategy × temperature cell and compare them.
    Grid {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "cre,rse")]
        strategies: Vec<Strategy>,
        #[arg(long, value_delimiter = ',', default_value = "0.8,1.5")]
        temperatures: Vec<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Mock,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum Wire {
    Completion,
    Chat,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// JSON experiment config; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    filter_category: Option<String>,
    #[arg(long)]
    pool_size: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    /// Split seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    selection_seed: Option<u64>,
    #[arg(long)]
    selection_subsample: Option<usize>,
    #[arg(long)]
    strategy: Option<Strategy>,
    /// Number of exemplars, one per base model.
    #[arg(long, visible_alias = "n-models")]
    k: Option<usize>,
    /// Comma-separated generation seeds, one per model.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Embedding service base URL; omit for the offline hash embedder.
    #[arg(long)]
    embed_endpoint: Option<String>,
    #[arg(long)]
    embed_model: Option<String>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    normalize_embeddings: bool,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Generation service base URL, e.g. http://localhost:8000/v1.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_enum)]
    wire: Option<Wire>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    mock_noise_floor: Option<f64>,
    #[arg(long)]
    mock_temp_gain: Option<f64>,
    #[arg(long)]
    template_file: Option<PathBuf>,
    /// Also run one model prompted with all k exemplars.
    #[arg(long)]
    kshot: bool,
    #[arg(long)]
    max_in_flight: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::new(self.corpus.clone().unwrap_or_default(), "runs/default"),
        };
        if let Some(v) = &self.corpus {
            cfg.corpus = v.clone();
        }
        if let Some(v) = &self.out {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = &self.filter_category {
            cfg.filter_category = Some(v.clone());
        }
        cfg.split = SplitSpec {
            pool_size: self.pool_size.unwrap_or(cfg.split.pool_size),
            test_size: self.test_size.unwrap_or(cfg.split.test_size),
            seed: self.seed.unwrap_or(cfg.split.seed),
        };
        if let Some(v) = self.selection_seed {
            cfg.selection_seed = v;
        }
        if let Some(v) = self.selection_subsample {
            cfg.selection_subsample = Some(v);
        }
        if let Some(v) = self.strategy {
            cfg.strategy = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.clone();
        }
        if let Some(endpoint) = &self.embed_endpoint {
            let dim = self.embed_dim.unwrap_or(cfg.embedder.dim);
            cfg.embedder = EmbedderSpec::remote(endpoint.clone(), self.embed_model.clone(), dim);
        } else if let Some(dim) = self.embed_dim {
            cfg.embedder.dim = dim;
        }
        if self.normalize_embeddings {
            cfg.embedder.normalize = true;
        }
        if let Some(v) = self.temperature {
            cfg.temperature = v;
        }
        if let Some(v) = self.top_p {
            cfg.top_p = v;
        }
        self.apply_backend(&mut cfg)?;
        if let Some(v) = &self.template_file {
            cfg.template_file = Some(v.clone());
        }
        if self.kshot {
            cfg.kshot = true;
        }
        if let Some(v) = self.max_in_flight {
            cfg.max_in_flight = v;
        }
        Ok(cfg)
    }

    fn apply_backend(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        let wants_remote = match self.backend {
            Some(BackendKind::Remote) => true,
            Some(BackendKind::Mock) => false,
            None => matches!(cfg.backend, BackendSpec::Remote(_)) || self.endpoint.is_some(),
        };
        if wants_remote {
            let mut spec = match &cfg.backend {
                BackendSpec::Remote(r) => r.clone(),
                BackendSpec::Mock(_) => RemoteSpec {
                    endpoint: String::new(),
                    model: String::new(),
                    wire: WireFormat::Completion,
                    timeout_secs: 60,
                },
            };
            if let Some(v) = &self.endpoint {
                spec.endpoint = v.clone();
            }
            if let Some(v) = &self.model {
                spec.model = v.clone();
            }
            if let Some(w) = self.wire {
                spec.wire = match w {
                    Wire::Completion => WireFormat::Completion,
                    Wire::Chat => WireFormat::Chat,
                };
            }
            if spec.endpoint.is_empty() {
                return Err(Error::Config("the remote backend needs --endpoint".into()).into());
            }
            cfg.backend = BackendSpec::Remote(spec);
        } else {
            let mut spec = match &cfg.backend {
                BackendSpec::Mock(m) => *m,
                BackendSpec::Remote(_) => MockModelSpec {
                    noise_floor: 0.2,
                    temperature_gain: 0.1,
                },
            };
            if let Some(v) = self.mock_noise_floor {
                spec.noise_floor = v;
            }
            if let Some(v) = self.mock_temp_gain {
                spec.temperature_gain = v;
            }
            cfg.backend = BackendSpec::Mock(spec);
        }
        Ok(())
    }
}

fn load_samples(path: &Path) -> Result<Vec<Sample>> {
    let corpus =
        dataset::load_corpus(path, &LoadOptions::default()).with_context(|| format!("reading {}", path.display()))?;
    Ok(corpus.samples)
}

fn ingest(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    let hash = cfg.config_hash()?;
    let data = pipeline::ingest(cfg)?;
    let out = &cfg.output_dir;
    dataset::write_samples(out.join("pool.jsonl"), &data.pool)?;
    dataset::write_samples(out.join("test.jsonl"), &data.test)?;
    pipeline::write_stamped_json(&out.join("stats.json"), &hash, &data.stats)?;
    print_stats(&data.stats);
    println!("wrote {}", out.display());
    Ok(())
}

fn print_stats(stats: &StatsArtifact) {
    println!(
        "{:<6}{:>7}{:>8}{:>8}{:>14}{:>18}",
        "split", "n", "users", "venues", "rating", "chars"
    );
    for (name, s) in [("pool", &stats.pool), ("test", &stats.test)] {
        println!(
            "{:<6}{:>7}{:>8}{:>8}{:>8.2} ± {:<4.2}{:>10.1} ± {:<6.1}",
            name, s.n, s.n_users, s.n_venues, s.rating_mean, s.rating_std, s.chars_mean, s.chars_std
        );
    }
    if stats.rejected_rows > 0 {
        println!("{} rows rejected", stats.rejected_rows);
    }
}

fn select(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate_settings()?;
    let hash = cfg.config_hash()?;
    let pool = load_samples(&cfg.output_dir.join("pool.jsonl"))?;
    let set = pipeline::select_examples(
        &pool,
        cfg.strategy,
        cfg.k,
        cfg.selection_seed,
        cfg.selection_subsample,
        &cfg.embedder,
    )?;
    for e in &set.examples {
        println!("{}\t{}\t{}", e.id, e.label, e.text);
    }
    pipeline::write_stamped_json(
        &cfg.output_dir.join("examples.json"),
        &hash,
        &pipeline::examples_artifact(set),
    )?;
    Ok(())
}

fn run(cfg: &ExperimentConfig) -> Result<()> {
    let out = &cfg.output_dir;
    let (_, examples) = pipeline::read_stamped_json::<ExamplesArtifact>(&out.join("examples.json"))
        .context("examples.json missing; run `creens select` first")?;
    let set = examples.example_set;
    let mut cfg = cfg.clone();
    cfg.k = set.examples.len();
    cfg.validate_settings()?;
    let hash = cfg.config_hash()?;
    let test = load_samples(&out.join("test.jsonl"))?;
    let backend = cfg.backend.build();
    let art = pipeline::run_and_evaluate(
        out,
        &hash,
        &set,
        &test,
        &cfg.template()?,
        cfg.params(0),
        cfg.model_seeds(),
        cfg.kshot,
        backend.as_ref(),
        &cfg.run_options(&hash),
        Some(serde_json::to_value(&cfg)?),
    )?;
    print!(
        "{}",
        pipeline::summary_text(&set, cfg.temperature, &art.report, &art.consistency)
    );
    Ok(())
}

fn evaluate(run: &Path, against: Option<&Path>) -> Result<()> {
    let (_, report) = pipeline::read_stamped_json::<RunReport>(&run.join("report.json"))?;
    println!("Effect of ensemble");
    print!("{}", report::format_run_table(&report));
    println!("\nF1 by label");
    print!("{}", report::format_f1_table(&report));
    if let Some(b) = against {
        println!();
        print_comparison(run, b, &pipeline::compare_runs(run, b)?);
    }
    Ok(())
}

fn compare(a: &Path, b: &Path, json: bool) -> Result<()> {
    let c = pipeline::compare_runs(a, b)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&c)?);
    } else {
        print_comparison(a, b, &c);
    }
    Ok(())
}

fn print_comparison(a: &Path, b: &Path, c: &report::Comparison) {
    println!("A = {}\nB = {}", a.display(), b.display());
    print!("{}", report::format_comparison("A", "B", c));
}

fn consistency(run: &Path) -> Result<()> {
    let (_, c) = pipeline::read_stamped_json::<ConsistencyReport>(&run.join("consistency.json"))?;
    print!("{}", report::format_consistency(&c));
    Ok(())
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Ingest(args) => ingest(&args.resolve()?),
        Command::Select(args) => select(&args.resolve()?),
        Command::Run(args) => run(&args.resolve()?),
        Command::Evaluate { run, against } => evaluate(&run, against.as_deref()),
        Command::Compare { a, b, json } => compare(&a, &b, json),
        Command::Consistency { run } => consistency(&run),
        Command::Pipeline(args) => {
            let cfg = args.resolve()?;
            let art = pipeline::run_pipeline(&cfg)?;
            let (_, examples) = pipeline::read_stamped_json::<ExamplesArtifact>(&cfg.output_dir.join("examples.json"))?;
            print!(
                "{}",
                pipeline::summary_text(&examples.example_set, cfg.temperature, &art.report, &art.consistency)
            );
            Ok(())
        }
        Command::Grid {
            config,
            strategies,
            temperatures,
        } => {
            if strategies.is_empty() || temperatures.is_empty() {
                bail!(Error::Config(
                    "grid needs at least one strategy and one temperature".into()
                ));
            }
            let cfg = config.resolve()?;
            cfg.validate()?;
            for &t in &temperatures {
                let mut cell = cfg.clone();
                cell.temperature = t;
                cell.validate_settings()?;
            }
            let grid = pipeline::run_grid(&cfg, &strategies, &temperatures)?;
            print!("{}", pipeline::format_grid(&grid));
            Ok(())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_validation() => 1,
        Some(_) => 2,
        None if err.downcast_ref::<serde_json::Error>().is_some() => 1,
        None => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
