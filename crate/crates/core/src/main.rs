use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use semcand::catalog::{generate_synthetic_catalog, SynthConfig};
use semcand::engine::service;
use semcand::engine::ConfigFile;
use semcand::eval::{evaluate_dir, record_run, run_report, ReportConfig, RequestModel, SimulationConfig, Summary};
use semcand::extract::llm::extract_llm_blocking;
use semcand::extract::{read_metadata, write_metadata, ExtractorConfig, ExtractorMode, RuleExtractor};
use semcand::{load_catalog, Engine, EngineConfig, GraphParams, RetrieverTag, Taxonomy};

#[derive(Debug, Parser)]
#[command(name = "semcand", version, about = "Semantic candidate retrieval and A/A' predictability evaluation")]
struct Cli {
    /// TOML settings file; command-line flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate or validate ad catalogs
    #[command(subcommand)]
    Catalog(CatalogCmd),
    /// Extract semantic metadata for every ad in a catalog
    Extract(ExtractArgs),
    /// Build a retrieval snapshot from extracted metadata
    BuildIndex(BuildArgs),
    /// Print the ranked candidates for one seed ad as JSON
    Retrieve(RetrieveArgs),
    /// Serve a snapshot over HTTP
    Serve(ServeArgs),
    /// Simulate delivery for one retriever and write its run record
    Simulate(SimulateArgs),
    /// Compute metrics from run_semantic.json and run_baseline.json
    Evaluate(EvaluateArgs),
    /// Simulate both retrievers and evaluate them in one go
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
enum CatalogCmd {
    Generate(GenerateArgs),
    /// Load a catalog file and report its size
    Validate {
        path: PathBuf,
    },
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 1000)]
    ads: usize,
    #[arg(long, default_value_t = 20)]
    topics: usize,
    #[arg(long, default_value_t = 0.1)]
    shadow_fraction: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Rule,
    Llm,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long, value_enum, default_value = "rule")]
    mode: Mode,
    #[arg(long)]
    out: PathBuf,
    /// Taxonomy JSON for rule mode (built-in taxonomy if omitted)
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    #[arg(long)]
    max_categories: Option<usize>,
    /// Model endpoint for llm mode
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    prompt_template: Option<PathBuf>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    #[arg(long)]
    timeout_ms: Option<u64>,
}

/// Engine settings shared by every command that retrieves.
#[derive(Debug, Args)]
struct EngineFlags {
    #[arg(long)]
    stage1_budget: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    blend_alpha: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Brand, product and contextual weights, comma separated
    #[arg(long, value_delimiter = ',', num_args = 3)]
    attr_weights: Option<Vec<f64>>,
}

impl EngineFlags {
    fn as_config(&self) -> ConfigFile {
        ConfigFile {
            stage1_budget: self.stage1_budget,
            depth: self.depth,
            blend_alpha: self.blend_alpha,
            theta: self.theta,
            attr_weights: self.attr_weights.as_ref().map(|w| [w[0], w[1], w[2]]),
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
struct BuildArgs {
    #[arg(long)]
    metadata: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Catalog whose raw titles back the baseline retriever
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    k_default: Option<usize>,
    #[arg(long)]
    edge_threshold: Option<f64>,
    #[arg(long)]
    max_degree: Option<usize>,
    #[command(flatten)]
    engine: EngineFlags,
}

#[derive(Debug, Args)]
struct RetrieveArgs {
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long)]
    seed: String,
    /// Defaults to the snapshot's k_default
    #[arg(long)]
    k: Option<usize>,
    /// Use the title-overlap baseline instead of the semantic retriever
    #[arg(long)]
    baseline: bool,
    #[command(flatten)]
    engine: EngineFlags,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Arm {
    Semantic,
    Baseline,
}

impl From<Arm> for RetrieverTag {
    fn from(a: Arm) -> Self {
        match a {
            Arm::Semantic => RetrieverTag::Semantic,
            Arm::Baseline => RetrieverTag::Baseline,
        }
    }
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, default_value_t = 14)]
    days: u32,
    #[arg(long, default_value_t = 5000)]
    rpd: u64,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    snapshot: PathBuf,
    #[arg(long, value_enum)]
    retriever: Arm,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    engine: EngineFlags,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    runs: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    snapshot: PathBuf,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    engine: EngineFlags,
}

fn file_config(path: Option<&Path>) -> Result<ConfigFile> {
    match path {
        Some(p) => ConfigFile::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(ConfigFile::default()),
    }
}

/// Loads a snapshot and layers file and flag settings over its stored config.
fn open_engine(snapshot: &Path, settings: &ConfigFile) -> Result<Engine> {
    let mut engine = Engine::load(snapshot).with_context(|| format!("loading snapshot {}", snapshot.display()))?;
    let cfg = settings.engine_config(*engine.config())?;
    if &cfg != engine.config() {
        engine.set_config(cfg)?;
    }
    Ok(engine)
}

fn print_summary(summary: &Summary) {
    let show = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
    println!(
        "StatSigDiff semantic {} baseline {}; MAD semantic {} baseline {}; {} pairs",
        show(summary.semantic.aggregate_stat_sig_diff),
        show(summary.baseline.aggregate_stat_sig_diff),
        show(summary.semantic.mad),
        show(summary.baseline.mad),
        summary.pairs
    );
}

fn run(cli: Cli) -> Result<()> {
    let file = file_config(cli.config.as_deref())?;
    match cli.command {
        Command::Catalog(CatalogCmd::Generate(a)) => {
            let cfg =
                SynthConfig { ads: a.ads, topics: a.topics, shadow_fraction: a.shadow_fraction, ..Default::default() };
            let catalog = generate_synthetic_catalog(&cfg, a.seed)?;
            catalog.save(&a.out)?;
            println!("wrote {} ads ({} shadow pairs) to {}", catalog.len(), catalog.pairs().len(), a.out.display());
        }
        Command::Catalog(CatalogCmd::Validate { path }) => {
            let catalog = load_catalog(&path)?;
            println!("{}: {} ads, {} shadow pairs", path.display(), catalog.len(), catalog.pairs().len());
        }
        Command::Extract(a) => {
            let catalog = load_catalog(&a.catalog)?;
            let metadata = match a.mode {
                Mode::Rule => {
                    let taxonomy = match &a.taxonomy {
                        Some(p) => Taxonomy::from_file(p)?,
                        None => Taxonomy::builtin(),
                    };
                    let mut extractor = RuleExtractor::new(taxonomy);
                    if let Some(m) = a.max_categories {
                        extractor = extractor.with_max_categories(m);
                    }
                    extractor.extract_catalog(&catalog)?
                }
                Mode::Llm => {
                    let defaults = ExtractorConfig::default();
                    let cfg = ExtractorConfig {
                        mode: ExtractorMode::LlmEndpoint,
                        endpoint_url: a.endpoint.clone(),
                        prompt_template_path: a.prompt_template.clone(),
                        max_categories: a.max_categories.unwrap_or(defaults.max_categories),
                        batch_size: a.batch_size.unwrap_or(defaults.batch_size),
                        timeout: a.timeout_ms.map(Duration::from_millis).unwrap_or(defaults.timeout),
                        max_in_flight: a.max_in_flight.unwrap_or(defaults.max_in_flight),
                    };
                    cfg.validate()?;
                    let outcome = extract_llm_blocking(catalog.ads(), &cfg)?;
                    let failed: Vec<String> =
                        outcome.results.iter().filter_map(|r| r.as_ref().err().map(ToString::to_string)).collect();
                    if !failed.is_empty() {
                        for f in failed.iter().take(10) {
                            log::error!("{f}");
                        }
                        bail!("{} of {} ads failed extraction; nothing written", failed.len(), catalog.len());
                    }
                    outcome.results.into_iter().map(Result::unwrap).collect()
                }
            };
            write_metadata(&a.out, &metadata)?;
            println!("wrote metadata for {} ads to {}", metadata.len(), a.out.display());
        }
        Command::BuildIndex(a) => {
            let flags = ConfigFile {
                k_default: a.k_default,
                edge_threshold: a.edge_threshold,
                max_degree: a.max_degree,
                ..a.engine.as_config()
            };
            let settings = file.merge(flags);
            let config = settings.engine_config(EngineConfig::default())?;
            let params = settings.graph_params(GraphParams::default())?;
            let metadata = read_metadata(&a.metadata)?;
            let catalog = a.catalog.as_deref().map(load_catalog).transpose()?;
            let engine = Engine::build(metadata, catalog.as_ref(), config, params)?;
            engine.save(&a.out)?;
            println!(
                "wrote snapshot {} ({} ads, {} edges, baseline {}) hash {}",
                a.out.display(),
                engine.len(),
                engine.graph().edge_count(),
                if engine.has_baseline() { "yes" } else { "no" },
                engine.snapshot_hash()
            );
        }
        Command::Retrieve(a) => {
            let engine = open_engine(&a.snapshot, &file.merge(a.engine.as_config()))?;
            let tag = if a.baseline { RetrieverTag::Baseline } else { RetrieverTag::Semantic };
            let k = a.k.unwrap_or(engine.config().k_default);
            let ranked = engine.retrieve_with(tag, &a.seed, k)?;
            println!("{}", serde_json::to_string_pretty(&ranked)?);
        }
        Command::Serve(a) => {
            let addr: SocketAddr = format!("{}:{}", a.host, a.port).parse().context("bad listen address")?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
                log::info!("listening on {}", listener.local_addr()?);
                let shutdown = async {
                    let _ = tokio::signal::ctrl_c().await;
                };
                service::serve(listener, a.snapshot, service::AppState::new(), shutdown).await
            })?;
        }
        Command::Simulate(a) => {
            let catalog = load_catalog(&a.catalog)?;
            let engine = open_engine(&a.snapshot, &file.merge(a.engine.as_config()))?;
            let tag = RetrieverTag::from(a.retriever);
            let cfg = SimulationConfig {
                days: a.sim.days,
                requests_per_day: a.sim.rpd,
                seed: a.sim.seed,
                retriever_tag: tag,
                k: a.sim.k,
                request_model: RequestModel::UniformPrimaries,
            };
            let retriever = engine.retriever(tag)?;
            let record = record_run(&catalog, &retriever, &cfg, Some(engine.snapshot_hash().to_string()))?;
            let path = record.write(&a.out)?;
            println!("wrote {}", path.display());
        }
        Command::Evaluate(a) => {
            let summary = evaluate_dir(&a.runs, &a.out)?;
            print_summary(&summary);
        }
        Command::Report(a) => {
            let catalog = load_catalog(&a.catalog)?;
            let engine = open_engine(&a.snapshot, &file.merge(a.engine.as_config()))?;
            let cfg = ReportConfig { days: a.sim.days, requests_per_day: a.sim.rpd, k: a.sim.k, seed: a.sim.seed };
            let semantic = engine.retriever(RetrieverTag::Semantic)?;
            let baseline = engine.retriever(RetrieverTag::Baseline)?;
            let summary = run_report(&catalog, &semantic, &baseline, &cfg, &a.out)?;
            print_summary(&summary);
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
