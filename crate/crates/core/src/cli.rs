//! Command-line driver.
//!
//! A dataset is a directory holding `nodes.csv`, `edges.csv` and
//! `dataset.cfg`. Synthetic datasets also keep `trace.csv`; their graph is
//! rebuilt from the trace samples before `cut_s` so raw UE and cell ids
//! survive for replay.

use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::graph::AttributedGraph;
use crate::ingest::{extract_subset, load_edge_list, rw_like_tables, write_tables, IngestError, RwShape, SubsetSpec};
use crate::metrics::{timing, EvalReport, MetricError, RESULTS_HEADER};
use crate::nn::{Checkpoint, NnError};
use crate::replay::{baseline_next_cell, replay, EmbeddingScorer, LinkScorer, OracleScorer, ReplayConfig, SealScorer};
use crate::seal::{check_cost, train_seal, Seal, SealContext, DEFAULT_COST_LIMIT};
use crate::split::{split_with_negatives, Pair, Part, SplitBundle, SplitError, DEFAULT_RATIOS};
use crate::synth::{
    em_reference_graph, generate_scenario, ground_truth_next_cell, trace_to_graph, MobilityTrace, ScenarioConfig,
    SynthError,
};
use crate::train::{GraphInput, ModelError, TrainConfig};
use crate::vgae::{train_vgae, Vgae};

pub const THREADS_ENV: &str = "NEXTCELL_THREADS";
pub const BENCH_HEADER: &str = "model,factor,seed,n_nodes,n_edges,epochs,train_s";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Training(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Data(_) => 3,
            Self::Training(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Usage(format!("config error: {e}"))
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Config(c) => c.into(),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<SplitError> for CliError {
    fn from(e: SplitError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(c) => c.into(),
            ModelError::Input(_) | ModelError::TooCostly { .. } => Self::Data(e.to_string()),
            other => Self::Training(other.to_string()),
        }
    }
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "nextcell", version, about = "GNN link prediction for proactive next-cell handover")]
pub struct Cli {
    /// Log progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic mobility trace and its graph.
    Gen(GenArgs),
    /// Import node and edge tables.
    Ingest(IngestArgs),
    /// Write a train/val/test split with negatives.
    Split(SplitArgs),
    /// Train a link predictor over one or more seeds.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a split.
    Eval(EvalArgs),
    /// Replay held-out handovers against a checkpoint.
    Replay(ReplayArgs),
    /// Time VGAE training across graph sizes.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Scenario file of `key = value` lines; defaults to the EM-scale scenario.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of the trace duration held out from the graph for replay.
    #[arg(long, default_value_t = 0.0)]
    pub holdout_frac: f64,
    /// Write the EM reference tables (489 links) instead of a trace.
    #[arg(long, conflicts_with_all = ["config", "holdout_frac"])]
    pub reference: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, required_unless_present = "rw_like")]
    pub nodes: Option<PathBuf>,
    #[arg(long, required_unless_present = "rw_like")]
    pub edges: Option<PathBuf>,
    /// Synthesize RW-shaped tables instead of reading files.
    #[arg(long, conflicts_with_all = ["nodes", "edges"])]
    pub rw_like: bool,
    #[arg(long, default_value_t = 20)]
    pub rw_cells: usize,
    #[arg(long, default_value_t = 965)]
    pub rw_ues: usize,
    /// Keep this many cells (with `--subset-ues`).
    #[arg(long, requires = "subset_ues")]
    pub subset_cells: Option<usize>,
    #[arg(long, requires = "subset_cells")]
    pub subset_ues: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = DEFAULT_RATIOS)]
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Vgae,
    Seal,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Vgae => "vgae",
            Self::Seal => "seal",
        }
    }

    pub fn defaults(self) -> TrainConfig {
        match self {
            Self::Vgae => TrainConfig::vgae(),
            Self::Seal => TrainConfig::seal(),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(value_enum)]
    pub model: ModelKind,
    #[arg(long)]
    pub data: PathBuf,
    /// `a..b` (inclusive), a comma list, or a single seed.
    #[arg(long, default_value = "1", value_parser = parse_seeds)]
    pub seeds: Seeds,
    /// Hyperparameter file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Hyperparameter override, `key=value`.
    #[arg(long = "set")]
    pub overrides: Vec<String>,
    /// Use one fixed split for every seed instead of splitting per seed.
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Train SEAL even when the cost estimate exceeds the limit.
    #[arg(long)]
    pub force: bool,
    #[arg(long, default_value_t = DEFAULT_COST_LIMIT)]
    pub cost_limit: f64,
    /// Output directory; defaults to `<data>/runs`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seeds(pub Vec<u64>);

pub fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let bad = |_| format!("cannot parse seeds {s:?}");
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(bad)?, b.trim().parse().map_err(bad)?);
        (a..=b).collect()
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(bad)).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(format!("no seeds in {s:?}"));
    }
    Ok(Seeds(seeds))
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Defaults to the split recorded in the checkpoint.
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Defaults to the tuned threshold recorded in the checkpoint.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Append the report to this results table.
    #[arg(long)]
    pub results: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, required_unless_present = "oracle")]
    pub checkpoint: Option<PathBuf>,
    /// Score with the ground truth instead of a model.
    #[arg(long, conflicts_with = "checkpoint")]
    pub oracle: bool,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = crate::replay::DEFAULT_PINGPONG_WINDOW_S)]
    pub pingpong_window_s: f64,
    /// Write the per-event log here.
    #[arg(long)]
    pub events: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Scale factors applied to the EM-scale scenario.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 4.0])]
    pub factors: Vec<f64>,
    #[arg(long, default_value = "1..3", value_parser = parse_seeds)]
    pub seeds: Seeds,
    /// Fixed epoch count per run.
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    /// Repetitions per run; the fastest is reported.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Write the timing table here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Worker pool sized by `NEXTCELL_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().map_err(|_| CliError::Usage(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::Usage(e.to_string()))
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    thread_pool()?.install(|| match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Split(a) => cmd_split(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Bench(a) => cmd_bench(a),
    })
}

/// Who produced an output directory, from what, and when.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: KeyValues,
    pub seeds: Vec<u64>,
    pub fingerprint: String,
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn new(command: &str, config: KeyValues, seeds: Vec<u64>, fingerprint: String) -> Self {
        let now = unix_now();
        Self {
            command: command.to_string(),
            config,
            seeds,
            fingerprint,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: now,
            finished_unix: now,
        }
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("command", &self.command);
        kv.set("seeds", self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","));
        kv.set("fingerprint", &self.fingerprint);
        kv.set("version", &self.version);
        kv.set("started_unix", self.started_unix);
        kv.set("finished_unix", self.finished_unix);
        for key in self.config.keys() {
            kv.set(&format!("config.{key}"), self.config.get(key).unwrap_or_default());
        }
        kv
    }

    /// Writes `manifest-<command>.txt` into `dir`, or `manifest-<command>-<k>.txt`
    /// when earlier manifests for the command exist.
    pub fn write(mut self, dir: &Path) -> Result<PathBuf, CliError> {
        self.finished_unix = unix_now();
        let mut path = dir.join(format!("manifest-{}.txt", self.command));
        let mut k = 2;
        while path.exists() {
            path = dir.join(format!("manifest-{}-{k}.txt", self.command));
            k += 1;
        }
        fs::write(&path, self.to_key_values().to_text()).map_err(io_at(&path))?;
        Ok(path)
    }
}

/// SHA-256 over the dataset files that exist, in a fixed order.
pub fn fingerprint(dir: &Path) -> Result<String, CliError> {
    let mut hasher = Sha256::new();
    for name in ["dataset.cfg", "nodes.csv", "edges.csv", "trace.csv"] {
        let path = dir.join(name);
        if path.exists() {
            hasher.update(name.as_bytes());
            hasher.update(fs::read(&path).map_err(io_at(&path))?);
        }
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// A loaded dataset directory.
pub struct Dataset {
    pub dir: PathBuf,
    pub name: String,
    pub graph: AttributedGraph,
    pub trace: Option<MobilityTrace>,
    pub cut_s: Option<f64>,
    pub fingerprint: String,
}

fn read_kv(path: &Path) -> Result<KeyValues, CliError> {
    Ok(KeyValues::parse(&fs::read_to_string(path).map_err(io_at(path))?)?)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, CliError> {
    let info = read_kv(&dir.join("dataset.cfg"))?;
    let name = dir.file_name().map_or_else(|| "dataset".into(), |n| n.to_string_lossy().into_owned());
    let (graph, trace, cut_s) = match info.get("source") {
        Some("synth") => {
            let path = dir.join("trace.csv");
            let trace = MobilityTrace::read_csv(BufReader::new(File::open(&path).map_err(io_at(&path))?))?;
            let cut_s: Option<f64> = info.parsed("cut_s")?;
            let graph = match cut_s {
                Some(cut) => trace_to_graph(&trace.split_at_time(cut).0)?,
                None => trace_to_graph(&trace)?,
            };
            (graph, Some(trace), cut_s)
        }
        Some("tables") => (load_edge_list(&dir.join("nodes.csv"), &dir.join("edges.csv"))?, None, None),
        other => return Err(CliError::Data(format!("{}: unknown dataset source {other:?}", dir.display()))),
    };
    Ok(Dataset { dir: dir.to_path_buf(), name, graph, trace, cut_s, fingerprint: fingerprint(dir)? })
}

fn write_graph_tables(g: &AttributedGraph, dir: &Path) -> Result<(), CliError> {
    let (np, ep) = (dir.join("nodes.csv"), dir.join("edges.csv"));
    let nodes = BufWriter::new(File::create(&np).map_err(io_at(&np))?);
    let edges = BufWriter::new(File::create(&ep).map_err(io_at(&ep))?);
    write_tables(g, nodes, edges)?;
    Ok(())
}

fn write_dataset_info(dir: &Path, info: &KeyValues) -> Result<(), CliError> {
    let path = dir.join("dataset.cfg");
    fs::write(&path, info.to_text()).map_err(io_at(&path))?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_at(dir))
}

pub fn cmd_gen(a: &GenArgs) -> Result<(), CliError> {
    create_dir(&a.out)?;
    if a.reference {
        let seed = a.seed.unwrap_or(1);
        let g = em_reference_graph(seed);
        write_graph_tables(&g, &a.out)?;
        let mut info = KeyValues::default();
        info.set("source", "tables");
        info.set("reference_seed", seed);
        write_dataset_info(&a.out, &info)?;
        println!("wrote EM reference graph: {} nodes, {} edges", g.n_nodes(), g.n_edges());
        RunManifest::new("gen", info, vec![seed], fingerprint(&a.out)?).write(&a.out)?;
        return Ok(());
    }
    if !(0.0..1.0).contains(&a.holdout_frac) {
        return Err(CliError::Usage(format!("holdout_frac {} must be in [0, 1)", a.holdout_frac)));
    }
    let mut cfg = match &a.config {
        Some(path) => ScenarioConfig::from_key_values(&read_kv(path)?)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.rng_seed = seed;
    }
    cfg.validate()?;
    let trace = generate_scenario(&cfg)?;
    let trace_path = a.out.join("trace.csv");
    trace.write_csv(BufWriter::new(File::create(&trace_path).map_err(io_at(&trace_path))?))?;
    let mut info = cfg.to_key_values();
    info.set("source", "synth");
    let graph = if a.holdout_frac > 0.0 {
        let cut = cfg.duration_s * (1.0 - a.holdout_frac);
        info.set("cut_s", cut);
        trace_to_graph(&trace.split_at_time(cut).0)?
    } else {
        trace_to_graph(&trace)?
    };
    write_dataset_info(&a.out, &info)?;
    write_graph_tables(&graph, &a.out)?;
    println!(
        "wrote {} samples, graph {} nodes / {} edges, {} handovers",
        trace.len(),
        graph.n_nodes(),
        graph.n_edges(),
        ground_truth_next_cell(&trace).len()
    );
    RunManifest::new("gen", info, vec![cfg.rng_seed], fingerprint(&a.out)?).write(&a.out)?;
    Ok(())
}

pub fn cmd_ingest(a: &IngestArgs) -> Result<(), CliError> {
    let mut g = match (&a.nodes, &a.edges) {
        (Some(n), Some(e)) if !a.rw_like => load_edge_list(n, e)?,
        _ => rw_like_tables(RwShape::desk(a.rw_cells, a.rw_ues), a.seed).into_graph()?,
    };
    if let (Some(n_cells), Some(n_ues)) = (a.subset_cells, a.subset_ues) {
        g = extract_subset(&g, SubsetSpec { n_cells, n_ues, selection_seed: a.seed })?;
    }
    create_dir(&a.out)?;
    write_graph_tables(&g, &a.out)?;
    let mut info = KeyValues::default();
    info.set("source", "tables");
    if let Some(n) = &a.nodes {
        info.set("nodes_from", n.display());
    }
    if let Some(e) = &a.edges {
        info.set("edges_from", e.display());
    }
    if a.rw_like {
        info.set("rw_like", format!("{}x{}", a.rw_cells, a.rw_ues));
    }
    write_dataset_info(&a.out, &info)?;
    println!("ingested {} UEs, {} cells, {} edges", g.n_ue(), g.n_cell(), g.n_edges());
    RunManifest::new("ingest", info, vec![a.seed], fingerprint(&a.out)?).write(&a.out)?;
    Ok(())
}

fn split_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("split-{seed}.csv"))
}

/// The saved split for `seed` if present, otherwise a fresh one with the
/// default ratios.
pub fn load_or_split(ds: &Dataset, seed: u64) -> Result<SplitBundle, CliError> {
    let path = split_path(&ds.dir, seed);
    if path.exists() {
        return Ok(SplitBundle::read_manifest(BufReader::new(File::open(&path).map_err(io_at(&path))?))?);
    }
    Ok(split_with_negatives(&ds.graph, DEFAULT_RATIOS, seed)?)
}

pub fn cmd_split(a: &SplitArgs) -> Result<(), CliError> {
    let ds = load_dataset(&a.data)?;
    let ratios: [f64; 3] = a.ratios.clone().try_into().map_err(|_| CliError::Usage("ratios needs three values".into()))?;
    let bundle = split_with_negatives(&ds.graph, ratios, a.seed)?;
    let path = split_path(&a.data, a.seed);
    bundle.write_manifest(BufWriter::new(File::create(&path).map_err(io_at(&path))?))?;
    for part in Part::ALL {
        println!("{}: {} positive, {} negative", part.name(), bundle.pos(part).len(), bundle.neg(part).len());
    }
    Ok(())
}

/// A trained model of either kind.
#[derive(Debug, Clone)]
pub enum Trained {
    Vgae(Vgae),
    Seal(Seal),
}

impl Trained {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, CliError> {
        match ck.meta("model")? {
            "vgae" => Ok(Self::Vgae(Vgae::from_checkpoint(ck)?)),
            "seal" => Ok(Self::Seal(Seal::from_checkpoint(ck)?)),
            other => Err(CliError::Data(format!("unknown model {other:?} in checkpoint"))),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        match self {
            Self::Vgae(m) => m.to_checkpoint(),
            Self::Seal(m) => m.to_checkpoint(),
        }
    }

    /// Link probabilities for `pairs` with `message_edges` as the observed graph.
    pub fn score(&self, g: &AttributedGraph, message_edges: &[Pair], pairs: &[Pair]) -> Result<Vec<f64>, ModelError> {
        match self {
            Self::Vgae(m) => m.predict_links(&GraphInput::new(g, message_edges)?, pairs),
            Self::Seal(m) => {
                let ctx = SealContext::new(g, message_edges)?;
                if ctx.input_width(m.dims.max_label) != m.dims.in_dim {
                    return Err(ModelError::Input(format!(
                        "graph gives {}-wide subgraph features, model expects {}",
                        ctx.input_width(m.dims.max_label),
                        m.dims.in_dim
                    )));
                }
                m.predict_links(&ctx, pairs)
            }
        }
    }

    pub fn scorer<'g>(&'g self, g: &'g AttributedGraph) -> Result<Box<dyn LinkScorer + 'g>, ModelError> {
        Ok(match self {
            Self::Vgae(m) => Box::new(EmbeddingScorer::vgae(m, g)?),
            Self::Seal(m) => Box::new(SealScorer::new(m, g)?),
        })
    }
}

/// Scores a held-out part and times inference.
pub fn evaluate(model: &Trained, g: &AttributedGraph, bundle: &SplitBundle, part: Part, threshold: f64) -> Result<EvalReport, CliError> {
    let (pairs, labels) = bundle.labeled(part);
    let labels: Vec<bool> = labels.iter().map(|&l| l > 0.5).collect();
    let (scores, infer_s) = timing(|| model.score(g, &bundle.message_edges, &pairs));
    let mut report = EvalReport::compute(&scores?, &labels, threshold)?;
    report.infer_time_s = infer_s;
    Ok(report)
}

/// One seed of `train`: the checkpoint, curve and test report.
pub struct SeedRun {
    pub seed: u64,
    pub split_seed: u64,
    pub model: Trained,
    pub threshold: f64,
    pub curve: Vec<crate::train::CurveRow>,
    pub report: EvalReport,
}

pub fn train_one(kind: ModelKind, ds: &Dataset, cfg: &TrainConfig, split_seed: u64) -> Result<SeedRun, CliError> {
    let bundle = load_or_split(ds, split_seed)?;
    let (model, curve, threshold, train_s, epochs) = match kind {
        ModelKind::Vgae => {
            let o = train_vgae(&ds.graph, &bundle, cfg)?;
            (Trained::Vgae(o.model), o.curve, o.threshold, o.train_time_s, o.epochs_run)
        }
        ModelKind::Seal => {
            let o = train_seal(&ds.graph, &bundle, cfg)?;
            (Trained::Seal(o.model), o.curve, o.threshold, o.train_time_s, o.epochs_run)
        }
    };
    let mut report = evaluate(&model, &ds.graph, &bundle, Part::Test, threshold)?;
    report.train_time_s = train_s;
    report.epochs_run = epochs;
    Ok(SeedRun { seed: cfg.seed, split_seed, model, threshold, curve, report })
}

fn append_rows(path: &Path, rows: &[String]) -> Result<(usize, usize), CliError> {
    let existing = if path.exists() { fs::read_to_string(path).map_err(io_at(path))?.lines().count() } else { 0 };
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_at(path))?;
    let mut line = existing;
    if existing == 0 {
        writeln!(f, "{RESULTS_HEADER}").map_err(io_at(path))?;
        line += 1;
    }
    for r in rows {
        writeln!(f, "{r}").map_err(io_at(path))?;
    }
    Ok((line + 1, line + rows.len()))
}

pub fn train_config(kind: ModelKind, config: Option<&Path>, overrides: &[String]) -> Result<TrainConfig, CliError> {
    let mut kv = match config {
        Some(path) => read_kv(path)?,
        None => KeyValues::default(),
    };
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| CliError::Usage(format!("override {o:?} is not key=value")))?;
        kv.set(k.trim(), v.trim());
    }
    Ok(kind.defaults().apply(&kv)?)
}

pub fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let ds = load_dataset(&a.data)?;
    let base = train_config(a.model, a.config.as_deref(), &a.overrides)?;
    if a.model == ModelKind::Seal {
        let bundle = load_or_split(&ds, a.split_seed.unwrap_or(a.seeds.0[0]))?;
        match check_cost(&ds.graph, &bundle, &base, a.cost_limit) {
            Err(e @ ModelError::TooCostly { .. }) if !a.force => return Err(e.into()),
            Err(ModelError::TooCostly { estimate, .. }) => log::warn!("forcing SEAL despite cost estimate {estimate:.0}"),
            Err(e) => return Err(e.into()),
            Ok(estimate) => log::info!("SEAL cost estimate {estimate:.0} node rows per epoch"),
        }
    }
    let out = a.out.clone().unwrap_or_else(|| a.data.join("runs"));
    create_dir(&out)?;
    let runs: Vec<SeedRun> = a
        .seeds
        .0
        .par_iter()
        .map(|&seed| train_one(a.model, &ds, &base.clone().with_seed(seed), a.split_seed.unwrap_or(seed)))
        .collect::<Result<_, _>>()?;
    let name = a.model.name();
    let mut rows = Vec::new();
    for run in &runs {
        let stem = out.join(format!("{name}-s{}", run.seed));
        let ck = run
            .model
            .to_checkpoint()
            .with_meta("threshold", run.threshold)
            .with_meta("split_seed", run.split_seed)
            .with_meta("dataset", &ds.fingerprint);
        ck.save(&stem.with_extension("ckpt"))?;
        let curve_path = stem.with_extension("curve.csv");
        crate::train::write_curve(&run.curve, BufWriter::new(File::create(&curve_path).map_err(io_at(&curve_path))?))?;
        rows.push(run.report.results_row(name, &ds.name, run.seed));
    }
    if runs.len() > 1 {
        let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
        if let Some(mean) = EvalReport::mean(&reports) {
            rows.push(mean.results_row(name, &ds.name, "mean"));
        }
    }
    for r in &rows {
        println!("{r}");
    }
    let results = out.join("results.csv");
    let (first, last) = append_rows(&results, &rows)?;
    let mut config = base.to_key_values();
    config.set("model", name);
    config.set("results_file", results.display());
    config.set("results_lines", format!("{first}..{last}"));
    RunManifest::new("train", config, a.seeds.0.clone(), ds.fingerprint.clone()).write(&out)?;
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let model = Trained::from_checkpoint(&ck)?;
    let ds = load_dataset(&a.data)?;
    let split_seed = match a.split_seed {
        Some(s) => s,
        None => ck.meta_parsed("split_seed").unwrap_or(1),
    };
    let threshold = a.threshold.unwrap_or_else(|| ck.meta_parsed("threshold").unwrap_or(0.5));
    let bundle = load_or_split(&ds, split_seed)?;
    let report = evaluate(&model, &ds.graph, &bundle, Part::Test, threshold)?;
    println!("{report}");
    if let Some(path) = &a.results {
        let name = ck.meta("model")?;
        append_rows(path, &[report.results_row(name, &ds.name, split_seed)])?;
    }
    Ok(())
}

pub fn cmd_replay(a: &ReplayArgs) -> Result<(), CliError> {
    let ds = load_dataset(&a.data)?;
    let (Some(trace), Some(cut)) = (&ds.trace, ds.cut_s) else {
        return Err(CliError::Data(format!("{} has no held-out trace tail (generate with --holdout-frac)", ds.dir.display())));
    };
    let truth = ground_truth_next_cell(trace);
    let (history, events): (Vec<_>, Vec<_>) = truth.into_iter().partition(|e| e.t < cut);
    let (model, threshold) = match &a.checkpoint {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let t = a.threshold.unwrap_or_else(|| ck.meta_parsed("threshold").unwrap_or(0.5));
            (Some(Trained::from_checkpoint(&ck)?), t)
        }
        None => (None, a.threshold.unwrap_or(0.5)),
    };
    let scorer: Box<dyn LinkScorer> = match &model {
        Some(m) => m.scorer(&ds.graph)?,
        None => Box::new(OracleScorer),
    };
    let cfg = ReplayConfig { threshold, pingpong_window_s: a.pingpong_window_s };
    let report = replay(trace, &events, scorer.as_ref(), &cfg)?;
    println!("{report}");
    if let Some(b) = baseline_next_cell(&history, &events) {
        println!("baseline_accuracy={b:.6}");
    }
    if let Some(path) = &a.events {
        report.write_event_log(BufWriter::new(File::create(path).map_err(io_at(path))?))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub factor: f64,
    pub seed: u64,
    pub n_nodes: usize,
    pub n_edges: usize,
    pub epochs: usize,
    pub train_s: f64,
}

/// Trains VGAE for exactly `epochs` epochs on EM-scale scenarios scaled by
/// each factor. Repeats cycle over all runs and the fastest time per run is kept.
pub fn scaling_bench(factors: &[f64], seeds: &[u64], epochs: usize, repeats: usize) -> Result<Vec<BenchRow>, CliError> {
    if epochs == 0 || repeats == 0 {
        return Err(CliError::Usage("epochs and repeats must be positive".into()));
    }
    let mut runs = Vec::new();
    for &factor in factors {
        for &seed in seeds {
            let g = trace_to_graph(&generate_scenario(&ScenarioConfig::scaled_em(factor, seed))?)?;
            let bundle = split_with_negatives(&g, DEFAULT_RATIOS, seed)?;
            let cfg = TrainConfig { max_epochs: epochs, patience: epochs - 1, seed, ..TrainConfig::vgae() };
            let row = BenchRow { factor, seed, n_nodes: g.n_nodes(), n_edges: g.n_edges(), epochs: 0, train_s: f64::INFINITY };
            runs.push((g, bundle, cfg, row));
        }
    }
    for _ in 0..repeats {
        for (g, bundle, cfg, row) in &mut runs {
            let o = train_vgae(g, bundle, cfg)?;
            row.train_s = row.train_s.min(o.train_time_s);
            row.epochs = o.epochs_run;
        }
    }
    Ok(runs.into_iter().map(|(.., row)| row).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares `y = slope · x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit { slope, intercept: my - slope * mx, r2 })
}

pub fn cmd_bench(a: &BenchArgs) -> Result<(), CliError> {
    let rows = scaling_bench(&a.factors, &a.seeds.0, a.epochs, a.repeats)?;
    let mut table = format!("{BENCH_HEADER}\n");
    for r in &rows {
        table += &format!("vgae,{},{},{},{},{},{:.6}\n", r.factor, r.seed, r.n_nodes, r.n_edges, r.epochs, r.train_s);
    }
    print!("{table}");
    let xs: Vec<f64> = rows.iter().map(|r| r.n_nodes as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.train_s).collect();
    if let Some(fit) = linear_fit(&xs, &ys) {
        println!("fit: train_s = {:.3e} * n_nodes + {:.3e}, r2 = {:.4}", fit.slope, fit.intercept, fit.r2);
    }
    if let Some(path) = &a.out {
        fs::write(path, table).map_err(io_at(path))?;
    }
    Ok(())
}
