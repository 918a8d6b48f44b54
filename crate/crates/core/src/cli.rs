//! Command-line front end. Every command first writes its fully resolved
//! configuration as one JSON line, so a run can be replayed from its output.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cluster::partition_graph;
use crate::data::resolve_dataset;
use crate::error::{Error, Result};
use crate::graph::AdjacencyMode;
use crate::model::{write_checkpoint, Arch, OptimizerKind};
use crate::orchestrator::{comm_cost, train, JsonlWriter, Mode, Schedule, TrainConfig, TrainedModel};
use crate::theory::{kernel_report, run_theory_experiment, TheoryConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "gist", version, about = "Graph independent subnetwork training for GCNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and stream metrics as JSON Lines.
    Train(TrainArgs),
    /// Partition a graph into mini-batch clusters.
    Cluster(ClusterArgs),
    /// Kernel matrices, their smallest eigenvalues and the assumption checks.
    Kernel(KernelArgs),
    /// One-hidden-layer masked training run with the predicted envelope.
    TheoryRun(TheoryArgs),
    /// Scalars exchanged per synchronisation round.
    CommCost(CommArgs),
}

fn parse_list(s: &str) -> std::result::Result<Vec<usize>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect()
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset directory, or `sbm:key=value,...` / `regular:key=value,...`.
    #[arg(long)]
    dataset: String,
    #[arg(long, value_enum, default_value = "gcn")]
    arch: Arch,
    /// Hidden widths, comma separated.
    #[arg(long, value_parser = parse_list, default_value = "256,256")]
    hidden: std::vec::Vec<usize>,
    #[arg(long, value_enum, default_value = "gist")]
    mode: Mode,
    #[arg(long = "sub-gcns", default_value_t = 1)]
    sub_gcns: usize,
    #[arg(long = "local-iters", default_value_t = 20)]
    local_iters: usize,
    #[arg(long, default_value_t = 1)]
    clusters: usize,
    #[arg(long = "batch-clusters", default_value_t = 1)]
    batch_clusters: usize,
    #[arg(long, default_value_t = 400)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, value_enum, default_value = "adam")]
    optimizer: OptimizerKind,
    #[arg(long, value_enum, default_value = "step")]
    schedule: Schedule,
    #[arg(long = "partition-input")]
    partition_input: bool,
    #[arg(long, value_enum, default_value = "renorm")]
    adjacency: AdjacencyMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "eval-every", default_value_t = 10)]
    eval_every: usize,
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    #[arg(long = "weight-decay", default_value_t = 0.0)]
    weight_decay: f64,
    /// Keep raw features instead of ℓ1-normalising rows.
    #[arg(long = "no-row-normalize")]
    no_row_normalize: bool,
    /// Worker threads; 0 uses one per sub-network up to the core count.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write the trained model as a binary checkpoint.
    #[arg(long = "save-model")]
    save_model: Option<PathBuf>,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            mode: self.mode,
            arch: self.arch,
            hidden: self.hidden.clone(),
            m: self.sub_gcns,
            zeta: self.local_iters,
            clusters: self.clusters,
            batch_clusters: self.batch_clusters,
            epochs: self.epochs,
            lr: self.lr,
            optimizer: self.optimizer,
            schedule: self.schedule,
            partition_input: self.partition_input,
            adjacency: self.adjacency,
            seed: self.seed,
            eval_every: self.eval_every,
            dropout: self.dropout,
            weight_decay: self.weight_decay,
            row_normalize: !self.no_row_normalize,
            threads: self.threads,
        }
    }
}

#[derive(Args, Debug)]
struct ClusterArgs {
    #[arg(long)]
    dataset: String,
    #[arg(long, default_value_t = 1)]
    clusters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Destination for `node \t cluster` lines.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct KernelArgs {
    #[arg(long)]
    dataset: String,
    #[arg(long = "sub-gcns", default_value_t = 1)]
    sub_gcns: usize,
    #[arg(long, default_value_t = 4096)]
    d1: usize,
    /// Include the full kernel matrices in the report.
    #[arg(long)]
    matrices: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TheoryArgs {
    #[arg(long)]
    dataset: String,
    #[arg(long, default_value_t = 4096)]
    d1: usize,
    #[arg(long = "sub-gcns", default_value_t = 2)]
    sub_gcns: usize,
    #[arg(long = "local-iters", default_value_t = 5)]
    local_iters: usize,
    #[arg(long, default_value_t = 200)]
    rounds: usize,
    #[arg(long, default_value_t = 0.05)]
    eta: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run even if the graph fails the assumption checks.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CommArgs {
    /// Layer widths including input and output, comma separated.
    #[arg(long, value_parser = parse_list)]
    dims: std::vec::Vec<usize>,
    #[arg(long = "sub-gcns", default_value_t = 1)]
    sub_gcns: usize,
    #[arg(long, value_enum, default_value = "gist")]
    mode: Mode,
    #[arg(long, value_enum, default_value = "gcn")]
    arch: Arch,
    #[arg(long = "partition-input")]
    partition_input: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn open_output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn json_line(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

#[derive(Serialize)]
struct Echo<'a, C: Serialize> {
    command: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<&'a str>,
    config: &'a C,
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = a.config();
    if a.save_model.is_some() && cfg.mode == Mode::Ensemble {
        return Err(Error::Config("--save-model stores a single network; ensembles are not supported".into()));
    }
    // catch contradictory flags before touching the dataset
    if cfg.mode == Mode::Single && cfg.m != 1 {
        return Err(Error::Config(format!("mode single runs one model, but --sub-gcns {}", cfg.m)));
    }
    let bundle = resolve_dataset(&a.dataset)?;
    cfg.validate(bundle.graph.num_features(), bundle.graph.num_classes())?;
    let mut out = open_output(a.output.as_ref())?;
    json_line(&mut out, &Echo { command: "train", dataset: Some(&a.dataset), config: &cfg })?;
    let mut writer = JsonlWriter(&mut out);
    let result = train(&cfg, &bundle.graph, &mut writer)?;
    out.flush()?;
    if let (Some(path), TrainedModel::Single(model)) = (&a.save_model, &result.model) {
        write_checkpoint(model, BufWriter::new(File::create(path)?))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ClusterConfig {
    clusters: usize,
    seed: u64,
}

#[derive(Serialize)]
struct ClusterSummary {
    sizes: Vec<usize>,
    cut_edges: usize,
}

fn cmd_cluster(a: &ClusterArgs) -> Result<()> {
    if a.clusters == 0 {
        return Err(Error::Config("--clusters must be at least 1".into()));
    }
    let bundle = resolve_dataset(&a.dataset)?;
    let g = &bundle.graph;
    if a.clusters > g.num_nodes() {
        return Err(Error::Config(format!("{} clusters for {} nodes", a.clusters, g.num_nodes())));
    }
    let mut stdout = open_output(None)?;
    let cfg = ClusterConfig { clusters: a.clusters, seed: a.seed };
    json_line(&mut stdout, &Echo { command: "cluster", dataset: Some(&a.dataset), config: &cfg })?;
    let clustering = partition_graph(g, a.clusters, &mut ChaCha8Rng::seed_from_u64(a.seed))?;
    json_line(&mut stdout, &ClusterSummary { sizes: clustering.sizes(), cut_edges: clustering.cut_edges(g) })?;
    stdout.flush()?;
    if let Some(path) = &a.output {
        let mut f = BufWriter::new(File::create(path)?);
        for (v, c) in clustering.assignment().iter().enumerate() {
            writeln!(f, "{v}\t{c}")?;
        }
        f.flush()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct KernelConfig {
    m: usize,
    d1: usize,
    matrices: bool,
}

fn cmd_kernel(a: &KernelArgs) -> Result<()> {
    if a.sub_gcns == 0 || a.d1 == 0 {
        return Err(Error::Config("--sub-gcns and --d1 must be at least 1".into()));
    }
    let bundle = resolve_dataset(&a.dataset)?;
    let mut out = open_output(a.output.as_ref())?;
    let cfg = KernelConfig { m: a.sub_gcns, d1: a.d1, matrices: a.matrices };
    json_line(&mut out, &Echo { command: "kernel", dataset: Some(&a.dataset), config: &cfg })?;
    let report = kernel_report(&bundle.graph, a.sub_gcns, a.d1)?;
    let mut value = serde_json::to_value(&report)?;
    if !a.matrices {
        if let Some(obj) = value.as_object_mut() {
            obj.remove("h_inf");
            obj.remove("g_inf");
        }
    }
    json_line(&mut out, &value)?;
    out.flush()?;
    Ok(())
}

fn cmd_theory(a: &TheoryArgs) -> Result<()> {
    let cfg = TheoryConfig {
        d1: a.d1,
        m: a.sub_gcns,
        zeta: a.local_iters,
        rounds: a.rounds,
        eta: a.eta,
        gamma: a.gamma,
        delta: a.delta,
        seed: a.seed,
        force: a.force,
    };
    if cfg.m == 0 || cfg.d1 == 0 || !(cfg.eta > 0.0) || !(cfg.gamma > 0.0 && cfg.gamma < 1.0) {
        return Err(Error::Config("need --sub-gcns >= 1, --d1 >= 1, --eta > 0 and --gamma in (0, 1)".into()));
    }
    let bundle = resolve_dataset(&a.dataset)?;
    let mut out = open_output(a.output.as_ref())?;
    json_line(&mut out, &Echo { command: "theory-run", dataset: Some(&a.dataset), config: &cfg })?;
    let run = run_theory_experiment(&cfg, &bundle.graph)?;
    log::info!("lambda0 = {:.6e}, rate = {:.9}, plateau = {:.6}", run.lambda0, run.rate, run.plateau);
    for rec in &run.records {
        json_line(&mut out, rec)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CommConfig<'a> {
    dims: &'a [usize],
    m: usize,
    mode: Mode,
    arch: Arch,
    partition_input: bool,
}

fn cmd_comm(a: &CommArgs) -> Result<()> {
    if a.dims.len() < 2 || a.dims.contains(&0) || a.sub_gcns == 0 {
        return Err(Error::Config("--dims needs at least two positive widths and --sub-gcns >= 1".into()));
    }
    if a.mode == Mode::Single && a.sub_gcns != 1 {
        return Err(Error::Config(format!("mode single runs one model, but --sub-gcns {}", a.sub_gcns)));
    }
    let mut out = open_output(a.output.as_ref())?;
    let cfg = CommConfig {
        dims: &a.dims,
        m: a.sub_gcns,
        mode: a.mode,
        arch: a.arch,
        partition_input: a.partition_input,
    };
    json_line(&mut out, &Echo { command: "comm-cost", dataset: None, config: &cfg })?;
    json_line(&mut out, &comm_cost(a.mode, a.arch, &a.dims, a.sub_gcns, a.partition_input))?;
    out.flush()?;
    Ok(())
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Kernel(a) => cmd_kernel(a),
        Command::TheoryRun(a) => cmd_theory(a),
        Command::CommCost(a) => cmd_comm(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) if e.is_config() => {
            eprintln!("gist: configuration error: {e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("gist: error: {e}");
            EXIT_RUNTIME
        }
    }
}
