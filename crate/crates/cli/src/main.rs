//! `metassign`: generate assignment corpora, solve assignments, meta-train
//! and evaluate the gated GCN surrogate.
//!
//! Exit codes: 0 on success, 1 on a runtime error (reported on one line as
//! `error[<kind>]: <message>`), 2 on a usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Args, Parser, Subcommand};
use log::info;

use metassign_core::assign::{solve_ue, Method};
use metassign_core::eval::{self, selftest, MetaTestReport};
use metassign_core::gnn::{read_checkpoint, write_checkpoint};
use metassign_core::meta::{history_csv, meta_train_gnn, HistoryEntry};
use metassign_core::netio::{
    parse_network, parse_nodes, parse_trips, read_dataset, write_dataset, write_network_tntp, write_nodes_tntp,
    write_trips_tntp,
};
use metassign_core::scenario::{generate_dataset, synthetic_network};
use metassign_core::{Error, RoadNetwork, RunConfig};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("JSON error in {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0} of {1} self-test checks failed")]
    SelfTest(usize, usize),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Io { .. } => "io",
            CliError::Json { .. } => "parse",
            CliError::SelfTest(..) => "selftest",
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "metassign", version, about = "Traffic assignment corpora and meta-learned gated GCN surrogates")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML run configuration; missing keys take their defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random stream, overriding the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic network, its base demand and node coordinates as TNTP files
    Synth {
        /// Output directory
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        edges: Option<usize>,
    },
    /// Build a corpus of closure tasks x OD matrices solved to equilibrium
    Generate {
        #[command(flatten)]
        input: NetworkInput,
        /// Dataset file to write
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tasks: Option<usize>,
        #[arg(long)]
        ods: Option<usize>,
    },
    /// Solve one user-equilibrium assignment and write per-edge flows as CSV
    Assign {
        #[command(flatten)]
        input: NetworkInput,
        /// fw, cfw, bfw or bcfw
        #[arg(long)]
        method: Option<Method>,
        /// Comma-separated edge ids to close
        #[arg(long, value_delimiter = ',')]
        closed: Vec<usize>,
        /// File with one present flag (1 open, 0 closed) per edge
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        gap: Option<f64>,
        /// CSV output (edge_id,from,to,flow,cost,gap); stdout if omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Meta-train the gated GCN on a dataset
    MetaTrain {
        #[arg(long, visible_alias = "data")]
        dataset: PathBuf,
        /// Checkpoint to write (parameters with the lowest recorded query loss)
        #[arg(long)]
        out: PathBuf,
        /// Loss history CSV; defaults to `<out>.history.csv`
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Adapt a checkpoint to every held-out task and score it
    MetaTest {
        #[arg(long, visible_alias = "data")]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSON report to write
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a meta-test report as CSV tables and SVG plots
    Report {
        /// JSON report written by `meta-test`
        #[arg(long)]
        report: PathBuf,
        /// Loss history CSV written by `meta-train`
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the built-in oracle checks
    Selftest,
}

#[derive(Args, Debug)]
struct NetworkInput {
    /// TNTP network file
    #[arg(long)]
    net: PathBuf,
    /// TNTP trips file
    #[arg(long)]
    trips: PathBuf,
    /// Optional TNTP node-coordinate file
    #[arg(long)]
    nodes: Option<PathBuf>,
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> CliResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: parent.into(),
            source,
        })?;
    }
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })
}

fn load_config(global: &Global) -> CliResult<RunConfig> {
    let cfg = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    Ok(match global.seed {
        Some(seed) => cfg.with_seed(seed),
        None => cfg,
    })
}

fn load_network(input: &NetworkInput) -> CliResult<(RoadNetwork, metassign_core::OdMatrix)> {
    let mut net = parse_network(&read_text(&input.net)?)?;
    if let Some(nodes) = &input.nodes {
        parse_nodes(&read_text(nodes)?, &mut net)?;
    }
    let od = parse_trips(&read_text(&input.trips)?)?;
    Ok((net, od))
}

fn synth(mut cfg: RunConfig, out_dir: &Path, nodes: Option<usize>, edges: Option<usize>) -> CliResult {
    cfg.synthetic.n_nodes = nodes.unwrap_or(cfg.synthetic.n_nodes);
    cfg.synthetic.n_edges = edges.unwrap_or(cfg.synthetic.n_edges);
    let (net, od) = synthetic_network(&cfg.synthetic)?;
    write_text(&out_dir.join("net.tntp"), &write_network_tntp(&net))?;
    write_text(&out_dir.join("trips.tntp"), &write_trips_tntp(&od))?;
    if let Some(text) = write_nodes_tntp(&net) {
        write_text(&out_dir.join("nodes.tntp"), &text)?;
    }
    println!(
        "wrote {} nodes, {} edges, {:.0} trips to {}",
        net.n_nodes(),
        net.n_edges(),
        od.total(),
        out_dir.display()
    );
    Ok(())
}

fn generate(mut cfg: RunConfig, input: &NetworkInput, out: &Path, tasks: Option<usize>, ods: Option<usize>) -> CliResult {
    cfg.generation.n_tasks = tasks.unwrap_or(cfg.generation.n_tasks);
    cfg.generation.n_ods = ods.unwrap_or(cfg.generation.n_ods);
    cfg.generation.validate()?;
    let (net, od) = load_network(input)?;
    let last_pct = AtomicUsize::new(0);
    let progress = |done: usize, total: usize| {
        let pct = done * 100 / total.max(1);
        if pct / 5 > last_pct.fetch_max(pct / 5, Ordering::Relaxed) {
            eprintln!("generate: {done}/{total} assignments ({pct}%)");
        }
    };
    let ds = generate_dataset(&net, &od, &cfg.generation, Some(&progress))?;
    write_dataset(&ds, out)?;
    println!(
        "wrote {} tasks x {} ODs ({} samples) to {}",
        ds.tasks.len(),
        ds.od_matrices.len(),
        ds.samples.len(),
        out.display()
    );
    Ok(())
}

fn read_mask(path: &Path, n_edges: usize) -> CliResult<Vec<bool>> {
    let text = read_text(path)?;
    let flags: Vec<bool> = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .enumerate()
        .map(|(i, t)| match t {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(Error::Validation {
                row: i + 1,
                msg: format!("{}: mask flag {other:?} is not 0 or 1", path.display()),
            }),
        })
        .collect::<Result<_, _>>()?;
    if flags.len() != n_edges {
        return Err(Error::Validation {
            row: flags.len(),
            msg: format!("{}: {} mask flags for {n_edges} edges", path.display(), flags.len()),
        }
        .into());
    }
    Ok(flags)
}

struct AssignArgs<'a> {
    method: Option<Method>,
    closed: &'a [usize],
    mask: Option<&'a Path>,
    gap: Option<f64>,
    out: Option<&'a Path>,
}

fn assign(cfg: RunConfig, input: &NetworkInput, args: AssignArgs<'_>) -> CliResult {
    let AssignArgs {
        method,
        closed,
        mask,
        gap,
        out,
    } = args;
    let (net, od) = load_network(input)?;
    let mut options = cfg.generation.solver.clone();
    options.method = method.unwrap_or(options.method);
    options.gap_tolerance = gap.unwrap_or(options.gap_tolerance);
    let mut present = match mask {
        Some(path) => read_mask(path, net.n_edges())?,
        None => vec![true; net.n_edges()],
    };
    for &e in closed {
        *present.get_mut(e).ok_or(Error::Index {
            op: "closed edge",
            index: e,
            len: net.n_edges(),
        })? = false;
    }
    let r = solve_ue(&net, &present, &od, &options)?;
    eprintln!(
        "{}: relative gap {:.3e} after {} iterations (converged: {}), objective {}",
        options.method, r.relative_gap, r.iterations, r.converged, r.objective
    );
    let mut csv = String::from("edge_id,from,to,flow,cost,gap\n");
    for e in net.edges() {
        let (from, to) = (net.nodes()[e.from_node].original_id, net.nodes()[e.to_node].original_id);
        csv.push_str(&format!(
            "{},{from},{to},{},{},{}\n",
            e.edge_id, r.flows[e.edge_id], r.costs[e.edge_id], r.relative_gap
        ));
    }
    match out {
        Some(path) => write_text(path, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn meta_train_cmd(mut cfg: RunConfig, dataset: &Path, out: &Path, history: Option<&Path>, iterations: Option<usize>) -> CliResult {
    cfg.meta.meta_iterations = iterations.unwrap_or(cfg.meta.meta_iterations);
    cfg.meta.validate()?;
    let ds = read_dataset(dataset)?;
    let every = (cfg.meta.meta_iterations / 20).max(1);
    let log_step = |h: &HistoryEntry| {
        if h.iteration.is_multiple_of(every) || h.iteration + 1 == cfg.meta.meta_iterations {
            info!("iteration {}: mean query loss {:.4e} ({:.1}s)", h.iteration, h.mean_query_loss, h.wall_time_s);
        }
    };
    let (best, state) = meta_train_gnn(&ds, &cfg.model, &cfg.meta, log_step)?;
    write_checkpoint(&best, out)?;
    let history_path = history.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".history.csv");
        PathBuf::from(p)
    });
    write_text(&history_path, &history_csv(&state.history))?;
    println!(
        "best mean query loss {:.4e}; checkpoint {}, history {}",
        state.best_loss,
        out.display(),
        history_path.display()
    );
    Ok(())
}

fn meta_test_cmd(cfg: RunConfig, dataset: &Path, checkpoint: &Path, out: &Path) -> CliResult {
    let ds = read_dataset(dataset)?;
    let params = read_checkpoint(checkpoint)?;
    let report = eval::meta_test(&params, &ds, &cfg.meta)?;
    for t in &report.per_task {
        println!(
            "task {}: R² {:.3} over {} points, query loss {:.4e} -> {:.4e}",
            t.task_id, t.r_squared, t.n_points, t.query_loss_before, t.query_loss_after
        );
    }
    let json = serde_json::to_string_pretty(&report).map_err(|source| CliError::Json {
        path: out.into(),
        source,
    })?;
    write_text(out, &json)
}

fn parse_history(path: &Path) -> CliResult<Vec<HistoryEntry>> {
    let text = read_text(path)?;
    let bad = |row: usize, msg: &str| {
        CliError::Core(Error::Validation {
            row,
            msg: format!("{}: {msg}", path.display()),
        })
    };
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(bad(i + 1, "expected 3 columns"));
            }
            Ok(HistoryEntry {
                iteration: cols[0].trim().parse().map_err(|_| bad(i + 1, "bad iteration"))?,
                mean_query_loss: cols[1].trim().parse().map_err(|_| bad(i + 1, "bad loss"))?,
                wall_time_s: cols[2].trim().parse().map_err(|_| bad(i + 1, "bad wall time"))?,
            })
        })
        .collect()
}

fn report_cmd(report: &Path, history: Option<&Path>, out_dir: &Path) -> CliResult {
    let report: MetaTestReport = serde_json::from_str(&read_text(report)?).map_err(|source| CliError::Json {
        path: report.into(),
        source,
    })?;
    let history = match history {
        Some(p) => parse_history(p)?,
        None => Vec::new(),
    };
    let files = eval::write_report(&report, &history, out_dir)?;
    println!("wrote {} files to {}", files.len(), out_dir.display());
    Ok(())
}

fn run_selftest() -> CliResult {
    let checks = selftest::run();
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::SelfTest(failed, checks.len()));
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let cfg = load_config(&cli.global)?;
    match &cli.command {
        Command::Synth { out_dir, nodes, edges } => synth(cfg, out_dir, *nodes, *edges),
        Command::Generate { input, out, tasks, ods } => generate(cfg, input, out, *tasks, *ods),
        Command::Assign {
            input,
            method,
            closed,
            mask,
            gap,
            out,
        } => assign(
            cfg,
            input,
            AssignArgs {
                method: *method,
                closed,
                mask: mask.as_deref(),
                gap: *gap,
                out: out.as_deref(),
            },
        ),
        Command::MetaTrain {
            dataset,
            out,
            history,
            iterations,
        } => meta_train_cmd(cfg, dataset, out, history.as_deref(), *iterations),
        Command::MetaTest { dataset, checkpoint, out } => meta_test_cmd(cfg, dataset, checkpoint, out),
        Command::Report { report, history, out_dir } => report_cmd(report, history.as_deref(), out_dir),
        Command::Selftest => run_selftest(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.kind());
            ExitCode::from(1)
        }
    }
}
