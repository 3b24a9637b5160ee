//! Command-line front end: trace generation, simulation, exact optimum and
//! experiment matrices.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 invariant violation.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use gridroute_bench::config::ExperimentConfig;
use gridroute_bench::experiment::{run_experiment, write_csv};
use gridroute_bench::oracle::{brute_force_opt, OracleLimits};
use gridroute_bench::traces::{generate, TraceGenSpec, TraceKind};
use gridroute_bench::{run_algo, Algo, AlgoParams};
use gridroute_core::exec::Executor;
use gridroute_core::model::{emit_trace, parse_trace};
use gridroute_core::route::RouteResult;
use gridroute_core::sim::replay;
use gridroute_core::{GridSpec, Outcome, PacketRequest};

#[derive(Parser)]
#[command(name = "gridroute", version, about = "Online packet routing on lines and grids with bounded buffers")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Copy)]
struct GridArgs {
    /// Nodes per dimension.
    #[arg(long)]
    n: u32,
    #[arg(long, default_value_t = 1)]
    d: usize,
    /// Buffer size per node.
    #[arg(long = "B")]
    b: u32,
    /// Link capacity.
    #[arg(long)]
    c: u32,
}

impl GridArgs {
    fn grid(&self) -> Result<GridSpec, String> {
        GridSpec::new(vec![self.n; self.d], self.b, self.c).map_err(|e| format!("bad grid: {e:?}"))
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic trace.
    GenTrace {
        #[arg(long)]
        kind: TraceKind,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Give every request a deadline with up to this much slack.
        #[arg(long)]
        deadline_slack: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one algorithm on a trace, replay it and write per-request outcomes.
    Simulate {
        #[arg(long)]
        algo: Algo,
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200.0)]
        gamma: f64,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Per-step event log.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Compute the optimal throughput of a tiny instance.
    Oracle {
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment matrix from a `key = value` file.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run rows one after another.
        #[arg(long)]
        sequential: bool,
    },
}

enum Failure {
    Usage(String),
    Invariant(String),
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn read_trace(path: &PathBuf) -> Result<Vec<PacketRequest>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    parse_trace(&text).map_err(|e| Failure::Usage(format!("{}: line {}: {}", path.display(), e.line, e.msg)))
}

fn write_outcomes(path: &PathBuf, res: &RouteResult) -> Result<(), Failure> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "id,outcome,time")?;
    for (id, o) in &res.outcomes {
        let (kind, t) = match o {
            Outcome::Delivered(t) => ("delivered", t.to_string()),
            Outcome::Preempted(t) => ("preempted", t.to_string()),
            Outcome::Rejected => ("rejected", String::new()),
            Outcome::InFlight => ("in-flight", String::new()),
        };
        writeln!(w, "{id},{kind},{t}")?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::GenTrace { kind, grid, count, seed, deadline_slack, out } => {
            grid.grid().map_err(Failure::Usage)?;
            let spec = TraceGenSpec { kind, n: grid.n, d: grid.d, b: grid.b, c: grid.c, count, seed, deadline_slack };
            fs::write(&out, emit_trace(&generate(&spec)))?;
        }
        Cmd::Simulate { algo, trace, grid, seed, gamma, horizon, out, events } => {
            let g = grid.grid().map_err(Failure::Usage)?;
            let reqs = read_trace(&trace)?;
            let res = run_algo(algo, &reqs, &g, &AlgoParams { seed, gamma, horizon }).map_err(|e| match e {
                gridroute_bench::algos::AlgoError::Invariant(m) => Failure::Invariant(m),
                other => Failure::Usage(other.to_string()),
            })?;
            let mut log_file = events.map(|p| fs::File::create(p).map(BufWriter::new)).transpose()?;
            let rep = replay(&g, &reqs, &res.paths, &res.label, log_file.as_mut().map(|w| w as &mut dyn Write));
            if let Some(mut w) = log_file {
                w.flush()?;
            }
            write_outcomes(&out, &res)?;
            let m = &rep.metrics;
            println!("{algo}: {} of {} delivered, {} rejected, {} preempted", m.throughput, m.total, m.rejected, m.preempted);
            if !rep.ok() {
                return Err(Failure::Invariant(format!("{} replay violations, first {}", rep.violations.len(), rep.violations[0])));
            }
            if rep.outcomes != res.outcomes {
                return Err(Failure::Invariant("replayed outcomes differ from the router's".into()));
            }
        }
        Cmd::Oracle { trace, grid, out } => {
            let g = grid.grid().map_err(Failure::Usage)?;
            let reqs = read_trace(&trace)?;
            let r = brute_force_opt(&reqs, &g, &OracleLimits::default()).map_err(|e| Failure::Usage(e.to_string()))?;
            write_outcomes(&out, &r.witness)?;
            println!("opt = {} ({} states, {} memo hits)", r.opt, r.stats.states, r.stats.memo_hits);
            if !replay(&g, &reqs, &r.witness.paths, "oracle", None).ok() {
                return Err(Failure::Invariant("oracle witness does not replay".into()));
            }
        }
        Cmd::Bench { config, out, sequential } => {
            let text = fs::read_to_string(&config).map_err(|e| Failure::Usage(format!("{}: {e}", config.display())))?;
            let cfg = ExperimentConfig::parse(&text).map_err(|e| Failure::Usage(e.to_string()))?;
            let exec = if sequential { Executor::Sequential } else { Executor::default() };
            let res = run_experiment(&cfg, exec);
            write_csv(&res.rows, BufWriter::new(fs::File::create(&out)?)).map_err(|e| Failure::Usage(e.to_string()))?;
            for f in &res.failures {
                eprintln!("row {} {} seed {}: {}", f.algo, f.trace, f.seed, f.msg);
            }
            println!("{} rows written, {} failed", res.rows.len(), res.failures.len());
            if res.has_invariant_failure() {
                return Err(Failure::Invariant("at least one row violated an invariant".into()));
            }
            if !res.failures.is_empty() {
                return Err(Failure::Usage("some rows could not run".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Invariant(m)) => {
            eprintln!("invariant violation: {m}");
            ExitCode::from(2)
        }
    }
}
