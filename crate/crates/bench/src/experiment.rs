//! Experiment matrix: generate traces, run algorithms, replay, write CSV.

use std::io::Write;
use std::time::Instant;

use gridroute_core::exec::Executor;
use gridroute_core::sim::replay;

use crate::algos::{run_algo, Algo, AlgoParams};
use crate::config::ExperimentConfig;
use crate::oracle::{brute_force_opt, OracleLimits};
use crate::traces::{generate, TraceGenSpec, TraceKind};

/// One CSV row. For randomized algorithms `throughput` is the mean over the
/// router seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub algo: Algo,
    pub trace: TraceKind,
    pub seed: u64,
    pub n: u32,
    pub d: usize,
    pub b: u32,
    pub c: u32,
    pub throughput: f64,
    pub opt: Option<usize>,
    pub ratio: Option<f64>,
    pub runtime_ms: f64,
    pub mean: f64,
    pub stddev: f64,
}

/// A row that could not be produced.
#[derive(Clone, Debug, PartialEq)]
pub struct RowFailure {
    pub algo: Algo,
    pub trace: TraceKind,
    pub seed: u64,
    pub msg: String,
    /// True for replay violations and router self-check failures.
    pub invariant: bool,
}

#[derive(Clone, Debug, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<Row>,
    pub failures: Vec<RowFailure>,
}

impl ExperimentOutput {
    pub fn has_invariant_failure(&self) -> bool {
        self.failures.iter().any(|f| f.invariant)
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
    (m, v.sqrt())
}

fn run_row(cfg: &ExperimentConfig, algo: Algo, kind: TraceKind, seed: u64) -> Result<Row, RowFailure> {
    let spec = TraceGenSpec { kind, n: cfg.n, d: cfg.d, b: cfg.b, c: cfg.c, count: cfg.count, seed, deadline_slack: cfg.deadline_slack };
    let fail = |msg: String, invariant: bool| RowFailure { algo, trace: kind, seed, msg, invariant };
    let grid = gridroute_core::GridSpec::new(vec![cfg.n; cfg.d], cfg.b, cfg.c).map_err(|e| fail(e.to_string(), false))?;
    let trace = generate(&spec);
    let opt = if cfg.oracle { brute_force_opt(&trace, &grid, &OracleLimits::default()).ok().map(|r| r.opt) } else { None };
    let runs: Vec<u64> =
        if algo.randomized() { (0..cfg.rand_runs).map(|i| seed.wrapping_mul(1_000_003).wrapping_add(i)).collect() } else { vec![seed] };
    let start = Instant::now();
    let mut samples = Vec::with_capacity(runs.len());
    for s in runs {
        let params = AlgoParams { seed: s, gamma: cfg.gamma, horizon: cfg.horizon };
        let res = run_algo(algo, &trace, &grid, &params).map_err(|e| {
            let inv = matches!(e, crate::algos::AlgoError::Invariant(_));
            fail(e.to_string(), inv)
        })?;
        let rep = replay(&grid, &trace, &res.paths, &res.label, None);
        if !rep.ok() {
            return Err(fail(format!("replay: {} violations, first {}", rep.violations.len(), rep.violations[0]), true));
        }
        if rep.outcomes != res.outcomes {
            return Err(fail("replayed outcomes differ from the router's".into(), true));
        }
        let thr = rep.metrics.throughput;
        if let Some(o) = opt {
            if thr > o {
                return Err(fail(format!("throughput {thr} exceeds the optimum {o}"), true));
            }
        }
        samples.push(thr as f64);
    }
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3 / samples.len() as f64;
    let (mean, stddev) = mean_sd(&samples);
    let ratio = opt.filter(|_| mean > 0.0).map(|o| o as f64 / mean);
    Ok(Row { algo, trace: kind, seed, n: cfg.n, d: cfg.d, b: cfg.b, c: cfg.c, throughput: mean, opt, ratio, runtime_ms, mean, stddev })
}

/// Runs every (algorithm, trace kind, seed) combination. Rows are
/// independent and run on `exec`; output order follows the configuration.
pub fn run_experiment(cfg: &ExperimentConfig, exec: Executor) -> ExperimentOutput {
    let mut jobs = Vec::new();
    for &algo in &cfg.algos {
        for &kind in &cfg.kinds {
            for &seed in &cfg.seeds {
                jobs.push((algo, kind, seed));
            }
        }
    }
    let results = exec.map(jobs, |(algo, kind, seed)| run_row(cfg, algo, kind, seed));
    let mut out = ExperimentOutput::default();
    for r in results {
        match r {
            Ok(row) => out.rows.push(row),
            Err(f) => out.failures.push(f),
        }
    }
    out
}

pub const CSV_HEADER: [&str; 13] =
    ["algo", "trace", "seed", "n", "d", "B", "c", "throughput", "opt", "ratio", "runtime_ms", "mean", "stddev"];

pub fn write_csv<W: Write>(rows: &[Row], w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(CSV_HEADER)?;
    let opt_s = |o: Option<String>| o.unwrap_or_default();
    for r in rows {
        wr.write_record([
            r.algo.to_string(),
            r.trace.to_string(),
            r.seed.to_string(),
            r.n.to_string(),
            r.d.to_string(),
            r.b.to_string(),
            r.c.to_string(),
            format!("{}", r.throughput),
            opt_s(r.opt.map(|o| o.to_string())),
            opt_s(r.ratio.map(|x| format!("{x:.6}"))),
            format!("{:.3}", r.runtime_ms),
            format!("{}", r.mean),
            format!("{:.6}", r.stddev),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_row_count() {
        let cfg = ExperimentConfig {
            algos: vec![Algo::Det, Algo::Ntg],
            kinds: vec![TraceKind::Uniform, TraceKind::Bursty],
            seeds: vec![1, 2, 3],
            count: 40,
            ..Default::default()
        };
        let out = run_experiment(&cfg, Executor::Sequential);
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        assert_eq!(out.rows.len(), 12);
        let mut buf = Vec::new();
        write_csv(&out.rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 13);
    }

    #[test]
    fn randomized_rows_aggregate() {
        let cfg = ExperimentConfig {
            algos: vec![Algo::Rand],
            seeds: vec![5],
            n: 64,
            b: 1,
            c: 1,
            count: 200,
            rand_runs: 100,
            gamma: 0.01,
            ..Default::default()
        };
        let out = run_experiment(&cfg, Executor::default());
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        let r = &out.rows[0];
        assert_eq!(r.mean, r.throughput);
        assert!(r.stddev > 0.0);
    }

    #[test]
    fn ratio_uses_oracle() {
        let cfg = ExperimentConfig {
            algos: vec![Algo::Ntg],
            seeds: vec![0, 1, 2, 3],
            n: 8,
            b: 0,
            c: 1,
            count: 8,
            oracle: true,
            ..Default::default()
        };
        let out = run_experiment(&cfg, Executor::Sequential);
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        for r in &out.rows {
            let opt = r.opt.expect("oracle ran");
            if r.throughput > 0.0 {
                assert_eq!(r.ratio, Some(opt as f64 / r.throughput));
            }
            // Nearest-to-go is optimal without buffers.
            assert_eq!(opt as f64, r.throughput);
        }
    }

    #[test]
    fn executors_agree() {
        let cfg = ExperimentConfig { algos: vec![Algo::Det, Algo::Ntg], seeds: (0..6).collect(), count: 60, ..Default::default() };
        let strip = |rows: Vec<Row>| rows.into_iter().map(|r| (r.algo, r.seed, r.throughput)).collect::<Vec<_>>();
        assert_eq!(strip(run_experiment(&cfg, Executor::Sequential).rows), strip(run_experiment(&cfg, Executor::default()).rows));
    }
}
