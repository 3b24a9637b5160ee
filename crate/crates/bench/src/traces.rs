//! Synthetic request traces.

use std::fmt;
use std::str::FromStr;

use gridroute_core::{GridSpec, PacketRequest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TraceKind {
    /// Independent uniform sources, destinations and times.
    Uniform,
    /// Requests arrive in a few bursts sharing a time step.
    Bursty,
    /// Most requests start at one node.
    DenseSource,
    /// Long packets crossed by short ones that a greedy nearest-first rule
    /// favours. Heuristic; not a proven lower-bound construction.
    GreedyAdversarial,
}

impl TraceKind {
    pub const ALL: [TraceKind; 4] = [TraceKind::Uniform, TraceKind::Bursty, TraceKind::DenseSource, TraceKind::GreedyAdversarial];
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceKind::Uniform => "uniform",
            TraceKind::Bursty => "bursty",
            TraceKind::DenseSource => "dense-source",
            TraceKind::GreedyAdversarial => "greedy-adversarial",
        })
    }
}

impl FromStr for TraceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TraceKind::ALL.into_iter().find(|k| k.to_string() == s).ok_or_else(|| format!("unknown trace kind `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceGenSpec {
    pub kind: TraceKind,
    /// Nodes per dimension.
    pub n: u32,
    pub d: usize,
    pub b: u32,
    pub c: u32,
    pub count: usize,
    pub seed: u64,
    /// Deadline `t + dist + U[0, slack]` when set.
    pub deadline_slack: Option<u64>,
}

impl TraceGenSpec {
    pub fn grid(&self) -> GridSpec {
        GridSpec::new(vec![self.n; self.d], self.b, self.c).expect("valid grid parameters")
    }
}

fn below(rng: &mut ChaCha8Rng, a: &[u32], n: u32) -> Vec<u32> {
    a.iter().map(|&x| rng.gen_range(x..=n)).collect()
}

/// Generates a trace; ids are `0..count` in arrival order.
pub fn generate(spec: &TraceGenSpec) -> Vec<PacketRequest> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, d) = (spec.n, spec.d);
    let span = (spec.count as u64 / 2).max(1);
    let node = |rng: &mut ChaCha8Rng| -> Vec<u32> { (0..d).map(|_| rng.gen_range(1..=n)).collect() };
    let mut reqs: Vec<(Vec<u32>, Vec<u32>, u64)> = Vec::with_capacity(spec.count);
    match spec.kind {
        TraceKind::Uniform => {
            for _ in 0..spec.count {
                let a = node(&mut rng);
                let b = below(&mut rng, &a, n);
                reqs.push((a, b, rng.gen_range(0..span)));
            }
        }
        TraceKind::Bursty => {
            let bursts = (spec.count / 10).max(1);
            let times: Vec<u64> = (0..bursts).map(|_| rng.gen_range(0..span)).collect();
            for _ in 0..spec.count {
                let a = node(&mut rng);
                let b = below(&mut rng, &a, n);
                reqs.push((a, b, times[rng.gen_range(0..bursts)]));
            }
        }
        TraceKind::DenseSource => {
            let hot = node(&mut rng);
            for _ in 0..spec.count {
                let a = if rng.gen_bool(0.7) { hot.clone() } else { node(&mut rng) };
                let b = below(&mut rng, &a, n);
                reqs.push((a, b, rng.gen_range(0..span)));
            }
        }
        TraceKind::GreedyAdversarial => {
            // Every other request rides the full first axis; the rest are one
            // hop long and timed to meet a long packet on its way.
            let mut t = 0;
            while reqs.len() < spec.count {
                let mut a = vec![1; d];
                let mut b = vec![1; d];
                b[0] = n;
                reqs.push((a.clone(), b.clone(), t));
                if reqs.len() < spec.count && n > 1 {
                    let x = if n > 2 { rng.gen_range(2..n) } else { 1 };
                    a[0] = x;
                    b[0] = x + 1;
                    reqs.push((a, b, t + (x - 1) as u64));
                }
                t += 1;
            }
        }
    }
    reqs.sort_by_key(|r| r.2);
    reqs.into_iter()
        .enumerate()
        .map(|(id, (a, b, t))| {
            let dist: u64 = a.iter().zip(&b).map(|(&x, &y)| (y - x) as u64).sum();
            let deadline = spec.deadline_slack.map(|s| t + dist + rng.gen_range(0..=s));
            PacketRequest::new(id as u64, a, b, t, deadline)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use gridroute_core::model::validate_request;
    use proptest::prelude::*;

    #[test]
    fn kinds_round_trip() {
        for k in TraceKind::ALL {
            assert_eq!(k.to_string().parse::<TraceKind>(), Ok(k));
        }
        assert!("zipf".parse::<TraceKind>().is_err());
    }

    proptest! {
        #[test]
        fn generated_requests_are_valid(kind in 0usize..4, n in 2u32..20, d in 1usize..3, count in 0usize..60, seed in any::<u64>(), slack in proptest::option::of(0u64..5)) {
            let spec = TraceGenSpec { kind: TraceKind::ALL[kind], n, d, b: 1, c: 1, count, seed, deadline_slack: slack };
            let grid = spec.grid();
            let trace = generate(&spec);
            prop_assert_eq!(trace.len(), count);
            for (i, r) in trace.iter().enumerate() {
                prop_assert_eq!(r.id, i as u64);
                prop_assert!(validate_request(r, &grid).is_ok(), "{:?}", r);
            }
            prop_assert_eq!(generate(&spec), trace);
        }
    }

    #[test]
    fn dense_source_concentrates() {
        let spec = TraceGenSpec { kind: TraceKind::DenseSource, n: 32, d: 1, b: 1, c: 1, count: 400, seed: 1, deadline_slack: None };
        let trace = generate(&spec);
        let mut counts = std::collections::HashMap::new();
        for r in &trace {
            *counts.entry(r.a.clone()).or_insert(0) += 1;
        }
        assert!(*counts.values().max().unwrap() > 200);
    }
}
