//! Uniform entry point over every router.

use std::fmt;
use std::str::FromStr;

use gridroute_core::det::{route_with_deadlines, run_variant, DetError, DetVariant};
use gridroute_core::randomized::{run_randomized, RandConfig, RandError};
use gridroute_core::route::RouteResult;
use gridroute_core::{GridSpec, PacketRequest};
use thiserror::Error;

use crate::ntg::nearest_to_go;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algo {
    Det,
    DetDeadline,
    Bufferless,
    LargeCapacity,
    Rand,
    Ntg,
}

impl Algo {
    pub const ALL: [Algo; 6] = [Algo::Det, Algo::DetDeadline, Algo::Bufferless, Algo::LargeCapacity, Algo::Rand, Algo::Ntg];

    /// Whether the outcome depends on the seed.
    pub fn randomized(self) -> bool {
        self == Algo::Rand
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Det => "det",
            Algo::DetDeadline => "det-deadline",
            Algo::Bufferless => "bufferless",
            Algo::LargeCapacity => "large-capacity",
            Algo::Rand => "rand",
            Algo::Ntg => "ntg",
        })
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algo::ALL.into_iter().find(|a| a.to_string() == s).ok_or_else(|| format!("unknown algorithm `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlgoParams {
    pub seed: u64,
    pub gamma: f64,
    pub horizon: Option<u64>,
}

impl Default for AlgoParams {
    fn default() -> Self {
        AlgoParams { seed: 0, gamma: 200.0, horizon: None }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AlgoError {
    #[error(transparent)]
    Det(#[from] DetError),
    #[error(transparent)]
    Rand(#[from] RandError),
    #[error("{0}")]
    Config(String),
    /// A router's own consistency check failed.
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// Runs one algorithm and checks the router's internal counters.
pub fn run_algo(algo: Algo, trace: &[PacketRequest], grid: &GridSpec, p: &AlgoParams) -> Result<RouteResult, AlgoError> {
    let det = |variant: DetVariant| -> Result<RouteResult, AlgoError> {
        let out = if variant == DetVariant::DetDeadline {
            if trace.iter().any(|r| r.deadline.is_none()) {
                return Err(AlgoError::Config("det-deadline needs a finite deadline on every request".into()));
            }
            route_with_deadlines(trace, grid, p.horizon)?
        } else {
            run_variant(variant, trace, grid, p.horizon)?
        };
        let d = &out.diag;
        if d.internal_failures + d.projection_failures + d.preempted_in_bend_tile > 0 {
            return Err(AlgoError::Invariant(format!(
                "internal {} projection {} bend-tile {}",
                d.internal_failures, d.projection_failures, d.preempted_in_bend_tile
            )));
        }
        Ok(out.result)
    };
    match algo {
        Algo::Det => det(DetVariant::Det),
        Algo::DetDeadline => det(DetVariant::DetDeadline),
        Algo::Bufferless => det(DetVariant::Bufferless),
        Algo::LargeCapacity => det(DetVariant::LargeCapacity),
        Algo::Rand => {
            let out = run_randomized(trace, grid, &RandConfig { seed: p.seed, gamma: p.gamma, horizon: p.horizon })?;
            if out.diag.post_injection_failures > 0 {
                return Err(AlgoError::Invariant(format!("{} post-injection failures", out.diag.post_injection_failures)));
            }
            Ok(out.result)
        }
        Algo::Ntg => {
            if grid.d() != 1 {
                return Err(AlgoError::Config("ntg runs on lines only".into()));
            }
            Ok(nearest_to_go(trace, grid))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for a in Algo::ALL {
            assert_eq!(a.to_string().parse::<Algo>(), Ok(a));
        }
        assert!("greedy".parse::<Algo>().is_err());
    }

    #[test]
    fn configuration_errors_surface() {
        let g = GridSpec::line(16, 3, 3).unwrap();
        let trace = [PacketRequest::on_line(0, 1, 4, 0, None)];
        assert!(matches!(run_algo(Algo::DetDeadline, &trace, &g, &AlgoParams::default()), Err(AlgoError::Config(_))));
        assert!(matches!(run_algo(Algo::Bufferless, &trace, &g, &AlgoParams::default()), Err(AlgoError::Det(_))));
        let grid2 = GridSpec::new(vec![4, 4], 1, 1).unwrap();
        assert!(matches!(run_algo(Algo::Ntg, &[], &grid2, &AlgoParams::default()), Err(AlgoError::Config(_))));
    }
}
