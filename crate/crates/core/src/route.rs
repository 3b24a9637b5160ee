//! Concrete space-time routes shared by all routers and the simulator.

use std::collections::BTreeMap;

use crate::model::{Coord, Outcome, PacketRequest, RunMetrics};
use crate::spacetime::StVertex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Step {
    /// Traverse the link along an axis.
    Forward(usize),
    /// Stay one step in the buffer.
    Store,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PathEnd {
    Deliver,
    Drop,
    /// Still travelling when the run stopped.
    Open,
}

/// Route of one packet from its injection until delivery, drop or horizon.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetailedPath {
    pub id: u64,
    pub src: Coord,
    pub t0: u64,
    pub steps: Vec<Step>,
    /// Track of each step; empty when the router does not use tracks.
    pub tracks: Vec<u8>,
    pub end: PathEnd,
}

impl DetailedPath {
    pub fn new(id: u64, src: Coord, t0: u64) -> Self {
        DetailedPath { id, src, t0, steps: Vec::new(), tracks: Vec::new(), end: PathEnd::Open }
    }

    pub fn end_time(&self) -> u64 {
        self.t0 + self.steps.len() as u64
    }

    /// Space-time vertices visited, one per time step.
    pub fn vertices(&self) -> Vec<StVertex> {
        let mut v = self.src.clone();
        let mut out = vec![StVertex::new(v.clone(), self.t0)];
        for (i, s) in self.steps.iter().enumerate() {
            if let Step::Forward(axis) = s {
                v[*axis] += 1;
            }
            out.push(StVertex::new(v.clone(), self.t0 + i as u64 + 1));
        }
        out
    }

    pub fn end_vertex(&self) -> Coord {
        let mut v = self.src.clone();
        for s in &self.steps {
            if let Step::Forward(axis) = s {
                v[*axis] += 1;
            }
        }
        v
    }

    /// Untilted points visited on a line: `(x, t − x)`.
    pub fn untilted_line(&self) -> Vec<(i64, i64)> {
        self.vertices().iter().map(|sv| (sv.v[0] as i64, sv.t as i64 - sv.v[0] as i64)).collect()
    }
}

/// Outcomes and routes of one router run.
#[derive(Clone, Debug, Default)]
pub struct RouteResult {
    pub label: String,
    pub seed: Option<u64>,
    pub outcomes: BTreeMap<u64, Outcome>,
    pub paths: Vec<DetailedPath>,
}

impl RouteResult {
    pub fn new(label: &str, seed: Option<u64>, trace: &[PacketRequest]) -> Self {
        RouteResult {
            label: label.to_string(),
            seed,
            outcomes: trace.iter().map(|r| (r.id, Outcome::Rejected)).collect(),
            paths: Vec::new(),
        }
    }

    pub fn metrics(&self) -> RunMetrics {
        RunMetrics::from_outcomes(&self.label, self.seed, self.outcomes.values())
    }

    pub fn throughput(&self) -> usize {
        self.outcomes.values().filter(|o| matches!(o, Outcome::Delivered(_))).count()
    }

    /// Records a finished path and the outcome it implies.
    pub fn finish(&mut self, path: DetailedPath) {
        let t = path.end_time();
        let o = match path.end {
            PathEnd::Deliver => Outcome::Delivered(t),
            PathEnd::Drop => Outcome::Preempted(t),
            PathEnd::Open => Outcome::InFlight,
        };
        self.outcomes.insert(path.id, o);
        self.paths.push(path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertices_follow_steps() {
        let mut p = DetailedPath::new(1, vec![2, 1], 3);
        p.steps = vec![Step::Forward(0), Step::Store, Step::Forward(1)];
        let v = p.vertices();
        assert_eq!(v.len(), 4);
        assert_eq!(v[3], StVertex::new(vec![3, 2], 6));
        assert_eq!(p.end_vertex(), vec![3, 2]);
        assert_eq!(p.end_time(), 6);
    }

    #[test]
    fn finish_sets_outcome() {
        let trace = vec![PacketRequest::on_line(4, 1, 2, 0, None)];
        let mut r = RouteResult::new("x", None, &trace);
        assert_eq!(r.outcomes[&4], Outcome::Rejected);
        let mut p = DetailedPath::new(4, vec![1], 0);
        p.steps.push(Step::Forward(0));
        p.end = PathEnd::Deliver;
        r.finish(p);
        assert_eq!(r.outcomes[&4], Outcome::Delivered(1));
        assert_eq!(r.throughput(), 1);
        assert!(r.metrics().balanced());
    }
}
