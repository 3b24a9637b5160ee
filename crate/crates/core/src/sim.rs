//! Synchronous store-and-forward simulator used as an independent verifier.
//!
//! In one step a node sees the packets arriving on its in-links, its buffered
//! packets and its local injections. It may forward at most `c` packets per
//! out-link, keep at most `B` in its buffer, deliver packets addressed to it
//! and drop the rest. A forwarded packet appears at the neighbour one step
//! later.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use crate::model::{Coord, GridSpec, Outcome, PacketRequest, RunMetrics};
use crate::route::{DetailedPath, PathEnd, Step};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Forward(usize),
    Store,
    Deliver,
    Drop,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    LinkOverload { axis: usize, load: u32 },
    BufferOverflow { load: u32 },
    NoSuchLink { axis: usize },
    WrongDestination { id: u64 },
    Late { id: u64, deadline: u64 },
    Undecided { id: u64 },
    UnknownPacket { id: u64 },
    Duplicate { id: u64 },
    BadInjection { id: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub t: u64,
    pub location: Coord,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} at {:?}: {:?}", self.t, self.location, self.kind)
    }
}

#[derive(Clone, Debug)]
struct Live {
    v: Coord,
    dest: Coord,
    deadline: Option<u64>,
}

/// Packets in the network at the start of the current step.
#[derive(Clone, Debug)]
pub struct SimState {
    pub grid: GridSpec,
    pub t: u64,
    live: BTreeMap<u64, Live>,
    seen: BTreeSet<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepReport {
    pub t: u64,
    pub transmits: BTreeMap<(Coord, usize), u32>,
    pub buffers: BTreeMap<Coord, u32>,
    pub deliveries: Vec<u64>,
    pub drops: Vec<u64>,
    pub violations: Vec<Violation>,
}

/// A packet entering the network at its source during a step.
#[derive(Clone, Debug)]
pub struct Injection {
    pub id: u64,
    pub at: Coord,
    pub dest: Coord,
    pub deadline: Option<u64>,
}

impl SimState {
    pub fn new(grid: GridSpec, t0: u64) -> Self {
        SimState { grid, t: t0, live: BTreeMap::new(), seen: BTreeSet::new() }
    }

    pub fn in_network(&self) -> usize {
        self.live.len()
    }

    pub fn position(&self, id: u64) -> Option<&Coord> {
        self.live.get(&id).map(|l| &l.v)
    }

    /// Takes a packet out of the simulation without a decision; used for
    /// packets still travelling when a run stops.
    pub fn retire(&mut self, id: u64) -> bool {
        self.live.remove(&id).is_some()
    }
}

/// Executes one synchronous step. Missing decisions count as violations and
/// the packet is dropped.
pub fn step(state: &mut SimState, injections: &[Injection], decisions: &BTreeMap<u64, Decision>) -> StepReport {
    let t = state.t;
    let mut rep = StepReport { t, ..Default::default() };
    for inj in injections {
        if !state.seen.insert(inj.id) {
            rep.violations.push(Violation { t, location: inj.at.clone(), kind: ViolationKind::Duplicate { id: inj.id } });
            continue;
        }
        if !state.grid.contains(&inj.at) {
            rep.violations.push(Violation { t, location: inj.at.clone(), kind: ViolationKind::BadInjection { id: inj.id } });
            continue;
        }
        state.live.insert(inj.id, Live { v: inj.at.clone(), dest: inj.dest.clone(), deadline: inj.deadline });
    }
    for (&id, _) in decisions.iter().filter(|(id, _)| !state.live.contains_key(id)) {
        rep.violations.push(Violation { t, location: vec![], kind: ViolationKind::UnknownPacket { id } });
    }

    let mut next = BTreeMap::new();
    for (id, p) in std::mem::take(&mut state.live) {
        let d = match decisions.get(&id) {
            Some(d) => *d,
            None => {
                rep.violations.push(Violation { t, location: p.v.clone(), kind: ViolationKind::Undecided { id } });
                Decision::Drop
            }
        };
        match d {
            Decision::Forward(axis) => {
                if axis >= p.v.len() || p.v[axis] >= state.grid.dims[axis] {
                    rep.violations.push(Violation { t, location: p.v.clone(), kind: ViolationKind::NoSuchLink { axis } });
                    rep.drops.push(id);
                    continue;
                }
                *rep.transmits.entry((p.v.clone(), axis)).or_insert(0) += 1;
                let mut w = p.v.clone();
                w[axis] += 1;
                next.insert(id, Live { v: w, ..p });
            }
            Decision::Store => {
                *rep.buffers.entry(p.v.clone()).or_insert(0) += 1;
                next.insert(id, p);
            }
            Decision::Deliver => {
                if p.v != p.dest {
                    rep.violations.push(Violation { t, location: p.v.clone(), kind: ViolationKind::WrongDestination { id } });
                    rep.drops.push(id);
                } else {
                    if let Some(dl) = p.deadline {
                        if t > dl {
                            rep.violations.push(Violation { t, location: p.v.clone(), kind: ViolationKind::Late { id, deadline: dl } });
                        }
                    }
                    rep.deliveries.push(id);
                }
            }
            Decision::Drop => rep.drops.push(id),
        }
    }
    for ((v, axis), &load) in &rep.transmits {
        if load > state.grid.c {
            rep.violations.push(Violation { t, location: v.clone(), kind: ViolationKind::LinkOverload { axis: *axis, load } });
        }
    }
    for (v, &load) in &rep.buffers {
        if load > state.grid.b {
            rep.violations.push(Violation { t, location: v.clone(), kind: ViolationKind::BufferOverflow { load } });
        }
    }
    state.live = next;
    state.t += 1;
    rep
}

#[derive(Clone, Debug, Default)]
pub struct ReplayReport {
    pub metrics: RunMetrics,
    pub outcomes: BTreeMap<u64, Outcome>,
    pub violations: Vec<Violation>,
    /// Largest per-step usage seen on any link and any buffer.
    pub max_link_load: u32,
    pub max_buffer_load: u32,
    /// Whether any packet was ever stored.
    pub used_buffers: bool,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn log_line(log: &mut Option<&mut dyn Write>, t: u64, kind: &str, payload: String) {
    if let Some(w) = log.as_deref_mut() {
        let _ = writeln!(w, "{t} {kind} {payload}");
    }
}

/// Replays router output step by step. Requests without a path are counted as
/// rejected.
pub fn replay(
    grid: &GridSpec,
    trace: &[PacketRequest],
    paths: &[DetailedPath],
    label: &str,
    mut log: Option<&mut dyn Write>,
) -> ReplayReport {
    let reqs: BTreeMap<u64, &PacketRequest> = trace.iter().map(|r| (r.id, r)).collect();
    let mut report = ReplayReport::default();
    let mut outcomes: BTreeMap<u64, Outcome> = trace.iter().map(|r| (r.id, Outcome::Rejected)).collect();

    let mut injections: BTreeMap<u64, Vec<Injection>> = BTreeMap::new();
    let mut decisions: BTreeMap<u64, BTreeMap<u64, Decision>> = BTreeMap::new();
    let mut open_ends: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    let mut seen_paths = BTreeSet::new();
    let mut t_end = 0;
    for p in paths {
        let Some(req) = reqs.get(&p.id) else {
            report.violations.push(Violation { t: p.t0, location: p.src.clone(), kind: ViolationKind::UnknownPacket { id: p.id } });
            continue;
        };
        if !seen_paths.insert(p.id) {
            report.violations.push(Violation { t: p.t0, location: p.src.clone(), kind: ViolationKind::Duplicate { id: p.id } });
            continue;
        }
        if p.src != req.a || p.t0 != req.t {
            report.violations.push(Violation { t: p.t0, location: p.src.clone(), kind: ViolationKind::BadInjection { id: p.id } });
            continue;
        }
        outcomes.insert(p.id, Outcome::InFlight);
        if p.end == PathEnd::Open && p.steps.is_empty() {
            continue;
        }
        injections.entry(p.t0).or_default().push(Injection { id: p.id, at: p.src.clone(), dest: req.b.clone(), deadline: req.deadline });
        for (i, s) in p.steps.iter().enumerate() {
            let d = match s {
                Step::Forward(axis) => Decision::Forward(*axis),
                Step::Store => Decision::Store,
            };
            decisions.entry(p.t0 + i as u64).or_default().insert(p.id, d);
        }
        let end = p.end_time();
        match p.end {
            PathEnd::Deliver => {
                decisions.entry(end).or_default().insert(p.id, Decision::Deliver);
            }
            PathEnd::Drop => {
                decisions.entry(end).or_default().insert(p.id, Decision::Drop);
            }
            PathEnd::Open => open_ends.entry(end).or_default().push(p.id),
        }
        t_end = t_end.max(end);
    }

    let t0 = injections.keys().next().copied().unwrap_or(0);
    let mut state = SimState::new(grid.clone(), t0);
    let empty = BTreeMap::new();
    while state.t <= t_end && (state.in_network() > 0 || injections.range(state.t..).next().is_some()) {
        let t = state.t;
        let inj = injections.remove(&t).unwrap_or_default();
        for i in &inj {
            log_line(&mut log, t, "inject", format!("{} {:?}", i.id, i.at));
        }
        if let Some(ids) = open_ends.remove(&t) {
            for id in ids {
                state.retire(id);
            }
        }
        let dec = decisions.get(&t).unwrap_or(&empty);
        let rep = step(&mut state, &inj, dec);
        for ((v, axis), &load) in &rep.transmits {
            report.max_link_load = report.max_link_load.max(load);
            log_line(&mut log, t, "forward", format!("{v:?} axis={axis} load={load}"));
        }
        for (v, &load) in &rep.buffers {
            report.max_buffer_load = report.max_buffer_load.max(load);
            report.used_buffers = true;
            log_line(&mut log, t, "store", format!("{v:?} load={load}"));
        }
        for &id in &rep.deliveries {
            outcomes.insert(id, Outcome::Delivered(t));
            log_line(&mut log, t, "deliver", id.to_string());
        }
        for &id in &rep.drops {
            outcomes.insert(id, Outcome::Preempted(t));
            log_line(&mut log, t, "drop", id.to_string());
        }
        for v in &rep.violations {
            log_line(&mut log, t, "violation", v.to_string());
        }
        report.violations.extend(rep.violations);
        if state.t > t_end {
            break;
        }
    }
    report.metrics = RunMetrics::from_outcomes(label, None, outcomes.values());
    report.outcomes = outcomes;
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: u32, b: u32, c: u32) -> GridSpec {
        GridSpec::line(n, b, c).unwrap()
    }

    fn path(id: u64, src: u32, t0: u64, steps: &[Step], end: PathEnd) -> DetailedPath {
        DetailedPath { id, src: vec![src], t0, steps: steps.to_vec(), tracks: vec![], end }
    }

    #[test]
    fn unit_delay() {
        let mut s = SimState::new(line(4, 0, 1), 0);
        let inj = [Injection { id: 1, at: vec![1], dest: vec![2], deadline: None }];
        let r = step(&mut s, &inj, &BTreeMap::from([(1, Decision::Forward(0))]));
        assert!(r.violations.is_empty());
        assert_eq!(s.position(1), Some(&vec![2]));
        let r = step(&mut s, &[], &BTreeMap::from([(1, Decision::Deliver)]));
        assert_eq!(r.deliveries, vec![1]);
    }

    #[test]
    fn link_overload_flagged() {
        let mut s = SimState::new(line(4, 0, 1), 0);
        let inj: Vec<_> = (0..2).map(|id| Injection { id, at: vec![1], dest: vec![3], deadline: None }).collect();
        let dec = BTreeMap::from([(0, Decision::Forward(0)), (1, Decision::Forward(0))]);
        let r = step(&mut s, &inj, &dec);
        assert_eq!(r.violations.len(), 1);
        assert!(matches!(r.violations[0].kind, ViolationKind::LinkOverload { load: 2, .. }));
    }

    #[test]
    fn store_and_forward_same_step() {
        // one packet arrives over the link while another is injected locally
        let g = line(4, 1, 1);
        let trace = vec![PacketRequest::on_line(0, 1, 3, 0, None), PacketRequest::on_line(1, 2, 3, 1, None)];
        let paths = vec![
            path(0, 1, 0, &[Step::Forward(0), Step::Store, Step::Forward(0)], PathEnd::Deliver),
            path(1, 2, 1, &[Step::Forward(0)], PathEnd::Deliver),
        ];
        let rep = replay(&g, &trace, &paths, "t", None);
        assert!(rep.ok(), "{:?}", rep.violations);
        assert_eq!(rep.metrics.throughput, 2);
        assert!(rep.used_buffers);
    }

    #[test]
    fn empty_replay() {
        let rep = replay(&line(4, 1, 1), &[], &[], "t", None);
        assert!(rep.ok());
        assert_eq!(rep.metrics.throughput, 0);
    }

    #[test]
    fn corrupted_path_detected_once() {
        let g = line(4, 0, 1);
        let trace = vec![PacketRequest::on_line(0, 1, 3, 0, None), PacketRequest::on_line(1, 1, 2, 0, None)];
        let paths = vec![
            path(0, 1, 0, &[Step::Forward(0), Step::Forward(0)], PathEnd::Deliver),
            path(1, 1, 0, &[Step::Forward(0)], PathEnd::Deliver),
        ];
        let rep = replay(&g, &trace, &paths, "t", None);
        assert_eq!(rep.violations.len(), 1);
        assert_eq!(rep.violations[0].t, 0);
    }

    #[test]
    fn late_and_misdelivered() {
        let g = line(4, 2, 1);
        let trace = vec![PacketRequest::on_line(0, 1, 2, 0, Some(1)), PacketRequest::on_line(1, 1, 3, 0, None)];
        let paths =
            vec![path(0, 1, 0, &[Step::Store, Step::Forward(0)], PathEnd::Deliver), path(1, 1, 0, &[Step::Forward(0)], PathEnd::Deliver)];
        let rep = replay(&g, &trace, &paths, "t", None);
        let kinds: Vec<_> = rep.violations.iter().map(|v| v.kind.clone()).collect();
        assert!(kinds.contains(&ViolationKind::Late { id: 0, deadline: 1 }));
        assert!(kinds.contains(&ViolationKind::WrongDestination { id: 1 }));
    }

    #[test]
    fn event_log_lines() {
        let g = line(3, 0, 1);
        let trace = vec![PacketRequest::on_line(0, 1, 2, 0, None)];
        let paths = vec![path(0, 1, 0, &[Step::Forward(0)], PathEnd::Deliver)];
        let mut buf: Vec<u8> = Vec::new();
        replay(&g, &trace, &paths, "t", Some(&mut buf));
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().any(|l| l.starts_with("0 inject 0")));
        assert!(text.lines().any(|l| l == "1 deliver 0"));
    }

    #[test]
    fn conservation() {
        let g = line(6, 1, 1);
        let trace: Vec<_> = (0..3).map(|i| PacketRequest::on_line(i, 1, 6, i, None)).collect();
        let paths = vec![
            path(0, 1, 0, &[Step::Forward(0); 5], PathEnd::Deliver),
            path(1, 1, 1, &[Step::Forward(0); 2], PathEnd::Drop),
            path(2, 1, 2, &[Step::Forward(0)], PathEnd::Open),
        ];
        let rep = replay(&g, &trace, &paths, "t", None);
        assert!(rep.ok(), "{:?}", rep.violations);
        assert_eq!(rep.outcomes[&0], Outcome::Delivered(5));
        assert_eq!(rep.outcomes[&1], Outcome::Preempted(3));
        assert_eq!(rep.outcomes[&2], Outcome::InFlight);
        assert!(rep.metrics.balanced());
    }
}
