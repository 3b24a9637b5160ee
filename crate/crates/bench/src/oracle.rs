//! Exhaustive optimal offline schedule for tiny instances.
//!
//! The search walks time steps. In each step every packet in the network
//! either crosses an out-link, waits in the buffer or is dropped; packets at
//! their destination are delivered. Packets that are identical (same node,
//! destination and deadline) are interchangeable, so a step chooses how many
//! of each class take each option. States are memoized on the time, the
//! multiset of packet classes and the number of requests already injected.
//!
//! After the last injection a step in which nothing moves and nothing is
//! dropped leaves the state unchanged except for the clock, which can only
//! hurt, so such steps are skipped. This bounds the search without an
//! artificial end time.

use std::collections::{BTreeMap, HashMap};

use gridroute_core::model::{arrival_order, l1, validate_request, Coord};
use gridroute_core::route::{DetailedPath, PathEnd, RouteResult, Step};
use gridroute_core::{GridSpec, PacketRequest};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleLimits {
    /// Total number of grid nodes.
    pub max_nodes: u64,
    /// Span between the first and the last injection time.
    pub max_horizon: u64,
    pub max_requests: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits { max_nodes: 8, max_horizon: 12, max_requests: 10 }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("grid has {0} nodes, limit {1}")]
    Nodes(u64, u64),
    #[error("injection span {0} exceeds limit {1}")]
    Horizon(u64, u64),
    #[error("{0} requests exceed limit {1}")]
    Requests(usize, usize),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub states: u64,
    pub memo_hits: u64,
    pub pruned: u64,
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub opt: usize,
    /// An optimal schedule; replays without violations.
    pub witness: RouteResult,
    pub stats: SearchStats,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Class {
    at: Coord,
    dest: Coord,
    deadline: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Choice {
    Forward(usize),
    Store,
    Drop,
}

type Key = (u64, usize, Vec<Class>);

struct Search<'a> {
    grid: &'a GridSpec,
    reqs: Vec<PacketRequest>,
    last_t: u64,
    memo: HashMap<Key, usize>,
    stats: SearchStats,
}

/// One step's choices: for each class group, a count per option.
type Plan = Vec<Vec<(Choice, usize)>>;

impl Search<'_> {
    fn injected_by(&self, t: u64) -> usize {
        self.reqs.partition_point(|r| r.t <= t)
    }

    fn options(&self, c: &Class, t: u64) -> Vec<Choice> {
        if c.deadline.is_some_and(|d| t + l1(&c.at, &c.dest) > d) {
            return vec![Choice::Drop];
        }
        let mut out: Vec<Choice> = (0..c.at.len()).filter(|&i| c.at[i] < c.dest[i]).map(Choice::Forward).collect();
        if self.grid.b > 0 {
            out.push(Choice::Store);
        }
        out.push(Choice::Drop);
        out
    }

    /// Packets in the network at time `t` after injections, grouped, and
    /// the number delivered on the spot.
    fn groups(&self, t: u64, next: usize, live: &[Class]) -> (Vec<(Class, usize)>, usize, usize) {
        let upto = self.injected_by(t);
        let mut all: BTreeMap<Class, usize> = BTreeMap::new();
        for c in live.iter().cloned().chain(self.reqs[next..upto].iter().map(|r| Class {
            at: r.a.clone(),
            dest: r.b.clone(),
            deadline: r.deadline,
        })) {
            *all.entry(c).or_insert(0) += 1;
        }
        let mut delivered = 0;
        let mut groups = Vec::new();
        for (c, k) in all {
            if c.at == c.dest {
                delivered += k;
            } else {
                groups.push((c, k));
            }
        }
        (groups, delivered, upto)
    }

    /// All feasible plans for the groups, respecting link and buffer limits.
    fn plans(&self, t: u64, groups: &[(Class, usize)], skip_idle: bool) -> Vec<Plan> {
        let mut out = Vec::new();
        let mut links: HashMap<(Coord, usize), u32> = HashMap::new();
        let mut bufs: HashMap<Coord, u32> = HashMap::new();
        let mut cur: Plan = Vec::new();
        self.plan_rec(t, groups, 0, &mut cur, &mut links, &mut bufs, &mut out);
        if skip_idle {
            out.retain(|p| p.iter().flatten().any(|&(ch, k)| k > 0 && ch != Choice::Store));
        }
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn plan_rec(
        &self,
        t: u64,
        groups: &[(Class, usize)],
        g: usize,
        cur: &mut Plan,
        links: &mut HashMap<(Coord, usize), u32>,
        bufs: &mut HashMap<Coord, u32>,
        out: &mut Vec<Plan>,
    ) {
        if g == groups.len() {
            out.push(cur.clone());
            return;
        }
        let (class, k) = &groups[g];
        let opts = self.options(class, t);
        let mut split: Vec<(Choice, usize)> = Vec::new();
        self.split_rec(t, groups, g, &opts, 0, *k, &mut split, cur, links, bufs, out, class);
    }

    #[allow(clippy::too_many_arguments)]
    fn split_rec(
        &self,
        t: u64,
        groups: &[(Class, usize)],
        g: usize,
        opts: &[Choice],
        i: usize,
        left: usize,
        split: &mut Vec<(Choice, usize)>,
        cur: &mut Plan,
        links: &mut HashMap<(Coord, usize), u32>,
        bufs: &mut HashMap<Coord, u32>,
        out: &mut Vec<Plan>,
        class: &Class,
    ) {
        if i + 1 == opts.len() {
            // The last option takes the rest; it is always Drop.
            split.push((opts[i], left));
            cur.push(split.clone());
            self.plan_rec(t, groups, g + 1, cur, links, bufs, out);
            cur.pop();
            split.pop();
            return;
        }
        let room = match opts[i] {
            Choice::Forward(axis) => self.grid.c - links.get(&(class.at.clone(), axis)).copied().unwrap_or(0),
            Choice::Store => self.grid.b - bufs.get(&class.at).copied().unwrap_or(0),
            Choice::Drop => left as u32,
        } as usize;
        for take in 0..=left.min(room) {
            match opts[i] {
                Choice::Forward(axis) => *links.entry((class.at.clone(), axis)).or_insert(0) += take as u32,
                Choice::Store => *bufs.entry(class.at.clone()).or_insert(0) += take as u32,
                Choice::Drop => {}
            }
            split.push((opts[i], take));
            self.split_rec(t, groups, g, opts, i + 1, left - take, split, cur, links, bufs, out, class);
            split.pop();
            match opts[i] {
                Choice::Forward(axis) => *links.get_mut(&(class.at.clone(), axis)).unwrap() -= take as u32,
                Choice::Store => *bufs.get_mut(&class.at).unwrap() -= take as u32,
                Choice::Drop => {}
            }
        }
    }

    fn apply(groups: &[(Class, usize)], plan: &Plan) -> Vec<Class> {
        let mut next = Vec::new();
        for ((class, _), split) in groups.iter().zip(plan) {
            for &(ch, k) in split {
                let moved = match ch {
                    Choice::Forward(axis) => {
                        let mut c = class.clone();
                        c.at[axis] += 1;
                        c
                    }
                    Choice::Store => class.clone(),
                    Choice::Drop => continue,
                };
                next.extend(std::iter::repeat_n(moved, k));
            }
        }
        next.sort();
        next
    }

    /// Most deliveries obtainable from the state at the start of step `t`.
    fn best(&mut self, t: u64, next: usize, live: Vec<Class>) -> usize {
        if live.is_empty() && next == self.reqs.len() {
            return 0;
        }
        let key = (t, next, live);
        if let Some(&v) = self.memo.get(&key) {
            self.stats.memo_hits += 1;
            return v;
        }
        let (t, next, live) = key;
        self.stats.states += 1;
        let (groups, delivered, upto) = self.groups(t, next, &live);
        let future = self.reqs.len() - upto;
        let idle_useless = t >= self.last_t;
        let mut best = 0;
        let in_net: usize = groups.iter().map(|g| g.1).sum();
        for plan in self.plans(t, &groups, idle_useless) {
            let after = Self::apply(&groups, &plan);
            if after.len() + future <= best {
                self.stats.pruned += 1;
                continue;
            }
            let v = self.best(t + 1, upto, after);
            best = best.max(v);
            if best == in_net + future {
                break;
            }
        }
        self.memo.insert((t, next, live), delivered + best);
        delivered + best
    }
}

/// Maximum number of deliveries over all offline schedules, with a witness.
pub fn brute_force_opt(trace: &[PacketRequest], grid: &GridSpec, limits: &OracleLimits) -> Result<OracleResult, OracleError> {
    if grid.n() > limits.max_nodes {
        return Err(OracleError::Nodes(grid.n(), limits.max_nodes));
    }
    if trace.len() > limits.max_requests {
        return Err(OracleError::Requests(trace.len(), limits.max_requests));
    }
    let reqs: Vec<PacketRequest> = arrival_order(trace).into_iter().filter(|r| validate_request(r, grid).is_ok()).collect();
    let first = reqs.first().map_or(0, |r| r.t);
    let last_t = reqs.last().map_or(0, |r| r.t);
    if last_t - first > limits.max_horizon {
        return Err(OracleError::Horizon(last_t - first, limits.max_horizon));
    }
    let mut s = Search { grid, reqs, last_t, memo: HashMap::new(), stats: SearchStats::default() };
    let opt = s.best(first, 0, Vec::new());
    let witness = reconstruct(&mut s, trace, first, opt);
    Ok(OracleResult { opt, witness, stats: s.stats })
}

/// Follows optimal choices from the root, assigning class counts to
/// concrete packets.
fn reconstruct(s: &mut Search, trace: &[PacketRequest], first: u64, opt: usize) -> RouteResult {
    let mut result = RouteResult::new("oracle", None, trace);
    let mut live: Vec<(Class, DetailedPath)> = Vec::new();
    let (mut t, mut next, mut want) = (first, 0, opt);
    while !(live.is_empty() && next == s.reqs.len()) {
        let upto = s.injected_by(t);
        for r in &s.reqs[next..upto] {
            let c = Class { at: r.a.clone(), dest: r.b.clone(), deadline: r.deadline };
            live.push((c, DetailedPath::new(r.id, r.a.clone(), r.t)));
        }
        live.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
        let mut here = Vec::new();
        for (c, mut p) in live.drain(..) {
            if c.at == c.dest {
                p.end = PathEnd::Deliver;
                result.finish(p);
                want -= 1;
            } else {
                here.push((c, p));
            }
        }
        if here.is_empty() && upto == s.reqs.len() {
            break;
        }
        let classes: Vec<Class> = here.iter().map(|x| x.0.clone()).collect();
        let (groups, _, _) = s.groups(t, upto, &classes);
        let plan = s
            .plans(t, &groups, t >= s.last_t)
            .into_iter()
            .find(|plan| {
                let after = Search::apply(&groups, plan);
                (after.is_empty() && upto == s.reqs.len() && want == 0) || s.best(t + 1, upto, after) == want
            })
            .expect("an optimal continuation exists");
        let mut iter = here.into_iter().peekable();
        for ((_, _), split) in groups.iter().zip(&plan) {
            for &(ch, k) in split {
                for _ in 0..k {
                    let (mut c, mut p) = iter.next().unwrap();
                    match ch {
                        Choice::Forward(axis) => {
                            c.at[axis] += 1;
                            p.steps.push(Step::Forward(axis));
                            live.push((c, p));
                        }
                        Choice::Store => {
                            p.steps.push(Step::Store);
                            live.push((c, p));
                        }
                        Choice::Drop => {
                            p.end = PathEnd::Drop;
                            result.finish(p);
                        }
                    }
                }
            }
        }
        next = upto;
        t += 1;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use gridroute_core::sim::replay;

    fn line(n: u32, b: u32, c: u32) -> GridSpec {
        GridSpec::line(n, b, c).unwrap()
    }

    #[test]
    fn trivial_cases() {
        let g = line(4, 0, 1);
        assert_eq!(brute_force_opt(&[], &g, &OracleLimits::default()).unwrap().opt, 0);
        let one = [PacketRequest::on_line(0, 1, 4, 2, None)];
        let r = brute_force_opt(&one, &g, &OracleLimits::default()).unwrap();
        assert_eq!(r.opt, 1);
        assert_eq!(r.witness.paths[0].steps, vec![Step::Forward(0); 3]);
    }

    #[test]
    fn overlapping_spans_without_buffers() {
        let g = line(6, 0, 1);
        let trace = [PacketRequest::on_line(0, 1, 5, 0, None), PacketRequest::on_line(1, 2, 4, 1, None)];
        assert_eq!(brute_force_opt(&trace, &g, &OracleLimits::default()).unwrap().opt, 1);
        // One buffer slot lets the second packet wait.
        assert_eq!(brute_force_opt(&trace, &line(6, 1, 1), &OracleLimits::default()).unwrap().opt, 2);
    }

    #[test]
    fn deadlines_limit_waiting() {
        let g = line(6, 1, 1);
        let trace = [PacketRequest::on_line(0, 1, 5, 0, Some(4)), PacketRequest::on_line(1, 2, 4, 1, Some(3))];
        assert_eq!(brute_force_opt(&trace, &g, &OracleLimits::default()).unwrap().opt, 1);
    }

    #[test]
    fn limits_are_enforced() {
        let lim = OracleLimits::default();
        assert_eq!(brute_force_opt(&[], &line(9, 0, 1), &lim).unwrap_err(), OracleError::Nodes(9, 8));
        let many: Vec<_> = (0..11).map(|i| PacketRequest::on_line(i, 1, 2, 0, None)).collect();
        assert_eq!(brute_force_opt(&many, &line(4, 0, 1), &lim).unwrap_err(), OracleError::Requests(11, 10));
        let late = [PacketRequest::on_line(0, 1, 2, 0, None), PacketRequest::on_line(1, 1, 2, 13, None)];
        assert_eq!(brute_force_opt(&late, &line(4, 0, 1), &lim).unwrap_err(), OracleError::Horizon(13, 12));
    }

    #[test]
    fn grid_instance() {
        let g = GridSpec::new(vec![2, 2], 0, 1).unwrap();
        let trace = [
            PacketRequest::new(0, vec![1, 1], vec![2, 2], 0, None),
            PacketRequest::new(1, vec![1, 1], vec![2, 2], 0, None),
            PacketRequest::new(2, vec![1, 1], vec![2, 2], 0, None),
        ];
        let r = brute_force_opt(&trace, &g, &OracleLimits::default()).unwrap();
        assert_eq!(r.opt, 2);
        let rep = replay(&g, &trace, &r.witness.paths, "oracle", None);
        assert!(rep.ok());
        assert_eq!(rep.metrics.throughput, 2);
    }
}
