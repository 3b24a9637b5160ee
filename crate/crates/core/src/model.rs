//! Grids, packet requests, outcomes and the line-oriented trace format.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Vertex of a grid, 1-based per axis.
pub type Coord = Vec<u32>;

/// Edge or node capacity. Sink edges carry [`Capacity::Infinite`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Capacity {
    Finite(u64),
    Infinite,
}

impl Capacity {
    pub fn finite(self) -> Option<u64> {
        match self {
            Capacity::Finite(c) => Some(c),
            Capacity::Infinite => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("grid needs at least one axis")]
    NoAxes,
    #[error("side lengths must be positive")]
    ZeroSide,
    #[error("grid needs at least two vertices")]
    TooSmall,
    #[error("link capacity must be positive")]
    ZeroCapacity,
}

/// Uni-directional d-dimensional grid with uniform buffer size and link capacity.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridSpec {
    pub dims: Vec<u32>,
    pub b: u32,
    pub c: u32,
}

impl GridSpec {
    pub fn new(dims: Vec<u32>, b: u32, c: u32) -> Result<Self, GridError> {
        if dims.is_empty() {
            return Err(GridError::NoAxes);
        }
        if dims.contains(&0) {
            return Err(GridError::ZeroSide);
        }
        if dims.iter().map(|&l| l as u64).product::<u64>() < 2 {
            return Err(GridError::TooSmall);
        }
        if c == 0 {
            return Err(GridError::ZeroCapacity);
        }
        Ok(GridSpec { dims, b, c })
    }

    /// Directed line with `n` nodes.
    pub fn line(n: u32, b: u32, c: u32) -> Result<Self, GridError> {
        Self::new(vec![n], b, c)
    }

    pub fn d(&self) -> usize {
        self.dims.len()
    }

    pub fn n(&self) -> u64 {
        self.dims.iter().map(|&l| l as u64).product()
    }

    /// Longest shortest path: Σ(ℓ_i − 1).
    pub fn diam(&self) -> u64 {
        self.dims.iter().map(|&l| l as u64 - 1).sum()
    }

    pub fn contains(&self, v: &[u32]) -> bool {
        v.len() == self.dims.len() && v.iter().zip(&self.dims).all(|(&x, &l)| x >= 1 && x <= l)
    }

    /// Out-neighbours of `v` as `(axis, neighbour)`.
    pub fn out_neighbors(&self, v: &[u32]) -> Vec<(usize, Coord)> {
        let mut out = Vec::new();
        for axis in 0..self.d() {
            if v[axis] < self.dims[axis] {
                let mut w = v.to_vec();
                w[axis] += 1;
                out.push((axis, w));
            }
        }
        out
    }
}

pub fn l1(a: &[u32], b: &[u32]) -> u64 {
    a.iter().zip(b).map(|(&x, &y)| (x as i64 - y as i64).unsigned_abs()).sum()
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PacketRequest {
    pub id: u64,
    pub a: Coord,
    pub b: Coord,
    pub t: u64,
    /// `None` is an unbounded deadline.
    pub deadline: Option<u64>,
}

impl PacketRequest {
    pub fn new(id: u64, a: Coord, b: Coord, t: u64, deadline: Option<u64>) -> Self {
        PacketRequest { id, a, b, t, deadline }
    }

    /// Convenience constructor for lines.
    pub fn on_line(id: u64, a: u32, b: u32, t: u64, deadline: Option<u64>) -> Self {
        Self::new(id, vec![a], vec![b], t, deadline)
    }

    pub fn dist(&self) -> u64 {
        l1(&self.a, &self.b)
    }

    pub fn meets_deadline(&self, arrival: u64) -> bool {
        self.deadline.is_none_or(|d| arrival <= d)
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum Invalid {
    #[error("coordinate arity does not match the grid")]
    Arity,
    #[error("endpoint outside the grid")]
    OutOfGrid,
    #[error("source exceeds destination on some axis")]
    Monotonicity,
    #[error("infeasible deadline: {deadline} < {earliest}")]
    InfeasibleDeadline { deadline: u64, earliest: u64 },
}

pub fn validate_request(req: &PacketRequest, grid: &GridSpec) -> Result<(), Invalid> {
    if req.a.len() != grid.d() || req.b.len() != grid.d() {
        return Err(Invalid::Arity);
    }
    if !grid.contains(&req.a) || !grid.contains(&req.b) {
        return Err(Invalid::OutOfGrid);
    }
    if req.a.iter().zip(&req.b).any(|(x, y)| x > y) {
        return Err(Invalid::Monotonicity);
    }
    if let Some(deadline) = req.deadline {
        let earliest = req.t + req.dist();
        if deadline < earliest {
            return Err(Invalid::InfeasibleDeadline { deadline, earliest });
        }
    }
    Ok(())
}

/// Keeps the `B + c` requests with the smallest source-destination distance,
/// ties broken by lower id. All requests must share source and time.
pub fn filter_simultaneous(reqs: &[PacketRequest], grid: &GridSpec) -> (Vec<PacketRequest>, Vec<PacketRequest>) {
    let mut sorted = reqs.to_vec();
    sorted.sort_by_key(|r| (r.dist(), r.id));
    let keep = (grid.b + grid.c) as usize;
    let rejected = if sorted.len() > keep { sorted.split_off(keep) } else { Vec::new() };
    (sorted, rejected)
}

/// Requests sorted into the online order: by injection time, then id.
pub fn arrival_order(trace: &[PacketRequest]) -> Vec<PacketRequest> {
    let mut v = trace.to_vec();
    v.sort_by_key(|r| (r.t, r.id));
    v
}

/// Groups requests by `(t, source)` preserving arrival order.
pub fn group_simultaneous(trace: &[PacketRequest]) -> Vec<Vec<PacketRequest>> {
    let mut groups: BTreeMap<(u64, Coord), Vec<PacketRequest>> = BTreeMap::new();
    for r in arrival_order(trace) {
        groups.entry((r.t, r.a.clone())).or_default().push(r);
    }
    groups.into_values().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Rejected,
    Preempted(u64),
    Delivered(u64),
    InFlight,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunMetrics {
    pub label: String,
    pub seed: Option<u64>,
    pub total: usize,
    pub throughput: usize,
    pub rejected: usize,
    pub preempted: usize,
    pub in_flight: usize,
}

impl RunMetrics {
    pub fn from_outcomes<'a>(label: &str, seed: Option<u64>, outcomes: impl IntoIterator<Item = &'a Outcome>) -> Self {
        let mut m = RunMetrics { label: label.to_string(), seed, ..Default::default() };
        for o in outcomes {
            m.total += 1;
            match o {
                Outcome::Rejected => m.rejected += 1,
                Outcome::Preempted(_) => m.preempted += 1,
                Outcome::Delivered(_) => m.throughput += 1,
                Outcome::InFlight => m.in_flight += 1,
            }
        }
        m
    }

    pub fn balanced(&self) -> bool {
        self.throughput + self.rejected + self.preempted + self.in_flight == self.total
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("trace line {line}: {msg}")]
pub struct TraceError {
    pub line: usize,
    pub msg: String,
}

fn parse_coord(s: &str) -> Option<Coord> {
    s.split(',').map(|p| p.trim().parse().ok()).collect()
}

/// Parses `id src dst t deadline` lines. Blank lines and `#` comments are skipped.
pub fn parse_trace(text: &str) -> Result<Vec<PacketRequest>, TraceError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| TraceError { line: i + 1, msg: msg.to_string() };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(err("expected 5 fields"));
        }
        let id = f[0].parse().map_err(|_| err("bad id"))?;
        let a = parse_coord(f[1]).ok_or_else(|| err("bad source"))?;
        let b = parse_coord(f[2]).ok_or_else(|| err("bad destination"))?;
        if a.len() != b.len() {
            return Err(err("source and destination arity differ"));
        }
        let t = f[3].parse().map_err(|_| err("bad time"))?;
        let deadline = match f[4] {
            "inf" => None,
            s => Some(s.parse().map_err(|_| err("bad deadline"))?),
        };
        out.push(PacketRequest { id, a, b, t, deadline });
    }
    Ok(out)
}

struct CoordDisplay<'a>(&'a [u32]);

impl fmt::Display for CoordDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{x}")?;
        }
        Ok(())
    }
}

pub fn emit_trace(reqs: &[PacketRequest]) -> String {
    let mut s = String::new();
    for r in reqs {
        let deadline = r.deadline.map_or_else(|| "inf".to_string(), |d| d.to_string());
        s.push_str(&format!("{} {} {} {} {}\n", r.id, CoordDisplay(&r.a), CoordDisplay(&r.b), r.t, deadline));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(n: u32, b: u32, c: u32) -> GridSpec {
        GridSpec::line(n, b, c).unwrap()
    }

    #[test]
    fn validate_examples() {
        let g = line(8, 1, 1);
        assert_eq!(validate_request(&PacketRequest::on_line(0, 2, 5, 0, None), &g), Ok(()));
        assert_eq!(validate_request(&PacketRequest::on_line(0, 3, 1, 0, None), &g), Err(Invalid::Monotonicity));
        assert_eq!(
            validate_request(&PacketRequest::on_line(0, 1, 4, 0, Some(2)), &g),
            Err(Invalid::InfeasibleDeadline { deadline: 2, earliest: 3 })
        );
        assert_eq!(validate_request(&PacketRequest::on_line(0, 1, 9, 0, None), &g), Err(Invalid::OutOfGrid));
    }

    #[test]
    fn grid_rejects_degenerate() {
        assert_eq!(GridSpec::line(1, 0, 1), Err(GridError::TooSmall));
        assert_eq!(GridSpec::line(4, 0, 0), Err(GridError::ZeroCapacity));
        assert_eq!(GridSpec::new(vec![], 0, 1), Err(GridError::NoAxes));
        let g = GridSpec::new(vec![4, 4], 2, 3).unwrap();
        assert_eq!(g.n(), 16);
        assert_eq!(g.diam(), 6);
        assert_eq!(g.out_neighbors(&[1, 1]).len(), 2);
        assert!(g.out_neighbors(&[4, 4]).is_empty());
    }

    #[test]
    fn filter_examples() {
        let g = line(16, 1, 1);
        let mk = |id, b| PacketRequest::on_line(id, 1, b, 0, None);
        let (k, r) = filter_simultaneous(&[mk(0, 3), mk(1, 4)], &line(16, 2, 2));
        assert_eq!((k.len(), r.len()), (2, 0));

        let (k, r) = filter_simultaneous(&[mk(0, 6), mk(1, 3), mk(2, 8)], &g);
        let kd: Vec<u64> = k.iter().map(|r| r.dist()).collect();
        assert_eq!(kd, vec![2, 5]);
        assert_eq!(r.iter().map(|r| r.dist()).collect::<Vec<_>>(), vec![7]);

        let (k, r) = filter_simultaneous(&[mk(5, 5), mk(2, 5), mk(9, 5)], &g);
        assert_eq!(k.iter().map(|r| r.id).collect::<Vec<_>>(), vec![2, 5]);
        assert_eq!(r[0].id, 9);
    }

    #[test]
    fn trace_examples() {
        assert!(parse_trace("").unwrap().is_empty());
        let one = parse_trace("7 1,2 3,4 0 inf\n").unwrap();
        assert_eq!(one, vec![PacketRequest::new(7, vec![1, 2], vec![3, 4], 0, None)]);
        assert_eq!(emit_trace(&one), "7 1,2 3,4 0 inf\n");
        let e = parse_trace("1 1 2 0 inf\n2 1 x 0 inf\n").unwrap_err();
        assert_eq!(e.line, 2);
    }

    fn arb_request() -> impl Strategy<Value = PacketRequest> {
        (0u64..1000, 1usize..4, 0u64..50, proptest::option::of(0u64..100)).prop_flat_map(|(id, d, t, dl)| {
            (proptest::collection::vec(1u32..20, d), proptest::collection::vec(1u32..20, d))
                .prop_map(move |(a, b)| PacketRequest::new(id, a, b, t, dl))
        })
    }

    proptest! {
        #[test]
        fn trace_round_trip(reqs in proptest::collection::vec(arb_request(), 0..100)) {
            prop_assert_eq!(parse_trace(&emit_trace(&reqs)).unwrap(), reqs);
        }

        #[test]
        fn filter_keeps_at_most_b_plus_c(
            dists in proptest::collection::vec(0u32..10, 0..12),
            b in 0u32..4, c in 1u32..4,
        ) {
            let g = line(12, b, c);
            let reqs: Vec<_> = dists.iter().enumerate()
                .map(|(i, &d)| PacketRequest::on_line(i as u64, 1, 1 + d, 0, None)).collect();
            let (k, r) = filter_simultaneous(&reqs, &g);
            prop_assert!(k.len() <= (b + c) as usize);
            prop_assert_eq!(k.len() + r.len(), reqs.len());
            if let (Some(worst_kept), Some(best_rej)) = (k.last(), r.first()) {
                prop_assert!((worst_kept.dist(), worst_kept.id) < (best_rej.dist(), best_rej.id));
            }
            let mut rev = reqs.clone();
            rev.reverse();
            prop_assert_eq!(filter_simultaneous(&rev, &g).0, k);
        }

        #[test]
        fn valid_requests_have_slack(r in arb_request()) {
            let g = GridSpec::new(vec![20; r.a.len()], 1, 1).unwrap();
            if validate_request(&r, &g).is_ok() {
                if let Some(d) = r.deadline {
                    prop_assert!(d - r.t >= r.dist());
                }
            }
        }
    }
}
