//! Space-time graph of a grid, the untilting map and the path-length constants.

use num_rational::Ratio;

use crate::model::{Capacity, Coord, GridSpec, PacketRequest};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StVertex {
    pub v: Coord,
    pub t: u64,
}

impl StVertex {
    pub fn new(v: Coord, t: u64) -> Self {
        StVertex { v, t }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    /// Link traversal along `axis` (E0).
    Move(usize),
    /// Staying in the buffer (E1).
    Buffer,
    Sink,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StEdge {
    pub from: StVertex,
    pub to: StVertex,
    pub kind: EdgeKind,
}

impl StEdge {
    pub fn capacity(&self, grid: &GridSpec) -> Capacity {
        match self.kind {
            EdgeKind::Move(_) => Capacity::Finite(grid.c as u64),
            EdgeKind::Buffer => Capacity::Finite(grid.b as u64),
            EdgeKind::Sink => Capacity::Infinite,
        }
    }
}

/// Out-edges of `x`: one buffer edge plus one move edge per grid out-neighbour.
pub fn st_successors(x: &StVertex, grid: &GridSpec) -> Vec<StEdge> {
    let mut out: Vec<StEdge> = grid
        .out_neighbors(&x.v)
        .into_iter()
        .map(|(axis, w)| StEdge { from: x.clone(), to: StVertex::new(w, x.t + 1), kind: EdgeKind::Move(axis) })
        .collect();
    out.push(StEdge { from: x.clone(), to: StVertex::new(x.v.clone(), x.t + 1), kind: EdgeKind::Buffer });
    out
}

/// `(x_1..x_d, t) ↦ (x_1..x_d, t − Σx_i)`.
pub fn untilt(p: &[i64]) -> Vec<i64> {
    let (last, spatial) = p.split_last().expect("point needs a time coordinate");
    let mut q = spatial.to_vec();
    q.push(last - spatial.iter().sum::<i64>());
    q
}

pub fn untilt_inverse(q: &[i64]) -> Vec<i64> {
    let (last, spatial) = q.split_last().expect("point needs a time coordinate");
    let mut p = spatial.to_vec();
    p.push(last + spatial.iter().sum::<i64>());
    p
}

/// Untilted image of a space-time vertex.
pub fn untilt_vertex(x: &StVertex) -> Vec<i64> {
    let mut p: Vec<i64> = x.v.iter().map(|&c| c as i64).collect();
    p.push(x.t as i64);
    untilt(&p)
}

fn ceil_ratio(r: Ratio<u64>) -> u64 {
    r.ceil().to_integer()
}

/// `2n(1 + n(B/c + 1))`, rounded up.
pub fn pmax_line(n: u64, b: u64, c: u64) -> u64 {
    let bc = Ratio::new(b, c);
    ceil_ratio(Ratio::from_integer(2 * n) * (Ratio::from_integer(1) + Ratio::from_integer(n) * (bc + 1)))
}

/// `2·diam·(1 + n(B/c + d))`, rounded up.
pub fn pmax_grid(n: u64, d: u64, b: u64, c: u64, diam: u64) -> u64 {
    let bc = Ratio::new(b, c);
    ceil_ratio(Ratio::from_integer(2 * diam) * (Ratio::from_integer(1) + Ratio::from_integer(n) * (bc + d)))
}

/// `2(n − 1)(1 + B/c)`, rounded up: longest space-time path needed on a line.
pub fn pmax_st_line(n: u64, b: u64, c: u64) -> u64 {
    ceil_ratio(Ratio::from_integer(2 * (n - 1)) * (Ratio::from_integer(1) + Ratio::new(b, c)))
}

/// Space-time copies of `b` inside the request's delivery window. An unbounded
/// deadline is clamped to `horizon`.
pub fn deadline_sink_targets(req: &PacketRequest, horizon: u64) -> Vec<StVertex> {
    let end = req.deadline.unwrap_or(horizon);
    (req.t..=end).map(|t| StVertex::new(req.b.clone(), t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn successors_examples() {
        let g = GridSpec::line(4, 1, 1).unwrap();
        let s = st_successors(&StVertex::new(vec![4], 5), &g);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].kind, EdgeKind::Buffer);
        assert_eq!(s[0].to, StVertex::new(vec![4], 6));

        let s = st_successors(&StVertex::new(vec![2], 0), &g);
        assert_eq!(s.len(), 2);
        assert!(s.iter().any(|e| e.kind == EdgeKind::Move(0) && e.to == StVertex::new(vec![3], 1)));
        assert!(s.iter().any(|e| e.kind == EdgeKind::Buffer && e.to == StVertex::new(vec![2], 1)));

        let g2 = GridSpec::new(vec![4, 4], 1, 1).unwrap();
        let s = st_successors(&StVertex::new(vec![1, 1], 0), &g2);
        assert_eq!(s.iter().filter(|e| matches!(e.kind, EdgeKind::Move(_))).count(), 2);
        assert_eq!(s.iter().filter(|e| e.kind == EdgeKind::Buffer).count(), 1);
    }

    #[test]
    fn untilt_examples() {
        assert_eq!(untilt(&[2, 1]), vec![2, -1]);
        assert_eq!(untilt(&[0, 0, 7]), vec![0, 0, 7]);
    }

    #[test]
    fn pmax_examples() {
        assert_eq!(pmax_line(8, 3, 3), 272);
        assert_eq!(pmax_st_line(2, 1, 1), 4);
        assert_eq!(pmax_line(10, 0, 3), 2 * 10 * 11);
        assert_eq!(pmax_line(16, 3, 3), 1056);
        // B/c = 1/3: 2·4·(1 + 4·4/3) = 8 + 128/3 → 51
        assert_eq!(pmax_line(4, 1, 3), 51);
        assert_eq!(pmax_grid(16, 2, 3, 3, 6), 2 * 6 * (1 + 16 * 3));
        assert_eq!(pmax_st_line(16, 8, 8), 60);
    }

    #[test]
    fn sink_targets_examples() {
        let r = PacketRequest::on_line(0, 1, 3, 2, Some(4));
        let got: Vec<u64> = deadline_sink_targets(&r, 0).iter().map(|v| v.t).collect();
        assert_eq!(got, vec![2, 3, 4]);
        let r = PacketRequest::on_line(0, 3, 3, 2, Some(2));
        assert_eq!(deadline_sink_targets(&r, 0).len(), 1);
        let r = PacketRequest::on_line(0, 1, 3, 2, None);
        let got = deadline_sink_targets(&r, 6);
        assert_eq!(got.first().unwrap().t, 2);
        assert_eq!(got.last().unwrap().t, 6);
        assert!(got.iter().all(|v| v.v == vec![3]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn untilt_is_bijective(p in proptest::collection::vec(-1000i64..1000, 2..5)) {
            prop_assert_eq!(untilt_inverse(&untilt(&p)), p.clone());
            prop_assert_eq!(untilt(&untilt_inverse(&p)), p);
        }
    }

    proptest! {
        #[test]
        fn untilted_edges_are_unit_steps(
            dims in proptest::collection::vec(2u32..5, 1..4),
            seed in 0u64..1000,
        ) {
            let g = GridSpec::new(dims.clone(), 2, 2).unwrap();
            let v: Coord = dims.iter().enumerate().map(|(i, &l)| 1 + ((seed >> i) as u32 % l)).collect();
            let x = StVertex::new(v, seed % 17);
            for e in st_successors(&x, &g) {
                prop_assert_eq!(e.to.t, e.from.t + 1);
                let diff: Vec<i64> = untilt_vertex(&e.to).iter().zip(untilt_vertex(&e.from))
                    .map(|(a, b)| a - b).collect();
                prop_assert_eq!(diff.iter().map(|x| x.abs()).sum::<i64>(), 1);
                prop_assert!(diff.iter().all(|&x| x >= 0));
                match e.kind {
                    EdgeKind::Move(axis) => {
                        prop_assert_eq!(diff[axis], 1);
                        let moved = e.from.v.iter().zip(&e.to.v).filter(|(a, b)| a != b).count();
                        prop_assert_eq!(moved, 1);
                    }
                    EdgeKind::Buffer => {
                        prop_assert_eq!(&e.from.v, &e.to.v);
                        prop_assert_eq!(*diff.last().unwrap(), 1);
                    }
                    EdgeKind::Sink => unreachable!(),
                }
            }
        }
    }
}
