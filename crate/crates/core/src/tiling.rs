//! Tilings of the untilted space-time graph and the sketch graphs built on them.
//!
//! Points are untilted: spatial coordinates first, untilted time last. Side
//! lengths and shifts are stored in the same axis order.

use rand::Rng;
use thiserror::Error;

use crate::model::{GridSpec, PacketRequest};
use crate::spacetime::{untilt_vertex, StVertex};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum TilingError {
    #[error("side lengths and shifts must have the same arity")]
    Arity,
    #[error("side lengths must be positive")]
    Side,
    #[error("shift {shift} outside [0, {side})")]
    Shift { shift: i64, side: i64 },
    #[error("rectangular tiles need even sides")]
    Odd,
    #[error("capacity ratio {num}/{den} exceeds 2")]
    Ratio { num: u64, den: u64 },
    #[error("randomized tiling needs 1 <= B, c <= log2 n")]
    Domain,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TilingParams {
    pub sides: Vec<i64>,
    pub shifts: Vec<i64>,
}

impl TilingParams {
    pub fn new(sides: Vec<i64>, shifts: Vec<i64>) -> Result<Self, TilingError> {
        if sides.len() != shifts.len() || sides.len() < 2 {
            return Err(TilingError::Arity);
        }
        if sides.iter().any(|&s| s < 1) {
            return Err(TilingError::Side);
        }
        for (&shift, &side) in shifts.iter().zip(&sides) {
            if !(0..side).contains(&shift) {
                return Err(TilingError::Shift { shift, side });
            }
        }
        Ok(TilingParams { sides, shifts })
    }

    /// Cubes of side `k` over a `d`-dimensional grid, no shift.
    pub fn square(k: i64, d: usize) -> Self {
        assert!(k >= 1);
        TilingParams { sides: vec![k; d + 1], shifts: vec![0; d + 1] }
    }

    /// `τ` along untilted time, `Q` along the line.
    pub fn rect(tau: i64, q: i64, phi_tau: i64, phi_q: i64) -> Result<Self, TilingError> {
        if tau % 2 != 0 || q % 2 != 0 {
            return Err(TilingError::Odd);
        }
        Self::new(vec![q, tau], vec![phi_q, phi_tau])
    }

    pub fn d(&self) -> usize {
        self.sides.len() - 1
    }

    pub fn tau(&self) -> i64 {
        *self.sides.last().unwrap()
    }

    pub fn q(&self) -> i64 {
        self.sides[0]
    }

    /// Tile index of an untilted point.
    pub fn index_of(&self, p: &[i64]) -> Vec<i64> {
        p.iter().zip(self.sides.iter().zip(&self.shifts)).map(|(&x, (&s, &f))| (x - f).div_euclid(s)).collect()
    }

    pub fn corner_of_index(&self, idx: &[i64]) -> Vec<i64> {
        idx.iter().zip(self.sides.iter().zip(&self.shifts)).map(|(&i, (&s, &f))| f + i * s).collect()
    }

    pub fn tile_of_point(&self, p: &[i64]) -> TileId {
        TileId { corner: self.corner_of_index(&self.index_of(p)) }
    }

    pub fn contains(&self, tile: &TileId, p: &[i64]) -> bool {
        p.iter().zip(tile.corner.iter().zip(&self.sides)).all(|(&x, (&lo, &s))| lo <= x && x < lo + s)
    }

    /// Offsets of `p` inside its tile.
    pub fn offsets(&self, p: &[i64]) -> Vec<i64> {
        let t = self.tile_of_point(p);
        p.iter().zip(&t.corner).map(|(x, c)| x - c).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TileId {
    pub corner: Vec<i64>,
}

pub fn tile_of(x: &StVertex, params: &TilingParams) -> TileId {
    params.tile_of_point(&untilt_vertex(x))
}

/// `⌈log₂(1 + 3·p_max)⌉`.
pub fn tile_side_k(pmax: u64) -> u64 {
    assert!(pmax >= 1);
    let target = 1 + 3 * pmax;
    let mut k = 0;
    while (1u128 << k) < target as u128 {
        k += 1;
    }
    k
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SinkMode {
    PerVertex,
    PerRequest,
}

/// Tile-level coalescing of the space-time graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SketchGraph {
    pub params: TilingParams,
    pub sink_mode: SinkMode,
    /// Capacity crossing a boundary orthogonal to each axis, spatial axes
    /// first and the time axis last.
    pub axis_capacity: Vec<u64>,
    /// Tile capacity for cube tilings.
    pub node_capacity: Option<u64>,
}

impl SketchGraph {
    /// Capacity of edges crossing an east boundary (buffer edges).
    pub fn horizontal(&self) -> u64 {
        *self.axis_capacity.last().unwrap()
    }

    /// Capacity of edges crossing a north boundary on a line.
    pub fn vertical(&self) -> u64 {
        self.axis_capacity[0]
    }

    /// Inter-tile edges between tiles whose indices lie in `[lo, hi]`.
    pub fn edges_in_window(&self, lo: &[i64], hi: &[i64]) -> Vec<(Vec<i64>, Vec<i64>, u64)> {
        let mut out = Vec::new();
        let mut idx = lo.to_vec();
        loop {
            for axis in 0..idx.len() {
                if idx[axis] < hi[axis] {
                    let mut to = idx.clone();
                    to[axis] += 1;
                    out.push((idx.clone(), to, self.axis_capacity[axis]));
                }
            }
            let mut a = 0;
            loop {
                if a == idx.len() {
                    return out;
                }
                if idx[a] < hi[a] {
                    idx[a] += 1;
                    break;
                }
                idx[a] = lo[a];
                a += 1;
            }
        }
    }
}

pub fn build_sketch(grid: &GridSpec, params: &TilingParams, sink_mode: SinkMode) -> SketchGraph {
    let d = grid.d();
    assert_eq!(params.d(), d, "tiling arity must match the grid");
    let mut axis_capacity = Vec::with_capacity(d + 1);
    for axis in 0..=d {
        let face: i64 = (0..=d).filter(|&j| j != axis).map(|j| params.sides[j]).product();
        let per_edge = if axis == d { grid.b } else { grid.c } as u64;
        axis_capacity.push(face as u64 * per_edge);
    }
    let node_capacity = if params.sides.iter().all(|&s| s == params.sides[0]) {
        let k = params.sides[0] as u64;
        Some((d as u64 + 1) * k.pow(d as u32 + 1) * (grid.b as u64 + d as u64 * grid.c as u64))
    } else {
        None
    };
    SketchGraph { params: params.clone(), sink_mode, axis_capacity, node_capacity }
}

/// Node-split sketch with interior capacity `d + 1`, unit inter-tile capacity
/// and unbounded sink edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DownscaledSketch {
    pub interior: u64,
    pub inter_tile: u64,
    pub pmax: u64,
}

pub fn downscale_12inf(sketch: &SketchGraph, pmax: u64) -> DownscaledSketch {
    DownscaledSketch { interior: sketch.params.d() as u64 + 1, inter_tile: 1, pmax: 2 * pmax + 1 }
}

/// Exact `⌈log₂ n⌉`-style helpers without floating point.
fn pow2_at_least(e: u64, n: u64) -> bool {
    e >= 64 || (1u64 << e) >= n
}

/// Tile sides `(τ, Q)` for the randomized algorithm.
pub fn rand_sides(n: u64, b: u64, c: u64) -> Result<(i64, i64), TilingError> {
    // B, c <= log2 n  <=>  2^B <= n
    if b == 0 || c == 0 || !pow2_le(b, n) || !pow2_le(c, n) {
        return Err(TilingError::Domain);
    }
    // B·c < log2 n  <=>  2^(B·c) < n
    if !pow2_at_least(b * c, n) {
        let m = |x: u64| (1..).find(|&m| pow2_at_least(m * x, n)).unwrap();
        Ok((2 * m(c) as i64, 2 * m(b) as i64))
    } else {
        Ok((2 * b as i64, 2 * c as i64))
    }
}

fn pow2_le(e: u64, n: u64) -> bool {
    e < 64 && (1u64 << e) <= n
}

/// Randomized tiling with uniform phase shifts. Draws `φ_τ` then `φ_Q`.
pub fn tiling_params_rand<R: Rng>(n: u64, b: u64, c: u64, rng: &mut R) -> Result<TilingParams, TilingError> {
    let (tau, q) = rand_sides(n, b, c)?;
    let phi_tau = rng.gen_range(0..tau);
    let phi_q = rng.gen_range(0..q);
    TilingParams::rect(tau, q, phi_tau, phi_q)
}

/// Reduces both inter-tile capacities of a line sketch to `c^S = min(BQ, cτ)`.
pub fn equalize_capacities(sketch: &SketchGraph) -> Result<u64, TilingError> {
    let hi = sketch.axis_capacity.iter().copied().max().unwrap();
    let lo = sketch.axis_capacity.iter().copied().min().unwrap();
    if lo == 0 || hi > 2 * lo {
        return Err(TilingError::Ratio { num: hi, den: lo });
    }
    Ok(lo)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Proximity {
    Near,
    Far,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quadrant {
    SW,
    NW,
    SE,
    NE,
}

/// Untilted source point of a request.
pub fn source_point(req: &PacketRequest) -> Vec<i64> {
    let mut p: Vec<i64> = req.a.iter().map(|&x| x as i64).collect();
    p.push(req.t as i64);
    crate::spacetime::untilt(&p)
}

/// Near iff the source tile holds a copy `(b, t')` with `t' ≥ t`.
pub fn classify(req: &PacketRequest, params: &TilingParams) -> Proximity {
    let src = source_point(req);
    let tile = params.tile_of_point(&src);
    let d = params.d();
    let spatial_ok = (0..d).all(|i| {
        let x = req.b[i] as i64;
        tile.corner[i] <= x && x < tile.corner[i] + params.sides[i]
    });
    // Untilted time of (b, t') is t' − Σb; the latest copy in the tile is at
    // the tile's last time column, which must not precede t.
    let sum_b: i64 = req.b.iter().map(|&x| x as i64).sum();
    let last_col = tile.corner[d] + params.sides[d] - 1;
    if spatial_ok && last_col + sum_b >= req.t as i64 {
        Proximity::Near
    } else {
        Proximity::Far
    }
}

/// Quadrant of an untilted line point: west/east by time offset, south/north
/// by node offset. Boxes are half-open.
pub fn quadrant_of(params: &TilingParams, p: &[i64]) -> Quadrant {
    assert_eq!(params.d(), 1, "quadrants are defined on lines");
    let off = params.offsets(p);
    let west = off[1] < params.tau() / 2;
    let south = off[0] < params.q() / 2;
    match (south, west) {
        (true, true) => Quadrant::SW,
        (false, true) => Quadrant::NW,
        (true, false) => Quadrant::SE,
        (false, false) => Quadrant::NE,
    }
}

pub fn in_r_plus(req: &PacketRequest, params: &TilingParams) -> bool {
    classify(req, params) == Proximity::Far && quadrant_of(params, &source_point(req)) == Quadrant::SW
}

/// Tile sequence visited by a sequence of untilted points, consecutive
/// duplicates removed.
pub fn project(params: &TilingParams, points: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let mut out: Vec<Vec<i64>> = Vec::new();
    for p in points {
        let idx = params.index_of(p);
        if out.last() != Some(&idx) {
            out.push(idx);
        }
    }
    out
}
