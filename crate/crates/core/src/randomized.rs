//! Randomized online router for a line with small buffers and capacities.
//!
//! Tiles of `Q` nodes by `τ` untilted time steps are shifted at random. A fair
//! coin picks one request class: requests whose source tile contains a copy
//! of the destination (near) are routed greedily inside that tile; requests
//! starting in the south-west quadrant of a tile without such a copy (far⁺)
//! are packed on the tile graph, thinned by a biased coin, capped at a quarter
//! of every tile edge, and then routed without preemption.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::det::Dir;
use crate::ipp::{ipp_process, Dag, Decision, PrimalDualState};
use crate::model::{arrival_order, filter_simultaneous, validate_request, Capacity, GridSpec, PacketRequest};
use crate::route::{DetailedPath, PathEnd, RouteResult, Step};
use crate::tiling::{
    build_sketch, classify, equalize_capacities, quadrant_of, source_point, tile_side_k, tiling_params_rand, Proximity, Quadrant, SinkMode,
    TilingError, TilingParams,
};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum RandError {
    #[error("the randomized router supports lines only, got d = {0}")]
    Dimension(usize),
    #[error(transparent)]
    Tiling(#[from] TilingError),
    #[error("gamma must be positive, got {0}")]
    Gamma(f64),
    #[error("reverse Markov bound needs 0 <= d < a and 0 <= mean <= a")]
    MarkovDomain,
    #[error("check_dom needs L <= B entrywise and equal shapes")]
    NotDominated,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandConfig {
    pub seed: u64,
    pub gamma: f64,
    pub horizon: Option<u64>,
}

impl RandConfig {
    pub fn new(seed: u64) -> Self {
        RandConfig { seed, gamma: 200.0, horizon: None }
    }
}

/// Quantities drawn or derived at the start of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RandParams {
    pub tiling: TilingParams,
    /// Capacity of every tile edge after equalizing: `min(B·Q, c·τ)`.
    pub cs: u64,
    pub pmax: u64,
    pub k: u64,
    pub lambda: f64,
    /// Outcome of the fair coin: `true` routes far⁺ requests, `false` near ones.
    pub far_class: bool,
}

/// Counters of one run. The counterfactual fields compare the real I-routing with
/// I-routing applied to every coin survivor, ignoring the load cap.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RandDiagnostics {
    pub filtered: usize,
    pub invalid: usize,
    pub near: usize,
    pub far: usize,
    pub far_plus: usize,
    pub ipp_accepted: usize,
    pub coin_kept: usize,
    pub load_capped: usize,
    pub claim_failed: usize,
    pub budget_failed: usize,
    pub injected: usize,
    /// Packets that left a quadrant or tile through a forbidden side.
    pub post_injection_failures: usize,
    /// Largest `count / c^S` over tile edges after any accepted path.
    pub max_sketch_load: f64,
    pub counterfactual_i_routed: usize,
    pub dominance_ok: bool,
    pub near_routed: usize,
    pub near_rejected: usize,
}

impl RandDiagnostics {
    /// `|I-routed| + |budget failures| ≥ |I-routable ignoring the cap| − |capped|`.
    pub fn i_routing_accounting_ok(&self) -> bool {
        (self.injected + self.budget_failed) as i64 >= self.counterfactual_i_routed as i64 - self.load_capped as i64
    }
}

#[derive(Clone, Debug)]
pub struct RandOutput {
    pub result: RouteResult,
    pub params: RandParams,
    pub diag: RandDiagnostics,
}

/// Draws the tiling, the fair coin and the derived constants. The generator
/// is consumed in a fixed order: `φ_τ`, `φ_Q`, the fair coin.
pub fn draw_params(grid: &GridSpec, gamma: f64, rng: &mut ChaCha8Rng) -> Result<RandParams, RandError> {
    if grid.d() != 1 {
        return Err(RandError::Dimension(grid.d()));
    }
    // Also rejects NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(gamma > 0.0) {
        return Err(RandError::Gamma(gamma));
    }
    let n = grid.n();
    let tiling = tiling_params_rand(n, grid.b as u64, grid.c as u64, rng)?;
    let cs = equalize_capacities(&build_sketch(grid, &tiling, SinkMode::PerVertex))?;
    let far_class = rng.gen_bool(0.5);
    let pmax = 4 * n;
    let k = tile_side_k(pmax);
    Ok(RandParams { tiling, cs, pmax, k, lambda: (1.0 / (gamma * k as f64)).min(1.0), far_class })
}

/// Tile-graph edge; tiles are `(row, column)` tile indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Key {
    North(i64, i64),
    East(i64, i64),
    Sink(i64, i64),
}

/// Per-node assignment inside quadrants. `horz` and `vert` hold the wanted
/// directions of the packets that arrived along the row and along the column.
/// Straight traffic keeps its edge; packets wanting to turn first swap with
/// packets turning the other way, then use whatever room is left on the
/// perpendicular edge. With `|horz| ≤ B` and `|vert| ≤ c` the outputs respect
/// both capacities.
pub fn quadrant_step(horz: &[Dir], vert: &[Dir], b: u32, c: u32) -> (Vec<Dir>, Vec<Dir>) {
    let mut ho: Vec<Dir> = vec![Dir::E; horz.len()];
    let mut vo: Vec<Dir> = vec![Dir::N; vert.len()];
    let hn: Vec<usize> = (0..horz.len()).filter(|&i| horz[i] == Dir::N).collect();
    let ve: Vec<usize> = (0..vert.len()).filter(|&i| vert[i] == Dir::E).collect();
    let swaps = hn.len().min(ve.len());
    let n_room = (c as usize).saturating_sub(vert.len());
    let e_room = (b as usize).saturating_sub(horz.len());
    for &i in hn.iter().take(swaps + n_room) {
        ho[i] = Dir::N;
    }
    for &i in ve.iter().take(swaps + e_room) {
        vo[i] = Dir::E;
    }
    (ho, vo)
}

/// A packet entering a quadrant box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuadrantEntry {
    /// `Dir::E` enters through the west side at row `offset`, `Dir::N`
    /// through the south side at column `offset`.
    pub from: Dir,
    pub offset: i64,
    /// Side it must leave through: `N` is the north side, `E` the east side.
    pub want: Dir,
}

/// Runs [`quadrant_step`] over a `rows × cols` box. Each entry is one packet;
/// several may share an entry edge. Returns the number of packets that leave
/// through a side other than the one they want.
type Arrivals = (Vec<Dir>, Vec<Dir>);

pub fn simulate_quadrant(rows: i64, cols: i64, b: u32, c: u32, entries: &[QuadrantEntry]) -> usize {
    // (x + y, x, y) → (horizontal arrivals, vertical arrivals)
    let mut pending: BTreeMap<(i64, i64, i64), Arrivals> = BTreeMap::new();
    for e in entries {
        let (x, y) = match e.from {
            Dir::E => (e.offset, 0),
            Dir::N => (0, e.offset),
        };
        let slot = pending.entry((x + y, x, y)).or_default();
        match e.from {
            Dir::E => slot.0.push(e.want),
            Dir::N => slot.1.push(e.want),
        }
    }
    let mut failures = 0;
    while let Some(((_, x, y), (h, v))) = pending.pop_first() {
        assert!(h.len() <= b as usize && v.len() <= c as usize, "entry overload");
        let (ho, vo) = quadrant_step(&h, &v, b, c);
        for (want, go) in h.iter().zip(&ho).chain(v.iter().zip(&vo)) {
            let (nx, ny) = match go {
                Dir::N => (x + 1, y),
                Dir::E => (x, y + 1),
            };
            if nx == rows || ny == cols {
                failures += (go != want) as usize;
                continue;
            }
            let slot = pending.entry((nx + ny, nx, ny)).or_default();
            match go {
                Dir::E => slot.0.push(*want),
                Dir::N => slot.1.push(*want),
            }
        }
    }
    failures
}

/// Dense 0-1 matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl BinaryMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        BinaryMatrix { rows, cols, bits: vec![false; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix");
        BinaryMatrix { rows: rows.len(), cols, bits: rows.iter().flatten().map(|&b| b != 0).collect() }
    }

    pub fn random<R: Rng>(rows: usize, cols: usize, p: f64, rng: &mut R) -> Self {
        BinaryMatrix { rows, cols, bits: (0..rows * cols).map(|_| rng.gen_bool(p)).collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.bits[i * self.cols + j] = v;
    }

    /// Number of ones.
    pub fn weight(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    fn zip(&self, other: &Self, f: impl Fn(bool, bool) -> bool) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        BinaryMatrix { rows: self.rows, cols: self.cols, bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect() }
    }

    pub fn and(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a && b)
    }

    pub fn and_not(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a && !b)
    }

    pub fn le(&self, other: &Self) -> bool {
        (self.rows, self.cols) == (other.rows, other.cols) && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

/// Keeps only the first one of every row.
pub fn matrix_i(x: &BinaryMatrix) -> BinaryMatrix {
    let mut out = BinaryMatrix::zeros(x.rows, x.cols);
    for i in 0..x.rows {
        if let Some(j) = (0..x.cols).find(|&j| x.get(i, j)) {
            out.set(i, j, true);
        }
    }
    out
}

/// `w(I(L)) ≥ w(I(B)) − w(B ∧ ¬L)` for `L ≤ B`.
pub fn check_dom(l: &BinaryMatrix, b: &BinaryMatrix) -> Result<bool, RandError> {
    if !l.le(b) {
        return Err(RandError::NotDominated);
    }
    Ok(matrix_i(l).weight() as i64 >= matrix_i(b).weight() as i64 - b.and_not(l).weight() as i64)
}

/// Lower bound on `Pr[X > d]` for `0 ≤ X ≤ a` with the given mean. Tight
/// for `X` supported on `{d, a}`.
pub fn reverse_markov(mean: f64, a: f64, d: f64) -> Result<f64, RandError> {
    if !(0.0 <= d && d < a && 0.0 <= mean && mean <= a) {
        return Err(RandError::MarkovDomain);
    }
    Ok((mean - d) / (a - d))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    /// Straight run out of the source quadrant.
    I(Dir),
    Routed,
}

#[derive(Clone, Debug)]
struct FarPkt {
    b: i64,
    x: i64,
    y: i64,
    tiles: Vec<(i64, i64)>,
    dirs: Vec<Dir>,
    idx: usize,
    stage: Stage,
    last: Dir,
    path: DetailedPath,
}

/// Where an I-routed request sits: tile, plane, and its line within the plane
/// (the row offset for horizontal planes, the column offset for vertical ones).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlaneLine {
    pub tile: (i64, i64),
    pub plane: usize,
    pub line: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IFail {
    /// Another request already owns the line in this plane.
    Claimed,
    /// The side of the source quadrant already emitted its share.
    Budget,
}

/// Line claims and per-side budgets of the source quadrants.
#[derive(Clone, Debug, Default)]
pub struct ICube {
    budget: u64,
    claims: HashSet<PlaneLine>,
    emitted: HashMap<((i64, i64), Dir), u64>,
}

impl ICube {
    /// `budget` paths may leave each side of each source quadrant.
    pub fn new(budget: u64) -> Self {
        ICube { budget, ..Default::default() }
    }

    /// Claims `line` for a straight exit in direction `dir`. Claims are
    /// permanent.
    pub fn claim(&mut self, line: PlaneLine, dir: Dir) -> Result<(), IFail> {
        if self.claims.contains(&line) {
            return Err(IFail::Claimed);
        }
        let side = self.emitted.entry((line.tile, dir)).or_insert(0);
        if *side >= self.budget {
            return Err(IFail::Budget);
        }
        *side += 1;
        self.claims.insert(line);
        Ok(())
    }
}

/// (row, col, passed the cap).
type IPoint = (usize, usize, bool);

struct Far<'a> {
    grid: &'a GridSpec,
    p: &'a RandParams,
    ipp: PrimalDualState<Key, f64>,
    max_col: Option<i64>,
    load: HashMap<Key, u64>,
    cube: ICube,
    /// Survivors of the coin keyed by (tile, plane): (row, col, passed the cap).
    i_points: BTreeMap<((i64, i64), usize), Vec<IPoint>>,
    /// IPP acceptances per (node, time), giving plane ranks.
    rank: HashMap<(u32, u64), usize>,
    active: BTreeMap<u64, FarPkt>,
}

impl Far<'_> {
    fn tile(&self, x: i64, y: i64) -> (i64, i64) {
        let idx = self.p.tiling.index_of(&[x, y]);
        (idx[0], idx[1])
    }

    fn sketch_dag(&self, req: &PacketRequest) -> (Dag<Key>, usize, usize) {
        let (a, b) = (req.a[0] as i64, req.b[0] as i64);
        let (xa, ya) = self.tile(a, req.t as i64 - a);
        let (xb, _) = self.tile(b, 0);
        let tau = self.p.tiling.tau();
        let phi = self.p.tiling.shifts[1];
        let mut yhi = ya.max(self.max_col.map_or(ya, |m| m + 1));
        // A tile counts as a target only if its whole column range is on time.
        let last_sink = req.deadline.map(|d| (d as i64 - b - phi + 1).div_euclid(tau) - 1);
        if let Some(ls) = last_sink {
            yhi = yhi.min(ls).max(ya);
        }
        let rows = (xb - xa + 1) as usize;
        let cols = (yhi - ya + 1) as usize;
        let id = |x: i64, y: i64| (x - xa) as usize * cols + (y - ya) as usize;
        let sink = rows * cols;
        let mut dag = Dag::new(sink + 1);
        for x in xa..=xb {
            for y in ya..=yhi {
                if x < xb {
                    dag.add_edge(id(x, y), id(x + 1, y), Key::North(x, y), Capacity::Finite(self.p.cs));
                }
                if y < yhi {
                    dag.add_edge(id(x, y), id(x, y + 1), Key::East(x, y), Capacity::Finite(self.p.cs));
                }
                if x == xb && last_sink.is_none_or(|ls| y <= ls) {
                    dag.add_edge(id(x, y), sink, Key::Sink(x, y), Capacity::Infinite);
                }
            }
        }
        (dag, id(xa, ya), sink)
    }

    /// Steps 1–4 for one far⁺ request. Returns the packet if injected.
    fn process(&mut self, req: &PacketRequest, rng: &mut ChaCha8Rng, diag: &mut RandDiagnostics) -> Option<FarPkt> {
        let (dag, src, sink) = self.sketch_dag(req);
        let Decision::Accept(keys) = ipp_process(&mut self.ipp, req.id, &dag, src, &[sink]) else { return None };
        diag.ipp_accepted += 1;
        let rank = self.rank.entry((req.a[0], req.t)).or_insert(0);
        let plane = *rank;
        *rank += 1;
        for key in &keys {
            let col = match *key {
                Key::North(_, y) | Key::Sink(_, y) => y,
                Key::East(_, y) => y + 1,
            };
            self.max_col = Some(self.max_col.map_or(col, |m| m.max(col)));
        }

        if !rng.gen_bool(self.p.lambda) {
            return None;
        }
        diag.coin_kept += 1;

        let a = req.a[0] as i64;
        let y = req.t as i64 - a;
        let tile = self.tile(a, y);
        let off = self.p.tiling.offsets(&[a, y]);
        let horizontal = plane < self.grid.b as usize;
        let (row, col) = if horizontal { (off[0] as usize, off[1] as usize) } else { (off[1] as usize, off[0] as usize) };
        let edges: Vec<Key> = keys.iter().copied().filter(|k| !matches!(k, Key::Sink(..))).collect();
        let capped = edges.iter().any(|k| 4 * (self.load.get(k).copied().unwrap_or(0) + 1) >= self.p.cs);
        self.i_points.entry((tile, plane)).or_default().push((row, col, !capped));
        if capped {
            diag.load_capped += 1;
            return None;
        }
        for k in &edges {
            let l = self.load.entry(*k).or_insert(0);
            *l += 1;
            diag.max_sketch_load = diag.max_sketch_load.max(*l as f64 / self.p.cs as f64);
        }

        let dir = if horizontal { Dir::E } else { Dir::N };
        let line = PlaneLine { tile, plane, line: if horizontal { off[0] } else { off[1] } };
        match self.cube.claim(line, dir) {
            Ok(()) => {}
            Err(IFail::Claimed) => {
                diag.claim_failed += 1;
                return None;
            }
            Err(IFail::Budget) => {
                diag.budget_failed += 1;
                return None;
            }
        }
        diag.injected += 1;

        let mut tiles = vec![tile];
        let mut dirs = Vec::new();
        for key in &keys {
            let &(tx, ty) = tiles.last().unwrap();
            match *key {
                Key::North(..) => {
                    tiles.push((tx + 1, ty));
                    dirs.push(Dir::N);
                }
                Key::East(..) => {
                    tiles.push((tx, ty + 1));
                    dirs.push(Dir::E);
                }
                Key::Sink(..) => {}
            }
        }
        Some(FarPkt {
            b: req.b[0] as i64,
            x: a,
            y,
            tiles,
            dirs,
            idx: 0,
            stage: Stage::I(dir),
            last: dir,
            path: DetailedPath::new(req.id, req.a.clone(), req.t),
        })
    }

    fn want(&self, p: &FarPkt) -> Dir {
        if p.idx + 1 == p.tiles.len() {
            return Dir::N;
        }
        match quadrant_of(&self.p.tiling, &[p.x, p.y]) {
            Quadrant::NW => Dir::E,
            Quadrant::SE => Dir::N,
            Quadrant::NE => p.dirs[p.idx],
            Quadrant::SW => p.last,
        }
    }

    /// Delivers arrived packets and moves the rest by one step. Returns the
    /// finished paths and the number of routing failures.
    fn step(&mut self) -> (Vec<DetailedPath>, usize) {
        let mut done = Vec::new();
        let arrived: Vec<u64> = self.active.iter().filter(|(_, p)| p.idx + 1 == p.tiles.len() && p.x == p.b).map(|(&id, _)| id).collect();
        for id in arrived {
            let mut p = self.active.remove(&id).unwrap();
            p.path.end = PathEnd::Deliver;
            done.push(p.path);
        }

        let mut moves: Vec<(u64, Dir)> = Vec::new();
        let mut nodes: BTreeMap<(i64, i64), (Vec<u64>, Vec<u64>)> = BTreeMap::new();
        for (&id, p) in &self.active {
            match p.stage {
                Stage::I(d) => moves.push((id, d)),
                Stage::Routed => {
                    let slot = nodes.entry((p.x, p.y)).or_default();
                    if p.last == Dir::E {
                        slot.0.push(id);
                    } else {
                        slot.1.push(id);
                    }
                }
            }
        }
        for (h, v) in nodes.into_values() {
            let hw: Vec<Dir> = h.iter().map(|i| self.want(&self.active[i])).collect();
            let vw: Vec<Dir> = v.iter().map(|i| self.want(&self.active[i])).collect();
            let (ho, vo) = quadrant_step(&hw, &vw, self.grid.b, self.grid.c);
            moves.extend(h.into_iter().zip(ho));
            moves.extend(v.into_iter().zip(vo));
        }

        let mut failures = 0;
        for (id, dir) in moves {
            let p = &self.active[&id];
            let (nx, ny) = match dir {
                Dir::N => (p.x + 1, p.y),
                Dir::E => (p.x, p.y + 1),
            };
            let cur = p.tiles[p.idx];
            let next = self.tile(nx, ny);
            let from_q = quadrant_of(&self.p.tiling, &[p.x, p.y]);
            let ok =
                if next == cur { true } else { from_q == Quadrant::NE && p.tiles.get(p.idx + 1) == Some(&next) && p.dirs[p.idx] == dir };
            // Entering the last tile is only possible from the south.
            let ok = ok && !(next != cur && p.idx + 2 == p.tiles.len() && dir == Dir::E);
            if !ok {
                failures += 1;
                let mut p = self.active.remove(&id).unwrap();
                p.path.end = PathEnd::Drop;
                done.push(p.path);
                continue;
            }
            let in_sw = quadrant_of(&self.p.tiling, &[nx, ny]) == Quadrant::SW && next == cur;
            let p = self.active.get_mut(&id).unwrap();
            if next != cur {
                p.idx += 1;
            }
            if !in_sw {
                p.stage = Stage::Routed;
            }
            p.path.steps.push(match dir {
                Dir::N => Step::Forward(0),
                Dir::E => Step::Store,
            });
            p.x = nx;
            p.y = ny;
            p.last = dir;
        }
        (done, failures)
    }

    /// Counterfactual I-routing counts from the recorded coin survivors.
    fn i_routing_counts(&self, diag: &mut RandDiagnostics) {
        let half_q = (self.p.tiling.q() / 2) as usize;
        let half_tau = (self.p.tiling.tau() / 2) as usize;
        diag.dominance_ok = true;
        for ((_, plane), pts) in &self.i_points {
            let (r, c) = if *plane < self.grid.b as usize { (half_q, half_tau) } else { (half_tau, half_q) };
            let mut az = BinaryMatrix::zeros(r, c);
            let mut l = BinaryMatrix::zeros(r, c);
            for &(i, j, kept) in pts {
                az.set(i, j, true);
                if kept {
                    l.set(i, j, true);
                }
            }
            diag.counterfactual_i_routed += matrix_i(&az).weight();
            diag.dominance_ok &= check_dom(&l, &az).expect("capped survivors are a subset");
        }
    }
}

/// Greedy routing inside the source tile: climb in the current column if no
/// link on the way is full, otherwise wait one step if the buffer has room.
struct Near<'a> {
    grid: &'a GridSpec,
    p: &'a RandParams,
    load: HashMap<(i64, i64, bool), u32>,
}

impl Near<'_> {
    fn process(&mut self, req: &PacketRequest) -> Option<DetailedPath> {
        let (a, b) = (req.a[0] as i64, req.b[0] as i64);
        let y0 = req.t as i64 - a;
        let tile = self.p.tiling.tile_of_point(&[a, y0]);
        let mut y = y0;
        loop {
            if !self.p.tiling.contains(&tile, &[a, y]) {
                return None;
            }
            let free = (a..b).all(|x| self.load.get(&(x, y, false)).copied().unwrap_or(0) < self.grid.c);
            if free {
                break;
            }
            if self.load.get(&(a, y, true)).copied().unwrap_or(0) >= self.grid.b {
                return None;
            }
            y += 1;
        }
        let arrival = req.t + (y - y0) as u64 + (b - a) as u64;
        if !req.meets_deadline(arrival) {
            return None;
        }
        let mut path = DetailedPath::new(req.id, req.a.clone(), req.t);
        for w in y0..y {
            *self.load.entry((a, w, true)).or_insert(0) += 1;
            path.steps.push(Step::Store);
        }
        for x in a..b {
            *self.load.entry((x, y, false)).or_insert(0) += 1;
            path.steps.push(Step::Forward(0));
        }
        path.end = PathEnd::Deliver;
        Some(path)
    }
}

/// Runs the randomized router with the given seed.
pub fn run_randomized(trace: &[PacketRequest], grid: &GridSpec, cfg: &RandConfig) -> Result<RandOutput, RandError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = draw_params(grid, cfg.gamma, &mut rng)?;
    let mut result = RouteResult::new("rand", Some(cfg.seed), trace);
    let mut diag = RandDiagnostics { dominance_ok: true, ..Default::default() };

    let mut arrivals: BTreeMap<u64, Vec<PacketRequest>> = BTreeMap::new();
    for req in arrival_order(trace) {
        if validate_request(&req, grid).is_err() {
            diag.invalid += 1;
            continue;
        }
        arrivals.entry(req.t).or_default().push(req);
    }

    let mut far = Far {
        grid,
        p: &params,
        ipp: PrimalDualState::new(params.pmax),
        max_col: None,
        load: HashMap::new(),
        cube: ICube::new(params.cs / 4),
        i_points: BTreeMap::new(),
        rank: HashMap::new(),
        active: BTreeMap::new(),
    };
    let mut near = Near { grid, p: &params, load: HashMap::new() };

    let mut t = arrivals.keys().next().copied().unwrap_or(0);
    loop {
        if cfg.horizon.is_some_and(|h| t > h) {
            break;
        }
        if let Some(batch) = arrivals.remove(&t) {
            let mut by_source: BTreeMap<u32, Vec<PacketRequest>> = BTreeMap::new();
            for req in batch {
                by_source.entry(req.a[0]).or_default().push(req);
            }
            let mut kept = Vec::new();
            for group in by_source.values() {
                let (keep, drop) = filter_simultaneous(group, grid);
                diag.filtered += drop.len();
                kept.extend(keep);
            }
            kept.sort_by_key(|q| q.id);
            for req in &kept {
                let class = classify(req, &params.tiling);
                let sw = quadrant_of(&params.tiling, &source_point(req)) == Quadrant::SW;
                match class {
                    Proximity::Near => diag.near += 1,
                    Proximity::Far => {
                        diag.far += 1;
                        diag.far_plus += sw as usize;
                    }
                }
                match (params.far_class, class) {
                    (true, Proximity::Far) if sw => {
                        if let Some(pkt) = far.process(req, &mut rng, &mut diag) {
                            far.active.insert(req.id, pkt);
                        }
                    }
                    (false, Proximity::Near) => match near.process(req) {
                        Some(path) => {
                            diag.near_routed += 1;
                            result.finish(path);
                        }
                        None => diag.near_rejected += 1,
                    },
                    _ => {}
                }
            }
        }
        if far.active.is_empty() {
            match arrivals.keys().next() {
                Some(&next) => {
                    t = next;
                    continue;
                }
                None => break,
            }
        }
        let (done, failures) = far.step();
        diag.post_injection_failures += failures;
        for p in done {
            result.finish(p);
        }
        t += 1;
    }
    for (_, p) in std::mem::take(&mut far.active) {
        result.finish(p.path);
    }
    far.i_routing_counts(&mut diag);
    Ok(RandOutput { result, params, diag })
}
