//! Deterministic online router.
//!
//! Every request is first routed as a path through square tiles of the
//! untilted space-time plane. Accepted requests are then routed inside the
//! tiles on three reserved tracks. Track 1 carries the straight first and last
//! runs, track 2 the runs in between and track 3 the final climb to the
//! destination inside the last tile. Each track uses at most one unit of every
//! link and buffer, so `B, c ≥ 3` is required.

mod internal;
mod variants;

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;

use thiserror::Error;

use crate::interval::{Interval, Offer, PackState};
use crate::ipp::{ipp_process, Dag, Decision, PrimalDualState};
use crate::model::{arrival_order, filter_simultaneous, validate_request, Capacity, GridSpec, PacketRequest};
use crate::route::{DetailedPath, PathEnd, RouteResult, Step};
use crate::spacetime::pmax_line;
use crate::tiling::tile_side_k;

pub use internal::{route_internal_ddim, route_internal_step, simulate_tile, Dir, TileEntry};
pub use variants::{run_bufferless, run_large_capacity, LargeCapacityParams};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum DetError {
    #[error("this variant supports lines only (d = 1), got d = {0}")]
    Dimension(usize),
    #[error("buffer size and link capacity must be at least {need}, got B = {b}, c = {c}")]
    Capacity { need: u64, b: u32, c: u32 },
    #[error("the bufferless variant needs B = 0, got B = {0}")]
    NotBufferless(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetVariant {
    Det,
    DetDeadline,
    Bufferless,
    LargeCapacity,
}

impl FromStr for DetVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "det" => Ok(DetVariant::Det),
            "det-deadline" => Ok(DetVariant::DetDeadline),
            "bufferless" => Ok(DetVariant::Bufferless),
            "large-capacity" => Ok(DetVariant::LargeCapacity),
            other => Err(format!("unknown deterministic variant `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TileCount {
    pub reached: usize,
    pub delivered: usize,
}

/// Counters gathered during a run of the three-track router.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetDiagnostics {
    pub k: u64,
    pub pmax: u64,
    pub invalid: usize,
    pub filtered: usize,
    pub ipp_rejected: usize,
    pub injected: usize,
    /// Packets that started the climb inside their last tile.
    pub reached_last_tile: usize,
    pub per_tile: BTreeMap<(i64, i64), TileCount>,
    pub special_preemptions: usize,
    /// Special-run preemptions of packets already inside their bend tile.
    pub preempted_in_bend_tile: usize,
    /// First runs that could not leave track 1 inside their bend tile.
    pub bend_blocked: usize,
    pub last_tile_preemptions: usize,
    pub internal_failures: usize,
    pub projection_failures: usize,
    /// Largest flow on an edge between two tiles.
    pub max_inter_tile_load: u64,
}

impl DetDiagnostics {
    pub fn last_tile_reach_ok(&self) -> bool {
        self.reached_last_tile as u64 * 2 * self.k >= self.injected as u64
    }

    pub fn per_tile_delivery_ok(&self) -> bool {
        self.per_tile.values().all(|c| c.delivered as u64 * 2 * self.k >= c.reached as u64)
    }
}

/// Edge of the tile graph. Tiles are `(row, column)` in the untilted plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SketchKey {
    Interior(i64, i64),
    North(i64, i64),
    East(i64, i64),
    Sink(i64, i64),
}

/// Tile sequence chosen for one request.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SketchPath {
    pub owner: u64,
    pub tiles: Vec<(i64, i64)>,
    /// `dirs[j]` leads from `tiles[j]` to `tiles[j + 1]`.
    pub dirs: Vec<Dir>,
}

impl SketchPath {
    pub fn from_keys(owner: u64, keys: &[SketchKey]) -> Self {
        let start = match keys.first() {
            Some(SketchKey::Interior(x, y)) => (*x, *y),
            other => panic!("path must start inside a tile, got {other:?}"),
        };
        let mut tiles = vec![start];
        let mut dirs = Vec::new();
        for key in keys {
            let &(x, y) = tiles.last().unwrap();
            match *key {
                SketchKey::North(kx, ky) => {
                    assert_eq!((kx, ky), (x, y));
                    tiles.push((x + 1, y));
                    dirs.push(Dir::N);
                }
                SketchKey::East(kx, ky) => {
                    assert_eq!((kx, ky), (x, y));
                    tiles.push((x, y + 1));
                    dirs.push(Dir::E);
                }
                SketchKey::Interior(..) | SketchKey::Sink(..) => {}
            }
        }
        SketchPath { owner, tiles, dirs }
    }

    /// Number of tile-to-tile moves.
    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    /// Number of maximal straight runs.
    pub fn runs(&self) -> usize {
        if self.dirs.is_empty() {
            return 0;
        }
        1 + self.dirs.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// Index of the tile where the path first turns.
    pub fn first_bend(&self) -> usize {
        self.dirs.iter().take_while(|&&d| d == self.dirs[0]).count()
    }

    /// Index of the tile where the last straight run starts.
    pub fn last_run_start(&self) -> usize {
        let last = *self.dirs.last().expect("empty path");
        self.dirs.len() - self.dirs.iter().rev().take_while(|&&d| d == last).count()
    }
}

/// Result of a deterministic run.
#[derive(Clone, Debug)]
pub struct DetOutput {
    pub result: RouteResult,
    pub diag: DetDiagnostics,
    pub sketch: BTreeMap<u64, SketchPath>,
}

/// A row (fixed node, buffer steps) or a column (fixed untilted time, link
/// steps) of the untilted plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Line {
    Row(i64),
    Col(i64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    First,
    Internal,
    LastSeg,
    LastTile,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Cause {
    Special,
    BendBlocked,
    LastTile,
    Internal,
    Projection,
}

#[derive(Clone, Debug)]
struct Pkt {
    b: i64,
    x: i64,
    y: i64,
    plan: SketchPath,
    idx: usize,
    phase: Phase,
    held: Option<(Line, u8)>,
    last: Option<Dir>,
    last_tile: Option<(i64, i64)>,
    path: DetailedPath,
}

impl Pkt {
    fn runs(&self) -> usize {
        self.plan.runs()
    }

    fn m(&self) -> usize {
        self.plan.len()
    }
}

struct Router {
    k: i64,
    ipp: PrimalDualState<SketchKey, f64>,
    max_col: Option<i64>,
    packs: HashMap<(Line, u8), PackState>,
    active: BTreeMap<u64, Pkt>,
    result: RouteResult,
    diag: DetDiagnostics,
    sketch: BTreeMap<u64, SketchPath>,
}

impl Router {
    fn tile(&self, x: i64, y: i64) -> (i64, i64) {
        (x.div_euclid(self.k), y.div_euclid(self.k))
    }

    fn sketch_dag(&self, req: &PacketRequest) -> (Dag<SketchKey>, usize, usize) {
        let (a, b) = (req.a[0] as i64, req.b[0] as i64);
        let (xa, ya) = self.tile(a, req.t as i64 - a);
        let xb = b.div_euclid(self.k);
        let mut yhi = ya.max(self.max_col.map_or(ya, |m| m + 1));
        // Tiles whose column starts after the deadline cannot hold a timely copy.
        let last_sink = req.deadline.map(|d| (d as i64 - b).div_euclid(self.k));
        if let Some(ls) = last_sink {
            yhi = yhi.min(ls).max(ya);
        }
        let rows = (xb - xa + 1) as usize;
        let cols = (yhi - ya + 1) as usize;
        let id = |x: i64, y: i64, out: bool| (((x - xa) as usize * cols + (y - ya) as usize) * 2) + out as usize;
        let mut dag = Dag::new(rows * cols * 2 + 1);
        let sink = rows * cols * 2;
        for x in xa..=xb {
            for y in ya..=yhi {
                dag.add_edge(id(x, y, false), id(x, y, true), SketchKey::Interior(x, y), Capacity::Finite(2));
                if x < xb {
                    dag.add_edge(id(x, y, true), id(x + 1, y, false), SketchKey::North(x, y), Capacity::Finite(1));
                }
                if y < yhi {
                    dag.add_edge(id(x, y, true), id(x, y + 1, false), SketchKey::East(x, y), Capacity::Finite(1));
                }
                if x == xb && last_sink.is_none_or(|ls| y <= ls) {
                    dag.add_edge(id(x, y, true), sink, SketchKey::Sink(x, y), Capacity::Infinite);
                }
            }
        }
        (dag, id(xa, ya, false), sink)
    }

    fn admit(&mut self, req: &PacketRequest) {
        let (dag, src, sink) = self.sketch_dag(req);
        let keys = match ipp_process(&mut self.ipp, req.id, &dag, src, &[sink]) {
            Decision::Accept(keys) => keys,
            Decision::Reject => {
                self.diag.ipp_rejected += 1;
                return;
            }
        };
        for key in &keys {
            let col = match *key {
                SketchKey::Interior(_, y) | SketchKey::North(_, y) | SketchKey::Sink(_, y) => y,
                SketchKey::East(_, y) => y + 1,
            };
            self.max_col = Some(self.max_col.map_or(col, |m| m.max(col)));
            if matches!(key, SketchKey::North(..) | SketchKey::East(..)) {
                self.diag.max_inter_tile_load = self.diag.max_inter_tile_load.max(self.ipp.flow_of(key));
            }
        }
        self.diag.injected += 1;
        let plan = SketchPath::from_keys(req.id, &keys);
        self.sketch.insert(req.id, plan.clone());
        let (a, b) = (req.a[0] as i64, req.b[0] as i64);
        let pkt = Pkt {
            b,
            x: a,
            y: req.t as i64 - a,
            plan,
            idx: 0,
            phase: Phase::First,
            held: None,
            last: None,
            last_tile: None,
            path: DetailedPath::new(req.id, req.a.clone(), req.t),
        };
        let id = req.id;
        self.active.insert(id, pkt);
        if self.active[&id].m() == 0 {
            self.enter_last_tile(id);
        } else {
            self.start_first(id);
        }
        if self.active.contains_key(&id) {
            self.advance_phases(id);
        }
    }

    fn offer(&mut self, id: u64, line: Line, track: u8, a: i64, b: i64) -> bool {
        let st = self.packs.entry((line, track)).or_default();
        match st.offer(Interval::new(a, b, id)).expect("offers on a line arrive in time order") {
            Offer::Rejected => false,
            Offer::Accepted { preempted } => {
                if let Some(j) = preempted {
                    let cause = if track == 3 { Cause::LastTile } else { Cause::Special };
                    self.kill(j, cause);
                }
                self.active.get_mut(&id).unwrap().held = Some((line, track));
                true
            }
        }
    }

    fn release(&mut self, id: u64) {
        if let Some(key) = self.active.get_mut(&id).and_then(|p| p.held.take()) {
            if let Some(st) = self.packs.get_mut(&key) {
                st.release(id);
            }
        }
    }

    fn kill(&mut self, id: u64, cause: Cause) {
        self.release(id);
        let Some(mut pkt) = self.active.remove(&id) else { return };
        if cause == Cause::Special && pkt.phase == Phase::First && pkt.runs() >= 3 && pkt.idx == pkt.plan.first_bend() {
            self.diag.preempted_in_bend_tile += 1;
        }
        match cause {
            Cause::Special => self.diag.special_preemptions += 1,
            Cause::BendBlocked => self.diag.bend_blocked += 1,
            Cause::LastTile => self.diag.last_tile_preemptions += 1,
            Cause::Internal => self.diag.internal_failures += 1,
            Cause::Projection => self.diag.projection_failures += 1,
        }
        pkt.path.end = PathEnd::Drop;
        self.result.finish(pkt.path);
    }

    fn deliver(&mut self, id: u64) {
        self.release(id);
        let mut pkt = self.active.remove(&id).unwrap();
        if let Some(s) = pkt.last_tile {
            self.diag.per_tile.entry(s).or_default().delivered += 1;
        }
        pkt.path.end = PathEnd::Deliver;
        self.result.finish(pkt.path);
    }

    fn start_first(&mut self, id: u64) {
        let p = &self.active[&id];
        let (line, a, end) = first_segment(&p.plan, p.x, p.y, self.k);
        if !self.offer(id, line, 1, a, end) {
            self.kill(id, Cause::Special);
        }
    }

    fn start_last_seg(&mut self, id: u64) {
        let k = self.k;
        let p = self.active.get_mut(&id).unwrap();
        p.phase = Phase::LastSeg;
        let (xm, ym) = *p.plan.tiles.last().unwrap();
        let (line, a, end) = match *p.plan.dirs.last().unwrap() {
            Dir::N => {
                assert_eq!(p.y, ym * k, "last run must start on the west side of its column");
                (Line::Col(p.y), p.x, xm * k)
            }
            Dir::E => {
                assert_eq!(p.x, xm * k, "last run must start on the south side of its row");
                (Line::Row(p.x), p.y, ym * k)
            }
        };
        if !self.offer(id, line, 1, a, end) {
            self.kill(id, Cause::Special);
        }
    }

    fn enter_last_tile(&mut self, id: u64) {
        let p = self.active.get_mut(&id).unwrap();
        p.phase = Phase::LastTile;
        let s = p.plan.tiles[p.idx];
        p.last_tile = Some(s);
        let (x, y, b) = (p.x, p.y, p.b);
        self.diag.reached_last_tile += 1;
        self.diag.per_tile.entry(s).or_default().reached += 1;
        if x < b && !self.offer(id, Line::Col(y), 3, x, b) {
            self.kill(id, Cause::LastTile);
        }
    }

    /// Applies phase changes triggered by the packet's current position.
    fn advance_phases(&mut self, id: u64) {
        while let Some(p) = self.active.get(&id) {
            let (q, m, idx) = (p.runs(), p.m(), p.idx);
            match p.phase {
                Phase::First if q == 1 && idx == m => {
                    self.release(id);
                    self.enter_last_tile(id);
                }
                Phase::First if q == 2 && idx == p.plan.first_bend() => {
                    self.release(id);
                    self.start_last_seg(id);
                }
                Phase::Internal if idx == p.plan.last_run_start() => self.start_last_seg(id),
                Phase::LastSeg if idx == m => {
                    self.release(id);
                    self.enter_last_tile(id);
                }
                Phase::LastTile if p.x == p.b => {
                    self.deliver(id);
                    return;
                }
                _ => return,
            }
        }
    }

    /// Chooses this step's move for every active packet and applies it.
    fn step(&mut self) {
        #[derive(Default)]
        struct Node {
            horz: Option<u64>,
            vert: Option<u64>,
            cand_e: Option<u64>,
            cand_n: Option<u64>,
        }
        let k = self.k;
        let mut moves: Vec<(u64, Dir, u8)> = Vec::new();
        let mut nodes: BTreeMap<(i64, i64), Node> = BTreeMap::new();
        for (&id, p) in &self.active {
            match p.phase {
                Phase::First if p.runs() >= 3 && p.idx == p.plan.first_bend() => {
                    let node = nodes.entry((p.x, p.y)).or_default();
                    let slot = if p.plan.dirs[0] == Dir::E { &mut node.cand_e } else { &mut node.cand_n };
                    assert!(slot.is_none(), "two track-1 packets on one edge");
                    *slot = Some(id);
                }
                Phase::First => moves.push((id, p.plan.dirs[0], 1)),
                Phase::Internal => {
                    let node = nodes.entry((p.x, p.y)).or_default();
                    let slot = if p.last == Some(Dir::E) { &mut node.horz } else { &mut node.vert };
                    assert!(slot.is_none(), "two track-2 packets on one edge");
                    *slot = Some(id);
                }
                Phase::LastSeg => moves.push((id, *p.plan.dirs.last().unwrap(), 1)),
                Phase::LastTile => moves.push((id, Dir::N, 3)),
            }
        }
        let mut merged = Vec::new();
        let mut blocked = Vec::new();
        for ((x, y), node) in nodes {
            let want = |id: Option<u64>| id.map(|i| self.active[&i].plan.dirs[self.active[&i].idx]);
            let (ho, vo) = route_internal_step(want(node.horz), want(node.vert));
            if let (Some(id), Some(d)) = (node.horz, ho) {
                moves.push((id, d, 2));
            }
            if let (Some(id), Some(d)) = (node.vert, vo) {
                moves.push((id, d, 2));
            }
            let n_free = ho != Some(Dir::N) && vo != Some(Dir::N);
            let e_free = ho != Some(Dir::E) && vo != Some(Dir::E);
            if let Some(id) = node.cand_e {
                let s = self.active[&id].plan.tiles[self.active[&id].idx];
                if n_free {
                    merged.push(id);
                    moves.push((id, Dir::N, 2));
                } else if y == (s.1 + 1) * k - 1 {
                    blocked.push(id);
                } else {
                    moves.push((id, Dir::E, 1));
                }
            }
            if let Some(id) = node.cand_n {
                let s = self.active[&id].plan.tiles[self.active[&id].idx];
                if e_free {
                    merged.push(id);
                    moves.push((id, Dir::E, 2));
                } else if x == (s.0 + 1) * k - 1 {
                    blocked.push(id);
                } else {
                    moves.push((id, Dir::N, 1));
                }
            }
        }
        for id in blocked {
            self.kill(id, Cause::BendBlocked);
        }
        for id in merged {
            self.release(id);
            self.active.get_mut(&id).unwrap().phase = Phase::Internal;
        }
        for (id, dir, track) in moves {
            let p = &self.active[&id];
            let (nx, ny) = match dir {
                Dir::N => (p.x + 1, p.y),
                Dir::E => (p.x, p.y + 1),
            };
            let cur = p.plan.tiles[p.idx];
            let next = self.tile(nx, ny);
            if next != cur {
                if p.plan.tiles.get(p.idx + 1) != Some(&next) {
                    let cause = if p.phase == Phase::Internal { Cause::Internal } else { Cause::Projection };
                    self.kill(id, cause);
                    continue;
                }
                self.active.get_mut(&id).unwrap().idx += 1;
            }
            let p = self.active.get_mut(&id).unwrap();
            p.path.steps.push(match dir {
                Dir::N => Step::Forward(0),
                Dir::E => Step::Store,
            });
            p.path.tracks.push(track);
            p.x = nx;
            p.y = ny;
            p.last = Some(dir);
        }
    }
}

/// Line and interval `(a, end)` used by the first straight run of a path that
/// starts at untilted point `(x, y)`. With three or more runs the interval
/// ends on the last node of the bend tile, otherwise on the entry side of the
/// tile where the next part starts.
pub fn first_segment(plan: &SketchPath, x: i64, y: i64, k: i64) -> (Line, i64, i64) {
    let q = plan.runs();
    assert!(q >= 1, "a path without moves has no first run");
    let target = if q == 1 { *plan.tiles.last().unwrap() } else { plan.tiles[plan.first_bend()] };
    match plan.dirs[0] {
        Dir::N => (Line::Col(y), x, if q <= 2 { target.0 * k } else { (target.0 + 1) * k - 1 }),
        Dir::E => (Line::Row(x), y, if q <= 2 { target.1 * k } else { (target.1 + 1) * k - 1 }),
    }
}

fn check_line(grid: &GridSpec) -> Result<(), DetError> {
    if grid.d() != 1 {
        return Err(DetError::Dimension(grid.d()));
    }
    if grid.b < 3 || grid.c < 3 {
        return Err(DetError::Capacity { need: 3, b: grid.b, c: grid.c });
    }
    Ok(())
}

/// Runs the three-track router. Requests with finite deadlines only use
/// destination copies in time; with unbounded deadlines every copy counts.
/// Packets still travelling after `horizon` end as in flight.
pub fn run_deterministic(trace: &[PacketRequest], grid: &GridSpec, horizon: Option<u64>) -> Result<DetOutput, DetError> {
    check_line(grid)?;
    let pmax = pmax_line(grid.n(), grid.b as u64, grid.c as u64);
    let k = tile_side_k(pmax);
    let mut r = Router {
        k: k as i64,
        ipp: PrimalDualState::new(2 * pmax + 1),
        max_col: None,
        packs: HashMap::new(),
        active: BTreeMap::new(),
        result: RouteResult::new("det", None, trace),
        diag: DetDiagnostics { k, pmax, ..Default::default() },
        sketch: BTreeMap::new(),
    };

    let mut arrivals: BTreeMap<u64, Vec<PacketRequest>> = BTreeMap::new();
    for req in arrival_order(trace) {
        if validate_request(&req, grid).is_err() {
            r.diag.invalid += 1;
            continue;
        }
        arrivals.entry(req.t).or_default().push(req);
    }
    let Some(&first) = arrivals.keys().next() else {
        return Ok(DetOutput { result: r.result, diag: r.diag, sketch: r.sketch });
    };
    let mut t = first;
    loop {
        if horizon.is_some_and(|h| t > h) {
            break;
        }
        let ids: Vec<u64> = r.active.keys().copied().collect();
        for id in ids {
            r.advance_phases(id);
        }
        if let Some(batch) = arrivals.remove(&t) {
            let mut by_source: BTreeMap<u32, Vec<PacketRequest>> = BTreeMap::new();
            for req in batch {
                by_source.entry(req.a[0]).or_default().push(req);
            }
            let mut kept = Vec::new();
            for group in by_source.values() {
                let (keep, drop) = filter_simultaneous(group, grid);
                r.diag.filtered += drop.len();
                kept.extend(keep);
            }
            kept.sort_by_key(|q| q.id);
            for req in &kept {
                r.admit(req);
            }
        }
        if r.active.is_empty() {
            match arrivals.keys().next() {
                Some(&next) => {
                    t = next;
                    continue;
                }
                None => break,
            }
        }
        r.step();
        t += 1;
    }
    for (_, p) in std::mem::take(&mut r.active) {
        r.result.finish(p.path);
    }
    Ok(DetOutput { result: r.result, diag: r.diag, sketch: r.sketch })
}

/// Same pipeline as [`run_deterministic`]; every request must carry a finite
/// deadline. Panics if a packet is delivered late.
pub fn route_with_deadlines(trace: &[PacketRequest], grid: &GridSpec, horizon: Option<u64>) -> Result<DetOutput, DetError> {
    assert!(trace.iter().all(|r| r.deadline.is_some()), "every request needs a finite deadline");
    let mut out = run_deterministic(trace, grid, horizon)?;
    out.result.label = "det-deadline".into();
    for req in trace {
        if let Some(crate::model::Outcome::Delivered(at)) = out.result.outcomes.get(&req.id) {
            assert!(req.meets_deadline(*at), "request {} delivered at {at} after its deadline", req.id);
        }
    }
    Ok(out)
}

/// Dispatches to the chosen variant.
pub fn run_variant(variant: DetVariant, trace: &[PacketRequest], grid: &GridSpec, horizon: Option<u64>) -> Result<DetOutput, DetError> {
    match variant {
        DetVariant::Det => run_deterministic(trace, grid, horizon),
        DetVariant::DetDeadline => {
            let mut out = run_deterministic(trace, grid, horizon)?;
            out.result.label = "det-deadline".into();
            Ok(out)
        }
        DetVariant::Bufferless => {
            let result = run_bufferless(trace, grid)?;
            Ok(DetOutput { result, diag: DetDiagnostics::default(), sketch: BTreeMap::new() })
        }
        DetVariant::LargeCapacity => {
            let (result, params) = run_large_capacity(trace, grid)?;
            let diag = DetDiagnostics { k: params.k, pmax: params.pmax, ..Default::default() };
            Ok(DetOutput { result, diag, sketch: BTreeMap::new() })
        }
    }
}

#[cfg(test)]
mod tests;
