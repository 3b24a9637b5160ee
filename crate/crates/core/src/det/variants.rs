//! Bufferless and large-capacity variants. Both route each packet along a
//! fixed path chosen at injection, so the outcome of a packet is known as soon
//! as it is accepted (except for nearest-to-go preemptions on lines).

use std::collections::{BTreeMap, HashMap};

use crate::ipp::{ipp_process, Dag, Decision, PrimalDualState};
use crate::model::{arrival_order, validate_request, Capacity, Coord, GridSpec, PacketRequest};
use crate::route::{DetailedPath, PathEnd, RouteResult, Step};
use crate::spacetime::pmax_st_line;
use crate::tiling::tile_side_k;

use super::DetError;

/// Routes without buffers. On a line every packet rides straight to its
/// destination and a node overloaded with more than `c` packets keeps the ones
/// closest to their destinations. On grids each request is routed along a
/// fixed monotone path chosen by online packing inside its copy of the grid.
pub fn run_bufferless(trace: &[PacketRequest], grid: &GridSpec) -> Result<RouteResult, DetError> {
    if grid.b != 0 {
        return Err(DetError::NotBufferless(grid.b));
    }
    let valid: Vec<PacketRequest> = arrival_order(trace).into_iter().filter(|r| validate_request(r, grid).is_ok()).collect();
    let mut result = RouteResult::new("bufferless", None, trace);
    if grid.d() == 1 {
        nearest_to_go_bufferless(&valid, grid, &mut result);
    } else {
        packed_components(&valid, grid, &mut result);
    }
    Ok(result)
}

fn nearest_to_go_bufferless(reqs: &[PacketRequest], grid: &GridSpec, result: &mut RouteResult) {
    let mut arrivals: BTreeMap<u64, Vec<&PacketRequest>> = BTreeMap::new();
    for r in reqs {
        arrivals.entry(r.t).or_default().push(r);
    }
    // Packets in the network keyed by current node.
    let mut live: Vec<(u32, u32, DetailedPath)> = Vec::new();
    let Some(&first) = arrivals.keys().next() else { return };
    let mut t = first;
    while !live.is_empty() || !arrivals.is_empty() {
        if live.is_empty() {
            t = *arrivals.keys().next().unwrap();
        }
        for r in arrivals.remove(&t).unwrap_or_default() {
            live.push((r.a[0], r.b[0], DetailedPath::new(r.id, r.a.clone(), r.t)));
        }
        let mut at: BTreeMap<u32, Vec<(u32, DetailedPath)>> = BTreeMap::new();
        for (x, b, p) in live.drain(..) {
            at.entry(x).or_default().push((b, p));
        }
        for (x, mut group) in at {
            group.sort_by_key(|(b, p)| (*b, p.id));
            let mut sent = 0;
            for (b, mut p) in group {
                if b == x {
                    p.end = PathEnd::Deliver;
                    result.finish(p);
                } else if sent < grid.c {
                    sent += 1;
                    p.steps.push(Step::Forward(0));
                    live.push((x + 1, b, p));
                } else {
                    p.end = PathEnd::Drop;
                    result.finish(p);
                }
            }
        }
        t += 1;
    }
}

/// Edge of one bufferless copy of the grid: copy index, tail node, axis.
type CompKey = (i64, Coord, usize);

fn packed_components(reqs: &[PacketRequest], grid: &GridSpec, result: &mut RouteResult) {
    let mut ipp: PrimalDualState<CompKey, f64> = PrimalDualState::new(grid.diam().max(1));
    let mut used: HashMap<CompKey, u32> = HashMap::new();
    for r in reqs {
        let comp = r.t as i64 - r.a.iter().map(|&x| x as i64).sum::<i64>();
        let (dag, nodes) = box_dag(&r.a, &r.b, comp, grid.c as u64);
        let src = 0;
        let dst = nodes.len() - 1;
        let Decision::Accept(keys) = ipp_process(&mut ipp, r.id, &dag, src, &[dst]) else { continue };
        // Packing loads can exceed c by a logarithmic factor; the true
        // capacity decides.
        if keys.iter().any(|k| used.get(k).copied().unwrap_or(0) >= grid.c) {
            continue;
        }
        let mut p = DetailedPath::new(r.id, r.a.clone(), r.t);
        for k in &keys {
            *used.entry(k.clone()).or_insert(0) += 1;
            p.steps.push(Step::Forward(k.2));
        }
        p.end = PathEnd::Deliver;
        result.finish(p);
    }
}

/// DAG of all monotone moves inside the box spanned by `a` and `b`. Node 0 is
/// `a` and the last node is `b`.
fn box_dag(a: &[u32], b: &[u32], comp: i64, c: u64) -> (Dag<CompKey>, Vec<Coord>) {
    let d = a.len();
    let mut nodes: Vec<Coord> = vec![a.to_vec()];
    loop {
        let mut next = nodes.last().unwrap().clone();
        let mut axis = d;
        for i in (0..d).rev() {
            if next[i] < b[i] {
                next[i] += 1;
                axis = i;
                break;
            }
            next[i] = a[i];
        }
        if axis == d {
            break;
        }
        nodes.push(next);
    }
    let index: HashMap<&Coord, usize> = nodes.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let mut dag = Dag::new(nodes.len());
    for (i, v) in nodes.iter().enumerate() {
        for axis in 0..d {
            if v[axis] < b[axis] {
                let mut w = v.clone();
                w[axis] += 1;
                dag.add_edge(i, index[&w], (comp, v.clone(), axis), Capacity::Finite(c));
            }
        }
    }
    (dag, nodes)
}

/// Parameters of the large-capacity variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LargeCapacityParams {
    pub pmax: u64,
    pub k: u64,
    pub b_scaled: u64,
    pub c_scaled: u64,
}

impl LargeCapacityParams {
    pub fn for_grid(grid: &GridSpec) -> Self {
        let pmax = pmax_st_line(grid.n(), grid.b as u64, grid.c as u64);
        let k = tile_side_k(pmax);
        LargeCapacityParams { pmax, k, b_scaled: grid.b as u64 / k, c_scaled: grid.c as u64 / k }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum StKey {
    Move(u32, u64),
    Buffer(u32, u64),
}

/// Packs space-time paths of at most `pmax` steps with capacities scaled down
/// by `k`, so that the packing's logarithmic overload stays within the true
/// capacities. Accepted packets are never dropped.
pub fn run_large_capacity(trace: &[PacketRequest], grid: &GridSpec) -> Result<(RouteResult, LargeCapacityParams), DetError> {
    if grid.d() != 1 {
        return Err(DetError::Dimension(grid.d()));
    }
    let params = LargeCapacityParams::for_grid(grid);
    if params.b_scaled == 0 || params.c_scaled == 0 {
        return Err(DetError::Capacity { need: params.k, b: grid.b, c: grid.c });
    }
    let mut result = RouteResult::new("large-capacity", None, trace);
    let mut ipp: PrimalDualState<StKey, f64> = PrimalDualState::new(params.pmax);
    let mut used: HashMap<StKey, u64> = HashMap::new();
    for r in arrival_order(trace) {
        if validate_request(&r, grid).is_err() {
            continue;
        }
        let (a, b) = (r.a[0], r.b[0]);
        let mut width = params.pmax;
        if let Some(d) = r.deadline {
            width = width.min(d - r.t);
        }
        let dist = (b - a) as u64;
        if width < dist {
            continue;
        }
        // Node (x, s) is node x at time t + s.
        let span = (b - a + 1) as usize;
        let id = |x: u32, s: u64| s as usize * span + (x - a) as usize;
        let mut dag = Dag::new(span * (width as usize + 1));
        for s in 0..=width {
            for x in a..=b {
                if (x - a) as u64 > s {
                    continue;
                }
                let at = r.t + s;
                if s < width {
                    if x < b {
                        dag.add_edge(id(x, s), id(x + 1, s + 1), StKey::Move(x, at), Capacity::Finite(params.c_scaled));
                    }
                    if x != b {
                        dag.add_edge(id(x, s), id(x, s + 1), StKey::Buffer(x, at), Capacity::Finite(params.b_scaled));
                    }
                }
            }
        }
        let targets: Vec<usize> = (dist..=width).map(|s| id(b, s)).collect();
        let Decision::Accept(keys) = ipp_process(&mut ipp, r.id, &dag, id(a, 0), &targets) else { continue };
        let over = keys.iter().any(|k| {
            let cap = match k {
                StKey::Move(..) => grid.c as u64,
                StKey::Buffer(..) => grid.b as u64,
            };
            used.get(k).copied().unwrap_or(0) >= cap
        });
        assert!(!over, "scaled packing exceeded a true capacity");
        let mut p = DetailedPath::new(r.id, r.a.clone(), r.t);
        for k in &keys {
            *used.entry(*k).or_insert(0) += 1;
            p.steps.push(match k {
                StKey::Move(..) => Step::Forward(0),
                StKey::Buffer(..) => Step::Store,
            });
        }
        p.end = PathEnd::Deliver;
        result.finish(p);
    }
    Ok((result, params))
}
