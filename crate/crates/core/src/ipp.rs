//! Online integral path packing with a primal-dual certificate.
//!
//! Each request is a source and a set of destinations in a finite DAG. The
//! algorithm finds a lightest path with at most `p_max` edges under the
//! current edge weights, accepts iff its weight is below one, and then scales
//! the weights of the chosen edges.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Debug;
use std::hash::Hash;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::model::Capacity;

/// Arithmetic used for the primal and dual variables.
pub trait Scalar: Clone + PartialOrd + Debug {
    fn zero() -> Self;
    fn one() -> Self;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul_u64(&self, k: u64) -> Self;
    /// `x·2^{1/c} + (2^{1/c} − 1)/p_max`.
    fn step(x: &Self, cap: u64, pmax: u64) -> Self;
    /// `(2^{f/c} − 1)/p_max`.
    fn closed_form(flow: u64, cap: u64, pmax: u64) -> Self;
    fn close_to(&self, other: &Self) -> bool;
    fn to_f64(&self) -> f64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul_u64(&self, k: u64) -> Self {
        self * k as f64
    }
    fn step(x: &Self, cap: u64, pmax: u64) -> Self {
        let g = 2f64.powf(1.0 / cap as f64);
        x * g + (g - 1.0) / pmax as f64
    }
    fn closed_form(flow: u64, cap: u64, pmax: u64) -> Self {
        (2f64.powf(flow as f64 / cap as f64) - 1.0) / pmax as f64
    }
    fn close_to(&self, other: &Self) -> bool {
        (self - other).abs() <= 1e-9 * other.abs().max(1.0)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

/// Exact arithmetic. Only unit capacities keep `2^{1/c}` rational.
impl Scalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul_u64(&self, k: u64) -> Self {
        self * BigRational::from_integer(BigInt::from(k))
    }
    fn step(x: &Self, cap: u64, pmax: u64) -> Self {
        assert_eq!(cap, 1, "exact arithmetic supports unit capacities only");
        x * BigRational::from_integer(BigInt::from(2)) + BigRational::new(BigInt::one(), BigInt::from(pmax))
    }
    fn closed_form(flow: u64, cap: u64, pmax: u64) -> Self {
        assert_eq!(cap, 1, "exact arithmetic supports unit capacities only");
        let num = (BigInt::one() << flow as usize) - BigInt::one();
        BigRational::new(num, BigInt::from(pmax))
    }
    fn close_to(&self, other: &Self) -> bool {
        self == other
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Edge of a finite query DAG. Keys identify edges across queries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DagEdge<K> {
    pub key: K,
    pub from: usize,
    pub to: usize,
    pub capacity: Capacity,
}

#[derive(Clone, Debug)]
pub struct Dag<K> {
    n: usize,
    edges: Vec<DagEdge<K>>,
    out: Vec<Vec<usize>>,
}

impl<K: Clone + Ord> Dag<K> {
    pub fn new(n: usize) -> Self {
        Dag { n, edges: Vec::new(), out: vec![Vec::new(); n] }
    }

    pub fn add_node(&mut self) -> usize {
        self.n += 1;
        self.out.push(Vec::new());
        self.n - 1
    }

    pub fn add_edge(&mut self, from: usize, to: usize, key: K, capacity: Capacity) -> usize {
        assert!(from < self.n && to < self.n);
        self.edges.push(DagEdge { key, from, to, capacity });
        let id = self.edges.len() - 1;
        self.out[from].push(id);
        id
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[DagEdge<K>] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> &DagEdge<K> {
        &self.edges[id]
    }

    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out[v]
    }

    /// Reverse topological order of the nodes reachable from `source`.
    /// Panics on a cycle.
    fn reverse_topo(&self, source: usize) -> Vec<usize> {
        let mut state = vec![0u8; self.n];
        let mut order = Vec::new();
        let mut stack = vec![(source, 0usize)];
        state[source] = 1;
        while let Some(&mut (v, ref mut i)) = stack.last_mut() {
            if *i < self.out[v].len() {
                let w = self.edges[self.out[v][*i]].to;
                *i += 1;
                match state[w] {
                    0 => {
                        state[w] = 1;
                        stack.push((w, 0));
                    }
                    1 => panic!("query graph has a cycle"),
                    _ => {}
                }
            } else {
                state[v] = 2;
                order.push(v);
                stack.pop();
            }
        }
        order
    }
}

/// A chosen path as edge indices of the query DAG.
#[derive(Clone, Debug, PartialEq)]
pub struct FoundPath<W> {
    pub edges: Vec<usize>,
    pub weight: W,
}

type Cost<W> = Option<(W, usize)>;

fn better<W: Scalar>(a: &(W, usize), b: &Cost<W>) -> bool {
    match b {
        None => true,
        Some((bw, bh)) => a.0 < *bw || (a.0 == *bw && a.1 < *bh),
    }
}

/// Minimum-weight path from `source` to any of `targets` with at most
/// `hop_bound` edges. Ties go to fewer hops, then to the smallest edge key at
/// each step.
pub fn lightest_bounded_path<K, W, F>(dag: &Dag<K>, weight: F, source: usize, targets: &[usize], hop_bound: usize) -> Option<FoundPath<W>>
where
    K: Clone + Ord,
    W: Scalar,
    F: Fn(&DagEdge<K>) -> W,
{
    let mut is_target = vec![false; dag.n];
    for &t in targets {
        is_target[t] = true;
    }
    let w: Vec<W> = dag.edges.iter().map(&weight).collect();
    let order = dag.reverse_topo(source);

    let mut cost: Vec<Cost<W>> = vec![None; dag.n];
    for &v in &order {
        if is_target[v] {
            cost[v] = Some((W::zero(), 0));
            continue;
        }
        let mut best: Cost<W> = None;
        for &e in &dag.out[v] {
            if let Some((cw, ch)) = &cost[dag.edges[e].to] {
                let cand = (w[e].add(cw), ch + 1);
                if better(&cand, &best) {
                    best = Some(cand);
                }
            }
        }
        cost[v] = best;
    }
    let (total, hops) = cost[source].clone()?;
    if hops <= hop_bound {
        let edges = walk(dag, &w, &is_target, source, |v, _| cost[v].clone());
        return Some(FoundPath { edges, weight: total });
    }

    // Hop-layered fallback: layer[h][v] is the best cost using at most h edges.
    let mut layers: Vec<Vec<Cost<W>>> = Vec::with_capacity(hop_bound + 1);
    layers.push((0..dag.n).map(|v| is_target[v].then(|| (W::zero(), 0))).collect());
    for h in 1..=hop_bound {
        let prev = &layers[h - 1];
        let mut cur: Vec<Cost<W>> = vec![None; dag.n];
        for &v in &order {
            if is_target[v] {
                cur[v] = Some((W::zero(), 0));
                continue;
            }
            let mut best: Cost<W> = None;
            for &e in &dag.out[v] {
                if let Some((cw, ch)) = &prev[dag.edges[e].to] {
                    let cand = (w[e].add(cw), ch + 1);
                    if better(&cand, &best) {
                        best = Some(cand);
                    }
                }
            }
            cur[v] = best;
        }
        layers.push(cur);
    }
    let (total, _) = layers[hop_bound][source].clone()?;
    let edges = walk(dag, &w, &is_target, source, |v, depth| layers[hop_bound - depth][v].clone());
    Some(FoundPath { edges, weight: total })
}

/// Follows optimal choices forward, taking the smallest key among ties.
fn walk<K, W, C>(dag: &Dag<K>, w: &[W], is_target: &[bool], source: usize, cost: C) -> Vec<usize>
where
    K: Clone + Ord,
    W: Scalar,
    C: Fn(usize, usize) -> Cost<W>,
{
    let mut path = Vec::new();
    let mut v = source;
    while !is_target[v] {
        let here = cost(v, path.len()).expect("walk left the reachable set");
        let mut pick: Option<usize> = None;
        for &e in &dag.out[v] {
            if let Some((cw, ch)) = cost(dag.edges[e].to, path.len() + 1) {
                if w[e].add(&cw) == here.0 && ch + 1 == here.1 {
                    match pick {
                        Some(p) if dag.edges[p].key <= dag.edges[e].key => {}
                        _ => pick = Some(e),
                    }
                }
            }
        }
        let e = pick.expect("no optimal successor");
        path.push(e);
        v = dag.edges[e].to;
    }
    path
}

#[derive(Clone, Debug, PartialEq)]
pub enum Decision<K> {
    Accept(Vec<K>),
    Reject,
}

/// Primal variables `x_e`, dual `z_i`, integral flows and the accepted paths.
#[derive(Clone, Debug)]
pub struct PrimalDualState<K, W> {
    pub pmax: u64,
    pub x: HashMap<K, W>,
    pub flow: HashMap<K, u64>,
    pub capacity: HashMap<K, u64>,
    pub z: BTreeMap<u64, W>,
    pub accepted: Vec<(u64, Vec<K>)>,
}

impl<K: Clone + Ord + Hash, W: Scalar> PrimalDualState<K, W> {
    pub fn new(pmax: u64) -> Self {
        assert!(pmax >= 1);
        PrimalDualState {
            pmax,
            x: HashMap::new(),
            flow: HashMap::new(),
            capacity: HashMap::new(),
            z: BTreeMap::new(),
            accepted: Vec::new(),
        }
    }

    pub fn weight(&self, key: &K) -> W {
        self.x.get(key).cloned().unwrap_or_else(W::zero)
    }

    pub fn flow_of(&self, key: &K) -> u64 {
        self.flow.get(key).copied().unwrap_or(0)
    }

    /// Keys that carry flow.
    pub fn touched(&self) -> impl Iterator<Item = &K> {
        self.flow.keys()
    }
}

/// Processes one path request. Infinite-capacity edges weigh zero forever.
pub fn ipp_process<K, W>(state: &mut PrimalDualState<K, W>, id: u64, dag: &Dag<K>, source: usize, targets: &[usize]) -> Decision<K>
where
    K: Clone + Ord + Hash,
    W: Scalar,
{
    let found = lightest_bounded_path(
        dag,
        |e: &DagEdge<K>| match e.capacity {
            Capacity::Infinite => W::zero(),
            Capacity::Finite(_) => state.weight(&e.key),
        },
        source,
        targets,
        state.pmax as usize,
    );
    let Some(path) = found else {
        state.z.insert(id, W::zero());
        return Decision::Reject;
    };
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(path.weight < W::one()) {
        state.z.insert(id, W::zero());
        return Decision::Reject;
    }
    let mut keys = Vec::with_capacity(path.edges.len());
    for &e in &path.edges {
        let edge = dag.edge(e);
        keys.push(edge.key.clone());
        if let Capacity::Finite(c) = edge.capacity {
            assert!(c >= 1, "packing needs capacities of at least one");
            let x = state.weight(&edge.key);
            state.x.insert(edge.key.clone(), W::step(&x, c, state.pmax));
            *state.flow.entry(edge.key.clone()).or_insert(0) += 1;
            state.capacity.insert(edge.key.clone(), c);
        }
    }
    state.z.insert(id, W::one().sub(&path.weight));
    state.accepted.push((id, keys.clone()));
    Decision::Accept(keys)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub primal_cost: f64,
    pub throughput: usize,
    pub max_relative_load: f64,
    pub load_bound: f64,
    pub closed_form_ok: bool,
    pub primal_ok: bool,
}

impl Certificate {
    pub fn holds(&self) -> bool {
        self.closed_form_ok && self.primal_ok && self.max_relative_load <= self.load_bound + 1e-12
    }
}

/// Evaluates the packing certificate. The primal bound is checked in the
/// state's own arithmetic.
pub fn certify<K, W>(state: &PrimalDualState<K, W>) -> Certificate
where
    K: Clone + Ord + Hash,
    W: Scalar,
{
    let mut primal = W::zero();
    let mut closed_form_ok = true;
    let mut max_load: f64 = 0.0;
    for (key, x) in &state.x {
        let c = state.capacity[key];
        let f = state.flow_of(key);
        primal = primal.add(&x.mul_u64(c));
        if !x.close_to(&W::closed_form(f, c, state.pmax)) || x.to_f64() >= 3.0 {
            closed_form_ok = false;
        }
        max_load = max_load.max(f as f64 / c as f64);
    }
    for z in state.z.values() {
        primal = primal.add(z);
    }
    let throughput = state.accepted.len();
    let twice = W::one().mul_u64(2 * throughput as u64);
    let primal_ok = primal <= twice || primal.close_to(&twice);
    Certificate {
        primal_cost: primal.to_f64(),
        throughput,
        max_relative_load: max_load,
        load_bound: ((1 + 3 * state.pmax) as f64).log2(),
        closed_form_ok,
        primal_ok,
    }
}
