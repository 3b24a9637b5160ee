//! Node rules for the middle part of a detailed route, where each packet
//! enters a tile on one side and must leave through a given side.

use std::collections::BTreeMap;

/// Move in the untilted line plane: `N` crosses a link, `E` spends a step in
/// a buffer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dir {
    N,
    E,
}

impl Dir {
    /// Axis in the untilted plane: 0 is space, 1 is time.
    pub fn axis(self) -> usize {
        match self {
            Dir::N => 0,
            Dir::E => 1,
        }
    }

    pub fn other(self) -> Dir {
        match self {
            Dir::N => Dir::E,
            Dir::E => Dir::N,
        }
    }
}

/// Assigns out-edges at a node of a line tile. `horz` and `vert` are the exit
/// sides wanted by the packets entering from the west and from the south.
/// Returns the direction each of them takes.
pub fn route_internal_step(horz: Option<Dir>, vert: Option<Dir>) -> (Option<Dir>, Option<Dir>) {
    match (horz, vert) {
        (h, None) => (h, None),
        (None, v) => (None, v),
        (Some(h), Some(v)) => {
            if h == Dir::E || v == Dir::N {
                (Some(Dir::E), Some(Dir::N))
            } else {
                (Some(Dir::N), Some(Dir::E))
            }
        }
    }
}

/// Node rule for a tile of a `(d+1)`-dimensional untilted grid. `exit[j]` is
/// the exit axis of the packet that entered along axis `j`, if any. Returns
/// the axis each input leaves on.
pub fn route_internal_ddim(exit: &[Option<usize>]) -> Vec<Option<usize>> {
    let m = exit.len();
    let mut out = vec![None; m];
    for j in 0..m {
        let Some(l) = exit[j] else { continue };
        assert!(l < m, "exit axis {l} out of range");
        let go = if l == j {
            j
        } else {
            match exit[l] {
                Some(e) if e != j => j,
                Some(_) => l,
                None => {
                    let first = (0..m).find(|&i| exit[i] == Some(l));
                    if first == Some(j) {
                        l
                    } else {
                        j
                    }
                }
            }
        };
        out[j] = Some(go);
    }
    out
}

/// A packet entering a tile in the micro simulation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileEntry {
    /// Axis along which the packet enters; `at[entry_axis]` must be 0.
    pub entry_axis: usize,
    pub at: Vec<i64>,
    pub exit: usize,
}

/// Runs the node rule over a tile `[0, k)^dims` and returns how many packets
/// leave through a side other than their exit side.
pub fn simulate_tile(k: i64, dims: usize, entries: &[TileEntry]) -> usize {
    // Nodes keyed by coordinate sum so each is handled after all its inputs.
    let mut pending: BTreeMap<(i64, Vec<i64>), Vec<Option<usize>>> = BTreeMap::new();
    for e in entries {
        assert_eq!(e.at.len(), dims);
        assert_eq!(e.at[e.entry_axis], 0, "entry point must lie on the entry face");
        let slot = pending.entry((e.at.iter().sum(), e.at.clone())).or_insert_with(|| vec![None; dims]);
        assert!(slot[e.entry_axis].is_none(), "two packets on one entry edge");
        slot[e.entry_axis] = Some(e.exit);
    }
    let mut failures = 0;
    while let Some(((_, p), ins)) = pending.pop_first() {
        let outs = route_internal_ddim(&ins);
        for (j, o) in outs.iter().enumerate() {
            let (Some(exit), Some(axis)) = (ins[j], *o) else { continue };
            let mut w = p.clone();
            w[axis] += 1;
            if w[axis] == k {
                if axis != exit {
                    failures += 1;
                }
                continue;
            }
            let slot = pending.entry((w.iter().sum(), w)).or_insert_with(|| vec![None; dims]);
            assert!(slot[axis].is_none(), "two packets assigned one out-edge");
            slot[axis] = Some(exit);
        }
    }
    failures
}
