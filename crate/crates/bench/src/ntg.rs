//! Nearest-to-go greedy baseline on a line.

use std::collections::BTreeMap;

use gridroute_core::model::{arrival_order, validate_request};
use gridroute_core::route::{DetailedPath, PathEnd, RouteResult, Step};
use gridroute_core::{GridSpec, PacketRequest};

/// Every node forwards up to `c` packets, nearest destination first (ties by
/// id), keeps the next `B` in its buffer and drops the rest. Packets at their
/// destination are delivered at once. Invalid requests are rejected.
///
/// # Panics
/// If the grid is not a line.
pub fn nearest_to_go(trace: &[PacketRequest], grid: &GridSpec) -> RouteResult {
    assert_eq!(grid.d(), 1, "nearest-to-go runs on lines");
    let mut result = RouteResult::new("ntg", None, trace);
    let mut arrivals: BTreeMap<u64, Vec<PacketRequest>> = BTreeMap::new();
    for r in arrival_order(trace) {
        if validate_request(&r, grid).is_ok() {
            arrivals.entry(r.t).or_default().push(r);
        }
    }
    // (node, destination, deadline, path)
    let mut live: Vec<(u32, u32, Option<u64>, DetailedPath)> = Vec::new();
    let mut t = match arrivals.keys().next() {
        Some(&t) => t,
        None => return result,
    };
    while !live.is_empty() || !arrivals.is_empty() {
        if live.is_empty() {
            t = *arrivals.keys().next().unwrap();
        }
        for r in arrivals.remove(&t).unwrap_or_default() {
            live.push((r.a[0], r.b[0], r.deadline, DetailedPath::new(r.id, r.a.clone(), r.t)));
        }
        let mut at: BTreeMap<u32, Vec<(u32, Option<u64>, DetailedPath)>> = BTreeMap::new();
        for (x, b, dl, p) in live.drain(..) {
            at.entry(x).or_default().push((b, dl, p));
        }
        for (x, mut group) in at {
            group.sort_by_key(|(b, _, p)| (*b, p.id));
            let (mut sent, mut kept) = (0, 0);
            for (b, dl, mut p) in group {
                if b == x {
                    p.end = PathEnd::Deliver;
                    result.finish(p);
                } else if dl.is_some_and(|d| t + (b - x) as u64 > d) {
                    // Cannot arrive in time any more.
                    p.end = PathEnd::Drop;
                    result.finish(p);
                } else if sent < grid.c {
                    sent += 1;
                    p.steps.push(Step::Forward(0));
                    live.push((x + 1, b, dl, p));
                } else if kept < grid.b {
                    kept += 1;
                    p.steps.push(Step::Store);
                    live.push((x, b, dl, p));
                } else {
                    p.end = PathEnd::Drop;
                    result.finish(p);
                }
            }
        }
        t += 1;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use gridroute_core::det::run_bufferless;
    use gridroute_core::sim::replay;
    use gridroute_core::Outcome;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_packet_is_delivered() {
        let g = GridSpec::line(8, 1, 1).unwrap();
        let r = nearest_to_go(&[PacketRequest::on_line(0, 2, 6, 3, None)], &g);
        assert_eq!(r.outcomes[&0], Outcome::Delivered(7));
    }

    #[test]
    fn loser_waits_in_buffer() {
        let g = GridSpec::line(8, 1, 1).unwrap();
        let trace = [PacketRequest::on_line(0, 1, 8, 0, None), PacketRequest::on_line(1, 1, 3, 0, None)];
        let r = nearest_to_go(&trace, &g);
        assert_eq!(r.outcomes[&1], Outcome::Delivered(2));
        assert_eq!(r.outcomes[&0], Outcome::Delivered(8));
    }

    #[test]
    fn farthest_drops_without_room() {
        let g = GridSpec::line(8, 0, 1).unwrap();
        let trace = [PacketRequest::on_line(0, 1, 8, 0, None), PacketRequest::on_line(1, 1, 3, 0, None)];
        let r = nearest_to_go(&trace, &g);
        assert_eq!(r.outcomes[&0], Outcome::Preempted(0));
        assert_eq!(r.outcomes[&1], Outcome::Delivered(2));
    }

    /// Without buffers the baseline and the core bufferless router coincide.
    #[test]
    fn matches_core_bufferless_line() {
        for seed in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..=16);
            let g = GridSpec::line(n, 0, rng.gen_range(1..=3)).unwrap();
            let trace: Vec<PacketRequest> = (0..30)
                .map(|id| {
                    let a = rng.gen_range(1..=n);
                    PacketRequest::on_line(id, a, rng.gen_range(a..=n), rng.gen_range(0..20), None)
                })
                .collect();
            let ours = nearest_to_go(&trace, &g);
            assert_eq!(ours.outcomes, run_bufferless(&trace, &g).unwrap().outcomes, "seed {seed}");
            assert!(replay(&g, &trace, &ours.paths, "ntg", None).ok());
        }
    }
}
