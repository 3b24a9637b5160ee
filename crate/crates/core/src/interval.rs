//! Online packing of open intervals on a line with preemption.
//!
//! Intervals must arrive sorted by left endpoint. A new interval that meets a
//! kept one either loses (it ends later) or replaces it (it ends no later).

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Interval {
    pub a: i64,
    pub b: i64,
    pub owner: u64,
}

impl Interval {
    pub fn new(a: i64, b: i64, owner: u64) -> Self {
        assert!(a < b, "interval ({a}, {b}) is empty");
        Interval { a, b, owner }
    }

    pub fn meets(&self, other: &Interval) -> bool {
        self.a < other.b && other.a < self.b
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Offer {
    Accepted { preempted: Option<u64> },
    Rejected,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PackError {
    #[error("left endpoint {got} arrived after {last}")]
    Unsorted { last: i64, got: i64 },
    #[error("owner {0} offered twice")]
    Duplicate(u64),
}

#[derive(Clone, Debug, Default)]
pub struct PackState {
    /// Kept intervals keyed by left endpoint, then owner.
    active: BTreeMap<(i64, u64), Interval>,
    last_a: Option<i64>,
    /// Every accepted interval, including ones later preempted or released.
    accepted: HashMap<u64, Interval>,
    /// Preempted owner → preemptor.
    preempted_by: HashMap<u64, u64>,
}

impl PackState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn offer(&mut self, p: Interval) -> Result<Offer, PackError> {
        if let Some(last) = self.last_a {
            if p.a < last {
                return Err(PackError::Unsorted { last, got: p.a });
            }
        }
        if self.accepted.contains_key(&p.owner) {
            return Err(PackError::Duplicate(p.owner));
        }
        self.last_a = Some(p.a);
        // Kept intervals start at or before p.a and are disjoint, so only the
        // latest-starting one can reach past p.a.
        let mut hits = self.active.values().rev().take(2).filter(|q| q.meets(&p));
        let hit = hits.next().copied();
        assert!(hits.next().is_none(), "two kept intervals meet a sorted arrival");
        let outcome = match hit {
            None => Offer::Accepted { preempted: None },
            Some(q) if p.b > q.b => return Ok(Offer::Rejected),
            Some(q) => {
                self.active.remove(&(q.a, q.owner));
                self.preempted_by.insert(q.owner, p.owner);
                Offer::Accepted { preempted: Some(q.owner) }
            }
        };
        self.active.insert((p.a, p.owner), p);
        self.accepted.insert(p.owner, p);
        Ok(outcome)
    }

    /// Drops `owner` from the kept set without recording a preemption.
    pub fn release(&mut self, owner: u64) -> bool {
        match self.accepted.get(&owner) {
            Some(p) => self.active.remove(&(p.a, owner)).is_some(),
            None => false,
        }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn kept(&self) -> impl Iterator<Item = &Interval> {
        self.active.values()
    }

    pub fn preemptor_of(&self, owner: u64) -> Option<u64> {
        self.preempted_by.get(&owner).copied()
    }

    pub fn preemptions(&self) -> &HashMap<u64, u64> {
        &self.preempted_by
    }

    /// Checks that every interval preempted, directly or transitively, by `i`
    /// contains the last unit edge `(b_i − 1, b_i)` of `i`.
    pub fn forest_ok(&self) -> bool {
        let mut children: HashMap<u64, Vec<u64>> = HashMap::new();
        for (&child, &parent) in &self.preempted_by {
            children.entry(parent).or_default().push(child);
        }
        for (&root, root_iv) in &self.accepted {
            let mut stack = children.get(&root).cloned().unwrap_or_default();
            while let Some(j) = stack.pop() {
                let iv = self.accepted[&j];
                if !(iv.a < root_iv.b && root_iv.b <= iv.b) {
                    return false;
                }
                if let Some(c) = children.get(&j) {
                    stack.extend(c);
                }
            }
        }
        true
    }

    pub fn disjoint(&self) -> bool {
        let v: Vec<&Interval> = self.active.values().collect();
        v.windows(2).all(|w| w[0].b <= w[1].a)
    }
}

/// Maximum number of pairwise-disjoint open intervals. Greedy by right
/// endpoint; cross-checked exhaustively for up to 12 intervals.
pub fn brute_force_mis(intervals: &[Interval]) -> usize {
    assert!(intervals.len() <= 20, "oracle limited to 20 intervals");
    let greedy = greedy_mis(intervals);
    if intervals.len() <= 12 {
        let exact = exhaustive_mis(intervals);
        assert_eq!(greedy, exact, "greedy and exhaustive disagree");
    }
    greedy
}

fn greedy_mis(intervals: &[Interval]) -> usize {
    let mut v = intervals.to_vec();
    v.sort_by_key(|p| (p.b, p.a));
    let mut end = i64::MIN;
    let mut count = 0;
    for p in v {
        if p.a >= end {
            count += 1;
            end = p.b;
        }
    }
    count
}

pub fn exhaustive_mis(intervals: &[Interval]) -> usize {
    let n = intervals.len();
    let mut best = 0;
    for mask in 0u32..(1u32 << n) {
        let chosen: Vec<&Interval> = (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| &intervals[i]).collect();
        let ok = chosen.iter().enumerate().all(|(i, p)| chosen[i + 1..].iter().all(|q| !p.meets(q)));
        if ok {
            best = best.max(chosen.len());
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(a: i64, b: i64, o: u64) -> Interval {
        Interval::new(a, b, o)
    }

    #[test]
    fn offer_examples() {
        let mut s = PackState::new();
        assert_eq!(s.offer(iv(1, 2, 0)), Ok(Offer::Accepted { preempted: None }));
        assert_eq!(s.offer(iv(3, 4, 1)), Ok(Offer::Accepted { preempted: None }));

        let mut s = PackState::new();
        s.offer(iv(1, 5, 0)).unwrap();
        assert_eq!(s.offer(iv(2, 4, 1)), Ok(Offer::Accepted { preempted: Some(0) }));
        assert_eq!(s.preemptor_of(0), Some(1));

        let mut s = PackState::new();
        s.offer(iv(1, 3, 0)).unwrap();
        assert_eq!(s.offer(iv(2, 5, 1)), Ok(Offer::Rejected));
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn unsorted_and_duplicate() {
        let mut s = PackState::new();
        s.offer(iv(3, 5, 0)).unwrap();
        assert_eq!(s.offer(iv(2, 4, 1)), Err(PackError::Unsorted { last: 3, got: 2 }));
        assert_eq!(s.offer(iv(4, 6, 0)), Err(PackError::Duplicate(0)));
    }

    #[test]
    fn release_frees_the_line() {
        let mut s = PackState::new();
        s.offer(iv(1, 9, 0)).unwrap();
        assert!(s.release(0));
        assert_eq!(s.offer(iv(2, 12, 1)), Ok(Offer::Accepted { preempted: None }));
        assert!(s.preemptor_of(0).is_none());
    }

    #[test]
    fn mis_examples() {
        assert_eq!(brute_force_mis(&[]), 0);
        assert_eq!(brute_force_mis(&[iv(1, 5, 0), iv(2, 4, 1)]), 1);
        assert_eq!(brute_force_mis(&[iv(1, 2, 0), iv(3, 4, 1), iv(2, 3, 2)]), 3);
    }

    fn sorted_intervals() -> impl Strategy<Value = Vec<Interval>> {
        proptest::collection::vec((1i64..12, 1i64..12), 0..=10).prop_map(|pairs| {
            let mut v: Vec<(i64, i64)> = pairs.into_iter().map(|(a, len)| (a, (a + len).min(12))).filter(|(a, b)| a < b).collect();
            v.sort();
            v.into_iter().enumerate().map(|(i, (a, b))| Interval::new(a, b, i as u64)).collect()
        })
    }

    proptest! {
        #[test]
        fn prefix_optimal(seq in sorted_intervals()) {
            let mut s = PackState::new();
            for (i, p) in seq.iter().enumerate() {
                s.offer(*p).unwrap();
                prop_assert!(s.disjoint());
                prop_assert_eq!(s.len(), brute_force_mis(&seq[..=i]));
            }
            prop_assert!(s.forest_ok());
        }
    }
}
