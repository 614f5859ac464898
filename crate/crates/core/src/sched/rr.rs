use super::{Allocation, UeDemand};
use crate::traffic::UeId;

/// Round-robin position over a cell's stable UE ordering.
#[derive(Clone, Debug, PartialEq)]
pub struct RrState {
    population: Vec<UeId>,
    pub cursor: usize,
}

impl RrState {
    pub fn new(mut population: Vec<UeId>) -> Self {
        population.sort();
        population.dedup();
        Self { population, cursor: 0 }
    }

    pub fn population(&self) -> &[UeId] {
        &self.population
    }

    fn position(&self, ue: UeId) -> usize {
        self.population
            .binary_search(&ue)
            .expect("scheduled UE belongs to the cell population")
    }
}

/// Deal PRBs one at a time, cycling from the cursor over backlogged UEs and
/// skipping those whose backlog is already covered. The cursor moves to the
/// UE after the last one served.
pub fn schedule_rr(state: &mut RrState, backlogged: &[UeDemand], prbs: u32) -> Allocation {
    let mut alloc = Allocation::new(prbs);
    let mut ring: Vec<(usize, &UeDemand)> = backlogged
        .iter()
        .filter(|d| d.backlog_bits > 0)
        .map(|d| (state.position(d.ue), d))
        .collect();
    if ring.is_empty() || prbs == 0 {
        return alloc;
    }
    ring.sort_by_key(|(pos, _)| *pos);
    let start = ring.iter().position(|(pos, _)| *pos >= state.cursor).unwrap_or(0);
    ring.rotate_left(start);

    let mut remaining: Vec<u32> = ring.iter().map(|(_, d)| d.demand_prbs()).collect();
    let mut granted = vec![0u32; ring.len()];
    let mut left = prbs;
    let mut last = None;
    while left > 0 {
        let mut progressed = false;
        for (i, rem) in remaining.iter_mut().enumerate() {
            if left == 0 {
                break;
            }
            if *rem == 0 {
                continue;
            }
            *rem -= 1;
            granted[i] += 1;
            left -= 1;
            last = Some(i);
            progressed = true;
        }
        if !progressed {
            break;
        }
    }
    for (i, (_, d)) in ring.iter().enumerate() {
        alloc.grant(d.ue, granted[i]);
    }
    if let Some(i) = last {
        state.cursor = (ring[i].0 + 1) % state.population.len();
    }
    alloc
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use proptest::prelude::*;

    fn state(n: u32) -> RrState {
        RrState::new((0..n).map(UeId).collect())
    }

    #[test]
    fn three_ues_even_deal() {
        let mut s = state(3);
        let d: Vec<_> = (0..3).map(|i| unlimited(i, 100.0)).collect();
        let a = schedule_rr(&mut s, &d, 264);
        for i in 0..3 {
            assert_eq!(a.get(UeId(i)), 88);
        }
        assert_eq!(s.cursor, 0);
    }

    #[test]
    fn single_and_empty() {
        let mut s = state(4);
        let a = schedule_rr(&mut s, &[unlimited(2, 100.0)], 264);
        assert_eq!(a.get(UeId(2)), 264);
        assert_eq!(s.cursor, 3);
        let a = schedule_rr(&mut s, &[], 264);
        assert!(a.prbs.is_empty());
        assert_eq!(s.cursor, 3);
    }

    #[test]
    fn cursor_continues_across_slots() {
        let mut s = state(3);
        let d: Vec<_> = (0..3).map(|i| unlimited(i, 100.0)).collect();
        let a = schedule_rr(&mut s, &d, 4);
        assert_eq!((a.get(UeId(0)), a.get(UeId(1)), a.get(UeId(2))), (2, 1, 1));
        assert_eq!(s.cursor, 1);
        let a = schedule_rr(&mut s, &d, 2);
        assert_eq!((a.get(UeId(0)), a.get(UeId(1)), a.get(UeId(2))), (0, 1, 1));
        assert_eq!(s.cursor, 0);
    }

    #[test]
    fn satisfied_ues_are_skipped() {
        let mut s = state(3);
        let d = [demand(0, 100.0, 150), unlimited(1, 100.0), unlimited(2, 100.0)];
        let a = schedule_rr(&mut s, &d, 20);
        assert_eq!(a.get(UeId(0)), 2);
        assert_eq!(a.get(UeId(1)) + a.get(UeId(2)), 18);
        check_conservation(&a, &d);
    }

    proptest! {
        #[test]
        fn cumulative_shares_stay_within_one(n in 1u32..8, slots in 1usize..20, prbs in 0u32..50) {
            let mut s = state(n);
            let d: Vec<_> = (0..n).map(|i| unlimited(i, 100.0)).collect();
            let mut totals = vec![0u32; n as usize];
            for _ in 0..slots {
                let a = schedule_rr(&mut s, &d, prbs);
                check_conservation(&a, &d);
                for i in 0..n {
                    totals[i as usize] += a.get(UeId(i));
                }
            }
            let max = *totals.iter().max().unwrap();
            let min = *totals.iter().min().unwrap();
            prop_assert!(max - min <= 1);
        }

        #[test]
        fn replay_is_identical(backlogs in proptest::collection::vec(0u64..5000, 1..8), prbs in 0u32..40) {
            let d: Vec<_> = backlogs.iter().enumerate().map(|(i, b)| demand(i as u32, 100.0, *b)).collect();
            let mut s1 = state(backlogs.len() as u32);
            let mut s2 = s1.clone();
            let a1 = schedule_rr(&mut s1, &d, prbs);
            let a2 = schedule_rr(&mut s2, &d, prbs);
            prop_assert_eq!(a1.clone(), a2);
            prop_assert_eq!(s1, s2);
            check_conservation(&a1, &d);
        }
    }
}
