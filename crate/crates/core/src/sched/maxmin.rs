use super::pf::fill_lowest_throughput;
use super::{Allocation, UeDemand};

/// Integer progressive filling on delivered throughput: each PRB goes to the
/// unsatisfied UE with the lowest `allocated × bits_per_prb`, lowest id first.
/// Zero-rate UEs are left out.
pub fn schedule_maxmin(demands: &[UeDemand], prbs: u32) -> Allocation {
    let mut eligible: Vec<&UeDemand> = demands.iter().filter(|d| d.has_rate() && d.backlog_bits > 0).collect();
    eligible.sort_by_key(|d| d.ue);
    let mut alloc = Allocation::new(prbs);
    fill_lowest_throughput(&eligible, prbs, &mut alloc);
    alloc
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use crate::traffic::UeId;
    use proptest::prelude::*;

    #[test]
    fn symmetric_split() {
        let d: Vec<_> = (0..3).map(|i| unlimited(i, 50.0)).collect();
        let a = schedule_maxmin(&d, 264);
        assert!((0..3).all(|i| a.get(UeId(i)) == 88));
    }

    #[test]
    fn equalizes_throughput() {
        let d = [unlimited(0, 1.0), unlimited(1, 2.0)];
        let a = schedule_maxmin(&d, 6);
        assert_eq!((a.get(UeId(0)), a.get(UeId(1))), (4, 2));
    }

    #[test]
    fn small_backlog_releases_prbs() {
        let d = [demand(0, 100.0, 50), unlimited(1, 100.0), unlimited(2, 100.0)];
        let a = schedule_maxmin(&d, 11);
        assert_eq!(a.get(UeId(0)), 1);
        assert_eq!(a.get(UeId(1)) + a.get(UeId(2)), 10);
        check_conservation(&a, &d);
    }

    #[test]
    fn zero_rate_excluded() {
        let d = [demand(0, 0.0, 500), unlimited(1, 10.0)];
        let a = schedule_maxmin(&d, 8);
        assert_eq!(a.get(UeId(0)), 0);
        assert_eq!(a.get(UeId(1)), 8);
    }

    /// Best achievable minimum throughput over every split of at most `prbs`.
    fn brute_force_min(rates: &[u32], prbs: u32) -> u32 {
        fn go(rates: &[u32], left: u32, cur_min: u32) -> u32 {
            match rates.split_first() {
                None => cur_min,
                Some((r, rest)) => (0..=left)
                    .map(|n| go(rest, left - n, cur_min.min(n * r)))
                    .max()
                    .unwrap(),
            }
        }
        go(rates, prbs, u32::MAX)
    }

    proptest! {
        #[test]
        fn matches_exhaustive_optimum(rates in proptest::collection::vec(1u32..4, 1..5), prbs in 0u32..13) {
            let d: Vec<_> = rates.iter().enumerate().map(|(i, r)| unlimited(i as u32, *r as f64)).collect();
            let a = schedule_maxmin(&d, prbs);
            let got = rates.iter().enumerate().map(|(i, r)| a.get(UeId(i as u32)) * r).min().unwrap();
            prop_assert_eq!(got, brute_force_min(&rates, prbs));
            check_conservation(&a, &d);
        }
    }
}
