use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use super::{Allocation, UeDemand};
use crate::traffic::UeId;

/// Initial average throughput of a newly tracked UE, in bit/s.
pub const PF_EPSILON: f64 = 1.0;
/// Averages never decay below this, so the metric stays finite.
const PF_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct PfState {
    pub avg_throughput: BTreeMap<UeId, f64>,
    /// EWMA time constant in slots.
    pub time_constant: f64,
}

impl PfState {
    pub fn new(time_constant: f64) -> Self {
        Self { avg_throughput: BTreeMap::new(), time_constant }
    }

    pub fn track(&mut self, ue: UeId) {
        self.avg_throughput.entry(ue).or_insert(PF_EPSILON);
    }

    pub fn average(&self, ue: UeId) -> f64 {
        self.avg_throughput.get(&ue).copied().unwrap_or(PF_EPSILON)
    }
}

#[derive(Clone, Copy)]
struct Filling {
    throughput: f64,
    idx: usize,
}

impl PartialEq for Filling {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Filling {}
impl PartialOrd for Filling {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Filling {
    // max-heap pops the lowest provisional throughput, then the lowest index
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .throughput
            .total_cmp(&self.throughput)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

/// Progressive filling: one PRB at a time to the UE with the lowest
/// provisional throughput (`prbs × bits_per_prb`), skipping satisfied UEs.
/// `group` must be sorted by UE id. Returns PRBs left over.
pub(super) fn fill_lowest_throughput(group: &[&UeDemand], prbs: u32, alloc: &mut Allocation) -> u32 {
    let mut left = prbs;
    let mut granted = vec![0u32; group.len()];
    let mut heap: BinaryHeap<Filling> = group
        .iter()
        .enumerate()
        .filter(|(_, d)| d.demand_prbs() > 0)
        .map(|(idx, _)| Filling { throughput: 0.0, idx })
        .collect();
    while left > 0 {
        let Some(top) = heap.pop() else { break };
        let d = group[top.idx];
        granted[top.idx] += 1;
        left -= 1;
        if granted[top.idx] < d.demand_prbs() {
            heap.push(Filling { throughput: granted[top.idx] as f64 * d.bits_per_prb, idx: top.idx });
        }
    }
    for (d, n) in group.iter().zip(granted) {
        alloc.grant(d.ue, n);
    }
    left
}

/// Proportional fair with a per-UE metric multiplier.
///
/// The metric `weight × r / R̄` is frozen for the slot; PRBs go to the UE with
/// the largest metric until its backlog is covered. UEs with equal metric
/// share by progressive filling on provisional throughput, then lowest id.
pub fn schedule_pf_weighted<F>(state: &PfState, demands: &[UeDemand], prbs: u32, weight: F) -> Allocation
where
    F: Fn(&UeDemand) -> f64,
{
    let mut ranked: Vec<(f64, &UeDemand)> = demands
        .iter()
        .filter(|d| d.has_rate() && d.backlog_bits > 0)
        .map(|d| (weight(d) * d.bits_per_prb / state.average(d.ue), d))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.ue.cmp(&b.1.ue)));

    let mut alloc = Allocation::new(prbs);
    let mut left = prbs;
    let mut i = 0;
    while i < ranked.len() && left > 0 {
        let mut j = i + 1;
        while j < ranked.len() && ranked[j].0 == ranked[i].0 {
            j += 1;
        }
        let group: Vec<&UeDemand> = ranked[i..j].iter().map(|(_, d)| *d).collect();
        left = fill_lowest_throughput(&group, left, &mut alloc);
        i = j;
    }
    alloc
}

pub fn schedule_pf(state: &PfState, demands: &[UeDemand], prbs: u32) -> Allocation {
    schedule_pf_weighted(state, demands, prbs, |_| 1.0)
}

/// EWMA update for every tracked UE; unserved UEs decay toward zero.
pub fn update_pf(state: &mut PfState, served_bits: &BTreeMap<UeId, u64>, slot_duration_ms: f64) {
    let beta = 1.0 / state.time_constant;
    let slot_s = slot_duration_ms / 1000.0;
    for (ue, avg) in state.avg_throughput.iter_mut() {
        let rate = served_bits.get(ue).copied().unwrap_or(0) as f64 / slot_s;
        *avg = ((1.0 - beta) * *avg + beta * rate).max(PF_FLOOR);
    }
}
