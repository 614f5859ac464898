//! Per-cell PRB allocation policies.
//!
//! Every scheduler sees the same input, a slice of [`UeDemand`] for the
//! backlogged UEs of one cell, and returns an [`Allocation`]. Demands carry
//! the per-PRB bit yield for this slot, so a UE is "satisfied" once its
//! allocated PRBs can carry its whole backlog.

mod maxmin;
mod pf;
mod rl;
mod rr;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::traffic::UeId;

pub use maxmin::schedule_maxmin;
pub use pf::{schedule_pf, schedule_pf_weighted, update_pf, PfState};
pub use rl::{act, learn, schedule_preset, AgentConfig, AgentState, Observation, Preset, PresetOutcome};
pub use rr::{schedule_rr, RrState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchedError {
    #[error("reward must be finite, got {0}")]
    NonFiniteReward(f64),
}

/// One backlogged UE as seen by a cell scheduler in one slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UeDemand {
    pub ue: UeId,
    /// Bits one PRB carries for this UE during the slot.
    pub bits_per_prb: f64,
    pub backlog_bits: u64,
    /// Age of the oldest queued packet, in ms.
    pub hol_delay_ms: f64,
}

impl UeDemand {
    /// PRBs needed to drain the backlog; unbounded for a zero-yield UE.
    pub fn demand_prbs(&self) -> u32 {
        if self.backlog_bits == 0 {
            return 0;
        }
        if !(self.bits_per_prb >= 1.0) {
            return u32::MAX;
        }
        let n = (self.backlog_bits as f64 / self.bits_per_prb).ceil();
        if n >= u32::MAX as f64 {
            u32::MAX
        } else {
            n as u32
        }
    }

    pub fn has_rate(&self) -> bool {
        self.bits_per_prb >= 1.0
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Allocation {
    pub prbs: BTreeMap<UeId, u32>,
    pub total_prbs: u32,
}

impl Allocation {
    pub fn new(total_prbs: u32) -> Self {
        Self { prbs: BTreeMap::new(), total_prbs }
    }

    pub fn get(&self, ue: UeId) -> u32 {
        self.prbs.get(&ue).copied().unwrap_or(0)
    }

    pub fn allocated(&self) -> u32 {
        self.prbs.values().sum()
    }

    pub(crate) fn grant(&mut self, ue: UeId, n: u32) {
        if n > 0 {
            *self.prbs.entry(ue).or_default() += n;
        }
    }
}

/// Throughput-greedy: fill UEs in descending per-PRB yield (ties by id)
/// until PRBs or demand run out.
pub fn schedule_greedy(demands: &[UeDemand], prbs: u32) -> Allocation {
    let mut order: Vec<&UeDemand> = demands.iter().filter(|d| d.has_rate()).collect();
    order.sort_by(|a, b| b.bits_per_prb.total_cmp(&a.bits_per_prb).then(a.ue.cmp(&b.ue)));
    let mut alloc = Allocation::new(prbs);
    let mut left = prbs;
    for d in order {
        if left == 0 {
            break;
        }
        let n = d.demand_prbs().min(left);
        alloc.grant(d.ue, n);
        left -= n;
    }
    alloc
}
