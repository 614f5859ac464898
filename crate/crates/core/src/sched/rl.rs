//! Tabular Q-learning agent that picks an allocation preset per cell and
//! slot. One agent runs per DU; its cells share the Q-table.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::pf::{schedule_pf, schedule_pf_weighted, PfState};
use super::{schedule_greedy, schedule_maxmin, Allocation, SchedError, UeDemand};
use crate::traffic::UeId;

pub const N_STATES: usize = 16;
pub const N_ACTIONS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Preset {
    PurePf,
    /// PF metric scaled by `1 + hol_delay / bound`.
    PfLatencyBoost,
    /// Half the PRBs by max-min filling, the rest by PF.
    MaxMinBlend,
    /// Highest per-PRB yield first.
    ThroughputGreedy,
}

impl Preset {
    pub const ALL: [Preset; N_ACTIONS] =
        [Preset::PurePf, Preset::PfLatencyBoost, Preset::MaxMinBlend, Preset::ThroughputGreedy];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Presets that steer extra beam gain toward the UE it saves most PRBs for.
    pub fn boosts_beam(self) -> bool {
        matches!(self, Preset::PfLatencyBoost | Preset::ThroughputGreedy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_slots: u64,
    pub alpha: f64,
    pub gamma: f64,
    pub w_se: f64,
    pub w_lat: f64,
    /// Loop bound the head-of-line delay is normalized by, in ms.
    pub latency_bound_ms: f64,
    pub beam_boost_db: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            epsilon_start: 0.3,
            epsilon_end: 0.01,
            epsilon_decay_slots: 5000,
            alpha: 0.1,
            gamma: 0.9,
            w_se: 1.0,
            w_lat: 1.0,
            latency_bound_ms: 10.0,
            beam_boost_db: 3.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(unit(self.epsilon_start) && unit(self.epsilon_end) && self.epsilon_end <= self.epsilon_start) {
            return Err("epsilon_start/epsilon_end must lie in [0, 1] with end <= start".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err("alpha must lie in (0, 1]".into());
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err("gamma must lie in [0, 1)".into());
        }
        if !(self.w_se >= 0.0 && self.w_lat >= 0.0) {
            return Err("reward weights must be non-negative".into());
        }
        if !(self.latency_bound_ms > 0.0) {
            return Err("latency_bound_ms must be positive".into());
        }
        if !self.beam_boost_db.is_finite() {
            return Err("beam_boost_db must be finite".into());
        }
        Ok(())
    }

    /// Exponential decay from start to end over the decay window.
    pub fn epsilon_at(&self, slot: u64) -> f64 {
        if self.epsilon_decay_slots == 0 || self.epsilon_start <= 0.0 {
            return self.epsilon_end;
        }
        let frac = (slot.min(self.epsilon_decay_slots)) as f64 / self.epsilon_decay_slots as f64;
        let end = self.epsilon_end.max(1e-12);
        (self.epsilon_start * (end / self.epsilon_start).powf(frac)).max(self.epsilon_end)
    }

    /// Normalized SE gain minus normalized head-of-line delay.
    pub fn reward(&self, mean_se: f64, se_cap: f64, mean_hol_ms: f64) -> f64 {
        self.w_se * (mean_se / se_cap) - self.w_lat * (mean_hol_ms / self.latency_bound_ms)
    }
}

/// Quantized cell state: backlogged-UE count and mean SE.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Observation {
    pub load_bucket: u8,
    pub cqi_bucket: u8,
}

impl Observation {
    pub fn new(backlogged: usize, mean_se: f64) -> Self {
        let load_bucket = match backlogged {
            0..=2 => 0,
            3..=5 => 1,
            6..=10 => 2,
            _ => 3,
        };
        let cqi_bucket = if mean_se < 1.0 {
            0
        } else if mean_se < 3.0 {
            1
        } else if mean_se < 6.0 {
            2
        } else {
            3
        };
        Self { load_bucket, cqi_bucket }
    }

    pub fn index(self) -> usize {
        self.load_bucket as usize * 4 + self.cqi_bucket as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    pub q_table: [[f64; N_ACTIONS]; N_STATES],
    pub epsilon: f64,
    pub cfg: AgentConfig,
}

impl AgentState {
    pub fn new(cfg: AgentConfig) -> Self {
        Self { q_table: [[0.0; N_ACTIONS]; N_STATES], epsilon: cfg.epsilon_start, cfg }
    }

    pub fn set_slot(&mut self, slot: u64) {
        self.epsilon = self.cfg.epsilon_at(slot);
    }

    pub fn greedy(&self, obs: Observation) -> Preset {
        let row = &self.q_table[obs.index()];
        let mut best = 0;
        for a in 1..N_ACTIONS {
            if row[a] > row[best] {
                best = a;
            }
        }
        Preset::ALL[best]
    }
}

/// Epsilon-greedy action. Always consumes one uniform draw, plus one more
/// when exploring.
pub fn act<R: Rng + ?Sized>(agent: &AgentState, obs: Observation, rng: &mut R) -> Preset {
    if rng.random::<f64>() < agent.epsilon {
        Preset::ALL[rng.random_range(0..N_ACTIONS)]
    } else {
        agent.greedy(obs)
    }
}

/// One-step Q-learning update.
pub fn learn(
    agent: &mut AgentState,
    obs: Observation,
    action: Preset,
    reward: f64,
    next_obs: Observation,
) -> Result<(), SchedError> {
    if !reward.is_finite() {
        return Err(SchedError::NonFiniteReward(reward));
    }
    let next_best = agent.q_table[next_obs.index()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let q = &mut agent.q_table[obs.index()][action.index()];
    *q += agent.cfg.alpha * (reward + agent.cfg.gamma * next_best - *q);
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PresetOutcome {
    pub allocation: Allocation,
    /// UE whose serving beam got the extra gain, if any.
    pub boosted: Option<UeId>,
}

/// The backlogged UE whose boosted beam frees the most PRBs; ties go to
/// the lowest id. `None` if no UE would save anything.
fn beam_target(demands: &[UeDemand], prbs: u32, boosted: &dyn Fn(&UeDemand) -> f64) -> Option<usize> {
    let mut best: Option<(u32, UeId, usize)> = None;
    for (i, d) in demands.iter().enumerate() {
        if !d.has_rate() || d.backlog_bits == 0 {
            continue;
        }
        let with_boost = UeDemand { bits_per_prb: boosted(d), ..*d };
        let saved = d.demand_prbs().min(prbs).saturating_sub(with_boost.demand_prbs().min(prbs));
        if saved > 0 && best.is_none_or(|(bs, bid, _)| saved > bs || (saved == bs && d.ue < bid)) {
            best = Some((saved, d.ue, i));
        }
    }
    best.map(|(_, _, i)| i)
}

/// Run an allocation preset. `boosted_bits_per_prb` gives the per-PRB
/// yield of a UE once the extra beam gain is applied.
pub fn schedule_preset(
    preset: Preset,
    pf: &PfState,
    demands: &[UeDemand],
    prbs: u32,
    latency_bound_ms: f64,
    boosted_bits_per_prb: &dyn Fn(&UeDemand) -> f64,
) -> PresetOutcome {
    let mut demands = demands.to_vec();
    let hol_weight = |d: &UeDemand| 1.0 + d.hol_delay_ms / latency_bound_ms;
    let top = match preset {
        Preset::PfLatencyBoost | Preset::ThroughputGreedy => beam_target(&demands, prbs, boosted_bits_per_prb),
        Preset::PurePf | Preset::MaxMinBlend => None,
    };
    if let Some(i) = top {
        demands[i].bits_per_prb = boosted_bits_per_prb(&demands[i]);
    }
    let allocation = match preset {
        Preset::PurePf => schedule_pf(pf, &demands, prbs),
        Preset::PfLatencyBoost => schedule_pf_weighted(pf, &demands, prbs, hol_weight),
        Preset::ThroughputGreedy => schedule_greedy(&demands, prbs),
        Preset::MaxMinBlend => {
            let half = prbs / 2;
            let mut alloc = schedule_maxmin(&demands, half);
            let residual: Vec<UeDemand> = demands
                .iter()
                .map(|d| {
                    let carried = alloc.get(d.ue) as f64 * d.bits_per_prb;
                    UeDemand { backlog_bits: (d.backlog_bits as f64 - carried).max(0.0) as u64, ..*d }
                })
                .collect();
            let rest = schedule_pf(pf, &residual, prbs - alloc.allocated());
            for (ue, n) in rest.prbs {
                alloc.grant(ue, n);
            }
            alloc.total_prbs = prbs;
            alloc
        }
    };
    PresetOutcome { allocation, boosted: top.map(|i| demands[i].ue) }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::*;
    use crate::rng::{substream, Stream};
    use proptest::prelude::*;

    fn agent(epsilon: f64) -> AgentState {
        let mut a = AgentState::new(AgentConfig::default());
        a.epsilon = epsilon;
        a
    }

    #[test]
    fn observation_buckets() {
        assert_eq!(Observation::new(0, 0.5).index(), 0);
        assert_eq!(Observation::new(4, 2.0), Observation { load_bucket: 1, cqi_bucket: 1 });
        assert_eq!(Observation::new(10, 3.0), Observation { load_bucket: 2, cqi_bucket: 2 });
        assert_eq!(Observation::new(11, 6.0).index(), 15);
        let all: std::collections::BTreeSet<_> =
            (0..20).flat_map(|n| [0.1, 1.5, 4.0, 7.0].map(|se| Observation::new(n, se).index())).collect();
        assert_eq!(all.len(), N_STATES);
    }

    #[test]
    fn greedy_action_choice() {
        let mut a = agent(0.0);
        let obs = Observation::new(4, 2.0);
        let mut rng = substream(1, Stream::Agent, 0, 0);
        assert_eq!(act(&a, obs, &mut rng), Preset::PurePf);
        a.q_table[obs.index()][2] = 0.5;
        assert_eq!(act(&a, obs, &mut rng), Preset::MaxMinBlend);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let a = agent(1.0);
        let obs = Observation::new(4, 2.0);
        let mut rng = substream(2, Stream::Agent, 0, 0);
        let n = 10_000;
        let mut counts = [0f64; N_ACTIONS];
        for _ in 0..n {
            counts[act(&a, obs, &mut rng).index()] += 1.0;
        }
        let expected = n as f64 / N_ACTIONS as f64;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        // chi-square, 3 dof, p = 0.01
        assert!(chi2 < 11.345, "chi2 = {chi2}");
    }

    #[test]
    fn q_updates() {
        let mut a = agent(0.0);
        a.cfg.alpha = 1.0;
        a.cfg.gamma = 0.0;
        let s = Observation::new(1, 0.5);
        learn(&mut a, s, Preset::PurePf, 1.0, s).unwrap();
        assert_eq!(a.q_table[s.index()][0], 1.0);

        let mut b = agent(0.0);
        learn(&mut b, s, Preset::PurePf, 0.0, s).unwrap();
        assert_eq!(b.q_table, [[0.0; N_ACTIONS]; N_STATES]);

    }

    #[test]
    fn nan_reward_rejected() {
        let mut b = agent(0.0);
        let s = Observation::new(1, 0.5);
        assert!(matches!(learn(&mut b, s, Preset::PurePf, f64::INFINITY, s), Err(SchedError::NonFiniteReward(_))));
        assert!(matches!(learn(&mut b, s, Preset::PurePf, f64::NAN, s), Err(SchedError::NonFiniteReward(_))));
    }

    #[test]
    fn geometric_convergence_with_constant_reward() {
        let mut a = agent(0.0);
        a.cfg.gamma = 0.0;
        let s = Observation::new(7, 2.0);
        let r = 0.8;
        for k in 1..=50 {
            learn(&mut a, s, Preset::ThroughputGreedy, r, s).unwrap();
            let expected = r * (1.0 - (1.0 - a.cfg.alpha).powi(k));
            assert!((a.q_table[s.index()][3] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = AgentConfig::default();
        assert!((cfg.epsilon_at(0) - 0.3).abs() < 1e-12);
        assert!((cfg.epsilon_at(5000) - 0.01).abs() < 1e-12);
        assert!((cfg.epsilon_at(50_000) - 0.01).abs() < 1e-12);
        let mut last = 1.0;
        for t in (0..6000).step_by(100) {
            let e = cfg.epsilon_at(t);
            assert!(e <= last);
            last = e;
        }
    }

    #[test]
    fn presets_boost_the_ue_that_saves_most_prbs() {
        let pf = PfState::new(100.0);
        // UE 0 and 1 saturate the cell with or without the boost; UE 2 halves its need
        let d = [unlimited(0, 100.0), unlimited(1, 300.0), demand(2, 200.0, 1000)];
        let boost = |d: &UeDemand| d.bits_per_prb * 2.0;
        let g = schedule_preset(Preset::ThroughputGreedy, &pf, &d, 10, 10.0, &boost);
        assert_eq!(g.boosted, Some(UeId(2)));
        assert_eq!(g.allocation.get(UeId(2)), 3);

        let mut d2 = d;
        d2[2].backlog_bits = 600;
        d2[0].backlog_bits = 800;
        // UE 0: 8 -> 4 saves 4; UE 2: 3 -> 2 saves 1
        let l = schedule_preset(Preset::PfLatencyBoost, &pf, &d2, 10, 10.0, &boost);
        assert_eq!(l.boosted, Some(UeId(0)));

        let none = schedule_preset(Preset::ThroughputGreedy, &pf, &[unlimited(4, 50.0), unlimited(3, 50.0)], 10, 10.0, &boost);
        assert_eq!(none.boosted, None);

        let p = schedule_preset(Preset::PurePf, &pf, &d, 10, 10.0, &boost);
        assert_eq!(p.boosted, None);
        assert_eq!(p.allocation, schedule_pf(&pf, &d, 10));

        let m = schedule_preset(Preset::MaxMinBlend, &pf, &d, 10, 10.0, &boost);
        assert_eq!(m.boosted, None);
        assert_eq!(m.allocation.allocated(), 10);
    }

    #[test]
    fn q_tracks_iid_reward_mean() {
        use rand::Rng;
        let s = Observation::new(2, 2.0);
        for seed in 0..20 {
            let mut rng = substream(seed, Stream::Agent, 1, 1);
            let rewards: Vec<f64> = (0..5000).map(|_| rng.random()).collect();
            let sample_mean = rewards.iter().sum::<f64>() / rewards.len() as f64;

            // constant step: Q is an exponentially weighted mean
            let mut a = agent(0.0);
            a.cfg.gamma = 0.0;
            a.cfg.alpha = 0.01;
            for r in &rewards {
                learn(&mut a, s, Preset::PurePf, *r, s).unwrap();
            }
            let var = rewards.iter().map(|r| (r - sample_mean).powi(2)).sum::<f64>() / (rewards.len() - 1) as f64;
            let se = (var * a.cfg.alpha / (2.0 - a.cfg.alpha)).sqrt();
            assert!((a.q_table[s.index()][0] - sample_mean).abs() < 3.0 * se, "seed {seed}");

            // 1/k step: Q is exactly the running sample mean
            let mut b = agent(0.0);
            b.cfg.gamma = 0.0;
            for (k, r) in rewards.iter().enumerate() {
                b.cfg.alpha = 1.0 / (k + 1) as f64;
                learn(&mut b, s, Preset::PurePf, *r, s).unwrap();
            }
            assert!((b.q_table[s.index()][0] - sample_mean).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn presets_conserve(spec in proptest::collection::vec((1.0f64..2000.0, 0u64..50_000, 0.0f64..50.0), 1..8), prbs in 0u32..300, which in 0usize..4) {
            let pf = PfState::new(100.0);
            let d: Vec<_> = spec.iter().enumerate().map(|(i, (r, b, h))| UeDemand { hol_delay_ms: *h, ..demand(i as u32, *r, *b) }).collect();
            let out = schedule_preset(Preset::ALL[which], &pf, &d, prbs, 10.0, &|d: &UeDemand| d.bits_per_prb * 2.0);
            // conservation against the demands the preset actually scheduled with
            let mut seen = d.clone();
            if let Some(b) = out.boosted {
                let i = seen.iter().position(|x| x.ue == b).unwrap();
                seen[i].bits_per_prb *= 2.0;
            }
            check_conservation(&out.allocation, &seen);
        }
    }
}
