//! Scenario description shared by the engine, the config loader and the
//! report writers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{default_catalog, Catalog, ModelDescriptor};
use crate::channel::{ChannelConfig, RadioConfig};
use crate::orchestrator::OrchestratorConfig;
use crate::sched::AgentConfig;
use crate::topology::TopologyConfig;
use crate::traffic::TrafficConfig;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid spec: {0}")]
pub struct InvalidSpec(pub String);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchedulerKind {
    #[serde(alias = "RR", alias = "rr", alias = "round_robin", alias = "round-robin")]
    RoundRobin,
    #[serde(alias = "PF", alias = "pf", alias = "proportional_fair", alias = "proportional-fair")]
    ProportionalFair,
    #[serde(
        alias = "MMF",
        alias = "mmf",
        alias = "MaxMin",
        alias = "maxmin",
        alias = "max_min",
        alias = "max-min"
    )]
    MaxMinFairness,
    #[serde(alias = "orchestran", alias = "RL", alias = "rl", alias = "adaptive")]
    OrchestRAN,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 4] = [
        SchedulerKind::RoundRobin,
        SchedulerKind::ProportionalFair,
        SchedulerKind::MaxMinFairness,
        SchedulerKind::OrchestRAN,
    ];

    /// Canonical name followed by accepted aliases.
    pub fn names(self) -> &'static [&'static str] {
        match self {
            SchedulerKind::RoundRobin => &["RoundRobin", "RR", "rr", "round_robin", "round-robin"],
            SchedulerKind::ProportionalFair => {
                &["ProportionalFair", "PF", "pf", "proportional_fair", "proportional-fair"]
            }
            SchedulerKind::MaxMinFairness => {
                &["MaxMinFairness", "MMF", "mmf", "MaxMin", "maxmin", "max_min", "max-min"]
            }
            SchedulerKind::OrchestRAN => &["OrchestRAN", "orchestran", "RL", "rl", "adaptive"],
        }
    }

    pub fn name(self) -> &'static str {
        self.names()[0]
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = InvalidSpec;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchedulerKind::ALL
            .into_iter()
            .find(|k| k.names().contains(&s))
            .ok_or_else(|| InvalidSpec(format!("unknown scheduler `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub scheduler: SchedulerKind,
    pub n_ues: u32,
    pub n_slots: u64,
    /// Slots before this index train the adaptive scheduler and are left out
    /// of the aggregates.
    pub warmup_slots: u64,
    pub slot_duration_ms: f64,
    pub requests_per_slot: u32,
    pub orchestration_epoch_slots: u64,
    pub pf_time_constant_slots: f64,
    pub topology: TopologyConfig,
    pub channel: ChannelConfig,
    pub radio: RadioConfig,
    pub traffic: TrafficConfig,
    pub orchestrator: OrchestratorConfig,
    pub agent: AgentConfig,
    /// Replaces the default catalog when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub catalog: Option<Vec<ModelDescriptor>>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            scheduler: SchedulerKind::OrchestRAN,
            n_ues: 200,
            n_slots: 7000,
            warmup_slots: 5000,
            slot_duration_ms: 1.0,
            requests_per_slot: 100,
            orchestration_epoch_slots: 100,
            pf_time_constant_slots: 100.0,
            topology: TopologyConfig::default(),
            channel: ChannelConfig::default(),
            radio: RadioConfig::default(),
            traffic: TrafficConfig::default(),
            orchestrator: OrchestratorConfig::default(),
            agent: AgentConfig::default(),
            catalog: None,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), InvalidSpec> {
        let err = |m: String| Err(InvalidSpec(m));
        if self.n_slots == 0 {
            return err("n_slots must be at least 1".into());
        }
        if self.warmup_slots >= self.n_slots {
            return err(format!(
                "warmup_slots ({}) must be below n_slots ({})",
                self.warmup_slots, self.n_slots
            ));
        }
        if !(self.slot_duration_ms > 0.0 && self.slot_duration_ms.is_finite()) {
            return err("slot_duration_ms must be positive".into());
        }
        if self.orchestration_epoch_slots == 0 {
            return err("orchestration_epoch_slots must be at least 1".into());
        }
        if !(self.pf_time_constant_slots >= 1.0) {
            return err("pf_time_constant_slots must be at least 1".into());
        }
        self.topology.validate().map_err(|e| InvalidSpec(e.to_string()))?;
        self.channel.validate().map_err(|e| InvalidSpec(e.to_string()))?;
        self.radio.validate().map_err(|e| InvalidSpec(e.to_string()))?;
        self.traffic.validate().map_err(|e| InvalidSpec(e.to_string()))?;
        self.agent.validate().map_err(InvalidSpec)?;
        self.build_catalog()?;
        Ok(())
    }

    pub fn build_catalog(&self) -> Result<Catalog, InvalidSpec> {
        match &self.catalog {
            None => Ok(default_catalog()),
            Some(entries) => Catalog::new(entries.clone()).map_err(|e| InvalidSpec(e.to_string())),
        }
    }

    /// Whether two specs describe the same scenario apart from scheduler
    /// and seed.
    pub fn comparable_with(&self, other: &ScenarioSpec) -> bool {
        let strip = |s: &ScenarioSpec| ScenarioSpec {
            scheduler: SchedulerKind::RoundRobin,
            seed: 0,
            ..s.clone()
        };
        strip(self) == strip(other)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheduler_aliases() {
        assert_eq!("PF".parse::<SchedulerKind>().unwrap(), SchedulerKind::ProportionalFair);
        assert_eq!("rr".parse::<SchedulerKind>().unwrap(), SchedulerKind::RoundRobin);
        assert_eq!("maxmin".parse::<SchedulerKind>().unwrap(), SchedulerKind::MaxMinFairness);
        assert_eq!("OrchestRAN".parse::<SchedulerKind>().unwrap(), SchedulerKind::OrchestRAN);
        assert!("fifo".parse::<SchedulerKind>().is_err());
        for k in SchedulerKind::ALL {
            assert_eq!(k.name().parse::<SchedulerKind>().unwrap(), k);
        }
    }

    #[test]
    fn defaults_validate() {
        ScenarioSpec::default().validate().unwrap();
        let bad = ScenarioSpec { n_slots: 0, warmup_slots: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn comparability_ignores_scheduler_and_seed() {
        let a = ScenarioSpec::default();
        let b = ScenarioSpec { seed: 9, scheduler: SchedulerKind::RoundRobin, ..a.clone() };
        assert!(a.comparable_with(&b));
        let c = ScenarioSpec { n_ues: 7, ..a.clone() };
        assert!(!a.comparable_with(&c));
    }
}
