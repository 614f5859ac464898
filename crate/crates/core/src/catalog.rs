//! ML/AI model catalog: capability records the orchestrator matches
//! requests against.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::NodeKind;
use crate::traffic::{Functionality, LatencyClass};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("duplicate model id `{0}`")]
    DuplicateId(String),
    #[error("model `{id}`: {reason}")]
    InvalidEntry { id: String, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    ReinforcementLearning,
    FederatedLearning,
    DeepLearningOptimizer,
    GraphNeuralNetwork,
    TransformerForecaster,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDescriptor {
    pub id: String,
    pub kind: ModelKind,
    pub functionalities: BTreeSet<Functionality>,
    pub compute_cost: u32,
    pub inference_latency_ms: f64,
    pub allowed_hosts: BTreeSet<NodeKind>,
}

impl ModelDescriptor {
    fn validate(&self) -> Result<(), CatalogError> {
        let bad = |reason: &str| CatalogError::InvalidEntry { id: self.id.clone(), reason: reason.into() };
        if self.functionalities.is_empty() {
            return Err(bad("functionalities must not be empty"));
        }
        if self.allowed_hosts.is_empty() {
            return Err(bad("allowed_hosts must not be empty"));
        }
        if self.compute_cost == 0 {
            return Err(bad("compute_cost must be positive"));
        }
        if !(self.inference_latency_ms > 0.0 && self.inference_latency_ms.is_finite()) {
            return Err(bad("inference_latency_ms must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Catalog {
    entries: Vec<ModelDescriptor>,
}

impl Catalog {
    pub fn new(entries: Vec<ModelDescriptor>) -> Result<Self, CatalogError> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            e.validate()?;
            if !seen.insert(e.id.as_str()) {
                return Err(CatalogError::DuplicateId(e.id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ModelDescriptor] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&ModelDescriptor> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Models offering `functionality` within the class loop bound, cheapest
    /// first (ties by id).
    pub fn candidates(&self, functionality: Functionality, class: LatencyClass) -> Vec<&ModelDescriptor> {
        let bound = class.loop_bound_ms();
        let mut out: Vec<_> = self
            .entries
            .iter()
            .filter(|e| e.functionalities.contains(&functionality) && e.inference_latency_ms <= bound)
            .collect();
        out.sort_by(|a, b| a.compute_cost.cmp(&b.compute_cost).then_with(|| a.id.cmp(&b.id)));
        out
    }
}

fn entry(
    id: &str,
    kind: ModelKind,
    functionalities: &[Functionality],
    hosts: &[NodeKind],
    compute_cost: u32,
    inference_latency_ms: f64,
) -> ModelDescriptor {
    ModelDescriptor {
        id: id.into(),
        kind,
        functionalities: functionalities.iter().copied().collect(),
        compute_cost,
        inference_latency_ms,
        allowed_hosts: hosts.iter().copied().collect(),
    }
}

/// One descriptor per model family.
pub fn default_catalog() -> Catalog {
    use Functionality::*;
    use NodeKind::*;
    Catalog::new(vec![
        entry("rl", ModelKind::ReinforcementLearning, &[Scheduling, Beamforming], &[Du, NearRtRic], 2, 0.5),
        entry("fl", ModelKind::FederatedLearning, &[AnomalyDetection], &[NearRtRic, NonRtRic], 4, 50.0),
        entry("dl-opt", ModelKind::DeepLearningOptimizer, &[Beamforming], &[Du], 3, 1.0),
        entry("gnn", ModelKind::GraphNeuralNetwork, &[NetworkSlicing], &[NearRtRic], 6, 100.0),
        entry("transformer", ModelKind::TransformerForecaster, &[TrafficForecasting], &[NonRtRic], 8, 500.0),
    ])
    .expect("default catalog is well formed")
}
