//! Orchestration engine: greedy, latency-class-priority placement of
//! catalog models onto the node forest.
//!
//! Requests are processed RealTime first, then in arrival order. For each
//! request the engine scans catalog candidates and the hosts on the tree path
//! shared by all target RUs, and commits the (model, host) pair with the
//! smallest control-loop + inference latency that fits both the class bound
//! and the host's residual compute.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, ModelKind};
use crate::topology::{NodeId, NodeKind, Topology, TopologyError};
use crate::traffic::{Functionality, LatencyClass, OperatorRequest, RequestId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrchestratorError {
    #[error("{0} cannot host applications")]
    UnsupportedHost(NodeKind),
    #[error("plan was built against topology generation {plan}, topology is at {topology}")]
    DoubleApply { plan: u64, topology: u64 },
    #[error("applying the plan would overload {0}")]
    CapacityViolation(NodeId),
    #[error("releasing the plan would free more compute than {0} has in use")]
    ReleaseUnderflow(NodeId),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AppType {
    DApp,
    XApp,
    RApp,
}

impl fmt::Display for AppType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AppType::DApp => "dApp",
            AppType::XApp => "xApp",
            AppType::RApp => "rApp",
        })
    }
}

/// O-RAN interface a deployment is dispatched over (label only).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DispatchInterface {
    E2,
    A1,
    O1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RejectReason {
    NoModel,
    NoCapacity,
    LatencyInfeasible,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrchestratorConfig {
    /// Lets CUs host dApps.
    pub allow_cu_hosts: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Deployment {
    pub request_id: RequestId,
    pub functionality: Functionality,
    pub latency_class: LatencyClass,
    pub target_rus: BTreeSet<NodeId>,
    pub model_id: String,
    pub host: NodeId,
    pub host_kind: NodeKind,
    pub app_type: AppType,
    pub compute_cost: u32,
    pub control_latency_ms: f64,
    pub inference_latency_ms: f64,
    pub dispatch_interface: DispatchInterface,
}

impl Deployment {
    pub fn total_latency_ms(&self) -> f64 {
        self.control_latency_ms + self.inference_latency_ms
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rejection {
    pub request_id: RequestId,
    pub functionality: Functionality,
    pub latency_class: LatencyClass,
    pub reason: RejectReason,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct DeploymentPlan {
    /// Topology generation the plan was computed against.
    pub base_generation: u64,
    pub accepted: Vec<Deployment>,
    pub rejected: Vec<Rejection>,
}

pub fn app_type_for(kind: NodeKind, cfg: &OrchestratorConfig) -> Result<AppType, OrchestratorError> {
    match kind {
        NodeKind::Ru | NodeKind::Du => Ok(AppType::DApp),
        NodeKind::Cu if cfg.allow_cu_hosts => Ok(AppType::DApp),
        NodeKind::Cu => Err(OrchestratorError::UnsupportedHost(kind)),
        NodeKind::NearRtRic => Ok(AppType::XApp),
        NodeKind::NonRtRic => Ok(AppType::RApp),
    }
}

fn dispatch_interface(app: AppType, functionality: Functionality) -> DispatchInterface {
    match app {
        AppType::DApp => DispatchInterface::E2,
        AppType::XApp if functionality.is_per_cell() => DispatchInterface::E2,
        AppType::XApp => DispatchInterface::A1,
        AppType::RApp => DispatchInterface::O1,
    }
}

/// Nodes whose subtree contains every target RU (including a lone target
/// itself), root last.
fn common_path(topology: &Topology, targets: &BTreeSet<NodeId>) -> Result<Vec<NodeId>, TopologyError> {
    let mut iter = targets.iter();
    let Some(first) = iter.next() else { return Ok(Vec::new()) };
    let mut path = topology.path_to_root(*first)?;
    for t in iter {
        let other: BTreeSet<NodeId> = topology.path_to_root(*t)?.into_iter().collect();
        path.retain(|n| other.contains(n));
    }
    Ok(path)
}

struct Choice<'a> {
    model: &'a crate::catalog::ModelDescriptor,
    host: NodeId,
    kind: NodeKind,
    app: AppType,
    control_ms: f64,
    total_ms: f64,
}

/// Greedy placement. Pure: reads `topology`, never mutates it.
pub fn plan(
    requests: &[OperatorRequest],
    catalog: &Catalog,
    topology: &Topology,
    cfg: &OrchestratorConfig,
) -> Result<DeploymentPlan, OrchestratorError> {
    let mut order: Vec<&OperatorRequest> = requests.iter().collect();
    order.sort_by_key(|r| (r.latency_class, r.arrival_slot, r.id));

    let mut residual: BTreeMap<NodeId, u32> = BTreeMap::new();
    for n in topology.nodes() {
        residual.insert(n.id, topology.residual_capacity(n.id)?);
    }

    let mut out = DeploymentPlan { base_generation: topology.generation(), ..Default::default() };
    for req in order {
        let reject = |reason| Rejection {
            request_id: req.id,
            functionality: req.functionality,
            latency_class: req.latency_class,
            reason,
        };
        let models = catalog.candidates(req.functionality, req.latency_class);
        let path = common_path(topology, &req.target_rus)?;
        let bound = req.latency_class.loop_bound_ms();

        let mut structurally_possible = false;
        let mut latency_ok = false;
        let mut best: Option<Choice> = None;
        for model in &models {
            for &host in &path {
                let kind = topology.node(host)?.kind;
                if !model.allowed_hosts.contains(&kind) || req.location_constraint.is_some_and(|k| k != kind) {
                    continue;
                }
                let Ok(app) = app_type_for(kind, cfg) else { continue };
                structurally_possible = true;
                let mut control_ms: f64 = 0.0;
                for ru in &req.target_rus {
                    control_ms = control_ms.max(topology.control_loop_latency(host, *ru)?);
                }
                let total_ms = control_ms + model.inference_latency_ms;
                if total_ms > bound {
                    continue;
                }
                latency_ok = true;
                if residual[&host] < model.compute_cost {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some(b) => total_ms < b.total_ms || (total_ms == b.total_ms && host < b.host),
                };
                if better {
                    best = Some(Choice { model, host, kind, app, control_ms, total_ms });
                }
            }
        }

        match best {
            Some(c) => {
                *residual.get_mut(&c.host).expect("host from topology") -= c.model.compute_cost;
                out.accepted.push(Deployment {
                    request_id: req.id,
                    functionality: req.functionality,
                    latency_class: req.latency_class,
                    target_rus: req.target_rus.clone(),
                    model_id: c.model.id.clone(),
                    host: c.host,
                    host_kind: c.kind,
                    app_type: c.app,
                    compute_cost: c.model.compute_cost,
                    control_latency_ms: c.control_ms,
                    inference_latency_ms: c.model.inference_latency_ms,
                    dispatch_interface: dispatch_interface(c.app, req.functionality),
                });
            }
            None if !structurally_possible => out.rejected.push(reject(RejectReason::NoModel)),
            None if !latency_ok => out.rejected.push(reject(RejectReason::LatencyInfeasible)),
            None => out.rejected.push(reject(RejectReason::NoCapacity)),
        }
    }
    Ok(out)
}

/// Commit a plan's compute reservations. A plan applies once, and only to
/// the topology generation it was computed against.
pub fn apply_plan(topology: &mut Topology, plan: &DeploymentPlan) -> Result<(), OrchestratorError> {
    if plan.base_generation != topology.generation() {
        return Err(OrchestratorError::DoubleApply {
            plan: plan.base_generation,
            topology: topology.generation(),
        });
    }
    let mut demand: BTreeMap<NodeId, u32> = BTreeMap::new();
    for d in &plan.accepted {
        *demand.entry(d.host).or_default() += d.compute_cost;
    }
    for (&host, &cost) in &demand {
        if topology.residual_capacity(host)? < cost {
            return Err(OrchestratorError::CapacityViolation(host));
        }
    }
    for (host, cost) in demand {
        topology.node_mut(host)?.compute_used += cost;
    }
    topology.bump_generation();
    Ok(())
}

/// Return the compute reserved by a previously applied plan.
pub fn release_plan(topology: &mut Topology, plan: &DeploymentPlan) -> Result<(), OrchestratorError> {
    let mut demand: BTreeMap<NodeId, u32> = BTreeMap::new();
    for d in &plan.accepted {
        *demand.entry(d.host).or_default() += d.compute_cost;
    }
    for (&host, &cost) in &demand {
        if topology.node(host)?.compute_used < cost {
            return Err(OrchestratorError::ReleaseUnderflow(host));
        }
    }
    for (host, cost) in demand {
        topology.node_mut(host)?.compute_used -= cost;
    }
    topology.bump_generation();
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyEntry {
    pub request_id: RequestId,
    pub model_id: String,
    pub cadence_slots: u64,
    pub feedback_metrics: Vec<&'static str>,
    pub retrain: bool,
}

/// Data-collection and feedback-loop rules for a plan's deployments.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct OrchestrationPolicy {
    pub entries: Vec<PolicyEntry>,
}

pub fn policy_for(plan: &DeploymentPlan, catalog: &Catalog, slot_duration_ms: f64) -> OrchestrationPolicy {
    let entries = plan
        .accepted
        .iter()
        .map(|d| {
            let kind = catalog.get(&d.model_id).map(|m| m.kind);
            if kind == Some(ModelKind::ReinforcementLearning) {
                PolicyEntry {
                    request_id: d.request_id,
                    model_id: d.model_id.clone(),
                    cadence_slots: 1,
                    feedback_metrics: vec!["sinr", "queue_length", "reward"],
                    retrain: true,
                }
            } else {
                let cadence = (d.inference_latency_ms / slot_duration_ms).ceil().max(1.0) as u64;
                let metrics = match d.functionality {
                    Functionality::Scheduling => vec!["queue_length"],
                    Functionality::Beamforming => vec!["sinr"],
                    Functionality::NetworkSlicing => vec!["slice_throughput"],
                    Functionality::TrafficForecasting => vec!["traffic_volume"],
                    Functionality::AnomalyDetection => vec!["kpm_counters"],
                };
                PolicyEntry {
                    request_id: d.request_id,
                    model_id: d.model_id.clone(),
                    cadence_slots: cadence,
                    feedback_metrics: metrics,
                    retrain: false,
                }
            }
        })
        .collect();
    OrchestrationPolicy { entries }
}
