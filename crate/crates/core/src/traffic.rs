//! Workload generation: operator requests for the orchestrator and UE data
//! sessions for the radio schedulers.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{NodeId, NodeKind, Position, Topology};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrafficError {
    #[error("invalid traffic configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Functionality {
    NetworkSlicing,
    Scheduling,
    Beamforming,
    TrafficForecasting,
    AnomalyDetection,
}

impl Functionality {
    pub const ALL: [Functionality; 5] = [
        Functionality::NetworkSlicing,
        Functionality::Scheduling,
        Functionality::Beamforming,
        Functionality::TrafficForecasting,
        Functionality::AnomalyDetection,
    ];

    /// Whether a request targets a single cell rather than a DU's cells.
    pub fn is_per_cell(self) -> bool {
        matches!(self, Functionality::Scheduling | Functionality::Beamforming)
    }
}

impl fmt::Display for Functionality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LatencyClass {
    RealTime,
    NearRealTime,
    NonRealTime,
}

impl LatencyClass {
    pub const ALL: [LatencyClass; 3] = [
        LatencyClass::RealTime,
        LatencyClass::NearRealTime,
        LatencyClass::NonRealTime,
    ];

    pub fn loop_bound_ms(self) -> f64 {
        match self {
            LatencyClass::RealTime => 10.0,
            LatencyClass::NearRealTime => 1000.0,
            LatencyClass::NonRealTime => 60_000.0,
        }
    }

    /// Tier whose control loop naturally matches the class.
    pub fn natural_host(self) -> NodeKind {
        match self {
            LatencyClass::RealTime => NodeKind::Du,
            LatencyClass::NearRealTime => NodeKind::NearRtRic,
            LatencyClass::NonRealTime => NodeKind::NonRtRic,
        }
    }
}

impl fmt::Display for LatencyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RequestId {
    pub slot: u64,
    pub seq: u32,
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.slot, self.seq)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorRequest {
    pub id: RequestId,
    pub functionality: Functionality,
    pub latency_class: LatencyClass,
    pub location_constraint: Option<NodeKind>,
    pub target_rus: BTreeSet<NodeId>,
    pub arrival_slot: u64,
    pub payload_bits: u64,
}

/// Categorical weights of the request mix (normalized on use).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RequestMix {
    pub scheduling: f64,
    pub beamforming: f64,
    pub network_slicing: f64,
    pub traffic_forecasting: f64,
    pub anomaly_detection: f64,
}

impl Default for RequestMix {
    fn default() -> Self {
        Self {
            scheduling: 0.4,
            beamforming: 0.3,
            network_slicing: 0.15,
            traffic_forecasting: 0.1,
            anomaly_detection: 0.05,
        }
    }
}

impl RequestMix {
    pub fn weight(&self, f: Functionality) -> f64 {
        match f {
            Functionality::Scheduling => self.scheduling,
            Functionality::Beamforming => self.beamforming,
            Functionality::NetworkSlicing => self.network_slicing,
            Functionality::TrafficForecasting => self.traffic_forecasting,
            Functionality::AnomalyDetection => self.anomaly_detection,
        }
    }

    pub fn probability(&self, f: Functionality) -> f64 {
        let total: f64 = Functionality::ALL.iter().map(|&x| self.weight(x)).sum();
        self.weight(f) / total
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Functionality {
        let total: f64 = Functionality::ALL.iter().map(|&x| self.weight(x)).sum();
        let mut u = rng.random::<f64>() * total;
        for f in Functionality::ALL {
            let w = self.weight(f);
            if u < w {
                return f;
            }
            u -= w;
        }
        // rounding residue lands on the last class with nonzero weight
        *Functionality::ALL.iter().rev().find(|&&f| self.weight(f) > 0.0).expect("validated mix")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    pub mix: RequestMix,
    /// Probability that a request pins its class's natural host tier.
    pub location_constraint_prob: f64,
    pub mean_arrival_rate_bps: f64,
    pub packet_bits: u64,
    pub request_payload_bits: u64,
    /// Packets queued longer than this are discarded; `inf` disables.
    pub discard_timer_ms: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            mix: RequestMix::default(),
            location_constraint_prob: 0.3,
            mean_arrival_rate_bps: 20e6,
            packet_bits: 12_000,
            request_payload_bits: 0,
            discard_timer_ms: 100.0,
        }
    }
}

impl TrafficConfig {
    pub fn validate(&self) -> Result<(), TrafficError> {
        let weights: Vec<f64> = Functionality::ALL.iter().map(|&f| self.mix.weight(f)).collect();
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(TrafficError::InvalidConfig("request mix weights must be non-negative with a positive sum".into()));
        }
        if !(0.0..=1.0).contains(&self.location_constraint_prob) {
            return Err(TrafficError::InvalidConfig("location_constraint_prob must lie in [0, 1]".into()));
        }
        if !(self.mean_arrival_rate_bps >= 0.0 && self.mean_arrival_rate_bps.is_finite()) {
            return Err(TrafficError::InvalidConfig("mean_arrival_rate_bps must be non-negative".into()));
        }
        if !(self.discard_timer_ms > 0.0) {
            return Err(TrafficError::InvalidConfig("discard_timer_ms must be positive".into()));
        }
        if self.packet_bits == 0 {
            return Err(TrafficError::InvalidConfig("packet_bits must be positive".into()));
        }
        Ok(())
    }
}

/// Generate exactly `load` operator requests for `slot`.
pub fn generate_requests<R: Rng + ?Sized>(
    rng: &mut R,
    slot: u64,
    load: u32,
    cfg: &TrafficConfig,
    topology: &Topology,
) -> Vec<OperatorRequest> {
    let rus: Vec<NodeId> = topology.rus().map(|n| n.id).collect();
    let dus: Vec<NodeId> = topology.nodes_of(NodeKind::Du).map(|n| n.id).collect();
    (0..load)
        .map(|seq| {
            let functionality = cfg.mix.sample(rng);
            let latency_class = match functionality {
                Functionality::Scheduling | Functionality::Beamforming => {
                    if rng.random::<bool>() {
                        LatencyClass::RealTime
                    } else {
                        LatencyClass::NearRealTime
                    }
                }
                Functionality::NetworkSlicing => LatencyClass::NearRealTime,
                Functionality::TrafficForecasting | Functionality::AnomalyDetection => LatencyClass::NonRealTime,
            };
            let target_rus: BTreeSet<NodeId> = if functionality.is_per_cell() {
                [rus[rng.random_range(0..rus.len())]].into()
            } else {
                let du = dus[rng.random_range(0..dus.len())];
                topology.rus_under(du).expect("DU from this topology").into_iter().collect()
            };
            let location_constraint =
                (rng.random::<f64>() < cfg.location_constraint_prob).then(|| latency_class.natural_host());
            OperatorRequest {
                id: RequestId { slot, seq },
                functionality,
                latency_class,
                location_constraint,
                target_rus,
                arrival_slot: slot,
                payload_bits: cfg.request_payload_bits,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UeId(pub u32);

impl fmt::Display for UeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ue{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UeSession {
    pub ue_id: UeId,
    pub position: Position,
    pub serving_ru: NodeId,
    pub backlog_bits: u64,
    pub arrival_rate_bps: f64,
}

/// RU with the minimum horizontal distance to `pos`; ties go to the lower id.
pub fn nearest_ru(topology: &Topology, pos: &Position) -> Option<NodeId> {
    let mut best: Option<(f64, NodeId)> = None;
    for ru in topology.rus() {
        let d = ru.site.expect("RU carries a site").position.distance(pos);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, ru.id));
        }
    }
    best.map(|(_, id)| id)
}

pub fn spawn_ues<R: Rng + ?Sized>(
    rng: &mut R,
    topology: &Topology,
    n_ues: u32,
    cfg: &TrafficConfig,
) -> Vec<UeSession> {
    let side = topology.area_side_m();
    (0..n_ues)
        .map(|i| {
            let position = Position { x: rng.random::<f64>() * side, y: rng.random::<f64>() * side };
            UeSession {
                ue_id: UeId(i),
                position,
                serving_ru: nearest_ru(topology, &position).expect("topology has RUs"),
                backlog_bits: 0,
                arrival_rate_bps: cfg.mean_arrival_rate_bps,
            }
        })
        .collect()
}

/// Add one slot's Poisson packet arrivals to the backlog; returns the
/// number of packets that arrived.
pub fn accumulate_arrivals<R: Rng + ?Sized>(
    session: &mut UeSession,
    rng: &mut R,
    slot_duration_ms: f64,
    packet_bits: u64,
) -> u64 {
    let mean = session.arrival_rate_bps * slot_duration_ms / 1000.0 / packet_bits as f64;
    if mean <= 0.0 {
        return 0;
    }
    let packets = Poisson::new(mean).expect("positive finite mean").sample(rng) as u64;
    session.backlog_bits += packets * packet_bits;
    packets
}
