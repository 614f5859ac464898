//! Discrete-time slot engine.
//!
//! Each slot: (1) on orchestration epochs, generate operator requests, plan
//! and apply them; (2) per DU, draw packet arrivals and fast fading; (3) per
//! DU, schedule every cell, drain backlogs and record latency samples; (4)
//! merge the DU results in DU-id order. Steps 2 and 3 run in parallel across
//! DUs on private random substreams, so results do not depend on thread
//! count or execution order.

use std::collections::{BTreeMap, VecDeque};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::catalog::Catalog;
use crate::channel::{
    db_to_linear, draw_realization, fast_fade_db, linear_to_db, noise_power_dbm, received_power_dbm,
    link_spectral_efficiency, ChannelError, ChannelRealization, LinkGeometry,
};
use crate::metrics::{self, packet_latency, MetricError};
use crate::orchestrator::{
    apply_plan, plan, policy_for, release_plan, AppType, DeploymentPlan, OrchestrationPolicy, OrchestratorError,
    RejectReason,
};
use crate::rng::{substream, Stream};
use crate::sched::{
    act, learn, schedule_maxmin, schedule_pf, schedule_preset, schedule_rr, update_pf, AgentState, Allocation,
    Observation, PfState, Preset, RrState, SchedError, UeDemand,
};
use crate::spec::{InvalidSpec, ScenarioSpec, SchedulerKind};
use crate::topology::{build_topology, NodeId, NodeKind, Topology, TopologyError};
use crate::traffic::{accumulate_arrivals, generate_requests, spawn_ues, Functionality, LatencyClass, RequestId, UeId, UeSession};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    InvalidSpec(#[from] InvalidSpec),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invariant violated at slot {slot}: {detail}")]
    InvariantViolation { slot: u64, detail: String },
}

/// Measurements for one slot.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotMetrics {
    pub slot: u64,
    /// Delivered bits per allocated Hz per second, network-wide; `None`
    /// when no PRB was allocated.
    pub mean_se: Option<f64>,
    pub allocated_prbs: u64,
    pub delivered_bits: u64,
    /// Indexed by UE id.
    pub served_bits: Vec<u64>,
    pub latency_samples_ms: Vec<f64>,
    pub dropped_packets: u64,
    /// Over UEs that were backlogged this slot; `None` when none was
    /// served.
    pub jain: Option<f64>,
    pub rejected_requests: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UeTrace {
    pub ue: UeId,
    pub ru: NodeId,
    pub backlog_before: u64,
    pub arrived_bits: u64,
    /// Bits discarded by the queue timer before scheduling.
    pub dropped_bits: u64,
    pub served_bits: u64,
    pub backlog_after: u64,
    /// Sum of the bits left in the packet queue.
    pub queued_bits: u64,
    pub prbs: u32,
    /// PRBs needed to clear the backlog at the effective rate.
    pub demand_prbs: u32,
    pub bits_per_prb: f64,
    pub spectral_efficiency: f64,
    pub sinr_db: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellTrace {
    pub ru: NodeId,
    pub allocated_prbs: u32,
    pub total_prbs: u32,
    pub preset: Option<Preset>,
    pub boosted: Option<UeId>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComputeTrace {
    pub node: NodeId,
    pub used: u32,
    pub capacity: u32,
}

/// Everything the engine observed during one slot, for auditing.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotTrace {
    pub metrics: SlotMetrics,
    pub ues: Vec<UeTrace>,
    pub cells: Vec<CellTrace>,
    pub compute: Vec<ComputeTrace>,
}

/// One orchestrator decision, accepted or rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanRecord {
    pub slot: u64,
    pub request_id: RequestId,
    pub functionality: Functionality,
    pub latency_class: LatencyClass,
    pub model_id: Option<String>,
    pub host: Option<NodeId>,
    pub app_type: Option<AppType>,
    pub control_latency_ms: Option<f64>,
    pub reject_reason: Option<RejectReason>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize)]
pub struct Aggregates {
    pub measured_slots: u64,
    pub completed_packets: u64,
    pub dropped_packets: u64,
    pub mean_latency_ms: Option<f64>,
    pub p50_latency_ms: Option<f64>,
    pub p95_latency_ms: Option<f64>,
    pub p99_latency_ms: Option<f64>,
    pub latency_variance_ms2: Option<f64>,
    pub mean_se: Option<f64>,
    pub mean_jain: Option<f64>,
    pub throughput_bps: f64,
    pub rejected_requests: u64,
}

impl Aggregates {
    /// Aggregate the slots at or after `spec.warmup_slots`.
    pub fn from_slots(spec: &ScenarioSpec, slots: &[SlotMetrics]) -> Self {
        let measured: Vec<&SlotMetrics> = slots.iter().filter(|s| s.slot >= spec.warmup_slots).collect();
        let mut lat: Vec<f64> = measured.iter().flat_map(|s| s.latency_samples_ms.iter().copied()).collect();
        lat.sort_by(f64::total_cmp);
        let slot_s = spec.slot_duration_ms / 1000.0;
        let prb_hz = spec.radio.prb_bandwidth_hz();
        let delivered: u64 = measured.iter().map(|s| s.delivered_bits).sum();
        let allocated: u64 = measured.iter().map(|s| s.allocated_prbs).sum();
        let jains: Vec<f64> = measured.iter().filter_map(|s| s.jain).collect();
        Aggregates {
            measured_slots: measured.len() as u64,
            completed_packets: lat.len() as u64,
            dropped_packets: measured.iter().map(|s| s.dropped_packets).sum(),
            mean_latency_ms: metrics::mean(&lat),
            p50_latency_ms: metrics::percentile_sorted(&lat, 50.0),
            p95_latency_ms: metrics::percentile_sorted(&lat, 95.0),
            p99_latency_ms: metrics::percentile_sorted(&lat, 99.0),
            latency_variance_ms2: metrics::variance(&lat),
            mean_se: (allocated > 0).then(|| delivered as f64 / (allocated as f64 * prb_hz * slot_s)),
            mean_jain: metrics::mean(&jains),
            throughput_bps: if measured.is_empty() {
                0.0
            } else {
                delivered as f64 / (measured.len() as f64 * slot_s)
            },
            rejected_requests: measured.iter().map(|s| s.rejected_requests as u64).sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationReport {
    pub spec: ScenarioSpec,
    pub slots: Vec<SlotMetrics>,
    pub aggregates: Aggregates,
    pub plans: Vec<PlanRecord>,
    pub wall_clock: Duration,
}

impl SimulationReport {
    pub fn recompute(&self) -> Aggregates {
        Aggregates::from_slots(&self.spec, &self.slots)
    }

    /// Check that the stored aggregates match a recomputation from the
    /// per-slot records within relative 1e-12.
    pub fn verify(&self) -> Result<(), String> {
        let r = self.recompute();
        let a = &self.aggregates;
        let close = |name: &str, x: Option<f64>, y: Option<f64>| match (x, y) {
            (None, None) => Ok(()),
            (Some(x), Some(y)) if (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(f64::MIN_POSITIVE) => Ok(()),
            _ => Err(format!("{name}: stored {x:?}, recomputed {y:?}")),
        };
        close("mean_latency_ms", a.mean_latency_ms, r.mean_latency_ms)?;
        close("p50_latency_ms", a.p50_latency_ms, r.p50_latency_ms)?;
        close("p95_latency_ms", a.p95_latency_ms, r.p95_latency_ms)?;
        close("p99_latency_ms", a.p99_latency_ms, r.p99_latency_ms)?;
        close("latency_variance_ms2", a.latency_variance_ms2, r.latency_variance_ms2)?;
        close("mean_se", a.mean_se, r.mean_se)?;
        close("mean_jain", a.mean_jain, r.mean_jain)?;
        close("throughput_bps", Some(a.throughput_bps), Some(r.throughput_bps))?;
        if (a.measured_slots, a.completed_packets, a.dropped_packets, a.rejected_requests)
            != (r.measured_slots, r.completed_packets, r.dropped_packets, r.rejected_requests)
        {
            return Err("counts differ from recomputation".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Packet {
    enqueue_slot: u64,
    remaining_bits: u64,
}

#[derive(Clone, Debug)]
struct Ue {
    session: UeSession,
    queue: VecDeque<Packet>,
    /// Large-scale serving link; `fast_fade_db` holds the current slot's draw.
    serving: ChannelRealization,
    /// Per-PRB received power from every other RU when transmitting on the
    /// whole grid, mW, keyed by RU position.
    interference_mw: Vec<(usize, f64)>,
    arrived_bits: u64,
    dropped_bits: u64,
    dropped_packets: u64,
    backlog_before: u64,
}

#[derive(Clone, Debug)]
struct Cell {
    ru: NodeId,
    ru_idx: usize,
    ues: Vec<Ue>,
    rr: RrState,
    pf: PfState,
    /// Last decision awaiting its successor observation.
    pending: Option<(Observation, Preset, f64)>,
    control_overhead_ms: f64,
}

#[derive(Clone, Debug)]
struct Shard {
    du: NodeId,
    cells: Vec<Cell>,
    agent: AgentState,
}

/// Read-only per-slot context shared by the DU workers.
struct SlotCtx<'a> {
    spec: &'a ScenarioSpec,
    slot: u64,
    /// Fraction of each RU's grid in use, from the previous slot.
    utilization: &'a [f64],
    noise_mw: f64,
    tx_prb_mw_db: f64,
    bits_per_hz_slot: f64,
}

impl SlotCtx<'_> {
    fn measured(&self) -> bool {
        self.slot >= self.spec.warmup_slots
    }

    fn sinr_db(&self, ue: &Ue) -> f64 {
        let signal = db_to_linear(self.tx_prb_mw_db + ue.serving.gain_db());
        let interference: f64 =
            ue.interference_mw.iter().map(|(r, p)| self.utilization[*r] * p).sum();
        linear_to_db(signal / (self.noise_mw + interference))
    }

    fn bits_per_prb(&self, se: f64) -> f64 {
        se * self.bits_per_hz_slot
    }
}

struct CellOutcome {
    ues: Vec<UeTrace>,
    cell: CellTrace,
    latencies: Vec<f64>,
    dropped_packets: u64,
}

impl Shard {
    fn draw_arrivals_and_fading(&mut self, spec: &ScenarioSpec, slot: u64) {
        let mut arrivals = substream(spec.seed, Stream::Arrivals, slot, self.du.0 as u64);
        let mut fading = substream(spec.seed, Stream::FastFading, slot, self.du.0 as u64);
        for cell in &mut self.cells {
            for ue in &mut cell.ues {
                ue.backlog_before = ue.session.backlog_bits;
                let packets = accumulate_arrivals(
                    &mut ue.session,
                    &mut arrivals,
                    spec.slot_duration_ms,
                    spec.traffic.packet_bits,
                );
                for _ in 0..packets {
                    ue.queue.push_back(Packet { enqueue_slot: slot, remaining_bits: spec.traffic.packet_bits });
                }
                ue.arrived_bits = packets * spec.traffic.packet_bits;
                ue.dropped_bits = 0;
                ue.dropped_packets = 0;
                while let Some(head) = ue.queue.front() {
                    if ((slot - head.enqueue_slot) as f64 * spec.slot_duration_ms) <= spec.traffic.discard_timer_ms {
                        break;
                    }
                    ue.dropped_bits += head.remaining_bits;
                    ue.dropped_packets += 1;
                    ue.queue.pop_front();
                }
                ue.session.backlog_bits -= ue.dropped_bits;
                ue.serving.fast_fade_db = fast_fade_db(ue.serving.los, spec.channel.rician_k_db, &mut fading);
            }
        }
    }

    fn schedule(&mut self, ctx: &SlotCtx) -> Result<Vec<CellOutcome>, SimError> {
        let mut rng = substream(ctx.spec.seed, Stream::Agent, ctx.slot, self.du.0 as u64);
        self.agent.set_slot(ctx.slot);
        let mut out = Vec::with_capacity(self.cells.len());
        for cell in &mut self.cells {
            out.push(schedule_cell(cell, &mut self.agent, ctx, &mut rng)?);
        }
        Ok(out)
    }
}

fn schedule_cell(
    cell: &mut Cell,
    agent: &mut AgentState,
    ctx: &SlotCtx,
    rng: &mut crate::rng::SimRng,
) -> Result<CellOutcome, SimError> {
    let spec = ctx.spec;
    let prbs = spec.radio.prb_count;
    let cap = spec.radio.se_cap;
    let slot_ms = spec.slot_duration_ms;

    let sinr: Vec<f64> = cell.ues.iter().map(|u| ctx.sinr_db(u)).collect();
    let se: Vec<f64> = sinr.iter().map(|s| link_spectral_efficiency(*s, &spec.radio)).collect();
    let mut demands = Vec::new();
    let mut index_of: BTreeMap<UeId, usize> = BTreeMap::new();
    for (i, ue) in cell.ues.iter().enumerate() {
        index_of.insert(ue.session.ue_id, i);
        // UEs in outage have no usable MCS and are never offered to a scheduler
        if ue.session.backlog_bits > 0 && se[i] > 0.0 {
            let head = ue.queue.front().expect("backlogged UE has a queued packet");
            demands.push(UeDemand {
                ue: ue.session.ue_id,
                bits_per_prb: ctx.bits_per_prb(se[i]),
                backlog_bits: ue.session.backlog_bits,
                hol_delay_ms: (ctx.slot - head.enqueue_slot) as f64 * slot_ms,
            });
        }
    }

    let boost_db = agent.cfg.beam_boost_db;
    let boosted_bpp = |d: &UeDemand| ctx.bits_per_prb(link_spectral_efficiency(sinr[index_of[&d.ue]] + boost_db, &spec.radio));
    let mut preset = None;
    let mut obs = None;
    let (allocation, boosted): (Allocation, Option<UeId>) = match spec.scheduler {
        SchedulerKind::RoundRobin => (schedule_rr(&mut cell.rr, &demands, prbs), None),
        SchedulerKind::ProportionalFair => (schedule_pf(&cell.pf, &demands, prbs), None),
        SchedulerKind::MaxMinFairness => (schedule_maxmin(&demands, prbs), None),
        SchedulerKind::OrchestRAN => {
            let mean_se = if demands.is_empty() {
                0.0
            } else {
                demands.iter().map(|d| se[index_of[&d.ue]]).sum::<f64>() / demands.len() as f64
            };
            let o = Observation::new(demands.len(), mean_se);
            if let Some((prev, action, reward)) = cell.pending.take() {
                learn(agent, prev, action, reward, o)?;
            }
            let p = act(agent, o, rng);
            preset = Some(p);
            obs = Some(o);
            let outcome = schedule_preset(p, &cell.pf, &demands, prbs, agent.cfg.latency_bound_ms, &boosted_bpp);
            (outcome.allocation, outcome.boosted)
        }
    };

    let mut traces = Vec::with_capacity(cell.ues.len());
    let mut latencies = Vec::new();
    let mut served_map = BTreeMap::new();
    let mut delivered = 0u64;
    let mut hol_sum = 0.0;
    let mut hol_n = 0usize;
    for (i, ue) in cell.ues.iter_mut().enumerate() {
        let id = ue.session.ue_id;
        let n = allocation.get(id);
        let (eff_se, eff_sinr) = if boosted == Some(id) {
            (link_spectral_efficiency(sinr[i] + boost_db, &spec.radio), sinr[i] + boost_db)
        } else {
            (se[i], sinr[i])
        };
        let bpp = ctx.bits_per_prb(eff_se);
        let capacity = (n as f64 * bpp).floor() as u64;
        let served = ue.session.backlog_bits.min(capacity);
        if served > 0 {
            let rate_bps = n as f64 * bpp / (slot_ms / 1000.0);
            let mut left = served;
            while left > 0 {
                let head = ue.queue.front_mut().expect("served bits come from queued packets");
                let take = head.remaining_bits.min(left);
                head.remaining_bits -= take;
                left -= take;
                if head.remaining_bits == 0 {
                    let p = ue.queue.pop_front().expect("head exists");
                    if ctx.measured() {
                        latencies.push(packet_latency(
                            p.enqueue_slot,
                            ctx.slot,
                            spec.traffic.packet_bits,
                            rate_bps,
                            cell.control_overhead_ms,
                            slot_ms,
                        )?);
                    }
                }
            }
        }
        ue.session.backlog_bits -= served;
        delivered += served;
        served_map.insert(id, served);
        // outage UEs are outside the agent's control and stay out of its reward
        if let (Some(head), true) = (ue.queue.front(), se[i] > 0.0) {
            hol_sum += (ctx.slot - head.enqueue_slot) as f64 * slot_ms;
            hol_n += 1;
        }
        let offered = ue.backlog_before + ue.arrived_bits - ue.dropped_bits;
        let demand = UeDemand { ue: id, bits_per_prb: bpp, backlog_bits: offered, hol_delay_ms: 0.0 };
        traces.push(UeTrace {
            ue: id,
            ru: cell.ru,
            backlog_before: ue.backlog_before,
            arrived_bits: ue.arrived_bits,
            dropped_bits: ue.dropped_bits,
            served_bits: served,
            backlog_after: ue.session.backlog_bits,
            queued_bits: ue.queue.iter().map(|p| p.remaining_bits).sum(),
            prbs: n,
            demand_prbs: if demand.backlog_bits == 0 { 0 } else { demand.demand_prbs() },
            bits_per_prb: bpp,
            spectral_efficiency: eff_se,
            sinr_db: eff_sinr,
        });
    }
    update_pf(&mut cell.pf, &served_map, slot_ms);

    if let (Some(o), Some(p)) = (obs, preset) {
        let alloc_hz_s = allocation.allocated() as f64 * ctx.bits_per_hz_slot;
        let se_alloc = if alloc_hz_s > 0.0 { delivered as f64 / alloc_hz_s } else { 0.0 };
        let hol = if hol_n > 0 { hol_sum / hol_n as f64 } else { 0.0 };
        cell.pending = Some((o, p, agent.cfg.reward(se_alloc, cap, hol)));
    }

    Ok(CellOutcome {
        ues: traces,
        cell: CellTrace {
            ru: cell.ru,
            allocated_prbs: allocation.allocated(),
            total_prbs: allocation.total_prbs,
            preset,
            boosted,
        },
        latencies,
        dropped_packets: cell.ues.iter().map(|u| u.dropped_packets).sum(),
    })
}

pub struct Simulation {
    spec: ScenarioSpec,
    catalog: Catalog,
    topology: Topology,
    shards: Vec<Shard>,
    /// RU positions in shard/cell iteration order.
    ru_order: Vec<usize>,
    utilization: Vec<f64>,
    n_ues: usize,
    slot: u64,
    live_plan: Option<DeploymentPlan>,
    policy: OrchestrationPolicy,
    plans: Vec<PlanRecord>,
}

impl Simulation {
    pub fn new(spec: ScenarioSpec) -> Result<Self, SimError> {
        spec.validate()?;
        let catalog = spec.build_catalog()?;
        let topology = build_topology(&spec.topology, &mut substream(spec.seed, Stream::Topology, 0, 0))?;
        let sessions = spawn_ues(
            &mut substream(spec.seed, Stream::UePlacement, 0, 0),
            &topology,
            spec.n_ues,
            &spec.traffic,
        );
        let rus: Vec<(NodeId, crate::topology::RuSite)> =
            topology.rus().map(|n| (n.id, n.site.expect("RU carries a site"))).collect();
        let ru_index: BTreeMap<NodeId, usize> = rus.iter().enumerate().map(|(i, (id, _))| (*id, i)).collect();
        let radio = &spec.radio;
        let prb_hz = radio.prb_bandwidth_hz();

        let mut per_ru: Vec<Vec<Ue>> = vec![Vec::new(); rus.len()];
        for s in sessions {
            let mut serving = None;
            let mut interference_mw = Vec::with_capacity(rus.len() - 1);
            for (r, (ru, site)) in rus.iter().enumerate() {
                let geom = LinkGeometry::new(
                    site.position.distance(&s.position),
                    site.height_m,
                    spec.channel.ue_height_m,
                    spec.channel.fc_ghz,
                );
                let mut rng = substream(spec.seed, Stream::LargeScale, s.ue_id.0 as u64, ru.0 as u64);
                let mut link = draw_realization(&geom, &spec.channel, &mut rng)?;
                link.fast_fade_db = 0.0;
                if *ru == s.serving_ru {
                    serving = Some(link);
                } else {
                    let rx_dbm = received_power_dbm(&link, radio, prb_hz) - radio.sidelobe_rejection_db;
                    interference_mw.push((r, db_to_linear(rx_dbm)));
                }
            }
            let r = ru_index[&s.serving_ru];
            per_ru[r].push(Ue {
                session: s,
                queue: VecDeque::new(),
                serving: serving.expect("serving RU is among the RUs"),
                interference_mw,
                arrived_bits: 0,
                dropped_bits: 0,
                dropped_packets: 0,
                backlog_before: 0,
            });
        }

        let mut per_ru: Vec<Option<Vec<Ue>>> = per_ru.into_iter().map(Some).collect();
        let mut shards = Vec::new();
        for du in topology.nodes_of(NodeKind::Du).map(|n| n.id).collect::<Vec<_>>() {
            let mut cells = Vec::new();
            for ru in topology.rus_under(du)? {
                let ru_idx = ru_index[&ru];
                let ues = per_ru[ru_idx].take().expect("each RU belongs to one DU");
                let ids: Vec<UeId> = ues.iter().map(|u| u.session.ue_id).collect();
                let mut pf = PfState::new(spec.pf_time_constant_slots);
                for id in &ids {
                    pf.track(*id);
                }
                cells.push(Cell {
                    ru,
                    ru_idx,
                    ues,
                    rr: RrState::new(ids),
                    pf,
                    pending: None,
                    control_overhead_ms: topology.control_loop_latency(du, ru)?,
                });
            }
            shards.push(Shard { du, cells, agent: AgentState::new(spec.agent) });
        }

        Ok(Self {
            n_ues: spec.n_ues as usize,
            catalog,
            topology,
            ru_order: shards.iter().flat_map(|s| s.cells.iter().map(|c| c.ru_idx)).collect(),
            utilization: vec![0.0; ru_index.len()],
            shards,
            slot: 0,
            live_plan: None,
            policy: OrchestrationPolicy::default(),
            plans: Vec::new(),
            spec,
        })
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn policy(&self) -> &OrchestrationPolicy {
        &self.policy
    }

    pub fn current_slot(&self) -> u64 {
        self.slot
    }

    pub fn plan_records(&self) -> &[PlanRecord] {
        &self.plans
    }

    /// Q-tables of the per-DU agents, in DU order.
    pub fn agents(&self) -> impl Iterator<Item = (NodeId, &AgentState)> {
        self.shards.iter().map(|s| (s.du, &s.agent))
    }

    fn violation(&self, detail: String) -> SimError {
        SimError::InvariantViolation { slot: self.slot, detail }
    }

    fn orchestrate(&mut self) -> Result<u32, SimError> {
        let slot = self.slot;
        if let Some(prev) = self.live_plan.take() {
            release_plan(&mut self.topology, &prev)?;
        }
        let mut rng = substream(self.spec.seed, Stream::Requests, slot, 0);
        let requests =
            generate_requests(&mut rng, slot, self.spec.requests_per_slot, &self.spec.traffic, &self.topology);
        let p = plan(&requests, &self.catalog, &self.topology, &self.spec.orchestrator)?;
        if p.accepted.len() + p.rejected.len() != requests.len() {
            return Err(self.violation("plan does not partition the request batch".into()));
        }
        apply_plan(&mut self.topology, &p)?;
        self.topology.check_invariants().map_err(|e| self.violation(e))?;
        self.policy = policy_for(&p, &self.catalog, self.spec.slot_duration_ms);

        // control-loop overhead: best deployed scheduling app per RU, else
        // the DU-native loop
        for shard in &mut self.shards {
            for cell in &mut shard.cells {
                let mut best = self.topology.control_loop_latency(shard.du, cell.ru)?;
                for d in &p.accepted {
                    if d.functionality == Functionality::Scheduling && d.target_rus.contains(&cell.ru) {
                        best = best.min(d.control_latency_ms);
                    }
                }
                cell.control_overhead_ms = best;
            }
        }

        for d in &p.accepted {
            self.plans.push(PlanRecord {
                slot,
                request_id: d.request_id,
                functionality: d.functionality,
                latency_class: d.latency_class,
                model_id: Some(d.model_id.clone()),
                host: Some(d.host),
                app_type: Some(d.app_type),
                control_latency_ms: Some(d.control_latency_ms),
                reject_reason: None,
            });
        }
        for r in &p.rejected {
            self.plans.push(PlanRecord {
                slot,
                request_id: r.request_id,
                functionality: r.functionality,
                latency_class: r.latency_class,
                model_id: None,
                host: None,
                app_type: None,
                control_latency_ms: None,
                reject_reason: Some(r.reason),
            });
        }
        let rejected = p.rejected.len() as u32;
        self.live_plan = Some(p);
        Ok(rejected)
    }

    /// Advance one slot.
    pub fn step(&mut self) -> Result<SlotTrace, SimError> {
        let slot = self.slot;
        let rejected = if slot.is_multiple_of(self.spec.orchestration_epoch_slots) { self.orchestrate()? } else { 0 };

        let spec = &self.spec;
        self.shards.par_iter_mut().for_each(|s| s.draw_arrivals_and_fading(spec, slot));

        let radio = &spec.radio;
        let ctx = SlotCtx {
            spec,
            slot,
            utilization: &self.utilization,
            noise_mw: db_to_linear(noise_power_dbm(radio.prb_bandwidth_hz(), radio.noise_figure_db)),
            tx_prb_mw_db: radio.tx_power_per_prb_dbm() + radio.antenna_gain_db,
            bits_per_hz_slot: radio.prb_bandwidth_hz() * spec.slot_duration_ms / 1000.0,
        };
        let outcomes: Vec<Vec<CellOutcome>> =
            self.shards.par_iter_mut().map(|s| s.schedule(&ctx)).collect::<Result<_, _>>()?;

        let mut served_bits = vec![0u64; self.n_ues];
        let mut latency_samples_ms = Vec::new();
        let mut ues = Vec::with_capacity(self.n_ues);
        let mut cells = Vec::new();
        let mut jain_values = Vec::new();
        let (mut allocated, mut delivered, mut dropped) = (0u64, 0u64, 0u64);
        for (outcome, ru_idx) in outcomes.into_iter().flatten().zip(&self.ru_order) {
            self.utilization[*ru_idx] = outcome.cell.allocated_prbs as f64 / outcome.cell.total_prbs.max(1) as f64;
            allocated += outcome.cell.allocated_prbs as u64;
            dropped += outcome.dropped_packets;
            latency_samples_ms.extend(outcome.latencies);
            for t in &outcome.ues {
                served_bits[t.ue.0 as usize] = t.served_bits;
                delivered += t.served_bits;
                if t.backlog_before + t.arrived_bits > t.dropped_bits {
                    jain_values.push(t.served_bits as f64);
                }
            }
            ues.extend(outcome.ues);
            cells.push(outcome.cell);
        }
        ues.sort_by_key(|t| t.ue);

        let slot_s = self.spec.slot_duration_ms / 1000.0;
        let metrics = SlotMetrics {
            slot,
            mean_se: (allocated > 0)
                .then(|| delivered as f64 / (allocated as f64 * self.spec.radio.prb_bandwidth_hz() * slot_s)),
            allocated_prbs: allocated,
            delivered_bits: delivered,
            served_bits,
            latency_samples_ms,
            dropped_packets: dropped,
            jain: metrics::jain(&jain_values).ok(),
            rejected_requests: rejected,
        };
        let compute = self
            .topology
            .nodes()
            .iter()
            .map(|n| ComputeTrace { node: n.id, used: n.compute_used, capacity: n.compute_capacity })
            .collect();
        let trace = SlotTrace { metrics, ues, cells, compute };
        self.check_slot(&trace)?;
        self.slot += 1;
        Ok(trace)
    }

    fn check_slot(&self, t: &SlotTrace) -> Result<(), SimError> {
        for c in &t.cells {
            if c.allocated_prbs > c.total_prbs {
                return Err(self.violation(format!("{} allocated {} of {} PRBs", c.ru, c.allocated_prbs, c.total_prbs)));
            }
        }
        let slot_s = self.spec.slot_duration_ms / 1000.0;
        let prb_hz = self.spec.radio.prb_bandwidth_hz();
        for u in &t.ues {
            if u.backlog_before + u.arrived_bits != u.backlog_after + u.served_bits + u.dropped_bits
                || u.queued_bits != u.backlog_after
            {
                return Err(self.violation(format!("{} backlog not conserved", u.ue)));
            }
            let bound = u.spectral_efficiency * u.prbs as f64 * prb_hz * slot_s;
            if u.served_bits as f64 > bound * (1.0 + 1e-12) {
                return Err(self.violation(format!("{} served beyond Shannon capacity", u.ue)));
            }
        }
        for c in &t.compute {
            if c.used > c.capacity {
                return Err(self.violation(format!("{} compute {} > {}", c.node, c.used, c.capacity)));
            }
        }
        Ok(())
    }

    /// Run every remaining slot and aggregate.
    pub fn run_to_end(mut self) -> Result<SimulationReport, SimError> {
        let start = Instant::now();
        let mut slots = Vec::with_capacity((self.spec.n_slots - self.slot) as usize);
        while self.slot < self.spec.n_slots {
            slots.push(self.step()?.metrics);
        }
        let aggregates = Aggregates::from_slots(&self.spec, &slots);
        Ok(SimulationReport { aggregates, slots, plans: self.plans, wall_clock: start.elapsed(), spec: self.spec })
    }
}

pub fn run(spec: ScenarioSpec) -> Result<SimulationReport, SimError> {
    Simulation::new(spec)?.run_to_end()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scheduler: SchedulerKind) -> ScenarioSpec {
        ScenarioSpec { scheduler, n_ues: 60, n_slots: 300, warmup_slots: 100, seed: 3, ..Default::default() }
    }

    #[test]
    fn zero_slots_rejected() {
        let spec = ScenarioSpec { n_slots: 0, warmup_slots: 0, ..Default::default() };
        assert!(matches!(run(spec), Err(SimError::InvalidSpec(_))));
    }

    #[test]
    fn report_is_self_consistent_and_deterministic() {
        for k in SchedulerKind::ALL {
            let a = run(small(k)).unwrap();
            a.verify().unwrap();
            assert!(a.aggregates.completed_packets > 0, "{k}");
            let b = run(small(k)).unwrap();
            assert_eq!(a.slots, b.slots);
            assert_eq!(a.plans, b.plans);
        }
    }

    #[test]
    fn arrivals_are_common_across_schedulers() {
        let mut a = Simulation::new(small(SchedulerKind::RoundRobin)).unwrap();
        let mut b = Simulation::new(small(SchedulerKind::MaxMinFairness)).unwrap();
        let ta = a.step().unwrap();
        let tb = b.step().unwrap();
        let arr = |t: &SlotTrace| t.ues.iter().map(|u| u.arrived_bits).collect::<Vec<_>>();
        assert_eq!(arr(&ta), arr(&tb));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let spec = small(SchedulerKind::OrchestRAN);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run(spec.clone())).unwrap();
        let b = four.install(|| run(spec)).unwrap();
        assert_eq!(a.slots, b.slots);
    }
}
