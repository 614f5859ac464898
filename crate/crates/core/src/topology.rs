//! Infrastructure abstraction: the five-tier RAN node forest.
//!
//! Node ids are dense and assigned tier by tier (non-RT RICs first, RUs
//! last), so "lowest id" tie-breaks are stable across the crate. Each child is
//! attached to parent `index % parent_count`, which spreads children evenly
//! and hands the remainder to the lowest-id parents.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("invalid topology spec: {0}")]
    InvalidSpec(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is not an RU")]
    NotAnRu(NodeId),
    #[error("no tree path from {host} down to {target}")]
    NoPath { host: NodeId, target: NodeId },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    NonRtRic,
    NearRtRic,
    Cu,
    Du,
    Ru,
}

impl NodeKind {
    /// Root-to-leaf order.
    pub const ALL: [NodeKind; 5] = [
        NodeKind::NonRtRic,
        NodeKind::NearRtRic,
        NodeKind::Cu,
        NodeKind::Du,
        NodeKind::Ru,
    ];

    pub fn parent_kind(self) -> Option<NodeKind> {
        match self {
            NodeKind::NonRtRic => None,
            NodeKind::NearRtRic => Some(NodeKind::NonRtRic),
            NodeKind::Cu => Some(NodeKind::NearRtRic),
            NodeKind::Du => Some(NodeKind::Cu),
            NodeKind::Ru => Some(NodeKind::Du),
        }
    }

    /// Distance from the root tier.
    pub fn depth(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            NodeKind::NonRtRic => "non-rt-ric",
            NodeKind::NearRtRic => "near-rt-ric",
            NodeKind::Cu => "cu",
            NodeKind::Du => "du",
            NodeKind::Ru => "ru",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Antenna site of a radio unit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RuSite {
    pub position: Position,
    pub height_m: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub compute_capacity: u32,
    pub compute_used: u32,
    /// Present iff `kind == Ru`.
    pub site: Option<RuSite>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Link {
    pub from: NodeId,
    pub to: NodeId,
    pub one_way_latency_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NodeCounts {
    pub non_rt_ric: u32,
    pub near_rt_ric: u32,
    pub cu: u32,
    pub du: u32,
    pub ru: u32,
}

impl Default for NodeCounts {
    fn default() -> Self {
        Self {
            non_rt_ric: 2,
            near_rt_ric: 5,
            cu: 3,
            du: 8,
            ru: 25,
        }
    }
}

impl NodeCounts {
    pub fn get(&self, kind: NodeKind) -> u32 {
        match kind {
            NodeKind::NonRtRic => self.non_rt_ric,
            NodeKind::NearRtRic => self.near_rt_ric,
            NodeKind::Cu => self.cu,
            NodeKind::Du => self.du,
            NodeKind::Ru => self.ru,
        }
    }

    pub fn total(&self) -> u32 {
        NodeKind::ALL.iter().map(|&k| self.get(k)).sum()
    }
}

/// One-way latency of the link from a parent tier to the tier below it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkLatencies {
    pub non_rt_ric_to_near_rt_ric_ms: f64,
    pub near_rt_ric_to_cu_ms: f64,
    pub cu_to_du_ms: f64,
    pub du_to_ru_ms: f64,
}

impl Default for LinkLatencies {
    fn default() -> Self {
        Self {
            non_rt_ric_to_near_rt_ric_ms: 20.0,
            near_rt_ric_to_cu_ms: 2.0,
            cu_to_du_ms: 1.0,
            du_to_ru_ms: 0.1,
        }
    }
}

impl LinkLatencies {
    /// Latency of the link whose child end has `child` kind.
    pub fn uplink_of(&self, child: NodeKind) -> Option<f64> {
        match child {
            NodeKind::NonRtRic => None,
            NodeKind::NearRtRic => Some(self.non_rt_ric_to_near_rt_ric_ms),
            NodeKind::Cu => Some(self.near_rt_ric_to_cu_ms),
            NodeKind::Du => Some(self.cu_to_du_ms),
            NodeKind::Ru => Some(self.du_to_ru_ms),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComputeCapacities {
    pub non_rt_ric: u32,
    pub near_rt_ric: u32,
    pub cu: u32,
    pub du: u32,
    pub ru: u32,
}

impl Default for ComputeCapacities {
    fn default() -> Self {
        Self {
            non_rt_ric: 64,
            near_rt_ric: 32,
            cu: 16,
            du: 8,
            ru: 2,
        }
    }
}

impl ComputeCapacities {
    pub fn get(&self, kind: NodeKind) -> u32 {
        match kind {
            NodeKind::NonRtRic => self.non_rt_ric,
            NodeKind::NearRtRic => self.near_rt_ric,
            NodeKind::Cu => self.cu,
            NodeKind::Du => self.du,
            NodeKind::Ru => self.ru,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyConfig {
    pub counts: NodeCounts,
    pub area_side_m: f64,
    pub ru_height_m: f64,
    pub link_latency: LinkLatencies,
    pub capacity: ComputeCapacities,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            counts: NodeCounts::default(),
            area_side_m: 1000.0,
            ru_height_m: 25.0,
            link_latency: LinkLatencies::default(),
            capacity: ComputeCapacities::default(),
        }
    }
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<(), TopologyError> {
        for kind in NodeKind::ALL {
            if self.counts.get(kind) == 0 {
                return Err(TopologyError::InvalidSpec(format!("{kind} count must be at least 1")));
            }
        }
        if !(self.area_side_m > 0.0 && self.area_side_m.is_finite()) {
            return Err(TopologyError::InvalidSpec("area_side_m must be positive".into()));
        }
        if !(self.ru_height_m > 1.0 && self.ru_height_m.is_finite()) {
            return Err(TopologyError::InvalidSpec("ru_height_m must exceed 1 m".into()));
        }
        for kind in &NodeKind::ALL[1..] {
            let l = self.link_latency.uplink_of(*kind).unwrap_or_default();
            if !(l > 0.0 && l.is_finite()) {
                return Err(TopologyError::InvalidSpec(format!(
                    "link latency into {kind} must be positive"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    nodes: Vec<Node>,
    links: Vec<Link>,
    parent: Vec<Option<NodeId>>,
    /// Latency of the link to the parent, per child.
    uplink_ms: Vec<f64>,
    area_side_m: f64,
    /// Bumped by every applied deployment plan.
    generation: u64,
}

/// Build the node forest. RU positions are uniform over the square area.
pub fn build_topology<R: Rng + ?Sized>(
    cfg: &TopologyConfig,
    rng: &mut R,
) -> Result<Topology, TopologyError> {
    cfg.validate()?;
    let total = cfg.counts.total() as usize;
    let mut nodes = Vec::with_capacity(total);
    let mut parent = Vec::with_capacity(total);
    let mut uplink_ms = Vec::with_capacity(total);
    let mut links = Vec::with_capacity(total);
    // first id of each tier
    let mut tier_start = [0u32; 5];

    let mut next = 0u32;
    for kind in NodeKind::ALL {
        tier_start[kind.depth()] = next;
        let count = cfg.counts.get(kind);
        for i in 0..count {
            let id = NodeId(next);
            let site = (kind == NodeKind::Ru).then(|| RuSite {
                position: Position {
                    x: rng.random::<f64>() * cfg.area_side_m,
                    y: rng.random::<f64>() * cfg.area_side_m,
                },
                height_m: cfg.ru_height_m,
            });
            let up = match kind.parent_kind() {
                Some(pk) => {
                    let p = NodeId(tier_start[pk.depth()] + i % cfg.counts.get(pk));
                    let latency = cfg.link_latency.uplink_of(kind).unwrap_or_default();
                    links.push(Link { from: p, to: id, one_way_latency_ms: latency });
                    uplink_ms.push(latency);
                    Some(p)
                }
                None => {
                    uplink_ms.push(0.0);
                    None
                }
            };
            parent.push(up);
            nodes.push(Node {
                id,
                kind,
                compute_capacity: cfg.capacity.get(kind),
                compute_used: 0,
                site,
            });
            next += 1;
        }
    }

    Ok(Topology {
        nodes,
        links,
        parent,
        uplink_ms,
        area_side_m: cfg.area_side_m,
        generation: 0,
    })
}

impl Topology {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn area_side_m(&self) -> f64 {
        self.area_side_m
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, TopologyError> {
        self.nodes.get(id.index()).ok_or(TopologyError::UnknownNode(id))
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> Result<&mut Node, TopologyError> {
        self.nodes.get_mut(id.index()).ok_or(TopologyError::UnknownNode(id))
    }

    pub(crate) fn bump_generation(&mut self) {
        self.generation += 1;
    }

    pub fn parent(&self, id: NodeId) -> Result<Option<NodeId>, TopologyError> {
        self.parent.get(id.index()).copied().ok_or(TopologyError::UnknownNode(id))
    }

    pub fn nodes_of(&self, kind: NodeKind) -> impl Iterator<Item = &Node> + '_ {
        self.nodes.iter().filter(move |n| n.kind == kind)
    }

    pub fn rus(&self) -> impl Iterator<Item = &Node> + '_ {
        self.nodes_of(NodeKind::Ru)
    }

    pub fn children(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.parent
            .iter()
            .enumerate()
            .filter(move |(_, p)| **p == Some(id))
            .map(|(i, _)| NodeId(i as u32))
    }

    /// `id` followed by its ancestors up to the root.
    pub fn path_to_root(&self, id: NodeId) -> Result<Vec<NodeId>, TopologyError> {
        self.node(id)?;
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.parent[cur.index()] {
            path.push(p);
            cur = p;
        }
        Ok(path)
    }

    /// The ancestor of `id` with the given kind (or `id` itself).
    pub fn ancestor_of_kind(&self, id: NodeId, kind: NodeKind) -> Result<Option<NodeId>, TopologyError> {
        Ok(self
            .path_to_root(id)?
            .into_iter()
            .find(|n| self.nodes[n.index()].kind == kind))
    }

    pub fn serving_du(&self, ru: NodeId) -> Result<NodeId, TopologyError> {
        if self.node(ru)?.kind != NodeKind::Ru {
            return Err(TopologyError::NotAnRu(ru));
        }
        Ok(self.parent[ru.index()].expect("RU always has a DU parent"))
    }

    /// RUs in the subtree of `id`, in id order.
    pub fn rus_under(&self, id: NodeId) -> Result<Vec<NodeId>, TopologyError> {
        self.node(id)?;
        let mut out = Vec::new();
        for ru in self.rus() {
            if self.path_to_root(ru.id)?.contains(&id) {
                out.push(ru.id);
            }
        }
        Ok(out)
    }

    pub fn residual_capacity(&self, id: NodeId) -> Result<u32, TopologyError> {
        let n = self.node(id)?;
        Ok(n.compute_capacity.saturating_sub(n.compute_used))
    }

    /// Round-trip latency over the tree path from `host` down to `target_ru`.
    pub fn control_loop_latency(&self, host: NodeId, target_ru: NodeId) -> Result<f64, TopologyError> {
        self.node(host)?;
        if self.node(target_ru)?.kind != NodeKind::Ru {
            return Err(TopologyError::NotAnRu(target_ru));
        }
        let mut one_way = 0.0;
        let mut cur = target_ru;
        loop {
            if cur == host {
                return Ok(2.0 * one_way);
            }
            match self.parent[cur.index()] {
                Some(p) => {
                    one_way += self.uplink_ms[cur.index()];
                    cur = p;
                }
                None => return Err(TopologyError::NoPath { host, target: target_ru }),
            }
        }
    }

    /// Exhaustive check of the structural and capacity invariants.
    pub fn check_invariants(&self) -> Result<(), String> {
        for n in &self.nodes {
            if n.compute_used > n.compute_capacity {
                return Err(format!(
                    "{} uses {} of {} compute units",
                    n.id, n.compute_used, n.compute_capacity
                ));
            }
            if n.site.is_some() != (n.kind == NodeKind::Ru) {
                return Err(format!("{} site presence does not match kind {}", n.id, n.kind));
            }
            let p = self.parent[n.id.index()];
            match (n.kind.parent_kind(), p) {
                (None, None) => {}
                (Some(pk), Some(p)) if self.nodes[p.index()].kind == pk => {}
                _ => return Err(format!("{} has a parent of the wrong tier", n.id)),
            }
        }
        Ok(())
    }
}
