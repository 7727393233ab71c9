//! Routing core of the relay: node registry, per-tick coalescing and delivery.
//!
//! This module is transport-agnostic. The network service owns one [`Router`]
//! behind a single task, feeds it decoded flakes, calls [`Router::tick`] once
//! per frame and drains each node's [`OutboundQueue`] onto its connection.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wire::{encode_flake, DeliveryClass, Flake, Payload};

/// Labels under `sys.` are reserved for the registration and tick protocol.
pub const SYS_PREFIX: &str = "sys.";
pub const SYS_REGISTER: &str = "sys.register";
pub const SYS_ACK: &str = "sys.ack";
pub const SYS_ERROR: &str = "sys.error";
pub const SYS_SYNC: &str = "sys.sync";
pub const SYS_TICK: &str = "sys.tick";
/// Origin name stamped on flakes generated by the relay itself.
pub const RELAY_ORIGIN: &str = "relay";
pub const OUTBOUND_CAP: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RelayError {
    #[error("node name {0:?} is already registered")]
    DuplicateName(String),
    #[error("registration for {0:?} lists no roles")]
    EmptyRoles(String),
    #[error("invalid registration: {0}")]
    BadRegistration(String),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("node {0:?} lacks the EMITTER role")]
    RoleViolation(String),
    #[error("node {node:?} published with origin {origin:?}")]
    OriginSpoof { node: String, origin: String },
    #[error("node {node:?} published scope {got:?} but registered scope {expected:?}")]
    ScopeMismatch {
        node: String,
        expected: String,
        got: String,
    },
    #[error("stale STATE seq {seq} from {origin:?} (last seen {last})")]
    StaleSeq { origin: String, seq: u32, last: u32 },
    #[error("label {0:?} is reserved")]
    ReservedLabel(String),
}

impl RelayError {
    /// Stable machine-readable code carried in `sys.error` flakes.
    pub fn code(&self) -> &'static str {
        match self {
            RelayError::DuplicateName(_) => "DuplicateName",
            RelayError::EmptyRoles(_) => "EmptyRoles",
            RelayError::BadRegistration(_) => "BadRegistration",
            RelayError::UnknownNode(_) => "UnknownNode",
            RelayError::RoleViolation(_) => "RoleViolation",
            RelayError::OriginSpoof { .. } => "OriginSpoof",
            RelayError::ScopeMismatch { .. } => "ScopeMismatch",
            RelayError::StaleSeq { .. } => "StaleSeq",
            RelayError::ReservedLabel(_) => "ReservedLabel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Emitter,
    Sink,
}

/// Exact label, or a prefix pattern ending in `*` (`"pose.*"`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelPattern(String);

impl LabelPattern {
    pub fn new(p: impl Into<String>) -> Self {
        LabelPattern(p.into())
    }

    pub fn matches(&self, label: &str) -> bool {
        match self.0.strip_suffix('*') {
            Some(prefix) => label.starts_with(prefix),
            None => self.0 == label,
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LabelPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Registration record, sent as JSON in the TEXT payload of `sys.register`:
///
/// ```json
/// {"name": "P", "roles": ["emitter", "sink"], "subscriptions": ["render", "pose.*"]}
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRegistration {
    pub name: String,
    pub roles: BTreeSet<NodeRole>,
    #[serde(default)]
    pub subscriptions: Vec<LabelPattern>,
}

impl NodeRegistration {
    pub fn new<I, S>(name: impl Into<String>, roles: &[NodeRole], subs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        NodeRegistration {
            name: name.into(),
            roles: roles.iter().copied().collect(),
            subscriptions: subs.into_iter().map(|s| LabelPattern::new(s)).collect(),
        }
    }

    pub fn is_emitter(&self) -> bool {
        self.roles.contains(&NodeRole::Emitter)
    }

    pub fn is_sink(&self) -> bool {
        self.roles.contains(&NodeRole::Sink)
    }

    pub fn wants(&self, label: &str) -> bool {
        self.subscriptions.iter().any(|p| p.matches(label))
    }

    /// Builds the `sys.register` flake announcing this registration.
    pub fn to_flake(&self, scope: &str) -> Flake {
        Flake::new(
            scope,
            SYS_REGISTER,
            self.name.clone(),
            DeliveryClass::Event,
            0,
            Payload::Text(serde_json::to_string(self).expect("registration serializes")),
        )
    }

    /// Parses the first packet of a connection.
    pub fn from_flake(f: &Flake) -> Result<Self, RelayError> {
        if f.label != SYS_REGISTER || f.class != DeliveryClass::Event {
            return Err(RelayError::BadRegistration(format!(
                "first packet must be an EVENT labeled {SYS_REGISTER}, got {} {:?}",
                f.class, f.label
            )));
        }
        let Payload::Text(json) = &f.payload else {
            return Err(RelayError::BadRegistration("payload must be TEXT".into()));
        };
        let reg: NodeRegistration =
            serde_json::from_str(json).map_err(|e| RelayError::BadRegistration(e.to_string()))?;
        if reg.name != f.origin {
            return Err(RelayError::OriginSpoof {
                node: reg.name,
                origin: f.origin.clone(),
            });
        }
        Ok(reg)
    }
}

type SlotKey = (String, String, String);

/// Per-frame pending traffic.
#[derive(Debug, Default, Clone)]
pub struct TickState {
    pub frame_no: u64,
    /// Latest STATE flake per (scope, label, origin).
    pub coalesced: BTreeMap<SlotKey, Flake>,
    /// EVENT flakes with their arrival index.
    pub event_queue: Vec<(u64, Flake)>,
}

/// What the router knows about a live node.
#[derive(Debug, Clone)]
pub struct NodeInfo {
    pub registration: NodeRegistration,
    pub scope: String,
}

pub type Registry = BTreeMap<String, NodeInfo>;

/// Computes each sink's deliveries for one tick.
///
/// A sink receives the flakes in its scope whose label matches one of its
/// subscriptions and whose origin is not itself. Within a list all EVENTs come
/// first, ordered by (origin, seq, arrival), followed by STATEs ordered by
/// (label, scope, origin).
pub fn route_tick(state: &TickState, registry: &Registry) -> BTreeMap<String, Vec<Flake>> {
    let mut events: Vec<&(u64, Flake)> = state.event_queue.iter().collect();
    events.sort_by(|(a_arr, a), (b_arr, b)| (&a.origin, a.seq, a_arr).cmp(&(&b.origin, b.seq, b_arr)));
    let mut states: Vec<&Flake> = state.coalesced.values().collect();
    states.sort_by(|a, b| (&a.label, &a.scope, &a.origin).cmp(&(&b.label, &b.scope, &b.origin)));

    let mut out = BTreeMap::new();
    for (name, info) in registry {
        if !info.registration.is_sink() {
            continue;
        }
        let wanted = |f: &&Flake| f.origin != *name && f.scope == info.scope && info.registration.wants(&f.label);
        let list: Vec<Flake> = events
            .iter()
            .map(|(_, f)| f)
            .filter(wanted)
            .chain(states.iter().copied().filter(wanted))
            .cloned()
            .collect();
        out.insert(name.clone(), list);
    }
    out
}

/// Encoded packet waiting to be written to a node's connection.
#[derive(Debug, Clone)]
pub struct Outbound {
    pub class: DeliveryClass,
    pub packet: Arc<[u8]>,
}

/// Bounded per-node send queue. When full, the oldest STATE packet is dropped
/// to make room; EVENT packets are never dropped, so the queue may exceed its
/// capacity when it holds nothing but EVENTs.
#[derive(Debug)]
pub struct OutboundQueue {
    items: VecDeque<Outbound>,
    cap: usize,
    dropped: u64,
}

impl OutboundQueue {
    pub fn new(cap: usize) -> Self {
        OutboundQueue {
            items: VecDeque::new(),
            cap,
            dropped: 0,
        }
    }

    pub fn push(&mut self, item: Outbound) {
        if self.items.len() >= self.cap {
            if let Some(i) = self.items.iter().position(|o| o.class == DeliveryClass::State) {
                self.items.remove(i);
                self.dropped += 1;
            } else if item.class == DeliveryClass::State {
                self.dropped += 1;
                return;
            }
        }
        self.items.push_back(item);
    }

    pub fn pop(&mut self) -> Option<Outbound> {
        self.items.pop_front()
    }

    /// Returns the head to the front after a failed send.
    pub fn unpop(&mut self, item: Outbound) {
        self.items.push_front(item);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

/// Result of an accepted publish.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ack {
    /// Frame whose tick will deliver the flake.
    pub frame_no: u64,
    /// True when a STATE flake replaced one published earlier in the same tick.
    pub superseded: bool,
}

/// One routed delivery, as written to the relay delivery log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryRecord {
    pub frame_no: u64,
    pub node: String,
    pub class: DeliveryClass,
    pub label: String,
    pub origin: String,
    pub seq: u32,
}

impl fmt::Display for DeliveryRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {}",
            self.frame_no, self.node, self.class, self.label, self.origin, self.seq
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayStats {
    pub frame_no: u64,
    pub nodes: Vec<String>,
    pub accepted: u64,
    pub delivered: u64,
    pub stale_dropped: u64,
    pub queue_dropped: u64,
}

struct Node {
    info: NodeInfo,
    last_seq: Option<u32>,
    outbound: OutboundQueue,
}

/// The relay's single logical router. One writer; not `Sync`-shared.
pub struct Router {
    nodes: BTreeMap<String, Node>,
    tick: TickState,
    arrival: u64,
    control_seq: u32,
    accepted: u64,
    delivered: u64,
    stale_dropped: u64,
    retired_drops: u64,
    cap: usize,
}

impl Default for Router {
    fn default() -> Self {
        Self::new()
    }
}

impl Router {
    pub fn new() -> Self {
        Self::with_capacity(OUTBOUND_CAP)
    }

    pub fn with_capacity(cap: usize) -> Self {
        Router {
            nodes: BTreeMap::new(),
            tick: TickState::default(),
            arrival: 0,
            control_seq: 0,
            accepted: 0,
            delivered: 0,
            stale_dropped: 0,
            retired_drops: 0,
            cap,
        }
    }

    pub fn frame_no(&self) -> u64 {
        self.tick.frame_no
    }

    pub fn register(&mut self, reg: NodeRegistration, scope: &str) -> Result<(), RelayError> {
        if reg.name.is_empty() || reg.name == RELAY_ORIGIN {
            return Err(RelayError::BadRegistration(format!("invalid node name {:?}", reg.name)));
        }
        if reg.roles.is_empty() {
            return Err(RelayError::EmptyRoles(reg.name));
        }
        if self.nodes.contains_key(&reg.name) {
            return Err(RelayError::DuplicateName(reg.name));
        }
        let name = reg.name.clone();
        self.nodes.insert(
            name,
            Node {
                info: NodeInfo {
                    registration: reg,
                    scope: scope.to_owned(),
                },
                last_seq: None,
                outbound: OutboundQueue::new(self.cap),
            },
        );
        Ok(())
    }

    /// Removes a node. Its pending STATE slots are kept until the next tick.
    pub fn unregister(&mut self, name: &str) -> bool {
        match self.nodes.remove(name) {
            Some(n) => {
                self.retired_drops += n.outbound.dropped();
                true
            }
            None => false,
        }
    }

    pub fn is_registered(&self, name: &str) -> bool {
        self.nodes.contains_key(name)
    }

    pub fn publish(&mut self, node: &str, f: Flake) -> Result<Ack, RelayError> {
        let n = self
            .nodes
            .get_mut(node)
            .ok_or_else(|| RelayError::UnknownNode(node.to_owned()))?;
        if !n.info.registration.is_emitter() {
            return Err(RelayError::RoleViolation(node.to_owned()));
        }
        if f.origin != node {
            return Err(RelayError::OriginSpoof {
                node: node.to_owned(),
                origin: f.origin,
            });
        }
        if f.scope != n.info.scope {
            return Err(RelayError::ScopeMismatch {
                node: node.to_owned(),
                expected: n.info.scope.clone(),
                got: f.scope,
            });
        }
        if f.label.starts_with(SYS_PREFIX) {
            return Err(RelayError::ReservedLabel(f.label));
        }
        if f.class == DeliveryClass::State {
            if let Some(last) = n.last_seq.filter(|&last| f.seq <= last) {
                self.stale_dropped += 1;
                tracing::warn!(origin = %f.origin, seq = f.seq, last, "dropping stale STATE flake");
                return Err(RelayError::StaleSeq {
                    origin: f.origin,
                    seq: f.seq,
                    last,
                });
            }
        }
        n.last_seq = Some(n.last_seq.map_or(f.seq, |l| l.max(f.seq)));
        self.accepted += 1;
        let superseded = match f.class {
            DeliveryClass::State => {
                let key = (f.scope.clone(), f.label.clone(), f.origin.clone());
                self.tick.coalesced.insert(key, f).is_some()
            }
            DeliveryClass::Event => {
                self.arrival += 1;
                self.tick.event_queue.push((self.arrival, f));
                false
            }
        };
        Ok(Ack {
            frame_no: self.tick.frame_no,
            superseded,
        })
    }

    /// Routes the pending traffic, enqueues it on every sink followed by a
    /// `sys.tick` marker, clears the tick state and advances the frame.
    pub fn tick(&mut self) -> Vec<DeliveryRecord> {
        let registry: Registry = self.nodes.iter().map(|(k, n)| (k.clone(), n.info.clone())).collect();
        let deliveries = route_tick(&self.tick, &registry);
        let frame_no = self.tick.frame_no;

        // Encode each distinct flake once and share the bytes across sinks.
        type Key = (String, String, u32, DeliveryClass, String);
        let mut cache: HashMap<Key, Arc<[u8]>> = HashMap::new();
        let mut log = Vec::new();
        for (name, flakes) in deliveries {
            for f in flakes {
                let key = (f.origin.clone(), f.label.clone(), f.seq, f.class, f.scope.clone());
                let packet = cache
                    .entry(key)
                    .or_insert_with(|| encode_flake(&f).expect("accepted flakes encode").into())
                    .clone();
                log.push(DeliveryRecord {
                    frame_no,
                    node: name.clone(),
                    class: f.class,
                    label: f.label.clone(),
                    origin: f.origin.clone(),
                    seq: f.seq,
                });
                self.delivered += 1;
                if let Some(n) = self.nodes.get_mut(&name) {
                    n.outbound.push(Outbound { class: f.class, packet });
                }
            }
        }
        let sinks: Vec<(String, String)> = self
            .nodes
            .iter()
            .filter(|(_, n)| n.info.registration.is_sink())
            .map(|(k, n)| (k.clone(), n.info.scope.clone()))
            .collect();
        for (name, scope) in sinks {
            let marker = self.control_flake(&scope, SYS_TICK, Payload::Bytes(frame_no.to_be_bytes().to_vec()));
            self.enqueue_control(&name, &marker);
        }
        self.tick.coalesced.clear();
        self.tick.event_queue.clear();
        self.tick.frame_no += 1;
        log
    }

    /// Builds a relay-originated EVENT flake.
    pub fn control_flake(&mut self, scope: &str, label: &str, payload: Payload) -> Flake {
        self.control_seq = self.control_seq.wrapping_add(1);
        Flake::new(
            scope,
            label,
            RELAY_ORIGIN,
            DeliveryClass::Event,
            self.control_seq,
            payload,
        )
    }

    /// Queues a control flake for one node immediately, outside the tick.
    pub fn enqueue_control(&mut self, node: &str, f: &Flake) {
        if let Some(n) = self.nodes.get_mut(node) {
            n.outbound.push(Outbound {
                class: DeliveryClass::Event,
                packet: encode_flake(f).expect("control flakes encode").into(),
            });
        }
    }

    pub fn outbound_mut(&mut self, node: &str) -> Option<&mut OutboundQueue> {
        self.nodes.get_mut(node).map(|n| &mut n.outbound)
    }

    pub fn node_names(&self) -> Vec<String> {
        self.nodes.keys().cloned().collect()
    }

    pub fn pending(&self) -> &TickState {
        &self.tick
    }

    pub fn stats(&self) -> RelayStats {
        RelayStats {
            frame_no: self.tick.frame_no,
            nodes: self.node_names(),
            accepted: self.accepted,
            delivered: self.delivered,
            stale_dropped: self.stale_dropped,
            queue_dropped: self.retired_drops + self.nodes.values().map(|n| n.outbound.dropped()).sum::<u64>(),
        }
    }
}

/// Extracts the frame number from a `sys.tick` marker.
pub fn tick_frame(f: &Flake) -> Option<u64> {
    if f.label != SYS_TICK || f.origin != RELAY_ORIGIN {
        return None;
    }
    match &f.payload {
        Payload::Bytes(b) if b.len() == 8 => Some(u64::from_be_bytes(b.as_slice().try_into().ok()?)),
        _ => None,
    }
}

/// JSON body of a `sys.error` flake.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorNotice {
    pub code: String,
    pub message: String,
}

impl From<&RelayError> for ErrorNotice {
    fn from(e: &RelayError) -> Self {
        ErrorNotice {
            code: e.code().to_owned(),
            message: e.to_string(),
        }
    }
}
