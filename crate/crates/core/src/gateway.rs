//! Bridging between signal buses and the service network.
//!
//! A [`Gateway`] in service mode unpacks mapped signals from bus frames and
//! publishes them as service events or field updates. In signal mode it
//! forwards selected frames verbatim inside [`RawUdpFrame`]s; a [`UdpAdapter`]
//! on the receiving node then applies the same service rules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::service::{Endpoint, Member, Middleware, Notification, ServiceError, Value};
use crate::signal::{BusFrame, FrameDef, SignalError};
use crate::{NodeId, Tick};

/// Bytes of frame-id prefix in front of an encapsulated payload.
pub const UDP_PREFIX_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("invalid mapping: {0}")]
    InvalidMapping(String),
    #[error("gateway is not in {0:?} mode")]
    WrongMode(GatewayMode),
    #[error("no route for frame 0x{frame_id:X} on `{bus}`")]
    NoRoute { bus: String, frame_id: u32 },
    #[error("unknown frame id 0x{0:X}")]
    UnknownFrameId(u32),
    #[error("udp frame of {0} bytes is too short for a frame-id prefix")]
    Truncated(usize),
    #[error("rule target does not accept the value: {0}")]
    SchemaMismatch(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Service(#[from] ServiceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GatewayMode {
    ServiceGateway,
    SignalGateway,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    BusToService,
    ServiceToBus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalSource {
    pub bus: String,
    pub frame_id: u32,
    /// Required for service rules; ignored by passthrough rules.
    #[serde(default)]
    pub signal: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleTarget {
    /// `member_id` is an event id (high bit set) or a field base id.
    Service {
        service_id: u16,
        instance_id: u16,
        member_id: u16,
    },
    Udp { endpoint: Endpoint },
}

/// `a * x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine<T> {
    pub a: T,
    pub b: T,
}

impl<T: Scalar> Affine<T> {
    pub fn apply(&self, x: T) -> T {
        self.a * x + self.b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct MappingRule<T> {
    pub source: SignalSource,
    pub target: RuleTarget,
    #[serde(default)]
    pub transform: Option<Affine<T>>,
    #[serde(default)]
    pub direction: Direction,
}

impl<T: Scalar> MappingRule<T> {
    pub fn service(bus: &str, frame_id: u32, signal: &str, service_id: u16, instance_id: u16, member_id: u16) -> Self {
        Self {
            source: SignalSource {
                bus: bus.to_owned(),
                frame_id,
                signal: Some(signal.to_owned()),
            },
            target: RuleTarget::Service {
                service_id,
                instance_id,
                member_id,
            },
            transform: None,
            direction: Direction::BusToService,
        }
    }

    pub fn passthrough(bus: &str, frame_id: u32, endpoint: Endpoint) -> Self {
        Self {
            source: SignalSource {
                bus: bus.to_owned(),
                frame_id,
                signal: None,
            },
            target: RuleTarget::Udp { endpoint },
            transform: None,
            direction: Direction::BusToService,
        }
    }

    pub fn with_transform(mut self, a: T, b: T) -> Self {
        self.transform = Some(Affine { a, b });
        self
    }

    pub fn reversed(mut self) -> Self {
        self.direction = Direction::ServiceToBus;
        self
    }

    fn transformed(&self, x: T) -> T {
        self.transform.map_or(x, |t| t.apply(x))
    }

    fn matches_frame(&self, bus: &str, frame_id: u32) -> bool {
        self.direction == Direction::BusToService
            && self.source.frame_id == frame_id
            && self.source.bus == bus
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de>"))]
pub struct GatewayMapping<T> {
    pub mode: GatewayMode,
    pub rules: Vec<MappingRule<T>>,
}

impl<T: Scalar> GatewayMapping<T> {
    pub fn new(mode: GatewayMode, rules: Vec<MappingRule<T>>) -> Result<Self, GatewayError> {
        let mapping = Self { mode, rules };
        mapping.validate()?;
        Ok(mapping)
    }

    /// Service mode needs service targets with a named signal; signal mode
    /// needs UDP targets only.
    pub fn validate(&self) -> Result<(), GatewayError> {
        for (i, rule) in self.rules.iter().enumerate() {
            match (self.mode, &rule.target) {
                (GatewayMode::ServiceGateway, RuleTarget::Service { .. }) => {
                    if rule.source.signal.is_none() {
                        return Err(GatewayError::InvalidMapping(format!(
                            "rule {i} names no source signal"
                        )));
                    }
                }
                (GatewayMode::SignalGateway, RuleTarget::Udp { .. }) => {
                    if rule.direction != Direction::BusToService {
                        return Err(GatewayError::InvalidMapping(format!(
                            "rule {i}: passthrough rules only run bus to network"
                        )));
                    }
                }
                (mode, _) => {
                    return Err(GatewayError::InvalidMapping(format!(
                        "rule {i} target does not fit {mode:?} mode"
                    )))
                }
            }
        }
        Ok(())
    }
}

/// A bus frame encapsulated for the service network: 4-byte big-endian frame
/// id followed by the untouched frame payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawUdpFrame {
    pub destination: Endpoint,
    pub payload: Vec<u8>,
}

impl RawUdpFrame {
    pub fn encapsulate(frame: &BusFrame, destination: Endpoint) -> Self {
        let mut payload = Vec::with_capacity(UDP_PREFIX_LEN + frame.payload.len());
        payload.extend_from_slice(&frame.frame_id.to_be_bytes());
        payload.extend_from_slice(&frame.payload);
        Self {
            destination,
            payload,
        }
    }

    pub fn frame_id(&self) -> Result<u32, GatewayError> {
        let prefix: [u8; UDP_PREFIX_LEN] = self
            .payload
            .get(..UDP_PREFIX_LEN)
            .and_then(|p| p.try_into().ok())
            .ok_or(GatewayError::Truncated(self.payload.len()))?;
        Ok(u32::from_be_bytes(prefix))
    }

    /// Payload with the frame-id prefix stripped.
    pub fn inner(&self) -> &[u8] {
        self.payload.get(UDP_PREFIX_LEN..).unwrap_or(&[])
    }
}

/// One value handed to the service side by a rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Emission {
    pub rule: usize,
    pub service_id: u16,
    pub instance_id: u16,
    pub member_id: u16,
    pub values: Vec<Value>,
    /// Subscribers notified by the publish or field update.
    pub notified: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleFailure {
    pub rule: usize,
    pub error: GatewayError,
}

/// Result of routing one frame to the service side.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RouteOutcome {
    pub emissions: Vec<Emission>,
    /// Failing rules; sibling rules still fired.
    pub failures: Vec<RuleFailure>,
    /// No rule matched the frame.
    pub dropped: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GatewayStats {
    pub processed: u64,
    pub dropped: u64,
}

impl GatewayStats {
    pub fn observed(&self) -> u64 {
        self.processed + self.dropped
    }
}

/// Publishes `value` to a rule's service target.
fn deliver<T: Scalar>(
    mw: &mut Middleware,
    rule_index: usize,
    target: &RuleTarget,
    value: T,
) -> Result<Emission, GatewayError> {
    let RuleTarget::Service {
        service_id,
        instance_id,
        member_id,
    } = *target
    else {
        return Err(GatewayError::InvalidMapping(format!(
            "rule {rule_index} has no service target"
        )));
    };
    let iface = mw
        .interface(service_id)
        .ok_or(ServiceError::UnknownService(service_id))?;
    let (schema, field_id) = match iface.member(member_id) {
        Some(Member::Event(e)) => (e.schema.clone(), None),
        Some(Member::FieldNotifier(f)) => (f.schema.clone(), Some(f.field_id)),
        _ => match iface.field(member_id) {
            Some(f) => (f.schema.clone(), Some(f.field_id)),
            None => {
                return Err(GatewayError::SchemaMismatch(format!(
                    "service 0x{service_id:04X} has no event or field 0x{member_id:04X}"
                )))
            }
        },
    };
    let [element] = schema.elements.as_slice() else {
        return Err(GatewayError::SchemaMismatch(format!(
            "target 0x{member_id:04X} has {} elements, expected exactly one",
            schema.len()
        )));
    };
    let values = vec![Value::from_scalar(element.primitive, value)
        .map_err(|e| GatewayError::SchemaMismatch(e.to_string()))?];
    let notified = match field_id {
        None => mw.publish_event(service_id, instance_id, member_id, &values)?,
        Some(fid) => mw.set_field_local(service_id, instance_id, fid, &values)?,
    };
    Ok(Emission {
        rule: rule_index,
        service_id,
        instance_id,
        member_id,
        values,
        notified,
    })
}

fn value_to_scalar<T: Scalar>(v: &Value) -> Option<T> {
    match v.as_i128() {
        Some(i) => T::from_i128(i),
        None => T::from_f64(v.as_f64()),
    }
}

/// Gateway node attached to one or more buses and the service network.
#[derive(Debug, Clone)]
pub struct Gateway<T> {
    node: NodeId,
    mapping: GatewayMapping<T>,
    frames: BTreeMap<(String, u32), FrameDef<T>>,
    /// Last payload sent per frame for the service-to-bus direction.
    shadow: BTreeMap<(String, u32), Vec<u8>>,
    stats: GatewayStats,
}

impl<T: Scalar> Gateway<T> {
    /// `frames` lists `(bus, def)` for every frame a rule refers to.
    pub fn new(
        node: impl Into<NodeId>,
        mapping: GatewayMapping<T>,
        frames: impl IntoIterator<Item = (String, FrameDef<T>)>,
    ) -> Result<Self, GatewayError> {
        mapping.validate()?;
        let frames: BTreeMap<_, _> = frames
            .into_iter()
            .map(|(bus, def)| ((bus, def.frame_id), def))
            .collect();
        for (i, rule) in mapping.rules.iter().enumerate() {
            let key = (rule.source.bus.clone(), rule.source.frame_id);
            let def = frames.get(&key).ok_or_else(|| {
                GatewayError::InvalidMapping(format!(
                    "rule {i}: no frame 0x{:X} on `{}`",
                    key.1, key.0
                ))
            })?;
            if let Some(sig) = &rule.source.signal {
                if mapping.mode == GatewayMode::ServiceGateway && def.signal(sig).is_none() {
                    return Err(GatewayError::InvalidMapping(format!(
                        "rule {i}: frame 0x{:X} has no signal `{sig}`",
                        key.1
                    )));
                }
            }
        }
        Ok(Self {
            node: node.into(),
            mapping,
            frames,
            shadow: BTreeMap::new(),
            stats: GatewayStats::default(),
        })
    }

    pub fn node(&self) -> &NodeId {
        &self.node
    }

    pub fn mode(&self) -> GatewayMode {
        self.mapping.mode
    }

    pub fn mapping(&self) -> &GatewayMapping<T> {
        &self.mapping
    }

    pub fn stats(&self) -> GatewayStats {
        self.stats
    }

    /// Service-mode handling of a frame received on `bus`.
    pub fn on_bus_frame_service_mode(
        &mut self,
        bus: &str,
        frame: &BusFrame,
        mw: &mut Middleware,
    ) -> Result<RouteOutcome, GatewayError> {
        if self.mapping.mode != GatewayMode::ServiceGateway {
            return Err(GatewayError::WrongMode(GatewayMode::ServiceGateway));
        }
        let matching: Vec<usize> = (0..self.mapping.rules.len())
            .filter(|i| self.mapping.rules[*i].matches_frame(bus, frame.frame_id))
            .collect();
        let mut outcome = RouteOutcome::default();
        if matching.is_empty() {
            self.stats.dropped += 1;
            outcome.dropped = true;
            return Ok(outcome);
        }
        self.stats.processed += 1;
        let def = &self.frames[&(bus.to_owned(), frame.frame_id)];
        for i in matching {
            let rule = &self.mapping.rules[i];
            let signal = rule.source.signal.as_deref().expect("validated service rule");
            let result = def
                .signal(signal)
                .expect("validated signal")
                .unpack(&frame.payload)
                .map_err(GatewayError::from)
                .and_then(|x| deliver(mw, i, &rule.target, rule.transformed(x)));
            match result {
                Ok(e) => outcome.emissions.push(e),
                Err(error) => outcome.failures.push(RuleFailure { rule: i, error }),
            }
        }
        Ok(outcome)
    }

    /// Signal-mode handling: one encapsulated frame per matching destination.
    pub fn on_bus_frame_signal_mode(
        &mut self,
        bus: &str,
        frame: &BusFrame,
    ) -> Result<Vec<RawUdpFrame>, GatewayError> {
        if self.mapping.mode != GatewayMode::SignalGateway {
            return Err(GatewayError::WrongMode(GatewayMode::SignalGateway));
        }
        let mut out: Vec<RawUdpFrame> = Vec::new();
        for rule in &self.mapping.rules {
            if let RuleTarget::Udp { endpoint } = &rule.target {
                if rule.matches_frame(bus, frame.frame_id)
                    && !out.iter().any(|r| &r.destination == endpoint)
                {
                    out.push(RawUdpFrame::encapsulate(frame, endpoint.clone()));
                }
            }
        }
        if out.is_empty() {
            self.stats.dropped += 1;
            return Err(GatewayError::NoRoute {
                bus: bus.to_owned(),
                frame_id: frame.frame_id,
            });
        }
        self.stats.processed += 1;
        Ok(out)
    }

    /// Events the gateway must subscribe to for its service-to-bus rules.
    pub fn reverse_sources(&self) -> Vec<(u16, u16, u16)> {
        self.mapping
            .rules
            .iter()
            .filter(|r| r.direction == Direction::ServiceToBus)
            .filter_map(|r| match r.target {
                RuleTarget::Service {
                    service_id,
                    instance_id,
                    member_id,
                } => Some((service_id, instance_id, member_id)),
                RuleTarget::Udp { .. } => None,
            })
            .collect()
    }

    /// Service-to-bus direction: packs notified values into their frames.
    /// Returns `(bus, frame)` pairs ready to send.
    pub fn on_notification(
        &mut self,
        note: &Notification,
        now: Tick,
    ) -> Result<Vec<(String, BusFrame)>, GatewayError> {
        let mut touched: Vec<(String, u32)> = Vec::new();
        for rule in &self.mapping.rules {
            let RuleTarget::Service {
                service_id,
                instance_id,
                member_id,
            } = rule.target
            else {
                continue;
            };
            if rule.direction != Direction::ServiceToBus
                || (service_id, instance_id, member_id)
                    != (note.service_id, note.instance_id, note.event_id)
            {
                continue;
            }
            let [value] = note.values.as_slice() else {
                return Err(GatewayError::SchemaMismatch(
                    "reverse rules need single-element events".into(),
                ));
            };
            let x: T = value_to_scalar(value).ok_or_else(|| {
                GatewayError::SchemaMismatch(format!("{value} is not representable"))
            })?;
            let key = (rule.source.bus.clone(), rule.source.frame_id);
            let def = &self.frames[&key];
            let sig = rule
                .source
                .signal
                .as_deref()
                .and_then(|s| def.signal(s))
                .ok_or_else(|| GatewayError::InvalidMapping("reverse rule without signal".into()))?;
            let payload = self
                .shadow
                .entry(key.clone())
                .or_insert_with(|| vec![0; def.payload_length]);
            sig.pack(payload, rule.transformed(x))?;
            if !touched.contains(&key) {
                touched.push(key);
            }
        }
        Ok(touched
            .into_iter()
            .map(|key| {
                let frame = BusFrame {
                    frame_id: key.1,
                    payload: self.shadow[&key].clone(),
                    sent_at: now,
                    sender: self.node.clone(),
                };
                (key.0, frame)
            })
            .collect())
    }
}

/// Adaptive-side endpoint that turns encapsulated frames back into service data.
#[derive(Debug, Clone)]
pub struct UdpAdapter<T> {
    frames: BTreeMap<u32, FrameDef<T>>,
    rules: Vec<MappingRule<T>>,
}

impl<T: Scalar> UdpAdapter<T> {
    pub fn new(
        frames: impl IntoIterator<Item = FrameDef<T>>,
        rules: Vec<MappingRule<T>>,
    ) -> Result<Self, GatewayError> {
        GatewayMapping::new(GatewayMode::ServiceGateway, rules.clone())?;
        let frames: BTreeMap<u32, FrameDef<T>> =
            frames.into_iter().map(|d| (d.frame_id, d)).collect();
        for (i, rule) in rules.iter().enumerate() {
            let def = frames.get(&rule.source.frame_id).ok_or_else(|| {
                GatewayError::InvalidMapping(format!(
                    "rule {i}: no frame 0x{:X}",
                    rule.source.frame_id
                ))
            })?;
            let sig = rule.source.signal.as_deref().unwrap_or_default();
            if def.signal(sig).is_none() {
                return Err(GatewayError::InvalidMapping(format!(
                    "rule {i}: frame 0x{:X} has no signal `{sig}`",
                    def.frame_id
                )));
            }
        }
        Ok(Self { frames, rules })
    }

    /// Decodes the frame and applies every rule for its frame id.
    pub fn on_raw_frame(
        &mut self,
        raw: &RawUdpFrame,
        mw: &mut Middleware,
    ) -> Result<RouteOutcome, GatewayError> {
        let frame_id = raw.frame_id()?;
        let def = self
            .frames
            .get(&frame_id)
            .ok_or(GatewayError::UnknownFrameId(frame_id))?;
        let values = def.decode_payload(raw.inner())?;
        let mut outcome = RouteOutcome::default();
        for (i, rule) in self.rules.iter().enumerate() {
            if rule.direction != Direction::BusToService || rule.source.frame_id != frame_id {
                continue;
            }
            let signal = rule.source.signal.as_deref().expect("validated service rule");
            let x = values[signal];
            match deliver(mw, i, &rule.target, rule.transformed(x)) {
                Ok(e) => outcome.emissions.push(e),
                Err(error) => outcome.failures.push(RuleFailure { rule: i, error }),
            }
        }
        outcome.dropped = outcome.emissions.is_empty() && outcome.failures.is_empty();
        Ok(outcome)
    }
}

pub fn adaptive_udp_adapter<T: Scalar>(
    adapter: &mut UdpAdapter<T>,
    raw: &RawUdpFrame,
    mw: &mut Middleware,
) -> Result<RouteOutcome, GatewayError> {
    adapter.on_raw_frame(raw, mw)
}
