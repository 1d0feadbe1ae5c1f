//! Deterministic tick scheduler.
//!
//! Each tick runs three phases:
//! 1. stimuli (including cyclic frame transmissions), ordered by node id;
//! 2. deliveries: bus frames, service messages and encapsulated frames due now;
//! 3. node handlers in ascending node-id order. Within a node, bus frames are
//!    handled first, then encapsulated frames, then service messages.
//!
//! Tick 0 additionally starts every node before its stimuli: adaptive apps are
//! launched in dependency order, gateways offer their instances, and then all
//! configured subscriptions are made.

use std::collections::{BTreeMap, VecDeque};

use eesim_core::exec::{ClassicEcu, ExecutionManager, Transition, Version};
use eesim_core::gateway::{Gateway, GatewayError, GatewayMode, GatewayStats, RawUdpFrame, RouteOutcome, UdpAdapter};
use eesim_core::service::{
    CallError, Endpoint, MethodHandler, Middleware, MwEvent, PayloadSchema, ProxyId, SdKind,
    ServiceInstance, Value, TTL_INFINITE,
};
use eesim_core::signal::{BusFrame, FrameDef, VirtualBus};
use eesim_core::{NodeId, Tick};
use serde_json::{json, Map, Value as Json};

use crate::details;
use crate::scenario::{Action, HandlerBehavior, NodeConfig, NodeKind, ScenarioConfig, ScenarioError, Stimulus};
use crate::trace::{TraceEvent, TraceKind, TraceLog};

const DEFAULT_IMAGE: Version = Version::new(1, 0, 0);

enum Role {
    Classic(ClassicEcu),
    Adaptive {
        em: ExecutionManager,
        adapter: Option<UdpAdapter<f64>>,
    },
    Gateway(Box<Gateway<f64>>),
}

struct NodeRuntime {
    cfg: NodeConfig,
    endpoint: Endpoint,
    role: Role,
    /// Last payload written per `(bus, frame_id)`.
    shadow: BTreeMap<(String, u32), Vec<u8>>,
    bus_inbox: Vec<(String, BusFrame)>,
    udp_inbox: Vec<RawUdpFrame>,
    proxy: Option<ProxyId>,
}

/// Result of a complete run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub trace: Vec<TraceEvent>,
    pub faults: usize,
    pub gateway_stats: BTreeMap<NodeId, GatewayStats>,
}

pub struct Simulation {
    config: ScenarioConfig,
    now: Tick,
    mw: Middleware,
    buses: BTreeMap<String, VirtualBus>,
    frames: BTreeMap<(String, u32), FrameDef<f64>>,
    nodes: BTreeMap<NodeId, NodeRuntime>,
    stimuli: VecDeque<Stimulus>,
    udp_in_flight: Vec<(Tick, RawUdpFrame)>,
    trace: TraceLog,
    faults: usize,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn value_json(v: &Value) -> Json {
    match v.as_i128() {
        Some(i) => i64::try_from(i)
            .map(Json::from)
            .unwrap_or_else(|_| Json::from(i as u64)),
        None => serde_json::Number::from_f64(v.as_f64()).map_or(Json::Null, Json::Number),
    }
}

fn values_json(values: &[Value]) -> Json {
    Json::Array(values.iter().map(value_json).collect())
}

/// Converts configured numbers into schema-typed values.
fn typed_values(schema: &PayloadSchema, raw: &[f64]) -> Result<Vec<Value>, String> {
    if schema.len() != raw.len() {
        return Err(format!("expected {} values, got {}", schema.len(), raw.len()));
    }
    schema
        .elements
        .iter()
        .zip(raw)
        .map(|(e, x)| Value::from_scalar(e.primitive, *x).map_err(|err| err.to_string()))
        .collect()
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self, ScenarioError> {
        let errors = config.validate();
        if !errors.is_empty() {
            return Err(ScenarioError::Validation(errors));
        }
        let mut mw = Middleware::new(config.method_timeout);
        for s in &config.services {
            mw.register_interface(s.clone())
                .map_err(|e| ScenarioError::Validation(vec![e.to_string()]))?;
        }
        let mut buses: BTreeMap<String, VirtualBus> = config
            .buses
            .iter()
            .map(|b| (b.name.clone(), VirtualBus::new(b.name.clone())))
            .collect();
        let frames: BTreeMap<(String, u32), FrameDef<f64>> = config
            .frames
            .iter()
            .map(|f| ((f.bus.clone(), f.frame_id), f.def()))
            .collect();

        let mut nodes = BTreeMap::new();
        for n in &config.nodes {
            for b in &n.buses {
                buses.get_mut(b).expect("validated bus").attach(n.id.clone());
            }
            let role = match n.kind {
                NodeKind::Classic => Role::Classic(ClassicEcu::new(
                    n.id.clone(),
                    n.image_version.unwrap_or(DEFAULT_IMAGE),
                    n.functions.iter().cloned(),
                    0,
                )),
                NodeKind::Adaptive => {
                    let mut em = ExecutionManager::new(n.endpoint())
                        .with_restart_dependents(n.restart_dependents);
                    em.load_manifests(n.manifests.clone());
                    let adapter = match &n.udp_adapter {
                        None => None,
                        Some(a) => {
                            let defs = config.frames.iter().filter(|f| {
                                a.rules.iter().any(|r| r.source.bus == f.bus && r.source.frame_id == f.frame_id)
                            });
                            Some(
                                UdpAdapter::new(defs.map(|f| f.def()), a.rules.clone()).map_err(|e| {
                                    ScenarioError::Validation(vec![format!("node `{}` adapter: {e}", n.id)])
                                })?,
                            )
                        }
                    };
                    Role::Adaptive { em, adapter }
                }
                NodeKind::Gateway => {
                    let mapping = n.mapping.clone().expect("validated gateway mapping");
                    let defs = frames
                        .iter()
                        .filter(|((bus, _), _)| n.buses.contains(bus))
                        .map(|((bus, _), d)| (bus.clone(), d.clone()));
                    let gw = Gateway::new(n.id.clone(), mapping, defs).map_err(|e| {
                        ScenarioError::Validation(vec![format!("gateway `{}`: {e}", n.id)])
                    })?;
                    Role::Gateway(Box::new(gw))
                }
            };
            nodes.insert(
                n.id.clone(),
                NodeRuntime {
                    cfg: n.clone(),
                    endpoint: n.endpoint(),
                    role,
                    shadow: BTreeMap::new(),
                    bus_inbox: Vec::new(),
                    udp_inbox: Vec::new(),
                    proxy: None,
                },
            );
        }
        let stimuli = config.expanded_stimuli().into();
        Ok(Self {
            config,
            now: 0,
            mw,
            buses,
            frames,
            nodes,
            stimuli,
            udp_in_flight: Vec::new(),
            trace: TraceLog::default(),
            faults: 0,
        })
    }

    /// Next tick to execute.
    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn duration(&self) -> Tick {
        self.config.duration
    }

    pub fn trace(&self) -> &[TraceEvent] {
        self.trace.events()
    }

    pub fn faults(&self) -> usize {
        self.faults
    }

    pub fn middleware(&self) -> &Middleware {
        &self.mw
    }

    pub fn execution_manager(&self, node: &NodeId) -> Option<&ExecutionManager> {
        match &self.nodes.get(node)?.role {
            Role::Adaptive { em, .. } => Some(em),
            _ => None,
        }
    }

    pub fn classic(&self, node: &NodeId) -> Option<&ClassicEcu> {
        match &self.nodes.get(node)?.role {
            Role::Classic(c) => Some(c),
            _ => None,
        }
    }

    pub fn gateway_stats(&self) -> BTreeMap<NodeId, GatewayStats> {
        self.nodes
            .iter()
            .filter_map(|(id, n)| match &n.role {
                Role::Gateway(gw) => Some((id.clone(), gw.stats())),
                _ => None,
            })
            .collect()
    }

    /// Queues an extra stimulus; it runs at its tick if that tick is still ahead.
    pub fn inject(&mut self, stimulus: Stimulus) {
        let pos = self
            .stimuli
            .partition_point(|s| (s.tick, &s.node) <= (stimulus.tick, &stimulus.node));
        self.stimuli.insert(pos, stimulus);
    }

    pub fn run_to_end(&mut self) {
        while self.now < self.config.duration {
            self.step();
        }
    }

    pub fn into_report(self) -> RunReport {
        let gateway_stats = self.gateway_stats();
        RunReport {
            trace: self.trace.into_events(),
            faults: self.faults,
            gateway_stats,
        }
    }

    fn log(&mut self, node: &NodeId, kind: TraceKind, details: Map<String, Json>) {
        self.trace.push(self.now, node, kind, details);
    }

    fn fault(&mut self, node: &NodeId, context: &str, error: impl ToString) {
        self.faults += 1;
        self.log(
            node,
            TraceKind::Fault,
            details! {"context" => context, "error" => error.to_string()},
        );
    }

    /// Executes one tick.
    pub fn step(&mut self) {
        let t = self.now;
        self.mw.advance_to(t);
        if t == 0 {
            self.startup();
        }

        while self.stimuli.front().is_some_and(|s| s.tick <= t) {
            let s = self.stimuli.pop_front().expect("checked front");
            if s.tick == t {
                self.apply(&s);
            }
        }
        self.cyclic_frames();

        self.deliver();

        let ids: Vec<NodeId> = self.nodes.keys().cloned().collect();
        for id in ids {
            self.handle_node(&id);
        }
        self.now += 1;
    }

    fn startup(&mut self) {
        let ids: Vec<NodeId> = self.nodes.keys().cloned().collect();
        for id in &ids {
            let node = self.nodes.get_mut(id).expect("known node");
            for h in node.cfg.handlers.clone() {
                let handler = match h.behavior {
                    HandlerBehavior::Echo => MethodHandler::Echo,
                    HandlerBehavior::Silent => MethodHandler::Silent,
                    HandlerBehavior::Fail(code) => MethodHandler::Fail(code),
                    HandlerBehavior::Constant(raw) => {
                        let schema = self
                            .mw
                            .interface(h.service_id)
                            .and_then(|i| i.method(h.method_id))
                            .map(|m| m.response.clone())
                            .unwrap_or_default();
                        match typed_values(&schema, &raw) {
                            Ok(v) => MethodHandler::Constant(v),
                            Err(e) => {
                                self.fault(id, "handler", e);
                                continue;
                            }
                        }
                    }
                };
                if let Err(e) = self
                    .mw
                    .set_method_handler(h.service_id, h.instance_id, h.method_id, handler)
                {
                    self.fault(id, "handler", e);
                }
            }
            let node = self.nodes.get_mut(id).expect("known node");
            match &mut node.role {
                Role::Classic(ecu) => {
                    let version = ecu.image_version().to_string();
                    let functions: Vec<String> = ecu.functions().map(str::to_owned).collect();
                    for f in functions {
                        self.log(
                            id,
                            TraceKind::AppState,
                            details! {"function" => f, "to" => "Running", "image_version" => version.clone()},
                        );
                    }
                }
                Role::Adaptive { em, .. } => {
                    let result = em.start_all(&mut self.mw);
                    let transitions = em.drain_transitions();
                    self.log_transitions(id, transitions);
                    if let Err(e) = result {
                        self.fault(id, "start_all", e);
                    }
                }
                Role::Gateway(_) => {
                    for o in node.cfg.offers.clone() {
                        let inst = self.instance(id, o.service_id, o.instance_id);
                        if let Err(e) = self.mw.offer_service(inst, TTL_INFINITE) {
                            self.fault(id, "offer", e);
                        }
                    }
                }
            }
            self.record_mw_events();
        }
        for id in &ids {
            let node = &self.nodes[id];
            let endpoint = node.endpoint.clone();
            let mut wanted: Vec<(u16, u16, u16, u32)> = node
                .cfg
                .subscriptions
                .iter()
                .map(|s| (s.service_id, s.instance_id, s.event_id, s.ttl))
                .collect();
            if let Role::Gateway(gw) = &node.role {
                wanted.extend(gw.reverse_sources().into_iter().map(|(s, i, e)| (s, i, e, TTL_INFINITE)));
            }
            for (sid, iid, eid, ttl) in wanted {
                self.mw.find_service(Some(endpoint.clone()), sid, Some(iid));
                if let Err(e) = self.mw.subscribe_event(endpoint.clone(), sid, iid, eid, ttl) {
                    self.record_mw_events();
                    self.fault(id, "subscribe", e);
                }
            }
            self.record_mw_events();
        }
    }

    fn instance(&self, node: &NodeId, service_id: u16, instance_id: u16) -> ServiceInstance {
        ServiceInstance {
            service_id,
            instance_id,
            interface_version: self
                .mw
                .interface(service_id)
                .map_or(1, |i| i.interface_version),
            endpoint: self.nodes[node].endpoint.clone(),
        }
    }

    fn log_transitions(&mut self, node: &NodeId, transitions: Vec<Transition>) {
        for tr in transitions {
            self.log(
                node,
                TraceKind::AppState,
                details! {"app" => tr.app, "from" => tr.from.to_string(), "to" => tr.to.to_string()},
            );
        }
    }

    fn apply(&mut self, s: &Stimulus) {
        let id = &s.node;
        let result: Result<(), String> = match &s.action {
            Action::WriteSignal {
                frame_id,
                signal,
                value,
                bus,
            } => self.write_signal(id, *frame_id, signal, *value, bus.as_deref()),
            Action::PublishEvent {
                service_id,
                instance_id,
                event_id,
                values,
            } => self
                .mw
                .interface(*service_id)
                .and_then(|i| i.event_schema(*event_id))
                .cloned()
                .ok_or_else(|| "unknown event".to_owned())
                .and_then(|schema| typed_values(&schema, values))
                .and_then(|v| {
                    self.mw
                        .publish_event(*service_id, *instance_id, *event_id, &v)
                        .map(|_| ())
                        .map_err(|e| e.to_string())
                }),
            Action::CallMethod {
                service_id,
                instance_id,
                method_id,
                values,
            } => {
                let proxy = self.proxy(id);
                self.mw
                    .interface(*service_id)
                    .and_then(|i| i.method(*method_id))
                    .map(|m| m.request.clone())
                    .ok_or_else(|| "unknown method".to_owned())
                    .and_then(|schema| typed_values(&schema, values))
                    .and_then(|v| {
                        self.mw
                            .call_method(proxy, *service_id, *instance_id, *method_id, &v)
                            .map(|_| ())
                            .map_err(|e| e.to_string())
                    })
            }
            Action::SetField {
                service_id,
                instance_id,
                field_id,
                values,
            } => self.set_field(id, *service_id, *instance_id, *field_id, values),
            Action::UpdateApp { manifest } => self.with_em(id, |em, mw| {
                em.update_app(&manifest.app_name.clone(), manifest.clone(), mw)
                    .map(|_| ())
                    .map_err(|e| e.to_string())
            }),
            Action::StopApp { app } => self.with_em(id, |em, mw| {
                em.stop_app(app, mw).map(|_| ()).map_err(|e| e.to_string())
            }),
            Action::StartApp { app } => self.with_em(id, |em, mw| {
                em.start_app(app, mw).map(|_| ()).map_err(|e| e.to_string())
            }),
            Action::UpdateImage { version } => self.update_image(id, *version),
        };
        self.record_mw_events();
        if let Err(e) = result {
            let context = serde_json::to_value(&s.action)
                .ok()
                .and_then(|v| v.as_object().and_then(|o| o.keys().next().cloned()))
                .unwrap_or_default();
            self.fault(id, &context, e);
        }
    }

    fn with_em(
        &mut self,
        id: &NodeId,
        f: impl FnOnce(&mut ExecutionManager, &mut Middleware) -> Result<(), String>,
    ) -> Result<(), String> {
        let node = self.nodes.get_mut(id).ok_or("unknown node")?;
        let Role::Adaptive { em, .. } = &mut node.role else {
            return Err(format!("`{id}` is not an adaptive node"));
        };
        let result = f(em, &mut self.mw);
        let transitions = em.drain_transitions();
        self.log_transitions(id, transitions);
        result
    }

    fn update_image(&mut self, id: &NodeId, version: Version) -> Result<(), String> {
        let now = self.now;
        let node = self.nodes.get_mut(id).ok_or("unknown node")?;
        let Role::Classic(ecu) = &mut node.role else {
            return Err(format!("`{id}` is not a classic node"));
        };
        let old = ecu.image_version().to_string();
        ecu.update_image(version, now);
        let functions: Vec<String> = ecu.functions().map(str::to_owned).collect();
        for f in functions {
            self.log(
                id,
                TraceKind::AppState,
                details! {"function" => f, "to" => "Running", "image_version" => version.to_string(), "previous_image" => old.clone()},
            );
        }
        Ok(())
    }

    fn proxy(&mut self, id: &NodeId) -> ProxyId {
        let node = self.nodes.get_mut(id).expect("known node");
        *node
            .proxy
            .get_or_insert_with(|| self.mw.create_proxy(node.endpoint.clone()))
    }

    fn set_field(
        &mut self,
        id: &NodeId,
        service_id: u16,
        instance_id: u16,
        field_id: u16,
        raw: &[f64],
    ) -> Result<(), String> {
        let schema = self
            .mw
            .interface(service_id)
            .and_then(|i| i.field(field_id))
            .map(|f| f.schema.clone())
            .ok_or("unknown field")?;
        let values = typed_values(&schema, raw)?;
        let local = self
            .mw
            .registry()
            .lookup(service_id, instance_id, self.now)
            .is_some_and(|i| &i.endpoint.node == id);
        if local {
            self.mw
                .set_field_local(service_id, instance_id, field_id, &values)
                .map(|_| ())
        } else {
            let proxy = self.proxy(id);
            self.mw
                .field_set(proxy, service_id, instance_id, field_id, &values)
                .map(|_| ())
        }
        .map_err(|e| e.to_string())
    }

    fn write_signal(
        &mut self,
        id: &NodeId,
        frame_id: u32,
        signal: &str,
        value: f64,
        bus: Option<&str>,
    ) -> Result<(), String> {
        let cfg = self.nodes[id].cfg.clone();
        let frame = self.config.frame_for_node(&cfg, frame_id, bus)?.clone();
        let def = &self.frames[&(frame.bus.clone(), frame_id)];
        let sig = def.signal(signal).ok_or_else(|| format!("no signal `{signal}`"))?;
        let key = (frame.bus.clone(), frame_id);
        let node = self.nodes.get_mut(id).expect("known node");
        let payload = node
            .shadow
            .entry(key)
            .or_insert_with(|| vec![0; def.payload_length]);
        sig.pack(payload, value).map_err(|e| e.to_string())?;
        let payload = payload.clone();
        if frame.cycle_time.is_none() {
            self.transmit(id, &frame.bus, frame_id, payload)?;
        }
        Ok(())
    }

    fn transmit(&mut self, id: &NodeId, bus: &str, frame_id: u32, payload: Vec<u8>) -> Result<(), String> {
        let frame = BusFrame {
            frame_id,
            payload,
            sent_at: self.now,
            sender: id.clone(),
        };
        let details = details! {"bus" => bus, "frame_id" => frame_id, "payload" => hex(&frame.payload)};
        let ack = self
            .buses
            .get_mut(bus)
            .ok_or_else(|| format!("unknown bus `{bus}`"))?
            .send(frame)
            .map_err(|e| e.to_string())?;
        let mut details = details;
        details.insert("receivers".into(), json!(ack.receivers));
        self.log(id, TraceKind::BusTx, details);
        Ok(())
    }

    fn cyclic_frames(&mut self) {
        let t = self.now;
        let due: Vec<(NodeId, String, u32, usize)> = self
            .config
            .frames
            .iter()
            .filter_map(|f| {
                let c = f.cycle_time?;
                let sender = f.sender.clone()?;
                t.is_multiple_of(c).then(|| (sender, f.bus.clone(), f.frame_id, f.payload_length))
            })
            .collect();
        let mut due = due;
        due.sort();
        for (node, bus, frame_id, len) in due {
            let payload = self.nodes[&node]
                .shadow
                .get(&(bus.clone(), frame_id))
                .cloned()
                .unwrap_or_else(|| vec![0; len]);
            if let Err(e) = self.transmit(&node, &bus, frame_id, payload) {
                self.fault(&node, "cyclic_frame", e);
            }
        }
    }

    fn deliver(&mut self) {
        let t = self.now;
        let bus_names: Vec<String> = self.buses.keys().cloned().collect();
        for bus in bus_names {
            let deliveries = self.buses.get_mut(&bus).expect("known bus").deliver(t);
            for d in deliveries {
                for r in &d.receivers {
                    self.log(
                        r,
                        TraceKind::BusRx,
                        details! {
                            "bus" => bus.clone(),
                            "frame_id" => d.frame.frame_id,
                            "sender" => d.frame.sender.to_string(),
                            "sent_at" => d.frame.sent_at,
                            "payload" => hex(&d.frame.payload),
                        },
                    );
                    if let Some(node) = self.nodes.get_mut(r) {
                        node.bus_inbox.push((bus.clone(), d.frame.clone()));
                    }
                }
            }
        }
        self.mw.deliver_due();
        let (due, later): (Vec<_>, Vec<_>) = std::mem::take(&mut self.udp_in_flight)
            .into_iter()
            .partition(|(at, _)| *at <= t);
        self.udp_in_flight = later;
        for (_, raw) in due {
            let dest = raw.destination.node.clone();
            match self.nodes.get_mut(&dest) {
                Some(node) => node.udp_inbox.push(raw),
                None => self.fault(&dest, "udp_delivery", "unknown destination node"),
            }
        }
    }

    fn handle_node(&mut self, id: &NodeId) {
        let t = self.now;
        let node = self.nodes.get_mut(id).expect("known node");
        let bus_inbox = std::mem::take(&mut node.bus_inbox);
        let udp_inbox = std::mem::take(&mut node.udp_inbox);

        for (bus, frame) in bus_inbox {
            let Some(mode) = self.gateway_mut(id).map(|gw| gw.mode()) else {
                continue;
            };
            match mode {
                GatewayMode::ServiceGateway => {
                    let Role::Gateway(gw) = &mut self.nodes.get_mut(id).expect("known node").role else {
                        unreachable!()
                    };
                    let result = gw.on_bus_frame_service_mode(&bus, &frame, &mut self.mw);
                    self.log_route(id, &bus, frame.frame_id, result, "service");
                }
                GatewayMode::SignalGateway => match self
                    .gateway_mut(id)
                    .expect("gateway node")
                    .on_bus_frame_signal_mode(&bus, &frame)
                {
                    Ok(raws) => {
                        for raw in raws {
                            self.log(
                                id,
                                TraceKind::GwRoute,
                                details! {
                                    "mode" => "signal",
                                    "bus" => bus.clone(),
                                    "frame_id" => frame.frame_id,
                                    "destination" => raw.destination.to_string(),
                                    "payload" => hex(&raw.payload),
                                },
                            );
                            self.udp_in_flight.push((t + 1, raw));
                        }
                    }
                    Err(GatewayError::NoRoute { .. }) => self.log(
                        id,
                        TraceKind::GwDrop,
                        details! {"mode" => "signal", "bus" => bus.clone(), "frame_id" => frame.frame_id},
                    ),
                    Err(e) => self.fault(id, "gateway", e),
                },
            }
            self.record_mw_events();
        }

        for raw in udp_inbox {
            let node = self.nodes.get_mut(id).expect("known node");
            let result = match &mut node.role {
                Role::Adaptive {
                    adapter: Some(adapter),
                    ..
                } => adapter.on_raw_frame(&raw, &mut self.mw),
                _ => Err(GatewayError::InvalidMapping(format!("`{id}` has no udp adapter"))),
            };
            let frame_id = raw.frame_id().unwrap_or_default();
            self.log_route(id, "udp", frame_id, result, "adapter");
            self.record_mw_events();
        }

        self.mw.process_node(id);
        self.record_mw_events();

        let endpoint = self.nodes[id].endpoint.clone();
        let notes = self.mw.take_notifications(&endpoint);
        if let Role::Gateway(gw) = &mut self.nodes.get_mut(id).expect("known node").role {
            let mut out = Vec::new();
            let mut errors = Vec::new();
            for note in &notes {
                match gw.on_notification(note, t) {
                    Ok(frames) => out.extend(frames),
                    Err(e) => errors.push(e),
                }
            }
            for e in errors {
                self.fault(id, "gateway_reverse", e);
            }
            for (bus, frame) in out {
                if let Err(e) = self.transmit(id, &bus, frame.frame_id, frame.payload) {
                    self.fault(id, "gateway_reverse", e);
                }
            }
        }
    }

    fn gateway_mut(&mut self, id: &NodeId) -> Option<&mut Gateway<f64>> {
        match &mut self.nodes.get_mut(id)?.role {
            Role::Gateway(gw) => Some(gw),
            _ => None,
        }
    }

    fn log_route(
        &mut self,
        id: &NodeId,
        bus: &str,
        frame_id: u32,
        result: Result<RouteOutcome, GatewayError>,
        mode: &str,
    ) {
        match result {
            Ok(out) if out.dropped => self.log(
                id,
                TraceKind::GwDrop,
                details! {"mode" => mode, "bus" => bus, "frame_id" => frame_id},
            ),
            Ok(out) => {
                let targets: Vec<Json> = out
                    .emissions
                    .iter()
                    .map(|e| {
                        json!({
                            "service_id": e.service_id,
                            "instance_id": e.instance_id,
                            "member_id": e.member_id,
                            "values": values_json(&e.values),
                        })
                    })
                    .collect();
                self.log(
                    id,
                    TraceKind::GwRoute,
                    details! {"mode" => mode, "bus" => bus, "frame_id" => frame_id, "targets" => targets},
                );
                for f in out.failures {
                    self.fault(id, &format!("gateway rule {}", f.rule), f.error);
                }
            }
            Err(e) => self.fault(id, "gateway", e),
        }
    }

    fn record_mw_events(&mut self) {
        for ev in self.mw.drain_events() {
            let (node, kind, details) = match ev {
                MwEvent::Sd(sd) => {
                    let kind = match sd.kind {
                        SdKind::Offer => TraceKind::SdOffer,
                        SdKind::Find => TraceKind::SdFind,
                        SdKind::Subscribe | SdKind::SubscribeAck => TraceKind::SdSubscribe,
                    };
                    let mut d = details! {
                        "service_id" => sd.service_id,
                        "instance_id" => sd.instance_id,
                        "ttl" => sd.ttl,
                        "endpoint" => sd.origin.to_string(),
                    };
                    if let Some(e) = sd.event_id {
                        d.insert("event_id".into(), json!(e));
                    }
                    match sd.kind {
                        SdKind::Subscribe => {
                            d.insert("ack".into(), json!(false));
                        }
                        SdKind::SubscribeAck => {
                            d.insert("ack".into(), json!(true));
                        }
                        _ => {}
                    }
                    (sd.origin.node, kind, d)
                }
                MwEvent::Published {
                    publisher,
                    service_id,
                    instance_id,
                    event_id,
                    values,
                    subscribers,
                    ..
                } => (
                    publisher.node,
                    TraceKind::EvtPub,
                    details! {
                        "service_id" => service_id,
                        "instance_id" => instance_id,
                        "event_id" => event_id,
                        "values" => values_json(&values),
                        "subscribers" => subscribers,
                    },
                ),
                MwEvent::NotificationReceived {
                    subscriber,
                    service_id,
                    instance_id,
                    event_id,
                    values,
                    ..
                } => (
                    subscriber.node.clone(),
                    TraceKind::EvtRecv,
                    details! {
                        "service_id" => service_id,
                        "instance_id" => instance_id,
                        "event_id" => event_id,
                        "values" => values_json(&values),
                        "endpoint" => subscriber.to_string(),
                    },
                ),
                MwEvent::RequestSent {
                    caller,
                    call,
                    service_id,
                    instance_id,
                    method_id,
                    client_id,
                    session_id,
                    values,
                    ..
                } => (
                    caller.node,
                    TraceKind::MethodReq,
                    details! {
                        "call" => call.0,
                        "service_id" => service_id,
                        "instance_id" => instance_id,
                        "method_id" => method_id,
                        "client_id" => client_id,
                        "session_id" => session_id,
                        "values" => values_json(&values),
                    },
                ),
                MwEvent::RequestServed {
                    server,
                    service_id,
                    instance_id,
                    method_id,
                    client_id,
                    session_id,
                    return_code,
                    ..
                } => (
                    server.node,
                    TraceKind::MethodResp,
                    details! {
                        "role" => "server",
                        "service_id" => service_id,
                        "instance_id" => instance_id,
                        "method_id" => method_id,
                        "client_id" => client_id,
                        "session_id" => session_id,
                        "return_code" => return_code,
                    },
                ),
                MwEvent::CallCompleted {
                    caller,
                    call,
                    service_id,
                    method_id,
                    client_id,
                    session_id,
                    outcome,
                    ..
                } => {
                    let mut d = details! {
                        "role" => "client",
                        "call" => call.0,
                        "service_id" => service_id,
                        "method_id" => method_id,
                        "client_id" => client_id,
                        "session_id" => session_id,
                    };
                    match outcome {
                        Ok(values) => {
                            d.insert("outcome".into(), json!("ok"));
                            d.insert("values".into(), values_json(&values));
                        }
                        Err(CallError::Timeout(after)) => {
                            d.insert("outcome".into(), json!("timeout"));
                            d.insert("after".into(), json!(after));
                        }
                        Err(CallError::RemoteError(code)) => {
                            d.insert("outcome".into(), json!("error"));
                            d.insert("return_code".into(), json!(code));
                        }
                        Err(CallError::Malformed(m)) => {
                            d.insert("outcome".into(), json!("malformed"));
                            d.insert("error".into(), json!(m));
                        }
                    }
                    (caller.node, TraceKind::MethodResp, d)
                }
                MwEvent::FieldSet {
                    server,
                    service_id,
                    instance_id,
                    field_id,
                    values,
                    ..
                } => (
                    server.node,
                    TraceKind::FieldSet,
                    details! {
                        "service_id" => service_id,
                        "instance_id" => instance_id,
                        "field_id" => field_id,
                        "values" => values_json(&values),
                    },
                ),
                MwEvent::RequestDropped {
                    server,
                    service_id,
                    instance_id,
                    method_id,
                    reason,
                    ..
                } => {
                    self.faults += 1;
                    (
                        server.node,
                        TraceKind::Fault,
                        details! {
                            "context" => "request_dropped",
                            "service_id" => service_id,
                            "instance_id" => instance_id,
                            "method_id" => method_id,
                            "error" => reason,
                        },
                    )
                }
                MwEvent::UnmatchedResponse {
                    endpoint,
                    client_id,
                    session_id,
                    ..
                } => {
                    self.faults += 1;
                    (
                        endpoint.node,
                        TraceKind::Fault,
                        details! {
                            "context" => "unmatched_response",
                            "client_id" => client_id,
                            "session_id" => session_id,
                            "error" => "response matches no outstanding request",
                        },
                    )
                }
                MwEvent::Malformed { endpoint, error, .. } => {
                    self.faults += 1;
                    (
                        endpoint.node,
                        TraceKind::Fault,
                        details! {"context" => "malformed", "error" => error},
                    )
                }
            };
            self.log(&node, kind, details);
        }
    }
}

/// Validates and runs a scenario to completion.
pub fn run(config: ScenarioConfig) -> Result<RunReport, ScenarioError> {
    let mut sim = Simulation::new(config)?;
    sim.run_to_end();
    Ok(sim.into_report())
}
