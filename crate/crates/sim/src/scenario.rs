//! Scenario documents: topology, stimuli and run parameters.

use std::collections::{BTreeMap, BTreeSet};

use eesim_core::exec::{AppManifest, ExecutionManager, Version};
use eesim_core::gateway::{GatewayMapping, GatewayMode, MappingRule, RuleTarget};
use eesim_core::service::{Endpoint, Member, ServiceInterfaceDef, DEFAULT_METHOD_TIMEOUT, TTL_INFINITE};
use eesim_core::signal::{FrameDef, SignalDef};
use eesim_core::{NodeId, Tick};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_PORT: u16 = 30490;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("scenario has {} validation error(s):\n  {}", .0.len(), .0.join("\n  "))]
    Validation(Vec<String>),
}

impl ScenarioError {
    /// Individual messages; a parse failure yields one.
    pub fn messages(&self) -> Vec<String> {
        match self {
            ScenarioError::Parse(m) => vec![m.clone()],
            ScenarioError::Validation(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusConfig {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    pub bus: String,
    pub frame_id: u32,
    pub payload_length: usize,
    pub signals: Vec<SignalDef<f64>>,
    /// Period in ticks for cyclic transmission by `sender`; absent means event-driven.
    #[serde(default)]
    pub cycle_time: Option<u64>,
    #[serde(default)]
    pub sender: Option<NodeId>,
}

impl FrameConfig {
    pub fn def(&self) -> FrameDef<f64> {
        FrameDef {
            frame_id: self.frame_id,
            payload_length: self.payload_length,
            signals: self.signals.clone(),
            cycle_time: self.cycle_time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Classic,
    Adaptive,
    Gateway,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubscriptionConfig {
    pub service_id: u16,
    pub instance_id: u16,
    pub event_id: u16,
    #[serde(default = "ttl_infinite")]
    pub ttl: u32,
}

fn ttl_infinite() -> u32 {
    TTL_INFINITE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandlerBehavior {
    Echo,
    Silent,
    Constant(Vec<f64>),
    Fail(u8),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandlerConfig {
    pub service_id: u16,
    pub instance_id: u16,
    pub method_id: u16,
    pub behavior: HandlerBehavior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfferConfig {
    pub service_id: u16,
    pub instance_id: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterConfig {
    pub rules: Vec<MappingRule<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: NodeId,
    pub kind: NodeKind,
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default)]
    pub buses: Vec<String>,
    /// Classic nodes: hosted functions and the flashed image version.
    #[serde(default)]
    pub functions: Vec<String>,
    #[serde(default)]
    pub image_version: Option<Version>,
    /// Adaptive nodes.
    #[serde(default)]
    pub manifests: Vec<AppManifest>,
    #[serde(default)]
    pub restart_dependents: bool,
    #[serde(default)]
    pub udp_adapter: Option<AdapterConfig>,
    /// Adaptive and gateway nodes.
    #[serde(default)]
    pub subscriptions: Vec<SubscriptionConfig>,
    #[serde(default)]
    pub handlers: Vec<HandlerConfig>,
    /// Gateway nodes: instances offered directly by the gateway.
    #[serde(default)]
    pub offers: Vec<OfferConfig>,
    #[serde(default)]
    pub mapping: Option<GatewayMapping<f64>>,
}

fn default_port() -> u16 {
    DEFAULT_PORT
}

impl NodeConfig {
    pub fn endpoint(&self) -> Endpoint {
        Endpoint::new(self.id.clone(), self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    WriteSignal {
        frame_id: u32,
        signal: String,
        value: f64,
        /// Needed only when the node sits on several buses carrying this id.
        #[serde(default)]
        bus: Option<String>,
    },
    PublishEvent {
        service_id: u16,
        instance_id: u16,
        event_id: u16,
        values: Vec<f64>,
    },
    CallMethod {
        service_id: u16,
        instance_id: u16,
        method_id: u16,
        #[serde(default)]
        values: Vec<f64>,
    },
    SetField {
        service_id: u16,
        instance_id: u16,
        field_id: u16,
        values: Vec<f64>,
    },
    UpdateApp {
        manifest: AppManifest,
    },
    StopApp {
        app: String,
    },
    StartApp {
        app: String,
    },
    UpdateImage {
        version: Version,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stimulus {
    pub tick: Tick,
    pub node: NodeId,
    pub action: Action,
}

/// Seeded source of `write_signal` stimuli.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub node: NodeId,
    pub frame_id: u32,
    pub signal: String,
    #[serde(default)]
    pub bus: Option<String>,
    pub count: usize,
    pub start_tick: Tick,
    /// Gap between consecutive stimuli is drawn from `1..=max_gap`.
    pub max_gap: Tick,
    /// Inclusive integer range of generated values.
    pub min: i64,
    pub max: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub duration: Tick,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_timeout")]
    pub method_timeout: Tick,
    #[serde(default)]
    pub buses: Vec<BusConfig>,
    #[serde(default)]
    pub frames: Vec<FrameConfig>,
    #[serde(default)]
    pub services: Vec<ServiceInterfaceDef>,
    pub nodes: Vec<NodeConfig>,
    #[serde(default)]
    pub stimuli: Vec<Stimulus>,
    #[serde(default)]
    pub generators: Vec<Generator>,
}

fn default_timeout() -> Tick {
    DEFAULT_METHOD_TIMEOUT
}

pub fn load_scenario(document: &str) -> Result<ScenarioConfig, ScenarioError> {
    let config: ScenarioConfig =
        serde_json::from_str(document).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let errors = config.validate();
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(ScenarioError::Validation(errors))
    }
}

impl ScenarioConfig {
    pub fn node(&self, id: &NodeId) -> Option<&NodeConfig> {
        self.nodes.iter().find(|n| &n.id == id)
    }

    pub fn service(&self, service_id: u16) -> Option<&ServiceInterfaceDef> {
        self.services.iter().find(|s| s.service_id == service_id)
    }

    pub fn frame(&self, bus: &str, frame_id: u32) -> Option<&FrameConfig> {
        self.frames
            .iter()
            .find(|f| f.bus == bus && f.frame_id == frame_id)
    }

    /// Frame `frame_id` on a bus `node` is attached to.
    pub fn frame_for_node(
        &self,
        node: &NodeConfig,
        frame_id: u32,
        bus: Option<&str>,
    ) -> Result<&FrameConfig, String> {
        let candidates: Vec<&FrameConfig> = self
            .frames
            .iter()
            .filter(|f| f.frame_id == frame_id && node.buses.contains(&f.bus))
            .filter(|f| bus.is_none_or(|b| f.bus == b))
            .collect();
        match candidates.as_slice() {
            [one] => Ok(one),
            [] => Err(format!(
                "node `{}` is attached to no bus carrying frame 0x{frame_id:X}",
                node.id
            )),
            _ => Err(format!(
                "frame 0x{frame_id:X} is on several buses of node `{}`; name the bus",
                node.id
            )),
        }
    }

    /// Explicit stimuli plus generated ones, in application order: by tick,
    /// then node id, then position (explicit before generated).
    pub fn expanded_stimuli(&self) -> Vec<Stimulus> {
        let mut all: Vec<Stimulus> = self.stimuli.clone();
        for (i, g) in self.generators.iter().enumerate() {
            all.extend(g.generate(self.seed, i as u64));
        }
        all.sort_by(|a, b| (a.tick, &a.node).cmp(&(b.tick, &b.node)));
        all
    }

    /// Every problem in the document, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.duration < 1 {
            errs.push("duration must be at least 1 tick".to_owned());
        }
        if self.method_timeout < 1 {
            errs.push("method_timeout must be at least 1 tick".to_owned());
        }
        duplicates(self.buses.iter().map(|b| b.name.clone()), "bus", &mut errs);
        duplicates(self.nodes.iter().map(|n| n.id.to_string()), "node", &mut errs);
        duplicates(
            self.services.iter().map(|s| format!("0x{:04X}", s.service_id)),
            "service",
            &mut errs,
        );
        duplicates(
            self.frames.iter().map(|f| format!("0x{:X} on `{}`", f.frame_id, f.bus)),
            "frame",
            &mut errs,
        );
        let bus_names: BTreeSet<&str> = self.buses.iter().map(|b| b.name.as_str()).collect();

        for s in &self.services {
            if let Err(e) = s.validate() {
                errs.push(e.to_string());
            }
        }
        for f in &self.frames {
            let what = format!("frame 0x{:X}", f.frame_id);
            if !bus_names.contains(f.bus.as_str()) {
                errs.push(format!("{what}: unknown bus `{}`", f.bus));
            }
            if let Err(e) = f.def().validate() {
                errs.push(format!("{what}: {e}"));
            }
            if let Some(sender) = &f.sender {
                match self.node(sender) {
                    None => errs.push(format!("{what}: unknown sender node `{sender}`")),
                    Some(n) if !n.buses.contains(&f.bus) => errs.push(format!(
                        "{what}: sender `{sender}` is not attached to bus `{}`",
                        f.bus
                    )),
                    _ => {}
                }
            }
            if f.cycle_time.is_some() && f.sender.is_none() {
                errs.push(format!("{what}: cyclic frames need a sender"));
            }
        }

        let mut offered: BTreeMap<(u16, u16), NodeId> = BTreeMap::new();
        for n in &self.nodes {
            self.validate_node(n, &bus_names, &mut offered, &mut errs);
        }
        for n in &self.nodes {
            self.validate_consumers(n, &offered, &mut errs);
        }
        for (i, s) in self.stimuli.iter().enumerate() {
            self.validate_stimulus(i, s, &mut errs);
        }
        for (i, g) in self.generators.iter().enumerate() {
            self.validate_generator(i, g, &mut errs);
        }
        errs
    }

    fn validate_node(
        &self,
        n: &NodeConfig,
        bus_names: &BTreeSet<&str>,
        offered: &mut BTreeMap<(u16, u16), NodeId>,
        errs: &mut Vec<String>,
    ) {
        let id = &n.id;
        for b in &n.buses {
            if !bus_names.contains(b.as_str()) {
                errs.push(format!("node `{id}`: unknown bus `{b}`"));
            }
        }
        let mut claim = |service_id: u16, instance_id: u16, errs: &mut Vec<String>| {
            if self.service(service_id).is_none() {
                errs.push(format!("node `{id}`: unknown service 0x{service_id:04X}"));
            }
            if let Some(other) = offered.insert((service_id, instance_id), id.clone()) {
                errs.push(format!(
                    "instance 0x{service_id:04X}.{instance_id} offered by both `{other}` and `{id}`"
                ));
            }
        };
        let misplaced = |field: &str, ok: bool, errs: &mut Vec<String>| {
            if !ok {
                errs.push(format!("node `{id}`: `{field}` is not valid for a {:?} node", n.kind));
            }
        };
        misplaced("manifests", n.manifests.is_empty() || n.kind == NodeKind::Adaptive, errs);
        misplaced("udp_adapter", n.udp_adapter.is_none() || n.kind == NodeKind::Adaptive, errs);
        misplaced("functions", n.functions.is_empty() || n.kind == NodeKind::Classic, errs);
        misplaced("mapping", n.mapping.is_none() || n.kind == NodeKind::Gateway, errs);
        misplaced("offers", n.offers.is_empty() || n.kind == NodeKind::Gateway, errs);
        misplaced("buses", n.buses.is_empty() || n.kind != NodeKind::Adaptive, errs);
        misplaced(
            "subscriptions",
            n.subscriptions.is_empty() || n.kind != NodeKind::Classic,
            errs,
        );

        match n.kind {
            NodeKind::Classic => {}
            NodeKind::Adaptive => {
                let mut em = ExecutionManager::new(n.endpoint());
                let report = em.load_manifests(n.manifests.clone());
                for c in report.cycles {
                    errs.push(format!("node `{id}`: startup dependency cycle {c:?}"));
                }
                for d in report.duplicates {
                    errs.push(format!("node `{id}`: duplicate app `{d}`"));
                }
                for (app, dep) in report.missing_dependencies {
                    errs.push(format!("node `{id}`: app `{app}` depends on unknown app `{dep}`"));
                }
                for m in &n.manifests {
                    for p in &m.provides {
                        claim(p.service_id, p.instance_id, errs);
                    }
                    for r in &m.requires {
                        if self.service(*r).is_none() {
                            errs.push(format!(
                                "node `{id}`: app `{}` requires unknown service 0x{r:04X}",
                                m.app_name
                            ));
                        }
                    }
                }
            }
            NodeKind::Gateway => {
                for o in &n.offers {
                    claim(o.service_id, o.instance_id, errs);
                }
                match &n.mapping {
                    None => errs.push(format!("gateway `{id}` has no mapping")),
                    Some(m) => {
                        if let Err(e) = m.validate() {
                            errs.push(format!("gateway `{id}`: {e}"));
                        }
                        for (i, rule) in m.rules.iter().enumerate() {
                            self.validate_rule(&format!("gateway `{id}` rule {i}"), rule, Some(n), errs);
                        }
                    }
                }
            }
        }
        for h in &n.handlers {
            let what = format!("node `{id}` handler");
            match self.service(h.service_id) {
                None => errs.push(format!("{what}: unknown service 0x{:04X}", h.service_id)),
                Some(s) if s.method(h.method_id).is_none() => errs.push(format!(
                    "{what}: service 0x{:04X} has no method 0x{:04X}",
                    h.service_id, h.method_id
                )),
                _ => {}
            }
        }
    }

    /// Subscriptions, handlers and adapters refer to instances offered somewhere.
    fn validate_consumers(
        &self,
        n: &NodeConfig,
        offered: &BTreeMap<(u16, u16), NodeId>,
        errs: &mut Vec<String>,
    ) {
        let id = &n.id;
        for s in &n.subscriptions {
            let what = format!("node `{id}` subscription");
            match self.service(s.service_id) {
                None => errs.push(format!("{what}: unknown service 0x{:04X}", s.service_id)),
                Some(iface) if iface.event_schema(s.event_id).is_none() => errs.push(format!(
                    "{what}: service 0x{:04X} has no event 0x{:04X}",
                    s.service_id, s.event_id
                )),
                _ => {}
            }
            if !offered.contains_key(&(s.service_id, s.instance_id)) {
                errs.push(format!(
                    "{what}: instance 0x{:04X}.{} is offered by no node",
                    s.service_id, s.instance_id
                ));
            }
        }
        for h in &n.handlers {
            if offered.get(&(h.service_id, h.instance_id)) != Some(id) {
                errs.push(format!(
                    "node `{id}` handler: instance 0x{:04X}.{} is not offered by this node",
                    h.service_id, h.instance_id
                ));
            }
        }
        if let Some(adapter) = &n.udp_adapter {
            for (i, rule) in adapter.rules.iter().enumerate() {
                let what = format!("node `{id}` adapter rule {i}");
                self.validate_rule(&what, rule, None, errs);
                if let RuleTarget::Service { service_id, instance_id, .. } = rule.target {
                    if offered.get(&(service_id, instance_id)) != Some(id) {
                        errs.push(format!(
                            "{what}: instance 0x{service_id:04X}.{instance_id} is not offered by this node"
                        ));
                    }
                }
            }
            if let Err(e) = GatewayMapping::new(GatewayMode::ServiceGateway, adapter.rules.clone()) {
                errs.push(format!("node `{id}` adapter: {e}"));
            }
        }
        if let Some(mapping) = &n.mapping {
            for rule in &mapping.rules {
                if let RuleTarget::Service { service_id, instance_id, .. } = rule.target {
                    if !offered.contains_key(&(service_id, instance_id)) {
                        errs.push(format!(
                            "gateway `{id}`: instance 0x{service_id:04X}.{instance_id} is offered by no node"
                        ));
                    }
                }
            }
        }
    }

    fn validate_rule(
        &self,
        what: &str,
        rule: &MappingRule<f64>,
        gateway: Option<&NodeConfig>,
        errs: &mut Vec<String>,
    ) {
        let src = &rule.source;
        match self.frame(&src.bus, src.frame_id) {
            None => errs.push(format!("{what}: no frame 0x{:X} on bus `{}`", src.frame_id, src.bus)),
            Some(f) => {
                if let Some(sig) = &src.signal {
                    if !f.signals.iter().any(|s| &s.name == sig) {
                        errs.push(format!("{what}: frame 0x{:X} has no signal `{sig}`", src.frame_id));
                    }
                }
            }
        }
        if let Some(gw) = gateway {
            if !gw.buses.contains(&src.bus) {
                errs.push(format!("{what}: gateway is not attached to bus `{}`", src.bus));
            }
        }
        match &rule.target {
            RuleTarget::Service {
                service_id,
                member_id,
                ..
            } => match self.service(*service_id) {
                None => errs.push(format!("{what}: unknown service 0x{service_id:04X}")),
                Some(iface) => {
                    let ok = matches!(
                        iface.member(*member_id),
                        Some(Member::Event(_) | Member::FieldNotifier(_))
                    ) || iface.field(*member_id).is_some();
                    if !ok {
                        errs.push(format!(
                            "{what}: service 0x{service_id:04X} has no event or field 0x{member_id:04X}"
                        ));
                    }
                }
            },
            RuleTarget::Udp { endpoint } => match self.node(&endpoint.node) {
                None => errs.push(format!("{what}: unknown destination node `{}`", endpoint.node)),
                Some(n) if n.udp_adapter.is_none() => errs.push(format!(
                    "{what}: destination `{}` has no udp_adapter",
                    endpoint.node
                )),
                _ => {}
            },
        }
    }

    fn validate_stimulus(&self, i: usize, s: &Stimulus, errs: &mut Vec<String>) {
        let what = format!("stimulus {i} (tick {}, node `{}`)", s.tick, s.node);
        if s.tick >= self.duration {
            errs.push(format!("{what}: tick is outside the {}-tick run", self.duration));
        }
        let Some(node) = self.node(&s.node) else {
            errs.push(format!("{what}: unknown node `{}`", s.node));
            return;
        };
        let kind_is = |ok: bool, errs: &mut Vec<String>| {
            if !ok {
                errs.push(format!("{what}: action not supported on a {:?} node", node.kind));
            }
        };
        match &s.action {
            Action::WriteSignal {
                frame_id,
                signal,
                bus,
                ..
            } => {
                kind_is(node.kind != NodeKind::Adaptive, errs);
                match self.frame_for_node(node, *frame_id, bus.as_deref()) {
                    Err(e) => errs.push(format!("{what}: {e}")),
                    Ok(f) if !f.signals.iter().any(|x| &x.name == signal) => errs.push(format!(
                        "{what}: frame 0x{frame_id:X} has no signal `{signal}`"
                    )),
                    _ => {}
                }
            }
            Action::PublishEvent {
                service_id,
                event_id,
                ..
            } => {
                kind_is(node.kind != NodeKind::Classic, errs);
                match self.service(*service_id) {
                    None => errs.push(format!("{what}: unknown service 0x{service_id:04X}")),
                    Some(iface) if iface.event_schema(*event_id).is_none() => errs.push(format!(
                        "{what}: service 0x{service_id:04X} has no event 0x{event_id:04X}"
                    )),
                    _ => {}
                }
            }
            Action::CallMethod {
                service_id,
                method_id,
                ..
            } => {
                kind_is(node.kind != NodeKind::Classic, errs);
                match self.service(*service_id) {
                    None => errs.push(format!("{what}: unknown service 0x{service_id:04X}")),
                    Some(iface) if iface.method(*method_id).is_none() => errs.push(format!(
                        "{what}: service 0x{service_id:04X} has no method 0x{method_id:04X}"
                    )),
                    _ => {}
                }
            }
            Action::SetField {
                service_id,
                field_id,
                ..
            } => {
                kind_is(node.kind != NodeKind::Classic, errs);
                match self.service(*service_id) {
                    None => errs.push(format!("{what}: unknown service 0x{service_id:04X}")),
                    Some(iface) if iface.field(*field_id).is_none() => errs.push(format!(
                        "{what}: service 0x{service_id:04X} has no field 0x{field_id:04X}"
                    )),
                    _ => {}
                }
            }
            Action::UpdateApp { .. } => kind_is(node.kind == NodeKind::Adaptive, errs),
            Action::StopApp { app } | Action::StartApp { app } => {
                kind_is(node.kind == NodeKind::Adaptive, errs);
                if !node.manifests.iter().any(|m| &m.app_name == app) {
                    errs.push(format!("{what}: node has no app `{app}`"));
                }
            }
            Action::UpdateImage { .. } => kind_is(node.kind == NodeKind::Classic, errs),
        }
    }

    fn validate_generator(&self, i: usize, g: &Generator, errs: &mut Vec<String>) {
        let what = format!("generator {i}");
        if g.max_gap < 1 {
            errs.push(format!("{what}: max_gap must be at least 1"));
        }
        if g.min > g.max {
            errs.push(format!("{what}: min {} exceeds max {}", g.min, g.max));
        }
        let Some(node) = self.node(&g.node) else {
            errs.push(format!("{what}: unknown node `{}`", g.node));
            return;
        };
        match self.frame_for_node(node, g.frame_id, g.bus.as_deref()) {
            Err(e) => errs.push(format!("{what}: {e}")),
            Ok(f) if !f.signals.iter().any(|x| x.name == g.signal) => errs.push(format!(
                "{what}: frame 0x{:X} has no signal `{}`",
                g.frame_id, g.signal
            )),
            _ => {}
        }
    }
}

fn duplicates(names: impl Iterator<Item = String>, what: &str, errs: &mut Vec<String>) {
    let mut seen = BTreeSet::new();
    for n in names {
        if !seen.insert(n.clone()) {
            errs.push(format!("duplicate {what} {n}"));
        }
    }
}

impl Generator {
    /// Stimuli drawn from a stream keyed by the scenario seed and the generator index.
    pub fn generate(&self, seed: u64, index: u64) -> Vec<Stimulus> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let mut tick = self.start_tick;
        (0..self.count)
            .map(|k| {
                if k > 0 {
                    tick += rng.gen_range(1..=self.max_gap.max(1));
                }
                let value = rng.gen_range(self.min..=self.max.max(self.min));
                Stimulus {
                    tick,
                    node: self.node.clone(),
                    action: Action::WriteSignal {
                        frame_id: self.frame_id,
                        signal: self.signal.clone(),
                        value: value as f64,
                        bus: self.bus.clone(),
                    },
                }
            })
            .collect()
    }
}
