//! Application lifecycle management for service-oriented nodes, plus the
//! whole-image update model of signal-oriented nodes for contrast.
//!
//! Applications move through `Idle -> Starting -> Running -> Terminating ->
//! Terminated`, and may restart from `Terminated`. Running applications offer
//! the services listed in their manifest; stopping withdraws them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::service::{Endpoint, Middleware, ServiceError, ServiceInstance, TTL_INFINITE};
use crate::{NodeId, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Version {
    pub major: u32,
    pub minor: u32,
    pub patch: u32,
}

impl Version {
    pub const fn new(major: u32, minor: u32, patch: u32) -> Self {
        Self {
            major,
            minor,
            patch,
        }
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.major, self.minor, self.patch)
    }
}

impl FromStr for Version {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.trim_start_matches('v').split('.').collect();
        let [major, minor, patch] = parts.as_slice() else {
            return Err(format!("version `{s}` is not major.minor.patch"));
        };
        let num = |p: &str| p.parse::<u32>().map_err(|e| format!("version `{s}`: {e}"));
        Ok(Self::new(num(major)?, num(minor)?, num(patch)?))
    }
}

impl TryFrom<String> for Version {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Version> for String {
    fn from(v: Version) -> String {
        v.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProvidedService {
    pub service_id: u16,
    pub instance_id: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppManifest {
    pub app_name: String,
    pub version: Version,
    #[serde(default)]
    pub provides: Vec<ProvidedService>,
    #[serde(default)]
    pub requires: Vec<u16>,
    #[serde(default)]
    pub startup_dependencies: Vec<String>,
}

impl AppManifest {
    pub fn new(app_name: impl Into<String>, version: Version) -> Self {
        Self {
            app_name: app_name.into(),
            version,
            provides: Vec::new(),
            requires: Vec::new(),
            startup_dependencies: Vec::new(),
        }
    }

    pub fn depends_on(mut self, app: &str) -> Self {
        self.startup_dependencies.push(app.to_owned());
        self
    }

    pub fn providing(mut self, service_id: u16, instance_id: u16) -> Self {
        self.provides.push(ProvidedService {
            service_id,
            instance_id,
        });
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AppState {
    Idle,
    Starting,
    Running,
    Terminating,
    Terminated,
}

impl AppState {
    pub fn can_transition(self, to: AppState) -> bool {
        use AppState::*;
        matches!(
            (self, to),
            (Idle, Starting)
                | (Starting, Running)
                | (Running, Terminating)
                | (Terminating, Terminated)
                | (Terminated, Starting)
        )
    }
}

impl fmt::Display for AppState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("unknown application `{0}`")]
    UnknownApp(String),
    #[error("`{app}` cannot go from {from} to {to}")]
    IllegalTransition {
        app: String,
        from: AppState,
        to: AppState,
    },
    #[error("startup dependency cycle among {0:?}")]
    DependencyCycle(Vec<String>),
    #[error("`{app}` depends on unknown application `{dependency}`")]
    MissingDependency { app: String, dependency: String },
    #[error("manifest names `{manifest}` but `{requested}` was requested")]
    NameMismatch { requested: String, manifest: String },
    #[error("`{app}` cannot offer its services: {source}")]
    Offer { app: String, source: ServiceError },
}

/// Outcome of [`ExecutionManager::load_manifests`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    /// Each cycle as the sorted set of its members.
    pub cycles: Vec<Vec<String>>,
    pub duplicates: Vec<String>,
    pub missing_dependencies: Vec<(String, String)>,
    /// Dependency-respecting start order, empty when cycles exist.
    pub start_order: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.cycles.is_empty() && self.duplicates.is_empty() && self.missing_dependencies.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub tick: Tick,
    pub app: String,
    pub from: AppState,
    pub to: AppState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StartLogEntry {
    pub app: String,
    pub state: AppState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateReport {
    pub app: String,
    /// `None` when the update added a new application.
    pub old_version: Option<Version>,
    pub new_version: Version,
    pub version_changed: bool,
    /// Applications restarted by the update, in restart order.
    pub restarted: Vec<String>,
}

impl UpdateReport {
    pub fn added(&self) -> bool {
        self.old_version.is_none()
    }
}

/// Sorted groups of strongly connected apps that form cycles.
fn find_cycles(deps: &BTreeMap<&str, Vec<&str>>) -> Vec<Vec<String>> {
    // Tarjan's algorithm, iteration order fixed by the BTreeMap
    struct State<'a> {
        index: BTreeMap<&'a str, usize>,
        low: BTreeMap<&'a str, usize>,
        stack: Vec<&'a str>,
        on_stack: BTreeSet<&'a str>,
        next: usize,
        out: Vec<Vec<String>>,
    }
    fn visit<'a>(v: &'a str, deps: &BTreeMap<&'a str, Vec<&'a str>>, st: &mut State<'a>) {
        st.index.insert(v, st.next);
        st.low.insert(v, st.next);
        st.next += 1;
        st.stack.push(v);
        st.on_stack.insert(v);
        for &w in deps.get(v).map(Vec::as_slice).unwrap_or(&[]) {
            if !deps.contains_key(w) {
                continue;
            }
            if !st.index.contains_key(w) {
                visit(w, deps, st);
                let lw = st.low[w];
                let lv = st.low.get_mut(v).expect("visited");
                *lv = (*lv).min(lw);
            } else if st.on_stack.contains(w) {
                let iw = st.index[w];
                let lv = st.low.get_mut(v).expect("visited");
                *lv = (*lv).min(iw);
            }
        }
        if st.low[v] == st.index[v] {
            let mut scc = Vec::new();
            loop {
                let w = st.stack.pop().expect("v is on the stack");
                st.on_stack.remove(w);
                scc.push(w.to_owned());
                if w == v {
                    break;
                }
            }
            let self_loop = deps[v].contains(&v);
            if scc.len() > 1 || self_loop {
                scc.sort();
                st.out.push(scc);
            }
        }
    }
    let mut st = State {
        index: BTreeMap::new(),
        low: BTreeMap::new(),
        stack: Vec::new(),
        on_stack: BTreeSet::new(),
        next: 0,
        out: Vec::new(),
    };
    for &v in deps.keys() {
        if !st.index.contains_key(v) {
            visit(v, deps, &mut st);
        }
    }
    st.out.sort();
    st.out
}

/// Kahn's algorithm with lexicographic tie-break; `None` on cycles.
fn start_order(deps: &BTreeMap<&str, Vec<&str>>) -> Option<Vec<String>> {
    let mut pending: BTreeMap<&str, usize> = deps
        .iter()
        .map(|(app, ds)| (*app, ds.iter().filter(|d| deps.contains_key(*d)).count()))
        .collect();
    let mut ready: BTreeSet<&str> = pending
        .iter()
        .filter(|(_, n)| **n == 0)
        .map(|(a, _)| *a)
        .collect();
    let mut order = Vec::with_capacity(deps.len());
    while let Some(app) = ready.pop_first() {
        pending.remove(app);
        order.push(app.to_owned());
        for (other, ds) in deps {
            if let Some(n) = pending.get_mut(other) {
                let hits = ds.iter().filter(|d| **d == app).count();
                if hits > 0 {
                    *n -= hits;
                    if *n == 0 {
                        ready.insert(other);
                    }
                }
            }
        }
    }
    (order.len() == deps.len()).then_some(order)
}

fn dependency_map(manifests: &BTreeMap<String, AppManifest>) -> BTreeMap<&str, Vec<&str>> {
    manifests
        .iter()
        .map(|(name, m)| {
            (
                name.as_str(),
                m.startup_dependencies.iter().map(String::as_str).collect(),
            )
        })
        .collect()
}

#[derive(Debug, Clone)]
struct AppRecord {
    manifest: AppManifest,
    state: AppState,
    running_since: Option<Tick>,
}

/// Lifecycle manager of one service-oriented node.
#[derive(Debug, Clone)]
pub struct ExecutionManager {
    endpoint: Endpoint,
    apps: BTreeMap<String, AppRecord>,
    transitions: Vec<Transition>,
    restart_dependents: bool,
}

impl ExecutionManager {
    pub fn new(endpoint: Endpoint) -> Self {
        Self {
            endpoint,
            apps: BTreeMap::new(),
            transitions: Vec::new(),
            restart_dependents: false,
        }
    }

    /// When set, updating an app also restarts every app that transitively depends on it.
    pub fn with_restart_dependents(mut self, restart: bool) -> Self {
        self.restart_dependents = restart;
        self
    }

    pub fn node(&self) -> &NodeId {
        &self.endpoint.node
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    pub fn app_names(&self) -> impl Iterator<Item = &str> {
        self.apps.keys().map(String::as_str)
    }

    pub fn manifest(&self, app: &str) -> Option<&AppManifest> {
        self.apps.get(app).map(|r| &r.manifest)
    }

    pub fn state(&self, app: &str) -> Option<AppState> {
        self.apps.get(app).map(|r| r.state)
    }

    /// Ticks since `app` last entered Running; 0 when not running.
    pub fn uptime(&self, app: &str, now: Tick) -> Option<Tick> {
        self.apps
            .get(app)
            .map(|r| r.running_since.map_or(0, |t| now.saturating_sub(t)))
    }

    /// `(state, uptime)` of every app, in name order.
    pub fn snapshot(&self, now: Tick) -> BTreeMap<String, (AppState, Tick)> {
        self.apps
            .keys()
            .map(|a| {
                (
                    a.clone(),
                    (self.apps[a].state, self.uptime(a, now).expect("known app")),
                )
            })
            .collect()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn drain_transitions(&mut self) -> Vec<Transition> {
        std::mem::take(&mut self.transitions)
    }

    /// Services that running apps provide.
    pub fn running_offers(&self) -> BTreeSet<ProvidedService> {
        self.apps
            .values()
            .filter(|r| r.state == AppState::Running)
            .flat_map(|r| r.manifest.provides.iter().copied())
            .collect()
    }

    fn validate_set(manifests: &BTreeMap<String, AppManifest>) -> ValidationReport {
        let deps = dependency_map(manifests);
        let mut report = ValidationReport {
            cycles: find_cycles(&deps),
            ..ValidationReport::default()
        };
        for (app, ds) in &deps {
            for d in ds {
                if !deps.contains_key(d) {
                    report
                        .missing_dependencies
                        .push(((*app).to_owned(), (*d).to_owned()));
                }
            }
        }
        if report.cycles.is_empty() {
            report.start_order = start_order(&deps).expect("acyclic graph has an order");
        }
        report
    }

    /// Registers manifests and reports cycles, duplicate names and missing dependencies.
    pub fn load_manifests(&mut self, manifests: Vec<AppManifest>) -> ValidationReport {
        let mut duplicates = Vec::new();
        for m in manifests {
            if self.apps.contains_key(&m.app_name) {
                duplicates.push(m.app_name.clone());
                continue;
            }
            self.apps.insert(
                m.app_name.clone(),
                AppRecord {
                    manifest: m,
                    state: AppState::Idle,
                    running_since: None,
                },
            );
        }
        let mut report = Self::validate_set(&self.manifests());
        report.duplicates = duplicates;
        report
    }

    fn manifests(&self) -> BTreeMap<String, AppManifest> {
        self.apps
            .iter()
            .map(|(k, r)| (k.clone(), r.manifest.clone()))
            .collect()
    }

    fn checked_order(manifests: &BTreeMap<String, AppManifest>) -> Result<Vec<String>, ExecError> {
        let report = Self::validate_set(manifests);
        if let Some(cycle) = report.cycles.into_iter().next() {
            return Err(ExecError::DependencyCycle(cycle));
        }
        if let Some((app, dependency)) = report.missing_dependencies.into_iter().next() {
            return Err(ExecError::MissingDependency { app, dependency });
        }
        Ok(report.start_order)
    }

    pub fn start_order(&self) -> Result<Vec<String>, ExecError> {
        Self::checked_order(&self.manifests())
    }

    fn transition(&mut self, app: &str, to: AppState, now: Tick) -> Result<(), ExecError> {
        let rec = self
            .apps
            .get_mut(app)
            .ok_or_else(|| ExecError::UnknownApp(app.to_owned()))?;
        if !rec.state.can_transition(to) {
            return Err(ExecError::IllegalTransition {
                app: app.to_owned(),
                from: rec.state,
                to,
            });
        }
        let from = rec.state;
        rec.state = to;
        rec.running_since = (to == AppState::Running).then_some(now);
        self.transitions.push(Transition {
            tick: now,
            app: app.to_owned(),
            from,
            to,
        });
        Ok(())
    }

    fn instances(&self, mw: &Middleware, app: &str) -> Result<Vec<ServiceInstance>, ExecError> {
        let rec = &self.apps[app];
        rec.manifest
            .provides
            .iter()
            .map(|p| {
                let iface = mw.interface(p.service_id).ok_or_else(|| ExecError::Offer {
                    app: app.to_owned(),
                    source: ServiceError::UnknownService(p.service_id),
                })?;
                let instance = ServiceInstance {
                    service_id: p.service_id,
                    instance_id: p.instance_id,
                    interface_version: iface.interface_version,
                    endpoint: self.endpoint.clone(),
                };
                if let Some(existing) = mw.registry().lookup(p.service_id, p.instance_id, mw.now()) {
                    if existing.endpoint != self.endpoint {
                        return Err(ExecError::Offer {
                            app: app.to_owned(),
                            source: ServiceError::DuplicateInstance {
                                service_id: p.service_id,
                                instance_id: p.instance_id,
                                existing: existing.endpoint.clone(),
                            },
                        });
                    }
                }
                Ok(instance)
            })
            .collect()
    }

    /// Idle or Terminated -> Starting -> Running, then offers the app's services.
    pub fn start_app(&mut self, app: &str, mw: &mut Middleware) -> Result<AppState, ExecError> {
        let state = self
            .state(app)
            .ok_or_else(|| ExecError::UnknownApp(app.to_owned()))?;
        if !state.can_transition(AppState::Starting) {
            return Err(ExecError::IllegalTransition {
                app: app.to_owned(),
                from: state,
                to: AppState::Starting,
            });
        }
        let instances = self.instances(mw, app)?;
        let now = mw.now();
        self.transition(app, AppState::Starting, now)?;
        self.transition(app, AppState::Running, now)?;
        for inst in instances {
            mw.offer_service(inst, TTL_INFINITE)
                .map_err(|source| ExecError::Offer {
                    app: app.to_owned(),
                    source,
                })?;
        }
        Ok(AppState::Running)
    }

    /// Running -> Terminating -> Terminated, withdrawing the app's services first.
    pub fn stop_app(&mut self, app: &str, mw: &mut Middleware) -> Result<AppState, ExecError> {
        let state = self
            .state(app)
            .ok_or_else(|| ExecError::UnknownApp(app.to_owned()))?;
        if !state.can_transition(AppState::Terminating) {
            return Err(ExecError::IllegalTransition {
                app: app.to_owned(),
                from: state,
                to: AppState::Terminating,
            });
        }
        let now = mw.now();
        self.transition(app, AppState::Terminating, now)?;
        for p in self.apps[app].manifest.provides.clone() {
            if let Some(inst) = mw.registry().lookup(p.service_id, p.instance_id, now).cloned() {
                if inst.endpoint == self.endpoint {
                    mw.stop_offer(inst).map_err(|source| ExecError::Offer {
                        app: app.to_owned(),
                        source,
                    })?;
                }
            }
        }
        self.transition(app, AppState::Terminated, now)?;
        Ok(AppState::Terminated)
    }

    /// Starts every app that is not running, in dependency order.
    pub fn start_all(&mut self, mw: &mut Middleware) -> Result<Vec<StartLogEntry>, ExecError> {
        let order = self.start_order()?;
        let mut log = Vec::new();
        for app in order {
            if self.apps[&app].state == AppState::Running {
                continue;
            }
            let state = self.start_app(&app, mw)?;
            log.push(StartLogEntry { app, state });
        }
        Ok(log)
    }

    /// Apps that transitively depend on `app`.
    fn dependents(&self, app: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut frontier = vec![app.to_owned()];
        while let Some(cur) = frontier.pop() {
            for (name, rec) in &self.apps {
                if rec.manifest.startup_dependencies.contains(&cur) && out.insert(name.clone()) {
                    frontier.push(name.clone());
                }
            }
        }
        out
    }

    /// Replaces one application's manifest and restarts only that application
    /// (plus its dependents when configured). A new name adds the application.
    pub fn update_app(
        &mut self,
        app: &str,
        new_manifest: AppManifest,
        mw: &mut Middleware,
    ) -> Result<UpdateReport, ExecError> {
        if new_manifest.app_name != app {
            return Err(ExecError::NameMismatch {
                requested: app.to_owned(),
                manifest: new_manifest.app_name,
            });
        }
        let mut candidate = self.manifests();
        let old_version = candidate.get(app).map(|m| m.version);
        candidate.insert(app.to_owned(), new_manifest.clone());
        let order = Self::checked_order(&candidate)?;

        let Some(old_version) = old_version else {
            self.apps.insert(
                app.to_owned(),
                AppRecord {
                    manifest: new_manifest.clone(),
                    state: AppState::Idle,
                    running_since: None,
                },
            );
            if let Err(e) = self.start_app(app, mw) {
                self.apps.remove(app);
                return Err(e);
            }
            return Ok(UpdateReport {
                app: app.to_owned(),
                old_version: None,
                new_version: new_manifest.version,
                version_changed: true,
                restarted: vec![app.to_owned()],
            });
        };

        let mut affected = BTreeSet::from([app.to_owned()]);
        if self.restart_dependents {
            affected.extend(self.dependents(app));
        }
        let restart: Vec<String> = order.into_iter().filter(|a| affected.contains(a)).collect();
        let was_running: BTreeSet<String> = restart
            .iter()
            .filter(|a| self.apps[*a].state == AppState::Running)
            .cloned()
            .collect();
        for a in restart.iter().rev() {
            if was_running.contains(a) {
                self.stop_app(a, mw)?;
            }
        }
        self.apps.get_mut(app).expect("existing app").manifest = new_manifest.clone();
        let mut restarted = Vec::new();
        for a in &restart {
            if a == app || was_running.contains(a) {
                self.start_app(a, mw)?;
                restarted.push(a.clone());
            }
        }
        Ok(UpdateReport {
            app: app.to_owned(),
            old_version: Some(old_version),
            new_version: new_manifest.version,
            version_changed: old_version != new_manifest.version,
            restarted,
        })
    }
}

/// Signal-oriented node whose software can only be replaced as one image.
#[derive(Debug, Clone)]
pub struct ClassicEcu {
    node: NodeId,
    image_version: Version,
    /// Hosted function name -> tick it last started.
    functions: BTreeMap<String, Tick>,
}

impl ClassicEcu {
    pub fn new<I, S>(node: impl Into<NodeId>, image_version: Version, functions: I, now: Tick) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            node: node.into(),
            image_version,
            functions: functions.into_iter().map(|f| (f.into(), now)).collect(),
        }
    }

    pub fn node(&self) -> &NodeId {
        &self.node
    }

    pub fn image_version(&self) -> Version {
        self.image_version
    }

    pub fn uptime(&self, function: &str, now: Tick) -> Option<Tick> {
        self.functions.get(function).map(|t| now.saturating_sub(*t))
    }

    pub fn functions(&self) -> impl Iterator<Item = &str> {
        self.functions.keys().map(String::as_str)
    }

    /// Flashes a new image: every hosted function restarts, whatever changed.
    pub fn update_image(&mut self, version: Version, now: Tick) {
        self.image_version = version;
        for started in self.functions.values_mut() {
            *started = now;
        }
    }
}
