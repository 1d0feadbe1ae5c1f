//! Proxy/skeleton runtime on top of the wire codec and the discovery registry.
//!
//! Every message travels as encoded bytes with a one-tick latency. The owner
//! drives time explicitly: [`Middleware::advance_to`], then
//! [`Middleware::deliver_due`], then [`Middleware::process_node`] for each node
//! in ascending order. [`Middleware::step`] does all three.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use thiserror::Error;

use super::discovery::{
    expiry, DuplicateInstance, Endpoint, OfferOutcome, Registry, SdEntry, SdKind,
    ServiceInstance, TTL_INFINITE,
};
use super::interface::{FieldDef, InterfaceError, Member, ServiceInterfaceDef};
use super::schema::{PayloadSchema, SchemaError, Value};
use super::wire::{return_code, MessageType, WireError, WireMessage, LENGTH_BASE};
use crate::{NodeId, Tick};

pub const DEFAULT_METHOD_TIMEOUT: Tick = 16;
pub const MESSAGE_LATENCY: Tick = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServiceError {
    #[error("service 0x{0:04X} has no registered interface")]
    UnknownService(u16),
    #[error(transparent)]
    Interface(#[from] InterfaceError),
    #[error("instance 0x{service_id:04X}.{instance_id} is already offered by {existing}")]
    DuplicateInstance {
        service_id: u16,
        instance_id: u16,
        existing: Endpoint,
    },
    #[error("interface version {offered} does not match registered version {registered}")]
    InterfaceVersion { offered: u8, registered: u8 },
    #[error("instance 0x{service_id:04X}.{instance_id} is not offered")]
    InstanceNotOffered { service_id: u16, instance_id: u16 },
    #[error("service 0x{service_id:04X} has no event 0x{event_id:04X}")]
    UnknownEvent { service_id: u16, event_id: u16 },
    #[error("service 0x{service_id:04X} has no method 0x{method_id:04X}")]
    UnknownMethod { service_id: u16, method_id: u16 },
    #[error("service 0x{service_id:04X} has no field 0x{field_id:04X}")]
    UnknownField { service_id: u16, field_id: u16 },
    #[error("field 0x{field_id:04X} does not support {operation}")]
    OperationNotSupported {
        field_id: u16,
        operation: &'static str,
    },
    #[error("payload does not match schema: {0}")]
    SchemaMismatch(#[from] SchemaError),
    #[error("unknown proxy with client id 0x{0:04X}")]
    UnknownProxy(u16),
}

impl From<DuplicateInstance> for ServiceError {
    fn from(d: DuplicateInstance) -> Self {
        ServiceError::DuplicateInstance {
            service_id: d.service_id,
            instance_id: d.instance_id,
            existing: d.existing,
        }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

/// Failure of an issued method call.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CallError {
    #[error("no response within {0} ticks")]
    Timeout(Tick),
    #[error("remote returned error 0x{0:02X}")]
    RemoteError(u8),
    #[error("malformed response: {0}")]
    Malformed(String),
}

pub type CallOutcome = std::result::Result<Vec<Value>, CallError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CallId(pub u64);

impl fmt::Display for CallId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "call#{}", self.0)
    }
}

/// Handle to a proxy, identified by its SOME/IP client id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProxyId(pub u16);

/// Subscription key: who listens to which event of which instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubscriptionHandle {
    pub service_id: u16,
    pub instance_id: u16,
    pub event_id: u16,
    pub subscriber: Endpoint,
}

/// Computes a reply, or an error return code.
pub type HandlerFn = Box<dyn FnMut(&[Value]) -> std::result::Result<Vec<Value>, u8> + Send>;

/// Server-side behaviour of a method.
pub enum MethodHandler {
    /// Returns the request values unchanged.
    Echo,
    Constant(Vec<Value>),
    /// Replies with an ERROR message carrying the return code.
    Fail(u8),
    /// Never replies.
    Silent,
    Custom(HandlerFn),
}

impl fmt::Debug for MethodHandler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodHandler::Echo => f.write_str("Echo"),
            MethodHandler::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            MethodHandler::Fail(c) => f.debug_tuple("Fail").field(c).finish(),
            MethodHandler::Silent => f.write_str("Silent"),
            MethodHandler::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A message in flight between two endpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub deliver_at: Tick,
    pub src: Endpoint,
    pub dst: Endpoint,
    /// Instance addressed (requests) or emitting (responses, notifications).
    pub instance_id: u16,
    pub bytes: Vec<u8>,
}

/// Observable middleware activity, drained by the owner for tracing.
#[derive(Debug, Clone, PartialEq)]
pub enum MwEvent {
    Sd(SdEntry),
    Published {
        tick: Tick,
        publisher: Endpoint,
        service_id: u16,
        instance_id: u16,
        event_id: u16,
        values: Vec<Value>,
        subscribers: usize,
    },
    NotificationReceived {
        tick: Tick,
        subscriber: Endpoint,
        service_id: u16,
        instance_id: u16,
        event_id: u16,
        values: Vec<Value>,
    },
    RequestSent {
        tick: Tick,
        caller: Endpoint,
        call: CallId,
        service_id: u16,
        instance_id: u16,
        method_id: u16,
        client_id: u16,
        session_id: u16,
        values: Vec<Value>,
    },
    RequestServed {
        tick: Tick,
        server: Endpoint,
        service_id: u16,
        instance_id: u16,
        method_id: u16,
        client_id: u16,
        session_id: u16,
        return_code: Option<u8>,
    },
    RequestDropped {
        tick: Tick,
        server: Endpoint,
        service_id: u16,
        instance_id: u16,
        method_id: u16,
        reason: String,
    },
    FieldSet {
        tick: Tick,
        server: Endpoint,
        service_id: u16,
        instance_id: u16,
        field_id: u16,
        values: Vec<Value>,
    },
    CallCompleted {
        tick: Tick,
        caller: Endpoint,
        call: CallId,
        service_id: u16,
        method_id: u16,
        client_id: u16,
        session_id: u16,
        outcome: CallOutcome,
    },
    UnmatchedResponse {
        tick: Tick,
        endpoint: Endpoint,
        client_id: u16,
        session_id: u16,
    },
    Malformed {
        tick: Tick,
        endpoint: Endpoint,
        error: String,
    },
}

impl MwEvent {
    pub fn tick(&self) -> Tick {
        match self {
            MwEvent::Sd(e) => e.tick,
            MwEvent::Published { tick, .. }
            | MwEvent::NotificationReceived { tick, .. }
            | MwEvent::RequestSent { tick, .. }
            | MwEvent::RequestServed { tick, .. }
            | MwEvent::RequestDropped { tick, .. }
            | MwEvent::FieldSet { tick, .. }
            | MwEvent::CallCompleted { tick, .. }
            | MwEvent::UnmatchedResponse { tick, .. }
            | MwEvent::Malformed { tick, .. } => *tick,
        }
    }
}

/// A notification held in a subscriber's inbox.
#[derive(Debug, Clone, PartialEq)]
pub struct Notification {
    pub tick: Tick,
    pub service_id: u16,
    pub instance_id: u16,
    pub event_id: u16,
    pub values: Vec<Value>,
}

#[derive(Debug)]
struct Skeleton {
    fields: BTreeMap<u16, Vec<Value>>,
    handlers: BTreeMap<u16, MethodHandler>,
    notify_session: u16,
}

#[derive(Debug, Clone)]
struct PendingCall {
    call: CallId,
    service_id: u16,
    method_id: u16,
    deadline: Tick,
    response: PayloadSchema,
}

#[derive(Debug)]
struct ProxyState {
    endpoint: Endpoint,
    next_session: u16,
    outstanding: BTreeMap<u16, PendingCall>,
}

impl ProxyState {
    fn take_session(&mut self) -> u16 {
        let s = self.next_session;
        self.next_session = next_session(s);
        s
    }
}

/// Session ids run 0x0001..=0xFFFF and wrap, skipping zero.
pub fn next_session(current: u16) -> u16 {
    if current == u16::MAX {
        1
    } else {
        current + 1
    }
}

#[derive(Debug)]
pub struct Middleware {
    now: Tick,
    method_timeout: Tick,
    interfaces: BTreeMap<u16, ServiceInterfaceDef>,
    registry: Registry,
    skeletons: BTreeMap<(u16, u16), Skeleton>,
    subscriptions: BTreeMap<(u16, u16, u16), BTreeMap<Endpoint, Option<Tick>>>,
    proxies: BTreeMap<u16, ProxyState>,
    next_client: u16,
    next_call: u64,
    in_flight: Vec<Envelope>,
    inboxes: BTreeMap<Endpoint, VecDeque<Envelope>>,
    completed: BTreeMap<CallId, CallOutcome>,
    notifications: BTreeMap<Endpoint, Vec<Notification>>,
    events: Vec<MwEvent>,
}

impl Default for Middleware {
    fn default() -> Self {
        Self::new(DEFAULT_METHOD_TIMEOUT)
    }
}

impl Middleware {
    pub fn new(method_timeout: Tick) -> Self {
        Self {
            now: 0,
            method_timeout,
            interfaces: BTreeMap::new(),
            registry: Registry::new(),
            skeletons: BTreeMap::new(),
            subscriptions: BTreeMap::new(),
            proxies: BTreeMap::new(),
            next_client: 1,
            next_call: 0,
            in_flight: Vec::new(),
            inboxes: BTreeMap::new(),
            completed: BTreeMap::new(),
            notifications: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn method_timeout(&self) -> Tick {
        self.method_timeout
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn register_interface(&mut self, iface: ServiceInterfaceDef) -> Result<()> {
        iface.validate()?;
        self.interfaces.insert(iface.service_id, iface);
        Ok(())
    }

    pub fn interface(&self, service_id: u16) -> Option<&ServiceInterfaceDef> {
        self.interfaces.get(&service_id)
    }

    fn iface(&self, service_id: u16) -> Result<&ServiceInterfaceDef> {
        self.interfaces
            .get(&service_id)
            .ok_or(ServiceError::UnknownService(service_id))
    }

    fn offered(&self, service_id: u16, instance_id: u16) -> Result<ServiceInstance> {
        self.registry
            .lookup(service_id, instance_id, self.now)
            .cloned()
            .ok_or(ServiceError::InstanceNotOffered {
                service_id,
                instance_id,
            })
    }

    /// Moves the clock forward and purges expired offers and subscriptions.
    pub fn advance_to(&mut self, now: Tick) {
        assert!(now >= self.now, "middleware clock cannot go backwards");
        self.now = now;
        for gone in self.registry.purge(now) {
            self.drop_subscriptions(gone.service_id, gone.instance_id);
        }
        for subs in self.subscriptions.values_mut() {
            subs.retain(|_, exp| exp.is_none_or(|t| now < t));
        }
    }

    fn log_sd(
        &mut self,
        kind: SdKind,
        service_id: u16,
        instance_id: Option<u16>,
        event_id: Option<u16>,
        ttl: u32,
        origin: Endpoint,
    ) {
        self.events.push(MwEvent::Sd(SdEntry {
            tick: self.now,
            kind,
            service_id,
            instance_id,
            event_id,
            ttl,
            origin,
        }));
    }

    /// Offers an instance; `ttl == 0` withdraws it (stop-offer).
    pub fn offer_service(&mut self, instance: ServiceInstance, ttl: u32) -> Result<OfferOutcome> {
        let iface = self.iface(instance.service_id)?;
        if iface.interface_version != instance.interface_version {
            return Err(ServiceError::InterfaceVersion {
                offered: instance.interface_version,
                registered: iface.interface_version,
            });
        }
        let field_defaults: BTreeMap<u16, Vec<Value>> = iface
            .fields
            .iter()
            .map(|f| (f.field_id, f.schema.defaults()))
            .collect();
        let key = (instance.service_id, instance.instance_id);
        let outcome = self.registry.offer(instance.clone(), ttl, self.now)?;
        match outcome {
            OfferOutcome::Withdrawn(_) => self.drop_subscriptions(key.0, key.1),
            _ => {
                self.skeletons.entry(key).or_insert_with(|| Skeleton {
                    fields: field_defaults,
                    handlers: BTreeMap::new(),
                    notify_session: 1,
                });
            }
        }
        self.log_sd(
            SdKind::Offer,
            key.0,
            Some(key.1),
            None,
            ttl,
            instance.endpoint,
        );
        Ok(outcome)
    }

    pub fn stop_offer(&mut self, instance: ServiceInstance) -> Result<OfferOutcome> {
        self.offer_service(instance, 0)
    }

    fn drop_subscriptions(&mut self, service_id: u16, instance_id: u16) {
        self.subscriptions
            .retain(|(s, i, _), _| !(*s == service_id && *i == instance_id));
    }

    /// Unexpired matching instances; logs a FIND entry when `origin` is given.
    pub fn find_service(
        &mut self,
        origin: Option<Endpoint>,
        service_id: u16,
        instance_id: Option<u16>,
    ) -> Vec<ServiceInstance> {
        if let Some(origin) = origin {
            self.log_sd(SdKind::Find, service_id, instance_id, None, TTL_INFINITE, origin);
        }
        self.registry.find(service_id, instance_id, self.now)
    }

    pub fn set_method_handler(
        &mut self,
        service_id: u16,
        instance_id: u16,
        method_id: u16,
        handler: MethodHandler,
    ) -> Result<()> {
        self.iface(service_id)?
            .method(method_id)
            .ok_or(ServiceError::UnknownMethod {
                service_id,
                method_id,
            })?;
        let fields = self
            .iface(service_id)?
            .fields
            .iter()
            .map(|f| (f.field_id, f.schema.defaults()))
            .collect();
        self.skeletons
            .entry((service_id, instance_id))
            .or_insert_with(|| Skeleton {
                fields,
                handlers: BTreeMap::new(),
                notify_session: 1,
            })
            .handlers
            .insert(method_id, handler);
        Ok(())
    }

    pub fn subscribe_event(
        &mut self,
        subscriber: Endpoint,
        service_id: u16,
        instance_id: u16,
        event_id: u16,
        ttl: u32,
    ) -> Result<SubscriptionHandle> {
        let instance = self.offered(service_id, instance_id)?;
        if self.iface(service_id)?.event_schema(event_id).is_none() {
            return Err(ServiceError::UnknownEvent {
                service_id,
                event_id,
            });
        }
        self.log_sd(
            SdKind::Subscribe,
            service_id,
            Some(instance_id),
            Some(event_id),
            ttl,
            subscriber.clone(),
        );
        if ttl == 0 {
            let handle = SubscriptionHandle {
                service_id,
                instance_id,
                event_id,
                subscriber,
            };
            self.unsubscribe(&handle);
            return Ok(handle);
        }
        self.subscriptions
            .entry((service_id, instance_id, event_id))
            .or_default()
            .insert(subscriber.clone(), expiry(self.now, ttl));
        self.log_sd(
            SdKind::SubscribeAck,
            service_id,
            Some(instance_id),
            Some(event_id),
            ttl,
            instance.endpoint,
        );
        Ok(SubscriptionHandle {
            service_id,
            instance_id,
            event_id,
            subscriber,
        })
    }

    pub fn unsubscribe(&mut self, handle: &SubscriptionHandle) -> bool {
        self.subscriptions
            .get_mut(&(handle.service_id, handle.instance_id, handle.event_id))
            .is_some_and(|subs| subs.remove(&handle.subscriber).is_some())
    }

    /// Subscribers holding an unexpired subscription right now.
    pub fn subscribers(&self, service_id: u16, instance_id: u16, event_id: u16) -> Vec<Endpoint> {
        let now = self.now;
        self.subscriptions
            .get(&(service_id, instance_id, event_id))
            .map(|subs| {
                subs.iter()
                    .filter(|(_, exp)| exp.is_none_or(|t| now < t))
                    .map(|(e, _)| e.clone())
                    .collect()
            })
            .unwrap_or_default()
    }

    fn send(&mut self, src: Endpoint, dst: Endpoint, instance_id: u16, msg: &WireMessage) {
        let bytes = msg.encode();
        let declared = u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
        assert_eq!(
            declared,
            LENGTH_BASE + msg.payload.len() as u32,
            "header length law violated"
        );
        self.in_flight.push(Envelope {
            deliver_at: self.now + MESSAGE_LATENCY,
            src,
            dst,
            instance_id,
            bytes,
        });
    }

    /// Sends one NOTIFICATION per current subscriber; returns how many were sent.
    pub fn publish_event(
        &mut self,
        service_id: u16,
        instance_id: u16,
        event_id: u16,
        values: &[Value],
    ) -> Result<usize> {
        let instance = self.offered(service_id, instance_id)?;
        let iface = self.iface(service_id)?;
        let schema = iface
            .event_schema(event_id)
            .ok_or(ServiceError::UnknownEvent {
                service_id,
                event_id,
            })?;
        let payload = schema.serialize(values)?;
        let interface_version = iface.interface_version;
        let subscribers = self.subscribers(service_id, instance_id, event_id);
        let skeleton = self
            .skeletons
            .get_mut(&(service_id, instance_id))
            .expect("offered instances have a skeleton");
        let session_id = skeleton.notify_session;
        skeleton.notify_session = next_session(session_id);
        let msg = WireMessage {
            service_id,
            method_id: event_id,
            client_id: 0,
            session_id,
            interface_version,
            message_type: MessageType::Notification,
            return_code: return_code::E_OK,
            payload,
        };
        for sub in &subscribers {
            self.send(instance.endpoint.clone(), sub.clone(), instance_id, &msg);
        }
        self.events.push(MwEvent::Published {
            tick: self.now,
            publisher: instance.endpoint,
            service_id,
            instance_id,
            event_id,
            values: values.to_vec(),
            subscribers: subscribers.len(),
        });
        Ok(subscribers.len())
    }

    pub fn create_proxy(&mut self, endpoint: Endpoint) -> ProxyId {
        let client_id = self.next_client;
        self.next_client = self.next_client.wrapping_add(1).max(1);
        self.proxies.insert(
            client_id,
            ProxyState {
                endpoint,
                next_session: 1,
                outstanding: BTreeMap::new(),
            },
        );
        ProxyId(client_id)
    }

    pub fn proxy_endpoint(&self, proxy: ProxyId) -> Option<&Endpoint> {
        self.proxies.get(&proxy.0).map(|p| &p.endpoint)
    }

    /// Session id the proxy will use for its next request.
    pub fn next_session_of(&self, proxy: ProxyId) -> Option<u16> {
        self.proxies.get(&proxy.0).map(|p| p.next_session)
    }

    fn issue(
        &mut self,
        proxy: ProxyId,
        instance: ServiceInstance,
        method_id: u16,
        request: &PayloadSchema,
        response: PayloadSchema,
        values: &[Value],
    ) -> Result<CallId> {
        let payload = request.serialize(values)?;
        let interface_version = self.iface(instance.service_id)?.interface_version;
        let call = CallId(self.next_call);
        let deadline = self.now + self.method_timeout;
        let state = self
            .proxies
            .get_mut(&proxy.0)
            .ok_or(ServiceError::UnknownProxy(proxy.0))?;
        let session_id = state.take_session();
        let caller = state.endpoint.clone();
        // a wrapped session id still outstanding would be ambiguous; the older call loses
        if let Some(stale) = state.outstanding.insert(
            session_id,
            PendingCall {
                call,
                service_id: instance.service_id,
                method_id,
                deadline,
                response,
            },
        ) {
            self.completed
                .insert(stale.call, Err(CallError::Timeout(self.method_timeout)));
        }
        self.next_call += 1;
        let msg = WireMessage {
            service_id: instance.service_id,
            method_id,
            client_id: proxy.0,
            session_id,
            interface_version,
            message_type: MessageType::Request,
            return_code: return_code::E_OK,
            payload,
        };
        self.send(caller.clone(), instance.endpoint, instance.instance_id, &msg);
        self.events.push(MwEvent::RequestSent {
            tick: self.now,
            caller,
            call,
            service_id: instance.service_id,
            instance_id: instance.instance_id,
            method_id,
            client_id: proxy.0,
            session_id,
            values: values.to_vec(),
        });
        Ok(call)
    }

    /// Issues a REQUEST; the outcome becomes available through [`Middleware::take_result`].
    pub fn call_method(
        &mut self,
        proxy: ProxyId,
        service_id: u16,
        instance_id: u16,
        method_id: u16,
        values: &[Value],
    ) -> Result<CallId> {
        if !self.proxies.contains_key(&proxy.0) {
            return Err(ServiceError::UnknownProxy(proxy.0));
        }
        let method = self
            .iface(service_id)?
            .method(method_id)
            .ok_or(ServiceError::UnknownMethod {
                service_id,
                method_id,
            })?
            .clone();
        let instance = self.offered(service_id, instance_id)?;
        self.issue(
            proxy,
            instance,
            method_id,
            &method.request,
            method.response,
            values,
        )
    }

    fn field_def(&self, service_id: u16, field_id: u16) -> Result<FieldDef> {
        self.iface(service_id)?
            .field(field_id)
            .cloned()
            .ok_or(ServiceError::UnknownField {
                service_id,
                field_id,
            })
    }

    pub fn field_get(
        &mut self,
        proxy: ProxyId,
        service_id: u16,
        instance_id: u16,
        field_id: u16,
    ) -> Result<CallId> {
        let field = self.field_def(service_id, field_id)?;
        if !field.has_getter {
            return Err(ServiceError::OperationNotSupported {
                field_id,
                operation: "get",
            });
        }
        let instance = self.offered(service_id, instance_id)?;
        self.issue(
            proxy,
            instance,
            field.getter_id(),
            &PayloadSchema::empty(),
            field.schema,
            &[],
        )
    }

    pub fn field_set(
        &mut self,
        proxy: ProxyId,
        service_id: u16,
        instance_id: u16,
        field_id: u16,
        values: &[Value],
    ) -> Result<CallId> {
        let field = self.field_def(service_id, field_id)?;
        if !field.has_setter {
            return Err(ServiceError::OperationNotSupported {
                field_id,
                operation: "set",
            });
        }
        let instance = self.offered(service_id, instance_id)?;
        self.issue(
            proxy,
            instance,
            field.setter_id(),
            &field.schema.clone(),
            field.schema,
            values,
        )
    }

    /// Publishes the field's current value on its notifier event.
    pub fn field_notify(&mut self, service_id: u16, instance_id: u16, field_id: u16) -> Result<usize> {
        let field = self.field_def(service_id, field_id)?;
        if !field.has_notifier {
            return Err(ServiceError::OperationNotSupported {
                field_id,
                operation: "notify",
            });
        }
        self.offered(service_id, instance_id)?;
        let value = self.skeletons[&(service_id, instance_id)].fields[&field_id].clone();
        self.publish_event(service_id, instance_id, field.notifier_id(), &value)
    }

    /// Skeleton-side field update; notifies subscribers when the field has a notifier.
    pub fn set_field_local(
        &mut self,
        service_id: u16,
        instance_id: u16,
        field_id: u16,
        values: &[Value],
    ) -> Result<usize> {
        let field = self.field_def(service_id, field_id)?;
        field.schema.check(values)?;
        let instance = self.offered(service_id, instance_id)?;
        self.store_field(&instance, &field, values);
        if field.has_notifier {
            self.publish_event(service_id, instance_id, field.notifier_id(), values)
        } else {
            Ok(0)
        }
    }

    fn store_field(&mut self, instance: &ServiceInstance, field: &FieldDef, values: &[Value]) {
        self.skeletons
            .get_mut(&(instance.service_id, instance.instance_id))
            .expect("offered instances have a skeleton")
            .fields
            .insert(field.field_id, values.to_vec());
        self.events.push(MwEvent::FieldSet {
            tick: self.now,
            server: instance.endpoint.clone(),
            service_id: instance.service_id,
            instance_id: instance.instance_id,
            field_id: field.field_id,
            values: values.to_vec(),
        });
    }

    pub fn field_value(&self, service_id: u16, instance_id: u16, field_id: u16) -> Option<&[Value]> {
        self.skeletons
            .get(&(service_id, instance_id))?
            .fields
            .get(&field_id)
            .map(Vec::as_slice)
    }

    /// Moves due envelopes into their destination inboxes, preserving send order.
    pub fn deliver_due(&mut self) -> usize {
        let now = self.now;
        let (due, later): (Vec<_>, Vec<_>) = std::mem::take(&mut self.in_flight)
            .into_iter()
            .partition(|e| e.deliver_at <= now);
        self.in_flight = later;
        let n = due.len();
        for env in due {
            self.inboxes.entry(env.dst.clone()).or_default().push_back(env);
        }
        n
    }

    /// Envelopes still travelling. Exposed so tests can reorder or drop traffic.
    pub fn in_flight_mut(&mut self) -> &mut Vec<Envelope> {
        &mut self.in_flight
    }

    pub fn in_flight(&self) -> &[Envelope] {
        &self.in_flight
    }

    /// Handles inboxes of every endpoint on `node`, then expires that node's calls.
    pub fn process_node(&mut self, node: &NodeId) {
        let endpoints: Vec<Endpoint> = self
            .inboxes
            .keys()
            .filter(|e| &e.node == node)
            .cloned()
            .collect();
        for ep in endpoints {
            while let Some(env) = self.inboxes.get_mut(&ep).and_then(VecDeque::pop_front) {
                self.handle(env);
            }
        }
        self.expire_calls(node);
    }

    /// Nodes with pending inbox traffic or outstanding calls.
    pub fn active_nodes(&self) -> Vec<NodeId> {
        let mut nodes: Vec<NodeId> = self
            .inboxes
            .iter()
            .filter(|(_, q)| !q.is_empty())
            .map(|(e, _)| e.node.clone())
            .chain(
                self.proxies
                    .values()
                    .filter(|p| !p.outstanding.is_empty())
                    .map(|p| p.endpoint.node.clone()),
            )
            .collect();
        nodes.sort();
        nodes.dedup();
        nodes
    }

    /// Advance, deliver and process every node in ascending order.
    pub fn step(&mut self, now: Tick) {
        self.advance_to(now);
        self.deliver_due();
        for node in self.active_nodes() {
            self.process_node(&node);
        }
    }

    /// Steps tick by tick until `call` completes or `max_ticks` elapse.
    pub fn run_until_complete(&mut self, call: CallId, max_ticks: Tick) -> Option<CallOutcome> {
        let end = self.now + max_ticks;
        loop {
            if let Some(outcome) = self.take_result(call) {
                return Some(outcome);
            }
            if self.now >= end {
                return None;
            }
            let next = self.now + 1;
            self.step(next);
        }
    }

    pub fn take_result(&mut self, call: CallId) -> Option<CallOutcome> {
        self.completed.remove(&call)
    }

    pub fn take_notifications(&mut self, subscriber: &Endpoint) -> Vec<Notification> {
        self.notifications.remove(subscriber).unwrap_or_default()
    }

    pub fn drain_events(&mut self) -> Vec<MwEvent> {
        std::mem::take(&mut self.events)
    }

    fn expire_calls(&mut self, node: &NodeId) {
        let now = self.now;
        let timeout = self.method_timeout;
        let mut expired = Vec::new();
        for (client_id, proxy) in self.proxies.iter_mut() {
            if &proxy.endpoint.node != node {
                continue;
            }
            let sessions: Vec<u16> = proxy
                .outstanding
                .iter()
                .filter(|(_, p)| now >= p.deadline)
                .map(|(s, _)| *s)
                .collect();
            for session_id in sessions {
                let pending = proxy.outstanding.remove(&session_id).expect("listed above");
                expired.push((proxy.endpoint.clone(), *client_id, session_id, pending));
            }
        }
        for (caller, client_id, session_id, pending) in expired {
            self.finish(caller, client_id, session_id, pending, Err(CallError::Timeout(timeout)));
        }
    }

    fn finish(
        &mut self,
        caller: Endpoint,
        client_id: u16,
        session_id: u16,
        pending: PendingCall,
        outcome: CallOutcome,
    ) {
        self.completed.insert(pending.call, outcome.clone());
        self.events.push(MwEvent::CallCompleted {
            tick: self.now,
            caller,
            call: pending.call,
            service_id: pending.service_id,
            method_id: pending.method_id,
            client_id,
            session_id,
            outcome,
        });
    }

    fn handle(&mut self, env: Envelope) {
        let msg = match WireMessage::decode(&env.bytes) {
            Ok(m) => m,
            Err(e) => return self.malformed(&env.dst, e),
        };
        match msg.message_type {
            MessageType::Request | MessageType::RequestNoReturn => self.serve(env, msg),
            MessageType::Response | MessageType::Error => self.correlate(env, msg),
            MessageType::Notification => self.receive_notification(env, msg),
        }
    }

    fn malformed(&mut self, endpoint: &Endpoint, e: WireError) {
        self.events.push(MwEvent::Malformed {
            tick: self.now,
            endpoint: endpoint.clone(),
            error: e.to_string(),
        });
    }

    fn receive_notification(&mut self, env: Envelope, msg: WireMessage) {
        let Some(schema) = self
            .interfaces
            .get(&msg.service_id)
            .and_then(|i| i.event_schema(msg.method_id))
        else {
            return self.events.push(MwEvent::Malformed {
                tick: self.now,
                endpoint: env.dst,
                error: format!("unknown event 0x{:04X}", msg.method_id),
            });
        };
        let values = match schema.deserialize(&msg.payload) {
            Ok(v) => v,
            Err(e) => {
                return self.events.push(MwEvent::Malformed {
                    tick: self.now,
                    endpoint: env.dst,
                    error: e.to_string(),
                })
            }
        };
        self.notifications
            .entry(env.dst.clone())
            .or_default()
            .push(Notification {
                tick: self.now,
                service_id: msg.service_id,
                instance_id: env.instance_id,
                event_id: msg.method_id,
                values: values.clone(),
            });
        self.events.push(MwEvent::NotificationReceived {
            tick: self.now,
            subscriber: env.dst,
            service_id: msg.service_id,
            instance_id: env.instance_id,
            event_id: msg.method_id,
            values,
        });
    }

    fn serve(&mut self, env: Envelope, msg: WireMessage) {
        let drop = |this: &mut Self, reason: &str| {
            this.events.push(MwEvent::RequestDropped {
                tick: this.now,
                server: env.dst.clone(),
                service_id: msg.service_id,
                instance_id: env.instance_id,
                method_id: msg.method_id,
                reason: reason.to_owned(),
            });
        };
        let instance = match self.registry.lookup(msg.service_id, env.instance_id, self.now) {
            Some(i) if i.endpoint == env.dst => i.clone(),
            _ => return drop(self, "instance not offered"),
        };
        let Some(iface) = self.interfaces.get(&msg.service_id) else {
            return drop(self, "unknown service");
        };
        let result = if msg.interface_version != iface.interface_version {
            Err(return_code::E_WRONG_INTERFACE_VERSION)
        } else {
            match iface.member(msg.method_id) {
                Some(Member::Method(m)) => {
                    let (request, response) = (m.request.clone(), m.response.clone());
                    self.run_method(&instance, msg.method_id, &request, &response, &msg.payload)
                }
                Some(Member::FieldGetter(f)) => {
                    if msg.payload.is_empty() {
                        let key = (instance.service_id, instance.instance_id);
                        let value = self.skeletons[&key].fields[&f.field_id].clone();
                        f.schema.serialize(&value).map(Some).map_err(|_| return_code::E_NOT_OK)
                    } else {
                        Err(return_code::E_MALFORMED_MESSAGE)
                    }
                }
                Some(Member::FieldSetter(f)) => {
                    let f = f.clone();
                    match f.schema.deserialize(&msg.payload) {
                        Ok(values) => {
                            self.store_field(&instance, &f, &values);
                            if f.has_notifier {
                                // instance is offered, so publishing cannot fail
                                let _ = self.publish_event(
                                    instance.service_id,
                                    instance.instance_id,
                                    f.notifier_id(),
                                    &values,
                                );
                            }
                            Ok(Some(msg.payload.clone()))
                        }
                        Err(_) => Err(return_code::E_MALFORMED_MESSAGE),
                    }
                }
                _ => Err(return_code::E_UNKNOWN_METHOD),
            }
        };
        let reply = match result {
            Ok(None) => None,
            Ok(Some(payload)) => Some((MessageType::Response, return_code::E_OK, payload)),
            Err(code) => Some((MessageType::Error, code, Vec::new())),
        };
        let return_code = reply.as_ref().map(|r| r.1);
        if msg.message_type == MessageType::Request {
            if let Some((message_type, code, payload)) = reply {
                let response = WireMessage {
                    service_id: msg.service_id,
                    method_id: msg.method_id,
                    client_id: msg.client_id,
                    session_id: msg.session_id,
                    interface_version: msg.interface_version,
                    message_type,
                    return_code: code,
                    payload,
                };
                self.send(env.dst.clone(), env.src.clone(), env.instance_id, &response);
            }
        }
        self.events.push(MwEvent::RequestServed {
            tick: self.now,
            server: env.dst,
            service_id: msg.service_id,
            instance_id: env.instance_id,
            method_id: msg.method_id,
            client_id: msg.client_id,
            session_id: msg.session_id,
            return_code,
        });
    }

    /// `Ok(None)` means the handler stays silent.
    fn run_method(
        &mut self,
        instance: &ServiceInstance,
        method_id: u16,
        request: &PayloadSchema,
        response: &PayloadSchema,
        payload: &[u8],
    ) -> std::result::Result<Option<Vec<u8>>, u8> {
        let args = request
            .deserialize(payload)
            .map_err(|_| return_code::E_MALFORMED_MESSAGE)?;
        let skeleton = self
            .skeletons
            .get_mut(&(instance.service_id, instance.instance_id))
            .expect("offered instances have a skeleton");
        let out = match skeleton.handlers.get_mut(&method_id) {
            None if request == response => args,
            None => response.defaults(),
            Some(MethodHandler::Echo) => args,
            Some(MethodHandler::Constant(v)) => v.clone(),
            Some(MethodHandler::Fail(code)) => return Err(*code),
            Some(MethodHandler::Silent) => return Ok(None),
            Some(MethodHandler::Custom(f)) => f(&args)?,
        };
        response
            .serialize(&out)
            .map(Some)
            .map_err(|_| return_code::E_NOT_OK)
    }

    fn correlate(&mut self, env: Envelope, msg: WireMessage) {
        let matched = self.proxies.get_mut(&msg.client_id).and_then(|p| {
            if p.endpoint != env.dst {
                return None;
            }
            match p.outstanding.get(&msg.session_id) {
                Some(pending)
                    if pending.service_id == msg.service_id
                        && pending.method_id == msg.method_id =>
                {
                    p.outstanding.remove(&msg.session_id)
                }
                _ => None,
            }
        });
        let Some(pending) = matched else {
            return self.events.push(MwEvent::UnmatchedResponse {
                tick: self.now,
                endpoint: env.dst,
                client_id: msg.client_id,
                session_id: msg.session_id,
            });
        };
        let outcome = match msg.message_type {
            MessageType::Error => Err(CallError::RemoteError(msg.return_code)),
            _ => pending
                .response
                .deserialize(&msg.payload)
                .map_err(|e| CallError::Malformed(e.to_string())),
        };
        self.finish(env.dst, msg.client_id, msg.session_id, pending, outcome);
    }
}
