//! Service-oriented communication: interfaces, payload schemas, the wire
//! codec, discovery and the proxy/skeleton runtime.

pub mod discovery;
pub mod interface;
pub mod middleware;
pub mod schema;
pub mod wire;

pub use discovery::{Endpoint, OfferOutcome, Registry, SdEntry, SdKind, ServiceInstance, TTL_INFINITE};
pub use interface::{EventDef, FieldDef, InterfaceError, Member, MethodDef, ServiceInterfaceDef};
pub use middleware::{
    CallError, CallId, CallOutcome, Envelope, MethodHandler, Middleware, MwEvent, Notification,
    ProxyId, ServiceError, SubscriptionHandle, DEFAULT_METHOD_TIMEOUT,
};
pub use schema::{PayloadSchema, Primitive, SchemaElement, SchemaError, Value};
pub use wire::{decode_message, encode_message, return_code, MessageType, WireError, WireMessage, HEADER_LEN};
