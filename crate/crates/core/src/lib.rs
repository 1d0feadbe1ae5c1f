//! Building blocks for simulating a mixed signal/service vehicle network.
//!
//! - [`signal`]: bit-level frame codec and a virtual broadcast bus.
//! - [`service`]: message framing, discovery, events, methods and fields.
//! - [`exec`]: application manifests and lifecycle.
//! - [`gateway`]: bus-to-service bridging in two modes.
//! - [`safety`]: ASIL determination.
//!
//! The codec and gateway are generic over a [`Scalar`]; aliases for `f64`,
//! `f32` and exact rationals are provided below.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod exec;
pub mod gateway;
pub mod safety;
pub mod scalar;
pub mod service;
pub mod signal;

pub use scalar::Scalar;

/// Logical simulation time.
pub type Tick = u64;

/// Exact scalar used where float rounding would hide codec behaviour.
pub type Rational = num_rational::Ratio<i64>;

/// Name of a simulated node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

pub type SignalDefF64 = signal::SignalDef<f64>;
pub type SignalDefF32 = signal::SignalDef<f32>;
pub type SignalDefRational = signal::SignalDef<Rational>;
pub type FrameDefF64 = signal::FrameDef<f64>;
pub type FrameDefF32 = signal::FrameDef<f32>;
pub type FrameDefRational = signal::FrameDef<Rational>;
pub type GatewayF64 = gateway::Gateway<f64>;
pub type GatewayRational = gateway::Gateway<Rational>;
pub type MappingRuleF64 = gateway::MappingRule<f64>;
pub type UdpAdapterF64 = gateway::UdpAdapter<f64>;
