//! Signal-oriented communication: bit-level signal layout inside bus frames
//! and a broadcast virtual bus.
//!
//! Little-endian signals use LSB0 ("Intel") numbering where `start_bit` names
//! the least significant bit. Big-endian signals use the DBC "Motorola"
//! sawtooth numbering where `start_bit` names the most significant bit and the
//! signal continues at bit 7 of the following byte once bit 0 is passed.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::{NodeId, Tick};

/// Largest start bit accepted for a signal (64-byte payloads).
pub const MAX_START_BIT: u16 = 511;
/// Largest frame payload in bytes.
pub const MAX_PAYLOAD_LEN: usize = 64;
/// Frame identifiers are 29-bit.
pub const MAX_FRAME_ID: u32 = 0x1FFF_FFFF;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignalError {
    #[error("invalid signal `{signal}`: {reason}")]
    InvalidSignal { signal: String, reason: String },
    #[error("invalid frame 0x{frame_id:X}: {reason}")]
    InvalidFrame { frame_id: u32, reason: String },
    #[error("raw value {raw} of signal `{signal}` does not fit {bits} bits")]
    Range {
        signal: String,
        raw: String,
        bits: u8,
    },
    #[error("signal `{signal}` exceeds a payload of {payload_len} bytes")]
    Layout { signal: String, payload_len: usize },
    #[error("frame 0x{frame_id:X} has no signal `{signal}`")]
    UnknownSignal { frame_id: u32, signal: String },
    #[error("frame id mismatch: expected 0x{expected:X}, got 0x{actual:X}")]
    FrameIdMismatch { expected: u32, actual: u32 },
    #[error("payload length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("node `{node}` is not attached to bus `{bus}`")]
    NotAttached { bus: String, node: NodeId },
}

pub type Result<T, E = SignalError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ByteOrder {
    LittleEndian,
    BigEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Unsigned,
    Signed,
}

/// One contiguous run of signal bits within a single payload byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Segment {
    byte: usize,
    /// Lowest bit of the run inside the byte.
    bit_offset: u8,
    width: u8,
    /// Position of the run's lowest bit inside the raw value.
    value_shift: u8,
}

impl Segment {
    fn mask(&self) -> u8 {
        (((1u16 << self.width) - 1) as u8) << self.bit_offset
    }
}

/// Layout and scaling of one signal inside a frame payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct SignalDef<T> {
    pub name: String,
    pub start_bit: u16,
    pub bit_length: u8,
    pub byte_order: ByteOrder,
    #[serde(default = "unsigned")]
    pub value_kind: ValueKind,
    #[serde(default = "T::one")]
    pub scale: T,
    #[serde(default = "T::zero")]
    pub offset: T,
}

fn unsigned() -> ValueKind {
    ValueKind::Unsigned
}

impl<T: Scalar> SignalDef<T> {
    pub fn new(
        name: impl Into<String>,
        start_bit: u16,
        bit_length: u8,
        byte_order: ByteOrder,
        value_kind: ValueKind,
        scale: T,
        offset: T,
    ) -> Result<Self> {
        let def = Self {
            name: name.into(),
            start_bit,
            bit_length,
            byte_order,
            value_kind,
            scale,
            offset,
        };
        def.validate()?;
        Ok(def)
    }

    /// Unscaled signal: `scale = 1`, `offset = 0`.
    pub fn raw(
        name: impl Into<String>,
        start_bit: u16,
        bit_length: u8,
        byte_order: ByteOrder,
        value_kind: ValueKind,
    ) -> Result<Self> {
        Self::new(
            name,
            start_bit,
            bit_length,
            byte_order,
            value_kind,
            T::one(),
            T::zero(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| SignalError::InvalidSignal {
            signal: self.name.clone(),
            reason: reason.to_owned(),
        };
        if !(1..=64).contains(&self.bit_length) {
            return Err(invalid("bit_length must be within 1..=64"));
        }
        if self.start_bit > MAX_START_BIT {
            return Err(invalid("start_bit must be within 0..=511"));
        }
        if self.scale.is_zero() {
            return Err(invalid("scale must be non-zero"));
        }
        Ok(())
    }

    fn segments(&self) -> Vec<Segment> {
        let mut segments = Vec::with_capacity(9);
        let mut byte = usize::from(self.start_bit / 8);
        let mut bit = (self.start_bit % 8) as u8;
        let mut remaining = self.bit_length;
        match self.byte_order {
            ByteOrder::LittleEndian => {
                let mut value_shift = 0u8;
                while remaining > 0 {
                    let width = remaining.min(8 - bit);
                    segments.push(Segment {
                        byte,
                        bit_offset: bit,
                        width,
                        value_shift,
                    });
                    value_shift += width;
                    remaining -= width;
                    byte += 1;
                    bit = 0;
                }
            }
            ByteOrder::BigEndian => {
                // Walk from the MSB downwards, the first run carries the top bits.
                while remaining > 0 {
                    let width = remaining.min(bit + 1);
                    remaining -= width;
                    segments.push(Segment {
                        byte,
                        bit_offset: bit + 1 - width,
                        width,
                        value_shift: remaining,
                    });
                    byte += 1;
                    bit = 7;
                }
            }
        }
        segments
    }

    /// Number of payload bytes needed to hold the signal.
    pub fn required_len(&self) -> usize {
        self.segments().iter().map(|s| s.byte + 1).max().unwrap_or(0)
    }

    /// Payload bit indices (`byte * 8 + bit`, LSB0) covered by the signal.
    pub fn occupied_bits(&self) -> Vec<usize> {
        let mut bits = Vec::with_capacity(usize::from(self.bit_length));
        for seg in self.segments() {
            for b in 0..seg.width {
                bits.push(seg.byte * 8 + usize::from(seg.bit_offset + b));
            }
        }
        bits.sort_unstable();
        bits
    }

    fn check_span(&self, payload_len: usize) -> Result<()> {
        if self.required_len() > payload_len {
            return Err(SignalError::Layout {
                signal: self.name.clone(),
                payload_len,
            });
        }
        Ok(())
    }

    fn raw_bounds(&self) -> (i128, i128) {
        let bits = u32::from(self.bit_length);
        match self.value_kind {
            ValueKind::Unsigned => (0, (1i128 << bits) - 1),
            ValueKind::Signed => (-(1i128 << (bits - 1)), (1i128 << (bits - 1)) - 1),
        }
    }

    /// Physical value to raw integer, rounding half away from zero.
    pub fn to_raw(&self, physical: T) -> Result<i128> {
        let scaled = (physical - self.offset) / self.scale;
        let raw = scaled.to_raw().ok_or_else(|| SignalError::Range {
            signal: self.name.clone(),
            raw: format!("{scaled:?}"),
            bits: self.bit_length,
        })?;
        let (lo, hi) = self.raw_bounds();
        if raw < lo || raw > hi {
            return Err(SignalError::Range {
                signal: self.name.clone(),
                raw: raw.to_string(),
                bits: self.bit_length,
            });
        }
        Ok(raw)
    }

    /// Raw integer to physical value: `raw * scale + offset`.
    pub fn to_physical(&self, raw: i128) -> Result<T> {
        let raw_value = T::from_raw(raw).ok_or_else(|| SignalError::Range {
            signal: self.name.clone(),
            raw: raw.to_string(),
            bits: self.bit_length,
        })?;
        Ok(raw_value * self.scale + self.offset)
    }

    /// The value `physical` becomes after a pack/unpack cycle.
    pub fn quantize(&self, physical: T) -> Result<T> {
        self.to_physical(self.to_raw(physical)?)
    }

    /// Writes a raw integer into the signal's bits, leaving every other bit untouched.
    pub fn pack_raw(&self, payload: &mut [u8], raw: i128) -> Result<()> {
        self.check_span(payload.len())?;
        let (lo, hi) = self.raw_bounds();
        if raw < lo || raw > hi {
            return Err(SignalError::Range {
                signal: self.name.clone(),
                raw: raw.to_string(),
                bits: self.bit_length,
            });
        }
        // two's complement truncation to bit_length
        let bits = raw as u64;
        for seg in self.segments() {
            let mask = seg.mask();
            let chunk = ((bits >> seg.value_shift) as u8) << seg.bit_offset;
            payload[seg.byte] = (payload[seg.byte] & !mask) | (chunk & mask);
        }
        Ok(())
    }

    /// Reads the signal's raw integer, sign-extended for signed signals.
    pub fn unpack_raw(&self, payload: &[u8]) -> Result<i128> {
        self.check_span(payload.len())?;
        let mut bits = 0u64;
        for seg in self.segments() {
            let chunk = (payload[seg.byte] & seg.mask()) >> seg.bit_offset;
            bits |= u64::from(chunk) << seg.value_shift;
        }
        let len = u32::from(self.bit_length);
        Ok(match self.value_kind {
            ValueKind::Unsigned => i128::from(bits),
            ValueKind::Signed => {
                let shift = 64 - len;
                i128::from(((bits << shift) as i64) >> shift)
            }
        })
    }

    pub fn pack(&self, payload: &mut [u8], physical: T) -> Result<()> {
        self.check_span(payload.len())?;
        let raw = self.to_raw(physical)?;
        self.pack_raw(payload, raw)
    }

    pub fn unpack(&self, payload: &[u8]) -> Result<T> {
        let raw = self.unpack_raw(payload)?;
        self.to_physical(raw)
    }
}

/// Returns a copy of `payload` with `physical` packed into `sig`'s bits.
pub fn pack_signal<T: Scalar>(payload: &[u8], sig: &SignalDef<T>, physical: T) -> Result<Vec<u8>> {
    let mut out = payload.to_vec();
    sig.pack(&mut out, physical)?;
    Ok(out)
}

pub fn unpack_signal<T: Scalar>(payload: &[u8], sig: &SignalDef<T>) -> Result<T> {
    sig.unpack(payload)
}

/// Frame layout registered on a bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct FrameDef<T> {
    pub frame_id: u32,
    pub payload_length: usize,
    pub signals: Vec<SignalDef<T>>,
    /// Transmission period in ticks; `None` means event-driven.
    #[serde(default)]
    pub cycle_time: Option<u64>,
}

impl<T: Scalar> FrameDef<T> {
    pub fn new(
        frame_id: u32,
        payload_length: usize,
        signals: Vec<SignalDef<T>>,
        cycle_time: Option<u64>,
    ) -> Result<Self> {
        let def = Self {
            frame_id,
            payload_length,
            signals,
            cycle_time,
        };
        def.validate()?;
        Ok(def)
    }

    /// Checks id range, payload length, signal fit and bit overlap.
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| SignalError::InvalidFrame {
            frame_id: self.frame_id,
            reason,
        };
        if self.frame_id > MAX_FRAME_ID {
            return Err(invalid("frame id exceeds 29 bits".into()));
        }
        if !(1..=MAX_PAYLOAD_LEN).contains(&self.payload_length) {
            return Err(invalid("payload_length must be within 1..=64".into()));
        }
        if self.cycle_time == Some(0) {
            return Err(invalid("cycle_time must be positive".into()));
        }
        let mut used = [0u64; MAX_PAYLOAD_LEN / 8];
        let mut names = BTreeSet::new();
        for sig in &self.signals {
            sig.validate()?;
            sig.check_span(self.payload_length)?;
            if !names.insert(sig.name.as_str()) {
                return Err(invalid(format!("duplicate signal `{}`", sig.name)));
            }
            let mut mask = [0u64; MAX_PAYLOAD_LEN / 8];
            for bit in sig.occupied_bits() {
                mask[bit / 64] |= 1 << (bit % 64);
            }
            if used.iter().zip(&mask).any(|(u, m)| u & m != 0) {
                return Err(invalid(format!("signal `{}` overlaps another signal", sig.name)));
            }
            for (u, m) in used.iter_mut().zip(&mask) {
                *u |= m;
            }
        }
        Ok(())
    }

    pub fn signal(&self, name: &str) -> Option<&SignalDef<T>> {
        self.signals.iter().find(|s| s.name == name)
    }

    /// Packs `values` onto a zeroed payload; unnamed signals stay at raw 0.
    pub fn encode_payload(&self, values: &BTreeMap<String, T>) -> Result<Vec<u8>> {
        let mut payload = vec![0u8; self.payload_length];
        for (name, value) in values {
            let sig = self.signal(name).ok_or_else(|| SignalError::UnknownSignal {
                frame_id: self.frame_id,
                signal: name.clone(),
            })?;
            sig.pack(&mut payload, *value)?;
        }
        Ok(payload)
    }

    pub fn decode_payload(&self, payload: &[u8]) -> Result<BTreeMap<String, T>> {
        if payload.len() != self.payload_length {
            return Err(SignalError::LengthMismatch {
                expected: self.payload_length,
                actual: payload.len(),
            });
        }
        self.signals
            .iter()
            .map(|sig| Ok((sig.name.clone(), sig.unpack(payload)?)))
            .collect()
    }
}

/// A frame on the wire of a [`VirtualBus`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusFrame {
    pub frame_id: u32,
    pub payload: Vec<u8>,
    pub sent_at: Tick,
    pub sender: NodeId,
}

pub fn encode_frame<T: Scalar>(
    def: &FrameDef<T>,
    values: &BTreeMap<String, T>,
    sender: NodeId,
    sent_at: Tick,
) -> Result<BusFrame> {
    Ok(BusFrame {
        frame_id: def.frame_id,
        payload: def.encode_payload(values)?,
        sent_at,
        sender,
    })
}

pub fn decode_frame<T: Scalar>(def: &FrameDef<T>, frame: &BusFrame) -> Result<BTreeMap<String, T>> {
    if frame.frame_id != def.frame_id {
        return Err(SignalError::FrameIdMismatch {
            expected: def.frame_id,
            actual: frame.frame_id,
        });
    }
    def.decode_payload(&frame.payload)
}

/// Acknowledgment returned by [`VirtualBus::send`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusAck {
    pub deliver_at: Tick,
    pub receivers: usize,
}

/// A frame handed to the receiving nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusDelivery {
    pub frame: BusFrame,
    pub delivered_at: Tick,
    /// Every attached node except the sender, in ascending order.
    pub receivers: Vec<NodeId>,
}

/// Lossless broadcast medium with a fixed one-tick latency.
#[derive(Debug, Clone, Default)]
pub struct VirtualBus {
    name: String,
    attached: BTreeSet<NodeId>,
    in_flight: VecDeque<BusFrame>,
}

impl VirtualBus {
    pub const LATENCY: Tick = 1;

    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Self::default()
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn attach(&mut self, node: impl Into<NodeId>) {
        self.attached.insert(node.into());
    }

    pub fn detach(&mut self, node: &NodeId) -> bool {
        self.attached.remove(node)
    }

    pub fn is_attached(&self, node: &NodeId) -> bool {
        self.attached.contains(node)
    }

    pub fn attached_nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.attached.iter()
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    pub fn send(&mut self, frame: BusFrame) -> Result<BusAck> {
        if !self.attached.contains(&frame.sender) {
            return Err(SignalError::NotAttached {
                bus: self.name.clone(),
                node: frame.sender,
            });
        }
        let ack = BusAck {
            deliver_at: frame.sent_at + Self::LATENCY,
            receivers: self.attached.len() - 1,
        };
        // stable insert keeps FIFO order among frames sent on the same tick
        let idx = self.in_flight.partition_point(|f| f.sent_at <= frame.sent_at);
        self.in_flight.insert(idx, frame);
        Ok(ack)
    }

    /// Removes and returns every frame due at or before `now`, in send order.
    pub fn deliver(&mut self, now: Tick) -> Vec<BusDelivery> {
        let mut out = Vec::new();
        while let Some(front) = self.in_flight.front() {
            if front.sent_at + Self::LATENCY > now {
                break;
            }
            let frame = self.in_flight.pop_front().expect("front exists");
            let receivers = self
                .attached
                .iter()
                .filter(|n| **n != frame.sender)
                .cloned()
                .collect();
            out.push(BusDelivery {
                delivered_at: frame.sent_at + Self::LATENCY,
                frame,
                receivers,
            });
        }
        out
    }
}

pub fn bus_send(bus: &mut VirtualBus, frame: BusFrame) -> Result<BusAck> {
    bus.send(frame)
}
