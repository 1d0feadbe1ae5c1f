//! SOME/IP-style message framing.
//!
//! ```text
//!  0               1               2               3
//! +---------------+---------------+---------------+---------------+
//! |          service_id           |           method_id           |
//! +---------------+---------------+---------------+---------------+
//! |                            length                             |
//! +---------------+---------------+---------------+---------------+
//! |           client_id           |          session_id           |
//! +---------------+---------------+---------------+---------------+
//! | protocol_ver  | interface_ver | message_type  |  return_code  |
//! +---------------+---------------+---------------+---------------+
//! |                        payload ...                            |
//! ```
//!
//! Header fields are big-endian; `length` counts every byte after itself.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HEADER_LEN: usize = 16;
/// Bytes covered by `length` before the payload starts.
pub const LENGTH_BASE: u32 = 8;
pub const PROTOCOL_VERSION: u8 = 0x01;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("message truncated: {0} bytes, header needs 16")]
    Truncated(usize),
    #[error("length field {declared} does not match {actual} bytes after it")]
    LengthFieldMismatch { declared: u32, actual: usize },
    #[error("unknown message type 0x{0:02X}")]
    UnknownMessageType(u8),
    #[error("unknown protocol version 0x{0:02X}")]
    UnknownProtocolVersion(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
#[repr(u8)]
pub enum MessageType {
    Request = 0x00,
    RequestNoReturn = 0x01,
    Notification = 0x02,
    Response = 0x80,
    Error = 0x81,
}

impl TryFrom<u8> for MessageType {
    type Error = WireError;

    fn try_from(v: u8) -> Result<Self, WireError> {
        Ok(match v {
            0x00 => MessageType::Request,
            0x01 => MessageType::RequestNoReturn,
            0x02 => MessageType::Notification,
            0x80 => MessageType::Response,
            0x81 => MessageType::Error,
            other => return Err(WireError::UnknownMessageType(other)),
        })
    }
}

/// Return codes used by the middleware.
pub mod return_code {
    pub const E_OK: u8 = 0x00;
    pub const E_NOT_OK: u8 = 0x01;
    pub const E_UNKNOWN_SERVICE: u8 = 0x02;
    pub const E_UNKNOWN_METHOD: u8 = 0x03;
    pub const E_NOT_READY: u8 = 0x04;
    pub const E_WRONG_INTERFACE_VERSION: u8 = 0x08;
    pub const E_MALFORMED_MESSAGE: u8 = 0x09;
    pub const E_WRONG_MESSAGE_TYPE: u8 = 0x0A;
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WireMessage {
    pub service_id: u16,
    pub method_id: u16,
    pub client_id: u16,
    pub session_id: u16,
    pub interface_version: u8,
    pub message_type: MessageType,
    pub return_code: u8,
    pub payload: Vec<u8>,
}

impl WireMessage {
    /// Value of the header's length field.
    pub fn length(&self) -> u32 {
        LENGTH_BASE + self.payload.len() as u32
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&self.service_id.to_be_bytes());
        out.extend_from_slice(&self.method_id.to_be_bytes());
        out.extend_from_slice(&self.length().to_be_bytes());
        out.extend_from_slice(&self.client_id.to_be_bytes());
        out.extend_from_slice(&self.session_id.to_be_bytes());
        out.push(PROTOCOL_VERSION);
        out.push(self.interface_version);
        out.push(self.message_type as u8);
        out.push(self.return_code);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() < HEADER_LEN {
            return Err(WireError::Truncated(bytes.len()));
        }
        let be16 = |at: usize| u16::from_be_bytes([bytes[at], bytes[at + 1]]);
        let declared = u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]);
        let actual = bytes.len() - 8;
        if declared as usize != actual {
            return Err(WireError::LengthFieldMismatch { declared, actual });
        }
        if bytes[12] != PROTOCOL_VERSION {
            return Err(WireError::UnknownProtocolVersion(bytes[12]));
        }
        Ok(Self {
            service_id: be16(0),
            method_id: be16(2),
            client_id: be16(8),
            session_id: be16(10),
            interface_version: bytes[13],
            message_type: MessageType::try_from(bytes[14])?,
            return_code: bytes[15],
            payload: bytes[HEADER_LEN..].to_vec(),
        })
    }
}

pub fn encode_message(msg: &WireMessage) -> Vec<u8> {
    msg.encode()
}

pub fn decode_message(bytes: &[u8]) -> Result<WireMessage, WireError> {
    WireMessage::decode(bytes)
}
