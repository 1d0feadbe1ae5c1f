//! Flat primitive payload schemas, serialized little-endian without padding.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("expected {expected} values, got {actual}")]
    Arity { expected: usize, actual: usize },
    #[error("element `{name}` expects {expected}, got {actual}")]
    Type {
        name: String,
        expected: Primitive,
        actual: Primitive,
    },
    #[error("payload is {actual} bytes, schema needs {expected}")]
    Size { expected: usize, actual: usize },
    #[error("value {value} does not fit {primitive}")]
    OutOfRange { value: String, primitive: Primitive },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Primitive {
    U8,
    U16,
    U32,
    U64,
    I8,
    I16,
    I32,
    I64,
    F32,
    F64,
}

impl Primitive {
    pub const fn size(self) -> usize {
        match self {
            Primitive::U8 | Primitive::I8 => 1,
            Primitive::U16 | Primitive::I16 => 2,
            Primitive::U32 | Primitive::I32 | Primitive::F32 => 4,
            Primitive::U64 | Primitive::I64 | Primitive::F64 => 8,
        }
    }

    pub const fn is_float(self) -> bool {
        matches!(self, Primitive::F32 | Primitive::F64)
    }

    pub fn zero(self) -> Value {
        Value::from_i128(self, 0).expect("zero fits every primitive")
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Primitive::U8 => "u8",
            Primitive::U16 => "u16",
            Primitive::U32 => "u32",
            Primitive::U64 => "u64",
            Primitive::I8 => "i8",
            Primitive::I16 => "i16",
            Primitive::I32 => "i32",
            Primitive::I64 => "i64",
            Primitive::F32 => "f32",
            Primitive::F64 => "f64",
        };
        f.write_str(s)
    }
}

/// A typed primitive value carried in a service payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    U8(u8),
    U16(u16),
    U32(u32),
    U64(u64),
    I8(i8),
    I16(i16),
    I32(i32),
    I64(i64),
    F32(f32),
    F64(f64),
}

impl Value {
    pub fn primitive(&self) -> Primitive {
        match self {
            Value::U8(_) => Primitive::U8,
            Value::U16(_) => Primitive::U16,
            Value::U32(_) => Primitive::U32,
            Value::U64(_) => Primitive::U64,
            Value::I8(_) => Primitive::I8,
            Value::I16(_) => Primitive::I16,
            Value::I32(_) => Primitive::I32,
            Value::I64(_) => Primitive::I64,
            Value::F32(_) => Primitive::F32,
            Value::F64(_) => Primitive::F64,
        }
    }

    /// Exact integer conversion, `None` when `v` is out of range.
    pub fn from_i128(primitive: Primitive, v: i128) -> Option<Value> {
        Some(match primitive {
            Primitive::U8 => Value::U8(v.try_into().ok()?),
            Primitive::U16 => Value::U16(v.try_into().ok()?),
            Primitive::U32 => Value::U32(v.try_into().ok()?),
            Primitive::U64 => Value::U64(v.try_into().ok()?),
            Primitive::I8 => Value::I8(v.try_into().ok()?),
            Primitive::I16 => Value::I16(v.try_into().ok()?),
            Primitive::I32 => Value::I32(v.try_into().ok()?),
            Primitive::I64 => Value::I64(v.try_into().ok()?),
            Primitive::F32 => Value::F32(v as f32),
            Primitive::F64 => Value::F64(v as f64),
        })
    }

    /// Converts a scalar to `primitive`. Integer targets are rounded half
    /// away from zero and range-checked.
    pub fn from_scalar<T: Scalar>(primitive: Primitive, v: T) -> Result<Value, SchemaError> {
        let out_of_range = || SchemaError::OutOfRange {
            value: format!("{v:?}"),
            primitive,
        };
        match primitive {
            Primitive::F32 => v.to_f32().map(Value::F32).ok_or_else(out_of_range),
            Primitive::F64 => v.to_f64().map(Value::F64).ok_or_else(out_of_range),
            _ => v
                .to_raw()
                .and_then(|raw| Value::from_i128(primitive, raw))
                .ok_or_else(out_of_range),
        }
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            Value::U8(v) => v.into(),
            Value::U16(v) => v.into(),
            Value::U32(v) => v.into(),
            Value::U64(v) => v as f64,
            Value::I8(v) => v.into(),
            Value::I16(v) => v.into(),
            Value::I32(v) => v.into(),
            Value::I64(v) => v as f64,
            Value::F32(v) => v.into(),
            Value::F64(v) => v,
        }
    }

    /// Integer view, `None` for floats.
    pub fn as_i128(&self) -> Option<i128> {
        Some(match *self {
            Value::U8(v) => v.into(),
            Value::U16(v) => v.into(),
            Value::U32(v) => v.into(),
            Value::U64(v) => v.into(),
            Value::I8(v) => v.into(),
            Value::I16(v) => v.into(),
            Value::I32(v) => v.into(),
            Value::I64(v) => v.into(),
            Value::F32(_) | Value::F64(_) => return None,
        })
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match *self {
            Value::U8(v) => out.push(v),
            Value::U16(v) => out.extend_from_slice(&v.to_le_bytes()),
            Value::U32(v) => out.extend_from_slice(&v.to_le_bytes()),
            Value::U64(v) => out.extend_from_slice(&v.to_le_bytes()),
            Value::I8(v) => out.extend_from_slice(&v.to_le_bytes()),
            Value::I16(v) => out.extend_from_slice(&v.to_le_bytes()),
            Value::I32(v) => out.extend_from_slice(&v.to_le_bytes()),
            Value::I64(v) => out.extend_from_slice(&v.to_le_bytes()),
            Value::F32(v) => out.extend_from_slice(&v.to_le_bytes()),
            Value::F64(v) => out.extend_from_slice(&v.to_le_bytes()),
        }
    }

    fn read_le(primitive: Primitive, bytes: &[u8]) -> Value {
        macro_rules! rd {
            ($t:ty) => {
                <$t>::from_le_bytes(bytes.try_into().expect("caller slices exact size"))
            };
        }
        match primitive {
            Primitive::U8 => Value::U8(bytes[0]),
            Primitive::U16 => Value::U16(rd!(u16)),
            Primitive::U32 => Value::U32(rd!(u32)),
            Primitive::U64 => Value::U64(rd!(u64)),
            Primitive::I8 => Value::I8(rd!(i8)),
            Primitive::I16 => Value::I16(rd!(i16)),
            Primitive::I32 => Value::I32(rd!(i32)),
            Primitive::I64 => Value::I64(rd!(i64)),
            Primitive::F32 => Value::F32(rd!(f32)),
            Primitive::F64 => Value::F64(rd!(f64)),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::F32(v) => write!(f, "{v}"),
            Value::F64(v) => write!(f, "{v}"),
            other => write!(f, "{}", other.as_i128().expect("integer variant")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaElement {
    pub name: String,
    #[serde(rename = "type")]
    pub primitive: Primitive,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PayloadSchema {
    pub elements: Vec<SchemaElement>,
}

impl PayloadSchema {
    pub fn new<I, S>(elements: I) -> Self
    where
        I: IntoIterator<Item = (S, Primitive)>,
        S: Into<String>,
    {
        Self {
            elements: elements
                .into_iter()
                .map(|(name, primitive)| SchemaElement {
                    name: name.into(),
                    primitive,
                })
                .collect(),
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn wire_size(&self) -> usize {
        self.elements.iter().map(|e| e.primitive.size()).sum()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.elements.iter().position(|e| e.name == name)
    }

    /// Zero value for every element.
    pub fn defaults(&self) -> Vec<Value> {
        self.elements.iter().map(|e| e.primitive.zero()).collect()
    }

    pub fn check(&self, values: &[Value]) -> Result<(), SchemaError> {
        if values.len() != self.elements.len() {
            return Err(SchemaError::Arity {
                expected: self.elements.len(),
                actual: values.len(),
            });
        }
        for (elem, value) in self.elements.iter().zip(values) {
            if value.primitive() != elem.primitive {
                return Err(SchemaError::Type {
                    name: elem.name.clone(),
                    expected: elem.primitive,
                    actual: value.primitive(),
                });
            }
        }
        Ok(())
    }

    pub fn serialize(&self, values: &[Value]) -> Result<Vec<u8>, SchemaError> {
        self.check(values)?;
        let mut out = Vec::with_capacity(self.wire_size());
        for v in values {
            v.write_le(&mut out);
        }
        Ok(out)
    }

    pub fn deserialize(&self, bytes: &[u8]) -> Result<Vec<Value>, SchemaError> {
        if bytes.len() != self.wire_size() {
            return Err(SchemaError::Size {
                expected: self.wire_size(),
                actual: bytes.len(),
            });
        }
        let mut at = 0;
        Ok(self
            .elements
            .iter()
            .map(|e| {
                let n = e.primitive.size();
                let v = Value::read_le(e.primitive, &bytes[at..at + n]);
                at += n;
                v
            })
            .collect())
    }

    /// Pairs element names with values.
    pub fn named<'a>(&'a self, values: &'a [Value]) -> impl Iterator<Item = (&'a str, Value)> {
        self.elements
            .iter()
            .zip(values)
            .map(|(e, v)| (e.name.as_str(), *v))
    }
}
