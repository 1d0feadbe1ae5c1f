//! Service interface descriptions: events, methods and fields.
//!
//! Event ids carry the most significant bit, method ids do not. A field with
//! base id `b` owns getter method `b`, setter method `b + 1` and notifier event
//! `0x8000 | b`, each only when the corresponding flag is set.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::schema::PayloadSchema;

pub const EVENT_ID_FLAG: u16 = 0x8000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterfaceError {
    #[error("service 0x{service_id:04X}: event id 0x{id:04X} must have the high bit set")]
    EventIdRange { service_id: u16, id: u16 },
    #[error("service 0x{service_id:04X}: method id 0x{id:04X} must have the high bit clear")]
    MethodIdRange { service_id: u16, id: u16 },
    #[error("service 0x{service_id:04X}: field base 0x{id:04X} must be below 0x7FFF")]
    FieldIdRange { service_id: u16, id: u16 },
    #[error("service 0x{service_id:04X}: id 0x{id:04X} is used twice")]
    DuplicateId { service_id: u16, id: u16 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventDef {
    pub event_id: u16,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub schema: PayloadSchema,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodDef {
    pub method_id: u16,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub request: PayloadSchema,
    #[serde(default)]
    pub response: PayloadSchema,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDef {
    pub field_id: u16,
    #[serde(default)]
    pub name: String,
    pub schema: PayloadSchema,
    #[serde(default)]
    pub has_getter: bool,
    #[serde(default)]
    pub has_setter: bool,
    #[serde(default)]
    pub has_notifier: bool,
}

impl FieldDef {
    pub fn getter_id(&self) -> u16 {
        self.field_id
    }

    pub fn setter_id(&self) -> u16 {
        self.field_id + 1
    }

    pub fn notifier_id(&self) -> u16 {
        EVENT_ID_FLAG | self.field_id
    }

    fn derived_ids(&self) -> impl Iterator<Item = u16> + '_ {
        [
            self.has_getter.then(|| self.getter_id()),
            self.has_setter.then(|| self.setter_id()),
            self.has_notifier.then(|| self.notifier_id()),
        ]
        .into_iter()
        .flatten()
    }
}

/// What a message id resolves to within one interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Member<'a> {
    Event(&'a EventDef),
    Method(&'a MethodDef),
    FieldGetter(&'a FieldDef),
    FieldSetter(&'a FieldDef),
    FieldNotifier(&'a FieldDef),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceInterfaceDef {
    pub service_id: u16,
    #[serde(default = "default_interface_version")]
    pub interface_version: u8,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub events: Vec<EventDef>,
    #[serde(default)]
    pub methods: Vec<MethodDef>,
    #[serde(default)]
    pub fields: Vec<FieldDef>,
}

fn default_interface_version() -> u8 {
    1
}

impl ServiceInterfaceDef {
    pub fn new(service_id: u16, interface_version: u8) -> Self {
        Self {
            service_id,
            interface_version,
            name: String::new(),
            events: Vec::new(),
            methods: Vec::new(),
            fields: Vec::new(),
        }
    }

    pub fn with_event(mut self, event_id: u16, name: &str, schema: PayloadSchema) -> Self {
        self.events.push(EventDef {
            event_id,
            name: name.to_owned(),
            schema,
        });
        self
    }

    pub fn with_method(
        mut self,
        method_id: u16,
        name: &str,
        request: PayloadSchema,
        response: PayloadSchema,
    ) -> Self {
        self.methods.push(MethodDef {
            method_id,
            name: name.to_owned(),
            request,
            response,
        });
        self
    }

    pub fn with_field(mut self, field: FieldDef) -> Self {
        self.fields.push(field);
        self
    }

    pub fn validate(&self) -> Result<(), InterfaceError> {
        let service_id = self.service_id;
        let mut seen = BTreeSet::new();
        let mut claim = |id: u16| {
            if seen.insert(id) {
                Ok(())
            } else {
                Err(InterfaceError::DuplicateId { service_id, id })
            }
        };
        for e in &self.events {
            if e.event_id & EVENT_ID_FLAG == 0 {
                return Err(InterfaceError::EventIdRange {
                    service_id,
                    id: e.event_id,
                });
            }
            claim(e.event_id)?;
        }
        for m in &self.methods {
            if m.method_id & EVENT_ID_FLAG != 0 {
                return Err(InterfaceError::MethodIdRange {
                    service_id,
                    id: m.method_id,
                });
            }
            claim(m.method_id)?;
        }
        for f in &self.fields {
            if f.field_id >= 0x7FFF {
                return Err(InterfaceError::FieldIdRange {
                    service_id,
                    id: f.field_id,
                });
            }
            for id in f.derived_ids() {
                claim(id)?;
            }
        }
        Ok(())
    }

    pub fn member(&self, id: u16) -> Option<Member<'_>> {
        if let Some(e) = self.events.iter().find(|e| e.event_id == id) {
            return Some(Member::Event(e));
        }
        if let Some(m) = self.methods.iter().find(|m| m.method_id == id) {
            return Some(Member::Method(m));
        }
        self.fields.iter().find_map(|f| {
            if f.has_getter && f.getter_id() == id {
                Some(Member::FieldGetter(f))
            } else if f.has_setter && f.setter_id() == id {
                Some(Member::FieldSetter(f))
            } else if f.has_notifier && f.notifier_id() == id {
                Some(Member::FieldNotifier(f))
            } else {
                None
            }
        })
    }

    /// Payload schema of an event or field notifier id.
    pub fn event_schema(&self, event_id: u16) -> Option<&PayloadSchema> {
        match self.member(event_id)? {
            Member::Event(e) => Some(&e.schema),
            Member::FieldNotifier(f) => Some(&f.schema),
            _ => None,
        }
    }

    pub fn method(&self, method_id: u16) -> Option<&MethodDef> {
        self.methods.iter().find(|m| m.method_id == method_id)
    }

    pub fn field(&self, field_id: u16) -> Option<&FieldDef> {
        self.fields.iter().find(|f| f.field_id == field_id)
    }

    pub fn event_by_name(&self, name: &str) -> Option<&EventDef> {
        self.events.iter().find(|e| e.name == name)
    }
}
