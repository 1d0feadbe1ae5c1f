//! Offer/find bookkeeping for service instances.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{NodeId, Tick};

/// TTL value that never expires.
pub const TTL_INFINITE: u32 = 0x00FF_FFFF;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Endpoint {
    pub node: NodeId,
    pub port: u16,
}

impl Endpoint {
    pub fn new(node: impl Into<NodeId>, port: u16) -> Self {
        Self {
            node: node.into(),
            port,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.node, self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ServiceInstance {
    pub service_id: u16,
    pub instance_id: u16,
    pub interface_version: u8,
    pub endpoint: Endpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SdKind {
    Offer,
    Find,
    Subscribe,
    SubscribeAck,
}

/// A discovery entry, kept for observability of the protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SdEntry {
    pub tick: Tick,
    pub kind: SdKind,
    pub service_id: u16,
    /// `None` for wildcard finds.
    pub instance_id: Option<u16>,
    pub event_id: Option<u16>,
    pub ttl: u32,
    pub origin: Endpoint,
}

impl SdEntry {
    pub fn is_stop_offer(&self) -> bool {
        self.kind == SdKind::Offer && self.ttl == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Offer {
    instance: ServiceInstance,
    /// Exclusive: the offer is visible while `now < expires_at`.
    expires_at: Option<Tick>,
}

impl Offer {
    fn alive(&self, now: Tick) -> bool {
        self.expires_at.is_none_or(|t| now < t)
    }
}

/// Result of [`Registry::offer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OfferOutcome {
    Offered,
    Renewed,
    /// Stop-offer; `false` when nothing was offered.
    Withdrawn(bool),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuplicateInstance {
    pub service_id: u16,
    pub instance_id: u16,
    pub existing: Endpoint,
}

pub fn expiry(now: Tick, ttl: u32) -> Option<Tick> {
    (ttl != TTL_INFINITE).then(|| now + Tick::from(ttl))
}

/// Central offer table keyed by `(service_id, instance_id)`.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    offers: BTreeMap<(u16, u16), Offer>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Offers, renews or (with `ttl == 0`) withdraws an instance.
    pub fn offer(
        &mut self,
        instance: ServiceInstance,
        ttl: u32,
        now: Tick,
    ) -> Result<OfferOutcome, DuplicateInstance> {
        let key = (instance.service_id, instance.instance_id);
        if let Some(existing) = self.offers.get(&key) {
            if existing.alive(now) && existing.instance.endpoint != instance.endpoint {
                return Err(DuplicateInstance {
                    service_id: key.0,
                    instance_id: key.1,
                    existing: existing.instance.endpoint.clone(),
                });
            }
        }
        if ttl == 0 {
            return Ok(OfferOutcome::Withdrawn(self.offers.remove(&key).is_some()));
        }
        let renewed = self.offers.get(&key).is_some_and(|o| o.alive(now));
        self.offers.insert(
            key,
            Offer {
                instance,
                expires_at: expiry(now, ttl),
            },
        );
        Ok(if renewed {
            OfferOutcome::Renewed
        } else {
            OfferOutcome::Offered
        })
    }

    /// Drops offers whose TTL ran out, returning them.
    pub fn purge(&mut self, now: Tick) -> Vec<ServiceInstance> {
        let expired: Vec<_> = self
            .offers
            .iter()
            .filter(|(_, o)| !o.alive(now))
            .map(|(k, _)| *k)
            .collect();
        expired
            .into_iter()
            .filter_map(|k| self.offers.remove(&k).map(|o| o.instance))
            .collect()
    }

    /// Unexpired instances of `service_id`, sorted by `(instance_id, endpoint)`.
    pub fn find(&self, service_id: u16, instance_id: Option<u16>, now: Tick) -> Vec<ServiceInstance> {
        let mut found: Vec<_> = self
            .offers
            .range((service_id, 0)..=(service_id, u16::MAX))
            .filter(|((_, inst), o)| instance_id.is_none_or(|i| i == *inst) && o.alive(now))
            .map(|(_, o)| o.instance.clone())
            .collect();
        found.sort_by(|a, b| (a.instance_id, &a.endpoint).cmp(&(b.instance_id, &b.endpoint)));
        found
    }

    pub fn lookup(&self, service_id: u16, instance_id: u16, now: Tick) -> Option<&ServiceInstance> {
        self.offers
            .get(&(service_id, instance_id))
            .filter(|o| o.alive(now))
            .map(|o| &o.instance)
    }

    /// Unexpired offers originating from `node`.
    pub fn offers_from<'a>(
        &'a self,
        node: &'a NodeId,
        now: Tick,
    ) -> impl Iterator<Item = &'a ServiceInstance> + 'a {
        self.offers
            .values()
            .filter(move |o| o.alive(now) && &o.instance.endpoint.node == node)
            .map(|o| &o.instance)
    }

    pub fn len(&self) -> usize {
        self.offers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offers.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(instance_id: u16, node: &str) -> ServiceInstance {
        ServiceInstance {
            service_id: 0x1234,
            instance_id,
            interface_version: 1,
            endpoint: Endpoint::new(node, 30490),
        }
    }

    #[test]
    fn offer_then_find() {
        let mut reg = Registry::new();
        assert!(reg.find(0x1234, None, 0).is_empty());
        assert_eq!(reg.offer(inst(1, "a"), TTL_INFINITE, 0), Ok(OfferOutcome::Offered));
        assert_eq!(reg.find(0x1234, Some(1), 100), vec![inst(1, "a")]);
        assert!(reg.find(0x9999, None, 0).is_empty());
    }

    #[test]
    fn ttl_expiry_is_exclusive() {
        let mut reg = Registry::new();
        reg.offer(inst(1, "a"), 10, 0).unwrap();
        assert_eq!(reg.find(0x1234, None, 9).len(), 1);
        assert!(reg.find(0x1234, None, 10).is_empty());
        assert!(reg.find(0x1234, None, 11).is_empty());
        assert_eq!(reg.purge(11), vec![inst(1, "a")]);
        assert!(reg.is_empty());
    }

    #[test]
    fn stop_offer_removes() {
        let mut reg = Registry::new();
        reg.offer(inst(1, "a"), TTL_INFINITE, 0).unwrap();
        assert_eq!(reg.offer(inst(1, "a"), 0, 1), Ok(OfferOutcome::Withdrawn(true)));
        assert!(reg.find(0x1234, None, 1).is_empty());
        assert_eq!(reg.offer(inst(1, "a"), 0, 2), Ok(OfferOutcome::Withdrawn(false)));
    }

    #[test]
    fn duplicates_and_renewal() {
        let mut reg = Registry::new();
        reg.offer(inst(1, "a"), 5, 0).unwrap();
        assert!(reg.offer(inst(1, "b"), 5, 1).is_err());
        assert_eq!(reg.offer(inst(1, "a"), 5, 3), Ok(OfferOutcome::Renewed));
        assert_eq!(reg.find(0x1234, None, 7).len(), 1);
        // once expired, another endpoint may take over
        assert_eq!(reg.offer(inst(1, "b"), 5, 8), Ok(OfferOutcome::Offered));
    }

    #[test]
    fn wildcard_find_is_sorted() {
        let mut reg = Registry::new();
        reg.offer(inst(2, "a"), TTL_INFINITE, 0).unwrap();
        reg.offer(inst(1, "b"), TTL_INFINITE, 0).unwrap();
        let ids: Vec<_> = reg.find(0x1234, None, 0).iter().map(|i| i.instance_id).collect();
        assert_eq!(ids, [1, 2]);
        assert_eq!(reg.offers_from(&"a".into(), 0).count(), 1);
    }
}
