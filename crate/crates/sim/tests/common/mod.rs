#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use eesim::{load_scenario, ScenarioConfig, TraceEvent, TraceKind};
use serde_json::Value as Json;

pub const FIXTURES: [&str; 4] = [
    "minimal",
    "fig5_service_gateway",
    "fig5_signal_gateway",
    "fig5_two_bus",
];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.json"))
}

pub fn fixture(name: &str) -> ScenarioConfig {
    let text = std::fs::read_to_string(fixture_path(name)).unwrap();
    load_scenario(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// `(tick, event_id, first value)` of every notification received by `node`.
pub fn received(trace: &[TraceEvent], node: &str) -> Vec<(u64, u64, Json)> {
    trace
        .iter()
        .filter(|e| e.kind == TraceKind::EvtRecv && e.node.as_str() == node)
        .map(|e| {
            (
                e.tick,
                e.detail_u64("event_id").unwrap(),
                e.detail("values").unwrap()[0].clone(),
            )
        })
        .collect()
}

pub fn count(trace: &[TraceEvent], kind: TraceKind) -> usize {
    trace.iter().filter(|e| e.kind == kind).count()
}

pub fn check_ordering(trace: &[TraceEvent]) -> Result<(), String> {
    for w in trace.windows(2) {
        if (w[0].tick, w[0].seq) >= (w[1].tick, w[1].seq) {
            return Err(format!("({}, {}) is followed by ({}, {})", w[0].tick, w[0].seq, w[1].tick, w[1].seq));
        }
    }
    Ok(())
}

/// Every bus_tx is matched by exactly `attached - 1` bus_rx one tick later.
pub fn check_conservation(trace: &[TraceEvent], config: &ScenarioConfig) -> Result<(), String> {
    let attached = |bus: &str| config.nodes.iter().filter(|n| n.buses.iter().any(|b| b == bus)).count();
    let key = |e: &TraceEvent, sender: &str, at: u64| {
        (
            e.detail("bus").unwrap().as_str().unwrap().to_owned(),
            e.detail_u64("frame_id").unwrap(),
            sender.to_owned(),
            at,
            e.detail("payload").unwrap().as_str().unwrap().to_owned(),
        )
    };
    let mut expected: BTreeMap<_, usize> = BTreeMap::new();
    let mut seen: BTreeMap<_, usize> = BTreeMap::new();
    for e in trace {
        match e.kind {
            TraceKind::BusTx => {
                let k = key(e, e.node.as_str(), e.tick);
                *expected.entry(k.clone()).or_default() += attached(&k.0) - 1;
            }
            TraceKind::BusRx => {
                let sender = e.detail("sender").unwrap().as_str().unwrap();
                let sent_at = e.detail_u64("sent_at").unwrap();
                if e.tick != sent_at + 1 {
                    return Err(format!("bus_rx at {} for a frame sent at {sent_at}", e.tick));
                }
                *seen.entry(key(e, sender, sent_at)).or_default() += 1;
            }
            _ => {}
        }
    }
    // frames sent on the final tick are never delivered
    let last = config.duration.saturating_sub(1);
    expected.retain(|k, n| k.3 < last && *n > 0);
    if expected != seen {
        return Err(format!("expected receptions {expected:?}, saw {seen:?}"));
    }
    Ok(())
}

/// No evt_recv precedes its evt_pub; no method_resp precedes its method_req.
pub fn check_causality(trace: &[TraceEvent]) -> Result<(), String> {
    let mut published: BTreeMap<String, u64> = BTreeMap::new();
    let mut requested: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    let evt_key = |e: &TraceEvent| {
        format!(
            "{}.{}.{}={}",
            e.detail("service_id").unwrap(),
            e.detail("instance_id").unwrap(),
            e.detail("event_id").unwrap(),
            e.detail("values").unwrap()
        )
    };
    for e in trace {
        match e.kind {
            TraceKind::EvtPub => {
                *published.entry(evt_key(e)).or_default() += e.detail_u64("subscribers").unwrap();
            }
            TraceKind::EvtRecv => {
                let slot = published.entry(evt_key(e)).or_default();
                if *slot == 0 {
                    return Err(format!("evt_recv at tick {} without a prior evt_pub: {}", e.tick, evt_key(e)));
                }
                *slot -= 1;
            }
            TraceKind::MethodReq => {
                *requested
                    .entry((e.detail_u64("client_id").unwrap(), e.detail_u64("session_id").unwrap()))
                    .or_default() += 1;
            }
            TraceKind::MethodResp => {
                let k = (e.detail_u64("client_id").unwrap(), e.detail_u64("session_id").unwrap());
                if requested.get(&k).copied().unwrap_or(0) == 0 {
                    return Err(format!("method_resp at tick {} without a prior method_req {k:?}", e.tick));
                }
            }
            _ => {}
        }
    }
    Ok(())
}
