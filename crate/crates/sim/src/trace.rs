//! Trace events and their JSON Lines form.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;

use eesim_core::{NodeId, Tick};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    BusTx,
    BusRx,
    SdOffer,
    SdFind,
    SdSubscribe,
    EvtPub,
    EvtRecv,
    MethodReq,
    MethodResp,
    FieldSet,
    AppState,
    GwRoute,
    GwDrop,
    /// A handler or stimulus failed; the run continues.
    Fault,
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string"))
    }
}

/// One line of the trace. Field order here is the key order on disk;
/// `details` keys are sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub tick: Tick,
    pub seq: u32,
    pub node: NodeId,
    pub kind: TraceKind,
    pub details: Map<String, Json>,
}

impl TraceEvent {
    pub fn detail(&self, key: &str) -> Option<&Json> {
        self.details.get(key)
    }

    pub fn detail_u64(&self, key: &str) -> Option<u64> {
        self.details.get(key).and_then(Json::as_u64)
    }
}

/// Assigns `(tick, seq)` as events arrive.
#[derive(Debug, Default, Clone)]
pub struct TraceLog {
    events: Vec<TraceEvent>,
}

impl TraceLog {
    pub fn push(&mut self, tick: Tick, node: &NodeId, kind: TraceKind, details: Map<String, Json>) {
        let seq = match self.events.last() {
            Some(last) if last.tick == tick => last.seq + 1,
            Some(last) => {
                assert!(last.tick < tick, "trace ticks must not go backwards");
                0
            }
            None => 0,
        };
        self.events.push(TraceEvent {
            tick,
            seq,
            node: node.clone(),
            kind,
            details,
        });
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<TraceEvent> {
        self.events
    }
}

/// Builds a details map from `key => value` pairs.
#[macro_export]
macro_rules! details {
    ($($k:expr => $v:expr),* $(,)?) => {{
        #[allow(unused_mut)]
        let mut m = serde_json::Map::new();
        $( m.insert(String::from($k), serde_json::json!($v)); )*
        m
    }};
}

pub fn write_jsonl<W: Write>(events: &[TraceEvent], mut out: W) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn to_jsonl(events: &[TraceEvent]) -> String {
    let mut buf = Vec::new();
    write_jsonl(events, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn export_trace(events: &[TraceEvent], destination: &Path) -> io::Result<()> {
    write_jsonl(events, BufWriter::new(File::create(destination)?))
}

pub fn parse_jsonl<R: BufRead>(input: R) -> io::Result<Vec<TraceEvent>> {
    input
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| {
            serde_json::from_str(&l?).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
        })
        .collect()
}
