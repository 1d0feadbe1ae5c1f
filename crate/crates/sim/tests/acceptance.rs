//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Randomized criteria use fixed ChaCha seeds so the run is reproducible.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{fixture, received, FIXTURES};
use eesim::{export_trace, run, TraceKind};
use eesim_core::exec::{AppManifest, AppState, ClassicEcu, ExecutionManager, Version};
use eesim_core::safety::{determine_asil, AsilLevel, Controllability, Exposure, Severity};
use eesim_core::service::{
    decode_message, encode_message, CallError, CallId, Endpoint, MessageType, MethodHandler, Middleware, MwEvent,
    PayloadSchema, Primitive, ServiceError, ServiceInstance, ServiceInterfaceDef, SubscriptionHandle, Value,
    WireMessage, HEADER_LEN, TTL_INFINITE,
};
use eesim_core::signal::{ByteOrder, SignalDef, ValueKind};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const ASIL_TIME_LIMIT: Duration = Duration::from_secs(1);
const CODEC_TIME_LIMIT: Duration = Duration::from_secs(10);
const CODEC_CASES: usize = 10_000;
const WIRE_CASES: usize = 10_000;
/// Relative tolerance on scaled float round trips; raw integers must match exactly.
const CODEC_REL_TOL: f64 = 1e-9;
const SUBSCRIPTION_SEQUENCES: u64 = 500;
const CORRELATION_RUNS: u64 = 300;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    }};
}

// ---------------------------------------------------------------- 1

/// Transcribed cell by cell: rows S1E1..S3E4, columns C1..C3. `None` is the A/QM cell.
const GOLDEN_ASIL: [[Option<AsilLevel>; 3]; 12] = {
    use AsilLevel::*;
    [
        [Some(QM), Some(QM), Some(QM)],
        [Some(QM), Some(QM), Some(QM)],
        [Some(QM), Some(QM), Some(A)],
        [Some(QM), Some(A), Some(B)],
        [Some(QM), Some(QM), Some(QM)],
        [Some(QM), Some(QM), Some(A)],
        [Some(QM), Some(A), Some(B)],
        [Some(A), Some(B), Some(C)],
        [Some(QM), Some(QM), None],
        [Some(QM), Some(A), Some(B)],
        [Some(A), Some(B), Some(C)],
        [Some(B), Some(C), Some(D)],
    ]
};

fn closed_form(s: u8, e: u8, c: u8) -> AsilLevel {
    AsilLevel::ALL[usize::from((s + e + c).saturating_sub(6))]
}

fn asil_table() -> Outcome {
    let start = Instant::now();
    let mut cells = 0;
    let mut oracle_agrees = 0;
    for (si, s) in Severity::ALL.iter().copied().enumerate() {
        for (ei, e) in Exposure::ALL.iter().copied().enumerate() {
            for (ci, c) in Controllability::ALL.iter().copied().enumerate() {
                let got = determine_asil(s, e, c, false);
                let relaxed = determine_asil(s, e, c, true);
                match GOLDEN_ASIL[si * 4 + ei][ci] {
                    Some(level) => {
                        ensure!(got == level && relaxed == level, "{s}/{e}/{c}: got {got}/{relaxed}, table {level}");
                        let oracle = closed_form(s.rank(), e.rank(), c.rank());
                        ensure!(oracle == got, "{s}/{e}/{c}: closed form {oracle}, got {got}");
                        oracle_agrees += 1;
                    }
                    None => ensure!(
                        got == AsilLevel::A && relaxed == AsilLevel::QM,
                        "{s}/{e}/{c}: A/QM cell gave {got} and {relaxed}"
                    ),
                }
                cells += 1;
            }
        }
    }
    let spot = [
        ((Severity::S3, Exposure::E4, Controllability::C3), AsilLevel::D),
        ((Severity::S2, Exposure::E4, Controllability::C2), AsilLevel::B),
        ((Severity::S1, Exposure::E4, Controllability::C3), AsilLevel::B),
    ];
    for ((s, e, c), want) in spot {
        ensure!(determine_asil(s, e, c, false) == want, "{s}/{e}/{c} is not {want}");
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < ASIL_TIME_LIMIT, "took {elapsed:?}, limit {ASIL_TIME_LIMIT:?}");
    Ok(format!(
        "{cells}/36 cells match, closed form agrees on {oracle_agrees}, A/QM cell gives A and QM with the flag ({} ms < {} ms)",
        elapsed.as_millis(),
        ASIL_TIME_LIMIT.as_millis()
    ))
}

// ---------------------------------------------------------------- 2

/// Payload bits (LSB0 `byte * 8 + bit`) of value bits 0..len, walked one bit at a time.
fn bit_positions(order: ByteOrder, start: usize, len: usize, payload_len: usize) -> Option<Vec<usize>> {
    let mut positions = match order {
        ByteOrder::LittleEndian => (start..start + len).collect::<Vec<_>>(),
        ByteOrder::BigEndian => {
            let mut p = start;
            let mut from_msb = vec![p];
            for _ in 1..len {
                p = if p.is_multiple_of(8) { p + 15 } else { p.checked_sub(1)? };
                from_msb.push(p);
            }
            from_msb
        }
    };
    if order == ByteOrder::BigEndian {
        positions.reverse();
    }
    positions.iter().all(|p| *p < payload_len * 8).then_some(positions)
}

fn bit(payload: &[u8], pos: usize) -> bool {
    payload[pos / 8] >> (pos % 8) & 1 == 1
}

fn codec_roundtrip() -> Outcome {
    const SCALES: [f64; 5] = [1.0, 0.5, 0.25, 0.1, 0.01];
    const OFFSETS: [f64; 3] = [0.0, -40.0, 100.0];
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0DEC);
    let start = Instant::now();
    let mut per_order = BTreeMap::new();
    let mut scaled = 0;
    for case in 0..CODEC_CASES {
        let order = if rng.gen() { ByteOrder::LittleEndian } else { ByteOrder::BigEndian };
        let kind = if rng.gen() { ValueKind::Unsigned } else { ValueKind::Signed };
        let payload_len = rng.gen_range(1..=64usize);
        let len = rng.gen_range(1..=(payload_len * 8).min(64));
        let (start_bit, positions) = loop {
            let s = rng.gen_range(0..payload_len * 8);
            if let Some(p) = bit_positions(order, s, len, payload_len) {
                break (s, p);
            }
        };
        let (lo, hi) = match kind {
            ValueKind::Unsigned => (0i128, (1i128 << len) - 1),
            ValueKind::Signed => (-(1i128 << (len - 1)), (1i128 << (len - 1)) - 1),
        };
        let raw = rng.gen_range(lo..=hi);
        let background: Vec<u8> = (0..payload_len).map(|_| rng.gen()).collect();
        let mut payload = background.clone();
        let ctx = || format!("case {case}: {order:?} {kind:?} start {start_bit} len {len} in {payload_len} bytes");

        if len <= 32 {
            let scale = *SCALES.choose(&mut rng).unwrap();
            let offset = *OFFSETS.choose(&mut rng).unwrap();
            let sig = SignalDef::new("s", start_bit as u16, len as u8, order, kind, scale, offset)
                .map_err(|e| format!("{}: {e}", ctx()))?;
            let quantized = raw as f64 * scale + offset;
            let physical = quantized + rng.gen_range(-0.45..0.45) * scale;
            sig.pack(&mut payload, physical).map_err(|e| format!("{}: {e}", ctx()))?;
            let back = sig.unpack(&payload).map_err(|e| format!("{}: {e}", ctx()))?;
            ensure!(
                (back - quantized).abs() <= CODEC_REL_TOL * quantized.abs().max(1.0),
                "{}: packed {physical}, read {back}, expected {quantized}",
                ctx()
            );
            ensure!(sig.unpack_raw(&payload) == Ok(raw), "{}: raw mismatch", ctx());
            scaled += 1;
        } else {
            let sig = SignalDef::<f64>::raw("s", start_bit as u16, len as u8, order, kind)
                .map_err(|e| format!("{}: {e}", ctx()))?;
            sig.pack_raw(&mut payload, raw).map_err(|e| format!("{}: {e}", ctx()))?;
            ensure!(sig.unpack_raw(&payload) == Ok(raw), "{}: raw {raw} did not survive", ctx());
        }
        let occupied: BTreeSet<usize> = positions.iter().copied().collect();
        for p in 0..payload_len * 8 {
            if !occupied.contains(&p) {
                ensure!(bit(&payload, p) == bit(&background, p), "{}: bit {p} disturbed", ctx());
            }
        }
        for (i, p) in positions.iter().enumerate() {
            ensure!(bit(&payload, *p) == ((raw >> i) & 1 == 1), "{}: value bit {i} misplaced", ctx());
        }
        *per_order.entry(format!("{order:?}/{kind:?}")).or_insert(0) += 1;
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < CODEC_TIME_LIMIT, "took {elapsed:?}, limit {CODEC_TIME_LIMIT:?}");
    ensure!(per_order.len() == 4, "not every byte order and value kind was covered: {per_order:?}");
    Ok(format!(
        "{CODEC_CASES} cases ({scaled} scaled, rel tol {CODEC_REL_TOL:e}), all four order/kind combinations, untouched bits preserved ({} ms < {} ms)",
        elapsed.as_millis(),
        CODEC_TIME_LIMIT.as_millis()
    ))
}

// ---------------------------------------------------------------- 3

fn unhex(s: &str) -> Vec<u8> {
    if s == "-" {
        return Vec::new();
    }
    (0..s.len()).step_by(2).map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap()).collect()
}

fn wire_format() -> Outcome {
    const TYPES: [MessageType; 5] = [
        MessageType::Request,
        MessageType::RequestNoReturn,
        MessageType::Notification,
        MessageType::Response,
        MessageType::Error,
    ];
    let mut golden = 0;
    for line in include_str!("../../core/tests/fixtures/wire_vectors.txt").lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let h16 = |s: &str| u16::from_str_radix(s, 16).unwrap();
        let h8 = |s: &str| u8::from_str_radix(s, 16).unwrap();
        let msg = WireMessage {
            service_id: h16(f[1]),
            method_id: h16(f[2]),
            client_id: h16(f[3]),
            session_id: h16(f[4]),
            interface_version: h8(f[5]),
            message_type: MessageType::try_from(h8(f[6])).map_err(|e| e.to_string())?,
            return_code: h8(f[7]),
            payload: unhex(f[8]),
        };
        let frame = unhex(f[9]);
        ensure!(encode_message(&msg) == frame, "golden vector {} differs", f[0]);
        ensure!(decode_message(&frame).as_ref() == Ok(&msg), "golden vector {} does not decode", f[0]);
        golden += 1;
    }
    ensure!(golden >= 5, "only {golden} golden vectors found");

    let mut rng = ChaCha8Rng::seed_from_u64(0x50_4D45);
    for i in 0..WIRE_CASES {
        let len = rng.gen_range(0..=512usize);
        let msg = WireMessage {
            service_id: rng.gen(),
            method_id: rng.gen(),
            client_id: rng.gen(),
            session_id: rng.gen(),
            interface_version: rng.gen(),
            message_type: *TYPES.choose(&mut rng).unwrap(),
            return_code: rng.gen(),
            payload: (0..len).map(|_| rng.gen()).collect(),
        };
        let bytes = encode_message(&msg);
        ensure!(bytes.len() == HEADER_LEN + len, "case {i}: {} bytes for a {len}-byte payload", bytes.len());
        let length = u32::from_be_bytes(bytes[4..8].try_into().unwrap());
        ensure!(length as usize == 8 + len, "case {i}: length field {length}");
        ensure!(bytes[0..2] == msg.service_id.to_be_bytes(), "case {i}: service id not big-endian");
        ensure!(bytes[2..4] == msg.method_id.to_be_bytes(), "case {i}: method id not big-endian");
        ensure!(bytes[8..10] == msg.client_id.to_be_bytes(), "case {i}: client id not big-endian");
        ensure!(bytes[10..12] == msg.session_id.to_be_bytes(), "case {i}: session id not big-endian");
        ensure!(decode_message(&bytes) == Ok(msg), "case {i}: round trip failed");
    }
    Ok(format!("{golden} golden vectors bit-exact, {WIRE_CASES} random round trips with 16-byte header and length = 8 + payload"))
}

// ---------------------------------------------------------------- 4

fn fig5_service_gateway() -> Outcome {
    let cfg = fixture("fig5_service_gateway");
    let write = cfg
        .stimuli
        .iter()
        .find(|s| s.tick == 10 && s.node.as_str() == "ecu3")
        .ok_or("fixture lacks the tick-10 write")?;
    ensure!(
        matches!(&write.action, eesim::scenario::Action::WriteSignal { signal, value, .. } if signal == "BrakePressure" && *value == 300.0),
        "tick-10 stimulus is {:?}",
        write.action
    );
    let report = run(cfg).map_err(|e| e.to_string())?;
    let at_12: Vec<_> = received(&report.trace, "ecu2").into_iter().filter(|r| r.0 == 12).collect();
    ensure!(at_12 == [(12, 0x8001, json!(300))], "evt_recv at tick 12: {at_12:?}");
    let early = received(&report.trace, "ecu2").into_iter().filter(|r| r.0 < 12).count();
    ensure!(early == 0, "{early} notifications before tick 12");
    let drops = common::count(&report.trace, TraceKind::GwDrop);
    ensure!(drops == 0, "{drops} gw_drop events");
    ensure!(report.faults == 0, "{} faults", report.faults);
    Ok("write_signal(BrakePressure=300) at tick 10 -> one evt_recv(0x8001, 300) at ecu2 on tick 12, 0 gw_drop".into())
}

// ---------------------------------------------------------------- 5

fn mode_equivalence() -> Outcome {
    let service_cfg = fixture("fig5_service_gateway");
    let signal_cfg = fixture("fig5_signal_gateway");
    ensure!(service_cfg.seed == signal_cfg.seed, "fixtures use different seeds");
    ensure!(service_cfg.generators == signal_cfg.generators, "fixtures use different generators");
    let generated: usize = service_cfg.generators.iter().map(|g| g.count).sum();
    ensure!(generated == 100, "{generated} randomized stimuli");

    let service = received(&run(service_cfg).map_err(|e| e.to_string())?.trace, "ecu2");
    let signal = received(&run(signal_cfg).map_err(|e| e.to_string())?.trace, "ecu2");
    let values = |r: &[(u64, u64, serde_json::Value)]| r.iter().map(|(_, e, v)| (*e, v.clone())).collect::<Vec<_>>();
    ensure!(service.len() == 101, "service mode delivered {} notifications", service.len());
    ensure!(values(&service) == values(&signal), "sequences differ");
    let shifts: BTreeSet<i64> = service.iter().zip(&signal).map(|(a, b)| b.0 as i64 - a.0 as i64).collect();
    ensure!(shifts == BTreeSet::from([1]), "tick shifts {shifts:?}");
    Ok(format!("{} identical (event_id, value) pairs in both modes; signal path uniformly one tick later", service.len()))
}

// ---------------------------------------------------------------- 6

fn update_semantics() -> Outcome {
    let mut mw = Middleware::default();
    let mut em = ExecutionManager::new(Endpoint::new("ecu2", 30490));
    let v1 = Version::new(1, 0, 0);
    let report = em.load_manifests(["brake_monitor", "hmi", "logger"].map(|a| AppManifest::new(a, v1)).to_vec());
    ensure!(report.is_ok(), "manifests rejected: {report:?}");
    em.start_all(&mut mw).map_err(|e| e.to_string())?;
    mw.step(25);
    let before = em.snapshot(25);
    em.update_app("hmi", AppManifest::new("hmi", Version::new(1, 1, 0)), &mut mw)
        .map_err(|e| e.to_string())?;
    let after = em.snapshot(25);
    for app in ["brake_monitor", "logger"] {
        ensure!(after[app] == before[app], "{app} changed from {:?} to {:?}", before[app], after[app]);
        ensure!(after[app] == (AppState::Running, 25), "{app} is {:?}", after[app]);
    }
    ensure!(after["hmi"] == (AppState::Running, 0), "hmi is {:?}", after["hmi"]);

    let mut ecu = ClassicEcu::new("ecu3", v1, ["brake_pressure_sensor", "abs_control", "warning_lamp"], 0);
    ecu.update_image(Version::new(2, 0, 0), 25);
    let uptimes: Vec<_> = ecu.functions().map(|f| ecu.uptime(f, 25)).collect();
    ensure!(uptimes == [Some(0); 3], "classic uptimes after reflash: {uptimes:?}");
    Ok("update_app(hmi) keeps the other two apps at (Running, 25); update_image resets all 3 classic functions to uptime 0".into())
}

// ---------------------------------------------------------------- 7

fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("eesim-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let mut lines = 0;
    for name in FIXTURES {
        let mut files = Vec::new();
        for attempt in 0..2 {
            let path = dir.join(format!("{name}.{attempt}.jsonl"));
            let report = run(fixture(name)).map_err(|e| e.to_string())?;
            export_trace(&report.trace, &path).map_err(|e| e.to_string())?;
            files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
        }
        ensure!(files[0] == files[1], "{name}: exported traces differ");
        lines += files[0].iter().filter(|b| **b == b'\n').count();
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(format!("{} fixtures exported twice, byte-identical ({lines} lines each pass)", FIXTURES.len()))
}

// ---------------------------------------------------------------- 8

const SVC: u16 = 0x1000;
const EVT: u16 = 0x8001;
const ECHO: u16 = 0x0001;

fn server() -> ServiceInstance {
    ServiceInstance {
        service_id: SVC,
        instance_id: 1,
        interface_version: 1,
        endpoint: Endpoint::new("srv", 30000),
    }
}

fn test_middleware() -> Middleware {
    let mut mw = Middleware::default();
    let u32_schema = || PayloadSchema::new([("n", Primitive::U32)]);
    mw.register_interface(
        ServiceInterfaceDef::new(SVC, 1)
            .with_event(EVT, "Tick", u32_schema())
            .with_method(ECHO, "Echo", u32_schema(), u32_schema()),
    )
    .unwrap();
    mw.offer_service(server(), TTL_INFINITE).unwrap();
    mw
}

/// Random operation sequence against a reference model of live subscriptions.
fn subscription_sequence(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sub = |i: usize| Endpoint::new(format!("sub{i}"), 40000);
    let mut mw = test_middleware();
    let mut offered = true;
    let mut model: BTreeMap<usize, Option<u64>> = BTreeMap::new();
    let mut expected: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    let mut now = 0u64;
    let mut value = 0u32;
    let alive = |exp: &Option<u64>, now: u64| exp.is_none_or(|t| now < t);
    for _ in 0..rng.gen_range(1..60) {
        match rng.gen_range(0..13) {
            0..=2 => {
                let s = rng.gen_range(0..3);
                let ttl = match rng.gen_range(0..4) {
                    0 => 0,
                    1 => TTL_INFINITE,
                    _ => rng.gen_range(1..12),
                };
                let r = mw.subscribe_event(sub(s), SVC, 1, EVT, ttl);
                if !offered {
                    ensure!(matches!(r, Err(ServiceError::InstanceNotOffered { .. })), "seed {seed}: subscribe while not offered");
                } else {
                    r.map_err(|e| format!("seed {seed}: {e}"))?;
                    if ttl == 0 {
                        model.remove(&s);
                    } else {
                        model.insert(s, (ttl != TTL_INFINITE).then(|| now + u64::from(ttl)));
                    }
                }
            }
            3 => {
                let s = rng.gen_range(0..3);
                let handle = SubscriptionHandle { service_id: SVC, instance_id: 1, event_id: EVT, subscriber: sub(s) };
                let live = model.remove(&s).is_some_and(|e| alive(&e, now));
                ensure!(mw.unsubscribe(&handle) == live, "seed {seed}: unsubscribe disagreed with the model");
            }
            4 => {
                mw.stop_offer(server()).map_err(|e| e.to_string())?;
                offered = false;
                model.clear();
            }
            5 => {
                mw.offer_service(server(), TTL_INFINITE).map_err(|e| e.to_string())?;
                offered = true;
            }
            6..=8 => {
                for _ in 0..rng.gen_range(1..6) {
                    now += 1;
                    mw.step(now);
                }
                model.retain(|_, e| alive(e, now));
            }
            _ => {
                let v = value;
                value += 1;
                let r = mw.publish_event(SVC, 1, EVT, &[Value::U32(v)]);
                if !offered {
                    ensure!(r.is_err(), "seed {seed}: publish succeeded without an offer");
                    continue;
                }
                let live: Vec<usize> = model.iter().filter(|(_, e)| alive(e, now)).map(|(s, _)| *s).collect();
                ensure!(r == Ok(live.len()), "seed {seed}: publish reached {r:?}, model {}", live.len());
                for s in live {
                    expected.entry(s).or_default().push(v);
                }
            }
        }
    }
    mw.step(now + 1);
    let mut delivered = 0;
    for s in 0..3 {
        let got: Vec<u32> = mw
            .take_notifications(&sub(s))
            .iter()
            .map(|n| match n.values[..] {
                [Value::U32(v)] => v,
                _ => u32::MAX,
            })
            .collect();
        let want = expected.remove(&s).unwrap_or_default();
        ensure!(got == want, "seed {seed}: subscriber {s} got {got:?}, expected {want:?}");
        delivered += got.len();
    }
    Ok(delivered)
}

/// Shuffles, delays and duplicates traffic; every call must complete once with its own answer.
fn correlation_run(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mw = test_middleware();
    mw.set_method_handler(SVC, 1, ECHO, MethodHandler::Echo).unwrap();
    let proxies: Vec<_> = (0..3).map(|i| mw.create_proxy(Endpoint::new(format!("cli{i}"), 50000))).collect();
    let duplicate_rate = rng.gen_range(0.0..0.5);
    let mut calls: BTreeMap<CallId, u32> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    let mut now = 0;
    for _ in 0..rng.gen_range(1..6) {
        for _ in 0..rng.gen_range(1..8) {
            let proxy = *proxies.choose(&mut rng).unwrap();
            let v = calls.len() as u32;
            let id = mw.call_method(proxy, SVC, 1, ECHO, &[Value::U32(v)]).map_err(|e| e.to_string())?;
            calls.insert(id, v);
        }
        for _ in 0..4 {
            let flight = mw.in_flight_mut();
            for i in 0..flight.len() {
                if seen.insert((flight[i].src.clone(), flight[i].bytes.clone())) {
                    flight[i].deliver_at += rng.gen_range(0..3);
                    if rng.gen_bool(duplicate_rate) {
                        let dup = flight[i].clone();
                        flight.push(dup);
                    }
                }
            }
            flight.shuffle(&mut rng);
            now += 1;
            mw.step(now);
        }
    }
    for _ in 0..20 {
        now += 1;
        mw.step(now);
    }
    let mut completions: BTreeMap<CallId, usize> = BTreeMap::new();
    for e in mw.drain_events() {
        if let MwEvent::CallCompleted { call, .. } = e {
            *completions.entry(call).or_default() += 1;
        }
    }
    ensure!(completions.len() == calls.len(), "seed {seed}: {} completions for {} calls", completions.len(), calls.len());
    for (call, sent) in &calls {
        ensure!(completions.get(call) == Some(&1), "seed {seed}: {call} completed {:?} times", completions.get(call));
        match mw.take_result(*call) {
            Some(Ok(v)) => ensure!(v == [Value::U32(*sent)], "seed {seed}: {call} answered {v:?}, sent {sent}"),
            Some(Err(CallError::Timeout(_))) => return Err(format!("seed {seed}: {call} timed out")),
            other => return Err(format!("seed {seed}: {call} ended as {other:?}")),
        }
    }
    Ok(calls.len())
}

fn subscription_soundness() -> Outcome {
    let mut notifications = 0;
    for seed in 0..SUBSCRIPTION_SEQUENCES {
        notifications += subscription_sequence(seed)?;
    }
    let mut calls = 0;
    for seed in 0..CORRELATION_RUNS {
        calls += correlation_run(seed)?;
    }
    Ok(format!(
        "{SUBSCRIPTION_SEQUENCES} op sequences match the live-subscription model ({notifications} notifications); {calls} calls over {CORRELATION_RUNS} reordered runs each completed once with their own reply"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("ASIL table fidelity", asil_table),
        ("signal codec round trip", codec_roundtrip),
        ("wire format exactness", wire_format),
        ("service gateway end to end", fig5_service_gateway),
        ("gateway mode equivalence", mode_equivalence),
        ("individual update semantics", update_semantics),
        ("trace determinism", determinism),
        ("discovery and correlation soundness", subscription_soundness),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        match check() {
            Ok(summary) => println!("PASS [{}] {name}: {summary}", i + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL [{}] {name}: {reason}", i + 1);
            }
        }
    }
    println!("acceptance: {}/8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
