use std::collections::{BTreeMap, BTreeSet};

use eesim_core::service::{
    CallError, CallId, Endpoint, MethodHandler, Middleware, MwEvent, PayloadSchema, Primitive,
    SdKind, ServiceError, ServiceInstance, ServiceInterfaceDef, Value, TTL_INFINITE,
};
use eesim_core::Tick;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

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

fn middleware() -> Middleware {
    let mut mw = Middleware::default();
    mw.register_interface(
        ServiceInterfaceDef::new(SVC, 1)
            .with_event(EVT, "Tick", PayloadSchema::new([("n", Primitive::U32)]))
            .with_method(
                ECHO,
                "Echo",
                PayloadSchema::new([("n", Primitive::U32)]),
                PayloadSchema::new([("n", Primitive::U32)]),
            ),
    )
    .unwrap();
    mw.offer_service(server(), TTL_INFINITE).unwrap();
    mw
}

fn subscriber(i: usize) -> Endpoint {
    Endpoint::new(format!("sub{i}"), 40000)
}

#[derive(Debug, Clone)]
enum Op {
    Subscribe(usize, u32),
    Unsubscribe(usize),
    StopOffer,
    Reoffer,
    Advance(Tick),
    Publish,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0..3usize, prop_oneof![Just(0u32), 1u32..12, Just(TTL_INFINITE)])
            .prop_map(|(s, t)| Op::Subscribe(s, t)),
        1 => (0..3usize).prop_map(Op::Unsubscribe),
        1 => Just(Op::StopOffer),
        1 => Just(Op::Reoffer),
        3 => (1..6u64).prop_map(Op::Advance),
        4 => Just(Op::Publish),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    /// A subscriber receives a notification exactly when it held an
    /// acknowledged, unexpired subscription at publish time.
    #[test]
    fn notifications_follow_live_subscriptions(ops in proptest::collection::vec(op(), 1..60)) {
        let mut mw = middleware();
        let mut offered = true;
        // subscriber -> exclusive expiry tick (None = infinite)
        let mut model: BTreeMap<usize, Option<Tick>> = BTreeMap::new();
        let mut expected: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
        let mut acked: BTreeSet<usize> = BTreeSet::new();
        let mut next_value = 0u32;
        let mut now: Tick = 0;

        for op in ops {
            match op {
                Op::Subscribe(s, ttl) => {
                    let r = mw.subscribe_event(subscriber(s), SVC, 1, EVT, ttl);
                    if !offered {
                        let rejected = matches!(r, Err(ServiceError::InstanceNotOffered { .. }));
                        prop_assert!(rejected);
                    } else if ttl == 0 {
                        r.unwrap();
                        model.remove(&s);
                    } else {
                        r.unwrap();
                        model.insert(s, (ttl != TTL_INFINITE).then(|| now + Tick::from(ttl)));
                        acked.insert(s);
                    }
                }
                Op::Unsubscribe(s) => {
                    let h = eesim_core::service::SubscriptionHandle {
                        service_id: SVC,
                        instance_id: 1,
                        event_id: EVT,
                        subscriber: subscriber(s),
                    };
                    let live = model.remove(&s).is_some_and(|e| e.is_none_or(|t| now < t));
                    prop_assert_eq!(mw.unsubscribe(&h), live);
                }
                Op::StopOffer => {
                    mw.stop_offer(server()).unwrap();
                    offered = false;
                    model.clear();
                }
                Op::Reoffer => {
                    mw.offer_service(server(), TTL_INFINITE).unwrap();
                    offered = true;
                }
                Op::Advance(d) => {
                    for _ in 0..d {
                        now += 1;
                        mw.step(now);
                    }
                    model.retain(|_, e| e.is_none_or(|t| now < t));
                }
                Op::Publish => {
                    let v = next_value;
                    next_value += 1;
                    let r = mw.publish_event(SVC, 1, EVT, &[Value::U32(v)]);
                    if !offered {
                        prop_assert!(r.is_err());
                        continue;
                    }
                    let live: Vec<usize> = model
                        .iter()
                        .filter(|(_, e)| e.is_none_or(|t| now < t))
                        .map(|(s, _)| *s)
                        .collect();
                    prop_assert_eq!(r.unwrap(), live.len());
                    for s in live {
                        prop_assert!(acked.contains(&s));
                        expected.entry(s).or_default().push(v);
                    }
                }
            }
        }
        mw.step(now + 1);

        let acks = mw
            .drain_events()
            .into_iter()
            .filter(|e| matches!(e, MwEvent::Sd(sd) if sd.kind == SdKind::SubscribeAck))
            .count();
        prop_assert!(acks >= acked.len());

        for s in 0..3 {
            let got: Vec<u32> = mw
                .take_notifications(&subscriber(s))
                .iter()
                .map(|n| match n.values[..] {
                    [Value::U32(v)] => v,
                    _ => panic!("unexpected payload {:?}", n.values),
                })
                .collect();
            prop_assert_eq!(got, expected.remove(&s).unwrap_or_default(), "subscriber {}", s);
        }
    }

    /// Under shuffled, delayed and duplicated traffic, every call completes
    /// exactly once with the answer to its own request.
    #[test]
    fn responses_correlate_under_reordering(
        seed in any::<u64>(),
        batches in proptest::collection::vec(1usize..8, 1..6),
        duplicate_rate in 0.0f64..0.5,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mw = middleware();
        mw.set_method_handler(SVC, 1, ECHO, MethodHandler::Echo).unwrap();
        let proxies: Vec<_> = (0..3)
            .map(|i| mw.create_proxy(Endpoint::new(format!("cli{i}"), 50000)))
            .collect();

        let mut calls: BTreeMap<CallId, u32> = BTreeMap::new();
        let mut now = 0;
        let mut value = 0u32;
        let mut seen = BTreeSet::new();
        for batch in batches {
            for _ in 0..batch {
                let proxy = *proxies.choose(&mut rng).unwrap();
                let id = mw.call_method(proxy, SVC, 1, ECHO, &[Value::U32(value)]).unwrap();
                calls.insert(id, value);
                value += 1;
            }
            // scramble what is on the wire before each delivery round; each
            // message is duplicated or delayed at most once so round trips
            // stay under the timeout
            for _ in 0..4 {
                let flight = mw.in_flight_mut();
                let fresh: Vec<usize> = (0..flight.len())
                    .filter(|i| !seen.contains(&(flight[*i].src.clone(), flight[*i].bytes.clone())))
                    .collect();
                for i in fresh {
                    seen.insert((flight[i].src.clone(), flight[i].bytes.clone()));
                    flight[i].deliver_at += rng.gen_range(0..3);
                    if rng.gen_bool(duplicate_rate) {
                        let dup = flight[i].clone();
                        flight.push(dup);
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
        for (call, sent) in &calls {
            prop_assert_eq!(completions.get(call), Some(&1), "{}", call);
            match mw.take_result(*call) {
                Some(Ok(v)) => prop_assert_eq!(v, vec![Value::U32(*sent)]),
                Some(Err(CallError::Timeout(_))) => prop_assert!(false, "{} timed out", call),
                other => prop_assert!(false, "{} ended as {:?}", call, other),
            }
        }
        prop_assert_eq!(completions.len(), calls.len());
    }
}
