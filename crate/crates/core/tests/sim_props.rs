mod common;

use coexsim::attacks::AttackKind;
use coexsim::sim::{Engine, EngineError, SimTime, Target, TraceRecorder};
use common::quick;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn same_seed_same_trace(seed in any::<u64>(), k in 0usize..AttackKind::ALL.len()) {
        let s = quick(AttackKind::ALL[k], seed);
        let (a, ta) = common::run(&s);
        let (b, tb) = common::run(&s);
        prop_assert_eq!(ta.to_csv_string(), tb.to_csv_string());
        prop_assert_eq!(a.report, b.report);
    }

    #[test]
    fn simultaneous_events_pop_in_schedule_order(times in prop::collection::vec(0u64..5, 1..60)) {
        let mut e: Engine<usize> = Engine::new();
        for (i, &t) in times.iter().enumerate() {
            e.schedule(SimTime::from_nanos(t), Target("x"), i).unwrap();
        }
        let mut last: Option<(SimTime, u64)> = None;
        while let Some(ev) = e.next_event(SimTime::from_nanos(10)) {
            if let Some(prev) = last {
                prop_assert!((ev.fire_at, ev.seq) > prev);
            }
            prop_assert_eq!(SimTime::from_nanos(times[ev.payload]), ev.fire_at);
            last = Some((ev.fire_at, ev.seq));
        }
    }

    #[test]
    fn no_event_before_its_cause(delays in prop::collection::vec(0u64..1_000, 1..40)) {
        let mut e: Engine<u64> = Engine::new();
        e.schedule(SimTime::ZERO, Target("root"), 0).unwrap();
        let mut i = 0;
        let mut seen = Vec::new();
        while let Some(ev) = e.next_event(SimTime::from_secs(1)) {
            seen.push(ev.fire_at);
            if i < delays.len() {
                e.schedule_in(SimTime::from_nanos(delays[i]), Target("child"), i as u64);
                i += 1;
            }
            let past = ev.fire_at.checked_sub(SimTime::from_nanos(1));
            if let Some(p) = past {
                prop_assert_eq!(
                    e.schedule(p, Target("late"), 0),
                    Err(EngineError::PastTime { fire_at: p, now: ev.fire_at })
                );
            }
        }
        prop_assert!(seen.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn trace_csv_round_trips() {
    let (_, t) = common::run(&quick(AttackKind::KeystrokeSniff, 3));
    let csv = t.to_csv_string();
    let back = TraceRecorder::from_csv(csv.as_bytes()).unwrap();
    assert_eq!(back.to_csv_string(), csv);
}
