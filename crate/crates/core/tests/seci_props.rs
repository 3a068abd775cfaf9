use coexsim::seci::{
    decode_channel_notification, encode_channel_notification, D11Poller, Direction, SeciConfig, SeciLink,
};
use coexsim::sim::{RngStream, SimTime, StreamId, TraceRecorder};
use coexsim::Core;
use proptest::prelude::*;

fn valid_pairs() -> Vec<(u8, u16)> {
    (0..=11u8).flat_map(|c| [(c, 20u16), (c, 40u16)]).collect()
}

#[test]
fn all_24_channel_notifications_round_trip() {
    let pairs = valid_pairs();
    assert_eq!(pairs.len(), 24);
    let mut bytes = std::collections::HashSet::new();
    for (c, bw) in pairs {
        let n = encode_channel_notification(c, bw).unwrap();
        let back = decode_channel_notification(n.byte).unwrap();
        assert_eq!(back, n);
        assert_eq!((back.channel, back.bandwidth_mhz()), (c, bw));
        assert!(bytes.insert(n.byte));
    }
}

fn poll_history(link: &SeciLink, poller: &D11Poller, until: SimTime) -> Vec<Option<Vec<u8>>> {
    poller
        .instants(until)
        .map(|t| poller.d11_poll(link, t).unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn notification_round_trip(i in 0usize..24) {
        let (c, bw) = valid_pairs()[i];
        let n = encode_channel_notification(c, bw).unwrap();
        prop_assert_eq!(decode_channel_notification(n.byte).unwrap(), n);
    }

    #[test]
    fn decodable_bytes_reencode_to_themselves(b in any::<u8>()) {
        if let Ok(n) = decode_channel_notification(b) {
            prop_assert_eq!(encode_channel_notification(n.channel, n.bandwidth_mhz()).unwrap().byte, b);
        }
    }

    /// Every value a core reads was written by its peer, and reads never
    /// run backwards through the peer's write order.
    #[test]
    fn registers_only_hold_peer_writes(
        sends in prop::collection::vec((any::<bool>(), 0u64..50_000, prop::collection::vec(any::<u8>(), 1..=8)), 1..60),
        seed in any::<u64>(),
        probes in prop::collection::vec(0u64..3_000_000, 1..60),
    ) {
        let mut link = SeciLink::new(SeciConfig::standard());
        let mut jitter = RngStream::new(seed, StreamId::SeciJitter);
        let mut trace = TraceRecorder::new();
        let mut t = SimTime::ZERO;
        let mut written: [Vec<(SimTime, Vec<u8>)>; 2] = Default::default();
        for (from_bt, gap, payload) in sends {
            t += SimTime::from_nanos(gap);
            let core = if from_bt { Core::Bluetooth } else { Core::Wifi };
            link.send_message(core, &payload, t, &mut jitter, &mut trace).unwrap();
            written[from_bt as usize].push((t, payload));
        }
        let mut probes = probes;
        probes.sort_unstable();
        for core in [Core::Bluetooth, Core::Wifi] {
            let peer = &written[(core == Core::Wifi) as usize];
            let mut last_idx = 0;
            for &p in &probes {
                let at = SimTime::from_nanos(p);
                if let Some(v) = link.registers(core, at).gci_input {
                    let idx = peer.iter().enumerate().skip(last_idx).position(|(_, w)| w.1 == v && w.0 <= at);
                    prop_assert!(idx.is_some(), "{:?} never written before {}", v, at);
                    last_idx += idx.unwrap();
                }
            }
        }
    }

    /// Wi-Fi only learns what is in the register at each poll, so moving
    /// writes inside a poll interval or overwriting them before the next poll
    /// changes nothing it can see.
    #[test]
    fn polls_hide_sub_period_timing(
        plan in prop::collection::vec((any::<bool>(), any::<u8>(), 0u64..1_200_000, 0u64..1_200_000, any::<u8>()), 1..40),
        seed in any::<u64>(),
    ) {
        let poller = D11Poller::new(SimTime::from_micros(5));
        let period = D11Poller::PERIOD;
        let mut a = SeciLink::new(SeciConfig::standard());
        let mut b = SeciLink::new(SeciConfig::standard());
        let mut ja = RngStream::new(seed, StreamId::SeciJitter);
        let mut jb = RngStream::new(seed ^ 1, StreamId::SeciJitter);
        let (mut tra, mut trb) = (TraceRecorder::new(), TraceRecorder::new());
        for (k, &(write, value, off_a, off_b, decoy)) in plan.iter().enumerate() {
            if !write {
                continue;
            }
            let base = poller.epoch + period * k as u64;
            let ta = base + SimTime::from_nanos(off_a);
            let (tb1, tb2) = (base + SimTime::from_nanos(off_a.min(off_b)), base + SimTime::from_nanos(off_a.max(off_b)));
            a.send_message(Core::Bluetooth, &[value], ta, &mut ja, &mut tra).unwrap();
            b.send_message(Core::Bluetooth, &[decoy], tb1, &mut jb, &mut trb).unwrap();
            b.send_message(Core::Bluetooth, &[value], tb2, &mut jb, &mut trb).unwrap();
        }
        let until = period * (plan.len() as u64 + 1);
        prop_assert_eq!(poll_history(&a, &poller, until), poll_history(&b, &poller, until));
    }

    /// Timing noise of up to 200 ns sigma never moves a message across a
    /// D11 poll or a 10 us sample boundary.
    #[test]
    fn small_jitter_is_invisible(
        slots in prop::collection::btree_set(0u64..2_000, 1..80),
        values in prop::collection::vec(any::<u8>(), 80),
        sigma in 0u64..=200,
        seed in any::<u64>(),
    ) {
        let step = SimTime::from_micros(10);
        let noisy_cfg = SeciConfig { jitter_sigma_ns: sigma, ..SeciConfig::standard() };
        let quiet_cfg = SeciConfig { jitter_sigma_ns: 0, ..SeciConfig::standard() };
        let mut noisy = SeciLink::new(noisy_cfg);
        let mut quiet = SeciLink::new(quiet_cfg);
        let mut jn = RngStream::new(seed, StreamId::SeciJitter);
        let mut jq = RngStream::new(seed, StreamId::SeciJitter);
        let mut tr = TraceRecorder::new();
        let mut tr2 = TraceRecorder::new();
        for (i, &s) in slots.iter().enumerate() {
            let at = step * s;
            noisy.send_message(Core::Bluetooth, &[values[i]], at, &mut jn, &mut tr).unwrap();
            quiet.send_message(Core::Bluetooth, &[values[i]], at, &mut jq, &mut tr2).unwrap();
        }
        prop_assert_eq!(tr.to_csv_string(), tr2.to_csv_string());
        let until = step * 2_001;
        let poller = D11Poller::new(SimTime::from_micros(5));
        prop_assert_eq!(poll_history(&noisy, &poller, until), poll_history(&quiet, &poller, until));
        let fine = |l: &SeciLink| -> Vec<Option<Vec<u8>>> {
            (0..2_001u64)
                .map(|k| l.latest_delivered(Direction::BtToWifi, step * k + SimTime::from_micros(5)).map(<[u8]>::to_vec))
                .collect()
        };
        prop_assert_eq!(fine(&noisy), fine(&quiet));
    }
}
