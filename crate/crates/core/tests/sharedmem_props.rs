use coexsim::sharedmem::{
    extract_secrets, find_executable_regions, BranchProbe, ChipConfig, ComboChip, CrashCause, Credentials, ExecOutcome,
    ExecRegion, FinderConfig, SharedWindow, BT_WINDOW_BASE, DEFAULT_WINDOW_LEN, DUMP_BASE, RAM_BASE, WIFI_WINDOW_BASE,
};
use coexsim::sim::{RngStream, SimTime, StreamId, TraceRecorder};
use proptest::prelude::*;

const SMALL_WINDOW: u32 = 0x400;

fn stable(window_len: u32, credentials: Option<Credentials>) -> ChipConfig {
    ChipConfig {
        p_unstable: 0.0,
        window_len,
        credentials,
        ..ChipConfig::default()
    }
}

fn creds() -> impl Strategy<Value = Credentials> {
    ("[a-zA-Z0-9_-]{1,32}", "[ -~]{0,63}").prop_map(|(ssid, passphrase)| Credentials { ssid, passphrase })
}

/// Disjoint word-aligned regions inside the small window, at least two
/// words apart so neighbouring hits never merge.
fn regions() -> impl Strategy<Value = Vec<ExecRegion>> {
    prop::collection::btree_set(0u32..(SMALL_WINDOW / 16), 1..4).prop_flat_map(|slots| {
        let slots: Vec<u32> = slots.into_iter().collect();
        prop::collection::vec(1u32..=2, slots.len()).prop_map(move |words| {
            slots
                .iter()
                .zip(&words)
                .map(|(&s, &w)| ExecRegion {
                    start: WIFI_WINDOW_BASE + s * 16,
                    len: w * 4,
                })
                .collect()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn translation_round_trips(off in 0u32..DEFAULT_WINDOW_LEN) {
        let w = SharedWindow::default();
        let wifi = w.translate(BT_WINDOW_BASE + off).unwrap();
        prop_assert_eq!(wifi, WIFI_WINDOW_BASE + off);
        prop_assert_eq!(w.to_bt(wifi), Some(BT_WINDOW_BASE + off));
    }

    #[test]
    fn outside_the_window_does_not_translate(addr in any::<u32>()) {
        let w = SharedWindow::default();
        let inside = (BT_WINDOW_BASE..BT_WINDOW_BASE + DEFAULT_WINDOW_LEN).contains(&addr);
        prop_assert_eq!(w.translate(addr).is_some(), inside);
    }

    #[test]
    fn reads_return_what_was_written(off in 0u32..(DEFAULT_WINDOW_LEN - 64), data in prop::collection::vec(any::<u8>(), 1..64), seed in any::<u64>()) {
        let mut chip = ComboChip::new(stable(DEFAULT_WINDOW_LEN, None), vec![]).unwrap();
        let mut s = RngStream::new(seed, StreamId::Fuzzer);
        let addr = BT_WINDOW_BASE + off;
        chip.bt_write(SimTime::ZERO, addr, &data).unwrap();
        prop_assert_eq!(chip.bt_read(SimTime::ZERO, addr, data.len(), &mut s).unwrap(), data.clone());
        prop_assert_eq!(chip.ram().read(addr - BT_WINDOW_BASE + WIFI_WINDOW_BASE, data.len()), &data[..]);
    }

    #[test]
    fn crash_pc_is_the_target_rounded_down(word in 0u32..(SMALL_WINDOW / 4 - 2), target in any::<u32>()) {
        prop_assume!(!(RAM_BASE..RAM_BASE + 0x15_0000).contains(&(target & !3)));
        let region = ExecRegion { start: WIFI_WINDOW_BASE, len: SMALL_WINDOW };
        let mut chip = ComboChip::new(stable(SMALL_WINDOW, None), vec![region]).unwrap();
        let probe = BranchProbe::new(BT_WINDOW_BASE + word * 4, target);
        chip.bt_write(SimTime::ZERO, probe.written_at, &probe.encode()).unwrap();
        match chip.wifi_execute_check(SimTime::from_millis(1)) {
            ExecOutcome::Crashed(log) => {
                prop_assert_eq!(log.cause, CrashCause::BranchToInvalid);
                prop_assert_eq!(log.pc, target & !3);
                prop_assert_eq!(log.pc, probe.expected_pc());
            }
            ExecOutcome::Running => prop_assert!(false, "no crash"),
        }
    }

    #[test]
    fn dump_offset_is_address_minus_ram_base(word in 0u32..(SMALL_WINDOW / 4 - 2), fill in prop::collection::vec(any::<u8>(), 1..32), fill_at in 0u32..(SMALL_WINDOW - 32), probe_at in any::<prop::sample::Index>()) {
        let region = ExecRegion { start: WIFI_WINDOW_BASE + word * 4, len: 4 };
        let mut chip = ComboChip::new(stable(SMALL_WINDOW, None), vec![region]).unwrap();
        chip.bt_write(SimTime::ZERO, BT_WINDOW_BASE + fill_at, &fill).unwrap();
        let probe = BranchProbe::new(BT_WINDOW_BASE + word * 4, 0xcafe_babe);
        chip.bt_write(SimTime::ZERO, probe.written_at, &probe.encode()).unwrap();
        let before = chip.ram().dump();
        let ExecOutcome::Crashed(log) = chip.wifi_execute_check(SimTime::from_millis(1)) else {
            return Err(TestCaseError::fail("no crash"));
        };
        prop_assert_eq!(log.dump_base, 0x10000);
        prop_assert_eq!(log.dump_base, DUMP_BASE);
        prop_assert_eq!(&log.ram_dump, &before);
        let a = RAM_BASE + probe_at.index(before.len()) as u32;
        prop_assert_eq!(log.byte_at(a), Some(before[(a - 0x170000) as usize]));
        for (i, b) in fill.iter().enumerate() {
            let wifi = WIFI_WINDOW_BASE + fill_at + i as u32;
            let overwritten = (region.start..region.start + 8).contains(&wifi);
            if !overwritten {
                prop_assert_eq!(log.ram_dump[(wifi - 0x170000) as usize], *b);
            }
        }
    }

    #[test]
    fn secrets_leak_only_when_associated(c in creds(), at_ms in 0u64..4000) {
        let region = ExecRegion { start: WIFI_WINDOW_BASE, len: 4 };
        let mut chip = ComboChip::new(stable(SMALL_WINDOW, Some(c.clone())), vec![region]).unwrap();
        let now = SimTime::from_millis(at_ms);
        let was = chip.is_associated(now);
        prop_assert_eq!(was, now >= chip.config().assoc_delay);
        let probe = BranchProbe::new(BT_WINDOW_BASE, 0xcafe_babe);
        chip.bt_write(now, BT_WINDOW_BASE, &probe.encode()).unwrap();
        let ExecOutcome::Crashed(log) = chip.wifi_execute_check(now) else {
            return Err(TestCaseError::fail("no crash"));
        };
        prop_assert_eq!(extract_secrets(&log), was.then_some(c));
    }

    /// Bluetooth can write before Wi-Fi has joined any network.
    #[test]
    fn window_is_writable_during_boot(c in creds(), at_ms in 0u64..2000, off in 0u32..(DEFAULT_WINDOW_LEN - 8)) {
        let mut chip = ComboChip::new(stable(DEFAULT_WINDOW_LEN, Some(c)), vec![]).unwrap();
        let now = SimTime::from_millis(at_ms);
        prop_assert!(chip.bt_write(now, BT_WINDOW_BASE + off, &[0xaa; 8]).is_ok());
        prop_assert!(!chip.is_associated(now));
    }

    #[test]
    fn finder_returns_exactly_the_seeded_regions(rs in regions(), seed in any::<u64>()) {
        let mut chip = ComboChip::new(stable(SMALL_WINDOW, None), rs.clone()).unwrap();
        let mut stream = RngStream::new(seed, StreamId::Fuzzer);
        let found = find_executable_regions(&mut chip, SimTime::ZERO, &FinderConfig::default(), &mut stream, &mut TraceRecorder::new()).unwrap();
        prop_assert!(found.exhausted);
        let expect: Vec<u32> = rs.iter().map(|r| r.start - WIFI_WINDOW_BASE + BT_WINDOW_BASE).collect();
        prop_assert_eq!(found.regions, expect);
        for h in &found.hits {
            prop_assert!(rs.iter().any(|r| r.contains(h - BT_WINDOW_BASE + WIFI_WINDOW_BASE)));
        }
    }
}

#[test]
fn canonical_probe_target() {
    assert_eq!(BranchProbe::new(0x681024, 0xcafe_babe).expected_pc(), 0xcafe_babc);
}

#[test]
fn unmapped_window_rejects_writes() {
    let cfg = ChipConfig {
        powered: false,
        ..stable(SMALL_WINDOW, None)
    };
    let mut chip = ComboChip::new(cfg, vec![]).unwrap();
    assert!(chip.bt_write(SimTime::ZERO, BT_WINDOW_BASE, &[1]).is_err());
}

#[test]
fn truncated_dump_has_no_secrets() {
    let c = Credentials {
        ssid: "home".into(),
        passphrase: "hunter22".into(),
    };
    let region = ExecRegion {
        start: WIFI_WINDOW_BASE,
        len: 4,
    };
    let mut chip = ComboChip::new(stable(SMALL_WINDOW, Some(c)), vec![region]).unwrap();
    let now = SimTime::from_secs(3);
    chip.bt_write(
        now,
        BT_WINDOW_BASE,
        &BranchProbe::new(BT_WINDOW_BASE, 0xcafe_babe).encode(),
    )
    .unwrap();
    let ExecOutcome::Crashed(mut log) = chip.wifi_execute_check(now) else {
        panic!("no crash")
    };
    assert!(extract_secrets(&log).is_some());
    log.ram_dump.truncate(0x2a_0000 - 0x17_0000);
    assert!(extract_secrets(&log).is_none());
}
