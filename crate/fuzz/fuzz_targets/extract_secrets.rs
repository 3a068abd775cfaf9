#![no_main]

use coexsim::sharedmem::{extract_secrets, CrashCause, CrashLog, DUMP_BASE};
use coexsim::sim::SimTime;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let log = CrashLog {
        cause: CrashCause::BranchToInvalid,
        pc: 0,
        at: SimTime::ZERO,
        ram_dump: data.to_vec(),
        dump_base: DUMP_BASE,
    };
    if let Some(c) = extract_secrets(&log) {
        assert!((1..=32).contains(&c.ssid.len()));
        assert!(c.passphrase.len() <= 63);
    }
});
