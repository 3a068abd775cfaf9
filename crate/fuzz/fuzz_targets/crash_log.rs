#![no_main]

use coexsim::sharedmem::CrashLog;
use libfuzzer_sys::fuzz_target;

// first byte splits the input into metadata and dump
fuzz_target!(|data: &[u8]| {
    let Some((&split, rest)) = data.split_first() else {
        return;
    };
    let at = (split as usize * 4).min(rest.len());
    let (meta, dump) = rest.split_at(at);
    if let Ok(log) = CrashLog::from_parts(meta, dump.to_vec()) {
        let back =
            CrashLog::from_parts(log.metadata_json().as_bytes(), log.ram_dump.clone()).expect("own metadata parses");
        assert_eq!(back, log);
    }
});
