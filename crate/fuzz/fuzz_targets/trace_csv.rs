#![no_main]

use coexsim::sim::TraceRecorder;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = TraceRecorder::from_csv(data) {
        let csv = t.to_csv_string();
        let again = TraceRecorder::from_csv(csv.as_bytes()).expect("own output parses");
        assert_eq!(again.to_csv_string(), csv);
    }
});
