#![no_main]

use coexsim::config::ScenarioConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(src) = std::str::from_utf8(data) {
        if let Ok(cfg) = src.parse::<ScenarioConfig>() {
            assert_eq!(cfg.scenario.attack.kind().attacker_core(), cfg.scenario.attacker_core);
        }
    }
});
