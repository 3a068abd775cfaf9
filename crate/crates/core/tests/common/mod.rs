#![allow(dead_code)]

use coexsim::attacks::{
    run_scenario, AttackKind, AttackOutput, AttackParams, GlitchParams, GrantRejectParams, JitterParams,
    KeystrokeParams, PriorityFloodParams, Scenario,
};
use coexsim::pta::PtaMode;
use coexsim::sim::{SimTime, TraceRecorder};

pub fn run(s: &Scenario) -> (AttackOutput, TraceRecorder) {
    let mut trace = TraceRecorder::new();
    let out = run_scenario(s, &mut trace).expect("scenario runs");
    (out, trace)
}

pub fn scenario(attack: AttackParams, seed: u64) -> Scenario {
    Scenario::new(attack, seed)
}

/// Short variants of every scenario, cheap enough to run many times.
pub fn quick(kind: AttackKind, seed: u64) -> Scenario {
    let attack = match kind {
        AttackKind::PriorityFloodDos => AttackParams::PriorityFloodDos(PriorityFloodParams {
            mode: PtaMode::ALL[(seed % 5) as usize],
            use_priority: seed.is_multiple_of(2),
            attack_start_s: 0.02,
            pings: 8,
            ping_timeout_s: 0.05,
            ..Default::default()
        }),
        AttackKind::GrantRejectDos => AttackParams::GrantRejectDos(GrantRejectParams {
            attack_start_s: 0.01,
            attack_duration_s: 0.03,
            post_s: 0.01,
        }),
        AttackKind::KeystrokeSniff => AttackParams::KeystrokeSniff(KeystrokeParams {
            presses: 4,
            ..Default::default()
        }),
        AttackKind::JitterClassify => AttackParams::JitterClassify(JitterParams {
            n_samples: 20,
            trials: 1,
            ..Default::default()
        }),
        AttackKind::GrantGlitchObserve => AttackParams::GrantGlitchObserve(GlitchParams {
            mode: PtaMode::WlanHigh,
            load_mbps: 7.0,
        }),
        other => AttackParams::default_for(other),
    };
    let mut s = Scenario::new(attack, seed);
    match kind {
        AttackKind::GrantGlitchObserve => s.duration = Some(SimTime::from_millis(20)),
        AttackKind::BleBeaconDos => s.duration = Some(SimTime::from_secs(2)),
        AttackKind::SharedmemExploit => s.duration = Some(SimTime::from_millis(200)),
        _ => {}
    }
    s
}
