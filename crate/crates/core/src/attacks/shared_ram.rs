use serde_json::json;

use super::{param_err, AttackError, Finished, Scenario, SharedmemParams};
use crate::report::Verdict;
use crate::sharedmem::{
    extract_secrets, find_executable_regions, BranchProbe, ChipConfig, ComboChip, Credentials, ExecOutcome, ExecRegion,
    FinderConfig, BT_WINDOW_BASE, DEFAULT_WINDOW_LEN, WINDOW_DELTA,
};
use crate::sim::{RngStream, SimTime, StreamId, TraceRecorder};

const ASSOC_POLL: SimTime = SimTime::from_millis(100);
const ASSOC_GIVE_UP: SimTime = SimTime::from_secs(10);

fn hex(v: u32) -> String {
    format!("0x{v:06x}")
}

/// Bluetooth writes branch probes into Wi-Fi RAM through the shared window
/// until Wi-Fi crashes on one, then reads the Wi-Fi secrets from the crash
/// dumps.
pub fn run_sharedmem_exploit(
    s: &Scenario,
    p: &SharedmemParams,
    trace: &mut TraceRecorder,
) -> Result<Finished, AttackError> {
    if !(0.0..=1.0).contains(&p.p_unstable) {
        return Err(param_err("attack.params.p_unstable", "must be within [0, 1]"));
    }
    let mut regions = Vec::new();
    for &bt in &p.exec_regions {
        if !(BT_WINDOW_BASE..BT_WINDOW_BASE + DEFAULT_WINDOW_LEN).contains(&bt) {
            return Err(param_err(
                "attack.params.exec_regions",
                format!("{} is outside the window", hex(bt)),
            ));
        }
        regions.push(ExecRegion {
            start: bt - WINDOW_DELTA,
            len: p.region_len,
        });
    }
    let cfg = ChipConfig {
        powered: p.wifi_powered,
        p_unstable: p.p_unstable,
        credentials: p.associated.then(|| Credentials {
            ssid: p.ssid.clone(),
            passphrase: p.passphrase.clone(),
        }),
        ..ChipConfig::default()
    };
    let assoc_delay = cfg.assoc_delay;
    let mut chip = ComboChip::new(cfg, regions)?;

    if !s.enabled {
        let duration = s.duration.unwrap_or(SimTime::from_secs(1));
        let metrics = json!({ "regions_found": [], "crash_pcs": [], "secrets": null, "probes": 0 });
        return Ok(Finished::new(Verdict::Failed, "disabled", metrics, duration));
    }

    let finder = FinderConfig {
        target: p.finder_target,
        verify_reads: p.verify_reads,
        deadline: s.duration.unwrap_or(FinderConfig::default().deadline),
        ..FinderConfig::default()
    };
    let mut stream = RngStream::new(s.seed, StreamId::Fuzzer);
    let found = find_executable_regions(&mut chip, SimTime::ZERO, &finder, &mut stream, trace)?;
    let mut crashes = found.crashes;
    let mut now = found.finished_at;

    // a second probe with a target of our choosing, once Wi-Fi holds secrets
    let mut expected_pc = None;
    if let Some(&region) = found.regions.first() {
        let give_up = now.max(assoc_delay) + ASSOC_GIVE_UP;
        while p.associated && !chip.is_associated(now) && now < give_up {
            now += ASSOC_POLL;
        }
        let probe = BranchProbe::new(region, p.probe_target);
        if chip.bt_write(now, region, &probe.encode()).is_ok() {
            trace.record(now, "attack.bluetooth", region as i64);
            expected_pc = Some(probe.expected_pc());
            now += finder.probe_dwell;
            if let ExecOutcome::Crashed(log) = chip.wifi_execute_check(now) {
                trace.record(now, "shm.crash", log.pc as i64);
                crashes.push(log);
            }
        }
    }

    let secrets = crashes.iter().rev().find_map(extract_secrets);
    let (verdict, label) = match (found.regions.is_empty(), &secrets) {
        (false, Some(_)) => (Verdict::Success, "secrets_leaked"),
        (false, None) => (Verdict::Partial, "code_exec"),
        (true, _) => (Verdict::Failed, if found.exhausted { "no_regions" } else { "deadline" }),
    };
    let metrics = json!({
        "regions_found": found.regions.iter().map(|&r| hex(r)).collect::<Vec<_>>(),
        "crash_pcs": crashes.iter().map(|c| hex(c.pc)).collect::<Vec<_>>(),
        "expected_pc": expected_pc.map(hex),
        "secrets": secrets,
        "probes": found.probes,
        "finder_time_s": found.finished_at.as_secs_f64(),
        "exhausted": found.exhausted,
    });
    let mut out = Finished::new(verdict, label, metrics, now);
    out.crash_logs = crashes;
    Ok(out)
}
