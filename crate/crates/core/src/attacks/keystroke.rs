use serde_json::json;

use super::pta_dos::BT_ID;
use super::{ms, param_err, secs, AttackError, Finished, KeystrokeParams, Scenario};
use crate::analysis::{reconstruct_keystrokes, KeystrokeTimeline};
use crate::devices::{BtDevice, BtRole, KeystrokeScript};
use crate::medium::Medium;
use crate::report::Verdict;
use crate::seci::{D11Poller, SeciConfig, SeciLink, KEYSTROKE_ACL, NULL_ACL};
use crate::sim::{RngStream, SimTime, StreamId, TraceRecorder};
use crate::Core;

/// D11 polls land just after each Bluetooth clock tick.
pub const POLL_OFFSET: SimTime = SimTime::from_micros(5);

#[derive(Debug, Clone, PartialEq)]
pub struct KeystrokeMatch {
    pub recovered: usize,
    pub false_detections: usize,
    pub merged: usize,
    pub errors: Vec<SimTime>,
}

/// Pairs each detection with the presses it can stand for: those in the
/// HID interval ending at the poll that saw it.
pub fn match_keystrokes(presses: &[SimTime], timeline: &KeystrokeTimeline, interval: SimTime) -> KeystrokeMatch {
    let mut used = vec![false; presses.len()];
    let mut out = KeystrokeMatch {
        recovered: 0,
        false_detections: 0,
        merged: 0,
        errors: Vec::new(),
    };
    for d in &timeline.detections {
        let lo = d.at.saturating_sub(interval + POLL_OFFSET);
        let hits: Vec<usize> = (0..presses.len())
            .filter(|&i| !used[i] && presses[i] > lo && presses[i] <= d.at)
            .collect();
        if hits.is_empty() {
            out.false_detections += 1;
            continue;
        }
        out.merged += hits.len() - 1;
        for i in hits {
            used[i] = true;
            let err = d.at - presses[i];
            if err <= interval {
                out.recovered += 1;
            }
            out.errors.push(err);
        }
    }
    out
}

/// Wi-Fi reads the Bluetooth `gci_output` every 1.25 ms and rebuilds when
/// keys were pressed from the ACL type codes.
pub fn run_keystroke_sniff(
    s: &Scenario,
    p: &KeystrokeParams,
    trace: &mut TraceRecorder,
) -> Result<Finished, AttackError> {
    if s.bluetooth.role != BtRole::HidKeyboard {
        return Err(param_err("bluetooth.role", "keystroke_sniff needs a hid_keyboard"));
    }
    let interval = s.bluetooth.hid_interval;
    let script = match &p.script_ms {
        Some(v) => {
            let times = v
                .iter()
                .map(|&x| secs("attack.params.script_ms", x / 1e3))
                .collect::<Result<Vec<_>, _>>()?;
            KeystrokeScript::new(times).map_err(|e| param_err("attack.params.script_ms", e.to_string()))?
        }
        None => {
            let gap = match p.min_gap_ms {
                Some(g) => secs("attack.params.min_gap_ms", g / 1e3)?,
                None => interval,
            };
            let mut rng = RngStream::new(s.seed, StreamId::Traffic);
            KeystrokeScript::random(
                p.presses as usize,
                secs("attack.params.start_ms", p.start_ms / 1e3)?,
                gap,
                secs("attack.params.max_extra_ms", p.max_extra_ms / 1e3)?,
                SimTime::from_millis(1),
                &mut rng,
            )
        }
    };
    let last = script.press_times().last().copied().unwrap_or(SimTime::ZERO);
    let duration = s.duration.unwrap_or(last + interval * 3 + SimTime::from_millis(100));

    let device = BtDevice::new(BT_ID, s.bluetooth.clone());
    let mut link = SeciLink::new(SeciConfig::standard());
    let mut jitter = RngStream::new(s.seed, StreamId::SeciJitter);
    let mut medium = Medium::new();
    let poller = D11Poller::new(POLL_OFFSET);
    let null_gap = D11Poller::PERIOD;
    let sim = |e: String| AttackError::Sim(e);

    // Keyboard ticks and D11 polls, merged in time order.
    let mut polls: Vec<(SimTime, u8)> = Vec::new();
    let mut poll_times = poller.instants(duration).peekable();
    let mut trailing_null: Option<SimTime> = None;
    let mut tick = SimTime::ZERO;
    loop {
        let next_tick = (tick <= duration).then_some(tick);
        let next_poll = poll_times.peek().copied();
        let next_null = trailing_null;
        let Some(now) = [next_tick, next_poll, next_null].into_iter().flatten().min() else {
            break;
        };
        if next_null == Some(now) {
            link.send_message(Core::Bluetooth, &[NULL_ACL], now, &mut jitter, trace)
                .map_err(|e| sim(e.to_string()))?;
            trailing_null = None;
        } else if next_tick == Some(now) {
            let report = device.hid_tick(&script, now).map_err(|e| sim(e.to_string()))?;
            medium.begin_tx(now, report.tx, trace).map_err(|e| sim(e.to_string()))?;
            trace.record(now, "dev.1.tx", report.code as i64);
            link.send_message(Core::Bluetooth, &[report.code], now, &mut jitter, trace)
                .map_err(|e| sim(e.to_string()))?;
            if report.code == KEYSTROKE_ACL {
                trailing_null = Some(now + null_gap);
            }
            tick += interval;
        } else {
            poll_times.next();
            if s.enabled {
                if let Some(v) = poller.d11_poll(&link, now).map_err(|e| sim(e.to_string()))? {
                    if v[0] == KEYSTROKE_ACL {
                        trace.record(now, "attack.wifi", v[0] as i64);
                    }
                    polls.push((now, v[0]));
                }
            }
        }
    }

    let timeline = reconstruct_keystrokes(&polls);
    let m = match_keystrokes(script.press_times(), &timeline, interval);
    let n = script.len();
    let verdict = if n > 0 && m.recovered == n && m.false_detections == 0 && m.merged == 0 {
        Verdict::Success
    } else if m.recovered > 0 {
        Verdict::Partial
    } else {
        Verdict::Failed
    };
    let errs: Vec<f64> = m.errors.iter().map(|&e| ms(e)).collect();
    let metrics = json!({
        "hid_interval_ms": ms(interval),
        "presses": n,
        "detections": timeline.detections.len(),
        "recovered": m.recovered,
        "false_detections": m.false_detections,
        "merged_presses": m.merged,
        "max_error_ms": errs.iter().copied().fold(None, |a: Option<f64>, e| Some(a.map_or(e, |a| a.max(e)))),
        "mean_error_ms": (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64),
        "press_times_ms": script.press_times().iter().map(|&t| ms(t)).collect::<Vec<_>>(),
        "timeline_ms": timeline.detections.iter().map(|d| ms(d.at)).collect::<Vec<_>>(),
    });
    let label = if verdict == Verdict::Success {
        "recovered"
    } else if m.recovered > 0 {
        "incomplete"
    } else {
        "none"
    };
    Ok(Finished::new(verdict, label, metrics, duration))
}
