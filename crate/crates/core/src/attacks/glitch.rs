use serde_json::json;

use super::{param_err, AttackError, Finished, GlitchParams, Scenario};
use crate::pta::{
    arbitrate_step, inject_grant_glitch, GlitchPulse, Line, Observer, PtaConfig, PtaLines, WifiDemand, Winner,
};
use crate::report::Verdict;
use crate::sim::{RngStream, SimTime, StreamId, TraceRecorder};

const FRAME_BYTES: u64 = 1500;
/// 1500 B at 54 Mbit/s plus preamble, then SIFS and ACK.
const FRAME_EXCHANGE: SimTime = SimTime::from_micros(304);
const ADV_INTERVAL: SimTime = SimTime::from_millis(100);
const ADV_EVENT: SimTime = SimTime::from_micros(1580);
/// Bluetooth samples GRANT half a period out of phase with the controller.
const BT_SAMPLE_EPOCH: SimTime = SimTime::from_micros(5);

struct Pass {
    busy: Vec<(SimTime, SimTime)>,
    frames: u64,
    glitches: u64,
    visible: u64,
}

fn simulate(
    cfg: &PtaConfig,
    load_mbps: f64,
    duration: SimTime,
    glitches: &[GlitchPulse],
    bt_watching: bool,
    trace: &mut TraceRecorder,
) -> Pass {
    let step = cfg.sample_period;
    let gap = (load_mbps > 0.0).then(|| SimTime::from_secs_f64(FRAME_BYTES as f64 * 8.0 / (load_mbps * 1e6)));
    let mut next_arrival = gap.map(|_| SimTime::ZERO);
    let mut queued = 0u64;
    let mut frame_end: Option<SimTime> = None;
    let mut frames = 0u64;
    let mut lines = PtaLines::new(step);
    let mut pulses = glitches.iter().peekable();
    let mut busy = Vec::new();
    let mut high_since: Option<SimTime> = None;
    let (mut seen, mut visible) = (0, 0);

    let mut t = SimTime::ZERO;
    while t < duration {
        while let (Some(a), Some(g)) = (next_arrival, gap) {
            if a > t {
                break;
            }
            queued += 1;
            next_arrival = Some(a + g);
        }
        let in_adv = (t.as_nanos() % ADV_INTERVAL.as_nanos()) < ADV_EVENT.as_nanos();
        lines.drive(Line::Request, t, in_adv, trace);

        if frame_end.is_some_and(|e| t >= e) {
            frame_end = None;
            frames += 1;
        }
        let demand = match (frame_end, queued) {
            (Some(_), _) => WifiDemand::InExchange,
            (None, 0) => WifiDemand::Idle,
            (None, _) => WifiDemand::Data,
        };
        let d = arbitrate_step(lines.observe_lines(t, Observer::Wifi), demand, cfg, t);
        let wifi = d.winner == Winner::Wifi;
        lines.drive(Line::Grant, t, d.grant_line(), trace);
        match (frame_end, wifi) {
            (Some(_), false) => {
                frame_end = None;
            }
            (None, true) if queued > 0 => {
                queued -= 1;
                frame_end = Some(t + FRAME_EXCHANGE);
            }
            _ => {}
        }
        match (high_since, wifi) {
            (None, true) => high_since = Some(t),
            (Some(h), false) => {
                busy.push((h, t - h));
                high_since = None;
            }
            _ => {}
        }

        // the defect: GRANT drops to 0 V for a moment
        let next = t + step;
        while let Some(p) = pulses.next_if(|p| p.at < next) {
            let at = p.at.max(t).min(next - p.duration);
            if lines.grant.level_at(at) {
                lines.drive(Line::Grant, at, false, trace);
                seen += 1;
                let sample = at.ceil_to(BT_SAMPLE_EPOCH, step);
                if bt_watching && sample < at + p.duration {
                    visible += 1;
                    trace.record(sample, "attack.bluetooth", 1i64);
                }
                lines.drive(Line::Grant, at + p.duration, true, trace);
            }
        }
        t = next;
    }
    if let Some(h) = high_since {
        busy.push((h, duration - h));
    }
    Pass {
        busy,
        frames,
        glitches: seen,
        visible,
    }
}

/// GRANT pulses observed under Wi-Fi load. Only a logic analyzer sees them
/// reliably; Bluetooth catches one when a sample happens to land inside.
pub fn run_grant_glitch_observe(
    s: &Scenario,
    p: &GlitchParams,
    trace: &mut TraceRecorder,
) -> Result<Finished, AttackError> {
    if !(p.load_mbps.is_finite() && p.load_mbps >= 0.0) {
        return Err(param_err("attack.params.load_mbps", "must be a non-negative rate"));
    }
    let cfg = PtaConfig::new(p.mode);
    let duration = s.duration.unwrap_or(SimTime::from_secs(1));

    let dry = simulate(&cfg, p.load_mbps, duration, &[], false, &mut TraceRecorder::new());
    let mut stream = RngStream::new(s.seed, StreamId::PtaJitter);
    let pulses = inject_grant_glitch(p.load_mbps, &cfg, &mut stream, &dry.busy);
    let run = simulate(&cfg, p.load_mbps, duration, &pulses, s.enabled, trace);
    let glitches = run.glitches;
    let high: u64 = run.busy.iter().map(|b| b.1.as_nanos()).sum();
    let (verdict, label) = if s.enabled && glitches > 0 {
        (Verdict::Success, "glitches")
    } else {
        (Verdict::Failed, "clean")
    };
    let metrics = json!({
        "mode": p.mode,
        "load_mbps": p.load_mbps,
        "glitches": glitches,
        "glitches_visible_to_bt": run.visible,
        "wifi_frames": run.frames,
        "grant_high_fraction": high as f64 / duration.as_nanos().max(1) as f64,
    });
    Ok(Finished::new(verdict, label, metrics, duration))
}
