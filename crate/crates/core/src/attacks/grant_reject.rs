use serde_json::json;

use super::pta_dos::{BT_ID, BT_PACKET, BT_RF_CHANNEL};
use super::{param_err, secs, AttackError, Finished, GrantRejectParams, Scenario};
use crate::analysis::{detect_dos, rate_series, DosOutcome};
use crate::devices::{connection_supervise, BtRole, LinkState};
use crate::medium::{FrequencyAllocation, Medium, TransmissionAttempt};
use crate::report::Verdict;
use crate::seci::{grant_cycle, D11Poller, Direction, GrantState, SeciConfig, SeciLink, AUDIO_ACL, NULL_ACL};
use crate::sim::{RngStream, SimTime, StreamId, TraceRecorder};
use crate::Core;

const KEEPALIVE_INTERVAL: SimTime = SimTime::from_millis(100);
/// Bluetooth reads Wi-Fi's answer this long after raising a request.
const GRANT_READ_DELAY: SimTime = SimTime::from_micros(20);
const POLL_OFFSET: SimTime = SimTime::from_micros(5);
const RATE_BIN: SimTime = SimTime::from_millis(100);

/// Wi-Fi stops granting without signalling that it went inactive. The audio
/// stream pauses; long enough and the link times out.
pub fn run_grant_reject_dos(
    s: &Scenario,
    p: &GrantRejectParams,
    trace: &mut TraceRecorder,
) -> Result<Finished, AttackError> {
    if s.bluetooth.role != BtRole::AudioStream {
        return Err(param_err("bluetooth.role", "grant_reject_dos needs an audio_stream"));
    }
    let start = secs("attack.params.attack_start_s", p.attack_start_s)?;
    let end = start + secs("attack.params.attack_duration_s", p.attack_duration_s)?;
    let duration = s.duration.unwrap_or(end + secs("attack.params.post_s", p.post_s)?);
    let period = s.bluetooth.audio_period;
    if period == SimTime::ZERO {
        return Err(param_err("bluetooth.audio_period", "must be positive"));
    }
    let wifi_24 = s.wifi.channel != 0;

    let mut link = SeciLink::new(SeciConfig::standard());
    let mut jitter = RngStream::new(s.seed, StreamId::SeciJitter);
    let poller = D11Poller::new(POLL_OFFSET);
    let mut medium = Medium::new();
    let alloc = FrequencyAllocation::bluetooth(BT_RF_CHANNEL).expect("valid rf channel");
    let sim_err = |e: crate::seci::SeciError| AttackError::Sim(e.to_string());

    let mut data_frames: Vec<SimTime> = Vec::new();
    let mut keepalives: Vec<SimTime> = Vec::new();
    let mut last_data = SimTime::ZERO;
    let mut last_keepalive = SimTime::ZERO;
    let mut state = LinkState::Alive;
    let mut timed_out_at = None;
    let mut withholding = false;

    let mut t = SimTime::ZERO;
    while t < duration && state != LinkState::TimedOut {
        let attack_on = s.enabled && t >= start && t < end;
        if attack_on != withholding {
            withholding = attack_on;
            trace.record(t, "attack.wifi", attack_on);
        }
        // Bluetooth announces the audio packet it wants to send
        link.send_message(Core::Bluetooth, &[AUDIO_ACL], t, &mut jitter, trace)
            .map_err(sim_err)?;
        // D11 sees the request on its next poll and answers
        let poll = t + POLL_OFFSET;
        debug_assert!(poller.is_poll_instant(poll));
        let req = poller.d11_poll(&link, poll).map_err(sim_err)?.is_some();
        let answer = grant_cycle(req, wifi_24, withholding);
        link.send_message(Core::Wifi, &[answer.code()], poll, &mut jitter, trace)
            .map_err(sim_err)?;

        let read_at = t + GRANT_READ_DELAY;
        let seen = link
            .latest_delivered(Direction::WifiToBt, read_at)
            .and_then(|b| GrantState::from_code(b[0]))
            .unwrap_or(GrantState::Inactive);
        let blocked = seen == GrantState::Reject;
        let mut send = |code: u8, trace: &mut TraceRecorder| -> Result<(), AttackError> {
            let a = TransmissionAttempt {
                source: BT_ID,
                alloc,
                start: read_at,
                duration: BT_PACKET,
                granted: !blocked,
            };
            medium
                .begin_tx(read_at, a, trace)
                .map_err(|e| AttackError::Sim(e.to_string()))?;
            trace.record(read_at, "dev.1.tx", code as i64);
            Ok(())
        };
        if !blocked {
            send(AUDIO_ACL, trace)?;
            data_frames.push(t);
            last_data = t;
        } else if t >= last_keepalive + KEEPALIVE_INTERVAL {
            send(NULL_ACL, trace)?;
            keepalives.push(t);
            last_keepalive = t;
        }
        let next = connection_supervise(last_data, t, blocked, &s.bluetooth);
        if next != state {
            trace.record(read_at, "dev.1.state", link_code(next));
            state = next;
            if state == LinkState::TimedOut {
                timed_out_at = Some(t);
            }
        }
        t += period;
    }

    let count = |v: &[SimTime], lo: SimTime, hi: SimTime| v.iter().filter(|&&x| x >= lo && x < hi).count();
    let series = rate_series(&data_frames, SimTime::ZERO, duration, RATE_BIN);
    let outcome = detect_dos(&series, (start, end.min(duration)));
    let post = count(&data_frames, end, duration);
    let (verdict, label) = match outcome {
        DosOutcome::Dos if state == LinkState::TimedOut => (Verdict::Success, "timed_out"),
        DosOutcome::Dos => (Verdict::Success, "paused"),
        DosOutcome::Degraded => (Verdict::Partial, "degraded"),
        DosOutcome::Unaffected => (Verdict::Failed, "unaffected"),
    };
    let metrics = json!({
        "data_frames_pre": count(&data_frames, SimTime::ZERO, start),
        "data_frames_attack": count(&data_frames, start, end),
        "data_frames_post": post,
        "keepalives_attack": count(&keepalives, start, end),
        "recovered": post > 0,
        "link_state": link_label(state),
        "timed_out_at_s": timed_out_at.map(|t| t.as_secs_f64()),
        "supervision_timeout_s": s.bluetooth.supervision_timeout.as_secs_f64(),
        "attack_duration_s": (end - start).as_secs_f64(),
    });
    Ok(Finished::new(verdict, label, metrics, duration))
}

fn link_code(s: LinkState) -> i64 {
    match s {
        LinkState::Alive => 0,
        LinkState::KeepaliveOnly => 1,
        LinkState::TimedOut => 2,
    }
}

fn link_label(s: LinkState) -> &'static str {
    match s {
        LinkState::Alive => "alive",
        LinkState::KeepaliveOnly => "keepalive_only",
        LinkState::TimedOut => "timed_out",
    }
}
