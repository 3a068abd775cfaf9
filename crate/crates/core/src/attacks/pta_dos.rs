use std::collections::VecDeque;

use serde_json::json;

use super::{ms, param_err, secs, BeaconDosParams, Finished, PriorityFloodParams, Scenario};
use crate::analysis::{detect_dos, rate_series, DosOutcome};
use crate::attacks::AttackError;
use crate::devices::{beacon_tick, BeaconAction, BtRole, WifiRole};
use crate::medium::{DeviceId, FrequencyAllocation, Medium, TransmissionAttempt};
use crate::pta::{arbitrate_step, Line, Observer, PtaConfig, PtaLines, WifiDemand, Winner};
use crate::report::Verdict;
use crate::sim::{Engine, RngStream, SimTime, StreamId, Target, TraceRecorder, BT_SLOT};

pub(super) const BT_ID: DeviceId = DeviceId(1);
pub(super) const WIFI_ID: DeviceId = DeviceId(2);
pub(super) const PEER_ID: DeviceId = DeviceId(3);

pub(super) const BT_RF_CHANNEL: u8 = 30;
pub(super) const BT_PACKET: SimTime = SimTime::from_micros(366);
pub(super) const WIFI_FRAME: SimTime = SimTime::from_micros(150);
pub(super) const SIFS: SimTime = SimTime::from_micros(10);
pub(super) const WIFI_ACK: SimTime = SimTime::from_micros(44);
const PING_TURNAROUND: SimTime = SimTime::from_micros(100);
const RATE_BIN: SimTime = SimTime::from_millis(100);

fn tx(source: DeviceId, alloc: FrequencyAllocation, start: SimTime, duration: SimTime) -> TransmissionAttempt {
    TransmissionAttempt {
        source,
        alloc,
        start,
        duration,
        granted: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Leg {
    Request,
    Reply,
}

#[derive(Debug, Clone, Copy)]
struct Op {
    ping: usize,
    leg: Leg,
}

#[derive(Debug, Clone, Copy)]
struct Exchange {
    op: Op,
    started: SimTime,
    acked: bool,
}

#[derive(Debug, Clone, Copy)]
enum FloodEvent {
    Issue(usize),
    ReplyReady(usize),
    Timeout(usize),
}

/// Bluetooth holds REQUEST (and PRIORITY) high while Wi-Fi tries to answer
/// pings; the PTA mode decides who gets the antenna.
pub fn run_priority_flood_dos(
    s: &Scenario,
    p: &PriorityFloodParams,
    trace: &mut TraceRecorder,
) -> Result<Finished, AttackError> {
    if s.wifi.role != WifiRole::AccessPoint {
        return Err(param_err("wifi.role", "priority_flood_dos needs an access_point"));
    }
    let cfg = PtaConfig::new(p.mode);
    let step = cfg.sample_period;
    let attack_start = secs("attack.params.attack_start_s", p.attack_start_s)?;
    let interval = secs("attack.params.ping_interval_ms", p.ping_interval_ms / 1e3)?;
    let timeout = secs("attack.params.ping_timeout_s", p.ping_timeout_s)?;
    if interval < step {
        return Err(param_err(
            "attack.params.ping_interval_ms",
            "shorter than one PTA sample",
        ));
    }
    let attack_end = attack_start + interval * p.pings as u64;
    let duration = s.duration.unwrap_or(attack_end + timeout);

    let mut traffic = RngStream::new(s.seed, StreamId::Traffic);
    let phase = SimTime::from_nanos(traffic.below(interval.as_nanos() / step.as_nanos()) * step.as_nanos());
    // ping timers wander; without this every ping hits the same point of
    // a WLAN_HIGH denial cycle
    let wander = (interval.as_nanos() / 2 / step.as_nanos()).max(1);
    let issue_times: Vec<SimTime> = (0..)
        .map(|k| phase + interval * k)
        .take_while(|&t| t < attack_end)
        .map(|t| t + step * traffic.below(wander))
        .collect();

    let mut engine: Engine<FloodEvent> = Engine::new();
    let target = Target("wifi.ping");
    for (i, &t) in issue_times.iter().enumerate() {
        engine
            .schedule(t, target, FloodEvent::Issue(i))
            .map_err(|e| AttackError::Sim(e.to_string()))?;
        engine
            .schedule(t + timeout, target, FloodEvent::Timeout(i))
            .map_err(|e| AttackError::Sim(e.to_string()))?;
    }

    let wifi_alloc = s.wifi.allocation();
    let bt_alloc = FrequencyAllocation::bluetooth(BT_RF_CHANNEL).expect("valid rf channel");
    let mut lines = PtaLines::new(step);
    let mut medium = Medium::new();

    let mut queue: VecDeque<Op> = VecDeque::new();
    let mut exchange: Option<Exchange> = None;
    let mut answered: Vec<Option<SimTime>> = vec![None; issue_times.len()];
    let mut expired = vec![false; issue_times.len()];
    let mut bt_packets = 0u64;
    let mut bt_aborts = 0u64;
    let mut aborted_exchanges = 0u64;
    let mut bt_on_air_until: Option<SimTime> = None;
    let mut last_slot = u64::MAX;
    let mut wifi_wins = 0u64;

    let mut t = SimTime::ZERO;
    while t < duration {
        while let Some(ev) = engine.next_event(t) {
            match ev.payload {
                FloodEvent::Issue(i) => {
                    trace.record(t, "wifi.ping", i as i64);
                    queue.push_back(Op {
                        ping: i,
                        leg: Leg::Request,
                    });
                }
                FloodEvent::ReplyReady(i) => {
                    if !expired[i] {
                        queue.push_back(Op {
                            ping: i,
                            leg: Leg::Reply,
                        });
                    }
                }
                FloodEvent::Timeout(i) => {
                    if answered[i].is_none() {
                        expired[i] = true;
                        queue.retain(|op| op.ping != i);
                    }
                }
            }
        }

        // attacker: Bluetooth firmware holds its request lines until the
        // last ping has timed out
        let attacking = s.enabled && t >= attack_start;
        let was = lines.request.level_at(t);
        if attacking != was {
            trace.record(t, "attack.bluetooth", attacking);
            lines.drive(Line::Request, t, attacking, trace);
            lines.drive(Line::Priority, t, attacking && p.use_priority, trace);
        }

        if let Some(ex) = exchange {
            if expired[ex.op.ping] {
                let (a, b) = leg_devices(ex.op.leg);
                medium.abort_tx(a, t);
                medium.abort_tx(b, t);
                exchange = None;
            }
        }
        let demand = match (exchange, queue.is_empty()) {
            (Some(_), _) => WifiDemand::InExchange,
            (None, false) => WifiDemand::Data,
            (None, true) => WifiDemand::Idle,
        };
        let seen = lines.observe_lines(t, Observer::Wifi);
        let decision = arbitrate_step(seen, demand, &cfg, t);
        lines.drive(Line::Grant, t, decision.grant_line(), trace);
        let wifi_has_air = decision.winner == Winner::Wifi;
        if wifi_has_air {
            wifi_wins += 1;
        }

        // Bluetooth reacts to GRANT (it samples its own wire exactly)
        let bt_granted = !lines.observe_lines(t, Observer::Bluetooth).grant;
        if let Some(until) = bt_on_air_until {
            if t >= until {
                bt_on_air_until = None;
            } else if !bt_granted {
                medium.abort_tx(BT_ID, t);
                bt_aborts += 1;
                bt_on_air_until = None;
            }
        }

        // Wi-Fi exchange progress
        match exchange {
            Some(ex) if !wifi_has_air => {
                let (a, b) = leg_devices(ex.op.leg);
                medium.abort_tx(a, t);
                medium.abort_tx(b, t);
                aborted_exchanges += 1;
                queue.push_front(ex.op);
                exchange = None;
            }
            Some(mut ex) => {
                let (sender, receiver) = leg_devices(ex.op.leg);
                if !ex.acked && t >= ex.started + WIFI_FRAME + SIFS {
                    medium
                        .begin_tx(t, tx(receiver, wifi_alloc, t, WIFI_ACK), trace)
                        .map_err(|e| AttackError::Sim(e.to_string()))?;
                    ex.acked = true;
                    exchange = Some(ex);
                } else if ex.acked && t >= ex.started + WIFI_FRAME + SIFS + WIFI_ACK {
                    let frame_ok = !medium.take_result(sender, t).is_some_and(|r| r.collided || r.aborted);
                    let ack_ok = !medium.take_result(receiver, t).is_some_and(|r| r.collided || r.aborted);
                    exchange = None;
                    if frame_ok && ack_ok {
                        match ex.op.leg {
                            Leg::Request => {
                                engine
                                    .schedule(t + PING_TURNAROUND, target, FloodEvent::ReplyReady(ex.op.ping))
                                    .map_err(|e| AttackError::Sim(e.to_string()))?;
                            }
                            Leg::Reply => {
                                answered[ex.op.ping] = Some(t);
                                trace.record(t, "wifi.ping.reply", ex.op.ping as i64);
                            }
                        }
                    } else {
                        queue.push_front(ex.op);
                    }
                }
            }
            None if wifi_has_air && demand == WifiDemand::Data => {
                let op = queue.pop_front().expect("demand implies a queued op");
                let (sender, _) = leg_devices(op.leg);
                medium
                    .begin_tx(t, tx(sender, wifi_alloc, t, WIFI_FRAME), trace)
                    .map_err(|e| AttackError::Sim(e.to_string()))?;
                exchange = Some(Exchange {
                    op,
                    started: t,
                    acked: false,
                });
            }
            None => {}
        }
        let slot = t.as_nanos() / BT_SLOT.as_nanos();
        if attacking && bt_granted && slot != last_slot && bt_on_air_until.is_none() {
            medium
                .begin_tx(t, tx(BT_ID, bt_alloc, t, BT_PACKET), trace)
                .map_err(|e| AttackError::Sim(e.to_string()))?;
            bt_packets += 1;
            bt_on_air_until = Some(t + BT_PACKET);
        }
        last_slot = slot;

        t += step;
    }

    let idx_in = |lo: SimTime, hi: SimTime| -> Vec<usize> {
        (0..issue_times.len())
            .filter(|&i| issue_times[i] >= lo && issue_times[i] < hi)
            .collect()
    };
    let pre = idx_in(SimTime::ZERO, attack_start);
    let during = idx_in(attack_start, attack_end);
    let delays = |idx: &[usize]| -> Vec<f64> {
        idx.iter()
            .filter_map(|&i| answered[i].map(|a| ms(a - issue_times[i])))
            .collect()
    };
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let base_delay = mean(&delays(&pre));
    let attack_delays = delays(&during);
    let attack_delay = mean(&attack_delays);
    // replies per second at the nominal ping rate, bin by bin
    let issued = rate_series(&issue_times, SimTime::ZERO, attack_end, RATE_BIN);
    let answered_issue: Vec<SimTime> = (0..issue_times.len())
        .filter(|&i| answered[i].is_some())
        .map(|i| issue_times[i])
        .collect();
    let series: Vec<(SimTime, f64)> = rate_series(&answered_issue, SimTime::ZERO, attack_end, RATE_BIN)
        .into_iter()
        .zip(&issued)
        .filter(|(_, &(_, n))| n > 0.0)
        .map(|((t, a), &(_, n))| (t, a / n / interval.as_secs_f64()))
        .collect();
    let mut outcome = detect_dos(&series, (attack_start, attack_end));
    if outcome == DosOutcome::Unaffected {
        if let (Some(b), Some(a)) = (base_delay, attack_delay) {
            if a > 2.0 * b {
                outcome = DosOutcome::Degraded;
            }
        }
    }
    let (verdict, label) = match outcome {
        DosOutcome::Dos => (Verdict::Success, "dos"),
        DosOutcome::Degraded => (Verdict::Partial, "degraded"),
        DosOutcome::Unaffected => (Verdict::Failed, "unaffected"),
    };
    let lost = during.len() - attack_delays.len();
    let metrics = json!({
        "mode": p.mode,
        "use_priority": p.use_priority,
        "pings_baseline": pre.len(),
        "pings_attack": during.len(),
        "pings_answered_attack": attack_delays.len(),
        "loss_pct": if during.is_empty() { 0.0 } else { 100.0 * lost as f64 / during.len() as f64 },
        "baseline_delay_ms": base_delay,
        "attack_delay_ms": attack_delay,
        "dos_class": label,
        "bt_packets": bt_packets,
        "bt_aborts": bt_aborts,
        "wifi_aborted_exchanges": aborted_exchanges,
        "wifi_grant_fraction": wifi_wins as f64 / (duration.as_nanos() / step.as_nanos()).max(1) as f64,
        "collisions": medium.collisions().len(),
    });
    Ok(Finished::new(verdict, label, metrics, duration))
}

fn leg_devices(leg: Leg) -> (DeviceId, DeviceId) {
    match leg {
        Leg::Request => (WIFI_ID, PEER_ID),
        Leg::Reply => (PEER_ID, WIFI_ID),
    }
}

#[derive(Debug, Clone, Copy)]
enum BeaconEvent {
    Advertise,
    Pdu(u8),
    DenyStart,
    DenyEnd,
    RequestEnd,
}

const ADV_PDU: SimTime = SimTime::from_micros(376);
const ADV_CHANNEL_GAP: SimTime = SimTime::from_micros(150);
/// Request length of a beacon that has given up advertising.
const SHORT_REQUEST: SimTime = SimTime::from_micros(20);

/// Wi-Fi forces GRANT to deny once; the beacon never comes back.
pub fn run_ble_beacon_dos(
    s: &Scenario,
    p: &BeaconDosParams,
    trace: &mut TraceRecorder,
) -> Result<Finished, AttackError> {
    if s.bluetooth.role != BtRole::Beacon {
        return Err(param_err("bluetooth.role", "ble_beacon_dos needs a beacon"));
    }
    let duration = s.duration.unwrap_or(SimTime::from_secs(180));
    let interval = secs("attack.params.advertising_interval_ms", p.advertising_interval_ms / 1e3)?;
    if interval < SimTime::from_millis(20) {
        return Err(param_err(
            "attack.params.advertising_interval_ms",
            "below the 20 ms BLE minimum",
        ));
    }
    let deny_at = secs("attack.params.deny_at_s", p.deny_at_s)?;
    let deny_end = match p.deny_for_s {
        Some(v) => (deny_at + secs("attack.params.deny_for_s", v)?).min(duration),
        None => duration,
    };

    let cfg = PtaConfig::default();
    let mut lines = PtaLines::new(cfg.sample_period);
    let mut medium = Medium::new();
    let mut profile = s.bluetooth.clone();
    let mut engine: Engine<BeaconEvent> = Engine::new();
    let target = Target("bt.beacon");
    let sched = |e: &mut Engine<BeaconEvent>, t: SimTime, ev| {
        e.schedule(t, target, ev).map_err(|e| AttackError::Sim(e.to_string()))
    };
    let mut t = SimTime::ZERO;
    while t < duration {
        sched(&mut engine, t, BeaconEvent::Advertise)?;
        t += interval;
    }
    if s.enabled && deny_at < duration {
        sched(&mut engine, deny_at, BeaconEvent::DenyStart)?;
        sched(&mut engine, deny_end, BeaconEvent::DenyEnd)?;
    }

    let mut forcing = false;
    let mut adverts = Vec::new();
    let mut first_denial: Option<SimTime> = None;
    let mut short_requests = 0u64;
    let sample = cfg.sample_period;
    while let Some(ev) = engine.next_event(duration) {
        let now = ev.fire_at;
        match ev.payload {
            BeaconEvent::DenyStart => {
                forcing = true;
                trace.record(now, "attack.wifi", 1i64);
                lines.drive(Line::Grant, now, true, trace);
            }
            BeaconEvent::DenyEnd => {
                forcing = false;
                trace.record(now, "attack.wifi", 0i64);
                lines.drive(Line::Grant, now, false, trace);
            }
            BeaconEvent::RequestEnd => {
                lines.drive(Line::Request, now, false, trace);
            }
            BeaconEvent::Pdu(idx) => {
                let alloc = FrequencyAllocation::ble_advertising(idx).expect("advertising index");
                medium
                    .begin_tx(now, tx(BT_ID, alloc, now, ADV_PDU), trace)
                    .map_err(|e| AttackError::Sim(e.to_string()))?;
                let next = now + ADV_PDU + ADV_CHANNEL_GAP;
                let ev = if idx < 39 {
                    BeaconEvent::Pdu(idx + 1)
                } else {
                    BeaconEvent::RequestEnd
                };
                sched(&mut engine, next.min(duration), ev)?;
            }
            BeaconEvent::Advertise => {
                lines.drive(Line::Request, now, true, trace);
                // controller answers within one sample; Wi-Fi itself is idle
                let seen = lines.observe_lines(now, Observer::Wifi);
                let honest = arbitrate_step(seen, WifiDemand::Idle, &cfg, now);
                lines.drive(Line::Grant, now, forcing || honest.grant_line(), trace);
                let look = now + sample;
                let denied = lines.observe_lines(look, Observer::Bluetooth).grant;
                let action = beacon_tick(&mut profile, denied).map_err(|e| AttackError::Sim(e.to_string()))?;
                if denied && first_denial.is_none() {
                    first_denial = Some(now);
                    trace.record(now, "dev.1.state", 0i64);
                }
                match action {
                    BeaconAction::Advertise => {
                        trace.record(now, "dev.1.tx", 1i64);
                        adverts.push(now);
                        sched(&mut engine, look.min(duration), BeaconEvent::Pdu(37))?;
                    }
                    BeaconAction::Suppressed => {
                        short_requests += 1;
                        sched(
                            &mut engine,
                            (now + SHORT_REQUEST).min(duration),
                            BeaconEvent::RequestEnd,
                        )?;
                    }
                }
            }
        }
    }

    let after = first_denial.map_or(0, |d| adverts.iter().filter(|&&a| a >= d).count());
    let restored = if first_denial.is_some() {
        duration.saturating_sub(deny_end)
    } else {
        SimTime::ZERO
    };
    let (verdict, outcome) = match first_denial {
        None => (Verdict::Failed, "unaffected"),
        Some(_) if after == 0 && restored >= SimTime::from_secs(120) => (Verdict::Success, "permanent_dos"),
        Some(_) if after == 0 => (Verdict::Success, "dos"),
        Some(_) => (Verdict::Partial, "temporary_dos"),
    };
    let metrics = json!({
        "adverts_total": adverts.len(),
        "adverts_before_denial": adverts.len() - after,
        "adverts_after_denial": after,
        "first_denial_s": first_denial.map(|d| d.as_secs_f64()),
        "restored_grant_s": restored.as_secs_f64(),
        "short_requests": short_requests,
        "latched": profile.latched_stop,
    });
    Ok(Finished::new(verdict, outcome, metrics, duration))
}
