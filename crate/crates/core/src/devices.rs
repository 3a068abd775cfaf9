//! Endpoint behaviours that generate the traffic the attacks observe or
//! disrupt: BLE beacon, ACL audio stream, HID keyboard on the Bluetooth side;
//! scanner, access point and loaded station on the Wi-Fi side.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::medium::{AllocationError, DeviceId, FrequencyAllocation, TransmissionAttempt};
use crate::seci::{Direction, SeciMessage, KEYSTROKE_ACL, NULL_ACL, SCAN_START};
use crate::sim::{RngStream, SimTime};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DeviceError {
    #[error("HID interval {0} is not one of 12.5, 15 or 30 ms")]
    UnsupportedHidInterval(SimTime),
    #[error("{at} is not a multiple of the {interval} HID interval")]
    OffTick { at: SimTime, interval: SimTime },
    #[error("operation needs a {expected} profile")]
    WrongRole { expected: &'static str },
    #[error("keystroke press times must be strictly increasing (index {0})")]
    UnorderedScript(usize),
    #[error("offered load must be a finite non-negative rate")]
    BadLoad,
    #[error(transparent)]
    Allocation(#[from] AllocationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BtRole {
    Beacon,
    AudioStream,
    HidKeyboard,
}

/// Report intervals of real keyboards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyboardModel {
    AppleWireless,
    AppleMagic,
    AdafruitMini,
}

impl KeyboardModel {
    pub const ALL: [KeyboardModel; 3] = [
        KeyboardModel::AppleWireless,
        KeyboardModel::AppleMagic,
        KeyboardModel::AdafruitMini,
    ];

    pub fn hid_interval(self) -> SimTime {
        match self {
            KeyboardModel::AppleWireless => SimTime::from_micros(12_500),
            KeyboardModel::AppleMagic => SimTime::from_millis(15),
            KeyboardModel::AdafruitMini => SimTime::from_millis(30),
        }
    }

    pub fn from_interval(interval: SimTime) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.hid_interval() == interval)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BtDeviceProfile {
    pub role: BtRole,
    pub hid_interval: SimTime,
    pub supervision_timeout: SimTime,
    /// Set once a beacon has been denied; it never advertises again.
    pub latched_stop: bool,
    pub advertising_interval: SimTime,
    pub audio_period: SimTime,
}

pub const DEFAULT_SUPERVISION_TIMEOUT: SimTime = SimTime::from_secs(5);

impl BtDeviceProfile {
    fn base(role: BtRole) -> Self {
        BtDeviceProfile {
            role,
            hid_interval: KeyboardModel::AppleMagic.hid_interval(),
            supervision_timeout: DEFAULT_SUPERVISION_TIMEOUT,
            latched_stop: false,
            advertising_interval: SimTime::from_millis(100),
            audio_period: SimTime::from_micros(1250),
        }
    }

    pub fn beacon() -> Self {
        Self::base(BtRole::Beacon)
    }

    /// ACL audio every two slots.
    pub fn audio_stream() -> Self {
        Self::base(BtRole::AudioStream)
    }

    pub fn hid_keyboard(interval: SimTime) -> Result<Self, DeviceError> {
        if KeyboardModel::from_interval(interval).is_none() {
            return Err(DeviceError::UnsupportedHidInterval(interval));
        }
        Ok(BtDeviceProfile {
            hid_interval: interval,
            ..Self::base(BtRole::HidKeyboard)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WifiRole {
    Scanner,
    AccessPoint,
    StationLoad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WifiDeviceProfile {
    pub role: WifiRole,
    pub channel: u8,
    pub bandwidth_mhz: u16,
    pub offered_load_mbps: f64,
}

impl WifiDeviceProfile {
    pub fn new(role: WifiRole, channel: u8, bandwidth_mhz: u16, offered_load_mbps: f64) -> Result<Self, DeviceError> {
        FrequencyAllocation::wifi(channel, bandwidth_mhz)?;
        if !offered_load_mbps.is_finite() || offered_load_mbps < 0.0 {
            return Err(DeviceError::BadLoad);
        }
        Ok(WifiDeviceProfile {
            role,
            channel,
            bandwidth_mhz,
            offered_load_mbps,
        })
    }

    pub fn allocation(&self) -> FrequencyAllocation {
        FrequencyAllocation::wifi(self.channel, self.bandwidth_mhz).expect("validated at construction")
    }
}

/// Ground-truth key press instants, strictly increasing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeystrokeScript {
    press_times: Vec<SimTime>,
}

impl KeystrokeScript {
    pub fn new(press_times: Vec<SimTime>) -> Result<Self, DeviceError> {
        if let Some(i) = press_times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(DeviceError::UnorderedScript(i + 1));
        }
        Ok(KeystrokeScript { press_times })
    }

    /// `count` presses starting after `start`, spaced at least `min_gap`
    /// plus a random extra of up to `max_extra`, on a `resolution` grid.
    pub fn random(
        count: usize,
        start: SimTime,
        min_gap: SimTime,
        max_extra: SimTime,
        resolution: SimTime,
        rng: &mut RngStream,
    ) -> Self {
        let res = resolution.as_nanos().max(1);
        let mut t = start.ceil_to(SimTime::ZERO, resolution);
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            if i > 0 {
                let extra = rng.below(max_extra.as_nanos() / res + 1) * res;
                t = (t + min_gap).ceil_to(SimTime::ZERO, resolution) + SimTime::from_nanos(extra);
            }
            out.push(t);
        }
        KeystrokeScript { press_times: out }
    }

    pub fn press_times(&self) -> &[SimTime] {
        &self.press_times
    }

    pub fn len(&self) -> usize {
        self.press_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.press_times.is_empty()
    }

    /// Presses in the half-open window `(from, to]`.
    pub fn presses_in(&self, from: SimTime, to: SimTime) -> &[SimTime] {
        let lo = self.press_times.partition_point(|&p| p <= from);
        let hi = self.press_times.partition_point(|&p| p <= to);
        &self.press_times[lo..hi]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HidReport {
    pub code: u8,
    pub tx: TransmissionAttempt,
}

/// Air time of one DM1 ACL packet.
pub const ACL_PACKET_AIRTIME: SimTime = SimTime::from_micros(366);

/// A Bluetooth endpoint with its link parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BtDevice {
    pub id: DeviceId,
    pub profile: BtDeviceProfile,
    pub rf_channel: u8,
}

impl BtDevice {
    pub fn new(id: DeviceId, profile: BtDeviceProfile) -> Self {
        BtDevice {
            id,
            profile,
            rf_channel: 10,
        }
    }

    /// The ACL report the keyboard sends at tick `at`: a keystroke packet if
    /// any press fell in the preceding interval, else an empty packet.
    /// Several presses in one interval collapse into a single report.
    pub fn hid_tick(&self, script: &KeystrokeScript, at: SimTime) -> Result<HidReport, DeviceError> {
        if self.profile.role != BtRole::HidKeyboard {
            return Err(DeviceError::WrongRole {
                expected: "hid_keyboard",
            });
        }
        let interval = self.profile.hid_interval;
        if !at.as_nanos().is_multiple_of(interval.as_nanos()) {
            return Err(DeviceError::OffTick { at, interval });
        }
        let from = at.checked_sub(interval).unwrap_or(SimTime::ZERO);
        let pressed = !script.presses_in(from, at).is_empty()
            || (at == SimTime::ZERO && script.press_times.first() == Some(&SimTime::ZERO));
        let code = if pressed { KEYSTROKE_ACL } else { NULL_ACL };
        Ok(HidReport {
            code,
            tx: TransmissionAttempt {
                source: self.id,
                alloc: FrequencyAllocation::bluetooth(self.rf_channel)?,
                start: at,
                duration: ACL_PACKET_AIRTIME,
                granted: true,
            },
        })
    }

    pub fn beacon_tick(&mut self, grant_denied: bool) -> Result<BeaconAction, DeviceError> {
        beacon_tick(&mut self.profile, grant_denied)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeaconAction {
    Advertise,
    Suppressed,
}

/// One advertising event. A single denial latches the beacon off for good,
/// even after grants come back.
pub fn beacon_tick(profile: &mut BtDeviceProfile, grant_denied: bool) -> Result<BeaconAction, DeviceError> {
    if profile.role != BtRole::Beacon {
        return Err(DeviceError::WrongRole { expected: "beacon" });
    }
    if grant_denied {
        profile.latched_stop = true;
    }
    Ok(if profile.latched_stop {
        BeaconAction::Suppressed
    } else {
        BeaconAction::Advertise
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkState {
    Alive,
    KeepaliveOnly,
    TimedOut,
}

/// Link supervision: a link that has not carried data for the supervision
/// timeout is dead; before that, blocked data leaves only keep-alives.
pub fn connection_supervise(
    last_data_at: SimTime,
    now: SimTime,
    data_blocked: bool,
    profile: &BtDeviceProfile,
) -> LinkState {
    let silent_for = now.saturating_sub(last_data_at);
    if silent_for >= profile.supervision_timeout {
        LinkState::TimedOut
    } else if data_blocked {
        LinkState::KeepaliveOnly
    } else {
        LinkState::Alive
    }
}

/// Gap between the peaks of a scan pattern.
pub const SCAN_PEAK_GAP: SimTime = SimTime::from_millis(2);
/// Time spent per reported scan result.
pub const SCAN_RESULT_SPACING: SimTime = SimTime::from_millis(40);

/// SECI messages Wi-Fi emits for one scan: two peaks at the start, one per
/// intermediate result, one at the end. Non-scanners emit nothing.
pub fn wifi_scan(profile: &WifiDeviceProfile, at: SimTime, intermediate: u8) -> Vec<SeciMessage> {
    if profile.role != WifiRole::Scanner {
        return Vec::new();
    }
    let msg = |sent_at, payload: Vec<u8>| SeciMessage {
        sent_at,
        payload,
        direction: Direction::WifiToBt,
    };
    let mut out = vec![
        msg(at, SCAN_START.to_vec()),
        msg(at + SCAN_PEAK_GAP, vec![0xdb, 0xe2, 0x3c]),
    ];
    let mut t = at + SCAN_PEAK_GAP;
    for i in 0..intermediate {
        t += SCAN_RESULT_SPACING;
        out.push(msg(t, vec![0xdb, 0xe3, i]));
    }
    out.push(msg(t + SCAN_RESULT_SPACING, vec![0xdb, 0xe0]));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keyboard(ms: u64) -> BtDevice {
        BtDevice::new(
            DeviceId(1),
            BtDeviceProfile::hid_keyboard(SimTime::from_millis(ms)).unwrap(),
        )
    }

    fn script(ms: &[u64]) -> KeystrokeScript {
        KeystrokeScript::new(ms.iter().map(|&m| SimTime::from_millis(m)).collect()).unwrap()
    }

    #[test]
    fn hid_tick_codes() {
        let kb = keyboard(30);
        let s = script(&[41]);
        assert_eq!(kb.hid_tick(&s, SimTime::from_millis(60)).unwrap().code, KEYSTROKE_ACL);
        assert_eq!(kb.hid_tick(&s, SimTime::from_millis(30)).unwrap().code, NULL_ACL);
        assert_eq!(kb.hid_tick(&s, SimTime::from_millis(90)).unwrap().code, NULL_ACL);
        let two = script(&[31, 45]);
        assert_eq!(kb.hid_tick(&two, SimTime::from_millis(60)).unwrap().code, KEYSTROKE_ACL);
        assert!(matches!(
            kb.hid_tick(&s, SimTime::from_millis(61)),
            Err(DeviceError::OffTick { .. })
        ));
        let tx = kb.hid_tick(&s, SimTime::from_millis(60)).unwrap().tx;
        assert_eq!(tx.start, SimTime::from_millis(60));
    }

    #[test]
    fn keyboard_intervals() {
        assert!(BtDeviceProfile::hid_keyboard(SimTime::from_millis(20)).is_err());
        assert!(BtDeviceProfile::hid_keyboard(SimTime::from_micros(12_500)).is_ok());
    }

    #[test]
    fn script_must_increase() {
        assert_eq!(
            KeystrokeScript::new(vec![SimTime::from_millis(2), SimTime::from_millis(2)]),
            Err(DeviceError::UnorderedScript(1))
        );
    }

    #[test]
    fn beacon_latch_is_permanent() {
        let mut p = BtDeviceProfile::beacon();
        assert_eq!(beacon_tick(&mut p, false).unwrap(), BeaconAction::Advertise);
        assert_eq!(beacon_tick(&mut p, true).unwrap(), BeaconAction::Suppressed);
        for _ in 0..1200 {
            assert_eq!(beacon_tick(&mut p, false).unwrap(), BeaconAction::Suppressed);
        }
        let mut audio = BtDeviceProfile::audio_stream();
        assert!(beacon_tick(&mut audio, false).is_err());
    }

    #[test]
    fn supervision() {
        let p = BtDeviceProfile::audio_stream();
        let s = SimTime::from_secs;
        assert_eq!(connection_supervise(s(10), s(12), true, &p), LinkState::KeepaliveOnly);
        assert_eq!(connection_supervise(s(10), s(16), true, &p), LinkState::TimedOut);
        assert_eq!(connection_supervise(s(10), s(10), false, &p), LinkState::Alive);
    }

    #[test]
    fn scan_pattern() {
        let scanner = WifiDeviceProfile::new(WifiRole::Scanner, 6, 20, 0.0).unwrap();
        let msgs = wifi_scan(&scanner, SimTime::from_millis(5), 0);
        assert_eq!(msgs.len(), 3);
        assert_eq!(msgs[0].payload, SCAN_START);
        assert!(msgs.windows(2).all(|w| w[0].sent_at < w[1].sent_at));
        assert_eq!(wifi_scan(&scanner, SimTime::ZERO, 4).len(), 7);
        let ap = WifiDeviceProfile::new(WifiRole::AccessPoint, 6, 20, 0.0).unwrap();
        assert!(wifi_scan(&ap, SimTime::ZERO, 3).is_empty());
    }

    #[test]
    fn random_script_spacing() {
        let mut rng = RngStream::new(4, crate::sim::StreamId::Traffic);
        let gap = SimTime::from_micros(12_500);
        let s = KeystrokeScript::random(
            50,
            SimTime::from_millis(7),
            gap,
            SimTime::from_millis(40),
            SimTime::from_millis(1),
            &mut rng,
        );
        assert_eq!(s.len(), 50);
        for w in s.press_times().windows(2) {
            assert!(w[1] - w[0] >= gap);
            assert_eq!(w[1].as_nanos() % 1_000_000, 0);
        }
    }
}
