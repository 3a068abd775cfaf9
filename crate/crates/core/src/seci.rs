//! Serial Enhanced Coexistence Interface: two UART wires carrying up to
//! 64-bit messages between the Bluetooth and Wi-Fi cores, surfaced to
//! firmware as the `gci_output` / `gci_input` registers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::medium::{overlaps, FrequencyAllocation};
use crate::sim::{sample_jitter, RngStream, SimTime, TraceRecorder};
use crate::Core;

/// Bluetooth-side address of the register holding the last value from Wi-Fi.
pub const GCI_INPUT_ADDR: u32 = 0x0065_0060;
/// Bluetooth-side address of the register sent to Wi-Fi.
pub const GCI_OUTPUT_ADDR: u32 = 0x0065_0160;

/// ACL packet carrying a keystroke report.
pub const KEYSTROKE_ACL: u8 = 0x85;
/// Empty ACL packet.
pub const NULL_ACL: u8 = 0x05;
/// ACL packet carrying streamed audio.
pub const AUDIO_ACL: u8 = 0x8a;

/// Wi-Fi scan start, first peak.
pub const SCAN_START: [u8; 5] = [0xfe, 0xdb, 0xe1, 0xdb, 0x3c];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketType {
    KeystrokeAcl,
    NullAcl,
    AudioAcl,
    Other(u8),
}

impl PacketType {
    pub fn from_code(code: u8) -> Self {
        match code {
            KEYSTROKE_ACL => PacketType::KeystrokeAcl,
            NULL_ACL => PacketType::NullAcl,
            AUDIO_ACL => PacketType::AudioAcl,
            other => PacketType::Other(other),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            PacketType::KeystrokeAcl => KEYSTROKE_ACL,
            PacketType::NullAcl => NULL_ACL,
            PacketType::AudioAcl => AUDIO_ACL,
            PacketType::Other(c) => c,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SeciError {
    #[error("wifi channel {0} outside 0..=11")]
    BadChannel(u8),
    #[error("bandwidth {0} MHz is not 20 or 40")]
    BadBandwidth(u16),
    #[error("bandwidth code {0} is not 2 or 4")]
    BadBandwidthCode(u8),
    #[error("payload of {len} bytes exceeds the {max}-byte message size")]
    Oversize { len: usize, max: usize },
    #[error("empty payload")]
    Empty,
    #[error("{at} is not on the D11 poll grid")]
    OffPollGrid { at: SimTime },
}

/// Wi-Fi channel notification byte: channel in the high nibble, bandwidth
/// code (2 = 20 MHz, 4 = 40 MHz) in the low nibble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelNotification {
    pub byte: u8,
    pub channel: u8,
    pub bandwidth_code: u8,
}

const CHANNEL_SHIFT: u8 = 4;
const BANDWIDTH_MASK: u8 = 0x0f;

pub fn encode_channel_notification(channel: u8, bandwidth_mhz: u16) -> Result<ChannelNotification, SeciError> {
    if channel > 11 {
        return Err(SeciError::BadChannel(channel));
    }
    let bandwidth_code = match bandwidth_mhz {
        20 => 2,
        40 => 4,
        other => return Err(SeciError::BadBandwidth(other)),
    };
    Ok(ChannelNotification {
        byte: (channel << CHANNEL_SHIFT) | bandwidth_code,
        channel,
        bandwidth_code,
    })
}

pub fn decode_channel_notification(byte: u8) -> Result<ChannelNotification, SeciError> {
    let channel = byte >> CHANNEL_SHIFT;
    let bandwidth_code = byte & BANDWIDTH_MASK;
    if channel > 11 {
        return Err(SeciError::BadChannel(channel));
    }
    if bandwidth_code != 2 && bandwidth_code != 4 {
        return Err(SeciError::BadBandwidthCode(bandwidth_code));
    }
    Ok(ChannelNotification {
        byte,
        channel,
        bandwidth_code,
    })
}

impl ChannelNotification {
    pub fn bandwidth_mhz(&self) -> u16 {
        if self.bandwidth_code == 4 {
            40
        } else {
            20
        }
    }

    /// Bluetooth RF channels the notified Wi-Fi allocation overlaps; the
    /// Bluetooth firmware removes these from its hop set.
    pub fn blocked_bt_channels(&self) -> Vec<u8> {
        let Ok(wifi) = FrequencyAllocation::wifi(self.channel, self.bandwidth_mhz()) else {
            return Vec::new();
        };
        (0..=78u8)
            .filter(|&k| {
                let bt = FrequencyAllocation::bluetooth(k).expect("0..=78 is valid");
                overlaps(&wifi, &bt)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    BtToWifi,
    WifiToBt,
}

impl Direction {
    pub fn from_sender(core: Core) -> Self {
        match core {
            Core::Bluetooth => Direction::BtToWifi,
            Core::Wifi => Direction::WifiToBt,
        }
    }

    pub fn channel(self) -> &'static str {
        match self {
            Direction::BtToWifi => "seci.bt2wifi",
            Direction::WifiToBt => "seci.wifi2bt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeciMessage {
    pub sent_at: SimTime,
    pub payload: Vec<u8>,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeciConfig {
    pub baud: u64,
    pub max_payload_bytes: usize,
    pub jitter_sigma_ns: u64,
    pub jitter_bound_ns: u64,
}

impl SeciConfig {
    /// 3 MBaud, 64-bit messages.
    pub fn standard() -> Self {
        SeciConfig {
            baud: 3_000_000,
            max_payload_bytes: 8,
            jitter_sigma_ns: 200,
            jitter_bound_ns: 1_000,
        }
    }

    /// 4 MBaud, 48-bit messages, found on other chip generations.
    pub fn fast_48bit() -> Self {
        SeciConfig {
            baud: 4_000_000,
            max_payload_bytes: 6,
            ..Self::standard()
        }
    }

    pub fn serialization_delay(&self, len: usize) -> SimTime {
        let bits = len as u64 * 8;
        SimTime::from_nanos((bits * 1_000_000_000 + self.baud / 2) / self.baud)
    }
}

impl Default for SeciConfig {
    fn default() -> Self {
        Self::standard()
    }
}

/// The pair of coexistence registers on one core.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GciRegisters {
    pub gci_output: Option<Vec<u8>>,
    pub gci_input: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Delivery {
    sent_at: SimTime,
    delivered_at: SimTime,
    payload: Vec<u8>,
}

#[derive(Debug, Clone, Default)]
struct Wire {
    deliveries: Vec<Delivery>,
    free_at: SimTime,
}

impl Wire {
    fn latest_by(&self, t: SimTime) -> Option<&Delivery> {
        let idx = self.deliveries.partition_point(|d| d.delivered_at <= t);
        idx.checked_sub(1).map(|i| &self.deliveries[i])
    }

    fn last_written_by(&self, t: SimTime) -> Option<&Delivery> {
        let idx = self.deliveries.partition_point(|d| d.sent_at <= t);
        idx.checked_sub(1).map(|i| &self.deliveries[i])
    }
}

/// Both SECI wires. Each wire serializes one message at a time; a message
/// written while the wire is busy goes out after the previous one.
#[derive(Debug, Clone)]
pub struct SeciLink {
    cfg: SeciConfig,
    bt_to_wifi: Wire,
    wifi_to_bt: Wire,
}

impl SeciLink {
    pub fn new(cfg: SeciConfig) -> Self {
        SeciLink {
            cfg,
            bt_to_wifi: Wire::default(),
            wifi_to_bt: Wire::default(),
        }
    }

    pub fn config(&self) -> &SeciConfig {
        &self.cfg
    }

    fn wire(&self, dir: Direction) -> &Wire {
        match dir {
            Direction::BtToWifi => &self.bt_to_wifi,
            Direction::WifiToBt => &self.wifi_to_bt,
        }
    }

    /// Writes `payload` to the sender's `gci_output`. Returns when the peer's
    /// `gci_input` will hold it.
    pub fn send_message(
        &mut self,
        from: Core,
        payload: &[u8],
        at: SimTime,
        jitter: &mut RngStream,
        trace: &mut TraceRecorder,
    ) -> Result<SimTime, SeciError> {
        if payload.is_empty() {
            return Err(SeciError::Empty);
        }
        if payload.len() > self.cfg.max_payload_bytes {
            return Err(SeciError::Oversize {
                len: payload.len(),
                max: self.cfg.max_payload_bytes,
            });
        }
        let dir = Direction::from_sender(from);
        let ser = self.cfg.serialization_delay(payload.len());
        let j = sample_jitter(jitter, self.cfg.jitter_sigma_ns, self.cfg.jitter_bound_ns.max(1));
        let wire = match dir {
            Direction::BtToWifi => &mut self.bt_to_wifi,
            Direction::WifiToBt => &mut self.wifi_to_bt,
        };
        if let Some(prev) = wire.deliveries.last() {
            assert!(at >= prev.sent_at, "SECI write at {at} precedes {}", prev.sent_at);
        }
        let start = at.max(wire.free_at);
        wire.free_at = start + ser;
        let mut delivered_at = (start + ser).offset(j);
        // one wire cannot reorder messages
        if let Some(prev) = wire.deliveries.last() {
            delivered_at = delivered_at.max(prev.delivered_at);
        }
        delivered_at = delivered_at.max(at);
        wire.deliveries.push(Delivery {
            sent_at: at,
            delivered_at,
            payload: payload.to_vec(),
        });
        trace.record(at, dir.channel(), payload);
        Ok(delivered_at)
    }

    /// Register contents of `core` at time `t`.
    pub fn registers(&self, core: Core, t: SimTime) -> GciRegisters {
        let (out_wire, in_wire) = match core {
            Core::Bluetooth => (&self.bt_to_wifi, &self.wifi_to_bt),
            Core::Wifi => (&self.wifi_to_bt, &self.bt_to_wifi),
        };
        GciRegisters {
            gci_output: out_wire.last_written_by(t).map(|d| d.payload.clone()),
            gci_input: in_wire.latest_by(t).map(|d| d.payload.clone()),
        }
    }

    /// Most recent fully delivered message in `dir` as of `t`.
    pub fn latest_delivered(&self, dir: Direction, t: SimTime) -> Option<&[u8]> {
        self.wire(dir).latest_by(t).map(|d| d.payload.as_slice())
    }

    pub fn messages(&self, dir: Direction) -> Vec<SeciMessage> {
        self.wire(dir)
            .deliveries
            .iter()
            .map(|d| SeciMessage {
                sent_at: d.sent_at,
                payload: d.payload.clone(),
                direction: dir,
            })
            .collect()
    }

    /// `(sent_at, delivered_at)` for each message on a wire.
    pub fn delivery_times(&self, dir: Direction) -> Vec<(SimTime, SimTime)> {
        self.wire(dir)
            .deliveries
            .iter()
            .map(|d| (d.sent_at, d.delivered_at))
            .collect()
    }
}

/// The Wi-Fi D11 core's view of the Bluetooth `gci_output`: one read every
/// two Bluetooth clock cycles (1.25 ms) from `epoch`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct D11Poller {
    pub epoch: SimTime,
    pub period: SimTime,
}

impl D11Poller {
    pub const PERIOD: SimTime = SimTime::from_micros(1250);

    pub fn new(epoch: SimTime) -> Self {
        D11Poller {
            epoch,
            period: Self::PERIOD,
        }
    }

    pub fn is_poll_instant(&self, at: SimTime) -> bool {
        at >= self.epoch && (at - self.epoch).as_nanos().is_multiple_of(self.period.as_nanos())
    }

    /// Latest bt->wifi payload delivered by `at`. Anything written and
    /// overwritten between two polls is never seen.
    pub fn d11_poll(&self, link: &SeciLink, at: SimTime) -> Result<Option<Vec<u8>>, SeciError> {
        if !self.is_poll_instant(at) {
            return Err(SeciError::OffPollGrid { at });
        }
        Ok(link.latest_delivered(Direction::BtToWifi, at).map(<[u8]>::to_vec))
    }

    pub fn instants(&self, until: SimTime) -> impl Iterator<Item = SimTime> + '_ {
        let p = self.period.as_nanos();
        (0..)
            .map(move |k: u64| self.epoch + SimTime::from_nanos(k * p))
            .take_while(move |t| *t <= until)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrantState {
    Grant,
    Reject,
    Inactive,
}

impl GrantState {
    /// Byte Wi-Fi writes back over SECI.
    pub fn code(self) -> u8 {
        match self {
            GrantState::Inactive => 0x00,
            GrantState::Grant => 0x01,
            GrantState::Reject => 0x02,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        [GrantState::Inactive, GrantState::Grant, GrantState::Reject]
            .into_iter()
            .find(|g| g.code() == code)
    }
}

/// Wi-Fi's answer to a pending Bluetooth request.
///
/// Wi-Fi on 5 GHz or switched off never rejects. A withholding attacker
/// neither grants nor signals inactivity, which Bluetooth reads as a reject.
/// The answer does not depend on `bt_request`: it is the state Bluetooth
/// finds when it next asks.
pub fn grant_cycle(_bt_request: bool, wifi_active_24ghz: bool, attack_withhold: bool) -> GrantState {
    if !wifi_active_24ghz {
        GrantState::Inactive
    } else if attack_withhold {
        GrantState::Reject
    } else {
        GrantState::Grant
    }
}
