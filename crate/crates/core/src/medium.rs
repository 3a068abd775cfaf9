//! Shared 2.4 GHz medium: who is on air, on which frequencies, and whether
//! two transmissions landed on top of each other.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{SimTime, TraceRecorder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceId(pub u32);

impl std::fmt::Display for DeviceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technology {
    Bluetooth,
    Wifi,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AllocationError {
    #[error("wifi channel {0} outside 0..=11")]
    BadWifiChannel(u8),
    #[error("wifi bandwidth {0} MHz is not 20 or 40")]
    BadBandwidth(u16),
    #[error("bluetooth channel {0} outside 0..=78")]
    BadBtChannel(u8),
    #[error("BLE advertising channel index {0} is not 37, 38 or 39")]
    BadAdvertisingIndex(u8),
}

/// Spectrum occupied by one transmission.
///
/// Wi-Fi channel `c` is centred on `2407 + 5c` MHz; channel 0 means "no
/// channel" and occupies nothing. Bluetooth RF channel `k` is centred on
/// `2402 + k` MHz with 1 MHz width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrequencyAllocation {
    technology: Technology,
    wifi_channel: u8,
    wifi_bandwidth_mhz: u16,
    bt_hop_channel: u8,
}

impl FrequencyAllocation {
    pub fn wifi(channel: u8, bandwidth_mhz: u16) -> Result<Self, AllocationError> {
        if channel > 11 {
            return Err(AllocationError::BadWifiChannel(channel));
        }
        if bandwidth_mhz != 20 && bandwidth_mhz != 40 {
            return Err(AllocationError::BadBandwidth(bandwidth_mhz));
        }
        Ok(FrequencyAllocation {
            technology: Technology::Wifi,
            wifi_channel: channel,
            wifi_bandwidth_mhz: bandwidth_mhz,
            bt_hop_channel: 0,
        })
    }

    pub fn bluetooth(rf_channel: u8) -> Result<Self, AllocationError> {
        if rf_channel > 78 {
            return Err(AllocationError::BadBtChannel(rf_channel));
        }
        Ok(FrequencyAllocation {
            technology: Technology::Bluetooth,
            wifi_channel: 0,
            wifi_bandwidth_mhz: 20,
            bt_hop_channel: rf_channel,
        })
    }

    /// BLE primary advertising channels 37/38/39 sit at 2402/2426/2480 MHz.
    pub fn ble_advertising(index: u8) -> Result<Self, AllocationError> {
        let rf = match index {
            37 => 0,
            38 => 24,
            39 => 78,
            other => return Err(AllocationError::BadAdvertisingIndex(other)),
        };
        Self::bluetooth(rf)
    }

    pub fn technology(&self) -> Technology {
        self.technology
    }

    pub fn wifi_channel(&self) -> u8 {
        self.wifi_channel
    }

    pub fn wifi_bandwidth_mhz(&self) -> u16 {
        self.wifi_bandwidth_mhz
    }

    pub fn bt_hop_channel(&self) -> u8 {
        self.bt_hop_channel
    }

    /// Occupied span in kHz as `(low, high)`, or `None` for "no channel".
    pub fn span_khz(&self) -> Option<(u32, u32)> {
        match self.technology {
            Technology::Wifi => {
                if self.wifi_channel == 0 {
                    return None;
                }
                let center = (2407 + 5 * self.wifi_channel as u32) * 1000;
                let half = self.wifi_bandwidth_mhz as u32 * 500;
                Some((center - half, center + half))
            }
            Technology::Bluetooth => {
                let center = (2402 + self.bt_hop_channel as u32) * 1000;
                Some((center - 500, center + 500))
            }
        }
    }
}

/// True iff the two occupied spans share a positive-width interval.
/// Adjacent Bluetooth channels touch at their edges and do not overlap.
pub fn overlaps(a: &FrequencyAllocation, b: &FrequencyAllocation) -> bool {
    match (a.span_khz(), b.span_khz()) {
        (Some((alo, ahi)), Some((blo, bhi))) => alo < bhi && blo < ahi,
        _ => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmissionAttempt {
    pub source: DeviceId,
    pub alloc: FrequencyAllocation,
    pub start: SimTime,
    pub duration: SimTime,
    pub granted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub at: SimTime,
    pub participants: Vec<DeviceId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxOutcome {
    Accepted,
    Collided(CollisionEvent),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MediumError {
    #[error("device {0} already has an active transmission")]
    DuplicateSource(DeviceId),
    #[error("transmission must start now ({now}), not at {start}")]
    NotNow { start: SimTime, now: SimTime },
    #[error("transmission duration must be positive")]
    ZeroDuration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ActiveTx {
    attempt: TransmissionAttempt,
    end: SimTime,
    collided: bool,
}

/// Final state of a transmission once it left the air.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxResult {
    pub attempt: TransmissionAttempt,
    pub ended: SimTime,
    pub collided: bool,
    pub aborted: bool,
}

#[derive(Debug, Default)]
pub struct Medium {
    active: BTreeMap<DeviceId, ActiveTx>,
    finished: BTreeMap<DeviceId, TxResult>,
    collisions: Vec<CollisionEvent>,
    tx_count: u64,
}

impl Medium {
    pub fn new() -> Self {
        Self::default()
    }

    fn retire_until(&mut self, now: SimTime) {
        let done: Vec<DeviceId> = self
            .active
            .iter()
            .filter(|(_, tx)| tx.end <= now)
            .map(|(id, _)| *id)
            .collect();
        for id in done {
            let tx = self.active.remove(&id).expect("listed above");
            self.finished.insert(
                id,
                TxResult {
                    attempt: tx.attempt,
                    ended: tx.end,
                    collided: tx.collided,
                    aborted: false,
                },
            );
        }
    }

    pub fn begin_tx(
        &mut self,
        now: SimTime,
        t: TransmissionAttempt,
        trace: &mut TraceRecorder,
    ) -> Result<TxOutcome, MediumError> {
        if t.start != now {
            return Err(MediumError::NotNow { start: t.start, now });
        }
        if t.duration == SimTime::ZERO {
            return Err(MediumError::ZeroDuration);
        }
        self.retire_until(now);
        if self.active.contains_key(&t.source) {
            return Err(MediumError::DuplicateSource(t.source));
        }
        self.finished.remove(&t.source);
        self.tx_count += 1;
        trace.record(now, "medium.tx", t.source.0 as i64);

        let mut participants = Vec::new();
        for (id, other) in self.active.iter_mut() {
            if overlaps(&other.attempt.alloc, &t.alloc) {
                other.collided = true;
                participants.push(*id);
            }
        }
        let collided = !participants.is_empty();
        self.active.insert(
            t.source,
            ActiveTx {
                attempt: t,
                end: now + t.duration,
                collided,
            },
        );
        if !collided {
            return Ok(TxOutcome::Accepted);
        }
        participants.push(t.source);
        participants.sort();
        let ev = CollisionEvent { at: now, participants };
        trace.record(now, "medium.collision", ev.participants.len() as i64);
        self.collisions.push(ev.clone());
        Ok(TxOutcome::Collided(ev))
    }

    /// Cuts an on-air transmission short. Returns its result if it was active.
    pub fn abort_tx(&mut self, source: DeviceId, now: SimTime) -> Option<TxResult> {
        self.retire_until(now);
        let tx = self.active.remove(&source)?;
        let res = TxResult {
            attempt: tx.attempt,
            ended: now,
            collided: tx.collided,
            aborted: true,
        };
        self.finished.insert(source, res);
        Some(res)
    }

    pub fn is_active(&mut self, source: DeviceId, now: SimTime) -> bool {
        self.retire_until(now);
        self.active.contains_key(&source)
    }

    /// Result of `source`'s last transmission once it has left the air.
    /// Consumes the result so each transmission is reported once.
    pub fn take_result(&mut self, source: DeviceId, now: SimTime) -> Option<TxResult> {
        self.retire_until(now);
        self.finished.remove(&source)
    }

    pub fn busy(&mut self, now: SimTime) -> bool {
        self.retire_until(now);
        !self.active.is_empty()
    }

    pub fn collisions(&self) -> &[CollisionEvent] {
        &self.collisions
    }

    pub fn tx_count(&self) -> u64 {
        self.tx_count
    }

    /// Pairs of on-air, non-collided transmissions that overlap in frequency.
    /// Always empty if the medium is working correctly.
    pub fn clean_overlaps(&mut self, now: SimTime) -> Vec<(DeviceId, DeviceId)> {
        self.retire_until(now);
        let live: Vec<_> = self.active.iter().filter(|(_, t)| !t.collided).collect();
        let mut out = Vec::new();
        for (i, (a, ta)) in live.iter().enumerate() {
            for (b, tb) in &live[i + 1..] {
                if overlaps(&ta.attempt.alloc, &tb.attempt.alloc) {
                    out.push((**a, **b));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attempt(id: u32, alloc: FrequencyAllocation, start: SimTime, us: u64) -> TransmissionAttempt {
        TransmissionAttempt {
            source: DeviceId(id),
            alloc,
            start,
            duration: SimTime::from_micros(us),
            granted: false,
        }
    }

    #[test]
    fn allocation_validation() {
        assert_eq!(
            FrequencyAllocation::wifi(12, 20),
            Err(AllocationError::BadWifiChannel(12))
        );
        assert_eq!(FrequencyAllocation::wifi(6, 80), Err(AllocationError::BadBandwidth(80)));
        assert_eq!(
            FrequencyAllocation::bluetooth(79),
            Err(AllocationError::BadBtChannel(79))
        );
        let bt = FrequencyAllocation::bluetooth(3).unwrap();
        assert_eq!(bt.wifi_channel(), 0);
        assert_eq!(FrequencyAllocation::ble_advertising(38).unwrap().bt_hop_channel(), 24);
    }

    #[test]
    fn wifi_channel_zero_occupies_nothing() {
        let none = FrequencyAllocation::wifi(0, 20).unwrap();
        let bt = FrequencyAllocation::bluetooth(5).unwrap();
        assert!(!overlaps(&none, &bt));
        assert!(!overlaps(&none, &none));
    }

    #[test]
    fn lone_frame_is_accepted() {
        let mut m = Medium::new();
        let mut tr = TraceRecorder::new();
        let w = FrequencyAllocation::wifi(6, 20).unwrap();
        let out = m.begin_tx(SimTime::ZERO, attempt(1, w, SimTime::ZERO, 200), &mut tr);
        assert_eq!(out, Ok(TxOutcome::Accepted));
    }

    #[test]
    fn bt_slot_mid_wifi_frame_collides() {
        let mut m = Medium::new();
        let mut tr = TraceRecorder::new();
        let w = FrequencyAllocation::wifi(6, 20).unwrap();
        let b = FrequencyAllocation::bluetooth(35).unwrap();
        m.begin_tx(SimTime::ZERO, attempt(1, w, SimTime::ZERO, 1000), &mut tr)
            .unwrap();
        let t = SimTime::from_micros(625);
        match m.begin_tx(t, attempt(2, b, t, 366), &mut tr).unwrap() {
            TxOutcome::Collided(ev) => {
                assert_eq!(ev.participants, vec![DeviceId(1), DeviceId(2)]);
                assert_eq!(ev.at, t);
            }
            other => panic!("expected collision, got {other:?}"),
        }
        let r = m.take_result(DeviceId(1), SimTime::from_millis(2)).unwrap();
        assert!(r.collided);
        assert_eq!(tr.channel("medium.collision").count(), 1);
    }

    #[test]
    fn disjoint_spectrum_coexists() {
        let mut m = Medium::new();
        let mut tr = TraceRecorder::new();
        let w = FrequencyAllocation::wifi(1, 20).unwrap();
        let b = FrequencyAllocation::bluetooth(78).unwrap();
        m.begin_tx(SimTime::ZERO, attempt(1, w, SimTime::ZERO, 1000), &mut tr)
            .unwrap();
        let t = SimTime::from_micros(100);
        assert_eq!(m.begin_tx(t, attempt(2, b, t, 300), &mut tr), Ok(TxOutcome::Accepted));
    }

    #[test]
    fn duplicate_source_and_precondition() {
        let mut m = Medium::new();
        let mut tr = TraceRecorder::new();
        let w = FrequencyAllocation::wifi(1, 20).unwrap();
        m.begin_tx(SimTime::ZERO, attempt(1, w, SimTime::ZERO, 100), &mut tr)
            .unwrap();
        let t = SimTime::from_micros(50);
        assert_eq!(
            m.begin_tx(t, attempt(1, w, t, 10), &mut tr),
            Err(MediumError::DuplicateSource(DeviceId(1)))
        );
        assert!(matches!(
            m.begin_tx(t, attempt(2, w, SimTime::ZERO, 10), &mut tr),
            Err(MediumError::NotNow { .. })
        ));
        // once the first frame ended the source may transmit again
        let t = SimTime::from_micros(100);
        assert!(m.begin_tx(t, attempt(1, w, t, 10), &mut tr).is_ok());
    }

    #[test]
    fn abort_frees_the_air() {
        let mut m = Medium::new();
        let mut tr = TraceRecorder::new();
        let w = FrequencyAllocation::wifi(6, 20).unwrap();
        let b = FrequencyAllocation::bluetooth(35).unwrap();
        m.begin_tx(SimTime::ZERO, attempt(2, b, SimTime::ZERO, 366), &mut tr)
            .unwrap();
        let t = SimTime::from_micros(40);
        let r = m.abort_tx(DeviceId(2), t).unwrap();
        assert!(r.aborted && !r.collided);
        assert_eq!(m.begin_tx(t, attempt(1, w, t, 200), &mut tr), Ok(TxOutcome::Accepted));
        assert!(m.collisions().is_empty());
    }
}
