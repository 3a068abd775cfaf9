//! Packet Traffic Arbitration over the three-wire REQUEST / PRIORITY / GRANT
//! interface, with the controller integrated on the Wi-Fi side.
//!
//! GRANT uses inverted logic throughout: a high GRANT line means Bluetooth
//! is denied.

mod arbiter;
mod glitch;
mod lines;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::sim::SimTime;

pub use arbiter::{
    arbitrate_step, periodic_denial_schedule, ArbitrationDecision, DecisionReason, PtaError, WifiDemand, Winner,
};
pub use glitch::{glitch_conditions_hold, inject_grant_glitch, GlitchPulse};
pub use lines::{Line, LineHistory, Observer, PtaLines};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PtaLineState {
    pub request: bool,
    pub priority: bool,
    /// Inverted: `true` means Bluetooth is denied.
    pub grant: bool,
}

/// Scheduling priority, ordered from most Bluetooth-friendly to most
/// Wi-Fi-friendly. Fixed before the Wi-Fi radio starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PtaMode {
    CoexMaximized,
    CoexHigh,
    Balanced,
    WlanHigh,
    WlanMaximized,
}

impl PtaMode {
    pub const ALL: [PtaMode; 5] = [
        PtaMode::CoexMaximized,
        PtaMode::CoexHigh,
        PtaMode::Balanced,
        PtaMode::WlanHigh,
        PtaMode::WlanMaximized,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PtaMode::CoexMaximized => "COEX_MAXIMIZED",
            PtaMode::CoexHigh => "COEX_HIGH",
            PtaMode::Balanced => "BALANCED",
            PtaMode::WlanHigh => "WLAN_HIGH",
            PtaMode::WlanMaximized => "WLAN_MAXIMIZED",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for PtaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PtaMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PtaMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown PTA mode {s:?}"))
    }
}

/// Controller configuration. Defaults follow the modeled Silicon Labs part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtaConfig {
    pub mode: PtaMode,
    pub sample_period: SimTime,
    pub grant_glitch_enabled: bool,
    /// Percentage of priority-frame contentions Wi-Fi wins against a
    /// plain (non-PRIORITY) Bluetooth request, indexed by mode.
    pub priority_share_pct: [u8; 5],
    /// WLAN_HIGH denies Bluetooth in one of this many slots.
    pub denial_period_slots: u32,
    pub glitch_duration: SimTime,
    pub frames_per_glitch: u32,
    pub glitch_frame_bytes: u32,
}

impl PtaConfig {
    pub fn new(mode: PtaMode) -> Self {
        PtaConfig {
            mode,
            sample_period: SimTime::from_micros(10),
            grant_glitch_enabled: true,
            priority_share_pct: [0, 25, 50, 100, 100],
            denial_period_slots: 4,
            glitch_duration: SimTime::from_micros(2),
            frames_per_glitch: 50,
            glitch_frame_bytes: 1500,
        }
    }

    pub fn priority_share_pct(&self, mode: PtaMode) -> u8 {
        self.priority_share_pct[mode.index()]
    }
}

impl Default for PtaConfig {
    fn default() -> Self {
        PtaConfig::new(PtaMode::Balanced)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_round_trip() {
        for m in PtaMode::ALL {
            assert_eq!(m.as_str().parse::<PtaMode>().unwrap(), m);
        }
        assert!("balanced".parse::<PtaMode>().is_err());
        assert!(PtaMode::CoexMaximized < PtaMode::WlanMaximized);
    }
}
