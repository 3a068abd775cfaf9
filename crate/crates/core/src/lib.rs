//! Deterministic simulator of Bluetooth/Wi-Fi coexistence interfaces and the
//! attacks that abuse them.
//!
//! The building blocks are a discrete-event core ([`sim`]), a shared-spectrum
//! model ([`medium`]), the two coexistence interfaces ([`pta`], [`seci`]), a
//! combo-chip shared RAM window ([`sharedmem`]) and device traffic models
//! ([`devices`]). [`attacks`] wires them into scenario runs that produce
//! [`report::AttackReport`]s; [`analysis`] holds the attacker-side inference.

pub mod analysis;
pub mod attacks;
pub mod config;
pub mod devices;
pub mod medium;
pub mod pta;
pub mod report;
pub mod seci;
pub mod sharedmem;
pub mod sim;
pub mod sweep;

use serde::{Deserialize, Serialize};

/// One of the two wireless cores of a device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Core {
    Bluetooth,
    Wifi,
}

impl Core {
    pub fn peer(self) -> Core {
        match self {
            Core::Bluetooth => Core::Wifi,
            Core::Wifi => Core::Bluetooth,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Core::Bluetooth => "bluetooth",
            Core::Wifi => "wifi",
        }
    }
}
