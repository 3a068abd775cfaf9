use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{PtaConfig, PtaLineState, PtaMode};
use crate::sim::{SimTime, BT_SLOT};

/// What the Wi-Fi side needs from the medium in the current sample period.
///
/// The PTA controller lives inside the Wi-Fi chip, so it knows this without
/// any signalling: Wi-Fi "asks" only in the sense that its demand enters the
/// same decision as the Bluetooth lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WifiDemand {
    Idle,
    /// A new data frame is queued.
    Data,
    /// A frame Wi-Fi marks urgent (management, retransmission) is queued.
    Priority,
    /// A data/ACK exchange is already on air.
    InExchange,
}

impl WifiDemand {
    pub fn from_flags(wants_tx: bool, prio_tx: bool) -> Self {
        match (wants_tx, prio_tx) {
            (false, _) => WifiDemand::Idle,
            (true, false) => WifiDemand::Data,
            (true, true) => WifiDemand::Priority,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Bluetooth,
    Wifi,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionReason {
    Idle,
    Uncontended,
    BtPriority,
    ModePrecedence,
    PeriodicDenial,
    PriorityShare,
    ExchangeProtected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArbitrationDecision {
    pub at: SimTime,
    pub winner: Winner,
    pub reason: DecisionReason,
}

impl ArbitrationDecision {
    /// Level of the (inverted) GRANT line this decision drives: 1 = denied.
    pub fn grant_line(&self) -> bool {
        self.winner == Winner::Wifi
    }

    pub fn code(&self) -> i64 {
        match self.winner {
            Winner::None => 0,
            Winner::Bluetooth => 1,
            Winner::Wifi => 2,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PtaError {
    #[error("periodic denial is only defined for WLAN_HIGH, not {0:?}")]
    NotWlanHigh(PtaMode),
}

fn slot_index(t: SimTime) -> u64 {
    t.as_nanos() / BT_SLOT.as_nanos()
}

/// WLAN_HIGH denies Bluetooth during the first of every `denial_period_slots`
/// consecutive 625 us slots.
pub fn periodic_denial_schedule(cfg: &PtaConfig, t: SimTime) -> Result<bool, PtaError> {
    if cfg.mode != PtaMode::WlanHigh {
        return Err(PtaError::NotWlanHigh(cfg.mode));
    }
    Ok(denial_slot(cfg, t))
}

fn denial_slot(cfg: &PtaConfig, t: SimTime) -> bool {
    slot_index(t).is_multiple_of(cfg.denial_period_slots.max(1) as u64)
}

// Spreads a percentage evenly over slots: exactly `pct` of every 100
// consecutive slots go to Wi-Fi.
fn share_to_wifi(pct: u8, t: SimTime) -> bool {
    let pct = pct.min(100) as u64;
    let n = slot_index(t);
    (n + 1) * pct / 100 > n * pct / 100
}

/// One PTA decision for the current sample period.
pub fn arbitrate_step(lines: PtaLineState, demand: WifiDemand, cfg: &PtaConfig, at: SimTime) -> ArbitrationDecision {
    use DecisionReason as R;
    use PtaMode as M;

    let decide = |winner, reason| ArbitrationDecision { at, winner, reason };
    let bt = Winner::Bluetooth;
    let wifi = Winner::Wifi;

    if !lines.request {
        return match demand {
            WifiDemand::Idle => decide(Winner::None, R::Idle),
            _ => decide(wifi, R::Uncontended),
        };
    }
    if demand == WifiDemand::Idle {
        return decide(bt, R::Uncontended);
    }

    let prio = lines.priority;
    match cfg.mode {
        M::WlanMaximized => decide(wifi, R::ModePrecedence),
        M::CoexMaximized => match demand {
            WifiDemand::Priority if share_to_wifi(cfg.priority_share_pct(M::CoexMaximized), at) => {
                decide(wifi, R::PriorityShare)
            }
            _ => decide(bt, if prio { R::BtPriority } else { R::ModePrecedence }),
        },
        M::CoexHigh | M::Balanced => match (demand, prio) {
            (_, true) => decide(bt, R::BtPriority),
            (WifiDemand::InExchange, false) => decide(wifi, R::ExchangeProtected),
            (WifiDemand::Priority, false) => {
                if share_to_wifi(cfg.priority_share_pct(cfg.mode), at) {
                    decide(wifi, R::PriorityShare)
                } else {
                    decide(bt, R::ModePrecedence)
                }
            }
            _ => decide(bt, R::ModePrecedence),
        },
        M::WlanHigh => match (demand, prio) {
            (WifiDemand::InExchange, _) => decide(wifi, R::ExchangeProtected),
            (WifiDemand::Priority, _) => {
                if share_to_wifi(cfg.priority_share_pct(M::WlanHigh), at) {
                    decide(wifi, R::PriorityShare)
                } else {
                    decide(bt, R::ModePrecedence)
                }
            }
            (_, true) => decide(bt, R::BtPriority),
            _ => {
                if denial_slot(cfg, at) {
                    decide(wifi, R::PeriodicDenial)
                } else {
                    decide(bt, R::ModePrecedence)
                }
            }
        },
    }
}
