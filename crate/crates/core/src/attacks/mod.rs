//! Scenario drivers, one per attack. Each wires an attacker on one core into
//! the simulated interfaces and reduces the run to an [`AttackReport`].
//!
//! Attackers only touch the other core through the coexistence interface
//! their core owns. Every attacker action is traced on `attack.<core>`.

mod glitch;
mod grant_reject;
mod jitter;
mod keystroke;
mod pta_dos;
mod shared_ram;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::analysis::TrafficClass;
use crate::devices::{BtDeviceProfile, KeyboardModel, WifiDeviceProfile, WifiRole};
use crate::pta::PtaMode;
use crate::report::{AttackReport, Verdict, REPORT_FORMAT_VERSION};
use crate::sharedmem::{CrashLog, ShmError};
use crate::sim::{SimTime, TraceRecorder};
use crate::Core;

pub use glitch::run_grant_glitch_observe;
pub use grant_reject::run_grant_reject_dos;
pub use jitter::run_jitter_classify;
pub use keystroke::{match_keystrokes, run_keystroke_sniff, KeystrokeMatch, POLL_OFFSET};
pub use pta_dos::{run_ble_beacon_dos, run_priority_flood_dos};
pub use shared_ram::run_sharedmem_exploit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    GrantRejectDos,
    PriorityFloodDos,
    BleBeaconDos,
    KeystrokeSniff,
    JitterClassify,
    GrantGlitchObserve,
    SharedmemExploit,
}

impl AttackKind {
    pub const ALL: [AttackKind; 7] = [
        AttackKind::GrantRejectDos,
        AttackKind::PriorityFloodDos,
        AttackKind::BleBeaconDos,
        AttackKind::KeystrokeSniff,
        AttackKind::JitterClassify,
        AttackKind::GrantGlitchObserve,
        AttackKind::SharedmemExploit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::GrantRejectDos => "grant_reject_dos",
            AttackKind::PriorityFloodDos => "priority_flood_dos",
            AttackKind::BleBeaconDos => "ble_beacon_dos",
            AttackKind::KeystrokeSniff => "keystroke_sniff",
            AttackKind::JitterClassify => "jitter_classify",
            AttackKind::GrantGlitchObserve => "grant_glitch_observe",
            AttackKind::SharedmemExploit => "sharedmem_exploit",
        }
    }

    /// The core the attacker must control.
    pub fn attacker_core(self) -> Core {
        match self {
            AttackKind::PriorityFloodDos | AttackKind::GrantGlitchObserve | AttackKind::SharedmemExploit => {
                Core::Bluetooth
            }
            _ => Core::Wifi,
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown attack kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrantRejectParams {
    pub attack_start_s: f64,
    pub attack_duration_s: f64,
    /// Observation time after the attack ends.
    pub post_s: f64,
}

impl Default for GrantRejectParams {
    fn default() -> Self {
        GrantRejectParams {
            attack_start_s: 1.0,
            attack_duration_s: 3.0,
            post_s: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorityFloodParams {
    pub mode: PtaMode,
    pub use_priority: bool,
    pub attack_start_s: f64,
    /// Pings issued while the attack is active.
    pub pings: u32,
    pub ping_interval_ms: f64,
    pub ping_timeout_s: f64,
}

impl Default for PriorityFloodParams {
    fn default() -> Self {
        PriorityFloodParams {
            mode: PtaMode::Balanced,
            use_priority: true,
            attack_start_s: 0.2,
            pings: 120,
            ping_interval_ms: 10.0,
            ping_timeout_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeaconDosParams {
    pub deny_at_s: f64,
    /// How long GRANT is forced; until the end of the run when absent.
    pub deny_for_s: Option<f64>,
    pub advertising_interval_ms: f64,
}

impl Default for BeaconDosParams {
    fn default() -> Self {
        BeaconDosParams {
            deny_at_s: 1.0,
            deny_for_s: Some(0.5),
            advertising_interval_ms: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeystrokeParams {
    /// Random presses to generate when no explicit script is given.
    pub presses: u32,
    pub script_ms: Option<Vec<f64>>,
    pub start_ms: f64,
    /// Minimum spacing of generated presses; the HID interval when absent.
    pub min_gap_ms: Option<f64>,
    pub max_extra_ms: f64,
}

impl Default for KeystrokeParams {
    fn default() -> Self {
        KeystrokeParams {
            presses: 20,
            script_ms: None,
            start_ms: 50.0,
            min_gap_ms: None,
            max_extra_ms: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JitterParams {
    /// Only this traffic type; all three when absent.
    pub traffic: Option<TrafficClass>,
    pub n_samples: usize,
    pub trials: u32,
    pub sigma_scale: f64,
    pub anchor_known: bool,
}

impl Default for JitterParams {
    fn default() -> Self {
        JitterParams {
            traffic: None,
            n_samples: 500,
            trials: 20,
            sigma_scale: 1.0,
            anchor_known: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlitchParams {
    pub mode: PtaMode,
    pub load_mbps: f64,
}

impl Default for GlitchParams {
    fn default() -> Self {
        GlitchParams {
            mode: PtaMode::WlanHigh,
            load_mbps: 7.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SharedmemParams {
    pub associated: bool,
    pub wifi_powered: bool,
    /// Bluetooth addresses where executable code starts.
    pub exec_regions: Vec<u32>,
    pub region_len: u32,
    pub ssid: String,
    pub passphrase: String,
    pub p_unstable: f64,
    /// Branch target planted once a region is found.
    pub probe_target: u32,
    /// Fixed finder target; random invalid targets when absent.
    pub finder_target: Option<u32>,
    pub verify_reads: bool,
}

impl Default for SharedmemParams {
    fn default() -> Self {
        SharedmemParams {
            associated: true,
            wifi_powered: true,
            exec_regions: vec![0x0068_1024],
            region_len: 4,
            ssid: "testnet".into(),
            passphrase: "hunter22".into(),
            p_unstable: 0.05,
            probe_target: 0xcafe_babe,
            finder_target: None,
            verify_reads: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackParams {
    GrantRejectDos(GrantRejectParams),
    PriorityFloodDos(PriorityFloodParams),
    BleBeaconDos(BeaconDosParams),
    KeystrokeSniff(KeystrokeParams),
    JitterClassify(JitterParams),
    GrantGlitchObserve(GlitchParams),
    SharedmemExploit(SharedmemParams),
}

impl AttackParams {
    pub fn kind(&self) -> AttackKind {
        match self {
            AttackParams::GrantRejectDos(_) => AttackKind::GrantRejectDos,
            AttackParams::PriorityFloodDos(_) => AttackKind::PriorityFloodDos,
            AttackParams::BleBeaconDos(_) => AttackKind::BleBeaconDos,
            AttackParams::KeystrokeSniff(_) => AttackKind::KeystrokeSniff,
            AttackParams::JitterClassify(_) => AttackKind::JitterClassify,
            AttackParams::GrantGlitchObserve(_) => AttackKind::GrantGlitchObserve,
            AttackParams::SharedmemExploit(_) => AttackKind::SharedmemExploit,
        }
    }

    pub fn default_for(kind: AttackKind) -> Self {
        match kind {
            AttackKind::GrantRejectDos => AttackParams::GrantRejectDos(Default::default()),
            AttackKind::PriorityFloodDos => AttackParams::PriorityFloodDos(Default::default()),
            AttackKind::BleBeaconDos => AttackParams::BleBeaconDos(Default::default()),
            AttackKind::KeystrokeSniff => AttackParams::KeystrokeSniff(Default::default()),
            AttackKind::JitterClassify => AttackParams::JitterClassify(Default::default()),
            AttackKind::GrantGlitchObserve => AttackParams::GrantGlitchObserve(Default::default()),
            AttackKind::SharedmemExploit => AttackParams::SharedmemExploit(Default::default()),
        }
    }
}

/// A fully resolved scenario, ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    /// Overrides the kind's natural run length.
    pub duration: Option<SimTime>,
    pub attacker_core: Core,
    pub enabled: bool,
    pub attack: AttackParams,
    pub bluetooth: BtDeviceProfile,
    pub wifi: WifiDeviceProfile,
}

impl Scenario {
    /// The attack with the devices it targets by default, attack enabled.
    pub fn new(attack: AttackParams, seed: u64) -> Self {
        let kind = attack.kind();
        Scenario {
            seed,
            duration: None,
            attacker_core: kind.attacker_core(),
            enabled: true,
            bluetooth: default_bluetooth(kind),
            wifi: default_wifi(kind),
            attack,
        }
    }

    pub fn kind(&self) -> AttackKind {
        self.attack.kind()
    }
}

pub fn default_bluetooth(kind: AttackKind) -> BtDeviceProfile {
    match kind {
        AttackKind::GrantRejectDos | AttackKind::JitterClassify => BtDeviceProfile::audio_stream(),
        AttackKind::KeystrokeSniff => {
            BtDeviceProfile::hid_keyboard(KeyboardModel::AppleWireless.hid_interval()).expect("known keyboard")
        }
        _ => BtDeviceProfile::beacon(),
    }
}

pub fn default_wifi(kind: AttackKind) -> WifiDeviceProfile {
    let role = match kind {
        AttackKind::GrantGlitchObserve | AttackKind::PriorityFloodDos => WifiRole::AccessPoint,
        _ => WifiRole::StationLoad,
    };
    WifiDeviceProfile::new(role, 6, 20, 0.0).expect("valid channel")
}

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("{kind} needs the attacker on {expected:?}, got {got:?}")]
    WrongCore {
        kind: AttackKind,
        expected: Core,
        got: Core,
    },
    #[error("invalid parameter {field}: {msg}")]
    Param { field: &'static str, msg: String },
    #[error(transparent)]
    SharedMem(#[from] ShmError),
    #[error("simulation: {0}")]
    Sim(String),
}

pub(crate) fn param_err(field: &'static str, msg: impl Into<String>) -> AttackError {
    AttackError::Param { field, msg: msg.into() }
}

pub(crate) fn secs(field: &'static str, v: f64) -> Result<SimTime, AttackError> {
    if v.is_finite() && v >= 0.0 {
        Ok(SimTime::from_secs_f64(v))
    } else {
        Err(param_err(field, format!("{v} is not a non-negative time")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutput {
    pub report: AttackReport,
    pub crash_logs: Vec<CrashLog>,
}

/// What a runner hands back before it is wrapped into a report.
#[derive(Debug, Clone)]
pub struct Finished {
    pub verdict: Verdict,
    pub outcome: String,
    pub metrics: Value,
    pub duration: SimTime,
    pub crash_logs: Vec<CrashLog>,
}

impl Finished {
    pub fn new(verdict: Verdict, outcome: impl Into<String>, metrics: Value, duration: SimTime) -> Self {
        Finished {
            verdict,
            outcome: outcome.into(),
            metrics,
            duration,
            crash_logs: Vec::new(),
        }
    }
}

/// Runs one scenario. The trace collects everything observable on the
/// interfaces plus the attacker's actions.
pub fn run_scenario(s: &Scenario, trace: &mut TraceRecorder) -> Result<AttackOutput, AttackError> {
    let kind = s.kind();
    if s.attacker_core != kind.attacker_core() {
        return Err(AttackError::WrongCore {
            kind,
            expected: kind.attacker_core(),
            got: s.attacker_core,
        });
    }
    let done = match &s.attack {
        AttackParams::GrantRejectDos(p) => run_grant_reject_dos(s, p, trace)?,
        AttackParams::PriorityFloodDos(p) => run_priority_flood_dos(s, p, trace)?,
        AttackParams::BleBeaconDos(p) => run_ble_beacon_dos(s, p, trace)?,
        AttackParams::KeystrokeSniff(p) => run_keystroke_sniff(s, p, trace)?,
        AttackParams::JitterClassify(p) => run_jitter_classify(s, p, trace)?,
        AttackParams::GrantGlitchObserve(p) => run_grant_glitch_observe(s, p, trace)?,
        AttackParams::SharedmemExploit(p) => run_sharedmem_exploit(s, p, trace)?,
    };
    Ok(AttackOutput {
        report: AttackReport {
            format_version: REPORT_FORMAT_VERSION,
            kind,
            attacker_core: s.attacker_core,
            attack_enabled: s.enabled,
            seed: s.seed,
            duration_ns: done.duration.as_nanos(),
            verdict: done.verdict,
            outcome: done.outcome,
            metrics: done.metrics,
            trace_path: None,
            crash_logs: Vec::new(),
        },
        crash_logs: done.crash_logs,
    })
}

pub(crate) fn ms(t: SimTime) -> f64 {
    t.as_millis_f64()
}
