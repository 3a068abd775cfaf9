//! Scenario files: TOML documents naming the devices, the coexistence
//! backend and the attack. `docs/config.md` has the full format.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::attacks::{default_bluetooth, default_wifi, AttackKind, AttackParams, Scenario};
use crate::devices::{
    BtDeviceProfile, BtRole, KeyboardModel, WifiDeviceProfile, WifiRole, DEFAULT_SUPERVISION_TIMEOUT,
};
use crate::sim::SimTime;
use crate::Core;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Pta,
    Seci,
    ComboSharedmem,
}

impl Backend {
    pub fn for_kind(kind: AttackKind) -> Backend {
        match kind {
            AttackKind::GrantRejectDos | AttackKind::KeystrokeSniff => Backend::Seci,
            AttackKind::SharedmemExploit => Backend::ComboSharedmem,
            _ => Backend::Pta,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Pta => "pta",
            Backend::Seci => "seci",
            Backend::ComboSharedmem => "combo_sharedmem",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigError {
    /// Dotted key path, empty for syntax errors.
    pub field: String,
    pub line: Option<usize>,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        if !self.field.is_empty() {
            write!(f, "{}: ", self.field)?;
        }
        f.write_str(&self.msg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub backend: Backend,
    pub scenario: Scenario,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBluetooth {
    role: BtRole,
    hid_interval_ms: Option<f64>,
    keyboard: Option<KeyboardModel>,
    supervision_timeout_s: Option<f64>,
    advertising_interval_ms: Option<f64>,
    audio_period_ms: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWifi {
    role: WifiRole,
    #[serde(default = "default_channel")]
    channel: u8,
    #[serde(default = "default_bandwidth")]
    bandwidth_mhz: u16,
    #[serde(default)]
    offered_load_mbps: f64,
}

fn default_channel() -> u8 {
    6
}

fn default_bandwidth() -> u16 {
    20
}

const TOP_KEYS: [&str; 6] = ["seed", "duration_s", "backend", "bluetooth", "wifi", "attack"];
const ATTACK_KEYS: [&str; 4] = ["kind", "attacker_core", "enabled", "params"];

/// Seconds as a `SimTime`, rejecting negative and non-finite values.
pub fn seconds(v: f64) -> Option<SimTime> {
    (v.is_finite() && (0.0..1.8e10).contains(&v)).then(|| SimTime::from_secs_f64(v))
}

/// `2`, `2.5s`, `500ms`, `125us` or `10ns`.
pub fn parse_duration(s: &str) -> Result<SimTime, String> {
    let s = s.trim();
    let split = s.find(|c: char| c.is_ascii_alphabetic()).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let v: f64 = num.trim().parse().map_err(|_| format!("bad duration {s:?}"))?;
    let scale = match unit {
        "" | "s" => 1.0,
        "ms" => 1e-3,
        "us" => 1e-6,
        "ns" => 1e-9,
        _ => return Err(format!("unknown duration unit {unit:?}")),
    };
    seconds(v * scale).ok_or_else(|| format!("bad duration {s:?}"))
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
            field: String::new(),
            line: None,
            msg: format!("cannot read {}: {e}", path.display()),
        })?;
        src.parse()
    }

    /// Parses the document without interpreting it, for sweeps that patch
    /// values before validation.
    pub fn parse_table(src: &str) -> Result<Table, ConfigError> {
        src.parse::<Table>().map_err(|e| ConfigError {
            field: String::new(),
            line: e.span().map(|s| line_at(src, s.start)),
            msg: e.message().to_owned(),
        })
    }

    /// Builds a config from a parsed document. `src` only feeds line
    /// numbers into diagnostics.
    pub fn from_table(t: &Table, src: Option<&str>) -> Result<Self, ConfigError> {
        let err = |field: &str, msg: String| ConfigError {
            field: field.to_owned(),
            line: src.and_then(|s| line_of(s, field)),
            msg,
        };
        for k in t.keys() {
            if !TOP_KEYS.contains(&k.as_str()) {
                return Err(err(k, "unknown key".into()));
            }
        }
        let seed = match t.get("seed") {
            None => return Err(err("seed", "required".into())),
            Some(Value::Integer(n)) if *n >= 0 => *n as u64,
            Some(v) => return Err(err("seed", format!("expected a non-negative integer, got {v}"))),
        };
        let duration = match t.get("duration_s") {
            None => None,
            Some(v) => {
                let s = number(v).ok_or_else(|| err("duration_s", "expected a number".into()))?;
                Some(
                    seconds(s)
                        .filter(|d| *d > SimTime::ZERO)
                        .ok_or_else(|| err("duration_s", "must be positive".into()))?,
                )
            }
        };

        let attack = match t.get("attack") {
            Some(Value::Table(a)) => a,
            Some(_) => return Err(err("attack", "expected a table".into())),
            None => return Err(err("attack", "required".into())),
        };
        for k in attack.keys() {
            if !ATTACK_KEYS.contains(&k.as_str()) {
                return Err(err(&format!("attack.{k}"), "unknown key".into()));
            }
        }
        let kind: AttackKind = field(attack, "kind").map_err(|m| err("attack.kind", m))?;
        let attacker_core: Core = field(attack, "attacker_core").map_err(|m| err("attack.attacker_core", m))?;
        if attacker_core != kind.attacker_core() {
            return Err(err(
                "attack.attacker_core",
                format!(
                    "{kind} is launched from {}, not {}",
                    kind.attacker_core().as_str(),
                    attacker_core.as_str()
                ),
            ));
        }
        let enabled = match attack.get("enabled") {
            None => true,
            Some(Value::Boolean(b)) => *b,
            Some(v) => return Err(err("attack.enabled", format!("expected a boolean, got {v}"))),
        };
        let mut params = match attack.get("params") {
            None => Table::new(),
            Some(Value::Table(p)) => p.clone(),
            Some(_) => return Err(err("attack.params", "expected a table".into())),
        };
        params.insert("kind".into(), Value::String(kind.as_str().into()));
        let attack_params = AttackParams::deserialize(Value::Table(params))
            .map_err(|e| err("attack.params", e.message().trim().to_owned()))?;

        let backend: Backend = match t.get("backend") {
            None => Backend::for_kind(kind),
            Some(_) => field(t, "backend").map_err(|m| err("backend", m))?,
        };
        if backend != Backend::for_kind(kind) {
            return Err(err(
                "backend",
                format!(
                    "{kind} runs on the {} backend, not {}",
                    Backend::for_kind(kind).as_str(),
                    backend.as_str()
                ),
            ));
        }

        let bluetooth = match t.get("bluetooth") {
            None => default_bluetooth(kind),
            Some(v) => bluetooth(v).map_err(|(f, m)| err(&format!("bluetooth{f}"), m))?,
        };
        let wifi = match t.get("wifi") {
            None => default_wifi(kind),
            Some(v) => wifi(v).map_err(|(f, m)| err(&format!("wifi{f}"), m))?,
        };
        if let Some(role) = required_bt_role(kind) {
            if bluetooth.role != role {
                return Err(err(
                    "bluetooth.role",
                    format!("{kind} needs a {} device", bt_role_str(role)),
                ));
            }
        }
        if kind == AttackKind::PriorityFloodDos && wifi.role != WifiRole::AccessPoint {
            return Err(err("wifi.role", format!("{kind} needs an access_point")));
        }

        Ok(ScenarioConfig {
            backend,
            scenario: Scenario {
                seed,
                duration,
                attacker_core,
                enabled,
                attack: attack_params,
                bluetooth,
                wifi,
            },
        })
    }

    pub fn apply_overrides(&mut self, seed: Option<u64>, duration: Option<SimTime>) {
        if let Some(s) = seed {
            self.scenario.seed = s;
        }
        if let Some(d) = duration {
            self.scenario.duration = Some(d);
        }
    }
}

impl FromStr for ScenarioConfig {
    type Err = ConfigError;

    fn from_str(src: &str) -> Result<Self, ConfigError> {
        Self::from_table(&Self::parse_table(src)?, Some(src))
    }
}

fn required_bt_role(kind: AttackKind) -> Option<BtRole> {
    match kind {
        AttackKind::GrantRejectDos => Some(BtRole::AudioStream),
        AttackKind::BleBeaconDos => Some(BtRole::Beacon),
        AttackKind::KeystrokeSniff => Some(BtRole::HidKeyboard),
        _ => None,
    }
}

fn bt_role_str(r: BtRole) -> &'static str {
    match r {
        BtRole::Beacon => "beacon",
        BtRole::AudioStream => "audio_stream",
        BtRole::HidKeyboard => "hid_keyboard",
    }
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Integer(n) => Some(*n as f64),
        Value::Float(f) => Some(*f),
        _ => None,
    }
}

fn field<T: DeserializeOwned>(t: &Table, key: &str) -> Result<T, String> {
    let v = t.get(key).ok_or("required")?;
    T::deserialize(v.clone()).map_err(|e| e.message().trim().to_owned())
}

fn ms_field(v: Option<f64>, key: &str) -> Result<Option<SimTime>, (String, String)> {
    v.map(|x| {
        seconds(x / 1e3)
            .filter(|d| *d > SimTime::ZERO)
            .ok_or((format!(".{key}"), "must be positive".to_owned()))
    })
    .transpose()
}

fn bluetooth(v: &Value) -> Result<BtDeviceProfile, (String, String)> {
    let raw = RawBluetooth::deserialize(v.clone()).map_err(|e| (String::new(), e.message().trim().to_owned()))?;
    let mut p = match raw.role {
        BtRole::Beacon => BtDeviceProfile::beacon(),
        BtRole::AudioStream => BtDeviceProfile::audio_stream(),
        BtRole::HidKeyboard => {
            let interval = match (ms_field(raw.hid_interval_ms, "hid_interval_ms")?, raw.keyboard) {
                (Some(_), Some(_)) => {
                    return Err((".keyboard".into(), "give either keyboard or hid_interval_ms".into()));
                }
                (Some(i), None) => i,
                (None, Some(k)) => k.hid_interval(),
                (None, None) => KeyboardModel::AppleWireless.hid_interval(),
            };
            BtDeviceProfile::hid_keyboard(interval).map_err(|e| (".hid_interval_ms".to_owned(), e.to_string()))?
        }
    };
    if raw.role != BtRole::HidKeyboard && (raw.hid_interval_ms.is_some() || raw.keyboard.is_some()) {
        return Err((".role".into(), "hid settings need role = \"hid_keyboard\"".into()));
    }
    p.supervision_timeout = ms_field(raw.supervision_timeout_s.map(|s| s * 1e3), "supervision_timeout_s")?
        .unwrap_or(DEFAULT_SUPERVISION_TIMEOUT);
    if let Some(a) = ms_field(raw.advertising_interval_ms, "advertising_interval_ms")? {
        p.advertising_interval = a;
    }
    if let Some(a) = ms_field(raw.audio_period_ms, "audio_period_ms")? {
        p.audio_period = a;
    }
    Ok(p)
}

fn wifi(v: &Value) -> Result<WifiDeviceProfile, (String, String)> {
    let raw = RawWifi::deserialize(v.clone()).map_err(|e| (String::new(), e.message().trim().to_owned()))?;
    WifiDeviceProfile::new(raw.role, raw.channel, raw.bandwidth_mhz, raw.offered_load_mbps)
        .map_err(|e| (String::new(), e.to_string()))
}

fn line_at(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Best-effort line of a dotted key: the `key =` line inside its table, or
/// the table header itself.
fn line_of(src: &str, path: &str) -> Option<usize> {
    let (table, key) = match path.rsplit_once('.') {
        Some((t, k)) => (t, k),
        None => ("", path),
    };
    let mut current = String::new();
    let mut header_line = None;
    for (i, raw) in src.lines().enumerate() {
        let l = raw.trim();
        if let Some(h) = l.strip_prefix('[').and_then(|h| h.strip_suffix(']')) {
            current = h.trim().to_owned();
            if current == path {
                return Some(i + 1);
            }
            if current == table {
                header_line = Some(i + 1);
            }
            continue;
        }
        let k = l.split('=').next().unwrap_or("").trim();
        if current == table && k == key && l.contains('=') {
            return Some(i + 1);
        }
    }
    header_line
}
