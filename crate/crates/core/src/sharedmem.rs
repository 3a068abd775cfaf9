//! Shared RAM window of a Broadcom-style combo chip.
//!
//! Bluetooth sees part of the Wi-Fi RAM at `0x680000`; Wi-Fi sees the same
//! bytes at `0x180000`. Writes go straight through. Reads are flaky. Some of
//! the window is executed by Wi-Fi, which is what the code-execution finder
//! looks for by planting branch instructions and watching crash logs.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{RngStream, SimTime, TraceRecorder};

pub const BT_WINDOW_BASE: u32 = 0x0068_0000;
pub const WIFI_WINDOW_BASE: u32 = 0x0018_0000;
pub const WINDOW_DELTA: u32 = BT_WINDOW_BASE - WIFI_WINDOW_BASE;
pub const DEFAULT_WINDOW_LEN: u32 = 0x0008_0000;

/// First Wi-Fi address covered by a RAM dump.
pub const RAM_BASE: u32 = 0x0017_0000;
pub const RAM_LEN: u32 = 0x0015_0000;
/// Offset of the shared window inside a RAM dump.
pub const DUMP_BASE: u32 = WIFI_WINDOW_BASE - RAM_BASE;

/// Where the firmware keeps the credentials of the current network.
pub const SECRET_ADDR: u32 = 0x002a_0000;
pub const SECRET_MAGIC: [u8; 4] = *b"WSEC";

/// Opcode bytes of the modeled far branch; the target follows as LE u32.
pub const BRANCH_OPCODE: [u8; 4] = [0x00, 0xf0, 0x00, 0xb8];
pub const PROBE_LEN: usize = 8;

pub const REINIT_DELAY: SimTime = SimTime::from_secs(1);
pub const FINDER_CRASH_WAIT: SimTime = SimTime::from_secs(10);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShmError {
    #[error("shared window is not mapped")]
    Unmapped,
    #[error("range {addr:#x}+{len:#x} leaves the shared window")]
    OutOfWindow { addr: u32, len: usize },
    #[error("Bluetooth firmware crashed on an unstable read at {addr:#x}")]
    BtCrash { addr: u32 },
    #[error("finder aborted: Bluetooth core crashed at {0:#x}")]
    AbortedByBtCrash(u32),
    #[error("executable region {start:#x}+{len:#x} is invalid")]
    BadRegion { start: u32, len: u32 },
    #[error("bad credentials: {0}")]
    BadCredentials(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedWindow {
    pub bt_base: u32,
    pub wifi_base: u32,
    pub length: u32,
    pub mapped: bool,
}

impl Default for SharedWindow {
    fn default() -> Self {
        SharedWindow {
            bt_base: BT_WINDOW_BASE,
            wifi_base: WIFI_WINDOW_BASE,
            length: DEFAULT_WINDOW_LEN,
            mapped: true,
        }
    }
}

impl SharedWindow {
    pub fn translate(&self, bt_addr: u32) -> Option<u32> {
        let off = bt_addr.checked_sub(self.bt_base)?;
        (off < self.length).then_some(self.wifi_base + off)
    }

    pub fn to_bt(&self, wifi_addr: u32) -> Option<u32> {
        let off = wifi_addr.checked_sub(self.wifi_base)?;
        (off < self.length).then_some(self.bt_base + off)
    }

    /// Wi-Fi address of `[bt_addr, bt_addr + len)` if the range fits.
    pub fn translate_range(&self, bt_addr: u32, len: usize) -> Result<u32, ShmError> {
        let out = ShmError::OutOfWindow { addr: bt_addr, len };
        let start = self.translate(bt_addr).ok_or(out.clone())?;
        let end = (bt_addr as u64) + len as u64;
        if end > self.bt_base as u64 + self.length as u64 {
            return Err(out);
        }
        Ok(start)
    }
}

/// A range of Wi-Fi RAM the firmware executes regularly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExecRegion {
    pub start: u32,
    pub len: u32,
}

impl ExecRegion {
    pub fn contains(&self, addr: u32) -> bool {
        addr >= self.start && addr - self.start < self.len
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credentials {
    pub ssid: String,
    pub passphrase: String,
}

impl Credentials {
    fn encode(&self) -> Vec<u8> {
        let mut out = SECRET_MAGIC.to_vec();
        for field in [&self.ssid, &self.passphrase] {
            out.push(field.len() as u8);
            out.extend_from_slice(field.as_bytes());
        }
        out
    }
}

/// Wi-Fi RAM image plus the code layout the finder is after.
#[derive(Debug, Clone)]
pub struct WifiRam {
    bytes: Vec<u8>,
    pristine: Vec<u8>,
    executable_regions: Vec<ExecRegion>,
    /// Lowest written address per executable region since the last reset.
    dirty: Vec<Option<u32>>,
}

impl WifiRam {
    pub fn new(mut regions: Vec<ExecRegion>) -> Result<Self, ShmError> {
        regions.sort();
        for r in &regions {
            let end = r.start as u64 + r.len as u64;
            if r.len == 0 || r.start % 4 != 0 || r.start < RAM_BASE || end > RAM_BASE as u64 + RAM_LEN as u64 {
                return Err(ShmError::BadRegion {
                    start: r.start,
                    len: r.len,
                });
            }
        }
        let pristine = pristine_image();
        Ok(WifiRam {
            bytes: pristine.clone(),
            pristine,
            dirty: vec![None; regions.len()],
            executable_regions: regions,
        })
    }

    pub fn executable_regions(&self) -> &[ExecRegion] {
        &self.executable_regions
    }

    pub fn read(&self, wifi_addr: u32, len: usize) -> &[u8] {
        let off = (wifi_addr - RAM_BASE) as usize;
        &self.bytes[off..off + len]
    }

    pub fn byte(&self, wifi_addr: u32) -> u8 {
        self.bytes[(wifi_addr - RAM_BASE) as usize]
    }

    fn write(&mut self, wifi_addr: u32, data: &[u8]) {
        let off = (wifi_addr - RAM_BASE) as usize;
        self.bytes[off..off + data.len()].copy_from_slice(data);
        let end = wifi_addr as u64 + data.len() as u64;
        for (r, d) in self.executable_regions.iter().zip(self.dirty.iter_mut()) {
            let lo = wifi_addr.max(r.start);
            if (lo as u64) < end.min(r.start as u64 + r.len as u64) {
                *d = Some(d.map_or(lo, |x| x.min(lo)));
            }
        }
    }

    fn reset(&mut self) {
        self.bytes.copy_from_slice(&self.pristine);
        self.dirty.iter_mut().for_each(|d| *d = None);
    }

    pub fn dump(&self) -> Vec<u8> {
        self.bytes.clone()
    }
}

/// Deterministic stand-in for firmware contents.
fn pristine_image() -> Vec<u8> {
    let mut x: u32 = 0x9e37_79b9;
    (0..RAM_LEN)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 17;
            x ^= x << 5;
            (x >> 24) as u8
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrashCause {
    BranchToInvalid,
    IllegalInstruction,
}

impl CrashCause {
    pub fn trap_id(self) -> u32 {
        match self {
            CrashCause::BranchToInvalid => 3,
            CrashCause::IllegalInstruction => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CrashCause::BranchToInvalid => "branch_to_invalid",
            CrashCause::IllegalInstruction => "illegal_instruction",
        }
    }
}

impl fmt::Display for CrashCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrashLog {
    pub cause: CrashCause,
    pub pc: u32,
    pub at: SimTime,
    pub ram_dump: Vec<u8>,
    pub dump_base: u32,
}

#[derive(Debug, Error)]
pub enum CrashLogError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("metadata: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad field {field}: {value:?}")]
    Field { field: &'static str, value: String },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CrashMeta {
    cause: CrashCause,
    trap: u32,
    pc: String,
    time_ns: u64,
    dump_base: String,
    ram_base: String,
}

fn parse_hex(field: &'static str, s: &str) -> Result<u32, CrashLogError> {
    s.strip_prefix("0x")
        .and_then(|h| u32::from_str_radix(h, 16).ok())
        .ok_or(CrashLogError::Field {
            field,
            value: s.to_owned(),
        })
}

pub const CRASH_META_FILE: &str = "crash.json";
pub const CRASH_DUMP_FILE: &str = "SoC_RAM.bin";

impl CrashLog {
    /// Byte at Wi-Fi address `addr`, if the dump covers it.
    pub fn byte_at(&self, addr: u32) -> Option<u8> {
        let off = addr.checked_sub(RAM_BASE)?;
        self.ram_dump.get(off as usize).copied()
    }

    pub fn metadata_json(&self) -> String {
        let meta = CrashMeta {
            cause: self.cause,
            trap: self.cause.trap_id(),
            pc: format!("{:#x}", self.pc),
            time_ns: self.at.as_nanos(),
            dump_base: format!("{:#x}", self.dump_base),
            ram_base: format!("{RAM_BASE:#x}"),
        };
        serde_json::to_string_pretty(&meta).expect("plain struct")
    }

    /// Rebuilds a log from its metadata file contents and dump bytes.
    pub fn from_parts(meta_json: &[u8], dump: Vec<u8>) -> Result<Self, CrashLogError> {
        let meta: CrashMeta = serde_json::from_slice(meta_json)?;
        if meta.trap != meta.cause.trap_id() {
            return Err(CrashLogError::Field {
                field: "trap",
                value: meta.trap.to_string(),
            });
        }
        if parse_hex("ram_base", &meta.ram_base)? != RAM_BASE {
            return Err(CrashLogError::Field {
                field: "ram_base",
                value: meta.ram_base,
            });
        }
        Ok(CrashLog {
            cause: meta.cause,
            pc: parse_hex("pc", &meta.pc)?,
            at: SimTime::from_nanos(meta.time_ns),
            dump_base: parse_hex("dump_base", &meta.dump_base)?,
            ram_dump: dump,
        })
    }

    pub fn dir_name(&self, index: usize) -> String {
        format!("crash_{index:03}_{}", self.cause)
    }

    /// Writes `<parent>/crash_<n>_<cause>/{crash.json,SoC_RAM.bin}`.
    pub fn export(&self, parent: &Path, index: usize) -> io::Result<PathBuf> {
        let dir = parent.join(self.dir_name(index));
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(CRASH_META_FILE), self.metadata_json())?;
        fs::write(dir.join(CRASH_DUMP_FILE), &self.ram_dump)?;
        Ok(dir)
    }

    pub fn load(dir: &Path) -> Result<Self, CrashLogError> {
        let meta = fs::read(dir.join(CRASH_META_FILE))?;
        let dump = fs::read(dir.join(CRASH_DUMP_FILE))?;
        Self::from_parts(&meta, dump)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchProbe {
    pub written_at: u32,
    pub target: u32,
}

impl BranchProbe {
    pub fn new(written_at: u32, target: u32) -> Self {
        BranchProbe { written_at, target }
    }

    pub fn expected_pc(&self) -> u32 {
        self.target & !0x3
    }

    pub fn encode(&self) -> [u8; PROBE_LEN] {
        let mut out = [0; PROBE_LEN];
        out[..4].copy_from_slice(&BRANCH_OPCODE);
        out[4..].copy_from_slice(&self.target.to_le_bytes());
        out
    }
}

/// Whether a branch target lands in loaded code.
pub fn is_valid_code_address(addr: u32) -> bool {
    (RAM_BASE..RAM_BASE + RAM_LEN).contains(&addr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChipConfig {
    pub powered: bool,
    pub p_unstable: f64,
    pub window_len: u32,
    pub reinit_delay: SimTime,
    /// Time from (re)start until the station is associated again.
    pub assoc_delay: SimTime,
    pub credentials: Option<Credentials>,
}

impl Default for ChipConfig {
    fn default() -> Self {
        ChipConfig {
            powered: true,
            p_unstable: 0.05,
            window_len: DEFAULT_WINDOW_LEN,
            reinit_delay: REINIT_DELAY,
            assoc_delay: SimTime::from_secs(2),
            credentials: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExecOutcome {
    Running,
    Crashed(CrashLog),
}

/// Wi-Fi side of the combo chip, advanced lazily to the caller's clock.
#[derive(Debug, Clone)]
pub struct ComboChip {
    cfg: ChipConfig,
    ram: WifiRam,
    window: SharedWindow,
    /// Window comes back after a crash at this time.
    up_at: SimTime,
    /// Station (re)associates at this time.
    assoc_at: Option<SimTime>,
    associated: bool,
    crashes: u32,
}

impl ComboChip {
    /// A chip that booted at t=0. With credentials it is associated from
    /// `assoc_delay` on.
    pub fn new(cfg: ChipConfig, regions: Vec<ExecRegion>) -> Result<Self, ShmError> {
        if let Some(c) = &cfg.credentials {
            if c.ssid.is_empty() || c.ssid.len() > 32 {
                return Err(ShmError::BadCredentials("ssid must be 1..=32 bytes"));
            }
            if c.passphrase.len() > 63 {
                return Err(ShmError::BadCredentials("passphrase longer than 63 bytes"));
            }
        }
        let window = SharedWindow {
            length: cfg.window_len,
            mapped: cfg.powered,
            ..SharedWindow::default()
        };
        if window.length == 0 || WIFI_WINDOW_BASE as u64 + window.length as u64 > (RAM_BASE + RAM_LEN) as u64 {
            return Err(ShmError::BadRegion {
                start: WIFI_WINDOW_BASE,
                len: window.length,
            });
        }
        let assoc_at = cfg
            .credentials
            .as_ref()
            .filter(|_| cfg.powered)
            .map(|_| cfg.assoc_delay);
        Ok(ComboChip {
            ram: WifiRam::new(regions)?,
            cfg,
            window,
            up_at: SimTime::ZERO,
            assoc_at,
            associated: false,
            crashes: 0,
        })
    }

    pub fn config(&self) -> &ChipConfig {
        &self.cfg
    }

    pub fn window(&self) -> SharedWindow {
        self.window
    }

    pub fn ram(&self) -> &WifiRam {
        &self.ram
    }

    pub fn crash_count(&self) -> u32 {
        self.crashes
    }

    pub fn is_associated(&mut self, now: SimTime) -> bool {
        self.advance(now);
        self.associated
    }

    fn advance(&mut self, now: SimTime) {
        if self.cfg.powered && !self.window.mapped && now >= self.up_at {
            self.window.mapped = true;
        }
        if let (Some(at), Some(creds)) = (self.assoc_at, &self.cfg.credentials) {
            if now >= at && !self.associated {
                let rec = creds.encode();
                self.ram.write(SECRET_ADDR, &rec);
                self.associated = true;
                self.assoc_at = None;
            }
        }
    }

    pub fn bt_write(&mut self, now: SimTime, addr: u32, data: &[u8]) -> Result<(), ShmError> {
        self.advance(now);
        if !self.window.mapped {
            return Err(ShmError::Unmapped);
        }
        let wifi = self.window.translate_range(addr, data.len())?;
        self.ram.write(wifi, data);
        Ok(())
    }

    /// Reads through the window. Unstable reads return a zero chunk or crash
    /// the Bluetooth firmware with equal odds. An unmapped window reads zero.
    pub fn bt_read(
        &mut self,
        now: SimTime,
        addr: u32,
        len: usize,
        stream: &mut RngStream,
    ) -> Result<Vec<u8>, ShmError> {
        self.advance(now);
        let wifi = self.window.translate_range(addr, len)?;
        if !self.window.mapped {
            return Ok(vec![0; len]);
        }
        if stream.chance(self.cfg.p_unstable) {
            return if stream.chance(0.5) {
                Ok(vec![0; len])
            } else {
                Err(ShmError::BtCrash { addr })
            };
        }
        Ok(self.ram.read(wifi, len).to_vec())
    }

    /// One pass of Wi-Fi executing its regular code paths.
    pub fn wifi_execute_check(&mut self, now: SimTime) -> ExecOutcome {
        self.advance(now);
        if !self.window.mapped {
            return ExecOutcome::Running;
        }
        let mut fault = None;
        for d in &self.ram.dirty {
            let Some(first) = *d else { continue };
            let p = first & !0x3;
            let word = self.ram.read(p, 4);
            let cause = if word == BRANCH_OPCODE && p + 8 <= RAM_BASE + RAM_LEN {
                let t = u32::from_le_bytes(self.ram.read(p + 4, 4).try_into().expect("4 bytes"));
                if is_valid_code_address(t) {
                    continue;
                }
                (CrashCause::BranchToInvalid, t & !0x3)
            } else {
                (CrashCause::IllegalInstruction, p)
            };
            fault = Some(cause);
            break;
        }
        let Some((cause, pc)) = fault else {
            return ExecOutcome::Running;
        };
        let log = CrashLog {
            cause,
            pc,
            at: now,
            ram_dump: self.ram.dump(),
            dump_base: DUMP_BASE,
        };
        self.crash_reset(now);
        ExecOutcome::Crashed(log)
    }

    fn crash_reset(&mut self, now: SimTime) {
        self.crashes += 1;
        self.ram.reset();
        self.window.mapped = false;
        self.associated = false;
        self.up_at = now + self.cfg.reinit_delay;
        if self.cfg.credentials.is_some() {
            self.assoc_at = Some(self.up_at + self.cfg.assoc_delay);
        }
    }
}

/// Pulls SSID and passphrase out of a RAM dump if the chip was associated.
pub fn extract_secrets(log: &CrashLog) -> Option<Credentials> {
    let dump = &log.ram_dump;
    let mut from = 0;
    while let Some(pos) = dump[from..].windows(4).position(|w| w == SECRET_MAGIC) {
        let at = from + pos;
        if let Some(c) = parse_secret(&dump[at + 4..]) {
            return Some(c);
        }
        from = at + 1;
    }
    None
}

fn parse_secret(rest: &[u8]) -> Option<Credentials> {
    let (&slen, rest) = rest.split_first()?;
    if slen == 0 || slen > 32 {
        return None;
    }
    let ssid = std::str::from_utf8(rest.get(..slen as usize)?).ok()?;
    let rest = &rest[slen as usize..];
    let (&plen, rest) = rest.split_first()?;
    if plen > 63 {
        return None;
    }
    let pass = std::str::from_utf8(rest.get(..plen as usize)?).ok()?;
    if ssid.chars().chain(pass.chars()).any(|c| c.is_control()) {
        return None;
    }
    Some(Credentials {
        ssid: ssid.to_owned(),
        passphrase: pass.to_owned(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinderConfig {
    /// Fixed branch target; random invalid targets when absent.
    pub target: Option<u32>,
    pub stride: u32,
    /// Wait between planting a probe and checking for a crash.
    pub probe_dwell: SimTime,
    pub crash_wait: SimTime,
    pub deadline: SimTime,
    pub verify_reads: bool,
}

impl Default for FinderConfig {
    fn default() -> Self {
        FinderConfig {
            target: None,
            stride: 4,
            probe_dwell: SimTime::from_millis(1),
            crash_wait: FINDER_CRASH_WAIT,
            deadline: SimTime::from_secs(900),
            verify_reads: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinderResult {
    /// Bluetooth addresses where executable code starts.
    pub regions: Vec<u32>,
    pub hits: Vec<u32>,
    pub crashes: Vec<CrashLog>,
    pub probes: u64,
    pub finished_at: SimTime,
    pub exhausted: bool,
}

fn random_invalid_target(stream: &mut RngStream) -> u32 {
    loop {
        let t = stream.next_u64() as u32;
        if !is_valid_code_address(t) && !is_valid_code_address(t & !3) {
            return t;
        }
    }
}

/// Sprays branch probes over the window in random order and keeps the
/// addresses whose crash log shows the planted target.
pub fn find_executable_regions(
    chip: &mut ComboChip,
    start: SimTime,
    cfg: &FinderConfig,
    stream: &mut RngStream,
    trace: &mut TraceRecorder,
) -> Result<FinderResult, ShmError> {
    let window = chip.window();
    let stride = cfg.stride.max(1);
    let mut candidates: Vec<u32> = (0..window.length.saturating_sub(PROBE_LEN as u32 - 1))
        .step_by(stride as usize)
        .map(|o| window.bt_base + o)
        .collect();
    stream.shuffle(&mut candidates);

    let mut now = start;
    let mut hits = Vec::new();
    let mut crashes = Vec::new();
    let mut probes = 0u64;
    let mut exhausted = true;
    let mut next = 0;
    while let Some(&addr) = candidates.get(next) {
        if now >= start + cfg.deadline {
            exhausted = false;
            break;
        }
        let probe = BranchProbe::new(addr, cfg.target.unwrap_or_else(|| random_invalid_target(stream)));
        match chip.bt_write(now, addr, &probe.encode()) {
            Ok(()) => next += 1,
            Err(ShmError::Unmapped) => {
                now += cfg.crash_wait;
                continue;
            }
            Err(e) => return Err(e),
        }
        trace.record(now, "attack.bluetooth", addr as i64);
        probes += 1;
        if cfg.verify_reads {
            match chip.bt_read(now, addr, PROBE_LEN, stream) {
                Err(ShmError::BtCrash { addr }) => {
                    trace.record(now, "attack.bluetooth.bt_crash", addr as i64);
                    return Err(ShmError::AbortedByBtCrash(addr));
                }
                Err(e) => return Err(e),
                Ok(_) => {}
            }
        }
        now += cfg.probe_dwell;
        if let ExecOutcome::Crashed(log) = chip.wifi_execute_check(now) {
            trace.record(now, "shm.crash", log.pc as i64);
            if log.cause == CrashCause::BranchToInvalid && log.pc == probe.expected_pc() {
                hits.push(addr);
            }
            crashes.push(log);
            now += cfg.crash_wait;
        }
    }
    hits.sort_unstable();
    let mut regions: Vec<u32> = Vec::new();
    for (i, &h) in hits.iter().enumerate() {
        if i == 0 || h - hits[i - 1] > stride {
            regions.push(h);
        }
    }
    Ok(FinderResult {
        regions,
        hits,
        crashes,
        probes,
        finished_at: now,
        exhausted,
    })
}
