use serde::{Deserialize, Serialize};

use super::{PtaConfig, PtaMode};
use crate::sim::{RngStream, SimTime};

/// A short drop of the GRANT line to 0 V while Wi-Fi is busy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlitchPulse {
    pub at: SimTime,
    pub duration: SimTime,
}

/// Whether the glitch defect can fire at all for this mode and load.
pub fn glitch_conditions_hold(load_mbps: f64, cfg: &PtaConfig) -> bool {
    cfg.grant_glitch_enabled && load_mbps > 0.0 && matches!(cfg.mode, PtaMode::WlanHigh | PtaMode::WlanMaximized)
}

/// Glitch pulses for a Wi-Fi link carrying `load_mbps` while GRANT is
/// asserted during the `busy` intervals `(start, duration)`.
///
/// One pulse per `frames_per_glitch` frames of `glitch_frame_bytes` each,
/// counted over the span from the first busy start to the last busy end and
/// placed uniformly over the busy time.
pub fn inject_grant_glitch(
    load_mbps: f64,
    cfg: &PtaConfig,
    stream: &mut RngStream,
    busy: &[(SimTime, SimTime)],
) -> Vec<GlitchPulse> {
    let d = cfg.glitch_duration;
    let usable: Vec<(SimTime, u64)> = busy
        .iter()
        .filter(|(_, len)| *len > d)
        .map(|&(at, len)| (at, (len - d).as_nanos()))
        .collect();
    let (Some(first), Some(last)) = (busy.first(), busy.last()) else {
        return Vec::new();
    };
    let total: u64 = usable.iter().map(|u| u.1).sum();
    if !glitch_conditions_hold(load_mbps, cfg) || total == 0 {
        return Vec::new();
    }
    let span = (last.0 + last.1).saturating_sub(first.0);
    let frame_bits = cfg.glitch_frame_bytes.max(1) as f64 * 8.0;
    let frames = load_mbps * 1e6 * span.as_secs_f64() / frame_bits;
    let count = (frames / cfg.frames_per_glitch.max(1) as f64).floor() as u64;
    let mut pulses: Vec<GlitchPulse> = (0..count)
        .map(|_| {
            let mut x = stream.below(total);
            let mut i = 0;
            while x >= usable[i].1 {
                x -= usable[i].1;
                i += 1;
            }
            GlitchPulse {
                at: usable[i].0 + SimTime::from_nanos(x),
                duration: d,
            }
        })
        .collect();
    pulses.sort_by_key(|p| p.at);
    pulses
}
