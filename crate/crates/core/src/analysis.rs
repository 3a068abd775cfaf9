//! Attacker-side inference over what one core can observe of the other.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seci::KEYSTROKE_ACL;
use crate::sim::{RngStream, SimTime, BT_SLOT};

pub const HALF_SLOT_US: f64 = 312.5;
pub const MIN_CLASSIFY_SAMPLES: usize = 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("need at least {MIN_CLASSIFY_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
}

/// REQUEST edge position relative to the Bluetooth slot grid.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct OffsetSample {
    pub offset_us: f64,
}

/// Boxplot summary in µs. Whiskers are hard bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetStats {
    pub median: f64,
    pub lower_quartile: f64,
    pub upper_quartile: f64,
    pub lower_whisker: f64,
    pub upper_whisker: f64,
}

impl OffsetStats {
    /// Summary of a sample; whiskers are the extremes.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() || values.iter().any(|v| v.is_nan()) {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(OffsetStats {
            median: quantile_sorted(&v, 0.5),
            lower_quartile: quantile_sorted(&v, 0.25),
            upper_quartile: quantile_sorted(&v, 0.75),
            lower_whisker: v[0],
            upper_whisker: v[v.len() - 1],
        })
    }

    pub fn is_ordered(&self) -> bool {
        self.lower_whisker <= self.lower_quartile
            && self.lower_quartile <= self.median
            && self.median <= self.upper_quartile
            && self.upper_quartile <= self.upper_whisker
    }

    fn knots(&self) -> [f64; 5] {
        [
            self.lower_whisker,
            self.lower_quartile,
            self.median,
            self.upper_quartile,
            self.upper_whisker,
        ]
    }
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficClass {
    Idle,
    Indication,
    Notification,
}

impl TrafficClass {
    pub const ALL: [TrafficClass; 3] = [TrafficClass::Idle, TrafficClass::Indication, TrafficClass::Notification];

    /// Measured REQUEST offsets per traffic type.
    pub fn reference_stats(self) -> OffsetStats {
        let [lower_whisker, lower_quartile, median, upper_quartile, upper_whisker] = match self {
            TrafficClass::Idle => [-190.0, -27.0, -12.0, 3.0, 30.0],
            TrafficClass::Indication => [-306.0, -183.0, -171.0, -151.0, 226.0],
            TrafficClass::Notification => [-286.0, -100.0, -85.0, -69.0, 302.0],
        };
        OffsetStats {
            median,
            lower_quartile,
            upper_quartile,
            lower_whisker,
            upper_whisker,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrafficClass::Idle => "idle",
            TrafficClass::Indication => "indication",
            TrafficClass::Notification => "notification",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for TrafficClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrafficClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown traffic class {s:?}"))
    }
}

/// Draws offsets whose quantile function is piecewise linear through the
/// five boxplot values, so the summary matches by construction.
/// `scale` stretches every knot away from the median.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetGenerator {
    knots: [f64; 5],
}

impl OffsetGenerator {
    pub fn new(stats: OffsetStats, scale: f64) -> Self {
        let m = stats.median;
        OffsetGenerator {
            knots: stats.knots().map(|k| m + scale * (k - m)),
        }
    }

    pub fn for_class(class: TrafficClass, scale: f64) -> Self {
        Self::new(class.reference_stats(), scale)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let x = u.clamp(0.0, 1.0) * 4.0;
        let i = (x.floor() as usize).min(3);
        let k = &self.knots;
        k[i] + (k[i + 1] - k[i]) * (x - i as f64)
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        self.quantile(rng.unit())
    }
}

/// Folds edges onto the slot grid: `(-312.5, 312.5]` µs around `anchor`.
pub fn compute_slot_offsets(edges: &[SimTime], anchor: SimTime) -> Vec<OffsetSample> {
    let slot = BT_SLOT.as_nanos() as i128;
    edges
        .iter()
        .map(|e| {
            let mut r = (e.as_nanos() as i128 - anchor.as_nanos() as i128).rem_euclid(slot);
            if 2 * r > slot {
                r -= slot;
            }
            OffsetSample {
                offset_us: r as f64 / 1000.0,
            }
        })
        .collect()
}

/// Slot anchor that minimizes the median absolute offset, searched on the
/// observer's sampling grid within one slot.
pub fn estimate_slot_anchor(edges: &[SimTime], grid: SimTime) -> SimTime {
    let step = grid.as_nanos().max(1);
    let mut best = (f64::INFINITY, SimTime::ZERO);
    for a in (0..BT_SLOT.as_nanos()).step_by(step as usize) {
        let anchor = SimTime::from_nanos(a);
        let abs: Vec<f64> = compute_slot_offsets(edges, anchor)
            .iter()
            .map(|s| s.offset_us.abs())
            .collect();
        if abs.is_empty() {
            break;
        }
        let m = median(&abs);
        if m < best.0 {
            best = (m, anchor);
        }
    }
    best.1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub class: TrafficClass,
    pub median_us: f64,
    /// Distance gap between the best and the runner-up reference median.
    pub confidence: f64,
}

/// Nearest reference median.
pub fn classify_traffic(samples: &[OffsetSample]) -> Result<Classification, AnalysisError> {
    if samples.len() < MIN_CLASSIFY_SAMPLES {
        return Err(AnalysisError::TooFewSamples(samples.len()));
    }
    let values: Vec<f64> = samples.iter().map(|s| s.offset_us).collect();
    let m = median(&values);
    let mut dist: Vec<(f64, TrafficClass)> = TrafficClass::ALL
        .iter()
        .map(|&c| ((m - c.reference_stats().median).abs(), c))
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(Classification {
        class: dist[0].1,
        median_us: m,
        confidence: dist[1].0 - dist[0].0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub at: SimTime,
    pub confidence: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KeystrokeTimeline {
    pub detections: Vec<Detection>,
}

impl KeystrokeTimeline {
    pub fn times(&self) -> Vec<SimTime> {
        self.detections.iter().map(|d| d.at).collect()
    }

    /// The poll sequence this timeline implies on `grid`: a keystroke code
    /// at each detection, empty reports elsewhere.
    pub fn to_polls(&self, grid: &[SimTime]) -> Vec<(SimTime, u8)> {
        grid.iter()
            .map(|&t| {
                let hit = self.detections.binary_search_by_key(&t, |d| d.at).is_ok();
                (t, if hit { KEYSTROKE_ACL } else { crate::seci::NULL_ACL })
            })
            .collect()
    }
}

/// One detection per maximal run of keystroke codes, timed at the first
/// poll of the run. Confidence is 1 for single-poll runs and drops as runs
/// get longer, since a long run may hide several presses.
pub fn reconstruct_keystrokes(polls: &[(SimTime, u8)]) -> KeystrokeTimeline {
    let mut detections = Vec::new();
    let mut run: Option<(SimTime, u32)> = None;
    let mut close = |run: &mut Option<(SimTime, u32)>| {
        if let Some((at, n)) = run.take() {
            detections.push(Detection {
                at,
                confidence: 1.0 / n as f64,
            });
        }
    };
    for &(t, byte) in polls {
        if byte == KEYSTROKE_ACL {
            match &mut run {
                Some((_, n)) => *n += 1,
                None => run = Some((t, 1)),
            }
        } else {
            close(&mut run);
        }
    }
    close(&mut run);
    KeystrokeTimeline { detections }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DosOutcome {
    Dos,
    Degraded,
    Unaffected,
}

/// Compares the mean frame rate inside `[window.0, window.1)` with the mean
/// before it.
pub fn detect_dos(series: &[(SimTime, f64)], window: (SimTime, SimTime)) -> DosOutcome {
    let mean = |it: Vec<f64>| (!it.is_empty()).then(|| it.iter().sum::<f64>() / it.len() as f64);
    let pre = mean(series.iter().filter(|(t, _)| *t < window.0).map(|&(_, r)| r).collect());
    let during = mean(
        series
            .iter()
            .filter(|(t, _)| *t >= window.0 && *t < window.1)
            .map(|&(_, r)| r)
            .collect(),
    );
    match (pre, during) {
        (Some(p), Some(d)) if p > 0.0 && d <= 0.0 => DosOutcome::Dos,
        (Some(p), Some(d)) if d > 0.0 && d < p => DosOutcome::Degraded,
        _ => DosOutcome::Unaffected,
    }
}

/// Bins event times into `(bin_start, events_per_second)` over `[from, to)`.
pub fn rate_series(events: &[SimTime], from: SimTime, to: SimTime, bin: SimTime) -> Vec<(SimTime, f64)> {
    let mut out = Vec::new();
    let mut t = from;
    let per_s = 1.0 / bin.as_secs_f64();
    while t < to {
        let end = (t + bin).min(to);
        let n = events.iter().filter(|&&e| e >= t && e < end).count();
        out.push((t, n as f64 * per_s));
        t = end;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::StreamId;

    fn us(v: u64) -> SimTime {
        SimTime::from_micros(v)
    }

    #[test]
    fn slot_offsets() {
        let a = us(1000);
        let off = compute_slot_offsets(&[a, a + us(655), a + us(500), a + SimTime::from_nanos(312_500)], a);
        let v: Vec<f64> = off.iter().map(|o| o.offset_us).collect();
        assert_eq!(v, vec![0.0, 30.0, -125.0, 312.5]);
        // edges before the anchor fold the same way
        assert_eq!(compute_slot_offsets(&[us(990)], a)[0].offset_us, -10.0);
    }

    #[test]
    fn classify_by_median() {
        let mk = |m: f64| vec![OffsetSample { offset_us: m }; 25];
        assert_eq!(classify_traffic(&mk(-170.0)).unwrap().class, TrafficClass::Indication);
        assert_eq!(classify_traffic(&mk(-12.0)).unwrap().class, TrafficClass::Idle);
        assert_eq!(classify_traffic(&mk(-85.0)).unwrap().class, TrafficClass::Notification);
        assert_eq!(classify_traffic(&mk(0.0)[..19]), Err(AnalysisError::TooFewSamples(19)));
    }

    #[test]
    fn generator_hits_knots() {
        for c in TrafficClass::ALL {
            let g = OffsetGenerator::for_class(c, 1.0);
            let s = c.reference_stats();
            assert_eq!(g.quantile(0.0), s.lower_whisker);
            assert_eq!(g.quantile(0.25), s.lower_quartile);
            assert_eq!(g.quantile(0.5), s.median);
            assert_eq!(g.quantile(0.75), s.upper_quartile);
            assert_eq!(g.quantile(1.0), s.upper_whisker);
            assert!(s.is_ordered());
        }
    }

    #[test]
    fn anchor_recovery() {
        let mut rng = RngStream::new(3, StreamId::Traffic);
        let g = OffsetGenerator::for_class(TrafficClass::Idle, 1.0);
        let anchor = us(130);
        let edges: Vec<SimTime> = (0..400u64)
            .map(|i| (anchor + BT_SLOT * (10 + i)).offset((g.sample(&mut rng) * 1000.0) as i64))
            .collect();
        let est = estimate_slot_anchor(&edges, us(10));
        let err = compute_slot_offsets(&[est], anchor)[0].offset_us.abs();
        assert!(err <= 30.0, "{est} off by {err}");
    }

    #[test]
    fn keystroke_runs() {
        let t = |i: u64| SimTime::from_millis(30 * i);
        let tl = reconstruct_keystrokes(&[(t(1), 0x05), (t(2), 0x05), (t(3), 0x85), (t(4), 0x05)]);
        assert_eq!(tl.times(), vec![t(3)]);
        assert!(reconstruct_keystrokes(&[(t(1), 0x05), (t(2), 0x05)])
            .detections
            .is_empty());
        let held = reconstruct_keystrokes(&[(t(1), 0x85), (t(2), 0x85), (t(3), 0x05)]);
        assert_eq!(held.times(), vec![t(1)]);
        assert_eq!(held.detections[0].confidence, 0.5);
    }

    #[test]
    fn dos_classes() {
        let s = |pre: f64, during: f64| -> Vec<(SimTime, f64)> {
            (0..20)
                .map(|i| (SimTime::from_secs(i), if i < 10 { pre } else { during }))
                .collect()
        };
        let w = (SimTime::from_secs(10), SimTime::from_secs(20));
        assert_eq!(detect_dos(&s(100.0, 0.0), w), DosOutcome::Dos);
        assert_eq!(detect_dos(&s(100.0, 40.0), w), DosOutcome::Degraded);
        assert_eq!(detect_dos(&s(100.0, 100.0), w), DosOutcome::Unaffected);
        assert_eq!(detect_dos(&s(0.0, 0.0), w), DosOutcome::Unaffected);
    }

    #[test]
    fn rates() {
        let ev: Vec<SimTime> = (0..10).map(|i| SimTime::from_millis(i * 10)).collect();
        let r = rate_series(&ev, SimTime::ZERO, SimTime::from_millis(200), SimTime::from_millis(100));
        assert_eq!(r, vec![(SimTime::ZERO, 100.0), (SimTime::from_millis(100), 0.0)]);
    }
}
