use serde::{Deserialize, Serialize};

use super::PtaLineState;
use crate::sim::{SimTime, TraceRecorder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Line {
    Request,
    Priority,
    Grant,
}

impl Line {
    pub fn channel(self) -> &'static str {
        match self {
            Line::Request => "pta.request",
            Line::Priority => "pta.priority",
            Line::Grant => "pta.grant",
        }
    }
}

/// Which chip is looking at the wires. A chip sees its own outputs exactly
/// and the peer's outputs only through the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observer {
    Bluetooth,
    Wifi,
}

/// Edge history of a single wire. Starts low.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LineHistory {
    edges: Vec<(SimTime, bool)>,
}

impl LineHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a level change; no-op if the level is unchanged. Panics if
    /// `t` precedes the latest edge.
    pub fn set(&mut self, t: SimTime, level: bool) -> bool {
        if let Some(&(last_t, last_level)) = self.edges.last() {
            assert!(t >= last_t, "line edge at {t} precedes {last_t}");
            if last_level == level {
                return false;
            }
            if last_t == t {
                // two writes in the same instant: the later one wins
                self.edges.pop();
                if self.level_at(t) == level {
                    return true;
                }
            }
        } else if !level {
            return false;
        }
        self.edges.push((t, level));
        true
    }

    /// Level right after all edges at or before `t`.
    pub fn level_at(&self, t: SimTime) -> bool {
        let idx = self.edges.partition_point(|&(et, _)| et <= t);
        idx > 0 && self.edges[idx - 1].1
    }

    pub fn edges(&self) -> &[(SimTime, bool)] {
        &self.edges
    }

    /// Level seen by a sampler with the given grid: the value at the most
    /// recent sample instant `<= t`.
    pub fn sampled_at(&self, t: SimTime, epoch: SimTime, period: SimTime) -> bool {
        if t < epoch {
            return false;
        }
        self.level_at(t.floor_to(epoch, period))
    }

    /// The level changes a sampler would report, as `(sample_instant, level)`.
    /// Equivalent to calling [`sampled_at`](Self::sampled_at) at every grid
    /// point and keeping the changes, without walking the whole grid.
    pub fn sampled_edges(&self, epoch: SimTime, period: SimTime) -> Vec<(SimTime, bool)> {
        let mut out = Vec::new();
        let mut observed = false;
        let mut last_g = None;
        for &(t, _) in &self.edges {
            let g = t.ceil_to(epoch, period);
            if last_g == Some(g) {
                continue;
            }
            last_g = Some(g);
            let level = self.level_at(g);
            if level != observed {
                out.push((g, level));
                observed = level;
            }
        }
        out
    }

    /// Shifts every edge by an offset (used to model jitter on a whole trace).
    pub fn map_edges(&self, mut f: impl FnMut(SimTime) -> SimTime) -> LineHistory {
        let mut out = LineHistory::new();
        for &(t, level) in &self.edges {
            let t = f(t);
            let t = out.edges.last().map_or(t, |&(prev, _)| t.max(prev));
            out.set(t, level);
        }
        out
    }
}

/// The three PTA wires plus the sampler that on-chip observers are limited to.
#[derive(Debug, Clone)]
pub struct PtaLines {
    pub request: LineHistory,
    pub priority: LineHistory,
    pub grant: LineHistory,
    sample_epoch: SimTime,
    sample_period: SimTime,
}

impl PtaLines {
    pub fn new(sample_period: SimTime) -> Self {
        Self::with_epoch(SimTime::ZERO, sample_period)
    }

    pub fn with_epoch(sample_epoch: SimTime, sample_period: SimTime) -> Self {
        assert!(sample_period > SimTime::ZERO);
        PtaLines {
            request: LineHistory::new(),
            priority: LineHistory::new(),
            grant: LineHistory::new(),
            sample_epoch,
            sample_period,
        }
    }

    pub fn sample_period(&self) -> SimTime {
        self.sample_period
    }

    pub fn sample_epoch(&self) -> SimTime {
        self.sample_epoch
    }

    pub fn line(&self, line: Line) -> &LineHistory {
        match line {
            Line::Request => &self.request,
            Line::Priority => &self.priority,
            Line::Grant => &self.grant,
        }
    }

    /// Drives a wire and traces the change if the level actually moved.
    pub fn drive(&mut self, line: Line, t: SimTime, level: bool, trace: &mut TraceRecorder) {
        let hist = match line {
            Line::Request => &mut self.request,
            Line::Priority => &mut self.priority,
            Line::Grant => &mut self.grant,
        };
        let before = hist.level_at(t);
        hist.set(t, level);
        if before != level {
            trace.record(t, line.channel(), level);
        }
    }

    /// Exact levels at `t`, as a logic analyzer would see them.
    pub fn actual(&self, t: SimTime) -> PtaLineState {
        PtaLineState {
            request: self.request.level_at(t),
            priority: self.priority.level_at(t),
            grant: self.grant.level_at(t),
        }
    }

    /// What an on-chip observer can read at `t`: the peer's wires are
    /// quantized to the last sample boundary, so sub-sample pulses vanish.
    pub fn observe_lines(&self, at: SimTime, role: Observer) -> PtaLineState {
        let q = |h: &LineHistory| h.sampled_at(at, self.sample_epoch, self.sample_period);
        match role {
            Observer::Wifi => PtaLineState {
                request: q(&self.request),
                priority: q(&self.priority),
                grant: self.grant.level_at(at),
            },
            Observer::Bluetooth => PtaLineState {
                request: self.request.level_at(at),
                priority: self.priority.level_at(at),
                grant: q(&self.grant),
            },
        }
    }

    /// Sampled edges of `line` as the non-driving chip sees them.
    pub fn observed_edges(&self, line: Line) -> Vec<(SimTime, bool)> {
        self.line(line).sampled_edges(self.sample_epoch, self.sample_period)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn us(v: u64) -> SimTime {
        SimTime::from_micros(v)
    }

    #[test]
    fn quantization_rule() {
        let mut l = PtaLines::new(us(10));
        let mut tr = TraceRecorder::new();
        l.drive(Line::Request, us(10_004), true, &mut tr);
        assert!(l.observe_lines(us(10_010), Observer::Wifi).request);
        assert!(!l.observe_lines(us(10_000), Observer::Wifi).request);
        assert!(!l.observe_lines(us(10_009), Observer::Wifi).request);
        // the Bluetooth side drives request, so it sees it immediately
        assert!(l.observe_lines(us(10_005), Observer::Bluetooth).request);
    }

    #[test]
    fn short_glitch_is_invisible() {
        let mut l = PtaLines::new(us(10));
        let mut tr = TraceRecorder::new();
        l.drive(Line::Grant, us(0), true, &mut tr);
        l.drive(Line::Grant, us(10_002), false, &mut tr);
        l.drive(Line::Grant, us(10_005), true, &mut tr);
        for t in (9_990..10_030).map(us) {
            assert!(l.observe_lines(t, Observer::Bluetooth).grant, "at {t}");
        }
        assert_eq!(l.observed_edges(Line::Grant), vec![(us(0), true)]);
        assert_eq!(tr.channel("pta.grant").count(), 3);
    }

    #[test]
    fn sampled_edges_match_grid_walk() {
        let mut h = LineHistory::new();
        for (t, lv) in [(3, true), (7, false), (12, true), (31, false), (33, true), (40, false)] {
            h.set(us(t), lv);
        }
        let period = us(10);
        let mut walk = Vec::new();
        let mut prev = false;
        for g in (0..=60).step_by(10).map(us) {
            let lv = h.sampled_at(g, SimTime::ZERO, period);
            if lv != prev {
                walk.push((g, lv));
                prev = lv;
            }
        }
        assert_eq!(h.sampled_edges(SimTime::ZERO, period), walk);
    }

    #[test]
    fn same_instant_rewrite_keeps_last() {
        let mut h = LineHistory::new();
        h.set(us(5), true);
        h.set(us(5), false);
        assert!(!h.level_at(us(5)));
        assert!(h.edges().is_empty());
        h.set(us(6), true);
        h.set(us(6), true);
        assert_eq!(h.edges(), &[(us(6), true)]);
    }
}
