use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use thiserror::Error;

use super::SimTime;

/// Names the module endpoint an event is addressed to, e.g. `"pta.sample"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Target(pub &'static str);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event<P> {
    pub fire_at: SimTime,
    pub target: Target,
    pub payload: P,
    pub seq: u64,
}

/// Returned by [`Engine::schedule`]; cancels the event if it has not fired yet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("cannot schedule at {fire_at}: clock is already at {now}")]
    PastTime { fire_at: SimTime, now: SimTime },
    #[error("cannot run until {t_end}: clock is already at {now}")]
    RunBackwards { t_end: SimTime, now: SimTime },
}

struct Queued<P>(Event<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.seq == other.0.seq
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    // BinaryHeap is a max-heap: invert so the earliest (fire_at, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.fire_at, other.0.seq).cmp(&(self.0.fire_at, self.0.seq))
    }
}

/// Single-threaded discrete-event engine.
///
/// Events fire in `(fire_at, seq)` order, where `seq` is assigned at
/// scheduling time, so simultaneous events are delivered in insertion order.
/// The clock never moves backwards.
pub struct Engine<P> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Queued<P>>,
    cancelled: HashSet<u64>,
}

impl<P> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Engine<P> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len() - self.cancelled.len()
    }

    pub fn schedule(&mut self, fire_at: SimTime, target: Target, payload: P) -> Result<EventHandle, EngineError> {
        if fire_at < self.now {
            return Err(EngineError::PastTime { fire_at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Queued(Event {
            fire_at,
            target,
            payload,
            seq,
        }));
        Ok(EventHandle(seq))
    }

    /// Schedules `delay` after the current clock. Never fails.
    pub fn schedule_in(&mut self, delay: SimTime, target: Target, payload: P) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, target, payload)
            .expect("relative schedule is never in the past")
    }

    /// Returns false if the event already fired or was cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if handle.0 >= self.next_seq {
            return false;
        }
        let live = self.queue.iter().any(|q| q.0.seq == handle.0);
        live && self.cancelled.insert(handle.0)
    }

    /// Pops the next live event with `fire_at <= t_end`, advancing the clock to it.
    pub fn next_event(&mut self, t_end: SimTime) -> Option<Event<P>> {
        loop {
            let head = self.queue.peek()?;
            if head.0.fire_at > t_end {
                return None;
            }
            let Queued(ev) = self.queue.pop().expect("peeked");
            if self.cancelled.remove(&ev.seq) {
                continue;
            }
            debug_assert!(ev.fire_at >= self.now);
            self.now = ev.fire_at;
            return Some(ev);
        }
    }

    /// Delivers every event with `fire_at <= t_end` to `handler`, then leaves
    /// the clock at `t_end`. Handlers may schedule further events.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> Result<SimTime, EngineError>
    where
        F: FnMut(&mut Self, Event<P>),
    {
        if t_end < self.now {
            return Err(EngineError::RunBackwards { t_end, now: self.now });
        }
        while let Some(ev) = self.next_event(t_end) {
            handler(self, ev);
        }
        self.now = t_end;
        Ok(self.now)
    }
}
