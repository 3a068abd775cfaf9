//! Deterministic discrete-event core: the clock, the event queue, seeded
//! randomness streams and the signal trace every other module writes to.

mod engine;
mod rng;
mod time;
mod trace;

pub use engine::{Engine, EngineError, Event, EventHandle, Target};
pub use rng::{sample_jitter, RngStream, StreamId};
pub use time::SimTime;
pub use trace::{TraceParseError, TraceRecord, TraceRecorder, TraceValue, CSV_HEADER};

/// One Bluetooth baseband slot.
pub const BT_SLOT: SimTime = SimTime::from_micros(625);
