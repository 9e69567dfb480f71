//! Deterministic discrete-event core: virtual clock, event queue with
//! cancellation, and seeded per-node random streams.

mod queue;
mod rng;
mod time;

pub use queue::{Dispatched, EventHandle, Scheduler};
pub use rng::{Purpose, RngStream};
pub use time::SimTime;
