use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use super::SimTime;
use crate::error::Error;

/// Identifies a scheduled event; doubles as its FIFO tie-break sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn sequence(self) -> u64 {
        self.0
    }
}

struct Entry<E> {
    time: SimTime,
    seq: u64,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // BinaryHeap is a max-heap; invert so the earliest (time, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// An event popped from the queue.
#[derive(Debug)]
pub struct Dispatched<E> {
    pub fire_time: SimTime,
    pub handle: EventHandle,
    pub payload: E,
}

/// Priority queue of timestamped events with a monotone virtual clock.
///
/// Events fire in nondecreasing time order; equal timestamps fire in
/// insertion order. Cancelled events are dropped lazily when they reach the
/// head of the heap.
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Entry<E>>,
    live: HashSet<u64>,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            live: HashSet::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn schedule(&mut self, at: SimTime, payload: E) -> Result<EventHandle, Error> {
        if at < self.now {
            return Err(Error::ScheduledInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry {
            time: at,
            seq,
            payload,
        });
        self.live.insert(seq);
        Ok(EventHandle(seq))
    }

    pub fn schedule_after(&mut self, delay: SimTime, payload: E) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, payload)
            .expect("relative schedule is never in the past")
    }

    /// Returns true if the event was pending. Cancelling twice is a no-op.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.live.remove(&handle.0)
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.live.contains(&handle.0)
    }

    pub fn pending(&self) -> usize {
        self.live.len()
    }

    /// Pops the next live event with `fire_time <= end`, advancing the clock.
    pub fn pop_until(&mut self, end: SimTime) -> Option<Dispatched<E>> {
        loop {
            let head = self.heap.peek()?;
            if head.time > end {
                return None;
            }
            let entry = self.heap.pop().expect("peeked");
            if !self.live.remove(&entry.seq) {
                continue;
            }
            debug_assert!(entry.time >= self.now, "clock went backwards");
            self.now = entry.time;
            return Some(Dispatched {
                fire_time: entry.time,
                handle: EventHandle(entry.seq),
                payload: entry.payload,
            });
        }
    }

    /// Moves the clock forward without dispatching anything.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }
}
