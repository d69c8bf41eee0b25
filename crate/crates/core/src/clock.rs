//! Deterministic virtual-time event queue.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};

/// Virtual time in integer milliseconds.
pub type Millis = u64;

/// Handle returned by [`VirtualClock::schedule_at`]; equals the event's sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventId(pub u64);

struct Entry<E> {
    time: Millis,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}
impl<E> Eq for Entry<E> {}
impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

/// Single-owner discrete-event clock.
///
/// Events fire in `(time, sequence)` order; equal-time events fire in the
/// order they were scheduled. Time never moves backwards.
pub struct VirtualClock<E> {
    now: Millis,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Entry<E>>>,
    canceled: HashSet<u64>,
}

impl<E> Default for VirtualClock<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> VirtualClock<E> {
    pub fn new() -> Self {
        Self { now: 0, next_seq: 0, queue: BinaryHeap::new(), canceled: HashSet::new() }
    }

    pub fn now(&self) -> Millis {
        self.now
    }

    /// Schedules `event` at absolute time `at`. Times in the past are clamped to now.
    pub fn schedule_at(&mut self, at: Millis, event: E) -> EventId {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Entry { time: at.max(self.now), seq, event }));
        EventId(seq)
    }

    pub fn schedule_after(&mut self, delay: Millis, event: E) -> EventId {
        self.schedule_at(self.now + delay, event)
    }

    /// Drops a pending event. Returns false if it already fired or was unknown.
    pub fn cancel(&mut self, id: EventId) -> bool {
        if id.0 >= self.next_seq {
            return false;
        }
        let pending = self.queue.iter().any(|Reverse(e)| e.seq == id.0);
        pending && self.canceled.insert(id.0)
    }

    pub fn is_empty(&self) -> bool {
        self.queue.iter().all(|Reverse(e)| self.canceled.contains(&e.seq))
    }

    pub fn peek_time(&mut self) -> Option<Millis> {
        self.skip_canceled();
        self.queue.peek().map(|Reverse(e)| e.time)
    }

    fn skip_canceled(&mut self) {
        while let Some(Reverse(top)) = self.queue.peek() {
            if self.canceled.remove(&top.seq) {
                self.queue.pop();
            } else {
                break;
            }
        }
    }

    /// Fires the next event, advancing `now` to its time.
    pub fn pop(&mut self) -> Option<(Millis, EventId, E)> {
        self.skip_canceled();
        let Reverse(entry) = self.queue.pop()?;
        debug_assert!(entry.time >= self.now);
        self.now = entry.time;
        Some((entry.time, EventId(entry.seq), entry.event))
    }

    /// Fires every event scheduled at the next pending time, in sequence order.
    pub fn pop_batch(&mut self) -> Option<(Millis, Vec<(EventId, E)>)> {
        let (time, id, event) = self.pop()?;
        let mut batch = vec![(id, event)];
        while self.peek_time() == Some(time) {
            let (_, id, event) = self.pop().expect("peeked");
            batch.push((id, event));
        }
        Some((time, batch))
    }
}
