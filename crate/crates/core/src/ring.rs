//! Single-producer single-consumer ring of length-prefixed frame slots.
//!
//! This is the only path between the untrusted ingress partition and the
//! trusted one. Storage is one preallocated block of
//! `capacity * (slot_size + 2)` bytes; each slot holds a little-endian `u16`
//! length followed by up to `slot_size` bytes. A full ring refuses the push
//! instead of overwriting.

use std::cell::UnsafeCell;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use thiserror::Error;

pub const DEFAULT_SLOT_SIZE: usize = 300;
pub const DEFAULT_CAPACITY: usize = 1024;
const LEN_PREFIX: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum RingError {
    #[error("capacity {0} is not a power of two >= 2")]
    BadCapacity(usize),
    #[error("slot size {0} must be in 1..=65535")]
    BadSlotSize(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum PushError {
    #[error("ring full")]
    Full,
    #[error("frame of {len} bytes exceeds slot size {slot_size}")]
    FrameTooLarge { len: usize, slot_size: usize },
}

#[repr(align(64))]
struct CachePadded<T>(T);

struct Shared {
    head: CachePadded<AtomicUsize>,
    tail: CachePadded<AtomicUsize>,
    capacity: usize,
    slot_size: usize,
    storage: Box<[UnsafeCell<u8>]>,
    producer_alive: AtomicBool,
    consumer_alive: AtomicBool,
}

// Slots are only touched by the side that currently owns them, with
// ownership handed over through the release/acquire pair on head and tail.
unsafe impl Sync for Shared {}
unsafe impl Send for Shared {}

impl Shared {
    fn slot_ptr(&self, index: usize) -> *mut u8 {
        let stride = self.slot_size + LEN_PREFIX;
        let start = (index & (self.capacity - 1)) * stride;
        self.storage[start].get()
    }
}

/// Sending half, owned by the untrusted partition.
pub struct Producer {
    shared: Arc<Shared>,
    tail: usize,
    cached_head: usize,
}

/// Receiving half, owned by the trusted partition.
pub struct Consumer {
    shared: Arc<Shared>,
    head: usize,
    cached_tail: usize,
}

/// Creates a ring with `capacity` slots of `slot_size` bytes.
pub fn channel(capacity: usize, slot_size: usize) -> Result<(Producer, Consumer), RingError> {
    if capacity < 2 || !capacity.is_power_of_two() {
        return Err(RingError::BadCapacity(capacity));
    }
    if slot_size == 0 || slot_size > usize::from(u16::MAX) {
        return Err(RingError::BadSlotSize(slot_size));
    }
    let bytes = capacity * (slot_size + LEN_PREFIX);
    let storage = (0..bytes).map(|_| UnsafeCell::new(0u8)).collect();
    let shared = Arc::new(Shared {
        head: CachePadded(AtomicUsize::new(0)),
        tail: CachePadded(AtomicUsize::new(0)),
        capacity,
        slot_size,
        storage,
        producer_alive: AtomicBool::new(true),
        consumer_alive: AtomicBool::new(true),
    });
    Ok((Producer { shared: shared.clone(), tail: 0, cached_head: 0 }, Consumer { shared, head: 0, cached_tail: 0 }))
}

impl Producer {
    pub fn capacity(&self) -> usize {
        self.shared.capacity
    }

    pub fn slot_size(&self) -> usize {
        self.shared.slot_size
    }

    /// Copies `frame` into the next free slot.
    pub fn push(&mut self, frame: &[u8]) -> Result<(), PushError> {
        let sh = &*self.shared;
        if frame.len() > sh.slot_size {
            return Err(PushError::FrameTooLarge { len: frame.len(), slot_size: sh.slot_size });
        }
        if self.tail.wrapping_sub(self.cached_head) == sh.capacity {
            self.cached_head = sh.head.0.load(Ordering::Acquire);
            if self.tail.wrapping_sub(self.cached_head) == sh.capacity {
                return Err(PushError::Full);
            }
        }
        let p = sh.slot_ptr(self.tail);
        let len = (frame.len() as u16).to_le_bytes();
        // SAFETY: the slot at `tail` is outside [head, tail) so the consumer
        // does not read it until the release store below.
        unsafe {
            std::ptr::copy_nonoverlapping(len.as_ptr(), p, LEN_PREFIX);
            std::ptr::copy_nonoverlapping(frame.as_ptr(), p.add(LEN_PREFIX), frame.len());
        }
        self.tail = self.tail.wrapping_add(1);
        sh.tail.0.store(self.tail, Ordering::Release);
        Ok(())
    }

    /// Frames currently queued.
    pub fn len(&self) -> usize {
        self.tail.wrapping_sub(self.shared.head.0.load(Ordering::Acquire))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn consumer_alive(&self) -> bool {
        self.shared.consumer_alive.load(Ordering::Acquire)
    }
}

impl Drop for Producer {
    fn drop(&mut self) {
        self.shared.producer_alive.store(false, Ordering::Release);
    }
}

impl Consumer {
    pub fn capacity(&self) -> usize {
        self.shared.capacity
    }

    fn available(&mut self) -> bool {
        if self.head == self.cached_tail {
            self.cached_tail = self.shared.tail.0.load(Ordering::Acquire);
        }
        self.head != self.cached_tail
    }

    /// Passes the oldest frame to `f` without copying it out of the ring.
    pub fn pop_with<R>(&mut self, f: impl FnOnce(&[u8]) -> R) -> Option<R> {
        if !self.available() {
            return None;
        }
        let sh = &*self.shared;
        let p = sh.slot_ptr(self.head);
        // SAFETY: the slot at `head` is inside [head, tail), published by the
        // producer's release store and not reused until we advance head.
        let r = unsafe {
            let len = u16::from_le_bytes([*p, *p.add(1)]) as usize;
            f(std::slice::from_raw_parts(p.add(LEN_PREFIX), len))
        };
        self.head = self.head.wrapping_add(1);
        sh.head.0.store(self.head, Ordering::Release);
        Some(r)
    }

    pub fn pop(&mut self) -> Option<Vec<u8>> {
        self.pop_with(<[u8]>::to_vec)
    }

    pub fn len(&self) -> usize {
        self.shared.tail.0.load(Ordering::Acquire).wrapping_sub(self.head)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// False once the producer is dropped. Frames already queued can still
    /// be popped.
    pub fn producer_alive(&self) -> bool {
        self.shared.producer_alive.load(Ordering::Acquire)
    }
}

impl Drop for Consumer {
    fn drop(&mut self) {
        self.shared.consumer_alive.store(false, Ordering::Release);
    }
}

/// Spin-then-sleep wait used by the partition loops.
#[derive(Clone, Debug)]
pub struct Backoff {
    spins: u32,
    max_spins: u32,
    sleep: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff::new(1000, Duration::from_micros(50))
    }
}

impl Backoff {
    pub fn new(max_spins: u32, sleep: Duration) -> Self {
        Backoff { spins: 0, max_spins, sleep }
    }

    pub fn reset(&mut self) {
        self.spins = 0;
    }

    pub fn wait(&mut self) {
        if self.spins < self.max_spins {
            self.spins += 1;
            if self.spins.is_multiple_of(64) {
                thread::yield_now();
            } else {
                std::hint::spin_loop();
            }
        } else {
            thread::sleep(self.sleep);
        }
    }
}
