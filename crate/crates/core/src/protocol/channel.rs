//! One-directional qubit channel.

use std::collections::VecDeque;

use crate::qubit::{Bit, BlochVector};

/// A qubit in flight: the pure coding state `(bit, axis)` plus the latency
/// marker an intercept-resend attacker leaves behind.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Carrier {
    pub bit: Bit,
    pub axis: BlochVector<f64>,
    pub latency_flag: bool,
}

impl Carrier {
    pub fn new(bit: Bit, axis: BlochVector<f64>) -> Self {
        Self {
            bit,
            axis,
            latency_flag: false,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct QubitChannel {
    queue: VecDeque<Carrier>,
}

impl QubitChannel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, c: Carrier) {
        self.queue.push_back(c);
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Removes the next `n` qubits, or returns `None` (leaving the channel
    /// untouched) if fewer are queued.
    pub fn take(&mut self, n: usize) -> Option<Vec<Carrier>> {
        if self.queue.len() < n {
            return None;
        }
        Some(self.queue.drain(..n).collect())
    }

    /// Mutable view of the next `n` queued qubits, for an interceptor.
    pub fn front_mut(&mut self, n: usize) -> impl Iterator<Item = &mut Carrier> {
        self.queue.iter_mut().take(n)
    }
}
