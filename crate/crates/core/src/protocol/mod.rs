//! Sender and receiver state machines.
//!
//! Alice sends balanced packages on the current coding basis; Bob measures
//! them with a detector on the same basis, decodes, and echoes the value back
//! over a reverse qubit channel. A mismatching echo makes Alice send the
//! error-signal package followed by the pending package again. Every
//! `basis_change_period` confirmed data packages Alice sends the basis-change
//! acknowledgement word; once it is echoed correctly both sides take one step
//! of the basis walk with a turn bit drawn from a stream keyed by the shared
//! secret and the observed error intervals.

pub mod channel;
mod session;
pub mod transcript;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::AdversaryError;
use crate::codec::{CodecError, Decoded, Package, PackageRole, PackageScheme, BASIS_CHANGE_ACK, ERROR_SIGNAL};
use crate::qubit::{measure, Bit, BlochVector, Detector, QubitError};
use crate::rng::{fnv1a, RngStream};
use crate::walk::{walk_step, WalkError, WalkState};

pub use channel::{Carrier, QubitChannel};
pub use session::{run_session, AbortInfo, AbortReason, SessionOutcome};
pub use transcript::{EventKind, ProtocolEvent, Role, Transcript};

type Bloch = BlochVector<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("invalid session config `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("channel holds fewer qubits than one package")]
    ChannelEmpty,
    #[error("protocol step out of order: {0}")]
    ProtocolOrder(&'static str),
    #[error(transparent)]
    Qubit(#[from] QubitError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub package_length: usize,
    pub initial_basis: WalkState<f64>,
    pub shared_secret_seed: u64,
    /// Confirmed data packages between basis changes; 0 disables changes.
    pub basis_change_period: u64,
    pub error_rate_threshold: f64,
    /// Number of most recent feedback evaluations the monitor looks at.
    pub monitoring_window: usize,
    /// Attach the eavesdropper to the feedback channel as well.
    pub eve_on_feedback: bool,
    /// Transmissions of one package before the session gives up.
    pub max_attempts: u32,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            package_length: 6,
            initial_basis: WalkState::canonical(),
            shared_secret_seed: 0,
            basis_change_period: 16,
            error_rate_threshold: 0.05,
            monitoring_window: 50,
            eve_on_feedback: false,
            max_attempts: 64,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if !matches!(self.package_length, 4 | 6) {
            return Err(ProtocolError::Config {
                field: "package_length",
                reason: format!("{} is not 4 or 6 (length 2 has no error-signal word)", self.package_length),
            });
        }
        // 1.0 is accepted as the degenerate never-abort setting
        if !(self.error_rate_threshold > 0.0 && self.error_rate_threshold <= 1.0) {
            return Err(ProtocolError::Config {
                field: "error_rate_threshold",
                reason: format!("{} outside (0, 1]", self.error_rate_threshold),
            });
        }
        if self.monitoring_window < 10 {
            return Err(ProtocolError::Config {
                field: "monitoring_window",
                reason: format!("{} is below 10", self.monitoring_window),
            });
        }
        if self.max_attempts == 0 {
            return Err(ProtocolError::Config {
                field: "max_attempts",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// Basis changes between re-keyings of the turn-bit stream: enough
    /// changes to span one monitoring window.
    fn refresh_every(&self) -> u64 {
        if self.basis_change_period == 0 {
            return u64::MAX;
        }
        (self.monitoring_window as u64).div_ceil(self.basis_change_period).max(1)
    }
}

/// Sliding record of feedback outcomes (`true` = error).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    recent: VecDeque<bool>,
    window: usize,
    recent_errors: usize,
    pub packages: u64,
    pub errors: u64,
}

impl ErrorStats {
    pub fn new(window: usize) -> Self {
        Self {
            window,
            ..Self::default()
        }
    }

    pub fn record(&mut self, error: bool) {
        self.packages += 1;
        self.errors += error as u64;
        self.recent.push_back(error);
        self.recent_errors += error as usize;
        if self.recent.len() > self.window {
            if self.recent.pop_front() == Some(true) {
                self.recent_errors -= 1;
            }
        }
    }

    /// Error rate over the last full window, if one is available.
    pub fn windowed_rate(&self) -> Option<f64> {
        (self.recent.len() >= self.window && self.window > 0).then(|| self.recent_errors as f64 / self.window as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Monitor {
    Continue,
    Abort { error_rate: f64 },
}

/// Keyed turn-bit stream shared by both endpoints.
#[derive(Clone, Debug)]
struct TurnBits {
    secret: u64,
    epoch: u64,
    stream: RngStream,
}

impl TurnBits {
    fn new(secret: u64) -> Self {
        Self {
            secret,
            epoch: 0,
            stream: RngStream::new(secret, "turn-bits/0"),
        }
    }

    fn refresh(&mut self, intervals: &[u64]) {
        let bytes: Vec<u8> = intervals.iter().flat_map(|i| i.to_le_bytes()).collect();
        self.epoch += 1;
        self.stream = RngStream::new(self.secret ^ fnv1a(&bytes), format!("turn-bits/{}", self.epoch));
    }

    fn next(&mut self) -> Bit {
        Bit::from_bool(self.stream.bit())
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tentative {
    Data(Vec<Bit>),
    Control,
}

/// What Bob made of one received package.
#[derive(Clone, Debug, PartialEq)]
pub struct BobReceipt {
    pub decoded: Decoded,
    /// Package Bob sends back: an echo, the error signal, or nothing.
    pub reply: Option<Package>,
    /// The package was the basis-change acknowledgement at a change boundary;
    /// Bob steps the walk after replying.
    pub basis_change_due: bool,
    pub latency_flags: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Feedback {
    Matched(PackageRole),
    Mismatch,
}

#[derive(Clone, Debug)]
pub struct EndpointState {
    pub role: Role,
    pub current_basis: Bloch,
    pub walk: WalkState<f64>,
    pub packages_since_last_error: u64,
    pub collected_error_intervals: Vec<u64>,
    pub pending_package: Option<Package>,
    pub stats: ErrorStats,
    pub basis_changes: u64,
    /// Alice: confirmed payloads. Bob: committed payloads.
    pub delivered: Vec<Vec<Bit>>,
    pending_payload: Option<Vec<Bit>>,
    attempts: u32,
    awaiting: VecDeque<bool>,
    turn_bits: TurnBits,
    intervals_used: usize,
    changed_at: usize,
    tentative: Option<Tentative>,
}

impl EndpointState {
    pub fn new(role: Role, cfg: &SessionConfig) -> Self {
        Self {
            role,
            current_basis: cfg.initial_basis.current(),
            walk: cfg.initial_basis,
            packages_since_last_error: 0,
            collected_error_intervals: Vec::new(),
            pending_package: None,
            stats: ErrorStats::new(cfg.monitoring_window),
            basis_changes: 0,
            delivered: Vec::new(),
            pending_payload: None,
            attempts: 0,
            awaiting: VecDeque::new(),
            turn_bits: TurnBits::new(cfg.shared_secret_seed),
            intervals_used: 0,
            changed_at: 0,
            tentative: None,
        }
    }

    /// Number of transmissions of the pending package so far.
    pub fn attempts(&self) -> u32 {
        self.attempts
    }

    /// Whether the next package from Alice is expected to be echoed; `None`
    /// when nothing is in flight.
    pub fn pop_awaiting(&mut self) -> Option<bool> {
        self.awaiting.pop_front()
    }

    fn transmit(&mut self, pkg: &Package, channel: &mut QubitChannel, log: &mut Transcript) {
        for bit in &pkg.bits {
            channel.push(Carrier::new(*bit, self.current_basis));
            log.push(EventKind::QubitSent {
                from: self.role,
                bit: *bit,
                axis: self.current_basis.to_array(),
            });
        }
        if self.role == Role::Alice {
            self.awaiting.push_back(pkg.role != PackageRole::ErrorSignal);
        }
    }

    /// Measures one package worth of qubits on the current basis.
    fn receive_bits(
        &self,
        len: usize,
        channel: &mut QubitChannel,
        rng: &mut RngStream,
        log: &mut Transcript,
    ) -> Result<(Vec<Bit>, u64), ProtocolError> {
        let carriers = channel.take(len).ok_or(ProtocolError::ChannelEmpty)?;
        let detector = Detector::new(self.current_basis)?;
        let mut bits = Vec::with_capacity(len);
        let mut flags = 0;
        for c in carriers {
            let (outcome, _) = measure(&detector, c.bit, &c.axis, rng)?;
            flags += c.latency_flag as u64;
            log.push(EventKind::QubitMeasured {
                by: self.role,
                outcome,
                axis: self.current_basis.to_array(),
                latency_flag: c.latency_flag,
            });
            bits.push(outcome);
        }
        Ok((bits, flags))
    }

    fn record_error(&mut self) -> u64 {
        let interval = self.packages_since_last_error;
        self.collected_error_intervals.push(interval);
        self.packages_since_last_error = 0;
        self.stats.record(true);
        interval
    }

    /// Encodes `payload`, puts its qubits on the channel and remembers it for
    /// the feedback comparison.
    pub fn alice_send_package(
        &mut self,
        scheme: &PackageScheme,
        payload: &[Bit],
        channel: &mut QubitChannel,
        log: &mut Transcript,
    ) -> Result<(), ProtocolError> {
        let pkg = scheme.encode(payload)?;
        self.send_pending(pkg, Some(payload.to_vec()), channel, log)
    }

    /// Sends the basis-change acknowledgement word as the pending package.
    pub fn alice_send_basis_ack(
        &mut self,
        scheme: &PackageScheme,
        channel: &mut QubitChannel,
        log: &mut Transcript,
    ) -> Result<(), ProtocolError> {
        let pkg = scheme
            .overhead(BASIS_CHANGE_ACK)
            .ok_or(ProtocolError::ProtocolOrder("scheme has no basis-change word"))?;
        self.send_pending(pkg, None, channel, log)
    }

    fn send_pending(
        &mut self,
        pkg: Package,
        payload: Option<Vec<Bit>>,
        channel: &mut QubitChannel,
        log: &mut Transcript,
    ) -> Result<(), ProtocolError> {
        if self.pending_package.is_some() {
            return Err(ProtocolError::ProtocolOrder("previous package not yet confirmed"));
        }
        self.transmit(&pkg, channel, log);
        self.pending_package = Some(pkg);
        self.pending_payload = payload;
        self.attempts = 1;
        Ok(())
    }

    /// Bob's side of one package: measure, decode, decide the reply.
    ///
    /// A received package other than the error signal commits the previous
    /// one, since Alice only moves on once an echo matched.
    pub fn bob_receive_package(
        &mut self,
        scheme: &PackageScheme,
        cfg: &SessionConfig,
        channel: &mut QubitChannel,
        rng: &mut RngStream,
        log: &mut Transcript,
    ) -> Result<BobReceipt, ProtocolError> {
        let (bits, latency_flags) = self.receive_bits(scheme.length(), channel, rng, log)?;
        let decoded = scheme.decode(&bits)?;
        let echo = Package {
            bits,
            role: PackageRole::Data,
        };
        let mut basis_change_due = false;
        let reply = match &decoded {
            Decoded::Overhead(ERROR_SIGNAL) => {
                self.tentative = None;
                self.record_error();
                None
            }
            Decoded::Unbalanced => {
                self.commit();
                self.stats.record(false);
                scheme.error_signal()
            }
            Decoded::Data(payload) => {
                self.commit();
                self.tentative = Some(Tentative::Data(payload.clone()));
                self.stats.record(false);
                Some(echo)
            }
            Decoded::Overhead(index) => {
                self.commit();
                self.tentative = Some(Tentative::Control);
                self.stats.record(false);
                basis_change_due = *index == BASIS_CHANGE_ACK && self.change_due(cfg);
                Some(echo)
            }
        };
        Ok(BobReceipt {
            decoded,
            reply,
            basis_change_due,
            latency_flags,
        })
    }

    fn commit(&mut self) {
        match self.tentative.take() {
            Some(Tentative::Data(p)) => {
                self.delivered.push(p);
                self.packages_since_last_error += 1;
            }
            Some(Tentative::Control) => self.packages_since_last_error += 1,
            None => {}
        }
    }

    /// Commits whatever Bob still holds at the end of a session.
    pub fn bob_finish(&mut self) {
        self.commit();
    }

    /// Sends `reply` back over the feedback channel.
    pub fn bob_send_reply(&mut self, reply: &Package, channel: &mut QubitChannel, log: &mut Transcript) {
        self.transmit(reply, channel, log);
    }

    /// Alice measures one reply package from the feedback channel.
    pub fn alice_receive_reply(
        &mut self,
        len: usize,
        channel: &mut QubitChannel,
        rng: &mut RngStream,
        log: &mut Transcript,
    ) -> Result<Vec<Bit>, ProtocolError> {
        Ok(self.receive_bits(len, channel, rng, log)?.0)
    }

    /// Compares Bob's echo with the pending package. On a mismatch Alice
    /// records the error interval, sends the error signal and then the
    /// pending package again.
    pub fn alice_process_feedback(
        &mut self,
        scheme: &PackageScheme,
        echo: &[Bit],
        channel: &mut QubitChannel,
        log: &mut Transcript,
    ) -> Result<Feedback, ProtocolError> {
        let pending = self
            .pending_package
            .clone()
            .ok_or(ProtocolError::ProtocolOrder("feedback without a pending package"))?;
        let matched = echo == pending.bits.as_slice();
        log.push(EventKind::FeedbackEcho {
            sent: crate::codec::format_bits(&pending.bits),
            echoed: crate::codec::format_bits(echo),
            matched,
        });
        if matched {
            self.stats.record(false);
            self.packages_since_last_error += 1;
            if let Some(p) = self.pending_payload.take() {
                self.delivered.push(p);
            }
            self.pending_package = None;
            return Ok(Feedback::Matched(pending.role));
        }
        let interval = self.record_error();
        log.push(EventKind::ErrorSignal {
            from: Role::Alice,
            interval,
        });
        let signal = scheme
            .error_signal()
            .ok_or(ProtocolError::ProtocolOrder("scheme has no error-signal word"))?;
        self.transmit(&signal, channel, log);
        self.attempts += 1;
        log.push(EventKind::Resend {
            package: crate::codec::format_bits(&pending.bits),
            attempt: self.attempts,
        });
        self.transmit(&pending, channel, log);
        Ok(Feedback::Mismatch)
    }

    /// A reply arrived for a package that should not have been answered.
    pub fn alice_unexpected_reply(&mut self) {
        self.stats.record(true);
    }

    /// Whether a basis change is due at the current delivery count.
    pub fn change_due(&self, cfg: &SessionConfig) -> bool {
        let n = self.delivered.len();
        cfg.basis_change_period > 0 && n > 0 && n as u64 % cfg.basis_change_period == 0 && self.changed_at != n
    }

    /// One coordinated step of the coding basis. Returns the turn bit used.
    pub fn advance_basis(&mut self, cfg: &SessionConfig, log: &mut Transcript) -> Result<Bit, ProtocolError> {
        if self.basis_changes > 0
            && self.basis_changes % cfg.refresh_every() == 0
            && self.monitor_intervention(cfg) == Monitor::Continue
        {
            self.turn_bits.refresh(&self.collected_error_intervals[self.intervals_used..]);
            self.intervals_used = self.collected_error_intervals.len();
        }
        let bit = self.turn_bits.next();
        self.walk = walk_step(&self.walk, bit)?;
        self.current_basis = self.walk.current();
        self.basis_changes += 1;
        self.changed_at = self.delivered.len();
        log.push(EventKind::BasisChanged {
            role: self.role,
            change: self.basis_changes,
            turn_bit: bit,
            basis: self.current_basis.to_array(),
        });
        Ok(bit)
    }

    pub fn monitor_intervention(&self, cfg: &SessionConfig) -> Monitor {
        match self.stats.windowed_rate() {
            Some(rate) if rate > cfg.error_rate_threshold => Monitor::Abort { error_rate: rate },
            _ => Monitor::Continue,
        }
    }
}

#[cfg(test)]
mod tests;
