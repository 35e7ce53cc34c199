//! Single-threaded event loop running Alice, Bob, both channels and Eve.

use serde::{Deserialize, Serialize};

use super::{EndpointState, Feedback, Monitor, ProtocolError, QubitChannel, Role, SessionConfig, Transcript};
use crate::adversary::{eve_intercept, Eve, EveRecord, EveStrategy};
use crate::codec::{make_scheme, PackageRole, PackageScheme};
use crate::protocol::transcript::EventKind;
use crate::qubit::Bit;
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbortReason {
    ErrorRate,
    RetryLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbortInfo {
    pub reason: AbortReason,
    /// Feedback evaluations Alice had made when she aborted.
    pub after_packages: u64,
    pub error_rate: f64,
}

#[derive(Debug)]
pub struct SessionOutcome {
    pub alice: EndpointState,
    pub bob: EndpointState,
    pub abort: Option<AbortInfo>,
    pub eve: EveRecord,
    /// Bits of the qubits Eve intercepted, as they were before she touched
    /// them, in interception order.
    pub eve_truth: Vec<Bit>,
    /// Smallest angle between Eve's measurement axis and the coding axis of
    /// an intercepted qubit, taken modulo sign (radians, in `[0, pi/2]`).
    pub eve_min_mismatch: Option<f64>,
    pub latency_flags_seen: u64,
    pub feedback_evaluations: u64,
    pub transcript: Transcript,
}

impl SessionOutcome {
    pub fn delivered(&self) -> &[Vec<Bit>] {
        &self.bob.delivered
    }

    /// Fraction of message bits Bob ended up with wrong or missing.
    pub fn bit_error_rate(&self, message: &[Vec<Bit>]) -> f64 {
        let total: usize = message.iter().map(Vec::len).sum();
        if total == 0 {
            return 0.0;
        }
        let mut wrong = 0;
        for (i, sent) in message.iter().enumerate() {
            match self.bob.delivered.get(i) {
                Some(got) => wrong += sent.iter().zip(got).filter(|(a, b)| a != b).count(),
                None => wrong += sent.len(),
            }
        }
        wrong as f64 / total as f64
    }
}

struct Session<'a> {
    cfg: &'a SessionConfig,
    scheme: PackageScheme,
    alice: EndpointState,
    bob: EndpointState,
    forward: QubitChannel,
    feedback: QubitChannel,
    alice_rng: RngStream,
    bob_rng: RngStream,
    eve: Eve,
    eve_truth: Vec<Bit>,
    eve_min_mismatch: Option<f64>,
    latency_flags_seen: u64,
    evaluations: u64,
    log: Transcript,
}

/// Runs Alice sending `message` (one payload per package) to Bob while Eve
/// follows `strategy`. Every random draw derives from `seed`.
pub fn run_session(
    cfg: &SessionConfig,
    message: &[Vec<Bit>],
    strategy: &EveStrategy,
    seed: u64,
    record_transcript: bool,
) -> Result<SessionOutcome, ProtocolError> {
    cfg.validate()?;
    let scheme = make_scheme(cfg.package_length)?;
    let eve = Eve::new(strategy.clone(), cfg.initial_basis, RngStream::new(seed, "eve"))?;
    let mut s = Session {
        cfg,
        alice: EndpointState::new(Role::Alice, cfg),
        bob: EndpointState::new(Role::Bob, cfg),
        scheme,
        forward: QubitChannel::new(),
        feedback: QubitChannel::new(),
        alice_rng: RngStream::new(seed, "alice"),
        bob_rng: RngStream::new(seed, "bob"),
        eve,
        eve_truth: Vec::new(),
        eve_min_mismatch: None,
        latency_flags_seen: 0,
        evaluations: 0,
        log: if record_transcript {
            Transcript::recording()
        } else {
            Transcript::counting()
        },
    };
    let abort = s.run(message)?;
    s.bob.bob_finish();
    if matches!(s.eve.strategy(), EveStrategy::TomographyInterleave { .. }) {
        s.eve.snapshot_estimate();
    }
    Ok(SessionOutcome {
        alice: s.alice,
        bob: s.bob,
        abort,
        eve: s.eve.into_record(),
        eve_truth: s.eve_truth,
        eve_min_mismatch: s.eve_min_mismatch,
        latency_flags_seen: s.latency_flags_seen,
        feedback_evaluations: s.evaluations,
        transcript: s.log,
    })
}

impl Session<'_> {
    fn run(&mut self, message: &[Vec<Bit>]) -> Result<Option<AbortInfo>, ProtocolError> {
        for payload in message {
            self.alice
                .alice_send_package(&self.scheme, payload, &mut self.forward, &mut self.log)?;
            if let Some(abort) = self.confirm()? {
                return Ok(Some(abort));
            }
            if self.alice.change_due(self.cfg) {
                self.alice
                    .alice_send_basis_ack(&self.scheme, &mut self.forward, &mut self.log)?;
                if let Some(abort) = self.confirm()? {
                    return Ok(Some(abort));
                }
                let bit = self.alice.advance_basis(self.cfg, &mut self.log)?;
                self.eve.on_basis_change(bit)?;
            }
        }
        Ok(None)
    }

    /// Drives packages through until Alice's pending package is confirmed or
    /// the session aborts.
    fn confirm(&mut self) -> Result<Option<AbortInfo>, ProtocolError> {
        while self.alice.pending_package.is_some() {
            let expects_echo = self
                .alice
                .pop_awaiting()
                .ok_or(ProtocolError::ProtocolOrder("pending package not in flight"))?;
            let len = self.scheme.length();
            self.intercept_forward(len)?;
            let receipt = self.bob.bob_receive_package(
                &self.scheme,
                self.cfg,
                &mut self.forward,
                &mut self.bob_rng,
                &mut self.log,
            )?;
            self.latency_flags_seen += receipt.latency_flags;
            let echo = match &receipt.reply {
                Some(reply) => {
                    self.bob.bob_send_reply(reply, &mut self.feedback, &mut self.log);
                    if self.cfg.eve_on_feedback {
                        self.intercept(len, false)?;
                    }
                    Some(
                        self.alice
                            .alice_receive_reply(len, &mut self.feedback, &mut self.alice_rng, &mut self.log)?,
                    )
                }
                None => None,
            };
            if receipt.basis_change_due {
                self.bob.advance_basis(self.cfg, &mut self.log)?;
            }
            match (expects_echo, echo) {
                (true, echo) => {
                    // a silent Bob reads as an empty echo, which never matches
                    let echo = echo.unwrap_or_default();
                    self.evaluations += 1;
                    let fb = self
                        .alice
                        .alice_process_feedback(&self.scheme, &echo, &mut self.forward, &mut self.log)?;
                    if let Some(abort) = self.check_abort() {
                        return Ok(Some(abort));
                    }
                    if fb == Feedback::Mismatch && self.alice.attempts() > self.cfg.max_attempts {
                        return Ok(Some(self.abort(AbortReason::RetryLimit, 0.0)));
                    }
                    if let Feedback::Matched(PackageRole::Data | PackageRole::Overhead(_)) = fb {
                        return Ok(None);
                    }
                }
                (false, Some(_)) => {
                    self.evaluations += 1;
                    self.alice.alice_unexpected_reply();
                    if let Some(abort) = self.check_abort() {
                        return Ok(Some(abort));
                    }
                }
                (false, None) => {}
            }
        }
        Ok(None)
    }

    fn check_abort(&mut self) -> Option<AbortInfo> {
        match self.alice.monitor_intervention(self.cfg) {
            Monitor::Continue => None,
            Monitor::Abort { error_rate } => Some(self.abort(AbortReason::ErrorRate, error_rate)),
        }
    }

    fn abort(&mut self, reason: AbortReason, error_rate: f64) -> AbortInfo {
        self.log.push(EventKind::Abort {
            reason: match reason {
                AbortReason::ErrorRate => "error-rate".into(),
                AbortReason::RetryLimit => "retry-limit".into(),
            },
            error_rate,
            packages: self.evaluations,
        });
        AbortInfo {
            reason,
            after_packages: self.evaluations,
            error_rate,
        }
    }

    fn intercept_forward(&mut self, len: usize) -> Result<(), ProtocolError> {
        if self.forward.len() < len {
            return Err(ProtocolError::ChannelEmpty);
        }
        self.intercept(len, true)
    }

    fn intercept(&mut self, len: usize, forward: bool) -> Result<(), ProtocolError> {
        if self.eve.is_passive() {
            return Ok(());
        }
        let channel = if forward {
            &mut self.forward
        } else {
            &mut self.feedback
        };
        for carrier in channel.front_mut(len) {
            if let Some(axis) = self.eve.next_axis() {
                let angle = axis.dot(&carrier.axis).abs().min(1.0).acos();
                self.eve_min_mismatch = Some(self.eve_min_mismatch.map_or(angle, |m: f64| m.min(angle)));
            }
            self.eve_truth.push(carrier.bit);
            *carrier = eve_intercept(&mut self.eve, *carrier)?;
        }
        Ok(())
    }
}
