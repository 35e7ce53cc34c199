//! Eavesdropper strategies acting on qubits in transit.
//!
//! Eve sees every forward qubit (and, optionally, the feedback qubits) and may
//! measure it along an axis of her choosing. A measurement reduces the
//! carrier to `+-m`, so whenever her axis `m` differs from the coding axis `n`
//! Bob's nondemolition detector registers the wrong bit with probability
//! `(1 - (m.n)^2) / 2`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::channel::Carrier;
use crate::qubit::{measure, Bit, BlochVector, Detector, QubitError};
use crate::rng::RngStream;
use crate::tomography::{estimate_from_tallies, AxisTally, BlochEstimate, SubsequenceRule};
use crate::walk::{walk_step, WalkError, WalkState};

type Bloch = BlochVector<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversaryError {
    #[error("eve axis: {0}")]
    Axis(#[from] QubitError),
    #[error("subsequence rule {0:?} cannot be applied to a live stream")]
    UnsupportedRule(SubsequenceRule),
    #[error("record covers {record} qubits but ground truth has {truth}")]
    SpanMismatch { record: usize, truth: usize },
    #[error(transparent)]
    Walk(#[from] WalkError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EveStrategy {
    PassiveOff,
    FixedAxisMeasure { axis: [f64; 3] },
    TomographyInterleave {
        #[serde(default)]
        rule: SubsequenceRule,
    },
    WalkGuesser { guess_seed: u64 },
    InterceptResend { axis: [f64; 3] },
}

impl EveStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            EveStrategy::PassiveOff => "passive-off",
            EveStrategy::FixedAxisMeasure { .. } => "fixed-axis-measure",
            EveStrategy::TomographyInterleave { .. } => "tomography-interleave",
            EveStrategy::WalkGuesser { .. } => "walk-guesser",
            EveStrategy::InterceptResend { .. } => "intercept-resend",
        }
    }
}

/// Per-qubit disturbance: probability that Bob's matched detector reads the
/// wrong bit after Eve measured along an axis with cosine `c` to the coding
/// axis.
pub fn flip_probability(c: f64) -> f64 {
    (1.0 - c * c) / 2.0
}

/// One intercepted qubit as Eve saw it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interception {
    pub axis: [f64; 3],
    pub guess: Bit,
}

/// A basis-change guess and, for scoring, the true turn bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkGuess {
    pub guess: Bit,
    pub truth: Bit,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EveRecord {
    pub interceptions: Vec<Interception>,
    pub tallies: [AxisTally; 3],
    pub basis_estimates: Vec<BlochEstimate<f64>>,
    pub walk_guesses: Vec<WalkGuess>,
    pub latency_flags: u64,
}

impl EveRecord {
    pub fn guessed_bits(&self) -> impl Iterator<Item = Bit> + '_ {
        self.interceptions.iter().map(|i| i.guess)
    }

    pub fn walk_guesses_correct(&self) -> usize {
        self.walk_guesses.iter().filter(|g| g.guess == g.truth).count()
    }

    /// Whether every turn bit guessed so far was right (vacuously true before
    /// the first change).
    pub fn walk_all_correct(&self) -> bool {
        self.walk_guesses.iter().all(|g| g.guess == g.truth)
    }

    /// Line-delimited export in the transcript format, each line tagged with
    /// the strategy name.
    pub fn write_jsonl<W: Write>(&self, strategy: &EveStrategy, mut w: W) -> io::Result<()> {
        let name = strategy.name();
        let mut index = 0u64;
        for i in &self.interceptions {
            write_line(&mut w, &mut index, "eve-intercept", name, i)?;
        }
        for g in &self.walk_guesses {
            write_line(&mut w, &mut index, "eve-walk-guess", name, g)?;
        }
        for e in &self.basis_estimates {
            write_line(&mut w, &mut index, "eve-basis-estimate", name, e)?;
        }
        let summary = Summary {
            intercepted: self.interceptions.len(),
            tallies: self.tallies,
            latency_flags: self.latency_flags,
        };
        write_line(&mut w, &mut index, "eve-summary", name, &summary)
    }
}

#[derive(Serialize)]
struct Summary {
    intercepted: usize,
    tallies: [AxisTally; 3],
    latency_flags: u64,
}

#[derive(Serialize)]
struct Line<'a, P> {
    index: u64,
    kind: &'static str,
    strategy: &'a str,
    payload: &'a P,
}

fn write_line<W: Write, P: Serialize>(
    w: &mut W,
    index: &mut u64,
    kind: &'static str,
    strategy: &str,
    payload: &P,
) -> io::Result<()> {
    serde_json::to_writer(
        &mut *w,
        &Line {
            index: *index,
            kind,
            strategy,
            payload,
        },
    )?;
    *index += 1;
    w.write_all(b"\n")
}

/// Eve following the public basis walk with privately guessed turn bits.
#[derive(Clone, Debug)]
pub struct WalkGuesser {
    walk: WalkState<f64>,
    guesses: RngStream,
    steps: u64,
}

impl WalkGuesser {
    pub fn new(init: WalkState<f64>, guess_seed: u64) -> Self {
        Self {
            walk: init,
            guesses: RngStream::new(guess_seed, "eve/walk-guess"),
            steps: 0,
        }
    }

    pub fn basis(&self) -> Bloch {
        self.walk.current()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }
}

/// Brings the guesser up to `changes_observed` basis changes, guessing one
/// turn bit per change. Returns the guesses made by this call.
pub fn eve_guess_walk(guesser: &mut WalkGuesser, changes_observed: u64) -> Result<Vec<Bit>, AdversaryError> {
    let mut made = Vec::new();
    while guesser.steps < changes_observed {
        let bit = Bit::from_bool(guesser.guesses.bit());
        guesser.walk = walk_step(&guesser.walk, bit)?;
        guesser.steps += 1;
        made.push(bit);
    }
    Ok(made)
}

enum Mode {
    Passive,
    Fixed(Detector<f64>),
    Interleave(SubsequenceRule, [Detector<f64>; 3]),
    Guesser(WalkGuesser),
    Resend(Detector<f64>),
}

/// A live eavesdropper: a strategy plus its private randomness and record.
pub struct Eve {
    strategy: EveStrategy,
    mode: Mode,
    rng: RngStream,
    record: EveRecord,
}

impl Eve {
    /// `public_walk` is the walk initialisation Eve is assumed to know.
    pub fn new(strategy: EveStrategy, public_walk: WalkState<f64>, rng: RngStream) -> Result<Self, AdversaryError> {
        let mode = match &strategy {
            EveStrategy::PassiveOff => Mode::Passive,
            EveStrategy::FixedAxisMeasure { axis } => Mode::Fixed(Detector::new(Bloch::from_array(*axis))?),
            EveStrategy::InterceptResend { axis } => Mode::Resend(Detector::new(Bloch::from_array(*axis))?),
            EveStrategy::TomographyInterleave { rule } => {
                if *rule == SubsequenceRule::Blocks {
                    return Err(AdversaryError::UnsupportedRule(rule.clone()));
                }
                Mode::Interleave(
                    rule.clone(),
                    [
                        Detector::new(Bloch::e1())?,
                        Detector::new(Bloch::e2())?,
                        Detector::new(Bloch::e3())?,
                    ],
                )
            }
            EveStrategy::WalkGuesser { guess_seed } => Mode::Guesser(WalkGuesser::new(public_walk, *guess_seed)),
        };
        Ok(Self {
            strategy,
            mode,
            rng,
            record: EveRecord::default(),
        })
    }

    pub fn strategy(&self) -> &EveStrategy {
        &self.strategy
    }

    pub fn is_passive(&self) -> bool {
        matches!(self.mode, Mode::Passive)
    }

    pub fn record(&self) -> &EveRecord {
        &self.record
    }

    pub fn into_record(self) -> EveRecord {
        self.record
    }

    /// The axis Eve will measure the next intercepted qubit along, if any.
    pub fn next_axis(&self) -> Option<Bloch> {
        match &self.mode {
            Mode::Passive => None,
            Mode::Fixed(d) | Mode::Resend(d) => Some(d.axis()),
            Mode::Interleave(rule, dets) => {
                let i = self.record.interceptions.len();
                rule.axis_for(i, usize::MAX).map(|k| dets[k].axis())
            }
            Mode::Guesser(g) => Some(g.basis()),
        }
    }

    /// Notification of a basis change (Eve knows when changes happen but not
    /// the turn bit); `true_turn_bit` is used only for scoring.
    pub fn on_basis_change(&mut self, true_turn_bit: Bit) -> Result<(), AdversaryError> {
        match &mut self.mode {
            Mode::Guesser(g) => {
                let target = g.steps() + 1;
                for guess in eve_guess_walk(g, target)? {
                    self.record.walk_guesses.push(WalkGuess {
                        guess,
                        truth: true_turn_bit,
                    });
                }
            }
            Mode::Interleave(..) => self.snapshot_estimate(),
            _ => {}
        }
        Ok(())
    }

    /// Appends the current tomography estimate, when every axis has at least
    /// two outcomes.
    pub fn snapshot_estimate(&mut self) {
        if let Ok(est) = estimate_from_tallies(&self.record.tallies) {
            self.record.basis_estimates.push(est);
        }
    }
}

/// Applies Eve's strategy to one qubit in transit and returns what she
/// forwards.
pub fn eve_intercept(eve: &mut Eve, carrier: Carrier) -> Result<Carrier, AdversaryError> {
    let (detector, axis_index, latency) = match &eve.mode {
        Mode::Passive => return Ok(carrier),
        Mode::Fixed(d) => (*d, None, false),
        Mode::Resend(d) => (*d, None, true),
        Mode::Interleave(rule, dets) => {
            let i = eve.record.interceptions.len();
            let k = rule
                .axis_for(i, usize::MAX)
                .ok_or_else(|| AdversaryError::UnsupportedRule(rule.clone()))?;
            (dets[k], Some(k), false)
        }
        Mode::Guesser(g) => (Detector::new(g.basis())?, None, false),
    };
    let (outcome, _) = measure(&detector, carrier.bit, &carrier.axis, &mut eve.rng)?;
    eve.record.interceptions.push(Interception {
        axis: detector.axis().to_array(),
        guess: outcome,
    });
    if let Some(k) = axis_index {
        eve.record.tallies[k].record(outcome);
    }
    if latency {
        eve.record.latency_flags += 1;
    }
    Ok(Carrier {
        bit: outcome,
        axis: detector.axis(),
        latency_flag: carrier.latency_flag || latency,
    })
}

/// Fraction of Eve's guessed bits that equal the bits Alice sent.
pub fn eve_information_leakage(record: &EveRecord, ground_truth: &[Bit]) -> Result<f64, AdversaryError> {
    if record.interceptions.len() != ground_truth.len() {
        return Err(AdversaryError::SpanMismatch {
            record: record.interceptions.len(),
            truth: ground_truth.len(),
        });
    }
    if ground_truth.is_empty() {
        return Ok(0.0);
    }
    let hits = record.guessed_bits().zip(ground_truth).filter(|(g, t)| g == *t).count();
    Ok(hits as f64 / ground_truth.len() as f64)
}
