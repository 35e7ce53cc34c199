use std::io::Write;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{aggregate, SeedRow, SessionMetrics, SimReport, TomographyMetrics};
use super::HarnessError;
use crate::adversary::{eve_information_leakage, Eve, EveStrategy};
use crate::codec::{make_scheme, parse_bits};
use crate::protocol::{run_session, ProtocolError, SessionConfig, SessionOutcome};
use crate::qubit::{Bit, BlochVector};
use crate::rng::RngStream;
use crate::tomography::{bob_determine_basis, eve_estimate_basis, expected_eve_means, SubsequenceRule};
use crate::walk::{walk_residuals, walk_sequence};

type Bloch = BlochVector<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Tomography,
    CleanSession,
    AttackSession,
    WalkGeometry,
}

/// Either an explicit list or `{ start, count }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<u64>),
    Range { start: u64, count: u64 },
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::List(Vec::new())
    }
}

impl Seeds {
    pub fn expand(&self) -> Vec<u64> {
        match self {
            Seeds::List(v) => v.clone(),
            Seeds::Range { start, count } => (0..*count).map(|i| start.wrapping_add(i)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MessageSpec {
    /// `packages` payloads of uniformly random bits, drawn per seed.
    Random { packages: usize },
    /// A fixed bit string, cut into payloads.
    Explicit { bits: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observer {
    #[default]
    Bob,
    Eve,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StreamKind {
    #[default]
    Alternating,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographySpec {
    /// Copies per coordinate axis (Bob).
    #[serde(default = "default_k")]
    pub k: usize,
    pub axis: [f64; 3],
    #[serde(default)]
    pub observer: Observer,
    /// Length of the coded stream Eve samples.
    #[serde(default = "default_qubits")]
    pub qubits: usize,
    #[serde(default)]
    pub rule: SubsequenceRule,
    #[serde(default)]
    pub stream: StreamKind,
    /// Half-width used for the within-tolerance fractions.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_k() -> usize {
    401
}

fn default_qubits() -> usize {
    30_000
}

fn default_tolerance() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkSpec {
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub scenario: Scenario,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub session: SessionConfig,
    #[serde(default)]
    pub eve: Option<EveStrategy>,
    #[serde(default)]
    pub message: Option<MessageSpec>,
    #[serde(default)]
    pub tomography: Option<TomographySpec>,
    #[serde(default)]
    pub walk: Option<WalkSpec>,
    /// Consecutive correct turn-bit guesses that count as Eve surviving.
    #[serde(default = "default_survival")]
    pub survival_changes: u64,
}

fn default_survival() -> u64 {
    8
}

/// Parses a TOML spec and applies `path = value` overrides, which win over
/// values in the file. Override values are read as TOML literals, falling
/// back to a plain string.
pub fn load_spec(text: &str, overrides: &[(String, String)]) -> Result<ExperimentSpec, HarnessError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::config("<file>", e.message()))?;
    for (path, value) in overrides {
        set_path(&mut table, path, parse_literal(value))?;
    }
    let spec: ExperimentSpec = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        HarnessError::config(if path == "." { "<root>".into() } else { path }, e.into_inner())
    })?;
    spec.validate()?;
    Ok(spec)
}

fn parse_literal(value: &str) -> toml::Value {
    format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

fn set_path(table: &mut toml::Table, path: &str, value: toml::Value) -> Result<(), HarnessError> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(HarnessError::config(path, "empty key in override path"));
    }
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut cur = table;
    for key in parents {
        let entry = cur
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| HarnessError::config(path, format!("`{key}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.expand().is_empty() {
            return Err(HarnessError::config("seeds", "at least one seed is required"));
        }
        self.session.validate().map_err(|e| match e {
            ProtocolError::Config { field, reason } => HarnessError::config(format!("session.{field}"), reason),
            other => HarnessError::config("session", other),
        })?;
        match self.scenario {
            Scenario::CleanSession => {
                if self.eve.as_ref().is_some_and(|e| *e != EveStrategy::PassiveOff) {
                    return Err(HarnessError::config("eve", "a clean session runs without an eavesdropper"));
                }
                self.payloads(0)?;
            }
            Scenario::AttackSession => {
                let eve = self.eve.as_ref().ok_or_else(|| HarnessError::config("eve", "missing"))?;
                Eve::new(eve.clone(), self.session.initial_basis, RngStream::new(0, "check"))
                    .map_err(|e| HarnessError::config("eve", e))?;
                self.payloads(0)?;
            }
            Scenario::Tomography => {
                let t = self
                    .tomography
                    .as_ref()
                    .ok_or_else(|| HarnessError::config("tomography", "missing"))?;
                Bloch::from_array(t.axis)
                    .check_unit()
                    .map_err(|e| HarnessError::config("tomography.axis", e))?;
                if t.observer == Observer::Bob && t.k < 2 {
                    return Err(HarnessError::config("tomography.k", "must be at least 2"));
                }
                if t.observer == Observer::Eve && t.qubits < 6 {
                    return Err(HarnessError::config("tomography.qubits", "must be at least 6"));
                }
                if let SubsequenceRule::Explicit(v) = &t.rule {
                    if t.observer == Observer::Eve && (v.len() != t.qubits || v.iter().any(|a| *a > 2)) {
                        return Err(HarnessError::config(
                            "tomography.rule",
                            "explicit rule needs one axis index in 0..=2 per qubit",
                        ));
                    }
                }
                if !(t.tolerance > 0.0) {
                    return Err(HarnessError::config("tomography.tolerance", "must be positive"));
                }
            }
            Scenario::WalkGeometry => {
                let w = self.walk.as_ref().ok_or_else(|| HarnessError::config("walk", "missing"))?;
                if w.steps == 0 {
                    return Err(HarnessError::config("walk.steps", "must be at least 1"));
                }
            }
        }
        Ok(())
    }

    /// The message for `seed`, cut into payloads for the configured package
    /// length.
    fn payloads(&self, seed: u64) -> Result<Vec<Vec<Bit>>, HarnessError> {
        let width = make_scheme(self.session.package_length)
            .map_err(|e| HarnessError::config("session.package_length", e))?
            .payload_bits();
        match self.message.as_ref().ok_or_else(|| HarnessError::config("message", "missing"))? {
            MessageSpec::Random { packages } => {
                let mut rng = RngStream::new(seed, "harness/message");
                Ok((0..*packages)
                    .map(|_| (0..width).map(|_| Bit::from_bool(rng.bit())).collect())
                    .collect())
            }
            MessageSpec::Explicit { bits } => {
                let bits = parse_bits(bits).ok_or_else(|| HarnessError::config("message.bits", "not a 0/1 string"))?;
                if bits.len() % width != 0 {
                    return Err(HarnessError::config(
                        "message.bits",
                        format!("length {} is not a multiple of {width}", bits.len()),
                    ));
                }
                Ok(bits.chunks(width).map(<[Bit]>::to_vec).collect())
            }
        }
    }

    /// Session parameters for one seed: the shared secret is mixed with the
    /// seed so seeds are independent runs.
    fn session_for(&self, seed: u64) -> (SessionConfig, EveStrategy) {
        let mut cfg = self.session.clone();
        cfg.shared_secret_seed ^= RngStream::new(seed, "harness/secret").next_u64();
        let strategy = match self.eve.clone().unwrap_or(EveStrategy::PassiveOff) {
            EveStrategy::WalkGuesser { guess_seed } => EveStrategy::WalkGuesser {
                guess_seed: guess_seed ^ RngStream::new(seed, "harness/guess").next_u64(),
            },
            other => other,
        };
        (cfg, strategy)
    }
}

/// Runs the scenario once per seed. Seeds run in parallel; rows come back in
/// seed-list order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<SimReport, HarnessError> {
    spec.validate()?;
    let seeds = spec.seeds.expand();
    let rows = seeds
        .par_iter()
        .map(|seed| run_seed(spec, *seed))
        .collect::<Result<Vec<_>, _>>()?;
    let tolerance = spec.tomography.as_ref().map(|t| t.tolerance);
    Ok(SimReport {
        name: spec.name.clone(),
        scenario: spec.scenario,
        survival_changes: spec.survival_changes,
        tolerance,
        aggregate: aggregate(&rows, spec.survival_changes, tolerance),
        rows,
        duration_ms: None,
    })
}

fn runtime(seed: u64) -> impl Fn(String) -> HarnessError {
    move |reason| HarnessError::Runtime { seed, reason }
}

fn run_seed(spec: &ExperimentSpec, seed: u64) -> Result<SeedRow, HarnessError> {
    let mut row = SeedRow {
        seed,
        session: None,
        tomography: None,
        walk: None,
    };
    match spec.scenario {
        Scenario::CleanSession | Scenario::AttackSession => {
            let message = spec.payloads(seed)?;
            let (cfg, strategy) = spec.session_for(seed);
            let out = run_session(&cfg, &message, &strategy, seed, false).map_err(|e| runtime(seed)(e.to_string()))?;
            row.session = Some(session_metrics(&out, &message, &strategy).map_err(runtime(seed))?);
        }
        Scenario::Tomography => {
            let t = spec.tomography.as_ref().expect("validated");
            row.tomography = Some(tomography_metrics(t, seed).map_err(runtime(seed))?);
        }
        Scenario::WalkGeometry => {
            let steps = spec.walk.as_ref().expect("validated").steps;
            let mut rng = RngStream::new(seed, "harness/walk");
            let bits: Vec<Bit> = (0..steps).map(|_| Bit::from_bool(rng.bit())).collect();
            let init = spec.session.initial_basis;
            let mut points = vec![init.current()];
            points.extend(walk_sequence(&init, &bits).map_err(|e| runtime(seed)(e.to_string()))?);
            row.walk = Some(walk_residuals(&points));
        }
    }
    Ok(row)
}

fn session_metrics(
    out: &SessionOutcome,
    message: &[Vec<Bit>],
    strategy: &EveStrategy,
) -> Result<SessionMetrics, String> {
    let eve_accuracy = if out.eve_truth.is_empty() {
        None
    } else {
        Some(eve_information_leakage(&out.eve, &out.eve_truth).map_err(|e| e.to_string())?)
    };
    let eve_walk_streak = matches!(strategy, EveStrategy::WalkGuesser { .. })
        .then(|| out.eve.walk_guesses.iter().take_while(|g| g.guess == g.truth).count() as u64);
    Ok(SessionMetrics {
        bit_error_rate: out.bit_error_rate(message),
        aborted: out.abort.is_some(),
        packages_to_abort: out.abort.as_ref().map(|a| a.after_packages),
        feedback_evaluations: out.feedback_evaluations,
        basis_changes: out.alice.basis_changes,
        eve_accuracy,
        eve_walk_streak,
        latency_flags: out.latency_flags_seen,
    })
}

fn tomography_metrics(t: &TomographySpec, seed: u64) -> Result<TomographyMetrics, String> {
    let axis = Bloch::from_array(t.axis);
    let mut rng = RngStream::new(seed, "harness/tomography");
    let (est, expected) = match t.observer {
        Observer::Bob => (bob_determine_basis(&axis, t.k, &mut rng).map_err(|e| e.to_string())?, t.axis),
        Observer::Eve => {
            let mut bits = RngStream::new(seed, "harness/stream");
            let stream: Vec<(Bit, Bloch)> = (0..t.qubits)
                .map(|i| {
                    let b = match t.stream {
                        StreamKind::Alternating => Bit::from_bool(i % 2 == 1),
                        StreamKind::Random => Bit::from_bool(bits.bit()),
                    };
                    (b, axis)
                })
                .collect();
            let mut ones = [0usize; 3];
            let mut totals = [0usize; 3];
            for (i, (b, _)) in stream.iter().enumerate() {
                let k = t.rule.axis_for(i, stream.len()).ok_or("subsequence rule does not cover the stream")?;
                totals[k] += 1;
                ones[k] += (*b == Bit::One) as usize;
            }
            let nu = std::array::from_fn(|k| ones[k] as f64 / totals[k].max(1) as f64);
            let est = eve_estimate_basis(&stream, &t.rule, &mut rng).map_err(|e| e.to_string())?;
            (est, expected_eve_means(&axis, nu))
        }
    };
    Ok(TomographyMetrics {
        mean: est.mean,
        expected,
        error: std::array::from_fn(|k| est.mean[k] - expected[k]),
        std_error: est.std_error,
    })
}

/// Replays one seed of a session scenario with the transcript recorded and
/// writes it as JSON lines; Eve's record goes to `eve` when given.
pub fn export_transcript<W: Write, E: Write>(
    spec: &ExperimentSpec,
    seed: u64,
    transcript: W,
    eve: Option<E>,
) -> Result<(), HarnessError> {
    if !matches!(spec.scenario, Scenario::CleanSession | Scenario::AttackSession) {
        return Err(HarnessError::config("scenario", "transcripts exist only for session scenarios"));
    }
    let message = spec.payloads(seed)?;
    let (cfg, strategy) = spec.session_for(seed);
    let out = run_session(&cfg, &message, &strategy, seed, true).map_err(|e| runtime(seed)(e.to_string()))?;
    out.transcript.write_jsonl(transcript)?;
    if let Some(w) = eve {
        out.eve.write_jsonl(&strategy, w)?;
    }
    Ok(())
}
