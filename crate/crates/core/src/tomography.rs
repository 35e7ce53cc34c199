//! Linear-inversion estimation of a Bloch vector from Pauli-axis samples.
//!
//! Each outcome bit `b` is read as the observable value `2b - 1`. The
//! reported standard error of a `K`-sample mean is the fixed value
//! `1/sqrt(K - 1)`, which assumes unit observable variance; the true spread
//! along axis `k` is `sqrt((1 - n_k^2) / K)` and never larger.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qubit::{measure, Bit, BlochVector, DensityMatrix, Detector, QubitError};
use crate::rng::RngStream;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TomographyError {
    #[error("tolerance {0} outside (0, 1]")]
    InvalidTolerance(f64),
    #[error("need at least {needed} outcomes, got {got}")]
    InsufficientSample { needed: usize, got: usize },
    #[error("estimate norm {norm} exceeds 1 beyond statistical overshoot")]
    InconsistentEstimate { norm: f64 },
    #[error("subsequence assignment does not cover the stream")]
    InvalidAssignment,
    #[error(transparent)]
    Qubit(#[from] QubitError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AxisSample<T> {
    pub axis: BlochVector<T>,
    pub outcomes: Vec<Bit>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochEstimate<T> {
    pub mean: [T; 3],
    pub std_error: [T; 3],
    pub sample_sizes: [usize; 3],
}

impl<T: Scalar> BlochEstimate<T> {
    pub fn mean_vector(&self) -> BlochVector<T> {
        BlochVector::from_array(self.mean)
    }

    pub fn max_std_error(&self) -> T {
        self.std_error.iter().fold(T::zero(), |a, b| a.max(*b))
    }
}

/// Smallest `K` with `1/sqrt(K) <= s`, i.e. `ceil(1/s^2)` without the
/// rounding hazards of the direct formula.
pub fn complexity<T: Scalar>(s: T) -> Result<u64, TomographyError> {
    let sf = s.to_f64().unwrap_or(f64::NAN);
    if !(sf > 0.0 && sf <= 1.0) {
        return Err(TomographyError::InvalidTolerance(sf));
    }
    let ok = |k: u64| 1.0 / (k as f64).sqrt() <= sf;
    let mut k = (1.0 / (sf * sf)).ceil().max(1.0) as u64;
    while k > 1 && ok(k - 1) {
        k -= 1;
    }
    while !ok(k) {
        k += 1;
    }
    Ok(k)
}

pub fn standard_error<T: Scalar>(k: usize) -> T {
    T::one() / T::from_usize(k - 1).expect("sample size fits scalar").sqrt()
}

/// Mean observable value and its nominal standard error `1/sqrt(K-1)`.
pub fn estimate_axis_mean<T: Scalar>(sample: &AxisSample<T>) -> Result<(T, T), TomographyError> {
    let k = sample.outcomes.len();
    if k < 2 {
        return Err(TomographyError::InsufficientSample { needed: 2, got: k });
    }
    Ok((mean_of(&sample.outcomes), standard_error(k)))
}

fn mean_of<T: Scalar>(outcomes: &[Bit]) -> T {
    let ones = outcomes.iter().filter(|b| **b == Bit::One).count();
    let k = outcomes.len();
    // (ones - zeros) / k
    T::from_f64((2.0 * ones as f64 - k as f64) / k as f64).expect("mean fits scalar")
}

/// Bob's tuning procedure: `K` copies of `(1, true_axis)` measured along each
/// coordinate axis in turn. The estimate is not normalised.
pub fn bob_determine_basis<T: Scalar>(
    true_axis: &BlochVector<T>,
    k: usize,
    rng: &mut RngStream,
) -> Result<BlochEstimate<T>, TomographyError> {
    if k < 2 {
        return Err(TomographyError::InsufficientSample { needed: 2, got: k });
    }
    true_axis.check_unit()?;
    let mut mean = [T::zero(); 3];
    for (i, axis) in [BlochVector::e1(), BlochVector::e2(), BlochVector::e3()].iter().enumerate() {
        let det = Detector::new(*axis)?;
        let outcomes = (0..k)
            .map(|_| measure(&det, Bit::One, true_axis, rng).map(|(b, _)| b))
            .collect::<Result<Vec<_>, _>>()?;
        mean[i] = estimate_axis_mean(&AxisSample { axis: *axis, outcomes })?.0;
    }
    let se = standard_error(k);
    Ok(BlochEstimate {
        mean,
        std_error: [se; 3],
        sample_sizes: [k; 3],
    })
}

/// How an eavesdropper splits a stream into three interleaved subsequences,
/// one per measured coordinate axis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubsequenceRule {
    /// index `i` goes to axis `i mod 3`
    RoundRobin,
    /// first third on x, second on y, remainder on z
    Blocks,
    /// explicit axis index (0, 1, 2) per stream element
    Explicit(Vec<u8>),
}

impl Default for SubsequenceRule {
    fn default() -> Self {
        SubsequenceRule::RoundRobin
    }
}

impl SubsequenceRule {
    /// Axis assigned to element `index` of a stream of length `len`.
    pub fn axis_for(&self, index: usize, len: usize) -> Option<usize> {
        match self {
            SubsequenceRule::RoundRobin => Some(index % 3),
            SubsequenceRule::Blocks => {
                let third = len.div_ceil(3).max(1);
                Some((index / third).min(2))
            }
            SubsequenceRule::Explicit(v) => v.get(index).map(|a| *a as usize).filter(|a| *a < 3),
        }
    }
}

/// Eve's unsupported estimate: she measures each element of the stream along
/// the coordinate axis its subsequence dictates and averages per axis.
pub fn eve_estimate_basis<T: Scalar>(
    stream: &[(Bit, BlochVector<T>)],
    rule: &SubsequenceRule,
    rng: &mut RngStream,
) -> Result<BlochEstimate<T>, TomographyError> {
    if stream.is_empty() {
        return Err(TomographyError::InsufficientSample { needed: 2, got: 0 });
    }
    let detectors = [
        Detector::new(BlochVector::e1())?,
        Detector::new(BlochVector::e2())?,
        Detector::new(BlochVector::e3())?,
    ];
    let mut tallies = [AxisTally::default(); 3];
    for (i, (bit, axis)) in stream.iter().enumerate() {
        let k = rule.axis_for(i, stream.len()).ok_or(TomographyError::InvalidAssignment)?;
        let (outcome, _) = measure(&detectors[k], *bit, axis, rng)?;
        tallies[k].record(outcome);
    }
    estimate_from_tallies(&tallies)
}

/// Running per-axis outcome counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisTally {
    pub ones: usize,
    pub total: usize,
}

impl AxisTally {
    pub fn record(&mut self, b: Bit) {
        self.total += 1;
        if b == Bit::One {
            self.ones += 1;
        }
    }
}

pub fn estimate_from_tallies<T: Scalar>(tallies: &[AxisTally; 3]) -> Result<BlochEstimate<T>, TomographyError> {
    let mut est = BlochEstimate {
        mean: [T::zero(); 3],
        std_error: [T::zero(); 3],
        sample_sizes: [0; 3],
    };
    for (k, t) in tallies.iter().enumerate() {
        if t.total < 2 {
            return Err(TomographyError::InsufficientSample { needed: 2, got: t.total });
        }
        est.mean[k] = T::lit((2.0 * t.ones as f64 - t.total as f64) / t.total as f64);
        est.std_error[k] = standard_error(t.total);
        est.sample_sizes[k] = t.total;
    }
    Ok(est)
}

/// Expected Eve means `n_k (2 nu_k - 1)` when a fraction `nu_k` of the states
/// in subsequence `k` carry bit 1.
pub fn expected_eve_means<T: Scalar>(axis: &BlochVector<T>, nu: [T; 3]) -> [T; 3] {
    let mut out = [T::zero(); 3];
    for k in 0..3 {
        out[k] = axis.component(k) * (T::two() * nu[k] - T::one());
    }
    out
}

/// `I/2 + mean.sigma/2`, with the mean clipped to unit length when it
/// overshoots. Returns the state and whether clipping happened.
pub fn reconstruct_state<T: Scalar>(estimate: &BlochEstimate<T>) -> Result<(DensityMatrix<T>, bool), TomographyError> {
    let v = estimate.mean_vector();
    let norm = v.norm();
    let limit = T::one() + T::lit(3.0) * estimate.max_std_error();
    if norm > limit {
        return Err(TomographyError::InconsistentEstimate {
            norm: norm.to_f64().unwrap_or(f64::NAN),
        });
    }
    if norm > T::one() {
        Ok((DensityMatrix::from_bloch(&v.normalized()), true))
    } else {
        Ok((DensityMatrix::from_bloch(&v), false))
    }
}
