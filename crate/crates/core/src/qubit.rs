//! Qubit states and two-outcome projective detectors.
//!
//! States are carried as Bloch vectors; a density matrix is a derived view
//! `rho = I/2 + (r . sigma)/2` in the standard Pauli basis with
//! `sigma_z = diag(1, -1)`. Bit value 1 is the `+n` eigenstate of `n . sigma`
//! (registered observable value +1), bit value 0 is `-n` (value -1).

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QubitError {
    #[error("axis is not a unit vector (norm {norm})")]
    InvalidAxis { norm: f64 },
    #[error("not a valid density matrix: {0}")]
    InvalidState(&'static str),
    #[error("empty input")]
    EmptyInput,
}

/// One classical bit carried by a qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
#[repr(u8)]
pub enum Bit {
    Zero = 0,
    One = 1,
}

impl Bit {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Bit::One
        } else {
            Bit::Zero
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn flip(self) -> Self {
        match self {
            Bit::Zero => Bit::One,
            Bit::One => Bit::Zero,
        }
    }

    /// Observable value `2b - 1`.
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Bit::Zero => -T::one(),
            Bit::One => T::one(),
        }
    }
}

impl From<Bit> for u8 {
    fn from(b: Bit) -> u8 {
        b as u8
    }
}

impl TryFrom<u8> for Bit {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(Bit::Zero),
            1 => Ok(Bit::One),
            _ => Err(format!("bit value must be 0 or 1, got {v}")),
        }
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BlochVector<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> BlochVector<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    /// Builds a unit vector, rejecting inputs further than `unit_tol` from
    /// norm 1. The components are rescaled to exact unit norm.
    pub fn unit(x: T, y: T, z: T) -> Result<Self, QubitError> {
        let v = Self::new(x, y, z);
        v.check_unit()?;
        Ok(v.normalized())
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn e1() -> Self {
        Self::new(T::one(), T::zero(), T::zero())
    }

    pub fn e2() -> Self {
        Self::new(T::zero(), T::one(), T::zero())
    }

    pub fn e3() -> Self {
        Self::new(T::zero(), T::zero(), T::one())
    }

    pub fn component(&self, k: usize) -> T {
        match k {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("component index {k} out of range"),
        }
    }

    pub fn dot(&self, o: &Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(&self, o: &Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, k: T) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }

    pub fn normalized(&self) -> Self {
        self.scale(T::one() / self.norm())
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - T::one()).abs() <= T::unit_tol()
    }

    pub fn check_unit(&self) -> Result<(), QubitError> {
        if self.is_unit() {
            Ok(())
        } else {
            Err(QubitError::InvalidAxis {
                norm: self.norm().to_f64().unwrap_or(f64::NAN),
            })
        }
    }

    /// Great-circle distance in radians between two unit vectors.
    pub fn arc_to(&self, o: &Self) -> T {
        clamp_unit(self.dot(o)).acos()
    }

    pub fn max_abs_diff(&self, o: &Self) -> T {
        (self.x - o.x).abs().max((self.y - o.y).abs()).max((self.z - o.z).abs())
    }
}

impl<T: Scalar> Add for BlochVector<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Scalar> Sub for BlochVector<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Scalar> Neg for BlochVector<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

pub(crate) fn clamp_unit<T: Scalar>(c: T) -> T {
    c.max(-T::one()).min(T::one())
}

/// A 2x2 complex matrix; used for density matrices and projectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix<T> {
    pub m: [[Complex<T>; 2]; 2],
}

impl<T: Scalar> DensityMatrix<T> {
    pub fn from_entries(m: [[Complex<T>; 2]; 2]) -> Self {
        Self { m }
    }

    pub fn identity() -> Self {
        let o = Complex::new(T::one(), T::zero());
        let z = Complex::new(T::zero(), T::zero());
        Self { m: [[o, z], [z, o]] }
    }

    /// The equilibrium state `I/2`.
    pub fn maximally_mixed() -> Self {
        Self::identity().scale(T::half())
    }

    pub fn pauli_x() -> Self {
        let o = Complex::new(T::one(), T::zero());
        let z = Complex::new(T::zero(), T::zero());
        Self { m: [[z, o], [o, z]] }
    }

    pub fn pauli_y() -> Self {
        let i = Complex::new(T::zero(), T::one());
        let z = Complex::new(T::zero(), T::zero());
        Self { m: [[z, -i], [i, z]] }
    }

    pub fn pauli_z() -> Self {
        let o = Complex::new(T::one(), T::zero());
        let z = Complex::new(T::zero(), T::zero());
        Self { m: [[o, z], [z, -o]] }
    }

    pub fn paulis() -> [Self; 3] {
        [Self::pauli_x(), Self::pauli_y(), Self::pauli_z()]
    }

    /// `I/2 + (r . sigma)/2` for any Bloch vector `r`.
    pub fn from_bloch(r: &BlochVector<T>) -> Self {
        let h = T::half();
        let d = r.z * h;
        Self {
            m: [
                [Complex::new(h + d, T::zero()), Complex::new(r.x * h, -r.y * h)],
                [Complex::new(r.x * h, r.y * h), Complex::new(h - d, T::zero())],
            ],
        }
    }

    pub fn trace(&self) -> Complex<T> {
        self.m[0][0] + self.m[1][1]
    }

    pub fn scale(&self, k: T) -> Self {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for e in row.iter_mut() {
                *e = *e * k;
            }
        }
        out
    }

    pub fn matmul(&self, o: &Self) -> Self {
        let mut out = Self::identity().scale(T::zero());
        for i in 0..2 {
            for j in 0..2 {
                out.m[i][j] = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j];
            }
        }
        out
    }

    pub fn max_abs_diff(&self, o: &Self) -> T {
        let mut worst = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.m[i][j] - o.m[i][j]).norm());
            }
        }
        worst
    }

    pub fn approx_eq(&self, o: &Self, tol: T) -> bool {
        self.max_abs_diff(o) <= tol
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        (self.m[0][1] - self.m[1][0].conj()).norm() <= tol
            && self.m[0][0].im.abs() <= tol
            && self.m[1][1].im.abs() <= tol
    }

    /// Eigenvalues of a Hermitian 2x2 matrix, ascending.
    pub fn eigenvalues(&self) -> [T; 2] {
        let a = self.m[0][0].re;
        let d = self.m[1][1].re;
        let b = self.m[0][1].norm();
        let mean = (a + d) * T::half();
        let half_gap = (((a - d) * T::half()).powi(2) + b * b).sqrt();
        [mean - half_gap, mean + half_gap]
    }

    /// Checks Hermiticity, unit trace and positivity at `algebra_tol`.
    pub fn validate(&self) -> Result<(), QubitError> {
        let tol = T::algebra_tol();
        if !self.is_hermitian(tol) {
            return Err(QubitError::InvalidState("not Hermitian"));
        }
        let tr = self.trace();
        if (tr.re - T::one()).abs() > tol || tr.im.abs() > tol {
            return Err(QubitError::InvalidState("trace differs from 1"));
        }
        if self.eigenvalues()[0] < -tol {
            return Err(QubitError::InvalidState("negative eigenvalue"));
        }
        Ok(())
    }

    /// Real part of `Tr(self * other)`.
    pub fn trace_product(&self, o: &Self) -> T {
        self.matmul(o).trace().re
    }
}

impl<T: Scalar> Add for DensityMatrix<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut out = self;
        for i in 0..2 {
            for j in 0..2 {
                out.m[i][j] = self.m[i][j] + o.m[i][j];
            }
        }
        out
    }
}

impl<T: Scalar> Mul for DensityMatrix<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.matmul(&o)
    }
}

/// Two-outcome projective detector `D(m) = C0(m) + C1(m)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detector<T> {
    axis: BlochVector<T>,
}

impl<T: Scalar> Detector<T> {
    pub fn new(axis: BlochVector<T>) -> Result<Self, QubitError> {
        axis.check_unit()?;
        Ok(Self {
            axis: axis.normalized(),
        })
    }

    pub fn axis(&self) -> BlochVector<T> {
        self.axis
    }

    /// Projector registering bit `r`.
    pub fn projector(&self, r: Bit) -> DensityMatrix<T> {
        DensityMatrix::from_bloch(&self.axis.scale(r.sign()))
    }

    pub fn c0(&self) -> DensityMatrix<T> {
        self.projector(Bit::Zero)
    }

    pub fn c1(&self) -> DensityMatrix<T> {
        self.projector(Bit::One)
    }
}

/// Coding state `rho_s(n)`: `I/2 - n.sigma/2` for bit 0, `I/2 + n.sigma/2` for bit 1.
pub fn coding_state<T: Scalar>(bit: Bit, axis: &BlochVector<T>) -> Result<DensityMatrix<T>, QubitError> {
    axis.check_unit()?;
    Ok(DensityMatrix::from_bloch(&axis.normalized().scale(bit.sign())))
}

/// Bloch vector `r_i = Tr(rho sigma_i)` of a valid density matrix.
pub fn bloch_of<T: Scalar>(state: &DensityMatrix<T>) -> Result<BlochVector<T>, QubitError> {
    state.validate()?;
    let [sx, sy, sz] = DensityMatrix::paulis();
    Ok(BlochVector::new(
        state.trace_product(&sx),
        state.trace_product(&sy),
        state.trace_product(&sz),
    ))
}

/// Probability that detector `m` registers bit `r` on coding state `(s, n)`:
/// `(1 + (2s-1)(2r-1) m.n) / 2`.
///
/// The two outcomes for a given state always sum to exactly 1: the larger
/// probability lies in `[1/2, 1]`, so its complement is computed without
/// rounding.
pub fn outcome_probability<T: Scalar>(
    detector_axis: &BlochVector<T>,
    detector_bit: Bit,
    state_bit: Bit,
    state_axis: &BlochVector<T>,
) -> Result<T, QubitError> {
    detector_axis.check_unit()?;
    state_axis.check_unit()?;
    let c = snapped_cosine(detector_axis, state_axis);
    let major = T::half() * (T::one() + c.abs());
    let minor = T::one() - major;
    let agree = (detector_bit == state_bit) == (c >= T::zero());
    Ok(if agree { major } else { minor })
}

/// Cosine between two unit axes, with near-parallel pairs snapped to exactly
/// +-1 so that a matched detector registers deterministically.
fn snapped_cosine<T: Scalar>(a: &BlochVector<T>, b: &BlochVector<T>) -> T {
    let c = clamp_unit(a.dot(b) / (a.norm() * b.norm()));
    if T::one() - c.abs() <= T::algebra_tol() {
        T::one().copysign(c)
    } else {
        c
    }
}

/// Projective measurement of coding state `(state_bit, state_axis)`.
///
/// Returns the registered bit and the post-measurement Bloch vector, which is
/// `+m` for outcome 1 and `-m` for outcome 0.
pub fn measure<T: Scalar>(
    detector: &Detector<T>,
    state_bit: Bit,
    state_axis: &BlochVector<T>,
    rng: &mut RngStream,
) -> Result<(Bit, BlochVector<T>), QubitError> {
    let p1 = outcome_probability(&detector.axis, Bit::One, state_bit, state_axis)?;
    let p1 = p1.to_f64().unwrap_or(0.5);
    let outcome = Bit::from_bool(rng.uniform() < p1);
    Ok((outcome, detector.axis.scale(outcome.sign())))
}

/// Arithmetic mean of the coding states in `states`.
pub fn average_density<T: Scalar>(states: &[(Bit, BlochVector<T>)]) -> Result<DensityMatrix<T>, QubitError> {
    if states.is_empty() {
        return Err(QubitError::EmptyInput);
    }
    let mut sum = DensityMatrix::identity().scale(T::zero());
    for (bit, axis) in states {
        sum = sum + coding_state(*bit, axis)?;
    }
    let n = T::from_usize(states.len()).expect("length fits scalar");
    Ok(sum.scale(T::one() / n))
}
