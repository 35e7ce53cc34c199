//! Right-angle random walk of the coding basis on the Bloch sphere.
//!
//! Each step turns the heading by 90 degrees about the current point (the
//! turn direction is one secret bit) and then moves 0.75 rad along the new
//! great circle. Because 0.75 is an irrational fraction of a full turn, a
//! finite number of steps never returns exactly to an earlier basis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qubit::{Bit, BlochVector};
use crate::scalar::Scalar;

/// Step length in radians.
pub const STEP_ARC: f64 = 0.75;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkError {
    #[error("invalid walk initialisation: {0}")]
    InvalidInit(&'static str),
    #[error("walk state violates its invariants: {0}")]
    InvalidState(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkState<T> {
    current: BlochVector<T>,
    heading: BlochVector<T>,
    step_arc: T,
}

impl<T: Scalar> WalkState<T> {
    pub fn current(&self) -> BlochVector<T> {
        self.current
    }

    /// Unit tangent at `current` along the great circle last travelled.
    pub fn heading(&self) -> BlochVector<T> {
        self.heading
    }

    pub fn step_arc(&self) -> T {
        self.step_arc
    }

    /// Start at `(0,0,1)` heading along `(1,0,0)`.
    pub fn canonical() -> Self {
        walk_init(BlochVector::e3(), BlochVector::e1()).expect("canonical pair is orthonormal")
    }

    fn validate(&self) -> Result<(), WalkError> {
        let tol = T::unit_tol();
        if (self.current.norm() - T::one()).abs() > tol {
            return Err(WalkError::InvalidState("current point is not unit"));
        }
        if (self.heading.norm() - T::one()).abs() > tol {
            return Err(WalkError::InvalidState("heading is not unit"));
        }
        if self.current.dot(&self.heading).abs() > tol {
            return Err(WalkError::InvalidState("heading is not tangent"));
        }
        if self.step_arc != T::lit(STEP_ARC) {
            return Err(WalkError::InvalidState("step arc differs from 0.75"));
        }
        Ok(())
    }
}

pub fn walk_init<T: Scalar>(start: BlochVector<T>, initial_heading: BlochVector<T>) -> Result<WalkState<T>, WalkError> {
    let tol = T::unit_tol();
    if !start.is_unit() {
        return Err(WalkError::InvalidInit("start is not a unit vector"));
    }
    if !initial_heading.is_unit() {
        return Err(WalkError::InvalidInit("heading is not a unit vector"));
    }
    if start.dot(&initial_heading).abs() > tol {
        return Err(WalkError::InvalidInit("heading is not orthogonal to start"));
    }
    Ok(WalkState {
        current: start.normalized(),
        heading: initial_heading.normalized(),
        step_arc: T::lit(STEP_ARC),
    })
}

/// Turn bit 1 rotates the heading by +90 degrees (right-handed) about the
/// current point, turn bit 0 by -90 degrees; then advance by the step arc.
pub fn walk_step<T: Scalar>(state: &WalkState<T>, turn_bit: Bit) -> Result<WalkState<T>, WalkError> {
    state.validate()?;
    let c = state.current;
    let turned = c.cross(&state.heading).scale(turn_bit.sign());
    let (sin, cos) = state.step_arc.sin_cos();
    let next = (c.scale(cos) + turned.scale(sin)).normalized();
    let tangent = c.scale(-sin) + turned.scale(cos);
    // Gram-Schmidt against the renormalised point keeps drift bounded.
    let heading = (tangent - next.scale(tangent.dot(&next))).normalized();
    Ok(WalkState {
        current: next,
        heading,
        step_arc: state.step_arc,
    })
}

/// Applies `walk_step` for each bit and returns the visited points
/// `n_1 .. n_len`.
pub fn walk_sequence<T: Scalar>(init: &WalkState<T>, turn_bits: &[Bit]) -> Result<Vec<BlochVector<T>>, WalkError> {
    let mut state = *init;
    let mut points = Vec::with_capacity(turn_bits.len());
    for bit in turn_bits {
        state = walk_step(&state, *bit)?;
        points.push(state.current);
    }
    Ok(points)
}

/// Worst deviations of a trajectory `n_0, n_1, ...` from the walk geometry,
/// computed from the points alone.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WalkResiduals {
    /// max |arccos(n_k . n_{k+1}) - 0.75|
    pub arc: f64,
    /// max |t_in . t_out| of the great-circle tangents at each interior point
    pub turn: f64,
    /// max | |n_k| - 1 |
    pub norm: f64,
}

pub fn walk_residuals(points: &[BlochVector<f64>]) -> WalkResiduals {
    let mut r = WalkResiduals::default();
    for p in points {
        r.norm = r.norm.max((p.norm() - 1.0).abs());
    }
    for w in points.windows(2) {
        r.arc = r.arc.max((w[0].arc_to(&w[1]) - STEP_ARC).abs());
    }
    for w in points.windows(3) {
        let (a, b, c) = (w[0], w[1], w[2]);
        let t_in = (b.scale(a.dot(&b)) - a).normalized();
        let t_out = (c - b.scale(b.dot(&c))).normalized();
        r.turn = r.turn.max(t_in.dot(&t_out).abs());
    }
    r
}
