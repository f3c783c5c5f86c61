//! Three-phase signal types, the amplitude-invariant abc/dq0 (Park) transform
//! and its inverse, and sinusoidal reference synthesis.
//!
//! The d axis is cosine-aligned with the transform angle: a balanced set
//! `A·cos(θ + φ)` maps to `d = A·cos φ`, `q = A·sin φ`. References are
//! synthesized with sines, so a reference of magnitude `V` at angle `θ` lands
//! on `(0, −V, 0)` in the same frame.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

const PHASE_SHIFT: f64 = 2.0 * PI / 3.0;

/// Instantaneous values of a three-phase quantity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ThreePhase {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// A three-phase quantity projected onto a rotating frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Dq0 {
    pub d: f64,
    pub q: f64,
    pub zero: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("reference magnitude must be non-negative, got {0}")]
    NegativeMagnitude(f64),
}

impl ThreePhase {
    pub const ZERO: ThreePhase = ThreePhase {
        a: 0.0,
        b: 0.0,
        c: 0.0,
    };

    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn splat(value: f64) -> Self {
        Self::new(value, value, value)
    }

    /// Sum of the component-wise products.
    pub fn dot(&self, other: &ThreePhase) -> f64 {
        self.a * other.a + self.b * other.b + self.c * other.c
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(f(self.a), f(self.b), f(self.c))
    }

    pub fn max_abs(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }
}

impl Dq0 {
    pub const ZERO: Dq0 = Dq0 {
        d: 0.0,
        q: 0.0,
        zero: 0.0,
    };

    pub const fn new(d: f64, q: f64, zero: f64) -> Self {
        Self { d, q, zero }
    }

    /// Magnitude of the dq vector, ignoring the zero-sequence channel.
    pub fn magnitude(&self) -> f64 {
        self.d.hypot(self.q)
    }
}

macro_rules! impl_componentwise {
    ($ty:ident { $($field:ident),+ }) => {
        impl Add for $ty {
            type Output = $ty;
            fn add(self, rhs: $ty) -> $ty {
                $ty { $($field: self.$field + rhs.$field),+ }
            }
        }

        impl Sub for $ty {
            type Output = $ty;
            fn sub(self, rhs: $ty) -> $ty {
                $ty { $($field: self.$field - rhs.$field),+ }
            }
        }

        impl Mul<f64> for $ty {
            type Output = $ty;
            fn mul(self, rhs: f64) -> $ty {
                $ty { $($field: self.$field * rhs),+ }
            }
        }

        impl Neg for $ty {
            type Output = $ty;
            fn neg(self) -> $ty {
                $ty { $($field: -self.$field),+ }
            }
        }
    };
}

impl_componentwise!(ThreePhase { a, b, c });
impl_componentwise!(Dq0 { d, q, zero });

/// Park transform with 2/3 scaling, so `|dq|` equals the phase peak of a
/// balanced set.
pub fn abc_to_dq0(x: ThreePhase, theta: f64) -> Dq0 {
    let (sa, ca) = theta.sin_cos();
    let (sb, cb) = (theta - PHASE_SHIFT).sin_cos();
    let (sc, cc) = (theta + PHASE_SHIFT).sin_cos();
    Dq0 {
        d: 2.0 / 3.0 * (x.a * ca + x.b * cb + x.c * cc),
        q: -2.0 / 3.0 * (x.a * sa + x.b * sb + x.c * sc),
        zero: (x.a + x.b + x.c) / 3.0,
    }
}

/// Exact inverse of [`abc_to_dq0`] at the same angle.
pub fn dq0_to_abc(x: Dq0, theta: f64) -> ThreePhase {
    let (sa, ca) = theta.sin_cos();
    let (sb, cb) = (theta - PHASE_SHIFT).sin_cos();
    let (sc, cc) = (theta + PHASE_SHIFT).sin_cos();
    ThreePhase {
        a: x.d * ca - x.q * sa + x.zero,
        b: x.d * cb - x.q * sb + x.zero,
        c: x.d * cc - x.q * sc + x.zero,
    }
}

/// Balanced positive-sequence sine set of magnitude `v_mag` at angle `theta`.
pub fn synthesize_reference(v_mag: f64, theta: f64) -> Result<ThreePhase, TransformError> {
    if v_mag < 0.0 || v_mag.is_nan() {
        return Err(TransformError::NegativeMagnitude(v_mag));
    }
    Ok(ThreePhase {
        a: v_mag * theta.sin(),
        b: v_mag * (theta - PHASE_SHIFT).sin(),
        c: v_mag * (theta + PHASE_SHIFT).sin(),
    })
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let wrapped = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if wrapped >= TAU {
        0.0
    } else {
        wrapped
    }
}
