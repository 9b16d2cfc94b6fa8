//! Three-phase quantities and the amplitude-invariant Park transform.
//!
//! The rotating frame is defined by `x_alpha + j x_beta = (d + j q) e^{j theta}`,
//! so a balanced set `A cos(phi)` yields `d = A cos(phi - theta)` and
//! `q = A sin(phi - theta)`. The q axis sits 90 degrees ahead of d. With this
//! orientation the filter-inductor cross-coupling terms come out as
//! `-L w i_q` on d and `+L w i_d` on q, which is what the current controller
//! decouples.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SHIFT: f64 = 2.0 * PI / 3.0;

/// Instantaneous per-phase values (volts or amperes).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ThreePhase {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ThreePhase {
    pub const ZERO: ThreePhase = ThreePhase {
        a: 0.0,
        b: 0.0,
        c: 0.0,
    };

    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    pub fn from_array(x: [f64; 3]) -> Self {
        Self::new(x[0], x[1], x[2])
    }

    pub fn zero_sequence(&self) -> f64 {
        (self.a + self.b + self.c) / 3.0
    }

    /// Sum of per-phase products, i.e. instantaneous three-phase power when
    /// `self` is a voltage and `other` a current.
    pub fn dot(&self, other: &ThreePhase) -> f64 {
        self.a * other.a + self.b * other.b + self.c * other.c
    }

    pub fn max_abs(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite()
    }
}

impl Add for ThreePhase {
    type Output = ThreePhase;
    fn add(self, rhs: ThreePhase) -> ThreePhase {
        ThreePhase::new(self.a + rhs.a, self.b + rhs.b, self.c + rhs.c)
    }
}

impl Sub for ThreePhase {
    type Output = ThreePhase;
    fn sub(self, rhs: ThreePhase) -> ThreePhase {
        ThreePhase::new(self.a - rhs.a, self.b - rhs.b, self.c - rhs.c)
    }
}

impl Mul<f64> for ThreePhase {
    type Output = ThreePhase;
    fn mul(self, k: f64) -> ThreePhase {
        ThreePhase::new(self.a * k, self.b * k, self.c * k)
    }
}

impl Neg for ThreePhase {
    type Output = ThreePhase;
    fn neg(self) -> ThreePhase {
        self * -1.0
    }
}

/// Rotating-frame components together with the frame angle they refer to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DqVector {
    pub d: f64,
    pub q: f64,
    pub theta: f64,
}

impl DqVector {
    pub fn new(d: f64, q: f64, theta: f64) -> Self {
        Self { d, q, theta }
    }

    pub fn magnitude(&self) -> f64 {
        self.d.hypot(self.q)
    }

    /// Same space vector expressed in a frame advanced by `delta`.
    pub fn rotate_frame(&self, delta: f64) -> DqVector {
        let (s, c) = delta.sin_cos();
        DqVector {
            d: self.d * c + self.q * s,
            q: -self.d * s + self.q * c,
            theta: self.theta + delta,
        }
    }
}

/// `amplitude * cos(2 pi f t + phase)` on phase a, with b and c lagging by
/// 120 and 240 degrees.
pub fn synth_balanced(amplitude: f64, frequency: f64, phase: f64, t: f64) -> Result<ThreePhase> {
    if !amplitude.is_finite() {
        return Err(Error::NonFinite("amplitude"));
    }
    if !frequency.is_finite() {
        return Err(Error::NonFinite("frequency"));
    }
    if !phase.is_finite() {
        return Err(Error::NonFinite("phase"));
    }
    if !t.is_finite() {
        return Err(Error::NonFinite("t"));
    }
    if frequency <= 0.0 {
        return Err(Error::invalid("frequency", "must be positive"));
    }
    Ok(balanced_at_angle(amplitude, TAU * frequency * t + phase))
}

/// Balanced set whose phase-a angle is `angle`.
pub fn balanced_at_angle(amplitude: f64, angle: f64) -> ThreePhase {
    ThreePhase::new(
        amplitude * angle.cos(),
        amplitude * (angle - SHIFT).cos(),
        amplitude * (angle + SHIFT).cos(),
    )
}

/// Amplitude-invariant Park transform (abc -> dq at angle `theta`).
pub fn park(x: &ThreePhase, theta: f64) -> DqVector {
    let (s0, c0) = theta.sin_cos();
    let (s1, c1) = (theta - SHIFT).sin_cos();
    let (s2, c2) = (theta + SHIFT).sin_cos();
    let k = 2.0 / 3.0;
    DqVector {
        d: k * (x.a * c0 + x.b * c1 + x.c * c2),
        q: -k * (x.a * s0 + x.b * s1 + x.c * s2),
        theta,
    }
}

/// Inverse of [`park`]; the result carries no zero-sequence component.
pub fn inverse_park(v: &DqVector) -> ThreePhase {
    let theta = v.theta;
    let (s0, c0) = theta.sin_cos();
    let (s1, c1) = (theta - SHIFT).sin_cos();
    let (s2, c2) = (theta + SHIFT).sin_cos();
    ThreePhase::new(
        v.d * c0 - v.q * s0,
        v.d * c1 - v.q * s1,
        v.d * c2 - v.q * s2,
    )
}

/// Instantaneous three-phase power from dq components of the same frame.
pub fn dq_power(v: &DqVector, i: &DqVector) -> f64 {
    1.5 * (v.d * i.d + v.q * i.q)
}

/// Wrap an angle into `[0, 2 pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    theta.rem_euclid(TAU)
}
