//! Constant-current d-q controller with decoupling and the phase-shift
//! transformation through which the SMS angle enters the current references.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::plant::{DC_LINK_VOLTAGE, FILTER_INDUCTANCE};
use crate::signals::DqVector;

/// Current-loop bandwidth used for the default gains.
pub const CURRENT_LOOP_BANDWIDTH_HZ: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PiGains {
    /// V/A
    pub kp: f64,
    /// V/(A s)
    pub ki: f64,
}

impl PiGains {
    /// Pole placement for an `l_filter` plant: `kp = w_bw L`, and `ki` chosen
    /// so that `L s^2 + kp s + ki` has damping 0.7.
    pub fn for_filter(l_filter: f64, bandwidth_hz: f64) -> Self {
        let kp = TAU * bandwidth_hz * l_filter;
        let zeta = 0.7;
        let wn = kp / (2.0 * zeta * l_filter);
        Self {
            kp,
            ki: l_filter * wn * wn,
        }
    }
}

impl Default for PiGains {
    fn default() -> Self {
        Self::for_filter(FILTER_INDUCTANCE, CURRENT_LOOP_BANDWIDTH_HZ)
    }
}

/// Active/reactive current commands and the phase-shift command.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CurrentRefs {
    pub i_dref: f64,
    pub i_qref: f64,
    /// radians
    pub theta_f: f64,
}

/// Rotate the current references by `theta_f`.
pub fn rotate_refs(refs: &CurrentRefs) -> (f64, f64) {
    if refs.theta_f == 0.0 {
        return (refs.i_dref, refs.i_qref);
    }
    let (s, c) = refs.theta_f.sin_cos();
    (
        c * refs.i_dref - s * refs.i_qref,
        s * refs.i_dref + c * refs.i_qref,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    /// PI outputs.
    pub v_dref: f64,
    pub v_qref: f64,
    /// Terminal voltage command after feed-forward and decoupling.
    pub v_sd: f64,
    pub v_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub gains: PiGains,
    pub l_filter: f64,
    /// Integrated current error, A s.
    pub int_d: f64,
    pub int_q: f64,
    /// Bound on `ki * integral`, volts.
    pub integral_limit: f64,
}

impl ControllerState {
    pub fn new(gains: PiGains, l_filter: f64) -> Self {
        Self {
            gains,
            l_filter,
            int_d: 0.0,
            int_q: 0.0,
            integral_limit: DC_LINK_VOLTAGE,
        }
    }

    pub fn reset(&mut self) {
        self.int_d = 0.0;
        self.int_q = 0.0;
    }

    /// One sample of the current regulator.
    pub fn control_step(
        &mut self,
        meas_i: &DqVector,
        meas_v: &DqVector,
        refs: &CurrentRefs,
        omega: f64,
        dt: f64,
    ) -> ControlOutput {
        let (id_star, iq_star) = rotate_refs(refs);
        let err_d = id_star - meas_i.d;
        let err_q = iq_star - meas_i.q;

        let ki = self.gains.ki;
        let bound = if ki > 0.0 {
            self.integral_limit / ki
        } else {
            f64::INFINITY
        };
        self.int_d = (self.int_d + err_d * dt).clamp(-bound, bound);
        self.int_q = (self.int_q + err_q * dt).clamp(-bound, bound);

        let v_dref = self.gains.kp * err_d + ki * self.int_d;
        let v_qref = self.gains.kp * err_q + ki * self.int_q;

        let wl = self.l_filter * omega;
        ControlOutput {
            v_dref,
            v_qref,
            v_sd: v_dref + meas_v.d - wl * meas_i.q,
            v_sq: v_qref + meas_v.q + wl * meas_i.d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Modulation {
    pub m: f64,
    /// radians
    pub phi: f64,
    pub overmodulated: bool,
}

/// Modulation index (normalized by half the DC link) and angle of a
/// d-q voltage command.
pub fn modulation(v_d: f64, v_q: f64) -> Modulation {
    modulation_with_dc(v_d, v_q, DC_LINK_VOLTAGE)
}

pub fn modulation_with_dc(v_d: f64, v_q: f64, v_dc: f64) -> Modulation {
    let m = v_d.hypot(v_q) / (0.5 * v_dc);
    let phi = if v_d == 0.0 && v_q == 0.0 {
        0.0
    } else {
        v_q.atan2(v_d)
    };
    Modulation {
        m,
        phi,
        overmodulated: m > 1.0,
    }
}
