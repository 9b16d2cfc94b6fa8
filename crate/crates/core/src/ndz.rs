//! Non-detection zone of the SMS loop in the (Q_f, f_0) plane.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{sms_phase, sms_phase_slope, SmsParams};
use crate::error::{Error, Result};
use crate::plant::LoadParams;

/// Half-width of the equilibrium search around `f_g`.
pub const SEARCH_SPAN: f64 = 10.0;
const MARCH_STEP: f64 = 0.01;
const BISECT_TOL: f64 = 1e-6;

/// Load impedance angle at `f` in degrees, positive when inductive:
/// `atan(Q_f (f_0/f - f/f_0))`.
pub fn load_phase(f: f64, load: &LoadParams) -> f64 {
    load_phase_qf(f, load.q_f(), load.f_0())
}

pub fn load_phase_qf(f: f64, q_f: f64, f_0: f64) -> f64 {
    (q_f * (f_0 / f - f / f_0)).atan().to_degrees()
}

/// Slope of [`load_phase_qf`] in degrees per hertz.
fn load_phase_slope(f: f64, q_f: f64, f_0: f64) -> f64 {
    let x = q_f * (f_0 / f - f / f_0);
    let dx = -q_f * (f_0 / (f * f) + 1.0 / f_0);
    (dx / (1.0 + x * x)).to_degrees()
}

/// Load with the given quality factor and resonance, at resistance `r`.
pub fn load_from_qf(q_f: f64, f_0: f64, r: f64) -> Result<LoadParams> {
    let w0 = TAU * f_0;
    LoadParams::new(r, r / (w0 * q_f), q_f / (w0 * r))
}

/// Resonance `f_0` of the load whose phase balances the SMS shift at `f_is`:
/// positive root of `f_0^2 + (f_is tan(theta_sms(f_is)) / Q_f) f_0 - f_is^2 = 0`.
pub fn ndz_resonance_root(f_is: f64, q_f: f64, sms: &SmsParams) -> f64 {
    let b = f_is * sms_phase(f_is, sms).to_radians().tan() / q_f;
    let disc = (b * b + 4.0 * f_is * f_is).sqrt();
    // pick the form that avoids cancellation
    if b >= 0.0 {
        2.0 * f_is * f_is / (b + disc)
    } else {
        0.5 * (disc - b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IslandEquilibrium {
    /// Operating frequency after islanding, `None` when the frequency drifts
    /// past the search span.
    pub f_island: Option<f64>,
    /// Whether the reached root attracts nearby trajectories.
    pub stable: bool,
    /// Whether the pre-island frequency `f_g` is itself a stable balance.
    pub nominal_stable: bool,
    pub inside_ndz: bool,
}

/// Net phase mismatch in degrees; the island frequency rises while it is positive.
fn mismatch(f: f64, q_f: f64, f_0: f64, sms: &SmsParams) -> f64 {
    sms_phase(f, sms) + load_phase_qf(f, q_f, f_0)
}

fn mismatch_slope(f: f64, q_f: f64, f_0: f64, sms: &SmsParams) -> f64 {
    sms_phase_slope(f, sms) + load_phase_slope(f, q_f, f_0)
}

/// Operating point reached from `f_g` once the grid is lost.
///
/// The frequency moves in the direction of the phase mismatch until the SMS
/// shift and the load angle balance; that root is refined by bisection.
pub fn island_equilibrium(
    load: &LoadParams,
    sms: &SmsParams,
    band: (f64, f64),
) -> IslandEquilibrium {
    equilibrium_qf(load.q_f(), load.f_0(), sms, band)
}

pub fn equilibrium_qf(q_f: f64, f_0: f64, sms: &SmsParams, band: (f64, f64)) -> IslandEquilibrium {
    let inside = |f: f64| f >= band.0 && f <= band.1;
    let f_g = sms.f_g;
    let nominal_stable = sms_phase_slope(f_g, sms) < -load_phase_slope(f_g, q_f, f_0);
    if sms.theta_m == 0.0 {
        return IslandEquilibrium {
            f_island: Some(f_0),
            stable: true,
            nominal_stable,
            inside_ndz: inside(f_0),
        };
    }

    let g = |f: f64| mismatch(f, q_f, f_0, sms);
    let g0 = g(f_g);
    let dir = if g0 > 0.0 {
        1.0
    } else if g0 < 0.0 {
        -1.0
    } else if nominal_stable {
        return IslandEquilibrium {
            f_island: Some(f_g),
            stable: true,
            nominal_stable,
            inside_ndz: inside(f_g),
        };
    } else {
        // balanced but repelling: the SMS sign convention pushes upward
        1.0
    };

    let mut prev = f_g;
    let steps = (SEARCH_SPAN / MARCH_STEP).round() as usize;
    for k in 1..=steps {
        let f = f_g + dir * MARCH_STEP * k as f64;
        if dir * g(f) <= 0.0 {
            let (mut lo, mut hi) = (prev, f);
            while (hi - lo).abs() > BISECT_TOL {
                let mid = 0.5 * (lo + hi);
                if dir * g(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let root = 0.5 * (lo + hi);
            return IslandEquilibrium {
                f_island: Some(root),
                stable: mismatch_slope(root, q_f, f_0, sms) < 0.0,
                nominal_stable,
                inside_ndz: inside(root),
            };
        }
        prev = f;
    }
    IslandEquilibrium {
        f_island: None,
        stable: false,
        nominal_stable,
        inside_ndz: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NdzPoint {
    pub q_f: f64,
    pub f_0: f64,
    pub f_island: Option<f64>,
    pub inside_ndz: bool,
}

/// Inclusive grid axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, points: usize) -> Self {
        Self { min, max, points }
    }

    fn validate(&self, name: &'static str) -> Result<()> {
        if self.points == 0
            || !(self.max >= self.min)
            || !self.min.is_finite()
            || !self.max.is_finite()
        {
            return Err(Error::EmptyRange(name));
        }
        if self.points > 1 && self.max == self.min {
            return Err(Error::EmptyRange(name));
        }
        Ok(())
    }

    pub fn value(&self, k: usize) -> f64 {
        if self.points == 1 {
            self.min
        } else {
            self.min + (self.max - self.min) * k as f64 / (self.points - 1) as f64
        }
    }
}

pub const DEFAULT_QF_AXIS: Axis = Axis {
    min: 0.5,
    max: 8.1,
    points: 100,
};
pub const DEFAULT_F0_AXIS: Axis = Axis {
    min: 57.0,
    max: 63.0,
    points: 100,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdzMap {
    pub q_f: Axis,
    pub f_0: Axis,
    /// Row-major by `q_f`.
    pub points: Vec<NdzPoint>,
    /// Points where `inside_ndz` flips along `f_0`, refined to `1e-6` Hz.
    pub boundary: Vec<(f64, f64)>,
}

impl NdzMap {
    pub fn cell(&self, i_qf: usize, i_f0: usize) -> &NdzPoint {
        &self.points[i_qf * self.f_0.points + i_f0]
    }
}

type Row = (Vec<NdzPoint>, Vec<(f64, f64)>);

/// Evaluate the island equilibrium over a `(Q_f, f_0)` grid; rows run in parallel.
pub fn ndz_map(q_f: Axis, f_0: Axis, sms: &SmsParams, band: (f64, f64)) -> Result<NdzMap> {
    q_f.validate("q_f")?;
    f_0.validate("f_0")?;
    if q_f.min <= 0.0 || f_0.min <= 0.0 {
        return Err(Error::invalid("ndz range", "q_f and f_0 must be positive"));
    }
    if !(band.0 < band.1) {
        return Err(Error::EmptyRange("band"));
    }
    let rows: Vec<Row> = (0..q_f.points)
        .into_par_iter()
        .map(|i| {
            let qf = q_f.value(i);
            let row: Vec<NdzPoint> = (0..f_0.points)
                .map(|j| {
                    let f0 = f_0.value(j);
                    let eq = equilibrium_qf(qf, f0, sms, band);
                    NdzPoint {
                        q_f: qf,
                        f_0: f0,
                        f_island: eq.f_island,
                        inside_ndz: eq.inside_ndz,
                    }
                })
                .collect();
            let edges = row_boundary(qf, &row, sms, band);
            (row, edges)
        })
        .collect();
    let mut points = Vec::with_capacity(q_f.points * f_0.points);
    let mut boundary = Vec::new();
    for (row, edges) in rows {
        points.extend(row);
        boundary.extend(edges);
    }
    Ok(NdzMap {
        q_f,
        f_0,
        points,
        boundary,
    })
}

fn row_boundary(q_f: f64, row: &[NdzPoint], sms: &SmsParams, band: (f64, f64)) -> Vec<(f64, f64)> {
    let mut edges = Vec::new();
    for w in row.windows(2) {
        if w[0].inside_ndz == w[1].inside_ndz {
            continue;
        }
        let f0 = if sms.theta_m == 0.0 {
            // passive only: the zone is the relay band itself
            if w[0].f_0 <= band.0 && band.0 <= w[1].f_0 {
                band.0
            } else {
                band.1
            }
        } else {
            let inside = |f0: f64| equilibrium_qf(q_f, f0, sms, band).inside_ndz;
            let (mut lo, mut hi) = (w[0].f_0, w[1].f_0);
            let lo_inside = w[0].inside_ndz;
            while hi - lo > BISECT_TOL {
                let mid = 0.5 * (lo + hi);
                if inside(mid) == lo_inside {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        edges.push((q_f, f0));
    }
    edges
}
