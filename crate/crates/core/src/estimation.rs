//! PCC measurement chain: SRF-PLL, per-cycle frequency, ROCOF and voltage
//! magnitude.

use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::signals::{park, wrap_angle, DqVector, ThreePhase};

/// Loop parameters of the synchronous-reference-frame PLL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PllConfig {
    pub f_nom: f64,
    /// Hz per unit of normalized q error.
    pub kp: f64,
    /// Hz/s per unit of normalized q error.
    pub ki: f64,
    /// Magnitudes below this (volts) count as no signal.
    pub v_floor: f64,
}

impl PllConfig {
    /// Second-order loop `s^2 + 2 zeta wn s + wn^2` on the phase error.
    pub fn with_natural_frequency(f_nom: f64, wn: f64, zeta: f64) -> Self {
        Self {
            f_nom,
            kp: 2.0 * zeta * wn / TAU,
            ki: wn * wn / TAU,
            v_floor: 1.0,
        }
    }
}

impl Default for PllConfig {
    /// 15 Hz natural frequency, lightly underdamped (about 30 Hz bandwidth).
    fn default() -> Self {
        Self::with_natural_frequency(60.0, 2.0 * PI * 15.0, 0.9)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PllState {
    pub theta: f64,
    pub f_est: f64,
    /// Integral branch of the loop filter, Hz.
    pub loop_integral: f64,
    pub v_dq: DqVector,
    pub lock_lost: bool,
    pub out_of_range: bool,
    unlocked_for: f64,
}

#[derive(Debug, Clone)]
pub struct Pll {
    config: PllConfig,
    state: PllState,
}

impl Pll {
    pub fn new(config: PllConfig) -> Self {
        Self::locked_at(config, 0.0)
    }

    /// PLL already locked to a nominal-frequency signal with phase `theta`.
    pub fn locked_at(config: PllConfig, theta: f64) -> Self {
        Self {
            state: PllState {
                theta: wrap_angle(theta),
                f_est: config.f_nom,
                loop_integral: 0.0,
                v_dq: DqVector::default(),
                lock_lost: false,
                out_of_range: false,
                unlocked_for: 0.0,
            },
            config,
        }
    }

    pub fn state(&self) -> &PllState {
        &self.state
    }

    pub fn config(&self) -> &PllConfig {
        &self.config
    }

    pub fn omega(&self) -> f64 {
        TAU * self.state.f_est
    }

    /// Measure `v` at the current angle, update the loop and advance the angle
    /// by one sample. Returns the measured voltage vector in the frame that
    /// was used for it.
    pub fn step(&mut self, v: &ThreePhase, dt: f64) -> DqVector {
        let cfg = self.config;
        let s = &mut self.state;
        let dq = park(v, s.theta);
        let mag = dq.magnitude();

        let err = if mag > cfg.v_floor { dq.q / mag } else { 0.0 };
        s.loop_integral += cfg.ki * err * dt;
        s.f_est = cfg.f_nom + cfg.kp * err + s.loop_integral;
        s.v_dq = dq;

        let cycle = 1.0 / cfg.f_nom;
        let unlocked = mag <= cfg.v_floor || dq.d <= 0.0 || dq.q.abs() > 0.5 * dq.d;
        s.unlocked_for = if unlocked { s.unlocked_for + dt } else { 0.0 };
        s.lock_lost = mag <= cfg.v_floor || s.unlocked_for > 5.0 * cycle;
        s.out_of_range = !(40.0..=80.0).contains(&s.f_est);

        s.theta = wrap_angle(s.theta + TAU * s.f_est * dt);
        dq
    }
}

/// Moving average of the PLL frequency over a whole number of nominal cycles.
#[derive(Debug, Clone)]
pub struct CycleMeter {
    samples: VecDeque<f64>,
    len: usize,
    sum: f64,
    pushes: usize,
}

impl CycleMeter {
    /// Average over the previous nominal cycle.
    pub fn new(f_nom: f64, dt: f64, initial: f64) -> Self {
        Self::with_cycles(f_nom, 1.0, dt, initial)
    }

    pub fn with_cycles(f_nom: f64, cycles: f64, dt: f64, initial: f64) -> Self {
        let len = ((cycles / (f_nom * dt)).round() as usize).max(1);
        Self {
            samples: std::iter::repeat_n(initial, len).collect(),
            len,
            sum: initial * len as f64,
            pushes: 0,
        }
    }

    pub fn push(&mut self, f: f64) -> f64 {
        let old = self.samples.pop_front().unwrap_or(f);
        self.samples.push_back(f);
        self.sum += f - old;
        self.pushes += 1;
        if self.pushes.is_multiple_of(self.len) {
            self.sum = self.samples.iter().sum();
        }
        self.value()
    }

    pub fn value(&self) -> f64 {
        self.sum / self.len as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RocofConfig {
    pub f_nom: f64,
    /// Regression window in nominal cycles (2 to 50).
    pub window_cycles: f64,
    /// Cut-off of the first-order low-pass applied to the slope.
    pub cutoff_hz: f64,
}

impl Default for RocofConfig {
    fn default() -> Self {
        Self {
            f_nom: 60.0,
            window_cycles: 16.0,
            cutoff_hz: 10.0,
        }
    }
}

impl RocofConfig {
    pub fn window_seconds(&self) -> f64 {
        self.window_cycles / self.f_nom
    }
}

/// Least-squares slope of frequency over a sliding window followed by a
/// first-order low-pass. Samples are assumed uniformly spaced by `dt`, which
/// lets the slope be updated in constant time from running sums.
#[derive(Debug, Clone)]
pub struct RocofState {
    pub config: RocofConfig,
    pub f_history: VecDeque<(f64, f64)>,
    pub df_dt_raw: f64,
    pub df_dt_filtered: f64,
    pub v_pcc_pu: f64,
    t: f64,
    /// Sum of `f - f_nom` over the window.
    s0: f64,
    /// Sum of `k (f - f_nom)` with `k` the position in the window.
    s1: f64,
    since_refresh: usize,
}

impl RocofState {
    pub fn new(config: RocofConfig) -> Self {
        let window_cycles = config.window_cycles.clamp(2.0, 50.0);
        Self {
            config: RocofConfig {
                window_cycles,
                ..config
            },
            f_history: VecDeque::new(),
            df_dt_raw: 0.0,
            df_dt_filtered: 0.0,
            v_pcc_pu: 0.0,
            t: 0.0,
            s0: 0.0,
            s1: 0.0,
            since_refresh: 0,
        }
    }

    fn capacity(&self, dt: f64) -> usize {
        (self.config.window_seconds() / dt).round() as usize + 1
    }

    fn refresh_sums(&mut self) {
        let f_nom = self.config.f_nom;
        let (mut s0, mut s1) = (0.0, 0.0);
        for (k, &(_, f)) in self.f_history.iter().enumerate() {
            s0 += f - f_nom;
            s1 += k as f64 * (f - f_nom);
        }
        self.s0 = s0;
        self.s1 = s1;
        self.since_refresh = 0;
    }

    /// Seed the window with a constant frequency ending at time `t`.
    pub fn prefill(&mut self, f: f64, t: f64, dt: f64) {
        self.f_history.clear();
        let n = self.capacity(dt);
        for k in 0..n {
            self.f_history.push_back((t - (n - 1 - k) as f64 * dt, f));
        }
        self.refresh_sums();
        self.t = t;
        self.df_dt_raw = 0.0;
        self.df_dt_filtered = 0.0;
    }

    pub fn rocof_step(&mut self, f_est: f64, v_pcc_pu: f64, dt: f64) -> f64 {
        self.t = match self.f_history.back() {
            Some(&(t_last, _)) => t_last + dt,
            None => self.t,
        };
        let cap = self.capacity(dt);
        let y = f_est - self.config.f_nom;
        self.f_history.push_back((self.t, f_est));
        if self.f_history.len() > cap {
            let (_, f_old) = self.f_history.pop_front().unwrap_or_default();
            let y_old = f_old - self.config.f_nom;
            self.s1 += -(self.s0 - y_old) + (cap - 1) as f64 * y;
            self.s0 += y - y_old;
        } else {
            self.s1 += (self.f_history.len() - 1) as f64 * y;
            self.s0 += y;
        }
        self.since_refresh += 1;
        if self.f_history.len() > cap || self.since_refresh >= cap {
            while self.f_history.len() > cap {
                self.f_history.pop_front();
            }
            self.refresh_sums();
        }

        let n = self.f_history.len() as f64;
        self.df_dt_raw = if n < 2.0 {
            0.0
        } else {
            (self.s1 - 0.5 * (n - 1.0) * self.s0) / (dt * n * (n * n - 1.0) / 12.0)
        };
        let tau = 1.0 / (TAU * self.config.cutoff_hz);
        let a = 1.0 - (-dt / tau).exp();
        self.df_dt_filtered += a * (self.df_dt_raw - self.df_dt_filtered);
        self.v_pcc_pu = v_pcc_pu;
        self.df_dt_filtered
    }
}

/// Ordinary least-squares slope of `(t, y)` samples, centred for accuracy.
pub fn regression_slope(samples: &VecDeque<(f64, f64)>) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let (st, sy) = samples
        .iter()
        .fold((0.0, 0.0), |(a, b), &(t, y)| (a + t, b + y));
    let (tm, ym) = (st / nf, sy / nf);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(t, y) in samples {
        let dx = t - tm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Voltage magnitude in per unit of the rated phase peak.
pub fn voltage_pu(v_dq: &DqVector, rated_peak: f64) -> f64 {
    v_dq.magnitude() / rated_peak
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::balanced_at_angle;

    const DT: f64 = 5e-5;

    fn run_pll(pll: &mut Pll, f_of_t: impl Fn(f64) -> f64, t0: f64, t1: f64, phase: &mut f64) {
        let mut t = t0;
        while t < t1 {
            let v = balanced_at_angle(391.9, *phase);
            pll.step(&v, DT);
            *phase += TAU * f_of_t(t) * DT;
            t += DT;
        }
    }

    #[test]
    fn locks_to_nominal() {
        let mut pll = Pll::new(PllConfig::default());
        let mut phase = 0.7;
        run_pll(&mut pll, |_| 60.0, 0.0, 0.1, &mut phase);
        assert!((pll.state().f_est - 60.0).abs() < 0.01);
        assert!(!pll.state().lock_lost);
    }

    #[test]
    fn tracks_frequency_step() {
        let mut pll = Pll::new(PllConfig::default());
        let mut phase = 0.0;
        run_pll(&mut pll, |_| 60.0, 0.0, 0.2, &mut phase);
        let mut settle = None;
        let mut t = 0.2;
        while t < 0.5 {
            let v = balanced_at_angle(391.9, phase);
            pll.step(&v, DT);
            phase += TAU * 60.5 * DT;
            t += DT;
            let err = (pll.state().f_est - 60.5).abs();
            if err >= 0.05 {
                settle = None;
            } else if settle.is_none() {
                settle = Some(t - 0.2);
            }
        }
        let settle = settle.expect("never settled");
        assert!(settle < 0.06, "settling time {settle}");
    }

    #[test]
    fn zero_input_flags_lock_loss() {
        let mut pll = Pll::new(PllConfig::default());
        pll.step(&ThreePhase::ZERO, DT);
        assert!(pll.state().lock_lost);
    }

    #[test]
    fn sustained_quadrature_flags_lock_loss() {
        let mut pll = Pll::new(PllConfig {
            kp: 0.0,
            ki: 0.0,
            ..PllConfig::default()
        });
        // signal 90 degrees ahead of a loop that cannot move
        let mut phase = std::f64::consts::FRAC_PI_2;
        run_pll(&mut pll, |_| 60.0, 0.0, 0.05, &mut phase);
        assert!(!pll.state().lock_lost);
        run_pll(&mut pll, |_| 60.0, 0.05, 0.1, &mut phase);
        assert!(pll.state().lock_lost);
    }

    #[test]
    fn out_of_range_flag() {
        let mut pll = Pll::new(PllConfig::default());
        let mut phase = 0.0;
        run_pll(&mut pll, |_| 60.0, 0.0, 0.05, &mut phase);
        assert!(!pll.state().out_of_range);
        let mut far = Pll::new(PllConfig {
            f_nom: 85.0,
            ..PllConfig::default()
        });
        far.step(&balanced_at_angle(100.0, 0.0), DT);
        assert!(far.state().out_of_range);
    }

    #[test]
    fn constant_frequency_gives_zero_rocof() {
        let mut r = RocofState::new(RocofConfig::default());
        for _ in 0..10_000 {
            r.rocof_step(60.0, 1.0, DT);
        }
        assert!(r.df_dt_filtered.abs() < 1e-6);
    }

    #[test]
    fn ramp_recovers_slope() {
        let mut r = RocofState::new(RocofConfig::default());
        for k in 0..10_000 {
            r.rocof_step(60.0 + k as f64 * DT, 1.0, DT);
        }
        assert!((r.df_dt_filtered - 1.0).abs() < 0.01);
        assert!((r.df_dt_raw - 1.0).abs() < 1e-6);
    }

    #[test]
    fn window_span_respected() {
        let mut r = RocofState::new(RocofConfig::default());
        for _ in 0..20_000 {
            r.rocof_step(60.0, 1.0, DT);
        }
        let span = r.f_history.back().unwrap().0 - r.f_history.front().unwrap().0;
        assert!((span - r.config.window_seconds()).abs() <= DT);
    }

    #[test]
    fn running_sums_match_direct_regression() {
        let mut r = RocofState::new(RocofConfig {
            window_cycles: 4.0,
            ..RocofConfig::default()
        });
        let mut phase = 0.0f64;
        for k in 0..20_000 {
            phase += 0.37;
            let f = 60.0 + 0.3 * phase.sin() + 1e-3 * k as f64;
            r.rocof_step(f, 1.0, DT);
            if k % 997 == 0 {
                let direct = regression_slope(&r.f_history);
                assert!(
                    (r.df_dt_raw - direct).abs() < 1e-6 * (1.0 + direct.abs()),
                    "{k}"
                );
            }
        }
    }

    #[test]
    fn window_clamped_to_allowed_range() {
        let r = RocofState::new(RocofConfig {
            window_cycles: 100.0,
            ..RocofConfig::default()
        });
        assert_eq!(r.config.window_cycles, 50.0);
    }

    #[test]
    fn cycle_meter_averages_last_cycle() {
        let mut m = CycleMeter::new(60.0, DT, 60.0);
        for _ in 0..333 {
            m.push(61.0);
        }
        assert!((m.value() - 61.0).abs() < 1e-9);
    }

    #[test]
    fn rated_voltage_is_one_pu() {
        let v = park(&balanced_at_angle(391.9, 0.3), 0.1);
        assert!((voltage_pu(&v, 480.0 * 2f64.sqrt() / 3f64.sqrt()) - 1.0).abs() < 0.01);
    }
}
