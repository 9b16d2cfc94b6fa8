//! Circuit model of the test system: a Thevenin grid source behind `R_g`/`L_g`
//! and a breaker, a parallel RLC load at the PCC, and one or more inverters
//! represented by their terminal voltage behind the filter inductance.
//!
//! Each phase is an independent linear ODE `x' = A x + B u` with state
//! `[v_pcc, i_load_l, i_grid, i_aux_l, i_inv_1 .. i_inv_n]` and inputs
//! `[e_grid, v_inv_1 .. v_inv_n]`. It is advanced with the trapezoidal rule;
//! the inverter voltage is held constant across a step, the grid EMF is
//! evaluated at both ends. The discrete matrices are rebuilt whenever the
//! topology changes (breaker, auxiliary load, inverter shutdown).

use std::f64::consts::{SQRT_2, TAU};

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::{balanced_at_angle, ThreePhase};

/// Filter inductance of the inverter (2.1 mH).
pub const FILTER_INDUCTANCE: f64 = 2.1e-3;
/// Rated DG output (100 kW).
pub const RATED_POWER: f64 = 100e3;
/// DC-link voltage (900 V).
pub const DC_LINK_VOLTAGE: f64 = 900.0;

const V_IDX: usize = 0;
const IL_IDX: usize = 1;
const IG_IDX: usize = 2;
const IAUX_IDX: usize = 3;
const INV_BASE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    /// Line-to-line RMS voltage.
    pub v_ll: f64,
    pub f_g: f64,
    pub r_g: f64,
    pub l_g: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            v_ll: 480.0,
            f_g: 60.0,
            r_g: 0.012,
            l_g: 0.3056e-3,
        }
    }
}

impl GridParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("grid.v_ll", self.v_ll),
            ("grid.f_g", self.f_g),
            ("grid.r_g", self.r_g),
            ("grid.l_g", self.l_g),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid(name, "must be positive and finite"));
            }
        }
        if !(40.0..=70.0).contains(&self.f_g) {
            return Err(Error::invalid("grid.f_g", "must lie within [40, 70] Hz"));
        }
        Ok(())
    }

    /// Phase-to-neutral peak voltage.
    pub fn phase_peak(&self) -> f64 {
        self.v_ll * SQRT_2 / 3f64.sqrt()
    }

    pub fn omega(&self) -> f64 {
        TAU * self.f_g
    }

    /// Peak phase current that delivers `power` at rated voltage and unity pf.
    pub fn rated_current(&self, power: f64) -> f64 {
        2.0 * power / (3.0 * self.phase_peak())
    }
}

/// Parallel RLC load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadParams {
    pub r: f64,
    pub l: f64,
    pub c: f64,
}

impl LoadParams {
    pub fn new(r: f64, l: f64, c: f64) -> Result<Self> {
        let load = Self { r, l, c };
        load.validate()?;
        Ok(load)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("load.r", self.r), ("load.l", self.l), ("load.c", self.c)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid(name, "must be positive and finite"));
            }
        }
        Ok(())
    }

    pub fn q_f(&self) -> f64 {
        self.r * (self.c / self.l).sqrt()
    }

    pub fn f_0(&self) -> f64 {
        1.0 / (TAU * (self.l * self.c).sqrt())
    }

    pub fn admittance(&self, omega: f64) -> Complex<f64> {
        Complex::new(1.0 / self.r, omega * self.c - 1.0 / (omega * self.l))
    }
}

/// Displacement of a switched load's current relative to its voltage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerFactorKind {
    Lead,
    Unity,
    Lag,
}

/// Auxiliary parallel load switched in and out at the PCC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxLoad {
    pub r: f64,
    pub l: Option<f64>,
    pub c: Option<f64>,
}

impl AuxLoad {
    /// Size a load drawing `s_va` apparent power at `pf` from a bus at
    /// `v_ll` line-to-line RMS and frequency `f`.
    pub fn from_apparent_power(
        s_va: f64,
        pf: f64,
        kind: PowerFactorKind,
        v_ll: f64,
        f: f64,
    ) -> Result<Self> {
        if !(s_va > 0.0 && s_va.is_finite()) {
            return Err(Error::invalid("s_va", "must be positive"));
        }
        if !(pf > 0.0 && pf <= 1.0) {
            return Err(Error::invalid("pf", "must lie within (0, 1]"));
        }
        let v2 = v_ll * v_ll;
        let p = s_va * pf;
        let q = s_va * (1.0 - pf * pf).sqrt();
        let omega = TAU * f;
        let (l, c) = match kind {
            _ if q <= f64::EPSILON * s_va => (None, None),
            PowerFactorKind::Unity => (None, None),
            PowerFactorKind::Lag => (Some(v2 / (omega * q)), None),
            PowerFactorKind::Lead => (None, Some(q / (omega * v2))),
        };
        Ok(Self { r: v2 / p, l, c })
    }

    fn conductance(&self) -> f64 {
        1.0 / self.r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlantEvent {
    /// Open the grid breaker.
    Island,
    ConnectLoad(AuxLoad),
    DisconnectLoad,
    /// Remove inverter `k` (DG shutdown after a trip).
    DisconnectInverter(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub grid: GridParams,
    pub load: LoadParams,
    pub l_filter: f64,
    pub inverters: usize,
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.load.validate()?;
        if !(self.l_filter > 0.0 && self.l_filter.is_finite()) {
            return Err(Error::invalid("l_filter", "must be positive"));
        }
        if self.inverters == 0 {
            return Err(Error::invalid("dg", "at least one inverter is required"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub t: f64,
    pub v_pcc: ThreePhase,
    pub i_load_l: ThreePhase,
    pub i_inv: Vec<ThreePhase>,
    pub i_grid: ThreePhase,
    pub i_aux_l: ThreePhase,
    pub breaker_closed: bool,
    pub aux: Option<AuxLoad>,
    pub inverter_online: Vec<bool>,
}

impl PlantState {
    fn zero(inverters: usize) -> Self {
        Self {
            t: 0.0,
            v_pcc: ThreePhase::ZERO,
            i_load_l: ThreePhase::ZERO,
            i_inv: vec![ThreePhase::ZERO; inverters],
            i_grid: ThreePhase::ZERO,
            i_aux_l: ThreePhase::ZERO,
            breaker_closed: true,
            aux: None,
            inverter_online: vec![true; inverters],
        }
    }

    pub fn total_inverter_current(&self) -> ThreePhase {
        self.i_inv.iter().fold(ThreePhase::ZERO, |acc, i| acc + *i)
    }

    fn is_finite(&self) -> bool {
        self.v_pcc.is_finite()
            && self.i_load_l.is_finite()
            && self.i_grid.is_finite()
            && self.i_aux_l.is_finite()
            && self.i_inv.iter().all(ThreePhase::is_finite)
    }
}

/// Trapezoidal update `x1 = ad x0 + bd (u0 + u1)` in row-major storage.
#[derive(Debug, Clone)]
struct Discretization {
    n: usize,
    m: usize,
    ad: Vec<f64>,
    bd: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Plant {
    config: PlantConfig,
    dt: f64,
    state: PlantState,
    disc: Discretization,
    /// `t = origin + steps * dt`.
    origin: f64,
    steps: u64,
}

impl Plant {
    /// Plant at rest (all states zero, breaker closed).
    pub fn new(config: PlantConfig, dt: f64) -> Result<Self> {
        let state = PlantState::zero(config.inverters);
        Self::with_state(config, dt, state)
    }

    pub fn with_state(config: PlantConfig, dt: f64, state: PlantState) -> Result<Self> {
        config.validate()?;
        if !(1e-6..=2e-4).contains(&dt) {
            return Err(Error::invalid(
                "solver.dt",
                "must lie within [1e-6, 2e-4] s",
            ));
        }
        if state.i_inv.len() != config.inverters || state.inverter_online.len() != config.inverters
        {
            return Err(Error::invalid("state", "inverter count mismatch"));
        }
        let disc = discretize(&config, &state, dt);
        Ok(Self {
            config,
            dt,
            origin: state.t,
            steps: 0,
            state,
            disc,
        })
    }

    pub fn config(&self) -> &PlantConfig {
        &self.config
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t(&self) -> f64 {
        self.state.t
    }

    /// Grid EMF at time `t`; phase a is `E cos(w t)`.
    pub fn grid_emf(&self, t: f64) -> ThreePhase {
        let g = &self.config.grid;
        balanced_at_angle(g.phase_peak(), g.omega() * t)
    }

    /// Advance one step with inverter terminal voltages held at `v_inv`.
    pub fn step(&mut self, v_inv: &[ThreePhase]) -> Result<()> {
        if v_inv.len() != self.config.inverters {
            return Err(Error::invalid("v_inv", "one terminal voltage per inverter"));
        }
        let t0 = self.state.t;
        let t1 = self.origin + (self.steps + 1) as f64 * self.dt;
        let e0 = self.grid_emf(t0).as_array();
        let e1 = self.grid_emf(t1).as_array();
        let n = self.disc.n;
        let m = self.disc.m;
        let mut next = self.state.clone();
        let mut x = vec![0.0; n];
        let mut u = vec![0.0; m];
        for ph in 0..3 {
            self.pack_phase(ph, &mut x);
            u[0] = e0[ph] + e1[ph];
            for (k, v) in v_inv.iter().enumerate() {
                u[1 + k] = 2.0 * v.as_array()[ph];
            }
            let mut x1 = vec![0.0; n];
            for (r, out) in x1.iter_mut().enumerate() {
                let arow = &self.disc.ad[r * n..(r + 1) * n];
                let brow = &self.disc.bd[r * m..(r + 1) * m];
                let mut acc = 0.0;
                for c in 0..n {
                    acc += arow[c] * x[c];
                }
                for c in 0..m {
                    acc += brow[c] * u[c];
                }
                *out = acc;
            }
            unpack_phase(&mut next, ph, &x1);
        }
        next.t = t1;
        if !next.is_finite() {
            return Err(Error::Divergence {
                t: t1,
                last_valid: t0,
            });
        }
        self.state = next;
        self.steps += 1;
        Ok(())
    }

    /// Apply a topology change at the current simulation time.
    pub fn apply_event(&mut self, event: PlantEvent) -> Result<()> {
        match event {
            PlantEvent::Island => {
                if !self.state.breaker_closed {
                    return Err(Error::AlreadyIslanded);
                }
                self.state.breaker_closed = false;
                self.state.i_grid = ThreePhase::ZERO;
            }
            PlantEvent::ConnectLoad(aux) => {
                if self.state.aux.is_some() {
                    return Err(Error::AuxLoadPresent);
                }
                if !(aux.r > 0.0)
                    || aux.l.is_some_and(|l| l <= 0.0)
                    || aux.c.is_some_and(|c| c <= 0.0)
                {
                    return Err(Error::invalid("aux_load", "elements must be positive"));
                }
                // the aux capacitor enters at the PCC voltage (no inrush)
                self.state.aux = Some(aux);
                self.state.i_aux_l = ThreePhase::ZERO;
            }
            PlantEvent::DisconnectLoad => {
                if self.state.aux.take().is_none() {
                    return Err(Error::NoAuxLoad);
                }
                self.state.i_aux_l = ThreePhase::ZERO;
            }
            PlantEvent::DisconnectInverter(k) => {
                if k >= self.config.inverters {
                    return Err(Error::invalid("inverter", "index out of range"));
                }
                self.state.inverter_online[k] = false;
                self.state.i_inv[k] = ThreePhase::ZERO;
            }
        }
        self.disc = discretize(&self.config, &self.state, self.dt);
        Ok(())
    }

    /// Like [`Plant::apply_event`], but checks that `t` is the current step time.
    pub fn apply_event_at(&mut self, event: PlantEvent, t: f64) -> Result<()> {
        if (t - self.state.t).abs() > 0.5 * self.dt {
            return Err(Error::EventTime {
                event: t,
                now: self.state.t,
            });
        }
        self.apply_event(event)
    }

    /// Total capacitance at the PCC.
    pub fn pcc_capacitance(&self) -> f64 {
        self.config.load.c + self.state.aux.and_then(|a| a.c).unwrap_or(0.0)
    }

    /// Total shunt conductance at the PCC.
    pub fn pcc_conductance(&self) -> f64 {
        1.0 / self.config.load.r + self.state.aux.map(|a| a.conductance()).unwrap_or(0.0)
    }

    /// Energy held in every inductor and capacitor.
    pub fn stored_energy(&self) -> f64 {
        let s = &self.state;
        let sq = |x: &ThreePhase| x.dot(x);
        let mut e = 0.5 * self.pcc_capacitance() * sq(&s.v_pcc)
            + 0.5 * self.config.load.l * sq(&s.i_load_l)
            + 0.5 * self.config.grid.l_g * sq(&s.i_grid)
            + 0.5 * self.config.l_filter * s.i_inv.iter().map(sq).sum::<f64>();
        if let Some(l) = s.aux.and_then(|a| a.l) {
            e += 0.5 * l * sq(&s.i_aux_l);
        }
        e
    }

    /// Instantaneous power delivered by the grid EMF and the inverters.
    pub fn source_power(&self, v_inv: &[ThreePhase]) -> f64 {
        let s = &self.state;
        let mut p = self.grid_emf(s.t).dot(&s.i_grid);
        for (v, i) in v_inv.iter().zip(&s.i_inv) {
            p += v.dot(i);
        }
        p
    }

    /// Instantaneous power dissipated in resistive elements.
    pub fn dissipated_power(&self) -> f64 {
        let s = &self.state;
        self.pcc_conductance() * s.v_pcc.dot(&s.v_pcc)
            + self.config.grid.r_g * s.i_grid.dot(&s.i_grid)
    }

    /// Net current into the PCC capacitor from every other branch.
    pub fn capacitor_current(&self) -> ThreePhase {
        let s = &self.state;
        s.total_inverter_current() + s.i_grid
            - s.v_pcc * self.pcc_conductance()
            - s.i_load_l
            - s.i_aux_l
    }

    fn pack_phase(&self, ph: usize, x: &mut [f64]) {
        let s = &self.state;
        let pick = |v: &ThreePhase| v.as_array()[ph];
        x[V_IDX] = pick(&s.v_pcc);
        x[IL_IDX] = pick(&s.i_load_l);
        x[IG_IDX] = pick(&s.i_grid);
        x[IAUX_IDX] = pick(&s.i_aux_l);
        for (k, i) in s.i_inv.iter().enumerate() {
            x[INV_BASE + k] = pick(i);
        }
    }
}

fn unpack_phase(s: &mut PlantState, ph: usize, x: &[f64]) {
    let put = |v: &mut ThreePhase, val: f64| match ph {
        0 => v.a = val,
        1 => v.b = val,
        _ => v.c = val,
    };
    put(&mut s.v_pcc, x[V_IDX]);
    put(&mut s.i_load_l, x[IL_IDX]);
    put(&mut s.i_grid, x[IG_IDX]);
    put(&mut s.i_aux_l, x[IAUX_IDX]);
    for (k, i) in s.i_inv.iter_mut().enumerate() {
        put(i, x[INV_BASE + k]);
    }
}

fn continuous_matrices(cfg: &PlantConfig, s: &PlantState) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = INV_BASE + cfg.inverters;
    let m = 1 + cfg.inverters;
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DMatrix::<f64>::zeros(n, m);

    let aux = s.aux;
    let c_tot = cfg.load.c + aux.and_then(|x| x.c).unwrap_or(0.0);
    let g_tot = 1.0 / cfg.load.r + aux.map(|x| x.conductance()).unwrap_or(0.0);

    a[(V_IDX, V_IDX)] = -g_tot / c_tot;
    a[(V_IDX, IL_IDX)] = -1.0 / c_tot;
    a[(IL_IDX, V_IDX)] = 1.0 / cfg.load.l;

    if s.breaker_closed {
        let g = &cfg.grid;
        a[(V_IDX, IG_IDX)] = 1.0 / c_tot;
        a[(IG_IDX, IG_IDX)] = -g.r_g / g.l_g;
        a[(IG_IDX, V_IDX)] = -1.0 / g.l_g;
        b[(IG_IDX, 0)] = 1.0 / g.l_g;
    }

    if let Some(l_aux) = aux.and_then(|x| x.l) {
        a[(V_IDX, IAUX_IDX)] = -1.0 / c_tot;
        a[(IAUX_IDX, V_IDX)] = 1.0 / l_aux;
    }

    for k in 0..cfg.inverters {
        if s.inverter_online[k] {
            let idx = INV_BASE + k;
            a[(V_IDX, idx)] = 1.0 / c_tot;
            a[(idx, V_IDX)] = -1.0 / cfg.l_filter;
            b[(idx, 1 + k)] = 1.0 / cfg.l_filter;
        }
    }
    (a, b)
}

fn discretize(cfg: &PlantConfig, s: &PlantState, dt: f64) -> Discretization {
    let (a, b) = continuous_matrices(cfg, s);
    let n = a.nrows();
    let m = b.ncols();
    let eye = DMatrix::<f64>::identity(n, n);
    let lhs = &eye - &a * (0.5 * dt);
    let rhs = &eye + &a * (0.5 * dt);
    let lu = lhs.lu();
    // lhs = I - (dt/2) A is nonsingular for any passive network
    let ad = lu.solve(&rhs).expect("trapezoidal system is nonsingular");
    let bd = lu
        .solve(&(b * (0.5 * dt)))
        .expect("trapezoidal system is nonsingular");
    Discretization {
        n,
        m,
        ad: ad.transpose().as_slice().to_vec(),
        bd: bd.transpose().as_slice().to_vec(),
    }
}

/// Sinusoidal steady state of the grid-connected plant with every inverter
/// injecting a current of the given peak magnitude in phase with the PCC
/// voltage (unity power factor).
///
/// The returned state is placed at time `t0` (grid EMF phase `w t0`).
pub fn steady_state(config: &PlantConfig, injections: &[f64], t0: f64) -> Result<PlantState> {
    config.validate()?;
    if injections.len() != config.inverters {
        return Err(Error::invalid("injections", "one current per inverter"));
    }
    let g = &config.grid;
    let omega = g.omega();
    let e = Complex::new(g.phase_peak(), 0.0);
    let z_g = Complex::new(g.r_g, omega * g.l_g);
    let y = config.load.admittance(omega) + z_g.inv();
    let i_total: f64 = injections.iter().sum();

    // V (Y_load + 1/Z_g) = E/Z_g + I e^{j arg V}; the angle converges in a few sweeps
    let mut angle = 0.0f64;
    let mut v = e;
    for _ in 0..200 {
        let inj = Complex::from_polar(i_total, angle);
        v = (e / z_g + inj) / y;
        let next = v.arg();
        if (next - angle).abs() < 1e-15 {
            break;
        }
        angle = next;
    }
    if !v.re.is_finite() || !v.im.is_finite() {
        return Err(Error::NotSettled("phasor solution is not finite".into()));
    }
    let i_l = v / Complex::new(0.0, omega * config.load.l);
    let i_g = (e - v) / z_g;

    let rot = omega * t0;
    let to_abc = |p: Complex<f64>| balanced_at_angle(p.norm(), p.arg() + rot);
    let mut state = PlantState::zero(config.inverters);
    state.t = t0;
    state.v_pcc = to_abc(v);
    state.i_load_l = to_abc(i_l);
    state.i_grid = to_abc(i_g);
    for (slot, &mag) in state.i_inv.iter_mut().zip(injections) {
        *slot = to_abc(Complex::from_polar(mag, angle));
    }
    Ok(state)
}

/// Steady state for a single DG delivering `dg_power` at rated voltage.
pub fn init_steady_state(grid: GridParams, load: LoadParams, dg_power: f64) -> Result<PlantState> {
    let config = PlantConfig {
        grid,
        load,
        l_filter: FILTER_INDUCTANCE,
        inverters: 1,
    };
    steady_state(&config, &[grid.rated_current(dg_power)], 0.0)
}

/// Terminal voltage that holds the steady state of [`steady_state`]: the PCC
/// voltage plus the drop across the filter inductance.
pub fn steady_terminal_voltage(config: &PlantConfig, state: &PlantState, k: usize) -> ThreePhase {
    let omega = config.grid.omega();
    // i = I cos(wt + a) => L di/dt = -w L I sin(wt + a) = w L I cos(wt + a + pi/2)
    let i = state.i_inv[k];
    let i_lead = ThreePhase::new(
        (i.c - i.b) / 3f64.sqrt(),
        (i.a - i.c) / 3f64.sqrt(),
        (i.b - i.a) / 3f64.sqrt(),
    );
    state.v_pcc + i_lead * (omega * config.l_filter)
}
