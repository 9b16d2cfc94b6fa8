#![allow(dead_code)]

use std::f64::consts::TAU;

use nalgebra::Complex;

use islandguard::detection::{SmsMode, SmsParams};
use islandguard::ndz::{equilibrium_qf, load_from_qf};
use islandguard::plant::{
    steady_state, AuxLoad, Plant, PlantConfig, PlantEvent, PowerFactorKind, RATED_POWER,
};
use islandguard::scenarios::{
    build_suite, EventKind, LoadSpec, ScenarioResult, ScenarioSpec, Simulation, SuiteName,
    TimedEvent,
};
use islandguard::signals::ThreePhase;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BAND: (f64, f64) = (59.3, 60.5);

/// Peak amplitude of a balanced set.
pub fn amplitude(x: &ThreePhase) -> f64 {
    (x.dot(x) / 1.5).sqrt()
}

/// Instantaneous three-phase reactive power.
pub fn reactive_power(v: &ThreePhase, i: &ThreePhase) -> f64 {
    ((v.a - v.b) * i.c + (v.b - v.c) * i.a + (v.c - v.a) * i.b) / 3f64.sqrt()
}

pub fn case(suite: SuiteName, k: usize) -> ScenarioSpec {
    build_suite(suite).swap_remove(k)
}

pub fn with_mode(mut spec: ScenarioSpec, mode: SmsMode) -> ScenarioSpec {
    spec.detection.sms.mode = mode;
    spec
}

/// Reference L (H), C (µF) and f_r (Hz) of every sized test load.
pub const REFERENCE_LOADS: [(&str, f64, f64, f64); 17] = [
    ("P 100%", 0.00345, 2037.0, 60.05),
    ("P 50%", 0.00345, 2037.0, 60.05),
    ("P 125%", 0.00345, 2037.0, 60.05),
    ("Q case 1", 0.003278, 2037.0, 61.6),
    ("Q case 2", 0.003381, 2037.0, 60.6),
    ("Q case 3", 0.003419, 2037.0, 60.3),
    ("Q case 4", 0.00345, 2037.0, 60.0),
    ("Q case 5", 0.003488, 2037.0, 59.7),
    ("Q case 6", 0.003519, 2037.0, 59.7),
    ("Q case 7", 0.003623, 2037.0, 58.6),
    ("Q_f 0.5", 0.0122, 575.4, 60.07),
    ("Q_f 1", 0.0061, 1150.0, 60.1),
    ("Q_f 1.77", 0.00345, 2037.0, 60.0),
    ("Q_f 3", 0.00203, 3452.0, 60.12),
    ("Q_f 4.21", 0.00145, 4850.0, 60.0),
    ("Q_f 6.38", 0.000957, 7350.0, 60.0),
    ("Q_f 8.1", 0.000754, 9330.0, 60.0),
];

pub fn resonance(l: f64, c_uf: f64) -> f64 {
    1.0 / (TAU * (l * c_uf * 1e-6).sqrt())
}

/// Worst KCL residual at the PCC over `steps`, per unit of rated peak
/// current: the trapezoidal capacitor update must equal the mean branch
/// current.
pub fn kcl_residual(spec: &ScenarioSpec, steps: usize) -> f64 {
    let mut sim = Simulation::new(spec).unwrap();
    let i_base = spec.grid.rated_current(spec.total_rated_power());
    let dt = spec.solver.dt;
    let mut worst = 0.0f64;
    for _ in 0..steps {
        let before = sim.plant().clone();
        sim.advance().unwrap();
        let after = sim.plant();
        if before.state().breaker_closed != after.state().breaker_closed
            || before.state().aux != after.state().aux
        {
            continue;
        }
        let c = before.pcc_capacitance();
        let dv = (after.state().v_pcc - before.state().v_pcc) * (c / dt);
        let mean = (before.capacitor_current() + after.capacitor_current()) * 0.5;
        worst = worst.max((dv - mean).max_abs() / i_base);
    }
    worst
}

/// Energy-balance residual over `[t_from, t_from + span]`, as a fraction
/// of the source energy, per second.
pub fn energy_residual(spec: &ScenarioSpec, t_from: f64, span: f64) -> f64 {
    let mut sim = Simulation::new(spec).unwrap();
    let dt = spec.solver.dt;
    while sim.t() < t_from - 0.5 * dt {
        sim.advance().unwrap();
    }
    let e0 = sim.plant().stored_energy();
    let mut supplied = 0.0;
    let mut dissipated = 0.0;
    let mut gross = 0.0;
    let steps = (span / dt).round() as usize;
    for _ in 0..steps {
        let before = sim.plant().clone();
        sim.advance().unwrap();
        let v = sim.terminal_voltages();
        let p_src = 0.5 * (before.source_power(v) + sim.plant().source_power(v));
        let p_loss = 0.5 * (before.dissipated_power() + sim.plant().dissipated_power());
        supplied += p_src * dt;
        dissipated += p_loss * dt;
        gross += p_src.abs() * dt;
    }
    let e1 = sim.plant().stored_energy();
    ((e1 - e0) - (supplied - dissipated)).abs() / gross / span
}

/// Largest relative difference of the settled frequency and PCC voltage
/// when the step is halved.
pub fn dt_halving_difference(spec: &ScenarioSpec) -> f64 {
    let run = |dt: f64| {
        let mut s = spec.clone();
        s.solver.dt = dt;
        let r = islandguard::run_scenario(&s).unwrap();
        let n = r.series.len();
        let v = r.series.v_pu[n - 100..].iter().sum::<f64>() / 100.0;
        (r.f_settled, v)
    };
    let (f1, v1) = run(spec.solver.dt);
    let (f2, v2) = run(0.5 * spec.solver.dt);
    ((f1 - f2).abs() / f2).max((v1 - v2).abs() / v2)
}

/// Bit-level equality of two runs, including every recorded sample.
pub fn bit_identical(a: &ScenarioResult, b: &ScenarioResult) -> bool {
    let same = |x: &[f64], y: &[f64]| {
        x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())
    };
    let flat = |v: &[ThreePhase]| v.iter().flat_map(|p| p.as_array()).collect::<Vec<_>>();
    let s = (&a.series, &b.series);
    a.t_trip.map(f64::to_bits) == b.t_trip.map(f64::to_bits)
        && a.cause == b.cause
        && a.f_settled.to_bits() == b.f_settled.to_bits()
        && same(&s.0.t, &s.1.t)
        && same(&s.0.f_est, &s.1.f_est)
        && same(&s.0.df_dt, &s.1.df_dt)
        && same(&s.0.v_pu, &s.1.v_pu)
        && same(&s.0.theta_sms_deg, &s.1.theta_sms_deg)
        && same(&flat(&s.0.v_pcc), &flat(&s.1.v_pcc))
        && same(&flat(&s.0.i_inv), &flat(&s.1.i_inv))
        && s.0.mode == s.1.mode
        && s.0.tripped == s.1.tripped
}

/// One analytic-versus-simulated comparison.
#[derive(Debug, Clone, Copy)]
pub struct CrossCheck {
    pub q_f: f64,
    pub f_0: f64,
    pub theta_m: f64,
    pub analytic: Option<f64>,
    pub analytic_inside: bool,
    pub simulated: f64,
    pub tripped: bool,
}

impl CrossCheck {
    pub fn agrees(&self, tol: f64) -> bool {
        match (self.analytic_inside, self.tripped) {
            (true, false) => self
                .analytic
                .is_some_and(|f| (f - self.simulated).abs() < tol),
            (false, true) => true,
            _ => false,
        }
    }
}

/// `(Q_f, f_0, theta_m)` grid used for the analytic/time-domain comparison.
pub const CROSS_POINTS: [(f64, f64, f64); 10] = [
    (8.1, 60.0, 15.0),
    (6.38, 59.8, 15.0),
    (4.21, 60.2, 15.0),
    (8.1, 60.3, 15.0),
    (8.1, 59.5, 15.0),
    (1.0, 60.0, 15.0),
    (3.0, 60.0, 25.0),
    (8.1, 60.4, 5.0),
    (4.21, 59.6, 5.0),
    (2.0, 59.9, 5.0),
];

/// SMS held on at the matched DG power, load resonance moved to `f_0`.
pub fn cross_check(q_f: f64, f_0: f64, theta_m: f64) -> CrossCheck {
    let sms = SmsParams {
        theta_m,
        mode: SmsMode::AlwaysOn,
        ..SmsParams::default()
    };
    let eq = equilibrium_qf(q_f, f_0, &sms, BAND);
    let mut spec = ScenarioSpec {
        load: LoadSpec::Rlc(load_from_qf(q_f, f_0, 2.304).unwrap()),
        ..ScenarioSpec::default()
    };
    spec.detection.sms = sms;
    spec.solver.t_end = 8.0;
    let r = islandguard::run_scenario(&spec).unwrap();
    CrossCheck {
        q_f,
        f_0,
        theta_m,
        analytic: eq.f_island,
        analytic_inside: eq.inside_ndz,
        simulated: r.f_settled,
        tripped: r.tripped,
    }
}

/// A day of per-minute load changes compressed to `spacing` seconds each:
/// the auxiliary slot is re-sized at random below `max_fraction` of rating,
/// sometimes left empty.
pub fn load_step_day(seed: u64, steps: usize, spacing: f64, max_fraction: f64) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut connected = false;
    for k in 0..steps {
        let t = 0.5 + k as f64 * spacing;
        if connected {
            events.push(TimedEvent {
                t,
                kind: EventKind::DisconnectLoad,
            });
            connected = false;
        }
        if rng.random_bool(0.8) {
            let pf_kind = match rng.random_range(0..3) {
                0 => PowerFactorKind::Lead,
                1 => PowerFactorKind::Lag,
                _ => PowerFactorKind::Unity,
            };
            let pf = if pf_kind == PowerFactorKind::Unity {
                1.0
            } else {
                rng.random_range(0.7..0.99)
            };
            events.push(TimedEvent {
                t,
                kind: EventKind::ConnectLoad {
                    s_va: rng.random_range(0.01..max_fraction) * RATED_POWER,
                    pf,
                    pf_kind,
                },
            });
            connected = true;
        }
    }
    let mut spec = ScenarioSpec {
        name: "grid_load_steps".into(),
        events,
        ..ScenarioSpec::default()
    };
    spec.solver.t_end = 0.5 + steps as f64 * spacing + 0.5;
    spec.solver.record_interval = 1e-2;
    spec
}

/// Closed-loop d-axis current error, relative to the new reference, a fixed
/// time after a step of the active-current command (grid connected).
pub fn current_step_error(step: f64, after: f64) -> f64 {
    let spec = ScenarioSpec {
        events: Vec::new(),
        ..ScenarioSpec::default()
    };
    let mut sim = Simulation::new(&spec).unwrap();
    let i_ref = spec.grid.rated_current(RATED_POWER) * (1.0 + step);
    sim.set_i_dref(0, i_ref);
    let steps = (after / spec.solver.dt).round() as usize;
    for _ in 0..steps {
        sim.advance().unwrap();
    }
    let i = sim.plant().state().i_inv[0];
    let theta = sim.pll(0).state().theta;
    let dq = islandguard::signals::park(&i, theta);
    (dq.d - i_ref).abs().max(dq.q.abs()) / i_ref
}

/// Cycle-averaged DG active and reactive power at grid-connected steady state.
pub fn dg_powers(spec: &ScenarioSpec) -> (f64, f64) {
    let mut spec = spec.clone();
    spec.events.clear();
    let mut sim = Simulation::new(&spec).unwrap();
    let n = (1.0 / (spec.grid.f_g * spec.solver.dt)).round() as usize;
    let (mut p, mut q) = (0.0, 0.0);
    for _ in 0..n {
        sim.advance().unwrap();
        let st = sim.plant().state();
        let i = st.total_inverter_current();
        p += st.v_pcc.dot(&i);
        q += reactive_power(&st.v_pcc, &i);
    }
    (p / n as f64, q / n as f64)
}

/// Open-loop plant with every DG removed: PCC voltage amplitude after a
/// load connection, and the phasor divider prediction.
pub fn connect_event_amplitudes(s_va: f64, pf: f64, kind: PowerFactorKind) -> (f64, f64) {
    let spec = ScenarioSpec::default();
    let load = spec.resolved_load().unwrap();
    let config = PlantConfig {
        grid: spec.grid,
        load,
        l_filter: spec.l_filter,
        inverters: 1,
    };
    let dt = 2e-5;
    let state = steady_state(&config, &[0.0], 0.0).unwrap();
    let mut plant = Plant::with_state(config, dt, state).unwrap();
    plant
        .apply_event(PlantEvent::DisconnectInverter(0))
        .unwrap();
    let aux = AuxLoad::from_apparent_power(s_va, pf, kind, spec.grid.v_ll, spec.grid.f_g).unwrap();
    plant.apply_event(PlantEvent::ConnectLoad(aux)).unwrap();
    let zero = [ThreePhase::ZERO];
    let settle = (0.6 / dt).round() as usize;
    for _ in 0..settle {
        plant.step(&zero).unwrap();
    }
    let cycle = (1.0 / (spec.grid.f_g * dt)).round() as usize;
    let mut peak = 0.0f64;
    for _ in 0..cycle {
        plant.step(&zero).unwrap();
        peak = peak.max(plant.state().v_pcc.a.abs());
    }

    let w = spec.grid.omega();
    let zg = Complex::new(spec.grid.r_g, w * spec.grid.l_g);
    let yg = zg.inv();
    let y = load.admittance(w) + aux_admittance(&aux, w);
    let v = yg * spec.grid.phase_peak() / (yg + y);
    (peak, v.norm())
}

fn aux_admittance(aux: &AuxLoad, w: f64) -> Complex<f64> {
    let mut y = Complex::new(1.0 / aux.r, 0.0);
    if let Some(l) = aux.l {
        y.im -= 1.0 / (w * l);
    }
    if let Some(c) = aux.c {
        y.im += w * c;
    }
    y
}

/// Free ringdown of the islanded RLC load with the DG removed, against the
/// closed-form parallel RLC response. Returns the worst error relative to
/// the initial amplitude.
pub fn ringdown_error(dt: f64, span: f64) -> f64 {
    let spec = ScenarioSpec::default();
    let load = spec.resolved_load().unwrap();
    let config = PlantConfig {
        grid: spec.grid,
        load,
        l_filter: spec.l_filter,
        inverters: 1,
    };
    let state = steady_state(&config, &[0.0], 0.0).unwrap();
    let mut plant = Plant::with_state(config, dt, state).unwrap();
    plant.apply_event(PlantEvent::Island).unwrap();
    plant
        .apply_event(PlantEvent::DisconnectInverter(0))
        .unwrap();
    let s = plant.state().clone();
    let (r, l, c) = (load.r, load.l, load.c);
    let alpha = 1.0 / (2.0 * r * c);
    let w0 = 1.0 / (l * c).sqrt();
    let wd = (w0 * w0 - alpha * alpha).sqrt();
    let v0 = s.v_pcc.as_array();
    let il0 = s.i_load_l.as_array();
    let scale = amplitude(&s.v_pcc);
    let exact = |ph: usize, t: f64| {
        let dv0 = (-v0[ph] / r - il0[ph]) / c;
        (-alpha * t).exp()
            * (v0[ph] * (wd * t).cos() + (dv0 + alpha * v0[ph]) / wd * (wd * t).sin())
    };
    let zero = [ThreePhase::ZERO];
    let mut worst = 0.0f64;
    let steps = (span / dt).round() as usize;
    for k in 1..=steps {
        plant.step(&zero).unwrap();
        let t = k as f64 * dt;
        let v = plant.state().v_pcc.as_array();
        for (ph, v) in v.iter().enumerate() {
            worst = worst.max((v - exact(ph, t)).abs() / scale);
        }
    }
    worst
}
