use serde::{Deserialize, Serialize};

use crate::controller::{ControllerState, CurrentRefs};
use crate::detection::{Measurement, SupervisorMode, SupervisorState, TripCause, TripEvent};
use crate::error::{Error, Result};
use crate::estimation::{voltage_pu, CycleMeter, Pll, RocofState};
use crate::plant::{self, AuxLoad, Plant, PlantConfig, PlantEvent};
use crate::signals::{inverse_park, park, DqVector, ThreePhase};

use super::{EventKind, ScenarioSpec, TimedEvent};

/// Recorded trajectory, one entry per sample in every column.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub v_pcc: Vec<ThreePhase>,
    pub i_inv: Vec<ThreePhase>,
    /// Per-cycle frequency seen by the relays (first DG).
    pub f_est: Vec<f64>,
    pub df_dt: Vec<f64>,
    pub v_pu: Vec<f64>,
    pub theta_sms_deg: Vec<f64>,
    pub mode: Vec<SupervisorMode>,
    pub breaker_closed: Vec<bool>,
    pub tripped: Vec<bool>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub name: String,
    pub tripped: bool,
    pub t_trip: Option<f64>,
    pub cause: Option<TripCause>,
    pub t_island: Option<f64>,
    /// `t_trip - t_island` for trips after the island event.
    pub detection_latency: Option<f64>,
    pub max_abs_rocof: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Mean relay frequency over the final 0.5 s of the run.
    pub f_settled: f64,
    /// Largest |f - f_g| seen after the first event.
    pub max_excursion: f64,
    pub arm_count: usize,
    pub longest_armed: f64,
    /// Trips that happened while the supervisor was ARMED.
    pub armed_trips: usize,
    pub overmodulated: bool,
    pub t_final: f64,
    pub series: TimeSeries,
}

struct DgUnit {
    controller: ControllerState,
    pll: Pll,
    cycle: CycleMeter,
    rocof: RocofState,
    supervisor: SupervisorState,
    i_dref: f64,
    i_qref: f64,
    online: bool,
    theta_sms_deg: f64,
    f_meas: f64,
    df_dt: f64,
    v_pu: f64,
    armed_at_trip: bool,
}

/// Closed-loop simulation cell: plant, one controller and measurement/
/// detection stack per DG, and the event schedule.
pub struct Simulation {
    spec: ScenarioSpec,
    plant: Plant,
    units: Vec<DgUnit>,
    pending: Vec<TimedEvent>,
    v_rated: f64,
    detecting: bool,
    overmodulated: bool,
    v_inv: Vec<ThreePhase>,
}

impl Simulation {
    /// Build the cell at its grid-connected steady state placed at
    /// `t = -settle_time`, then run it up to `t = 0` and check that it settled.
    pub fn new(spec: &ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let load = spec.resolved_load()?;
        let config = PlantConfig {
            grid: spec.grid,
            load,
            l_filter: spec.l_filter,
            inverters: spec.dg.len(),
        };
        let dt = spec.solver.dt;
        let t0 = -spec.solver.settle_time;
        let currents: Vec<f64> = spec
            .dg
            .iter()
            .map(|d| spec.grid.rated_current(d.p_rated))
            .collect();
        let state = plant::steady_state(&config, &currents, t0)?;
        let v_angle = {
            let dq = park(&state.v_pcc, 0.0);
            dq.q.atan2(dq.d)
        };
        let plant = Plant::with_state(config, dt, state)?;

        let det = &spec.detection;
        let units = spec
            .dg
            .iter()
            .zip(&currents)
            .map(|(dg, &i_dref)| {
                let mut rocof = RocofState::new(det.rocof);
                rocof.prefill(spec.grid.f_g, t0, dt);
                DgUnit {
                    controller: ControllerState::new(dg.gains, spec.l_filter),
                    pll: Pll::locked_at(det.pll, v_angle),
                    cycle: CycleMeter::with_cycles(
                        det.pll.f_nom,
                        det.meter_cycles,
                        dt,
                        det.pll.f_nom,
                    ),
                    rocof,
                    supervisor: SupervisorState::default(),
                    i_dref,
                    i_qref: dg.i_qref,
                    online: true,
                    theta_sms_deg: 0.0,
                    f_meas: det.pll.f_nom,
                    df_dt: 0.0,
                    v_pu: 1.0,
                    armed_at_trip: false,
                }
            })
            .collect();

        let mut sim = Self {
            spec: spec.clone(),
            plant,
            units,
            pending: spec.events.iter().rev().copied().collect(),
            v_rated: spec.grid.phase_peak(),
            detecting: false,
            overmodulated: false,
            v_inv: vec![ThreePhase::ZERO; spec.dg.len()],
        };

        let steps = (spec.solver.settle_time / dt).round() as usize;
        for _ in 0..steps {
            sim.advance()?;
        }
        sim.check_settled()?;
        sim.detecting = true;
        Ok(sim)
    }

    fn check_settled(&self) -> Result<()> {
        if self.spec.solver.settle_time == 0.0 {
            return Ok(());
        }
        let f_g = self.spec.grid.f_g;
        for (k, u) in self.units.iter().enumerate() {
            let f = u.pll.state().f_est;
            if (f - f_g).abs() >= 0.02 {
                return Err(Error::NotSettled(format!("DG {k} frequency {f:.4} Hz")));
            }
            if (u.v_pu - 1.0).abs() >= 0.01 && self.plant.state().breaker_closed {
                return Err(Error::NotSettled(format!(
                    "DG {k} PCC voltage {:.4} pu",
                    u.v_pu
                )));
            }
        }
        Ok(())
    }

    pub fn plant(&self) -> &Plant {
        &self.plant
    }

    pub fn t(&self) -> f64 {
        self.plant.t()
    }

    pub fn supervisor(&self, k: usize) -> &SupervisorState {
        &self.units[k].supervisor
    }

    pub fn pll(&self, k: usize) -> &Pll {
        &self.units[k].pll
    }

    pub fn relay_frequency(&self, k: usize) -> f64 {
        self.units[k].f_meas
    }

    pub fn rocof(&self, k: usize) -> f64 {
        self.units[k].df_dt
    }

    pub fn voltage_pu(&self, k: usize) -> f64 {
        self.units[k].v_pu
    }

    /// Inverter terminal voltages applied during the last step.
    pub fn terminal_voltages(&self) -> &[ThreePhase] {
        &self.v_inv
    }

    pub fn all_tripped(&self) -> bool {
        self.units.iter().all(|u| u.supervisor.is_tripped())
    }

    /// Change the active-current command of DG `k`.
    pub fn set_i_dref(&mut self, k: usize, i_dref: f64) {
        self.units[k].i_dref = i_dref;
    }

    /// Apply a plant event immediately, outside the schedule.
    pub fn apply(&mut self, event: PlantEvent) -> Result<()> {
        self.plant.apply_event(event)
    }

    /// Advance one solver step and apply any events that fall due.
    pub fn advance(&mut self) -> Result<()> {
        let dt = self.plant.dt();
        let t = self.plant.t();
        let state = self.plant.state();
        let v_pcc = state.v_pcc;
        let i_inv = state.i_inv.clone();
        let sms = self.spec.detection.sms;
        let relays = self.spec.detection.relays;
        let mut shutdowns = Vec::new();

        for (k, u) in self.units.iter_mut().enumerate() {
            if !u.online {
                self.v_inv[k] = ThreePhase::ZERO;
                continue;
            }
            let v_dq = u.pll.step(&v_pcc, dt);
            let f_est = u.pll.state().f_est;
            u.f_meas = u.cycle.push(f_est);
            u.v_pu = voltage_pu(&v_dq, self.v_rated);
            u.df_dt = u.rocof.rocof_step(u.f_meas, u.v_pu, dt);

            let mut theta_f = 0.0;
            if self.detecting {
                let was_armed = u.supervisor.mode == SupervisorMode::Armed;
                let out = u.supervisor.supervisor_step(
                    &Measurement {
                        t,
                        f: u.f_meas,
                        df_dt: u.df_dt,
                        v_pu: u.v_pu,
                    },
                    &sms,
                    &relays,
                );
                if out.shutdown {
                    u.armed_at_trip = was_armed;
                    u.online = false;
                    u.theta_sms_deg = 0.0;
                    self.v_inv[k] = ThreePhase::ZERO;
                    shutdowns.push(k);
                    continue;
                }
                theta_f = out.theta_f;
            }
            u.theta_sms_deg = theta_f.to_degrees();

            let i_dq = park(&i_inv[k], v_dq.theta);
            let refs = CurrentRefs {
                i_dref: u.i_dref,
                i_qref: u.i_qref,
                theta_f,
            };
            let omega = u.pll.omega();
            let out = u.controller.control_step(&i_dq, &v_dq, &refs, omega, dt);
            let m = crate::controller::modulation(out.v_sd, out.v_sq);
            self.overmodulated |= m.overmodulated;
            // the command is held over the step: apply it at the mid-step angle
            let v_s = DqVector::new(out.v_sd, out.v_sq, v_dq.theta + 0.5 * omega * dt);
            self.v_inv[k] = inverse_park(&v_s);
        }

        for k in shutdowns {
            self.plant.apply_event(PlantEvent::DisconnectInverter(k))?;
        }
        self.plant.step(&self.v_inv)?;

        let now = self.plant.t();
        while let Some(ev) = self.pending.last().copied() {
            if ev.t > now + 0.5 * dt {
                break;
            }
            self.pending.pop();
            let event = match ev.kind {
                EventKind::Island => PlantEvent::Island,
                EventKind::DisconnectLoad => PlantEvent::DisconnectLoad,
                EventKind::ConnectLoad { s_va, pf, pf_kind } => {
                    PlantEvent::ConnectLoad(AuxLoad::from_apparent_power(
                        s_va,
                        pf,
                        pf_kind,
                        self.spec.grid.v_ll,
                        self.spec.grid.f_g,
                    )?)
                }
            };
            self.plant.apply_event(event)?;
        }
        Ok(())
    }

    fn trip_of(&self) -> Option<(usize, TripEvent)> {
        self.units
            .iter()
            .enumerate()
            .filter_map(|(k, u)| u.supervisor.trip.map(|t| (k, t)))
            .min_by(|a, b| a.1.t_trip.total_cmp(&b.1.t_trip))
    }

    /// Run to `t_end`, recording the series.
    pub fn run(mut self) -> Result<ScenarioResult> {
        let spec = self.spec.clone();
        let dt = spec.solver.dt;
        let record_every = ((spec.solver.record_interval / dt).round() as usize).max(1);
        let steps = (spec.solver.t_end / dt).round() as usize;
        let f_g = spec.grid.f_g;
        let first_event = spec.events.first().map(|e| e.t).unwrap_or(f64::INFINITY);
        let settle_window = 0.5;

        let mut series = TimeSeries::default();
        let mut f_min = f64::INFINITY;
        let mut f_max = f64::NEG_INFINITY;
        let mut v_min = f64::INFINITY;
        let mut v_max = f64::NEG_INFINITY;
        let mut max_abs_rocof = 0.0f64;
        let mut max_excursion = 0.0f64;
        let mut tail = Vec::new();

        self.record(&mut series);
        for k in 0..steps {
            self.advance()?;
            let t = self.plant.t();
            let u = &self.units[0];
            if self.units.iter().any(|u| u.online) {
                let f = u.f_meas;
                f_min = f_min.min(f);
                f_max = f_max.max(f);
                v_min = v_min.min(u.v_pu);
                v_max = v_max.max(u.v_pu);
                max_abs_rocof = max_abs_rocof.max(u.df_dt.abs());
                if t >= first_event {
                    max_excursion = max_excursion.max((f - f_g).abs());
                }
                if t > spec.solver.t_end - settle_window {
                    tail.push(f);
                }
            }
            if (k + 1) % record_every == 0 {
                self.record(&mut series);
            }
            if spec.solver.stop_on_trip && self.all_tripped() {
                if (k + 1) % record_every != 0 {
                    self.record(&mut series);
                }
                break;
            }
        }

        let trip = self.trip_of();
        let t_island = spec.island_time();
        let t_trip = trip.map(|(_, e)| e.t_trip);
        let detection_latency = match (t_trip, t_island) {
            (Some(tt), Some(ti)) if tt > ti => Some(tt - ti),
            _ => None,
        };
        let f_settled = if tail.is_empty() {
            f64::NAN
        } else {
            tail.iter().sum::<f64>() / tail.len() as f64
        };
        let arm_count = self.units.iter().map(|u| u.supervisor.arm_count).sum();
        let longest_armed = self
            .units
            .iter()
            .map(|u| u.supervisor.longest_armed)
            .fold(0.0, f64::max);
        let armed_trips = self
            .units
            .iter()
            .filter(|u| u.supervisor.is_tripped() && u.armed_at_trip)
            .count();
        Ok(ScenarioResult {
            name: spec.name.clone(),
            tripped: trip.is_some(),
            t_trip,
            cause: trip.map(|(_, e)| e.cause),
            t_island,
            detection_latency,
            max_abs_rocof,
            f_min,
            f_max,
            v_min,
            v_max,
            f_settled,
            max_excursion,
            arm_count,
            longest_armed,
            armed_trips,
            overmodulated: self.overmodulated,
            t_final: self.plant.t(),
            series,
        })
    }

    fn record(&self, s: &mut TimeSeries) {
        let st = self.plant.state();
        let u = &self.units[0];
        s.t.push(st.t);
        s.v_pcc.push(st.v_pcc);
        s.i_inv.push(st.total_inverter_current());
        s.f_est.push(u.f_meas);
        s.df_dt.push(u.df_dt);
        s.v_pu.push(u.v_pu);
        s.theta_sms_deg.push(u.theta_sms_deg);
        s.mode.push(u.supervisor.mode);
        s.breaker_closed.push(st.breaker_closed);
        s.tripped
            .push(self.units.iter().any(|u| u.supervisor.is_tripped()));
    }
}

/// Initialise, settle and run one scenario.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioResult> {
    Simulation::new(spec)?.run()
}
