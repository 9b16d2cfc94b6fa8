//! Scenario descriptions, load sizing, the named test suites and the
//! closed-loop runner.

mod runner;
mod suites;

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::controller::PiGains;
use crate::detection::{RelaySettings, SmsParams};
use crate::error::{Error, Result};
use crate::estimation::{PllConfig, RocofConfig};
use crate::plant::{GridParams, LoadParams, PowerFactorKind, FILTER_INDUCTANCE, RATED_POWER};

pub use runner::{run_scenario, ScenarioResult, Simulation, TimeSeries};
pub use suites::{
    build_suite, expected_verdict, SuiteName, Verdict, DETECTION_DEADLINE, ISLAND_TIME,
    LOAD_SWITCHING_CASES, NO_TRIP_WINDOW, QF_SWEEP_CASES, UL1741_P_CASES, UL1741_Q_CASES,
};

/// Load sizing for a parallel RLC that draws `p` watts at `v_pcc` volts
/// line-to-line with quality factor `q_f` and resonance at `f`.
pub fn load_from_power_spec(p: f64, q_f: f64, v_pcc: f64, f: f64) -> Result<LoadParams> {
    for (name, v) in [("p", p), ("q_f", q_f), ("v_pcc", v_pcc), ("f", f)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(name, "must be positive"));
        }
    }
    let v2 = v_pcc * v_pcc;
    let w = TAU * f;
    LoadParams::new(v2 / p, v2 / (w * q_f * p), q_f * p / (w * v2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgSpec {
    pub p_rated: f64,
    pub i_qref: f64,
    pub gains: PiGains,
}

impl Default for DgSpec {
    fn default() -> Self {
        Self {
            p_rated: RATED_POWER,
            i_qref: 0.0,
            gains: PiGains::default(),
        }
    }
}

/// Either explicit RLC values or a mismatch relative to the balanced load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LoadSpec {
    Rlc(LoadParams),
    Power { pct_p: f64, pct_q: f64, q_f: f64 },
}

impl LoadSpec {
    /// `%P` scales R inversely, `%Q` scales L inversely, C stays at the
    /// balanced value for `p_total` at rated voltage.
    pub fn resolve(&self, grid: &GridParams, p_total: f64) -> Result<LoadParams> {
        match *self {
            LoadSpec::Rlc(l) => {
                l.validate()?;
                Ok(l)
            }
            LoadSpec::Power { pct_p, pct_q, q_f } => {
                if !(pct_p > 0.0) || !(pct_q > 0.0) {
                    return Err(Error::invalid("load.pct_p", "percentages must be positive"));
                }
                let base = load_from_power_spec(p_total, q_f, grid.v_ll, grid.f_g)?;
                LoadParams::new(base.r * 100.0 / pct_p, base.l * 100.0 / pct_q, base.c)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventKind {
    Island,
    ConnectLoad {
        s_va: f64,
        pf: f64,
        pf_kind: PowerFactorKind,
    },
    DisconnectLoad,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSpec {
    pub sms: SmsParams,
    pub relays: RelaySettings,
    pub pll: PllConfig,
    pub rocof: RocofConfig,
    /// Averaging window of the frequency fed to the relays and the SMS law,
    /// in nominal cycles.
    pub meter_cycles: f64,
}

impl Default for DetectionSpec {
    fn default() -> Self {
        Self {
            sms: SmsParams::default(),
            relays: RelaySettings::default(),
            pll: PllConfig::default(),
            rocof: RocofConfig::default(),
            meter_cycles: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub dt: f64,
    pub t_end: f64,
    /// Sampling interval of the recorded series.
    pub record_interval: f64,
    /// Grid-connected run-in before t = 0 that must settle.
    pub settle_time: f64,
    /// End the run once every DG has tripped.
    pub stop_on_trip: bool,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            dt: 5e-5,
            t_end: 5.0,
            record_interval: 1e-3,
            settle_time: 1.0,
            stop_on_trip: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub grid: GridParams,
    pub l_filter: f64,
    pub dg: Vec<DgSpec>,
    pub load: LoadSpec,
    pub events: Vec<TimedEvent>,
    pub detection: DetectionSpec,
    pub solver: SolverSpec,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            grid: GridParams::default(),
            l_filter: FILTER_INDUCTANCE,
            dg: vec![DgSpec::default()],
            load: LoadSpec::Power {
                pct_p: 100.0,
                pct_q: 100.0,
                q_f: 1.77,
            },
            events: vec![TimedEvent {
                t: ISLAND_TIME,
                kind: EventKind::Island,
            }],
            detection: DetectionSpec::default(),
            solver: SolverSpec::default(),
        }
    }
}

impl ScenarioSpec {
    pub fn total_rated_power(&self) -> f64 {
        self.dg.iter().map(|d| d.p_rated).sum()
    }

    pub fn resolved_load(&self) -> Result<LoadParams> {
        self.load.resolve(&self.grid, self.total_rated_power())
    }

    pub fn island_time(&self) -> Option<f64> {
        self.events
            .iter()
            .find(|e| e.kind == EventKind::Island)
            .map(|e| e.t)
    }

    /// Check every field; errors name the offending key path.
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.l_filter > 0.0 && self.l_filter.is_finite()) {
            return Err(Error::invalid("l_filter", "must be positive"));
        }
        if self.dg.is_empty() {
            return Err(Error::invalid("dg", "at least one DG is required"));
        }
        for (k, dg) in self.dg.iter().enumerate() {
            if !(dg.p_rated >= 0.0 && dg.p_rated.is_finite()) {
                return Err(Error::invalid(
                    format!("dg[{k}].p_rated"),
                    "must be non-negative",
                ));
            }
            if !dg.i_qref.is_finite() {
                return Err(Error::invalid(format!("dg[{k}].i_qref"), "must be finite"));
            }
            if !(dg.gains.kp >= 0.0 && dg.gains.ki >= 0.0) {
                return Err(Error::invalid(
                    format!("dg[{k}].gains"),
                    "must be non-negative",
                ));
            }
        }
        self.resolved_load()?;
        self.detection.sms.validate()?;
        self.detection.relays.validate()?;
        if !(self.detection.meter_cycles >= 0.1 && self.detection.meter_cycles <= 50.0) {
            return Err(Error::invalid(
                "detection.meter_cycles",
                "must lie within [0.1, 50] cycles",
            ));
        }
        let s = &self.solver;
        if !(s.dt.is_finite() && (1e-6..=2e-4).contains(&s.dt)) {
            return Err(Error::invalid(
                "solver.dt",
                "must lie within [1e-6, 2e-4] s",
            ));
        }
        if !(s.t_end > 0.0 && s.t_end.is_finite()) {
            return Err(Error::invalid("solver.t_end", "must be positive"));
        }
        if !(s.record_interval > 0.0) {
            return Err(Error::invalid("solver.record_interval", "must be positive"));
        }
        if !(s.settle_time >= 0.0) {
            return Err(Error::invalid("solver.settle_time", "must be non-negative"));
        }
        let mut last = f64::NEG_INFINITY;
        let mut islands = 0;
        for (k, e) in self.events.iter().enumerate() {
            if !(e.t >= 0.0) || e.t < last {
                return Err(Error::invalid(
                    format!("events[{k}].t"),
                    "events must be time-ordered",
                ));
            }
            last = e.t;
            if e.kind == EventKind::Island {
                islands += 1;
                if islands > 1 {
                    return Err(Error::invalid(
                        format!("events[{k}]"),
                        "duplicate island event",
                    ));
                }
            }
        }
        if !self.events.is_empty() && s.t_end <= last {
            return Err(Error::invalid(
                "solver.t_end",
                "must exceed the last event time",
            ));
        }
        Ok(())
    }
}
