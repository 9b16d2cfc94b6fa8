use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detection::SmsMode;
use crate::error::{Error, Result};
use crate::plant::{PowerFactorKind, RATED_POWER};

use super::{DgSpec, EventKind, LoadSpec, ScenarioSpec, TimedEvent};

/// Island (or first switching) instant shared by every suite.
pub const ISLAND_TIME: f64 = 2.0;

/// Detection deadline after the island event, seconds.
pub const DETECTION_DEADLINE: f64 = 2.0;

/// Observation window for no-trip verdicts, seconds after the event.
pub const NO_TRIP_WINDOW: f64 = 10.0;

const BASE_Q_F: f64 = 1.77;

/// Slack on observation windows, seconds.
const TIME_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteName {
    Ul1741P,
    Ul1741Q,
    QfSweep,
    LoadSwitching,
    MultiDg,
}

impl SuiteName {
    pub const ALL: [SuiteName; 5] = [
        SuiteName::Ul1741P,
        SuiteName::Ul1741Q,
        SuiteName::QfSweep,
        SuiteName::LoadSwitching,
        SuiteName::MultiDg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteName::Ul1741P => "ul1741_p",
            SuiteName::Ul1741Q => "ul1741_q",
            SuiteName::QfSweep => "qf_sweep",
            SuiteName::LoadSwitching => "load_switching",
            SuiteName::MultiDg => "multi_dg",
        }
    }
}

impl fmt::Display for SuiteName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuiteName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SuiteName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::UnknownSuite(s.to_string()))
    }
}

/// Active-power mismatch cases, percent of rated DG power.
pub const UL1741_P_CASES: [f64; 3] = [50.0, 100.0, 125.0];
/// Reactive-power mismatch cases, percent of the balanced value.
pub const UL1741_Q_CASES: [f64; 7] = [105.0, 102.0, 101.0, 100.0, 99.0, 98.0, 95.0];
pub const QF_SWEEP_CASES: [f64; 7] = [0.5, 1.0, 1.77, 3.0, 4.21, 6.38, 8.1];
pub const LOAD_SWITCHING_CASES: [(f64, PowerFactorKind); 3] = [
    (0.8, PowerFactorKind::Lead),
    (1.0, PowerFactorKind::Unity),
    (0.8, PowerFactorKind::Lag),
];

fn island_case(name: String, pct_p: f64, pct_q: f64, q_f: f64) -> ScenarioSpec {
    let mut spec = ScenarioSpec {
        name,
        load: LoadSpec::Power { pct_p, pct_q, q_f },
        ..ScenarioSpec::default()
    };
    spec.solver.t_end = ISLAND_TIME + NO_TRIP_WINDOW;
    spec
}

/// The case list of a named suite, in table order.
pub fn build_suite(name: SuiteName) -> Vec<ScenarioSpec> {
    match name {
        SuiteName::Ul1741P => UL1741_P_CASES
            .iter()
            .map(|&p| island_case(format!("ul1741_p_{p}"), p, 100.0, BASE_Q_F))
            .collect(),
        SuiteName::Ul1741Q => UL1741_Q_CASES
            .iter()
            .enumerate()
            .map(|(k, &q)| island_case(format!("ul1741_q_case{}_{q}", k + 1), 100.0, q, BASE_Q_F))
            .collect(),
        SuiteName::QfSweep => QF_SWEEP_CASES
            .iter()
            .map(|&q_f| island_case(format!("qf_sweep_{q_f}"), 100.0, 100.0, q_f))
            .collect(),
        SuiteName::LoadSwitching => LOAD_SWITCHING_CASES
            .iter()
            .map(|&(pf, pf_kind)| {
                let mut spec = ScenarioSpec {
                    name: format!("load_switching_{}", pf_label(pf, pf_kind)),
                    events: vec![
                        TimedEvent {
                            t: ISLAND_TIME,
                            kind: EventKind::ConnectLoad {
                                s_va: RATED_POWER,
                                pf,
                                pf_kind,
                            },
                        },
                        TimedEvent {
                            t: ISLAND_TIME + 1.0,
                            kind: EventKind::DisconnectLoad,
                        },
                    ],
                    ..ScenarioSpec::default()
                };
                spec.solver.t_end = 6.0;
                spec
            })
            .collect(),
        SuiteName::MultiDg => {
            let mut spec = island_case("multi_dg_2x50kw".into(), 100.0, 100.0, BASE_Q_F);
            spec.dg = vec![
                DgSpec {
                    p_rated: 0.5 * RATED_POWER,
                    ..DgSpec::default()
                };
                2
            ];
            vec![spec]
        }
    }
}

fn pf_label(pf: f64, kind: PowerFactorKind) -> String {
    match kind {
        PowerFactorKind::Lead => format!("{pf}_lead"),
        PowerFactorKind::Lag => format!("{pf}_lag"),
        PowerFactorKind::Unity => format!("{pf}"),
    }
}

/// Expected outcome of a case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    /// Trip no later than `within` seconds after the event.
    Trip { within: f64 },
    /// No trip for `over` seconds after the event.
    NoTrip { over: f64 },
}

impl Verdict {
    /// Whether an observed outcome meets this verdict.
    pub fn accepts(&self, latency: Option<f64>, observed_for: f64) -> bool {
        match *self {
            Verdict::Trip { within } => latency.is_some_and(|l| l <= within),
            Verdict::NoTrip { over } => latency.is_none() && observed_for >= over - TIME_SLACK,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Trip { within } => write!(f, "trip<{within}s"),
            Verdict::NoTrip { over } => write!(f, "no_trip>{over}s"),
        }
    }
}

/// Published outcome for a case under its configured detection mode.
///
/// Hybrid mode trips every island case. SMS alone on the quality-factor sweep
/// trips only below Q_f = 1.8. With detection off the island lasts unless the
/// load resonance itself is outside the frequency band. Load switching never
/// trips.
pub fn expected_verdict(suite: SuiteName, spec: &ScenarioSpec) -> Verdict {
    let trip = Verdict::Trip {
        within: DETECTION_DEADLINE,
    };
    let no_trip = Verdict::NoTrip {
        over: NO_TRIP_WINDOW,
    };
    if suite == SuiteName::LoadSwitching {
        return Verdict::NoTrip { over: 3.0 };
    }
    let load = match spec.resolved_load() {
        Ok(l) => l,
        Err(_) => return no_trip,
    };
    match spec.detection.sms.mode {
        SmsMode::ArmedByRocof => trip,
        SmsMode::AlwaysOn if suite == SuiteName::QfSweep => {
            if load.q_f() >= 1.8 {
                no_trip
            } else {
                trip
            }
        }
        SmsMode::AlwaysOn => trip,
        SmsMode::Off => {
            if spec.detection.relays.in_band(load.f_0()) {
                no_trip
            } else {
                trip
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f_r(l: f64, c: f64) -> f64 {
        1.0 / (std::f64::consts::TAU * (l * c).sqrt())
    }

    #[test]
    fn names_round_trip() {
        for n in SuiteName::ALL {
            assert_eq!(n.as_str().parse::<SuiteName>().unwrap(), n);
        }
        assert!(matches!(
            "bogus".parse::<SuiteName>(),
            Err(Error::UnknownSuite(_))
        ));
    }

    #[test]
    fn case_counts() {
        assert_eq!(build_suite(SuiteName::Ul1741P).len(), 3);
        assert_eq!(build_suite(SuiteName::Ul1741Q).len(), 7);
        assert_eq!(build_suite(SuiteName::QfSweep).len(), 7);
        assert_eq!(build_suite(SuiteName::LoadSwitching).len(), 3);
        assert_eq!(build_suite(SuiteName::MultiDg).len(), 1);
    }

    #[test]
    fn every_case_validates() {
        for n in SuiteName::ALL {
            for spec in build_suite(n) {
                spec.validate()
                    .unwrap_or_else(|e| panic!("{}: {e}", spec.name));
            }
        }
    }

    #[test]
    fn island_at_two_seconds() {
        for n in [SuiteName::Ul1741P, SuiteName::Ul1741Q, SuiteName::QfSweep] {
            for spec in build_suite(n) {
                assert_eq!(spec.island_time(), Some(2.0));
            }
        }
        for spec in build_suite(SuiteName::LoadSwitching) {
            assert_eq!(spec.island_time(), None);
            assert_eq!(spec.events[0].t, 2.0);
            assert_eq!(spec.events[1].t, 3.0);
        }
    }

    #[test]
    fn first_reactive_case_sizing() {
        let spec = &build_suite(SuiteName::Ul1741Q)[0];
        let l = spec.resolved_load().unwrap();
        assert!((l.l - 0.003278).abs() / 0.003278 < 5e-3);
        assert!((f_r(l.l, l.c) - 61.6).abs() < 0.2);
    }

    #[test]
    fn highest_quality_factor_sizing() {
        let spec = build_suite(SuiteName::QfSweep).pop().unwrap();
        let l = spec.resolved_load().unwrap();
        assert!((l.l * 1e3 - 0.754).abs() < 0.001 * 0.754 * 1e3 + 5e-4);
        assert!((l.c * 1e6 - 9330.0).abs() / 9330.0 < 5e-3);
    }

    #[test]
    fn multi_dg_splits_rating() {
        let spec = &build_suite(SuiteName::MultiDg)[0];
        assert_eq!(spec.dg.len(), 2);
        assert_eq!(spec.total_rated_power(), RATED_POWER);
        let single = &build_suite(SuiteName::Ul1741P)[1];
        assert_eq!(
            spec.resolved_load().unwrap(),
            single.resolved_load().unwrap()
        );
    }

    #[test]
    fn verdicts_follow_mode() {
        let mut spec = build_suite(SuiteName::QfSweep)[3].clone();
        assert!(matches!(
            expected_verdict(SuiteName::QfSweep, &spec),
            Verdict::Trip { .. }
        ));
        spec.detection.sms.mode = SmsMode::AlwaysOn;
        assert!(matches!(
            expected_verdict(SuiteName::QfSweep, &spec),
            Verdict::NoTrip { .. }
        ));
        spec.load = LoadSpec::Power {
            pct_p: 100.0,
            pct_q: 100.0,
            q_f: 1.0,
        };
        assert!(matches!(
            expected_verdict(SuiteName::QfSweep, &spec),
            Verdict::Trip { .. }
        ));
        let mut spec = build_suite(SuiteName::Ul1741Q)[0].clone();
        spec.detection.sms.mode = SmsMode::Off;
        assert!(matches!(
            expected_verdict(SuiteName::Ul1741Q, &spec),
            Verdict::Trip { .. }
        ));
    }

    #[test]
    fn verdict_acceptance() {
        let v = Verdict::Trip { within: 2.0 };
        assert!(v.accepts(Some(1.2), 3.0));
        assert!(!v.accepts(Some(2.5), 3.0));
        assert!(!v.accepts(None, 10.0));
        let v = Verdict::NoTrip { over: 10.0 };
        assert!(v.accepts(None, 10.0));
        assert!(!v.accepts(None, 9.0));
        assert!(!v.accepts(Some(5.0), 10.0));
    }
}
