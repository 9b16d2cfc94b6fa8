use std::collections::BTreeMap;
use std::fmt::Write as _;

use islandguard::detection::TripCause;
use islandguard::scenarios::{expected_verdict, SuiteName, Verdict};
use islandguard::{ScenarioResult, ScenarioSpec};
use serde::{Deserialize, Serialize};

use crate::output::fmt9;

/// Expected verdicts read from `--expect`: per-case entries, then `default`,
/// then the published outcome.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectFile {
    #[serde(default)]
    pub default: Option<Verdict>,
    #[serde(default)]
    pub cases: BTreeMap<String, Verdict>,
}

impl ExpectFile {
    pub fn verdict_for(&self, suite: Option<SuiteName>, spec: &ScenarioSpec) -> Verdict {
        self.cases
            .get(&spec.name)
            .copied()
            .or(self.default)
            .unwrap_or_else(|| published_verdict(suite, spec))
    }
}

/// Outcome expected for a case that is not listed anywhere.
pub fn published_verdict(suite: Option<SuiteName>, spec: &ScenarioSpec) -> Verdict {
    match (suite, spec.island_time()) {
        (Some(s), _) => expected_verdict(s, spec),
        (None, Some(_)) => expected_verdict(SuiteName::Ul1741P, spec),
        (None, None) => Verdict::NoTrip {
            over: spec.solver.t_end - first_event(spec),
        },
    }
}

fn first_event(spec: &ScenarioSpec) -> f64 {
    spec.events.first().map_or(0.0, |e| e.t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub case_id: String,
    pub expected: Verdict,
    pub observed: String,
    pub detection_latency: Option<f64>,
    pub cause: Option<TripCause>,
    pub max_abs_rocof: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub pass: bool,
}

impl CaseReport {
    pub fn new(spec: &ScenarioSpec, result: &ScenarioResult, expected: Verdict) -> Self {
        let reference = result.t_island.unwrap_or_else(|| first_event(spec));
        let observed_for = result.t_final - reference;
        let latency = match (result.t_trip, result.detection_latency) {
            (_, Some(l)) => Some(l),
            (Some(t), None) => Some(t - reference),
            (None, None) => None,
        };
        let observed = match (latency, result.cause) {
            (Some(l), Some(c)) => format!("trip {}s {c}", fmt9(l)),
            (Some(l), None) => format!("trip {}s", fmt9(l)),
            _ => format!("no_trip {}s", fmt9(observed_for)),
        };
        Self {
            case_id: spec.name.clone(),
            expected,
            observed,
            detection_latency: result.detection_latency,
            cause: result.cause,
            max_abs_rocof: result.max_abs_rocof,
            f_min: result.f_min,
            f_max: result.f_max,
            pass: expected.accepts(latency, observed_for),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub suite: String,
    pub cases: Vec<CaseReport>,
    pub suite_pass: bool,
}

impl RunReport {
    pub fn new(suite: impl Into<String>, cases: Vec<CaseReport>) -> Self {
        let suite_pass = cases.iter().all(|c| c.pass);
        Self {
            suite: suite.into(),
            cases,
            suite_pass,
        }
    }

    /// Concatenate several reports; passes only if every part passes.
    pub fn merge(suite: impl Into<String>, parts: Vec<RunReport>) -> Self {
        Self::new(suite, parts.into_iter().flat_map(|r| r.cases).collect())
    }

    pub fn table(&self) -> String {
        let width = self
            .cases
            .iter()
            .map(|c| c.case_id.len())
            .max()
            .unwrap_or(4)
            .max(4);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:<16}  {:<34}  {:<15}  {:<15}  {:<15}  result",
            "case", "expected", "observed", "max_abs_rocof", "f_min", "f_max"
        );
        for c in &self.cases {
            let _ = writeln!(
                out,
                "{:<width$}  {:<16}  {:<34}  {:<15}  {:<15}  {:<15}  {}",
                c.case_id,
                c.expected.to_string(),
                c.observed,
                fmt9(c.max_abs_rocof),
                fmt9(c.f_min),
                fmt9(c.f_max),
                if c.pass { "PASS" } else { "FAIL" }
            );
        }
        let passed = self.cases.iter().filter(|c| c.pass).count();
        let _ = writeln!(
            out,
            "suite {}: {passed}/{} cases pass, suite {}",
            self.suite,
            self.cases.len(),
            if self.suite_pass { "PASS" } else { "FAIL" }
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_toml;
    use islandguard::scenarios::build_suite;

    #[test]
    fn expect_file_lookup_order() {
        let e: ExpectFile = parse_toml(
            "default = { verdict = \"no_trip\", over = 10.0 }\n[cases.\"qf_sweep_0.5\"]\nverdict = \"trip\"\nwithin = 2.0\n",
        )
        .unwrap();
        let suite = build_suite(SuiteName::QfSweep);
        assert_eq!(
            e.verdict_for(None, &suite[0]),
            Verdict::Trip { within: 2.0 }
        );
        assert_eq!(
            e.verdict_for(None, &suite[1]),
            Verdict::NoTrip { over: 10.0 }
        );
        let empty = ExpectFile::default();
        assert_eq!(
            empty.verdict_for(Some(SuiteName::QfSweep), &suite[1]),
            expected_verdict(SuiteName::QfSweep, &suite[1])
        );
    }

    #[test]
    fn unknown_expect_key_rejected() {
        assert!(parse_toml::<ExpectFile>("defaults = 1\n").is_err());
    }

    #[test]
    fn switching_case_defaults_to_no_trip() {
        let mut spec = build_suite(SuiteName::LoadSwitching).remove(0);
        spec.name = "x".into();
        assert_eq!(
            published_verdict(None, &spec),
            Verdict::NoTrip { over: 4.0 }
        );
    }

    fn case(pass: bool) -> CaseReport {
        CaseReport {
            case_id: "c".into(),
            expected: Verdict::Trip { within: 2.0 },
            observed: String::new(),
            detection_latency: None,
            cause: None,
            max_abs_rocof: 0.0,
            f_min: 60.0,
            f_max: 60.0,
            pass,
        }
    }

    #[test]
    fn suite_passes_iff_every_case_passes() {
        assert!(RunReport::new("s", vec![case(true), case(true)]).suite_pass);
        assert!(!RunReport::new("s", vec![case(true), case(false)]).suite_pass);
        let merged = RunReport::merge(
            "all",
            vec![
                RunReport::new("a", vec![case(true)]),
                RunReport::new("b", vec![case(false)]),
            ],
        );
        assert!(!merged.suite_pass);
        assert!(merged.table().contains("1/2 cases pass"));
    }
}
