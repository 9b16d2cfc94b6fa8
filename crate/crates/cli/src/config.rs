use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use clap::Args;
use islandguard::detection::SmsMode;
use islandguard::ScenarioSpec;
use serde::de::DeserializeOwned;

/// Parse structured text, reporting the dotted key path of any schema error.
pub fn parse_toml<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = toml::Deserializer::parse(text).map_err(|e| anyhow!("syntax error: {e}"))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let message = inner.message().to_string();
        if path == "." {
            anyhow!("schema error: {message}")
        } else {
            anyhow!("schema error at `{path}`: {message}")
        }
    })
}

pub fn parse_spec(text: &str) -> Result<ScenarioSpec> {
    let spec: ScenarioSpec = parse_toml(text)?;
    spec.validate()?;
    Ok(spec)
}

pub fn load_spec(path: &Path) -> Result<ScenarioSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_spec(&text).with_context(|| format!("in {}", path.display()))
}

/// Command-line replacements for scenario fields.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Solver step, s.
    #[arg(long)]
    pub dt: Option<f64>,
    /// SMS maximum phase shift, degrees.
    #[arg(long = "theta-m")]
    pub theta_m: Option<f64>,
    /// Frequency of maximum SMS phase shift, Hz.
    #[arg(long = "f-m")]
    pub f_m: Option<f64>,
    /// ROCOF pickup, Hz/s.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// ROCOF voltage blocking threshold, pu.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Detection mode: off, always_on or armed_by_rocof.
    #[arg(long, alias = "detection")]
    pub mode: Option<SmsMode>,
}

impl Overrides {
    pub fn apply(&self, spec: &mut ScenarioSpec) -> Result<()> {
        let det = &mut spec.detection;
        if let Some(dt) = self.dt {
            spec.solver.dt = dt;
        }
        if let Some(v) = self.theta_m {
            det.sms.theta_m = v;
        }
        if let Some(v) = self.f_m {
            det.sms.f_m = v;
        }
        if let Some(v) = self.alpha {
            det.relays.alpha = v;
        }
        if let Some(v) = self.beta {
            det.relays.beta = v;
        }
        if let Some(m) = self.mode {
            det.sms.mode = m;
        }
        spec.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_fill_nested_fields() {
        let spec = parse_spec(
            "name = \"x\"\nsolver.dt = 2.5e-5\ndetection.sms.theta_m = 15.0\ndetection.sms.mode = \"always_on\"\n",
        )
        .unwrap();
        assert_eq!(spec.solver.dt, 2.5e-5);
        assert_eq!(spec.detection.sms.theta_m, 15.0);
        assert_eq!(spec.detection.sms.mode, SmsMode::AlwaysOn);
    }

    #[test]
    fn explicit_rlc_load() {
        let spec = parse_spec("load.r = 2.304\nload.l = 3.453e-3\nload.c = 2.037e-3\n").unwrap();
        let l = spec.resolved_load().unwrap();
        assert!((l.q_f() - 1.77).abs() < 1e-3);
    }

    #[test]
    fn negative_dt_names_key() {
        let err = parse_spec("solver.dt = -1e-5\n").unwrap_err();
        assert!(format!("{err:#}").contains("solver.dt"), "{err:#}");
    }

    #[test]
    fn type_error_names_key() {
        let err = parse_spec("solver.t_end = \"long\"\n").unwrap_err();
        assert!(format!("{err:#}").contains("solver.t_end"), "{err:#}");
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse_spec("detection.relays.gamma = 1.0\n").unwrap_err();
        let msg = format!("{err:#}");
        assert!(
            msg.contains("detection.relays") && msg.contains("gamma"),
            "{msg}"
        );
    }

    #[test]
    fn overrides_apply_and_validate() {
        let mut spec = ScenarioSpec::default();
        let o = Overrides {
            theta_m: Some(15.0),
            mode: Some(SmsMode::Off),
            ..Overrides::default()
        };
        o.apply(&mut spec).unwrap();
        assert_eq!(spec.detection.sms.theta_m, 15.0);
        assert_eq!(spec.detection.sms.mode, SmsMode::Off);
        let bad = Overrides {
            dt: Some(-1.0),
            ..Overrides::default()
        };
        assert!(bad.apply(&mut spec).is_err());
    }
}
