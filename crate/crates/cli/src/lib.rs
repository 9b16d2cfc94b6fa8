//! Command-line front end: single scenarios, named suites and NDZ maps,
//! written as CSV and plain-text reports.

pub mod config;
pub mod output;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use islandguard::detection::{RelaySettings, SmsMode, SmsParams};
use islandguard::ndz::{ndz_map, Axis};
use islandguard::scenarios::{build_suite, SuiteName};
use islandguard::{run_scenario, ScenarioResult, ScenarioSpec};
use rayon::prelude::*;

use config::{load_spec, parse_toml, Overrides};
use report::{CaseReport, ExpectFile, RunReport};

#[derive(Debug, Parser)]
#[command(
    name = "islandguard",
    version,
    about = "Hybrid SMS/ROCOF islanding detection simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario from a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a named suite, or `all`.
    Suite {
        name: String,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Map the non-detection zone over quality factor and load resonance.
    Ndz(NdzArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Output directory.
    #[arg(long, env = "ISLANDGUARD_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Expected verdicts; the exit status then reflects the report.
    #[arg(long)]
    pub expect: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct NdzArgs {
    #[arg(long, env = "ISLANDGUARD_OUT", default_value = "out")]
    pub out: PathBuf,
    #[arg(long = "theta-m", default_value_t = 25.0)]
    pub theta_m: f64,
    #[arg(long = "f-m", default_value_t = 63.0)]
    pub f_m: f64,
    #[arg(long = "f-under", default_value_t = 59.3)]
    pub f_under: f64,
    #[arg(long = "f-over", default_value_t = 60.5)]
    pub f_over: f64,
    #[arg(long = "qf-min", default_value_t = 0.5)]
    pub qf_min: f64,
    #[arg(long = "qf-max", default_value_t = 8.1)]
    pub qf_max: f64,
    #[arg(long = "qf-points", default_value_t = 100)]
    pub qf_points: usize,
    #[arg(long = "f0-min", default_value_t = 57.0)]
    pub f0_min: f64,
    #[arg(long = "f0-max", default_value_t = 63.0)]
    pub f0_max: f64,
    #[arg(long = "f0-points", default_value_t = 100)]
    pub f0_points: usize,
}

/// Process exit classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    ExpectationFailed,
}

pub fn execute(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Run {
            config,
            common,
            overrides,
        } => cmd_run(&config, &common, &overrides),
        Command::Suite {
            name,
            common,
            overrides,
        } => cmd_suite(&name, &common, &overrides),
        Command::Ndz(args) => cmd_ndz(&args),
    }
}

fn read_expect(common: &CommonArgs) -> Result<Option<ExpectFile>> {
    common
        .expect
        .as_ref()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_toml(&text).with_context(|| format!("in {}", p.display()))
        })
        .transpose()
}

fn status(report: &RunReport, expect: &Option<ExpectFile>) -> Status {
    if expect.is_some() && !report.suite_pass {
        Status::ExpectationFailed
    } else {
        Status::Ok
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn cmd_run(config: &Path, common: &CommonArgs, overrides: &Overrides) -> Result<Status> {
    let mut spec = load_spec(config)?;
    overrides.apply(&mut spec)?;
    let expect = read_expect(common)?;
    let result = run_scenario(&spec)?;
    create_dir(&common.out)?;
    output::write_series(&common.out.join("series.csv"), &result.series)?;
    let verdict = expect.clone().unwrap_or_default().verdict_for(None, &spec);
    let case = CaseReport::new(&spec, &result, verdict);
    let mut summary = output::summary_text(&result);
    summary.push_str(&format!(
        "expected = {}\npass = {}\n",
        case.expected, case.pass
    ));
    fs::write(common.out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(status(
        &RunReport::new(spec.name.clone(), vec![case]),
        &expect,
    ))
}

fn run_suite(
    name: SuiteName,
    dir: &Path,
    expect: &ExpectFile,
    overrides: &Overrides,
) -> Result<RunReport> {
    let specs = build_suite(name)
        .into_iter()
        .map(|mut s| overrides.apply(&mut s).map(|_| s))
        .collect::<Result<Vec<ScenarioSpec>>>()?;
    let results = specs
        .par_iter()
        .map(run_scenario)
        .collect::<islandguard::Result<Vec<ScenarioResult>>>()?;
    create_dir(dir)?;
    for r in &results {
        output::write_series(&dir.join(format!("{}.csv", r.name)), &r.series)?;
    }
    output::write_frequency_plot(&dir.join("plot_frequency.csv"), &results)?;
    let cases = specs
        .iter()
        .zip(&results)
        .map(|(s, r)| CaseReport::new(s, r, expect.verdict_for(Some(name), s)))
        .collect();
    let report = RunReport::new(name.as_str(), cases);
    output::write_report(dir, &report)?;
    Ok(report)
}

pub fn cmd_suite(name: &str, common: &CommonArgs, overrides: &Overrides) -> Result<Status> {
    let names: Vec<SuiteName> = if name == "all" {
        SuiteName::ALL.to_vec()
    } else {
        vec![name.parse()?]
    };
    let expect = read_expect(common)?;
    let lookup = expect.clone().unwrap_or_default();
    let mut parts = Vec::new();
    for n in names {
        let report = run_suite(n, &common.out.join(n.as_str()), &lookup, overrides)?;
        print!("{}", report.table());
        parts.push(report);
    }
    let report = if parts.len() == 1 {
        parts.pop().expect("one report")
    } else {
        let merged = RunReport::merge(name, parts);
        output::write_report(&common.out, &merged)?;
        println!(
            "all suites: {}",
            if merged.suite_pass { "PASS" } else { "FAIL" }
        );
        merged
    };
    Ok(status(&report, &expect))
}

pub fn cmd_ndz(args: &NdzArgs) -> Result<Status> {
    let sms = SmsParams {
        theta_m: args.theta_m,
        f_m: args.f_m,
        mode: SmsMode::AlwaysOn,
        ..SmsParams::default()
    };
    sms.validate()?;
    let relays = RelaySettings {
        f_under: args.f_under,
        f_over: args.f_over,
        ..RelaySettings::default()
    };
    relays.validate()?;
    let map = ndz_map(
        Axis::new(args.qf_min, args.qf_max, args.qf_points),
        Axis::new(args.f0_min, args.f0_max, args.f0_points),
        &sms,
        (args.f_under, args.f_over),
    )?;
    create_dir(&args.out)?;
    output::write_ndz(&args.out, &map)?;
    let inside = map.points.iter().filter(|p| p.inside_ndz).count();
    println!(
        "ndz: {} grid points, {inside} inside, {} boundary points",
        map.points.len(),
        map.boundary.len()
    );
    Ok(Status::Ok)
}
