use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use islandguard::ndz::NdzMap;
use islandguard::scenarios::TimeSeries;
use islandguard::ScenarioResult;

use crate::report::RunReport;

pub const SERIES_HEADER: [&str; 14] = [
    "t",
    "va",
    "vb",
    "vc",
    "ia",
    "ib",
    "ic",
    "f_est",
    "dfdt",
    "v_pu",
    "theta_sms_deg",
    "mode",
    "breaker",
    "trip",
];

/// Fixed scientific format with 9 significant digits.
pub fn fmt9(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        x.to_string().to_lowercase()
    }
}

fn flag(b: bool) -> String {
    u8::from(b).to_string()
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_series(path: &Path, s: &TimeSeries) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(SERIES_HEADER)?;
    for k in 0..s.len() {
        let (v, i) = (s.v_pcc[k], s.i_inv[k]);
        w.write_record([
            fmt9(s.t[k]),
            fmt9(v.a),
            fmt9(v.b),
            fmt9(v.c),
            fmt9(i.a),
            fmt9(i.b),
            fmt9(i.c),
            fmt9(s.f_est[k]),
            fmt9(s.df_dt[k]),
            fmt9(s.v_pu[k]),
            fmt9(s.theta_sms_deg[k]),
            s.mode[k].to_string(),
            flag(s.breaker_closed[k]),
            flag(s.tripped[k]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn summary_text(r: &ScenarioResult) -> String {
    let opt = |x: Option<f64>| x.map_or_else(|| "none".to_string(), fmt9);
    let lines = [
        ("name", r.name.clone()),
        ("tripped", r.tripped.to_string()),
        (
            "cause",
            r.cause
                .map_or_else(|| "none".to_string(), |c| c.to_string()),
        ),
        ("t_island", opt(r.t_island)),
        ("t_trip", opt(r.t_trip)),
        ("detection_latency", opt(r.detection_latency)),
        ("max_abs_rocof", fmt9(r.max_abs_rocof)),
        ("f_min", fmt9(r.f_min)),
        ("f_max", fmt9(r.f_max)),
        ("f_settled", fmt9(r.f_settled)),
        ("max_excursion", fmt9(r.max_excursion)),
        ("v_min", fmt9(r.v_min)),
        ("v_max", fmt9(r.v_max)),
        ("arm_count", r.arm_count.to_string()),
        ("longest_armed", fmt9(r.longest_armed)),
        ("armed_trips", r.armed_trips.to_string()),
        ("overmodulated", r.overmodulated.to_string()),
        ("t_final", fmt9(r.t_final)),
    ];
    lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Time against relay frequency, one column per case; cases that stopped
/// early leave their remaining cells empty.
pub fn write_frequency_plot(path: &Path, results: &[ScenarioResult]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["t".to_string()];
    header.extend(results.iter().map(|r| r.name.clone()));
    w.write_record(&header)?;
    let Some(longest) = results.iter().max_by_key(|r| r.series.len()) else {
        w.flush()?;
        return Ok(());
    };
    for (k, &t) in longest.series.t.iter().enumerate() {
        let mut row = vec![fmt9(t)];
        row.extend(
            results
                .iter()
                .map(|r| r.series.f_est.get(k).map_or_else(String::new, |&f| fmt9(f))),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report(dir: &Path, report: &RunReport) -> Result<()> {
    fs::write(dir.join("report.txt"), report.table())?;
    let mut w = writer(&dir.join("report.csv"))?;
    w.write_record([
        "case_id",
        "expected",
        "observed",
        "detection_latency",
        "cause",
        "max_abs_rocof",
        "f_min",
        "f_max",
        "pass",
    ])?;
    for c in &report.cases {
        w.write_record([
            c.case_id.clone(),
            c.expected.to_string(),
            c.observed.clone(),
            c.detection_latency.map_or_else(String::new, fmt9),
            c.cause.map_or_else(String::new, |x| x.to_string()),
            fmt9(c.max_abs_rocof),
            fmt9(c.f_min),
            fmt9(c.f_max),
            c.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ndz(dir: &Path, map: &NdzMap) -> Result<()> {
    let mut w = writer(&dir.join("ndz_grid.csv"))?;
    w.write_record(["q_f", "f_0", "f_island", "inside_ndz"])?;
    for p in &map.points {
        w.write_record([
            fmt9(p.q_f),
            fmt9(p.f_0),
            p.f_island.map_or_else(String::new, fmt9),
            p.inside_ndz.to_string(),
        ])?;
    }
    w.flush()?;
    let mut w = writer(&dir.join("ndz_boundary.csv"))?;
    w.write_record(["q_f", "f_0"])?;
    for &(q, f) in &map.boundary {
        w.write_record([fmt9(q), fmt9(f)])?;
    }
    w.flush()?;
    Ok(())
}
