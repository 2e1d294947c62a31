//! CSV and JSON artifacts for runs and searches.
//!
//! Floats in CSV files use 17 significant digits, `,` separators and LF
//! line endings. Every file is written to a temporary sibling and renamed
//! into place so a failed run never leaves a truncated artifact.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::damping::DampingProfile;
use crate::dichotomy::{DichotomyResult, StaircaseResult, Trial};
use crate::simulation::{NormRow, NormSeries, Outcome, SimulationReport, Snapshot};

pub const NORMS_HEADER: &str = "t,dt,l2,h1,hgamma,linf,D";
pub const SNAPSHOTS_HEADER: &str = "t,x,u";
pub const ENERGY_HEADER: &str = "t,energy";
pub const PROFILE_HEADER: &str = "mode,gamma";
pub const ENVELOPES_HEADER: &str = "mode,k,staircase_a,staircase_e,gamma1,gamma2";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `{:.16e}`: 17 significant digits, exact round trip for f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write `contents` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), OutputError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(contents).map_err(io_err(path))?;
    tmp.flush().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| OutputError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> Result<(), OutputError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn norms_csv(series: &NormSeries) -> String {
    let mut out = String::from(NORMS_HEADER);
    out.push('\n');
    for r in &series.rows {
        let fields = [r.t, r.dt, r.l2, r.h1, r.hgamma, r.linf, r.dissipation];
        let line: Vec<String> = fields.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn parse_row(line: &str, lineno: usize, width: usize) -> Result<Vec<f64>, OutputError> {
    let vals: Vec<f64> = line
        .split(',')
        .map(|f| f.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| OutputError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
    if vals.len() != width {
        return Err(OutputError::Parse {
            line: lineno,
            message: format!("expected {width} fields, found {}", vals.len()),
        });
    }
    Ok(vals)
}

fn check_header(text: &str, header: &str) -> Result<(), OutputError> {
    match text.lines().next() {
        Some(h) if h == header => Ok(()),
        other => Err(OutputError::Parse {
            line: 1,
            message: format!("expected header {header:?}, found {other:?}"),
        }),
    }
}

pub fn parse_norms_csv(text: &str) -> Result<NormSeries, OutputError> {
    check_header(text, NORMS_HEADER)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let v = parse_row(line, i + 1, 7)?;
        rows.push(NormRow {
            t: v[0],
            dt: v[1],
            l2: v[2],
            h1: v[3],
            hgamma: v[4],
            linf: v[5],
            dissipation: v[6],
        });
    }
    Ok(NormSeries { rows })
}

pub fn snapshots_csv(snapshots: &[Snapshot]) -> String {
    let mut out = String::from(SNAPSHOTS_HEADER);
    out.push('\n');
    for snap in snapshots {
        let grid = snap.field.grid();
        for (i, u) in snap.field.values().iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", fmt_f64(snap.t), fmt_f64(grid.x(i)), fmt_f64(*u));
        }
    }
    out
}

pub fn energy_csv(report: &SimulationReport) -> String {
    let mut out = String::from(ENERGY_HEADER);
    out.push('\n');
    for row in &report.energy {
        let _ = writeln!(out, "{},{}", fmt_f64(row.t), fmt_f64(row.energy));
    }
    out
}

fn outcome_fields(outcome: &Outcome, map: &mut Map<String, Value>) {
    match outcome {
        Outcome::Completed { t_end } => {
            map.insert("outcome".into(), json!("completed"));
            map.insert("t_end".into(), json!(t_end));
        }
        Outcome::BlowUp { t_detect, trigger } => {
            map.insert("outcome".into(), json!("blow_up"));
            map.insert("t_detect".into(), json!(t_detect));
            map.insert("trigger".into(), serde_json::to_value(trigger).unwrap_or(Value::Null));
        }
        Outcome::Failure { description } => {
            map.insert("outcome".into(), json!("failure"));
            map.insert("description".into(), json!(description));
        }
    }
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

pub fn outcome_json(report: &SimulationReport) -> Result<Value, OutputError> {
    let mut map = Map::new();
    outcome_fields(&report.outcome, &mut map);
    map.insert("theta".into(), finite_or_null(report.theta));
    map.insert(
        "dissipation_residual".into(),
        finite_or_null(report.dissipation_residual),
    );
    map.insert("steps".into(), json!(report.steps));
    map.insert("picard_sweeps".into(), json!(report.picard_sweeps));
    map.insert("config".into(), serde_json::to_value(&report.config)?);
    Ok(Value::Object(map))
}

/// norms.csv, energy.csv, snapshots.csv and outcome.json under `dir`.
pub fn write_simulation(dir: &Path, report: &SimulationReport) -> Result<(), OutputError> {
    write_atomic(&dir.join("norms.csv"), norms_csv(&report.norms).as_bytes())?;
    write_atomic(&dir.join("energy.csv"), energy_csv(report).as_bytes())?;
    write_atomic(
        &dir.join("snapshots.csv"),
        snapshots_csv(&report.snapshots).as_bytes(),
    )?;
    write_json(&dir.join("outcome.json"), &outcome_json(report)?)
}

fn trial_json(trial: &Trial) -> Result<Value, OutputError> {
    let mut map = Map::new();
    map.insert("level".into(), json!(trial.level));
    map.insert("gamma_spec".into(), serde_json::to_value(&trial.gamma_spec)?);
    outcome_fields(&trial.outcome, &mut map);
    Ok(Value::Object(map))
}

pub fn search_json(result: &DichotomyResult) -> Result<Value, OutputError> {
    let trials = result
        .trials
        .iter()
        .map(trial_json)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(json!({
        "kind": result.kind,
        "cutoff": result.cutoff,
        "bracket": { "gamma_a": result.gamma_a, "gamma_e": result.gamma_e },
        "trials": trials,
        "scale_steps": result.scale_steps,
        "iterations": result.iterations,
    }))
}

pub fn staircase_json(stair: &StaircaseResult) -> Result<Value, OutputError> {
    let bands = stair
        .bands
        .iter()
        .map(search_json)
        .collect::<Result<Vec<_>, _>>()?;
    let constant = search_json(&stair.constant)?;
    let iterations =
        stair.constant.iterations + stair.bands.iter().map(|b| b.iterations).sum::<usize>();
    Ok(json!({
        "kind": "staircase",
        "cutoffs": stair.cutoffs,
        "bracket": constant["bracket"].clone(),
        "trials": constant["trials"].clone(),
        "iterations": iterations,
        "simulations": stair.trial_count(),
        "bands": bands,
    }))
}

pub fn profile_csv(profile: &DampingProfile) -> String {
    let mut out = String::from(PROFILE_HEADER);
    out.push('\n');
    for (mode, g) in profile.by_abs_mode().iter().enumerate() {
        let _ = writeln!(out, "{mode},{}", fmt_f64(*g));
    }
    out
}

/// `(mode, gamma)` rows of a profile file.
pub fn parse_profile_csv(text: &str) -> Result<Vec<(u64, f64)>, OutputError> {
    check_header(text, PROFILE_HEADER)?;
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, line)| {
            let v = parse_row(line, i + 1, 2)?;
            Ok((v[0] as u64, v[1]))
        })
        .collect()
}

pub fn envelopes_csv(
    stair: &StaircaseResult,
    gamma1: &DampingProfile,
    gamma2: &DampingProfile,
) -> String {
    let grid = stair.profile_a.grid();
    let mut out = String::from(ENVELOPES_HEADER);
    out.push('\n');
    for mode in 0..=grid.max_mode() {
        let _ = writeln!(
            out,
            "{mode},{},{},{},{},{}",
            fmt_f64(grid.wavenumber(mode)),
            fmt_f64(stair.profile_a.gamma(mode)),
            fmt_f64(stair.profile_e.gamma(mode)),
            fmt_f64(gamma1.gamma(mode)),
            fmt_f64(gamma2.gamma(mode)),
        );
    }
    out
}

pub fn write_constant_search(dir: &Path, result: &DichotomyResult) -> Result<(), OutputError> {
    write_json(&dir.join("search.json"), &search_json(result)?)?;
    write_atomic(&dir.join("profile.csv"), profile_csv(&result.profile_a).as_bytes())
}

/// search.json, profile.csv and, when given, envelopes.csv under `dir`.
pub fn write_staircase(
    dir: &Path,
    stair: &StaircaseResult,
    envelopes: Option<(&DampingProfile, &DampingProfile)>,
) -> Result<(), OutputError> {
    let mut value = staircase_json(stair)?;
    if let Some((g1, g2)) = envelopes {
        value["envelopes"] = json!({
            "gamma1": serde_json::to_value(g1.spec())?,
            "gamma2": serde_json::to_value(g2.spec())?,
        });
        write_atomic(
            &dir.join("envelopes.csv"),
            envelopes_csv(stair, g1, g2).as_bytes(),
        )?;
    }
    write_json(&dir.join("search.json"), &value)?;
    write_atomic(&dir.join("profile.csv"), profile_csv(&stair.profile_a).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::damping::constant_profile;
    use crate::simulation::{run_simulation, InitialData, SimulationConfig};
    use crate::spectral::Grid;
    use crate::DampingSpec;

    fn small_report() -> SimulationReport {
        let mut cfg = SimulationConfig::perturbed_soliton();
        cfg.grid = Grid::new(10.0, 32).unwrap();
        cfg.initial = InitialData::Cosine {
            mode: 1,
            amplitude: 0.1,
        };
        cfg.damping = DampingSpec::Constant { gamma: 0.1 };
        cfg.t_end = 0.05;
        cfg.record_every = 1;
        cfg.snapshot_times = vec![0.02];
        run_simulation(&cfg).unwrap()
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.0), "-2.0000000000000000e0");
        let x = std::f64::consts::PI;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn norms_round_trip() {
        let report = small_report();
        let text = norms_csv(&report.norms);
        assert!(text.starts_with("t,dt,l2,h1,hgamma,linf,D\n"));
        assert!(!text.contains('\r'));
        assert_eq!(parse_norms_csv(&text).unwrap(), report.norms);
    }

    #[test]
    fn norms_parse_errors() {
        assert!(parse_norms_csv("t,x\n").is_err());
        assert!(parse_norms_csv(&format!("{NORMS_HEADER}\n1,2,3\n")).is_err());
        assert!(parse_norms_csv(&format!("{NORMS_HEADER}\n1,2,3,4,5,6,abc\n")).is_err());
    }

    #[test]
    fn snapshot_rows_in_long_format() {
        let report = small_report();
        let text = snapshots_csv(&report.snapshots);
        let n = report.snapshots.len() * 32;
        assert_eq!(text.lines().count(), n + 1);
        let first: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(first[1], -10.0);
    }

    #[test]
    fn outcome_json_fields() {
        let report = small_report();
        let v = outcome_json(&report).unwrap();
        assert_eq!(v["outcome"], "completed");
        assert!(v.get("t_detect").is_none());
        assert!(v["theta"].is_number() || v["theta"].is_null());
        let cfg: SimulationConfig = serde_json::from_value(v["config"].clone()).unwrap();
        assert_eq!(cfg, report.config);
    }

    #[test]
    fn profile_round_trip() {
        let grid = Grid::new(5.0, 16).unwrap();
        let p = constant_profile(&grid, 0.25).unwrap();
        let rows = parse_profile_csv(&profile_csv(&p)).unwrap();
        assert_eq!(rows.len(), 9);
        assert!(rows.iter().all(|(_, g)| *g == 0.25));
    }

    #[test]
    fn atomic_write_creates_directories_and_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b/file.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(std::fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn simulation_files_written() {
        let dir = tempfile::tempdir().unwrap();
        write_simulation(dir.path(), &small_report()).unwrap();
        for f in ["norms.csv", "energy.csv", "snapshots.csv", "outcome.json"] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
    }
}
