//! Byte-stable JSON and CSV rendering of run reports.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::analysis::{write_records_csv, write_records_json, TrialRecord};
use crate::calibrate::{Calibration, Rates};
use crate::config::{Mode, OutputFormat, RunConfig};
use crate::experiment::{ExperimentReport, NetworkReport, OracleReport, RunError};
use crate::fusion::OutcomeClass;

/// Significant digits kept for every float in JSON output.
pub const JSON_DIGITS: usize = 12;

#[derive(Debug, Clone, Serialize)]
pub struct CalibrateReport {
    pub schema_version: u32,
    pub mode: Mode,
    pub seed: u64,
    pub calibration: Calibration,
    /// Input config with the fitted devices substituted.
    pub calibrated: RunConfig,
}

#[derive(Debug, Clone)]
pub enum Report {
    Experiment(Box<ExperimentReport>),
    OracleCheck(OracleReport),
    Network(NetworkReport),
    Calibrate(Box<CalibrateReport>),
}

fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", JSON_DIGITS - 1, x).parse().unwrap_or(x)
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_sig).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_floats),
        Value::Object(o) => o.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Pretty JSON with floats rounded to [`JSON_DIGITS`] significant digits.
pub fn to_json<T: Serialize>(value: &T) -> Result<String, RunError> {
    let mut v = serde_json::to_value(value).map_err(|e| RunError::Validation(e.to_string()))?;
    round_floats(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| RunError::Validation(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn f(x: f64) -> String {
    format!("{x:.12}")
}

fn csv_string(rows: Vec<Vec<String>>) -> Result<String, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).map_err(|e| RunError::Validation(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| RunError::Validation(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| RunError::Validation(e.to_string()))
}

fn row<const N: usize>(cells: [&str; N]) -> Vec<String> {
    cells.iter().map(|s| s.to_string()).collect()
}

fn experiment_csv(r: &ExperimentReport) -> Vec<Vec<String>> {
    let mut rows = vec![row([
        "condition", "basis", "n", "n_pp", "n_pm", "n_mp", "n_mm", "value", "sigma",
    ])];
    for class in OutcomeClass::ALL {
        for (basis, _) in &r.basis_allocation {
            let e = r.correlations.iter().find(|e| e.condition == class && e.basis == *basis);
            let c = e.map_or([0; 4], |e| e.counts.0);
            // XX and YY after a failure herald carry no two-spin information
            let reported = class != OutcomeClass::Failure || basis.to_string() == "ZZ";
            let (value, sigma) = match e {
                Some(e) if reported => (f(e.value), f(e.sigma)),
                _ => (String::new(), String::new()),
            };
            rows.push(vec![
                class.name().to_string(),
                basis.to_string(),
                c.iter().sum::<u64>().to_string(),
                c[0].to_string(),
                c[1].to_string(),
                c[2].to_string(),
                c[3].to_string(),
                value,
                sigma,
            ]);
        }
    }
    rows
}

fn oracle_csv(r: &OracleReport) -> Vec<Vec<String>> {
    let mut rows = vec![row([
        "indistinguishability",
        "eta",
        "p_bg",
        "number_resolving",
        "povm_deviation",
        "probability_deviation",
        "trace_distance",
        "pass",
    ])];
    for p in &r.points {
        rows.push(vec![
            f(p.indistinguishability),
            f(p.eta),
            f(p.p_bg),
            p.number_resolving.to_string(),
            format!("{:.6e}", p.povm_deviation),
            format!("{:.6e}", p.probability_deviation),
            format!("{:.6e}", p.trace_distance),
            (p.max_deviation() <= r.tolerance).to_string(),
        ]);
    }
    rows
}

fn network_csv(r: &NetworkReport) -> Vec<Vec<String>> {
    let opt = |x: Option<i8>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut rows = vec![row(["run", "fusion", "a", "b", "outcome", "zz", "xx"])];
    for run in &r.runs {
        for rec in &run.records {
            rows.push(vec![
                run.run.to_string(),
                rec.id.to_string(),
                rec.a.to_string(),
                rec.b.to_string(),
                rec.outcome.name().to_string(),
                opt(rec.zz),
                opt(rec.xx),
            ]);
        }
    }
    rows
}

fn calibrate_csv(r: &CalibrateReport) -> Vec<Vec<String>> {
    let c = &r.calibration;
    let mut rows = vec![row(["kind", "name", "value", "target", "sigma"])];
    for k in &c.knobs {
        let name = serde_json::to_value(k.knob)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        rows.push(vec!["knob".into(), name, f(k.value), String::new(), String::new()]);
    }
    let (p, t, s) = (c.predicted.to_vec(), c.targets.to_vec(), c.sigmas.to_vec());
    for (i, name) in Rates::NAMES.iter().enumerate() {
        rows.push(vec!["rate".into(), name.to_string(), f(p[i]), f(t[i]), f(s[i])]);
    }
    rows.push(vec!["fit".into(), "chi2".into(), f(c.chi2), String::new(), String::new()]);
    rows
}

impl Report {
    pub fn render(&self, format: OutputFormat) -> Result<String, RunError> {
        match format {
            OutputFormat::Json => match self {
                Report::Experiment(r) => to_json(r),
                Report::OracleCheck(r) => to_json(r),
                Report::Network(r) => to_json(r),
                Report::Calibrate(r) => to_json(r),
            },
            OutputFormat::Csv => csv_string(match self {
                Report::Experiment(r) => experiment_csv(r),
                Report::OracleCheck(r) => oracle_csv(r),
                Report::Network(r) => network_csv(r),
                Report::Calibrate(r) => calibrate_csv(r),
            }),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), RunError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Writes `report.{json,csv}` (plus records and the calibrated config when
/// present) into `dir`; returns the paths written.
pub fn write_outputs(
    dir: &Path,
    report: &Report,
    records: Option<&[TrialRecord]>,
    format: OutputFormat,
) -> Result<Vec<PathBuf>, RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let ext = match format {
        OutputFormat::Json => "json",
        OutputFormat::Csv => "csv",
    };
    let mut written = Vec::new();
    let path = dir.join(format!("report.{ext}"));
    write_file(&path, report.render(format)?.as_bytes())?;
    written.push(path);
    if let Some(records) = records {
        let path = dir.join(format!("records.{ext}"));
        let mut buf = Vec::new();
        match format {
            OutputFormat::Json => write_records_json(records, &mut buf)?,
            OutputFormat::Csv => write_records_csv(records, &mut buf)?,
        }
        write_file(&path, &buf)?;
        written.push(path);
    }
    if let Report::Calibrate(c) = report {
        let path = dir.join("calibrated.toml");
        write_file(&path, c.calibrated.to_toml()?.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
