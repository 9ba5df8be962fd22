//! Trace CSV reading and study output directories.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiments::StudyOutcome;
use crate::signal::SignalTrace;

const TRACE_HEADER: [&str; 2] = ["time_s", "pressure_pa"];

/// Relative deviation from the mean step tolerated in the time column.
const STEP_TOLERANCE: f64 = 1e-6;

fn parse_error(message: impl Into<String>, line: Option<u64>) -> Error {
    Error::Parse { message: message.into(), location: line.map(|l| (l as usize, 1)) }
}

/// Reads `time_s,pressure_pa` rows on a uniform time axis.
pub fn parse_trace_csv(text: &str) -> Result<SignalTrace> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| parse_error(e.to_string(), Some(1)))?.clone();
    if header.len() != 2 || header.iter().zip(TRACE_HEADER).any(|(h, want)| !h.eq_ignore_ascii_case(want)) {
        return Err(parse_error(format!("expected header `time_s,pressure_pa`, found `{}`", header.iter().collect::<Vec<_>>().join(",")), Some(1)));
    }
    let (mut times, mut samples) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_error(e.to_string(), e.position().map(|p| p.line())))?;
        let line = rec.position().map(|p| p.line());
        if rec.len() != 2 {
            return Err(parse_error(format!("expected 2 fields, found {}", rec.len()), line));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_error(format!("`{s}` is not a finite number"), line))
        };
        times.push(num(&rec[0])?);
        samples.push(num(&rec[1])?);
    }
    if times.len() < 2 {
        return Err(parse_error(format!("need at least 2 samples, found {}", times.len()), None));
    }
    let span = times[times.len() - 1] - times[0];
    let dt = span / (times.len() - 1) as f64;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(parse_error("time column must increase", None));
    }
    for (i, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > STEP_TOLERANCE * dt {
            return Err(parse_error(format!("non-uniform time step {:e} s (mean {dt:e} s)", w[1] - w[0]), Some(i as u64 + 3)));
        }
    }
    SignalTrace::new(samples, 1.0 / dt, times[0])
}

pub fn read_trace_csv(path: &Path) -> Result<SignalTrace> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace_csv(&text)
}

pub fn trace_to_csv(trace: &SignalTrace) -> String {
    let mut s = format!("{}\n", TRACE_HEADER.join(","));
    for (i, p) in trace.samples.iter().enumerate() {
        s.push_str(&format!("{:e},{p:e}\n", trace.time(i)));
    }
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `report.json`, `features.csv` and one trace and spectrum CSV per run;
/// returns the paths written.
pub fn write_study(dir: &Path, outcome: &StudyOutcome) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, contents: &str| -> Result<()> {
        let p = dir.join(name);
        write_file(&p, contents)?;
        written.push(p);
        Ok(())
    };
    for a in &outcome.artifacts {
        put(&format!("trace_{}.csv", a.stem), &trace_to_csv(&a.trace))?;
        put(&format!("spectrum_{}.csv", a.stem), &a.spectrum.to_csv())?;
    }
    put("features.csv", &outcome.report.table.to_csv())?;
    put("report.json", &outcome.report.to_json())?;
    Ok(written)
}
