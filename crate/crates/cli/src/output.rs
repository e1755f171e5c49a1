use std::fmt::Write as _;
use std::path::Path;

use renewal_coupling::bounds::{BoundReport, TvPoint};
use renewal_coupling::sim::{SimReport, TvEstimate, Verdict};
use serde::{Deserialize, Serialize};

use crate::Failure;

pub const TV_HEADER: &str = "t,analytic_bound,empirical_tv";
pub const TAU_HEADER: &str = "tau";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictFile {
    pub pass: bool,
    pub verdicts: Vec<Verdict>,
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::runtime(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    write(path, &text)
}

/// 17 significant digits: exact round trip for `f64`.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_tv_csv(path: &Path, analytic: &[TvPoint<f64>], empirical: &[TvEstimate]) -> Result<(), Failure> {
    let mut text = format!("{TV_HEADER}\n");
    for (i, p) in analytic.iter().enumerate() {
        let emp = empirical.get(i).map_or(String::new(), |e| num(e.estimate));
        writeln!(text, "{},{},{}", num(p.t), num(p.bound), emp).expect("write to string");
    }
    write(path, &text)
}

pub fn write_tau_csv(path: &Path, tau: &[f64]) -> Result<(), Failure> {
    let mut text = format!("{TAU_HEADER}\n");
    for &t in tau {
        writeln!(text, "{}", num(t)).expect("write to string");
    }
    write(path, &text)
}

fn parse_field(s: &str, line: usize, path: &Path) -> Result<f64, Failure> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Failure::invalid(format!("{}:{line}: `{s}` is not a number", path.display())))
}

fn check_csv(path: &Path, text: &str) -> Result<&'static str, Failure> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let bad = |line: usize, what: &str| Failure::invalid(format!("{}:{line}: {what}", path.display()));
    match header {
        TV_HEADER => {
            let mut prev: Option<(f64, f64)> = None;
            for (i, row) in lines.enumerate() {
                let line = i + 2;
                let cols: Vec<&str> = row.split(',').collect();
                if cols.len() != 3 {
                    return Err(bad(line, "expected 3 columns"));
                }
                let t = parse_field(cols[0], line, path)?;
                let bound = parse_field(cols[1], line, path)?;
                if !cols[2].is_empty() {
                    let e = parse_field(cols[2], line, path)?;
                    if !(0.0..=1.0).contains(&e) {
                        return Err(bad(line, "empirical_tv outside [0, 1]"));
                    }
                }
                if !(t > 0.0) || !(0.0..=1.0).contains(&bound) {
                    return Err(bad(line, "t must be positive and analytic_bound in [0, 1]"));
                }
                if let Some((pt, pb)) = prev {
                    if !(t > pt) || bound > pb {
                        return Err(bad(line, "t must increase and analytic_bound must not increase"));
                    }
                }
                prev = Some((t, bound));
            }
            Ok("tv curve")
        }
        TAU_HEADER => {
            for (i, row) in lines.enumerate() {
                let t = parse_field(row, i + 2, path)?;
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(bad(i + 2, "tau must be a finite time >= 0"));
                }
            }
            Ok("tau samples")
        }
        other => Err(Failure::invalid(format!(
            "{}: unrecognised CSV header `{other}`",
            path.display()
        ))),
    }
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, Failure> {
    serde_json::from_str(text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn check_json(path: &Path, text: &str) -> Result<&'static str, Failure> {
    let value: serde_json::Value = parse_json(path, text)?;
    let has = |k: &str| value.get(k).is_some();
    if has("params") && has("poly") {
        let r: BoundReport = parse_json(path, text)?;
        r.validate()?;
        Ok("bound report")
    } else if has("tau_samples") {
        let r: SimReport = parse_json(path, text)?;
        r.validate()?;
        Ok("simulation report")
    } else if has("verdicts") {
        let r: VerdictFile = parse_json(path, text)?;
        for v in &r.verdicts {
            let consistent = match v.relation.as_str() {
                "le" => v.pass == (v.estimate <= v.reference + v.margin),
                "ge" => v.pass == (v.estimate >= v.reference - v.margin),
                "within" => v.pass == ((v.estimate - v.reference).abs() <= v.margin),
                _ => false,
            };
            if !consistent {
                return Err(Failure::invalid(format!(
                    "{}: verdict `{}` is inconsistent with its numbers",
                    path.display(),
                    v.name
                )));
            }
        }
        if r.pass != r.verdicts.iter().all(|v| v.pass) {
            return Err(Failure::invalid(format!("{}: `pass` disagrees with the verdicts", path.display())));
        }
        Ok("verdicts")
    } else {
        Err(Failure::invalid(format!("{}: not a recognised report", path.display())))
    }
}

/// Re-read an emitted file and validate it; returns what kind of file it was.
pub fn check_file(path: &Path) -> Result<&'static str, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::invalid(format!("cannot read {}: {e}", path.display())))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => check_csv(path, &text),
        Some("json") => check_json(path, &text),
        _ => Err(Failure::invalid(format!(
            "{}: expected a .json or .csv report",
            path.display()
        ))),
    }
}
