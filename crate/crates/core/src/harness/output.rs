//! Result CSV and calibration sidecar.
//!
//! Floats are written with 17 significant digits so every value parses back
//! to the same `f64`. Only the trailing `wall_clock_s` column varies between
//! identical runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::experiment::{summarize, Arm, MetricsReport};
use crate::error::{Error, Result};

pub const CSV_COLUMNS: [&str; 15] = [
    "run_id",
    "axis_value",
    "arm",
    "task_index",
    "excess_risk",
    "surrogate_loss",
    "v_bar_sq_realized",
    "n",
    "sigma_sq",
    "gamma",
    "eta",
    "epsilon",
    "delta",
    "seed",
    "wall_clock_s",
];

/// Arm label for meta-training rows.
pub const TRAIN_ARM: &str = "train";

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn to_csv(reports: &[MetricsReport]) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for r in reports {
        let c = &r.calibration;
        let tail = format!(
            "{},{},{},{},{},{},{},{},{:.6}",
            num(r.v_bar_sq_realized),
            c.steps_n,
            num(c.sigma_sq),
            num(c.gamma),
            num(c.eta),
            num(c.per_task.epsilon),
            num(c.per_task.delta),
            r.seed,
            r.wall_clock_s
        );
        let axis = opt(r.axis_value);
        for t in &r.train {
            let _ = writeln!(
                out,
                "{},{axis},{TRAIN_ARM},{},{},{},{tail}",
                r.run_id,
                t.task_index,
                opt(t.excess_risk_hat),
                num(t.surrogate_loss)
            );
        }
        for a in &r.arms {
            for (i, e) in a.excess.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{axis},{},{i},{},,{tail}",
                    r.run_id,
                    a.arm.as_str(),
                    num(*e)
                );
            }
        }
    }
    out
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut s = csv_path.as_os_str().to_owned();
    s.push(".calibration");
    PathBuf::from(s)
}

pub fn calibration_text(reports: &[MetricsReport]) -> String {
    if let [only] = reports {
        if only.axis_value.is_none() {
            return only.calibration.to_string();
        }
    }
    let mut s = String::new();
    for r in reports {
        let _ = writeln!(
            s,
            "[run {}{}]",
            r.run_id,
            r.axis_value
                .map(|v| format!(" axis_value={v}"))
                .unwrap_or_default()
        );
        s.push_str(&r.calibration.to_string());
        s.push('\n');
    }
    s
}

pub fn write_outputs(csv_path: &Path, reports: &[MetricsReport]) -> Result<()> {
    if let Some(parent) = csv_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !parent.is_dir() {
            return Err(Error::io(
                csv_path,
                std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "parent directory does not exist",
                ),
            ));
        }
    }
    std::fs::write(csv_path, to_csv(reports)).map_err(|e| Error::io(csv_path, e))?;
    let side = sidecar_path(csv_path);
    std::fs::write(&side, calibration_text(reports)).map_err(|e| Error::io(&side, e))
}

/// One run's worth of rows, as read back from a CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRun {
    pub run_id: usize,
    pub axis_value: Option<f64>,
    pub seed: u64,
    pub steps_n: usize,
    pub sigma_sq: f64,
    pub gamma: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub v_bar_sq_realized: f64,
    pub train_surrogate: Vec<f64>,
    pub train_excess: Vec<Option<f64>>,
    pub arms: Vec<(Arm, Vec<f64>)>,
}

impl CsvRun {
    pub fn arm_values(&self, arm: Arm) -> Option<&[f64]> {
        self.arms
            .iter()
            .find(|(a, _)| *a == arm)
            .map(|(_, v)| v.as_slice())
    }

    /// `(mean, std, std_error)` computed the same way as the report.
    pub fn arm_summary(&self, arm: Arm) -> Option<(f64, f64, f64)> {
        self.arm_values(arm).map(summarize)
    }

    pub fn mean_surrogate_loss(&self) -> f64 {
        self.train_surrogate.iter().sum::<f64>() / self.train_surrogate.len() as f64
    }
}

fn field<T: std::str::FromStr>(s: &str, col: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::invalid(format!("line {line}: bad {col} value `{s}`")))
}

fn opt_field(s: &str, col: &str, line: usize) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        field(s, col, line).map(Some)
    }
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRun>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::invalid("empty CSV"))?;
    if header != CSV_COLUMNS.join(",") {
        return Err(Error::invalid(format!("unexpected CSV header `{header}`")));
    }
    let mut runs: Vec<CsvRun> = Vec::new();
    for (k, line) in lines.enumerate() {
        let lineno = k + 2;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != CSV_COLUMNS.len() {
            return Err(Error::invalid(format!(
                "line {lineno}: expected {} columns, got {}",
                CSV_COLUMNS.len(),
                cols.len()
            )));
        }
        let run_id: usize = field(cols[0], "run_id", lineno)?;
        if runs.last().map(|r| r.run_id) != Some(run_id) {
            runs.push(CsvRun {
                run_id,
                axis_value: opt_field(cols[1], "axis_value", lineno)?,
                seed: field(cols[13], "seed", lineno)?,
                steps_n: field(cols[7], "n", lineno)?,
                sigma_sq: field(cols[8], "sigma_sq", lineno)?,
                gamma: field(cols[9], "gamma", lineno)?,
                eta: field(cols[10], "eta", lineno)?,
                epsilon: field(cols[11], "epsilon", lineno)?,
                delta: field(cols[12], "delta", lineno)?,
                v_bar_sq_realized: field(cols[6], "v_bar_sq_realized", lineno)?,
                train_surrogate: Vec::new(),
                train_excess: Vec::new(),
                arms: Vec::new(),
            });
        }
        let run = runs.last_mut().expect("pushed above");
        let excess = opt_field(cols[4], "excess_risk", lineno)?;
        if cols[2] == TRAIN_ARM {
            run.train_surrogate
                .push(field(cols[5], "surrogate_loss", lineno)?);
            run.train_excess.push(excess);
            continue;
        }
        let arm = Arm::parse(cols[2])
            .ok_or_else(|| Error::invalid(format!("line {lineno}: unknown arm `{}`", cols[2])))?;
        let value =
            excess.ok_or_else(|| Error::invalid(format!("line {lineno}: missing excess_risk")))?;
        match run.arms.iter_mut().find(|(a, _)| *a == arm) {
            Some((_, v)) => v.push(value),
            None => run.arms.push((arm, vec![value])),
        }
    }
    Ok(runs)
}

/// Drops the trailing wall-clock column from every line.
pub fn strip_wall_clock(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map(|(head, _)| head).unwrap_or(l))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_is_lossless() {
        for x in [
            0.1,
            1.0 / 3.0,
            1e-300,
            123456.789,
            f64::MIN_POSITIVE,
            -2.5e17,
        ] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn wall_clock_column_is_dropped() {
        assert_eq!(strip_wall_clock("a,b,1.5\nc,d,2.0"), "a,b\nc,d");
    }

    #[test]
    fn sidecar_appends_suffix() {
        assert_eq!(
            sidecar_path(Path::new("out/run.csv")),
            PathBuf::from("out/run.csv.calibration")
        );
    }

    #[test]
    fn rejects_foreign_csv() {
        assert!(parse_csv("").is_err());
        assert!(parse_csv("a,b,c\n").is_err());
        let header = CSV_COLUMNS.join(",");
        assert!(parse_csv(&format!("{header}\n0,,meta,0,1e0\n")).is_err());
        assert_eq!(parse_csv(&format!("{header}\n")).unwrap(), vec![]);
    }
}
