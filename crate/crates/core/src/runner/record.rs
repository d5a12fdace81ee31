use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::ActionKind;
use crate::measurements::{MetricsReport, StateSegments};
use crate::policies::PolicyKind;
use crate::resilience::OperationalState;
use crate::simulator::{ColorClass, FeedMode};

/// Audit row for one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mode: FeedMode,
    pub policy_active: PolicyKind,
    pub action: ActionKind,
    /// Run time of the actuated action, seconds.
    pub t: f64,
    /// CO2 of the actuated action, kg.
    pub c: f64,
    pub h: u32,
    /// Confidence the decision was taken on.
    pub p_hat: f64,
    pub predicted_class: ColorClass,
    pub true_class: ColorClass,
    pub acr: f64,
    pub state: OperationalState,
    pub cycle: u32,
    pub acr_threshold: Option<f64>,
}

pub const ITERATION_HEADER: [&str; 14] = [
    "iteration",
    "mode",
    "policy_active",
    "action",
    "t",
    "c",
    "h",
    "p_hat",
    "predicted_class",
    "true_class",
    "acr",
    "state",
    "cycle",
    "acr_threshold",
];

pub const METRICS_HEADER: [&str; 7] = [
    "policy",
    "seed",
    "cycle",
    "duration_ratio",
    "fluctuation_ratio",
    "co2_mean",
    "human_dependency",
];

pub const SEGMENTS_HEADER: [&str; 5] = ["cycle", "segment", "start", "end", "length"];

/// Formats like C's `%.9g`: nine significant digits, trailing zeros dropped.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

impl IterationRecord {
    pub fn to_row(&self) -> [String; 14] {
        [
            self.iteration.to_string(),
            self.mode.name().to_string(),
            self.policy_active.name().to_string(),
            self.action.name().to_string(),
            format_float(self.t),
            format_float(self.c),
            self.h.to_string(),
            format_float(self.p_hat),
            self.predicted_class.name().to_string(),
            self.true_class.name().to_string(),
            format_float(self.acr),
            self.state.name().to_string(),
            self.cycle.to_string(),
            self.acr_threshold.map(format_float).unwrap_or_default(),
        ]
    }

    pub fn from_row(row: &csv::StringRecord) -> Result<Self> {
        if row.len() != ITERATION_HEADER.len() {
            return Err(Error::DimensionMismatch {
                expected: ITERATION_HEADER.len(),
                actual: row.len(),
            });
        }
        let bad = |col: usize| Error::domain("iterations.csv", format!("bad {} value `{}`", ITERATION_HEADER[col], &row[col]));
        let num = |col: usize| row[col].parse::<f64>().map_err(|_| bad(col));
        Ok(Self {
            iteration: row[0].parse().map_err(|_| bad(0))?,
            mode: FeedMode::parse(&row[1]).ok_or_else(|| bad(1))?,
            policy_active: PolicyKind::parse(&row[2]).map_err(|_| bad(2))?,
            action: ActionKind::parse(&row[3]).ok_or_else(|| bad(3))?,
            t: num(4)?,
            c: num(5)?,
            h: row[6].parse().map_err(|_| bad(6))?,
            p_hat: num(7)?,
            predicted_class: ColorClass::parse(&row[8]).ok_or_else(|| bad(8))?,
            true_class: ColorClass::parse(&row[9]).ok_or_else(|| bad(9))?,
            acr: num(10)?,
            state: OperationalState::parse(&row[11]).ok_or_else(|| bad(11))?,
            cycle: row[12].parse().map_err(|_| bad(12))?,
            acr_threshold: if row[13].is_empty() { None } else { Some(num(13)?) },
        })
    }
}

fn metrics_row(r: &MetricsReport) -> [String; 7] {
    [
        r.policy.clone(),
        r.seed.to_string(),
        r.cycle.to_string(),
        format_float(r.duration_ratio),
        format_float(r.fluctuation_ratio),
        format_float(r.co2_mean),
        format_float(r.human_dependency),
    ]
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_iterations<W: Write>(out: W, records: &[IterationRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ITERATION_HEADER)?;
    for r in records {
        w.write_record(r.to_row())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics<W: Write>(out: W, reports: &[MetricsReport]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for r in reports {
        w.write_record(metrics_row(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_segments<W: Write>(out: W, segments: &StateSegments) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SEGMENTS_HEADER)?;
    for c in &segments.cycles {
        for (name, range) in c.named() {
            if let Some(r) = range {
                w.write_record([
                    c.cycle.to_string(),
                    name.to_string(),
                    r.start.to_string(),
                    r.end.to_string(),
                    r.len().to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Renders `iterations.csv` in memory.
pub fn iterations_csv(records: &[IterationRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_iterations(&mut buf, records).expect("writing to memory cannot fail");
    buf
}

pub fn metrics_csv(reports: &[MetricsReport]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_metrics(&mut buf, reports).expect("writing to memory cannot fail");
    buf
}

pub fn segments_csv(segments: &StateSegments) -> Vec<u8> {
    let mut buf = Vec::new();
    write_segments(&mut buf, segments).expect("writing to memory cannot fail");
    buf
}

pub fn read_iterations_from<R: Read>(input: R) -> Result<Vec<IterationRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|source| Error::Csv {
            path: PathBuf::from("iterations.csv"),
            source,
        })?;
        out.push(IterationRecord::from_row(&row)?);
    }
    Ok(out)
}

pub fn read_iterations(path: &Path) -> Result<Vec<IterationRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_iterations_from(file)
}

pub fn read_metrics_from<R: Read>(input: R, path: &Path) -> Result<Vec<MetricsReport>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(csv_err(path))?.clone();
    if headers.iter().ne(METRICS_HEADER) {
        return Err(Error::domain("metrics header", format!("{}: unexpected columns", path.display())));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err(path))?;
        let bad = |col: usize| Error::domain("metrics value", format!("{}: bad {} `{}`", path.display(), METRICS_HEADER[col], &row[col]));
        let num = |col: usize| row[col].parse::<f64>().map_err(|_| bad(col));
        out.push(MetricsReport {
            policy: row[0].to_string(),
            seed: row[1].parse().map_err(|_| bad(1))?,
            cycle: row[2].parse().map_err(|_| bad(2))?,
            duration_ratio: num(3)?,
            fluctuation_ratio: num(4)?,
            co2_mean: num(5)?,
            human_dependency: num(6)?,
        });
    }
    Ok(out)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsReport>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_metrics_from(file, path)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<PathBuf> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn float_format_matches_printf_g() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.2, "0.2"),
            (0.38333333333, "0.383333333"),
            (3.307180e-6, "3.30718e-06"),
            (1e-4, "0.0001"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (-2.5, "-2.5"),
            (1.0 / 3.0, "0.333333333"),
            (2.0 / 3.0, "0.666666667"),
        ];
        for (x, want) in cases {
            assert_eq!(format_float(x), want, "{x}");
        }
    }

    proptest! {
        #[test]
        fn float_format_has_nine_significant_digits(x in -1e12f64..1e12, scale in -12i32..6) {
            let v = x * 10f64.powi(scale);
            prop_assume!(v != 0.0);
            let s = format_float(v);
            let back: f64 = s.parse().unwrap();
            prop_assert!(((back - v) / v).abs() <= 5e-9, "{v} -> {s}");
            // Formatting is idempotent on its own output.
            prop_assert_eq!(format_float(back), s);
        }
    }
}
