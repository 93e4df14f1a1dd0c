//! Report serialization.
//!
//! CSV has one row per budget with columns
//! `experiment,algorithm,beta,budget,reps,base_seed,best_arm,pfs,stderr,rate_1..rate_k`.
//! Reals are written in scientific notation with 17 significant digits, which
//! parses back to the identical `f64`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::harness::{BudgetSummary, ExperimentReport, PfsPoint};

/// Exact textual form of a real.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn to_json(report: &ExperimentReport) -> String {
    serde_json::to_string_pretty(report).expect("report serialization is infallible")
}

pub fn from_json(text: &str) -> Result<ExperimentReport> {
    Ok(serde_json::from_str(text)?)
}

const FIXED_COLUMNS: [&str; 9] =
    ["experiment", "algorithm", "beta", "budget", "reps", "base_seed", "best_arm", "pfs", "stderr"];

pub fn to_csv(report: &ExperimentReport) -> String {
    let k = report.rows.first().map_or(0, |r| r.sampling_rates.len());
    let mut out = String::new();
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((1..=k).map(|i| format!("rate_{i}")));
    out.push_str(&header.join(","));
    out.push('\n');
    for row in &report.rows {
        let mut fields = vec![
            report.experiment.clone(),
            report.algorithm.clone(),
            fmt_real(report.beta),
            row.budget.to_string(),
            report.reps.to_string(),
            report.base_seed.to_string(),
            report.best_arm.to_string(),
            fmt_real(row.pfs),
            fmt_real(row.stderr),
        ];
        fields.extend(row.sampling_rates.iter().map(|&r| fmt_real(r)));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn parse<T: std::str::FromStr>(field: &str, name: &str) -> Result<T> {
    field.parse().map_err(|_| Error::Parse(format!("bad value `{field}` in column {name}")))
}

/// Reads a report written by [`to_csv`]. The posterior curve is not part of
/// the CSV form and comes back empty.
pub fn from_csv(text: &str) -> Result<ExperimentReport> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> =
        lines.next().ok_or_else(|| Error::Parse("empty report".into()))?.split(',').collect();
    if header.len() < FIXED_COLUMNS.len() || header[..FIXED_COLUMNS.len()] != FIXED_COLUMNS {
        return Err(Error::Parse("unexpected report header".into()));
    }
    let mut report: Option<ExperimentReport> = None;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != header.len() {
            return Err(Error::Parse(format!("row has {} fields, expected {}", f.len(), header.len())));
        }
        let row = BudgetSummary {
            budget: parse(f[3], "budget")?,
            pfs: parse(f[7], "pfs")?,
            stderr: parse(f[8], "stderr")?,
            sampling_rates: f[9..]
                .iter()
                .zip(&header[9..])
                .map(|(v, name)| parse(v, name))
                .collect::<Result<_>>()?,
        };
        let r = report.get_or_insert_with(|| ExperimentReport {
            experiment: f[0].to_string(),
            algorithm: f[1].to_string(),
            beta: 0.0,
            budgets: Vec::new(),
            reps: 0,
            base_seed: 0,
            best_arm: 0,
            rows: Vec::new(),
            posterior_pfs: None,
            wall_clock: Default::default(),
        });
        r.beta = parse(f[2], "beta")?;
        r.reps = parse(f[4], "reps")?;
        r.base_seed = parse(f[5], "base_seed")?;
        r.best_arm = parse(f[6], "best_arm")?;
        r.budgets.push(row.budget);
        r.rows.push(row);
    }
    report.ok_or_else(|| Error::Parse("report has no rows".into()))
}

/// PFS-versus-budget series, one line per budget.
pub fn pfs_series_csv(reports: &[ExperimentReport]) -> String {
    let mut out = String::from("experiment,algorithm,beta,budget,pfs,stderr\n");
    for r in reports {
        for row in &r.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.experiment,
                r.algorithm,
                fmt_real(r.beta),
                row.budget,
                fmt_real(row.pfs),
                fmt_real(row.stderr)
            );
        }
    }
    out
}

/// Sampling-rate-versus-round series: `round,rate_1..rate_k`.
pub fn sampling_rate_series_csv(points: &[(usize, Vec<u64>)]) -> String {
    let k = points.first().map_or(0, |p| p.1.len());
    let mut out = String::from("round");
    for i in 1..=k {
        let _ = write!(out, ",rate_{i}");
    }
    out.push('\n');
    for (round, counts) in points {
        out.push_str(&round.to_string());
        for &c in counts {
            let _ = write!(out, ",{}", fmt_real(c as f64 / *round as f64));
        }
        out.push('\n');
    }
    out
}

/// Posterior-PFS curve: `n,posterior_pfs,analytic_rate`; empty cells where
/// the value is unavailable.
pub fn pfs_curve_csv(points: &[PfsPoint]) -> String {
    let mut out = String::from("n,posterior_pfs,analytic_rate\n");
    let opt = |v: Option<f64>| v.map(fmt_real).unwrap_or_default();
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.n, opt(p.posterior_pfs), opt(p.analytic_rate));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::WallClock;
    use proptest::prelude::*;

    fn sample_report(pfs: f64, rates: Vec<f64>) -> ExperimentReport {
        ExperimentReport {
            experiment: "exp5".into(),
            algorithm: "bfai-ts".into(),
            beta: 0.4831,
            budgets: vec![200, 400],
            reps: 100,
            base_seed: 7,
            best_arm: 10,
            rows: vec![
                BudgetSummary { budget: 200, pfs, stderr: 0.01, sampling_rates: rates.clone() },
                BudgetSummary { budget: 400, pfs: 1.0 - pfs, stderr: 0.02, sampling_rates: rates },
            ],
            posterior_pfs: None,
            wall_clock: WallClock::default(),
        }
    }

    proptest! {
        #[test]
        fn csv_round_trip(pfs in 0.0f64..=1.0, rates in prop::collection::vec(0.0f64..1.0, 1..12)) {
            let r = sample_report(pfs, rates);
            prop_assert_eq!(from_csv(&to_csv(&r)).unwrap(), r);
        }
    }

    #[test]
    fn json_round_trip() {
        let r = sample_report(0.11, vec![0.25, 0.75]);
        assert_eq!(from_json(&to_json(&r)).unwrap(), r);
    }

    #[test]
    fn reals_have_many_digits() {
        assert_eq!(fmt_real(0.11), "1.1000000000000000e-1");
        assert_eq!(fmt_real(0.1 + 0.2), "3.0000000000000004e-1");
        assert_eq!(fmt_real(0.0), "0.0000000000000000e0");
    }

    #[test]
    fn rejects_garbage() {
        assert!(from_csv("").is_err());
        assert!(from_csv("a,b\n1,2\n").is_err());
        let mut text = to_csv(&sample_report(0.5, vec![1.0]));
        text.push_str("exp5,bfai-ts,x,1,1,1,1,1,1,1\n");
        assert!(from_csv(&text).is_err());
    }
}
