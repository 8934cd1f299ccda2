//! CSV emission with fixed headers and deterministic number formatting.

use std::path::{Path, PathBuf};

use mhd_core::adapt::AdaptiveRecord;
use mhd_core::diagnostics::DiagnosticRecord;
use mhd_core::runner::ConvergenceTable;
use mhd_core::stepper::StepReport;
use mhd_core::{Error, Result};

pub const TABLE_HEADER: &[&str] = &[
    "level",
    "h",
    "dt",
    "err_zp",
    "rate_zp",
    "err_zm",
    "rate_zm",
    "avg_iterations",
];

pub const DIAG_HEADER: &[&str] = &[
    "step",
    "t",
    "energy",
    "energy_elsasser",
    "cross_helicity",
    "dissipation",
    "balance",
    "energy_exact",
    "energy_error",
    "cross_helicity_exact",
    "cross_helicity_error",
    "err_zp_l2",
    "err_zp_h1",
    "err_zm_l2",
    "err_zm_h1",
];

pub const STEPS_HEADER: &[&str] = &[
    "step",
    "t",
    "tau",
    "iterations",
    "converged",
    "max_residual",
    "tau_bound",
    "tau_within_bound",
    "contraction_mean",
];

pub const ADAPTIVE_STEPS_HEADER: &[&str] = &[
    "attempt",
    "t_start",
    "tau",
    "accepted",
    "trimmed",
    "lte",
    "r",
    "lte_zp",
    "lte_zm",
    "iterations",
    "converged",
    "max_residual",
];

pub const STATE_HEADER: &[&str] = &["t", "index", "zp", "zm"];

pub fn num(v: f64) -> String {
    format!("{v:.10e}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Writes `rows` under `header`, one owner per file.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidArgument(format!("writing {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::InvalidArgument(format!(
                "row of {} fields under a {}-column header in {}",
                r.len(),
                header.len(),
                path.display()
            )));
        }
        w.write_record(r).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::Io(e).context(format!("writing {}", path.display())))
}

pub fn table_rows(table: &ConvergenceTable) -> Vec<Vec<String>> {
    table
        .levels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let rate = |r: &[Option<f64>]| {
                if i == 0 {
                    String::new()
                } else {
                    opt(r.get(i - 1).copied().flatten())
                }
            };
            vec![
                l.n.to_string(),
                num(l.h),
                num(l.dt),
                num(l.err_zp),
                rate(&table.rate_zp),
                num(l.err_zm),
                rate(&table.rate_zm),
                num(l.avg_iterations),
            ]
        })
        .collect()
}

pub fn diag_rows(records: &[DiagnosticRecord]) -> Vec<Vec<String>> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    let e0 = first.discrete.energy.elsasser;
    records
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let e = d.errors;
            vec![
                i.to_string(),
                num(d.t),
                num(d.discrete.energy.primitive),
                num(d.discrete.energy.elsasser),
                num(d.discrete.cross_helicity),
                num(d.dissipation),
                num(d.discrete.energy.elsasser + d.dissipation - e0),
                opt(d.exact.map(|x| x.energy.primitive)),
                opt(d.energy_error()),
                opt(d.exact.map(|x| x.cross_helicity)),
                opt(d.cross_helicity_error()),
                opt(e.map(|e| e[0][0])),
                opt(e.map(|e| e[0][1])),
                opt(e.map(|e| e[1][0])),
                opt(e.map(|e| e[1][1])),
            ]
        })
        .collect()
}

/// Geometric mean of the sweep contraction ratios of one step.
pub fn contraction_mean(step: &StepReport) -> Option<f64> {
    let r: Vec<f64> = step
        .iteration
        .contraction_ratios
        .iter()
        .copied()
        .filter(|v| *v > 0.0)
        .collect();
    if r.is_empty() {
        None
    } else {
        Some((r.iter().map(|v| v.ln()).sum::<f64>() / r.len() as f64).exp())
    }
}

pub fn step_rows(steps: &[StepReport]) -> Vec<Vec<String>> {
    steps
        .iter()
        .map(|s| {
            let it = &s.iteration;
            vec![
                s.step_index.to_string(),
                num(s.t),
                num(s.tau),
                it.iterations.to_string(),
                it.converged.to_string(),
                num(it.max_residual),
                if it.tau_bound.is_nan() {
                    String::new()
                } else {
                    num(it.tau_bound)
                },
                if it.tau_bound.is_nan() {
                    String::new()
                } else {
                    it.tau_within_bound.to_string()
                },
                opt(contraction_mean(s)),
            ]
        })
        .collect()
}

pub fn adaptive_rows(records: &[AdaptiveRecord]) -> Vec<Vec<String>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            vec![
                i.to_string(),
                num(r.t),
                num(r.tau),
                r.accepted.to_string(),
                r.trimmed.to_string(),
                opt(r.lte.as_ref().map(|l| l.value)),
                opt(r.lte.as_ref().map(|l| l.r)),
                opt(r.lte.as_ref().map(|l| l.fields[0])),
                opt(r.lte.as_ref().map(|l| l.fields[1])),
                r.step.iteration.iterations.to_string(),
                r.step.iteration.converged.to_string(),
                num(r.step.iteration.max_residual),
            ]
        })
        .collect()
}

/// Coefficient dump of a state, one row per degree of freedom.
pub fn state_rows(t: f64, zp: &[f64], zm: &[f64]) -> Vec<Vec<String>> {
    zp.iter()
        .zip(zm)
        .enumerate()
        .map(|(i, (a, b))| vec![num(t), i.to_string(), num(*a), num(*b)])
        .collect()
}

pub fn file(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use mhd_core::diagnostics::convergence_rates;
    use mhd_core::runner::{LevelResult, Scheme};

    #[test]
    fn number_format_is_fixed() {
        assert_eq!(num(1.0), "1.0000000000e0");
        assert_eq!(num(-2.5e-4), "-2.5000000000e-4");
        assert_eq!(opt(None), "");
    }

    #[test]
    fn table_rates_match_the_errors() {
        let level = |n: usize, e: f64| LevelResult {
            n,
            h: 1.0 / n as f64,
            dt: 1.0 / n as f64,
            err_zp: e,
            err_zm: 2.0 * e,
            avg_iterations: 3.0,
        };
        let levels = vec![level(4, 1e-2), level(8, 2.6e-3), level(16, 6e-4)];
        let hs: Vec<f64> = levels.iter().map(|l| l.h).collect();
        let ep: Vec<f64> = levels.iter().map(|l| l.err_zp).collect();
        let em: Vec<f64> = levels.iter().map(|l| l.err_zm).collect();
        let t = ConvergenceTable {
            scheme: Scheme::Pim,
            rate_zp: convergence_rates(&ep, &hs).unwrap(),
            rate_zm: convergence_rates(&em, &hs).unwrap(),
            levels,
        };
        let rows = table_rows(&t);
        assert_eq!(rows[0][4], "");
        for (i, r) in rows.iter().enumerate().skip(1) {
            assert_eq!(r.len(), TABLE_HEADER.len());
            let e: Vec<f64> = [&rows[i - 1][3], &r[3]]
                .iter()
                .map(|s| s.parse().unwrap())
                .collect();
            let expect = convergence_rates(&e, &hs[i - 1..=i]).unwrap()[0].unwrap();
            let got: f64 = r[4].parse().unwrap();
            assert!((got - expect).abs() < 1e-8, "{got} vs {expect}");
        }
    }

    #[test]
    fn rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        assert!(write_csv(&path, &["a", "b"], &[vec!["1".into()]]).is_err());
        write_csv(&path, &["a", "b"], &[vec!["1".into(), "2".into()]]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a,b\n1,2\n");
    }
}
