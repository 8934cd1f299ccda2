//! The four experiments. Each writes its CSV files and returns a one-line
//! JSON summary.

use std::path::Path;

use mhd_core::diagnostics::DiagnosticRecord;
use mhd_core::problems::ProblemSpec;
use mhd_core::runner::{
    convergence_study, operators, run_adaptive, run_constant, ConstantRun, ConvergenceTable,
    RunOptions, Scheme,
};
use mhd_core::stepper::{ElsasserState, PicardSettings};
use mhd_core::{Error, Result};
use serde_json::{json, Value};

use crate::config::{Experiment, RunConfig};
use crate::output::{self, file, write_csv};

/// Limit for the energy-identity and ideal-invariant checks.
pub const CHECK_LIMIT: f64 = 1e-8;

/// Failure of an experiment: either a solver error or a failed check.
#[derive(Debug)]
pub enum Failure {
    Solver(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e)
    }
}

impl Failure {
    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Solver(e) => e.kind(),
            Failure::Check(_) => "check_failed",
        }
    }

    pub fn message(&self) -> String {
        match self {
            Failure::Solver(e) => e.to_string(),
            Failure::Check(m) => m.clone(),
        }
    }
}

pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub out: &'a Path,
    /// Run levels and the two fields of a sweep concurrently.
    pub parallel: bool,
}

impl Context<'_> {
    fn picard(&self) -> PicardSettings {
        PicardSettings {
            parallel: self.parallel,
            ..self.cfg.picard()
        }
    }
}

pub fn run(experiment: Experiment, ctx: &Context<'_>) -> std::result::Result<Value, Failure> {
    ctx.cfg.validate(experiment)?;
    std::fs::create_dir_all(ctx.out)
        .map_err(|e| Error::Io(e).context(format!("creating {}", ctx.out.display())))?;
    match experiment {
        Experiment::Converge => converge(ctx),
        Experiment::Conserve => conserve(ctx),
        Experiment::Adapt => adapt(ctx),
        Experiment::Compare => compare(ctx),
    }
}

fn steps_in(t0: f64, t1: f64, dt: f64) -> Result<usize> {
    let f = (t1 - t0) / dt;
    let n = f.round() as usize;
    if n == 0 || (f - n as f64).abs() > 1e-9 * f.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "time window [{t0}, {t1}] is not a whole number of steps of size {dt}"
        )));
    }
    Ok(n)
}

fn study(
    ctx: &Context<'_>,
    problem: &ProblemSpec,
    scheme: Scheme,
) -> Result<(ConvergenceTable, String)> {
    let cfg = ctx.cfg;
    let (t0, t1) = cfg.window();
    let table = convergence_study(
        problem,
        scheme,
        &cfg.levels,
        t0,
        t1,
        &ctx.picard(),
        ctx.parallel,
    )?;
    let name = format!(
        "table_{}_{}_{}",
        cfg.problem.id.name(),
        scheme,
        cfg.b0_tag()?
    );
    write_csv(
        &file(ctx.out, &name),
        output::TABLE_HEADER,
        &output::table_rows(&table),
    )?;
    Ok((table, name))
}

fn table_summary(t: &ConvergenceTable) -> Value {
    let (rp, rm) = t.final_rates();
    json!({
        "scheme": t.scheme.name(),
        "final_rate_zp": rp,
        "final_rate_zm": rm,
        "final_err_zp": t.levels.last().map(|l| l.err_zp),
        "final_err_zm": t.levels.last().map(|l| l.err_zm),
    })
}

fn converge(ctx: &Context<'_>) -> std::result::Result<Value, Failure> {
    let problem = ctx.cfg.problem_spec()?;
    if !problem.is_manufactured() {
        return Err(Error::InvalidArgument("converge needs a manufactured problem".into()).into());
    }
    let (table, name) = study(ctx, &problem, ctx.cfg.scheme()?)?;
    Ok(
        json!({ "experiment": "converge", "files": [format!("{name}.csv")], "table": table_summary(&table) }),
    )
}

fn constant(ctx: &Context<'_>, problem: &ProblemSpec, scheme: Scheme) -> Result<ConstantRun> {
    let cfg = ctx.cfg;
    let (t0, t1) = cfg.window();
    let dt = cfg.dt();
    let [nx, ny] = cfg.mesh();
    let ops = operators(problem, nx, ny)?;
    let opts = RunOptions {
        picard: ctx.picard(),
        diagnostics: true,
    };
    run_constant(&ops, problem, scheme, t0, dt, steps_in(t0, t1, dt)?, &opts)
}

fn write_run(ctx: &Context<'_>, stem: &str, run: &ConstantRun) -> Result<Vec<String>> {
    let diag = format!("diag_{stem}");
    let steps = format!("steps_{stem}");
    write_csv(
        &file(ctx.out, &diag),
        output::DIAG_HEADER,
        &output::diag_rows(&run.diagnostics),
    )?;
    write_csv(
        &file(ctx.out, &steps),
        output::STEPS_HEADER,
        &output::step_rows(&run.steps),
    )?;
    Ok(vec![format!("{diag}.csv"), format!("{steps}.csv")])
}

/// Largest relative deviation of `f` from its first value.
fn drift(records: &[DiagnosticRecord], f: impl Fn(&DiagnosticRecord) -> f64, scale: f64) -> f64 {
    let v0 = f(&records[0]);
    records
        .iter()
        .map(|d| (f(d) - v0).abs() / scale)
        .fold(0.0, f64::max)
}

fn conserve(ctx: &Context<'_>) -> std::result::Result<Value, Failure> {
    let cfg = ctx.cfg;
    let problem = cfg.problem_spec()?;
    let scheme = cfg.scheme()?;
    let run = constant(ctx, &problem, scheme)?;
    let stem = cfg.run_name(scheme.name())?;
    let files = write_run(ctx, &stem, &run)?;

    let mut checks = Vec::new();
    if !problem.is_manufactured() {
        checks.push(("energy_balance", run.energy_balance_defect()));
    }
    if problem.params.is_ideal() {
        let d = &run.diagnostics;
        let e0 = d[0].discrete.energy.elsasser;
        let h0 = d[0].discrete.cross_helicity.abs();
        let h_scale = if h0 > 1e-12 * e0 { h0 } else { e0 };
        checks.push(("energy_drift", drift(d, |r| r.discrete.energy.elsasser, e0)));
        checks.push((
            "cross_helicity_drift",
            drift(d, |r| r.discrete.cross_helicity, h_scale),
        ));
    }
    let check_values: Vec<Value> = checks
        .iter()
        .map(|(name, v)| json!({ "name": name, "value": v, "limit": CHECK_LIMIT, "pass": *v <= CHECK_LIMIT }))
        .collect();
    let summary = json!({
        "experiment": "conserve",
        "scheme": scheme.name(),
        "steps": run.steps.len(),
        "files": files,
        "final_energy_error": run.diagnostics.last().and_then(|d| d.energy_error()),
        "checks": check_values,
    });
    if let Some((name, v)) = checks.iter().find(|(_, v)| !(*v <= CHECK_LIMIT)) {
        return Err(Failure::Check(format!(
            "{name} = {v:.3e} exceeds {CHECK_LIMIT:.0e}; {summary}"
        )));
    }
    Ok(summary)
}

fn adapt(ctx: &Context<'_>) -> std::result::Result<Value, Failure> {
    let cfg = ctx.cfg;
    let problem = cfg.problem_spec()?;
    let (t0, t1) = cfg.window();
    let [nx, ny] = cfg.mesh();
    let ctl = cfg.controller();
    let stem = cfg.run_name("adaptive")?;
    let ops = operators(&problem, nx, ny)?;

    let mut last: Option<ElsasserState> = None;
    let mut accepted: Vec<DiagnosticRecord> = Vec::new();
    let result = run_adaptive(&ops, &problem, t0, t1, &ctl, &ctx.picard(), |s, d| {
        last = Some(s.clone());
        accepted.push(d.clone());
    });
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            // Keep what was accepted and the last good state for inspection.
            write_csv(
                &file(ctx.out, &format!("diag_{stem}")),
                output::DIAG_HEADER,
                &output::diag_rows(&accepted),
            )?;
            if let Some(s) = last {
                let rows = output::state_rows(s.t, &s.zp.coeffs, &s.zm.coeffs);
                write_csv(
                    &file(ctx.out, &format!("state_{stem}")),
                    output::STATE_HEADER,
                    &rows,
                )?;
            }
            return Err(e.into());
        }
    };
    let run = &outcome.run;
    let diag = format!("diag_{stem}");
    let steps = format!("steps_{stem}");
    write_csv(
        &file(ctx.out, &diag),
        output::DIAG_HEADER,
        &output::diag_rows(&outcome.diagnostics),
    )?;
    write_csv(
        &file(ctx.out, &steps),
        output::ADAPTIVE_STEPS_HEADER,
        &output::adaptive_rows(&run.records),
    )?;

    // Constant-step control with the same number of accepted steps.
    let n = run.n_accepted();
    let opts = RunOptions {
        picard: ctx.picard(),
        diagnostics: true,
    };
    let control = run_constant(
        &ops,
        &problem,
        Scheme::Pim,
        t0,
        (t1 - t0) / n as f64,
        n,
        &opts,
    )
    .map_err(|e| e.context("constant-step control run"))?;
    let control_stem = format!("{stem}_constant");
    let mut files = vec![format!("{diag}.csv"), format!("{steps}.csv")];
    files.extend(write_run(ctx, &control_stem, &control)?);

    let lte_max = run
        .accepted()
        .filter_map(|r| r.lte.as_ref().map(|l| l.value))
        .fold(0.0, f64::max);
    let late = t1 - 0.15 * (t1 - t0);
    let n_late = run.accepted().filter(|r| r.t + r.tau >= late).count();
    let it_max = run
        .accepted()
        .map(|r| r.step.iteration.iterations)
        .max()
        .unwrap_or(0);
    let adaptive_err = outcome.final_energy_error();
    let control_err = control.diagnostics.last().and_then(|d| d.energy_error());
    Ok(json!({
        "experiment": "adapt",
        "files": files,
        "accepted": n,
        "rejected": run.n_rejected(),
        "max_accepted_lte": lte_max,
        "late_fraction": n_late as f64 / n as f64,
        "max_iterations": it_max,
        "final_energy_error_adaptive": adaptive_err,
        "final_energy_error_constant": control_err,
    }))
}

fn compare(ctx: &Context<'_>) -> std::result::Result<Value, Failure> {
    let cfg = ctx.cfg;
    let problem = cfg.problem_spec()?;
    let stem = cfg.run_name("compare")?;
    let schemes = [Scheme::Pim, Scheme::Bdf2Ab2];
    let merged = format!("compare_{stem}");
    if !cfg.levels.is_empty() {
        if !problem.is_manufactured() {
            return Err(Error::InvalidArgument(
                "refinement comparison needs a manufactured problem".into(),
            )
            .into());
        }
        let mut header = vec!["scheme"];
        header.extend_from_slice(output::TABLE_HEADER);
        let mut rows = Vec::new();
        let mut files = Vec::new();
        let mut tables = Vec::new();
        for s in schemes {
            let (t, name) = study(ctx, &problem, s)?;
            rows.extend(output::table_rows(&t).into_iter().map(|r| prefixed(s, r)));
            files.push(format!("{name}.csv"));
            tables.push(t);
        }
        write_csv(&file(ctx.out, &merged), &header, &rows)?;
        files.push(format!("{merged}.csv"));
        let gap = match (tables[0].final_rates(), tables[1].final_rates()) {
            ((Some(a), Some(b)), (Some(c), Some(d))) => Some(a.min(b) - c.max(d)),
            _ => None,
        };
        return Ok(json!({
            "experiment": "compare",
            "files": files,
            "tables": tables.iter().map(table_summary).collect::<Vec<_>>(),
            "final_rate_gap": gap,
        }));
    }
    let mut header = vec!["scheme"];
    header.extend_from_slice(output::DIAG_HEADER);
    let mut rows = Vec::new();
    let mut files = Vec::new();
    let mut finals = Vec::new();
    for s in schemes {
        let run = constant(ctx, &problem, s)?;
        files.extend(write_run(ctx, &format!("{stem}_{s}"), &run)?);
        rows.extend(
            output::diag_rows(&run.diagnostics)
                .into_iter()
                .map(|r| prefixed(s, r)),
        );
        finals.push(json!({
            "scheme": s.name(),
            "final_energy_error": run.diagnostics.last().and_then(|d| d.energy_error()),
            "max_energy_error": run.diagnostics.iter().filter_map(|d| d.energy_error()).reduce(f64::max),
        }));
    }
    write_csv(&file(ctx.out, &merged), &header, &rows)?;
    files.push(format!("{merged}.csv"));
    Ok(json!({ "experiment": "compare", "files": files, "runs": finals }))
}

fn prefixed(s: Scheme, mut row: Vec<String>) -> Vec<String> {
    row.insert(0, s.name().to_string());
    row
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whole_step_counts() {
        assert_eq!(steps_in(0.0, 1.0, 0.125).unwrap(), 8);
        assert_eq!(steps_in(1.59, 1.604, 1e-5).unwrap(), 1400);
        assert!(steps_in(0.0, 1.0, 0.3).is_err());
    }

    #[test]
    fn failure_kinds() {
        assert_eq!(Failure::Check("x".into()).kind(), "check_failed");
        let e = Error::InvalidArgument("bad".into()).context("level 4");
        assert_eq!(Failure::from(e).kind(), "invalid_argument");
    }
}
