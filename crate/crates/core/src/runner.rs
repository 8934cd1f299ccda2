//! Drivers for constant-step runs, refinement studies and adaptive runs.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::adapt::{adaptive_loop, AdaptiveRun, ControllerConfig};
use crate::baseline::{bdf2ab2_step, Bdf2State};
use crate::diagnostics::{
    convergence_rates, cross_helicity, dissipation_increment, energy, error_norms,
    exact_invariants, DiagnosticRecord, Invariants, MaxTracker,
};
use crate::error::{Error, Result};
use crate::linsolve::OseenOperators;
use crate::mesh::build_rect_mesh;
use crate::problems::ProblemSpec;
use crate::space::{build_spaces, FieldVec};
use crate::stepper::{pim_step, ElsasserState, PicardSettings, StepReport};

/// Time integrator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Pim,
    Bdf2Ab2,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Pim => "pim",
            Scheme::Bdf2Ab2 => "bdf2ab2",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "pim" => Ok(Scheme::Pim),
            "bdf2ab2" | "bdf2" => Ok(Scheme::Bdf2Ab2),
            _ => Err(Error::InvalidArgument(format!("unknown scheme '{s}'"))),
        }
    }
}

/// Operators on an `nx x ny` mesh of the problem's domain.
pub fn operators(problem: &ProblemSpec, nx: usize, ny: usize) -> Result<OseenOperators> {
    let mesh = build_rect_mesh(problem.domain, nx, ny)?;
    Ok(OseenOperators::new(&build_spaces(&mesh)?))
}

/// Samples invariants, accumulated dissipation and errors of a state.
pub fn sample(
    ops: &OseenOperators,
    problem: &ProblemSpec,
    zp: &FieldVec,
    zm: &FieldVec,
    t: f64,
    dissipation: f64,
) -> DiagnosticRecord {
    let space = &ops.space;
    let area = space.mesh.domain.area();
    let discrete = Invariants {
        energy: energy(&ops.scalar, zp, zm, problem.b0, area),
        cross_helicity: cross_helicity(&ops.scalar, zp, zm, problem.b0),
    };
    let (exact, errors) = match &problem.exact {
        Some(e) => {
            let rule = &ops.scalar.tab.rule;
            let inv = exact_invariants(space, rule, problem.b0, |x| {
                (e.zp(x, t).value, e.zm(x, t).value)
            });
            let ep = error_norms(space, rule, zp, |x| e.zp(x, t));
            let em = error_norms(space, rule, zm, |x| e.zm(x, t));
            (Some(inv), Some([[ep.0, ep.1], [em.0, em.1]]))
        }
        None => (None, None),
    };
    DiagnosticRecord {
        t,
        discrete,
        dissipation,
        exact,
        errors,
    }
}

/// Result of a constant-step run.
#[derive(Clone, Debug)]
pub struct ConstantRun {
    pub scheme: Scheme,
    pub tau: f64,
    pub steps: Vec<StepReport>,
    /// One record at the start time and one after every step.
    pub diagnostics: Vec<DiagnosticRecord>,
    /// Maxima over step times of the `L2` errors of `z+` and `z-`.
    pub err_zp: MaxTracker,
    pub err_zm: MaxTracker,
    pub final_zp: FieldVec,
    pub final_zm: FieldVec,
    pub final_t: f64,
}

impl ConstantRun {
    pub fn average_iterations(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps
            .iter()
            .map(|s| s.iteration.iterations as f64)
            .sum::<f64>()
            / self.steps.len() as f64
    }

    /// `|E(N) + D(N) - E(0)| / E(0)` for the Elsasser energy.
    pub fn energy_balance_defect(&self) -> f64 {
        let first = &self.diagnostics[0];
        let last = self.diagnostics.last().unwrap();
        let e0 = first.discrete.energy.elsasser;
        (last.discrete.energy.elsasser + last.dissipation - e0).abs() / e0
    }
}

/// What a constant-step run records.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub picard: PicardSettings,
    /// Sample diagnostics after every step (errors are always tracked for
    /// manufactured problems).
    pub diagnostics: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            picard: PicardSettings::default(),
            diagnostics: true,
        }
    }
}

fn track(run: &mut ConstantRun, rec: DiagnosticRecord, keep: bool) {
    if let Some(e) = rec.errors {
        run.err_zp.push(e[0][0]);
        run.err_zm.push(e[1][0]);
    }
    if keep {
        run.diagnostics.push(rec);
    }
}

/// Runs `n_steps` steps of size `tau` from `t0`.
pub fn run_constant(
    ops: &OseenOperators,
    problem: &ProblemSpec,
    scheme: Scheme,
    t0: f64,
    tau: f64,
    n_steps: usize,
    opts: &RunOptions,
) -> Result<ConstantRun> {
    if !(tau > 0.0 && tau.is_finite()) || n_steps == 0 {
        return Err(Error::InvalidArgument(format!(
            "need a positive step and at least one step, got tau={tau}, n_steps={n_steps}"
        )));
    }
    let params = problem.params;
    let s0 = if problem.is_manufactured() {
        ElsasserState::initial_with_exact_history(&ops.space, problem, t0, tau)?
    } else {
        ElsasserState::initial(&ops.space, problem, t0)?
    };
    let keep = opts.diagnostics;
    let sample_errors = keep || problem.is_manufactured();
    let mut run = ConstantRun {
        scheme,
        tau,
        steps: Vec::with_capacity(n_steps),
        diagnostics: Vec::new(),
        err_zp: MaxTracker::default(),
        err_zm: MaxTracker::default(),
        final_zp: s0.zp.clone(),
        final_zm: s0.zm.clone(),
        final_t: t0,
    };
    // The start record carries energy and the interpolation error only.
    let start = sample(ops, problem, &s0.zp, &s0.zm, t0, 0.0);
    if keep {
        run.diagnostics.push(start);
    }
    let mut dissipation = 0.0;
    let mut after = |run: &mut ConstantRun,
                     prev: (&FieldVec, &FieldVec),
                     zp: &FieldVec,
                     zm: &FieldVec,
                     t: f64,
                     tau: f64| {
        let hp = FieldVec::lincomb(0.5, prev.0, 0.5, zp);
        let hm = FieldVec::lincomb(0.5, prev.1, 0.5, zm);
        dissipation += dissipation_increment(&ops.scalar, &hp, &hm, tau, &params);
        if sample_errors {
            let rec = sample(ops, problem, zp, zm, t, dissipation);
            track(run, rec, keep);
        }
    };

    match scheme {
        Scheme::Pim => {
            let mut s = s0;
            for _ in 0..n_steps {
                let (next, rep) = pim_step(ops, problem, &s, tau, &opts.picard)?;
                after(&mut run, (&s.zp, &s.zm), &next.zp, &next.zm, next.t, tau);
                run.steps.push(rep);
                s = next;
            }
            run.final_zp = s.zp;
            run.final_zm = s.zm;
            run.final_t = s.t;
        }
        Scheme::Bdf2Ab2 => {
            let mut s = if problem.is_manufactured() {
                Bdf2State::from_exact(&ops.space, problem, t0, tau)?
            } else {
                let (b, rep) =
                    Bdf2State::from_midpoint_start(ops, problem, &s0, tau, &opts.picard)?;
                after(&mut run, (&s0.zp, &s0.zm), &b.zp, &b.zm, b.t, tau);
                run.steps.push(rep);
                b
            };
            while run.steps.len() < n_steps {
                let (next, rep) = bdf2ab2_step(ops, problem, &s, opts.picard.parallel)?;
                after(&mut run, (&s.zp, &s.zm), &next.zp, &next.zm, next.t, tau);
                run.steps.push(rep);
                s = next;
            }
            run.final_zp = s.zp;
            run.final_zm = s.zm;
            run.final_t = s.t;
        }
    }
    Ok(run)
}

/// One refinement level of a convergence study.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelResult {
    /// Mesh divisions per side; the step size is `1/n`.
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    pub err_zp: f64,
    pub err_zm: f64,
    pub avg_iterations: f64,
}

/// Errors and observed rates over refinement levels.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub scheme: Scheme,
    pub levels: Vec<LevelResult>,
    /// `rate_zp[i]` compares levels `i` and `i + 1`; empty for a single level.
    pub rate_zp: Vec<Option<f64>>,
    pub rate_zm: Vec<Option<f64>>,
}

impl ConvergenceTable {
    pub fn final_rates(&self) -> (Option<f64>, Option<f64>) {
        (
            self.rate_zp.last().copied().flatten(),
            self.rate_zm.last().copied().flatten(),
        )
    }
}

/// Runs level `n` on an `n x n` mesh with `dt = 1/n` over `[t0, t_end]`.
pub fn run_level(
    problem: &ProblemSpec,
    scheme: Scheme,
    n: usize,
    t0: f64,
    t_end: f64,
    picard: &PicardSettings,
) -> Result<LevelResult> {
    let dt = 1.0 / n as f64;
    let steps_f = (t_end - t0) / dt;
    let n_steps = steps_f.round() as usize;
    if n_steps == 0 || (steps_f - n_steps as f64).abs() > 1e-9 * steps_f.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "time window [{t0}, {t_end}] is not a whole number of steps of size 1/{n}"
        )));
    }
    if !problem.is_manufactured() {
        return Err(Error::InvalidArgument(
            "refinement studies need a manufactured problem".into(),
        ));
    }
    let ops = operators(problem, n, n)?;
    let opts = RunOptions {
        picard: *picard,
        diagnostics: false,
    };
    let run = run_constant(&ops, problem, scheme, t0, dt, n_steps, &opts)
        .map_err(|e| e.context(format!("level {n}")))?;
    Ok(LevelResult {
        n,
        h: dt,
        dt,
        err_zp: run.err_zp.max,
        err_zm: run.err_zm.max,
        avg_iterations: run.average_iterations(),
    })
}

/// Runs every level (concurrently when `parallel_levels`) and computes rates.
pub fn convergence_study(
    problem: &ProblemSpec,
    scheme: Scheme,
    levels: &[usize],
    t0: f64,
    t_end: f64,
    picard: &PicardSettings,
    parallel_levels: bool,
) -> Result<ConvergenceTable> {
    if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "need strictly increasing levels, got {levels:?}"
        )));
    }
    let results: Vec<Result<LevelResult>> = if parallel_levels {
        levels
            .par_iter()
            .map(|&n| run_level(problem, scheme, n, t0, t_end, picard))
            .collect()
    } else {
        levels
            .iter()
            .map(|&n| run_level(problem, scheme, n, t0, t_end, picard))
            .collect()
    };
    let levels: Vec<LevelResult> = results.into_iter().collect::<Result<_>>()?;
    let hs: Vec<f64> = levels.iter().map(|l| l.h).collect();
    let ep: Vec<f64> = levels.iter().map(|l| l.err_zp).collect();
    let em: Vec<f64> = levels.iter().map(|l| l.err_zm).collect();
    let rates = |e: &[f64]| {
        if e.len() < 2 {
            Ok(Vec::new())
        } else {
            convergence_rates(e, &hs)
        }
    };
    Ok(ConvergenceTable {
        scheme,
        rate_zp: rates(&ep)?,
        rate_zm: rates(&em)?,
        levels,
    })
}

/// Adaptive run with a diagnostic record for every accepted state.
#[derive(Clone, Debug)]
pub struct AdaptiveOutcome {
    pub run: AdaptiveRun,
    pub diagnostics: Vec<DiagnosticRecord>,
}

impl AdaptiveOutcome {
    pub fn final_energy_error(&self) -> Option<f64> {
        self.diagnostics.last().and_then(|d| d.energy_error())
    }
}

/// Adaptive run from `t0` to `t_end`. `on_accept` sees every accepted state
/// with its diagnostics, so callers can keep the last good state on failure.
pub fn run_adaptive(
    ops: &OseenOperators,
    problem: &ProblemSpec,
    t0: f64,
    t_end: f64,
    cfg: &ControllerConfig,
    picard: &PicardSettings,
    mut on_accept: impl FnMut(&ElsasserState, &DiagnosticRecord),
) -> Result<AdaptiveOutcome> {
    let s0 = if problem.is_manufactured() {
        ElsasserState::initial_with_exact_history(&ops.space, problem, t0, cfg.tau_min)?
    } else {
        ElsasserState::initial(&ops.space, problem, t0)?
    };
    let params = problem.params;
    let mut diagnostics = vec![sample(ops, problem, &s0.zp, &s0.zm, t0, 0.0)];
    let mut prev = (s0.zp.clone(), s0.zm.clone());
    let mut dissipation = 0.0;
    let run = adaptive_loop(ops, problem, s0, cfg, picard, t_end, |s, rec| {
        let hp = FieldVec::lincomb(0.5, &prev.0, 0.5, &s.zp);
        let hm = FieldVec::lincomb(0.5, &prev.1, 0.5, &s.zm);
        dissipation += dissipation_increment(&ops.scalar, &hp, &hm, rec.tau, &params);
        let d = sample(ops, problem, &s.zp, &s.zm, s.t, dissipation);
        on_accept(s, &d);
        diagnostics.push(d);
        prev = (s.zp.clone(), s.zm.clone());
    })?;
    Ok(AdaptiveOutcome { run, diagnostics })
}
