//! The partitioned implicit midpoint step.
//!
//! One step of size `tau` solves the backward-Euler problem for the midpoint
//! value `z(n+1/2)` and then extrapolates `z(n+1) = 2 z(n+1/2) - z(n)`. The
//! backward-Euler problem is solved by Picard sweeps in which `z+` and `z-`
//! decouple: each field is advected by the other field's previous iterate and
//! the cross-diffusion `nu- lap z∓` is lagged to the right-hand side.

use crate::error::{Error, Result};
use crate::forms::{assemble_load_with, dot, ScalarOperators, Wind};
use crate::linsolve::{build_oseen_system, OseenBlock, OseenOperators};
use crate::problems::{Field, ProblemSpec};
use crate::space::{FieldVec, SpacePair};

/// Solution history carried from step to step.
#[derive(Clone, Debug)]
pub struct ElsasserState {
    pub zp: FieldVec,
    pub zm: FieldVec,
    pub zp_prev: Option<FieldVec>,
    pub zm_prev: Option<FieldVec>,
    /// Pressures from the last midpoint solve.
    pub pp: Option<FieldVec>,
    pub pm: Option<FieldVec>,
    pub t: f64,
    pub tau_prev: Option<f64>,
    pub tau_prev2: Option<f64>,
    pub step_index: usize,
}

impl ElsasserState {
    /// State at `t0` with no history.
    pub fn new(zp: FieldVec, zm: FieldVec, t0: f64) -> Self {
        Self {
            zp,
            zm,
            zp_prev: None,
            zm_prev: None,
            pp: None,
            pm: None,
            t: t0,
            tau_prev: None,
            tau_prev2: None,
            step_index: 0,
        }
    }

    /// Interpolated initial data of `problem` at `t0`.
    pub fn initial(space: &SpacePair, problem: &ProblemSpec, t0: f64) -> Result<Self> {
        let zp = space.interpolate_velocity(|x| problem.initial_value(Field::Plus, x, t0))?;
        let zm = space.interpolate_velocity(|x| problem.initial_value(Field::Minus, x, t0))?;
        Ok(Self::new(zp, zm, t0))
    }

    /// Initial data at `t0` plus a second level at `t0 - tau` taken from the
    /// exact solution, so the first Picard guess is already extrapolated.
    pub fn initial_with_exact_history(
        space: &SpacePair,
        problem: &ProblemSpec,
        t0: f64,
        tau: f64,
    ) -> Result<Self> {
        let mut s = Self::initial(space, problem, t0)?;
        if let Some(e) = &problem.exact {
            s.zp_prev = Some(space.interpolate_velocity(|x| e.zp(x, t0 - tau).value)?);
            s.zm_prev = Some(space.interpolate_velocity(|x| e.zm(x, t0 - tau).value)?);
            s.tau_prev = Some(tau);
        }
        Ok(s)
    }

    pub fn field(&self, f: Field) -> &FieldVec {
        match f {
            Field::Plus => &self.zp,
            Field::Minus => &self.zm,
        }
    }
}

/// Stopping rule and execution options for the Picard sweeps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PicardSettings {
    pub tol: f64,
    pub maxit: usize,
    /// Solve the `z+` and `z-` systems of a sweep concurrently.
    pub parallel: bool,
}

impl Default for PicardSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            maxit: 50,
            parallel: false,
        }
    }
}

impl PicardSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.maxit == 0 {
            return Err(Error::InvalidArgument(format!(
                "Picard tolerance must be positive and maxit at least 1, got tol={}, maxit={}",
                self.tol, self.maxit
            )));
        }
        Ok(())
    }
}

/// What happened during one backward-Euler half step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationReport {
    pub iterations: usize,
    /// Relative `L2` changes `[z+, z-]` per sweep.
    pub rel_changes: Vec<[f64; 2]>,
    /// `|d(k)|_1 / |d(k-1)|_1` for the successive differences `d(k)` of both
    /// fields in the combined `H1` seminorm.
    pub contraction_ratios: Vec<f64>,
    pub converged: bool,
    /// Step bound evaluated with the final iterate's gradients.
    pub tau_bound: f64,
    pub tau_within_bound: bool,
    /// Largest relative algebraic residual over all solves.
    pub max_residual: f64,
}

/// Per-step record.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub step_index: usize,
    /// Time at the end of the step.
    pub t: f64,
    pub tau: f64,
    pub iteration: IterationReport,
}

/// Converged midpoint values and pressures.
#[derive(Clone, Debug)]
pub struct HalfStep {
    pub zp: FieldVec,
    pub zm: FieldVec,
    pub pp: FieldVec,
    pub pm: FieldVec,
    pub report: IterationReport,
}

/// `1.5 z(n) - 0.5 z(n-1)`, or `z(n)` without history.
pub fn initial_guess(state: &ElsasserState) -> (FieldVec, FieldVec) {
    let guess = |z: &FieldVec, prev: &Option<FieldVec>| match prev {
        Some(p) => FieldVec::lincomb(1.5, z, -0.5, p),
        None => z.clone(),
    };
    (
        guess(&state.zp, &state.zp_prev),
        guess(&state.zm, &state.zm_prev),
    )
}

/// `2 z_half - z_n`.
pub fn extrapolate(z_n: &FieldVec, z_half: &FieldVec) -> FieldVec {
    FieldVec::lincomb(2.0, z_half, -1.0, z_n)
}

/// Velocity vector holding the Dirichlet data of `field` at time `t` on the
/// boundary nodes (zero elsewhere).
pub fn boundary_values(
    space: &SpacePair,
    problem: &ProblemSpec,
    field: Field,
    t: f64,
) -> Result<FieldVec> {
    let n = space.n_nodes;
    let mut coeffs = vec![0.0; 2 * n];
    for &i in &space.boundary_nodes {
        let v = problem.boundary(field, space.nodes[i], t);
        if !(v[0].is_finite() && v[1].is_finite()) {
            return Err(Error::Evaluation(format!(
                "boundary data {v:?} at {:?}, t = {t}",
                space.nodes[i]
            )));
        }
        coeffs[i] = v[0];
        coeffs[n + i] = v[1];
    }
    Ok(FieldVec::velocity(coeffs))
}

/// Advecting wind for the equation of `field`: the other field minus or plus `B0`.
pub(crate) fn wind_for<'a>(field: Field, other: &'a FieldVec, b0: [f64; 2]) -> Wind<'a> {
    let s = field.sign();
    Wind::shifted(other, [-s * b0[0], -s * b0[1]])
}

struct FieldSolve {
    z: FieldVec,
    p: FieldVec,
    residual: f64,
}

/// Solves `alpha M z + nu+ K z + C(wind) z - B^T p = rhs` with Dirichlet data.
pub(crate) fn solve_field(
    ops: &OseenOperators,
    alpha: f64,
    nu: f64,
    wind: Wind<'_>,
    rhs: &[f64],
    boundary: &FieldVec,
) -> Result<(FieldVec, FieldVec, f64)> {
    let sys = build_oseen_system(ops, OseenBlock { alpha, nu, wind }, rhs, boundary)?;
    let (z, p, stats) = sys.solve()?;
    Ok((z, p, stats.relative_residual))
}

pub(crate) fn maybe_join<A, B, RA, RB>(parallel: bool, a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    if parallel {
        rayon::join(a, b)
    } else {
        (a(), b())
    }
}

fn relative_change(ops: &ScalarOperators, new: &FieldVec, old: &FieldVec) -> (f64, Vec<f64>) {
    let diff: Vec<f64> = new
        .coeffs
        .iter()
        .zip(&old.coeffs)
        .map(|(a, b)| a - b)
        .collect();
    let dn = ops.l2_norm(&diff);
    let zn = ops.l2_norm(&new.coeffs);
    let rel = if zn < 1e-14 { dn } else { dn / zn };
    (rel, diff)
}

/// Backward-Euler solve for the midpoint values by partitioned Picard sweeps.
pub fn be_half_step(
    ops: &OseenOperators,
    problem: &ProblemSpec,
    state: &ElsasserState,
    tau: f64,
    settings: &PicardSettings,
) -> Result<HalfStep> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "step size must be positive, got {tau}"
        )));
    }
    settings.validate()?;
    let space = &ops.space;
    let scalar = &ops.scalar;
    let params = problem.params;
    let t_half = state.t + 0.5 * tau;
    let alpha = 2.0 / tau;

    let mut base = [Vec::new(), Vec::new()];
    let mut bnd = [
        FieldVec::velocity(Vec::new()),
        FieldVec::velocity(Vec::new()),
    ];
    for (i, field) in [Field::Plus, Field::Minus].into_iter().enumerate() {
        let mut rhs = ScalarOperators::apply_blockwise(&scalar.mass, &state.field(field).coeffs);
        rhs.iter_mut().for_each(|v| *v *= alpha);
        if problem.is_manufactured() {
            let load = assemble_load_with(
                space,
                &scalar.tab,
                |x, t| problem.forcing(field, x, t),
                t_half,
            )?;
            rhs.iter_mut().zip(&load).for_each(|(r, l)| *r += l);
        }
        base[i] = rhs;
        // Boundary data is the mean of the two full levels, so extrapolation
        // lands exactly on the data at t + tau and keeps the discrete
        // divergence constraint. Imposing g(t + tau/2) instead leaves an
        // O(tau^2) constraint defect that flips sign every step.
        let mut g = boundary_values(space, problem, field, state.t + tau)?;
        let z = state.field(field);
        for &d in &space.boundary_velocity_dofs {
            g.coeffs[d] = 0.5 * (z.coeffs[d] + g.coeffs[d]);
        }
        bnd[i] = g;
    }

    let (mut zp, mut zm) = initial_guess(state);
    let mut report = IterationReport::default();
    let mut last_h1: Option<f64> = None;
    let num = params.nu_minus();
    let mut pressures = None;

    for _ in 0..settings.maxit {
        let rhs_for = |i: usize, other: &FieldVec| -> Vec<f64> {
            let mut r = base[i].clone();
            if num != 0.0 {
                let k = ScalarOperators::apply_blockwise(&scalar.stiffness, &other.coeffs);
                r.iter_mut().zip(&k).for_each(|(a, b)| *a -= num * b);
            }
            r
        };
        let (sp, sm) = maybe_join(
            settings.parallel,
            || -> Result<FieldSolve> {
                let rhs = rhs_for(0, &zm);
                let (z, p, residual) = solve_field(
                    ops,
                    alpha,
                    params.nu_plus(),
                    wind_for(Field::Plus, &zm, problem.b0),
                    &rhs,
                    &bnd[0],
                )?;
                Ok(FieldSolve { z, p, residual })
            },
            || -> Result<FieldSolve> {
                let rhs = rhs_for(1, &zp);
                let (z, p, residual) = solve_field(
                    ops,
                    alpha,
                    params.nu_plus(),
                    wind_for(Field::Minus, &zp, problem.b0),
                    &rhs,
                    &bnd[1],
                )?;
                Ok(FieldSolve { z, p, residual })
            },
        );
        let (sp, sm) = (sp?, sm?);
        report.iterations += 1;
        report.max_residual = report.max_residual.max(sp.residual).max(sm.residual);

        let (rel_p, dp) = relative_change(scalar, &sp.z, &zp);
        let (rel_m, dm) = relative_change(scalar, &sm.z, &zm);
        report.rel_changes.push([rel_p, rel_m]);
        let h1 = (scalar.h1_inner(&dp, &dp) + scalar.h1_inner(&dm, &dm))
            .max(0.0)
            .sqrt();
        if let Some(prev) = last_h1 {
            if prev > 0.0 {
                report.contraction_ratios.push(h1 / prev);
            }
        }
        last_h1 = Some(h1);
        zp = sp.z;
        zm = sm.z;
        pressures = Some((sp.p, sm.p));
        if rel_p <= settings.tol && rel_m <= settings.tol {
            report.converged = true;
            break;
        }
    }

    let gamma = scalar
        .h1_seminorm(&zp.coeffs)
        .max(scalar.h1_seminorm(&zm.coeffs));
    report.tau_bound = theoretical_tau_bound(&params, gamma, 2).unwrap_or(0.0);
    report.tau_within_bound = tau <= report.tau_bound;

    if !report.converged {
        let last = report.rel_changes.last().copied().unwrap_or([f64::NAN; 2]);
        return Err(Error::NonConvergence {
            iterations: report.iterations,
            last_rel_plus: last[0],
            last_rel_minus: last[1],
            contraction_ratios: report.contraction_ratios,
        });
    }
    let (pp, pm) = pressures.expect("at least one sweep ran");
    Ok(HalfStep {
        zp,
        zm,
        pp,
        pm,
        report,
    })
}

/// One full midpoint step: half-step solve, extrapolation, history shift.
pub fn pim_step(
    ops: &OseenOperators,
    problem: &ProblemSpec,
    state: &ElsasserState,
    tau: f64,
    settings: &PicardSettings,
) -> Result<(ElsasserState, StepReport)> {
    let half = be_half_step(ops, problem, state, tau, settings)?;
    let t_next = state.t + tau;
    let next = ElsasserState {
        zp: extrapolate(&state.zp, &half.zp),
        zm: extrapolate(&state.zm, &half.zm),
        zp_prev: Some(state.zp.clone()),
        zm_prev: Some(state.zm.clone()),
        pp: Some(half.pp),
        pm: Some(half.pm),
        t: t_next,
        tau_prev: Some(tau),
        tau_prev2: state.tau_prev,
        step_index: state.step_index + 1,
    };
    let report = StepReport {
        step_index: next.step_index,
        t: next.t,
        tau,
        iteration: half.report,
    };
    Ok((next, report))
}

/// Largest step for which the Picard sweeps provably contract, given
/// `gamma = max(|grad z+|, |grad z-|)` at the midpoint.
pub fn theoretical_tau_bound(
    params: &crate::forms::PhysicalParams,
    gamma: f64,
    d: usize,
) -> Result<f64> {
    let (nu, nm) = (params.nu, params.nu_m);
    if !(nu > 0.0 && nm > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step bound needs positive viscosities, got nu={nu}, nu_m={nm}"
        )));
    }
    if d != 2 && d != 3 {
        return Err(Error::InvalidArgument(format!(
            "dimension must be 2 or 3, got {d}"
        )));
    }
    if !(gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be non-negative, got {gamma}"
        )));
    }
    if gamma == 0.0 {
        return Ok(f64::INFINITY);
    }
    let df = d as f64;
    let delta = (2.0 * (df - 1.0) / df.powf(1.5)).powf(df / 4.0);
    let e = 4.0 / (4.0 - df);
    Ok(
        8.0 / (4.0 - df) / (delta * delta * gamma).powf(e) * (nu * nu - nu * nm + nm * nm)
            / (nu * nu + nm * nm)
            * (2.0 * nu * nm / (df * (nu + nm))).powf(df / (4.0 - df)),
    )
}

/// Guaranteed contraction factor of the Picard sweeps in the weighted norm.
pub fn theoretical_rate(params: &crate::forms::PhysicalParams) -> Result<f64> {
    let (nu, nm) = (params.nu, params.nu_m);
    if !(nu > 0.0 && nm > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "contraction rate needs positive viscosities, got nu={nu}, nu_m={nm}"
        )));
    }
    Ok(1.0 - 2.0 * nu * nm / (nu * nu + nu * nm + nm * nm))
}

/// Discrete energy `(|z+|^2 + |z-|^2) / 2`.
pub fn elsasser_energy(ops: &ScalarOperators, zp: &FieldVec, zm: &FieldVec) -> f64 {
    0.5 * (ops.l2_inner(&zp.coeffs, &zp.coeffs) + ops.l2_inner(&zm.coeffs, &zm.coeffs))
}

/// `(grad a, grad b)` convenience for two fields.
pub fn grad_inner(ops: &ScalarOperators, a: &FieldVec, b: &FieldVec) -> f64 {
    dot(
        &ScalarOperators::apply_blockwise(&ops.stiffness, &a.coeffs),
        &b.coeffs,
    )
}
