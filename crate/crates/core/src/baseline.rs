//! Constant-step IMEX BDF2 with extrapolated coupling.
//!
//! Each step solves, for both fields independently,
//! `(3 z(n+1) - 4 z(n) + z(n-1)) / (2 tau) + C(w) z(n+1) - nu+ lap z(n+1) + grad p
//!  = f(t(n+1)) + nu- lap z*` with `z* = 2 z∓(n) - z∓(n-1)` and wind `w = z* ∓ B0`.

use crate::error::{Error, Result};
use crate::forms::{assemble_load_with, ScalarOperators};
use crate::linsolve::OseenOperators;
use crate::problems::{Field, ProblemSpec};
use crate::space::{FieldVec, SpacePair};
use crate::stepper::{
    boundary_values, maybe_join, pim_step, solve_field, wind_for, ElsasserState, IterationReport,
    PicardSettings, StepReport,
};

/// Two-level history at a fixed step size.
#[derive(Clone, Debug)]
pub struct Bdf2State {
    pub zp: FieldVec,
    pub zm: FieldVec,
    pub zp_prev: FieldVec,
    pub zm_prev: FieldVec,
    pub pp: Option<FieldVec>,
    pub pm: Option<FieldVec>,
    pub t: f64,
    pub tau: f64,
    pub step_index: usize,
}

impl Bdf2State {
    /// Exact data at `t0 - tau` and `t0`.
    pub fn from_exact(space: &SpacePair, problem: &ProblemSpec, t0: f64, tau: f64) -> Result<Self> {
        let exact = problem.exact.as_ref().ok_or_else(|| {
            Error::InsufficientHistory("exact start needs a manufactured problem".into())
        })?;
        let at = |f: Field, t: f64| space.interpolate_velocity(|x| exact.z(f, x, t).value);
        Ok(Self {
            zp: at(Field::Plus, t0)?,
            zm: at(Field::Minus, t0)?,
            zp_prev: at(Field::Plus, t0 - tau)?,
            zm_prev: at(Field::Minus, t0 - tau)?,
            pp: None,
            pm: None,
            t: t0,
            tau,
            step_index: 0,
        })
    }

    /// Second level produced by one midpoint step from `state`.
    pub fn from_midpoint_start(
        ops: &OseenOperators,
        problem: &ProblemSpec,
        state: &ElsasserState,
        tau: f64,
        picard: &PicardSettings,
    ) -> Result<(Self, StepReport)> {
        let (next, report) = pim_step(ops, problem, state, tau, picard)?;
        Ok((
            Self {
                zp: next.zp,
                zm: next.zm,
                zp_prev: state.zp.clone(),
                zm_prev: state.zm.clone(),
                pp: next.pp,
                pm: next.pm,
                t: next.t,
                tau,
                step_index: 1,
            },
            report,
        ))
    }

    /// Exact history for manufactured problems, otherwise a midpoint start.
    pub fn start(
        ops: &OseenOperators,
        problem: &ProblemSpec,
        t0: f64,
        tau: f64,
        picard: &PicardSettings,
    ) -> Result<Self> {
        if problem.is_manufactured() {
            Self::from_exact(&ops.space, problem, t0, tau)
        } else {
            let s0 = ElsasserState::initial(&ops.space, problem, t0)?;
            Ok(Self::from_midpoint_start(ops, problem, &s0, tau, picard)?.0)
        }
    }

    pub fn field(&self, f: Field) -> (&FieldVec, &FieldVec) {
        match f {
            Field::Plus => (&self.zp, &self.zp_prev),
            Field::Minus => (&self.zm, &self.zm_prev),
        }
    }
}

/// Advances `state` by its step size. `parallel` solves the two fields
/// concurrently.
pub fn bdf2ab2_step(
    ops: &OseenOperators,
    problem: &ProblemSpec,
    state: &Bdf2State,
    parallel: bool,
) -> Result<(Bdf2State, StepReport)> {
    let tau = state.tau;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "step size must be positive, got {tau}"
        )));
    }
    let space = &ops.space;
    let scalar = &ops.scalar;
    let params = problem.params;
    let t_next = state.t + tau;
    let alpha = 1.5 / tau;

    let solve = |field: Field| -> Result<(FieldVec, FieldVec, f64)> {
        let (z, z_prev) = state.field(field);
        let (o, o_prev) = state.field(field.other());
        let star = FieldVec::lincomb(2.0, o, -1.0, o_prev);
        let hist: Vec<f64> = z
            .coeffs
            .iter()
            .zip(&z_prev.coeffs)
            .map(|(a, b)| (4.0 * a - b) / (2.0 * tau))
            .collect();
        let mut rhs = ScalarOperators::apply_blockwise(&scalar.mass, &hist);
        if problem.is_manufactured() {
            let load = assemble_load_with(
                space,
                &scalar.tab,
                |x, t| problem.forcing(field, x, t),
                t_next,
            )?;
            rhs.iter_mut().zip(&load).for_each(|(r, l)| *r += l);
        }
        let num = params.nu_minus();
        if num != 0.0 {
            let k = ScalarOperators::apply_blockwise(&scalar.stiffness, &star.coeffs);
            rhs.iter_mut().zip(&k).for_each(|(r, v)| *r -= num * v);
        }
        let bnd = boundary_values(space, problem, field, t_next)?;
        solve_field(
            ops,
            alpha,
            params.nu_plus(),
            wind_for(field, &star, problem.b0),
            &rhs,
            &bnd,
        )
    };
    let (sp, sm) = maybe_join(parallel, || solve(Field::Plus), || solve(Field::Minus));
    let ((zp, pp, rp), (zm, pm, rm)) = (sp?, sm?);

    let next = Bdf2State {
        zp_prev: state.zp.clone(),
        zm_prev: state.zm.clone(),
        zp,
        zm,
        pp: Some(pp),
        pm: Some(pm),
        t: t_next,
        tau,
        step_index: state.step_index + 1,
    };
    let report = StepReport {
        step_index: next.step_index,
        t: t_next,
        tau,
        iteration: IterationReport {
            iterations: 1,
            converged: true,
            max_residual: rp.max(rm),
            tau_bound: f64::NAN,
            ..Default::default()
        },
    };
    Ok((next, report))
}
