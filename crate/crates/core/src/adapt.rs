//! Variable-step control for the midpoint scheme.
//!
//! The local error of a midpoint step is estimated by comparing it with an
//! explicit two-step predictor built from the last three accepted solutions;
//! the next step size follows from a bounded cube-root controller.

use crate::error::{Error, Result};
use crate::forms::ScalarOperators;
use crate::linsolve::OseenOperators;
use crate::problems::ProblemSpec;
use crate::space::FieldVec;
use crate::stepper::{pim_step, ElsasserState, PicardSettings, StepReport};

/// The last three accepted solutions `z(n), z(n-1), z(n-2)`, newest first.
#[derive(Clone, Debug)]
pub struct StepHistory {
    pub zp: [FieldVec; 3],
    pub zm: [FieldVec; 3],
    pub t: [f64; 3],
}

impl StepHistory {
    pub fn new(zp: [FieldVec; 3], zm: [FieldVec; 3], t: [f64; 3]) -> Result<Self> {
        if !(t[0] > t[1] && t[1] > t[2]) {
            return Err(Error::InvalidArgument(format!(
                "history times must be strictly decreasing from newest to oldest, got {t:?}"
            )));
        }
        Ok(Self { zp, zm, t })
    }

    /// `tau(n-1) = t(n) - t(n-1)`.
    pub fn tau_nm1(&self) -> f64 {
        self.t[0] - self.t[1]
    }

    /// `tau(n-2) = t(n-1) - t(n-2)`.
    pub fn tau_nm2(&self) -> f64 {
        self.t[1] - self.t[2]
    }

    /// `rho(n-1) = tau(n-1) / tau(n-2)`.
    pub fn rho_nm1(&self) -> f64 {
        self.tau_nm1() / self.tau_nm2()
    }

    /// Drops the oldest level and makes `(zp, zm, t)` the newest.
    pub fn push(&mut self, zp: FieldVec, zm: FieldVec, t: f64) -> Result<()> {
        if !(t > self.t[0]) {
            return Err(Error::InvalidArgument(format!(
                "new history time {t} does not exceed {}",
                self.t[0]
            )));
        }
        self.zp.rotate_right(1);
        self.zm.rotate_right(1);
        self.t.rotate_right(1);
        self.zp[0] = zp;
        self.zm[0] = zm;
        self.t[0] = t;
        Ok(())
    }
}

/// Controller settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControllerConfig {
    /// Relative local-error tolerance.
    pub tol: f64,
    /// Safety factor in `(0, 1]`.
    pub kappa: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    /// Rejections allowed within one step.
    pub max_rejects: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            kappa: 0.9,
            tau_min: 1e-6,
            tau_max: 1e-1,
            max_rejects: 20,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tol > 0.0
            && self.kappa > 0.0
            && self.kappa <= 1.0
            && self.tau_min > 0.0
            && self.tau_min <= self.tau_max
            && self.tau_max.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid controller settings {self:?}"
            )))
        }
    }
}

/// Relative local-error estimate of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LteEstimate {
    pub value: f64,
    pub r: f64,
    /// Per-field ratios `[z+, z-]`.
    pub fields: [f64; 2],
}

/// The `R(n)` coefficient for step ratios `rho(n) = tau(n)/tau(n-1)` and
/// `rho(n-1) = tau(n-1)/tau(n-2)`.
pub fn compute_r(rho_n: f64, rho_nm1: f64) -> f64 {
    let a = 3.0 / rho_n * (1.0 + 1.0 / (2.0 * rho_nm1)) * (1.0 + 1.0 / (2.0 * rho_n));
    let b = 3.0 / (2.0 * rho_n) * (1.0 + 1.0 / rho_n + 0.5 / (rho_nm1 * rho_n));
    (2.0 + a + b) / 12.0
}

/// Prefactor `(1/24) / |R - 1/24|` of the estimator.
pub fn estimator_prefactor(r: f64) -> Result<f64> {
    let d = (r - 1.0 / 24.0).abs();
    if d <= 1e-14 {
        return Err(Error::EstimatorSingular(r));
    }
    Ok(1.0 / 24.0 / d)
}

/// Predictor for one coefficient vector: the integral over `[t(n), t_next]` of
/// the linear interpolant of the two latest midpoint slopes.
fn predict_one(z: &[FieldVec; 3], t: &[f64; 3], t_next: f64) -> FieldVec {
    let (tn, tnm1, tnm2) = (t[0], t[1], t[2]);
    let (tau1, tau2) = (tn - tnm1, tnm1 - tnm2);
    let th1 = 0.5 * (tn + tnm1);
    let th2 = 0.5 * (tnm1 + tnm2);
    let f = (t_next - tn) / (2.0 * (th1 - th2));
    let a = f * (t_next + tn - 2.0 * th2) / tau1;
    let b = f * (t_next + tn - 2.0 * th1) / tau2;
    // z(n) + a (z(n) - z(n-1)) - b (z(n-1) - z(n-2))
    let coeffs = z[0]
        .coeffs
        .iter()
        .zip(&z[1].coeffs)
        .zip(&z[2].coeffs)
        .map(|((&zn, &z1), &z2)| zn + a * (zn - z1) - b * (z1 - z2))
        .collect();
    FieldVec {
        coeffs,
        kind: z[0].kind,
    }
}

/// Explicit predictions of `z+` and `z-` at `t_next`.
pub fn ab2_predict(history: &StepHistory, t_next: f64) -> Result<(FieldVec, FieldVec)> {
    if !(t_next > history.t[0]) {
        return Err(Error::InvalidArgument(format!(
            "prediction time {t_next} must exceed the newest history time {}",
            history.t[0]
        )));
    }
    Ok((
        predict_one(&history.zp, &history.t, t_next),
        predict_one(&history.zm, &history.t, t_next),
    ))
}

/// Relative local-error estimate, maximised over the two fields. Norms are
/// discrete `L2`; a field with `|z| <= 1e-14` uses the absolute difference.
pub fn estimate_lte(
    ops: &ScalarOperators,
    z_next: (&FieldVec, &FieldVec),
    z_pred: (&FieldVec, &FieldVec),
    r: f64,
) -> Result<LteEstimate> {
    let pre = estimator_prefactor(r)?;
    let ratio = |z: &FieldVec, p: &FieldVec| {
        let d: Vec<f64> = z.coeffs.iter().zip(&p.coeffs).map(|(a, b)| a - b).collect();
        let dn = ops.l2_norm(&d);
        let zn = ops.l2_norm(&z.coeffs);
        pre * if zn <= 1e-14 { dn } else { dn / zn }
    };
    let fields = [ratio(z_next.0, z_pred.0), ratio(z_next.1, z_pred.1)];
    Ok(LteEstimate {
        value: fields[0].max(fields[1]),
        r,
        fields,
    })
}

/// Step-size factor `min(1.5, max(0.2, kappa (tol/lte)^(1/3)))`.
pub fn controller_factor(lte: f64, cfg: &ControllerConfig) -> f64 {
    if lte <= 0.0 {
        return 1.5;
    }
    (cfg.kappa * (cfg.tol / lte).cbrt()).clamp(0.2, 1.5)
}

/// Next step size, clamped into `[tau_min, tau_max]`.
pub fn control_step(tau_n: f64, lte: f64, cfg: &ControllerConfig) -> f64 {
    (tau_n * controller_factor(lte, cfg)).clamp(cfg.tau_min, cfg.tau_max)
}

/// One attempted step of the adaptive loop.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveRecord {
    /// Start time of the attempt.
    pub t: f64,
    pub tau: f64,
    /// `None` for bootstrap steps, which are taken before any estimate exists.
    pub lte: Option<LteEstimate>,
    pub accepted: bool,
    /// Set on the final step shortened to land on the end time.
    pub trimmed: bool,
    pub step: StepReport,
}

/// Outcome of an adaptive run.
#[derive(Clone, Debug)]
pub struct AdaptiveRun {
    pub state: ElsasserState,
    pub records: Vec<AdaptiveRecord>,
}

impl AdaptiveRun {
    pub fn accepted(&self) -> impl Iterator<Item = &AdaptiveRecord> {
        self.records.iter().filter(|r| r.accepted)
    }

    pub fn n_accepted(&self) -> usize {
        self.accepted().count()
    }

    pub fn n_rejected(&self) -> usize {
        self.records.len() - self.n_accepted()
    }
}

/// Adaptive integration from `state` to `t_end`. Two bootstrap steps of size
/// `tau_min` build the history; afterwards each step is accepted when its
/// estimate is below `tol` and otherwise recomputed with a smaller step.
/// `observer` sees every accepted state.
pub fn adaptive_loop(
    ops: &OseenOperators,
    problem: &ProblemSpec,
    state: ElsasserState,
    cfg: &ControllerConfig,
    picard: &PicardSettings,
    t_end: f64,
    mut observer: impl FnMut(&ElsasserState, &AdaptiveRecord),
) -> Result<AdaptiveRun> {
    cfg.validate()?;
    if !(t_end > state.t) {
        return Err(Error::InvalidArgument(format!(
            "end time {t_end} must exceed the start time {}",
            state.t
        )));
    }
    let span = t_end - state.t;
    let eps = 1e-12 * span.max(t_end.abs());
    let mut records = Vec::new();
    let mut state = state;
    let mut levels = vec![(state.zp.clone(), state.zm.clone(), state.t)];

    // Bootstrap.
    while levels.len() < 3 {
        let tau = cfg.tau_min.min(t_end - state.t);
        let (next, step) = pim_step(ops, problem, &state, tau, picard)?;
        let rec = AdaptiveRecord {
            t: state.t,
            tau,
            lte: None,
            accepted: true,
            trimmed: false,
            step,
        };
        observer(&next, &rec);
        records.push(rec);
        state = next;
        levels.push((state.zp.clone(), state.zm.clone(), state.t));
        if state.t >= t_end - eps {
            return Ok(AdaptiveRun { state, records });
        }
    }
    let mut it = levels.into_iter().rev();
    let (a, b, c) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
    let mut history = StepHistory::new([a.0, b.0, c.0], [a.1, b.1, c.1], [a.2, b.2, c.2])?;

    let mut tau = cfg.tau_min;
    while state.t < t_end - eps {
        let mut rejects = 0;
        loop {
            let remaining = t_end - state.t;
            let trimmed = tau >= remaining - eps;
            let tau_try = if trimmed { remaining } else { tau };
            let (next, step) = pim_step(ops, problem, &state, tau_try, picard)?;
            let r = compute_r(tau_try / history.tau_nm1(), history.rho_nm1());
            let (pp, pm) = ab2_predict(&history, next.t)?;
            let lte = estimate_lte(&ops.scalar, (&next.zp, &next.zm), (&pp, &pm), r)?;
            let accepted = lte.value < cfg.tol;
            let rec = AdaptiveRecord {
                t: state.t,
                tau: tau_try,
                lte: Some(lte),
                accepted,
                trimmed,
                step,
            };
            if accepted {
                observer(&next, &rec);
                records.push(rec);
                history.push(next.zp.clone(), next.zm.clone(), next.t)?;
                state = next;
                tau = control_step(tau_try, lte.value, cfg);
                break;
            }
            records.push(rec);
            rejects += 1;
            if tau_try <= cfg.tau_min || rejects > cfg.max_rejects {
                return Err(Error::AdaptivityFailure {
                    t: state.t,
                    reason: format!(
                        "estimate {:.3e} above tolerance {:.1e} with step {tau_try:.3e} after {rejects} rejections",
                        lte.value, cfg.tol
                    ),
                });
            }
            tau = control_step(tau_try, lte.value, cfg);
        }
    }
    Ok(AdaptiveRun { state, records })
}
