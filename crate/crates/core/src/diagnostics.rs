//! Energies, cross helicity, dissipation, error norms and observed rates.

use crate::error::{Error, Result};
use crate::forms::{PhysicalParams, ScalarOperators};
use crate::problems::Jet;
use crate::quadrature::QuadRule;
use crate::space::{FieldVec, SpacePair};

/// Energies of a state: `E_elsasser = (|z+|^2 + |z-|^2) / 2` and
/// `E_primitive = (|u|^2 + |B|^2) / 2` with `u = (z+ + z-)/2`,
/// `B = B0 + (z+ - z-)/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Energies {
    pub elsasser: f64,
    pub primitive: f64,
}

/// Velocity and magnetic fluctuation coefficient vectors.
pub fn primitive_fields(zp: &FieldVec, zm: &FieldVec) -> (FieldVec, FieldVec) {
    (
        FieldVec::lincomb(0.5, zp, 0.5, zm),
        FieldVec::lincomb(0.5, zp, -0.5, zm),
    )
}

/// `(int v_1, int v_2)` for a velocity vector.
fn component_integrals(ops: &ScalarOperators, v: &FieldVec) -> [f64; 2] {
    let n = ops.mass.nrows;
    let ones = vec![1.0; n];
    let m = ops.mass.matvec(&ones);
    let dot = |a: &[f64]| a.iter().zip(&m).map(|(x, y)| x * y).sum::<f64>();
    [dot(&v.coeffs[..n]), dot(&v.coeffs[n..])]
}

pub fn energy(
    ops: &ScalarOperators,
    zp: &FieldVec,
    zm: &FieldVec,
    b0: [f64; 2],
    area: f64,
) -> Energies {
    let elsasser =
        0.5 * (ops.l2_inner(&zp.coeffs, &zp.coeffs) + ops.l2_inner(&zm.coeffs, &zm.coeffs));
    let (u, b) = primitive_fields(zp, zm);
    let ib = component_integrals(ops, &b);
    let bb = ops.l2_inner(&b.coeffs, &b.coeffs)
        + 2.0 * (b0[0] * ib[0] + b0[1] * ib[1])
        + (b0[0] * b0[0] + b0[1] * b0[1]) * area;
    let primitive = 0.5 * (ops.l2_inner(&u.coeffs, &u.coeffs) + bb);
    Energies {
        elsasser,
        primitive,
    }
}

/// `H_C = (1/2) int u . B`.
pub fn cross_helicity(ops: &ScalarOperators, zp: &FieldVec, zm: &FieldVec, b0: [f64; 2]) -> f64 {
    let (u, b) = primitive_fields(zp, zm);
    let iu = component_integrals(ops, &u);
    0.5 * (ops.l2_inner(&u.coeffs, &b.coeffs) + b0[0] * iu[0] + b0[1] * iu[1])
}

/// Energy dissipated over one step from the midpoint values:
/// `tau [nu* (|grad z+|^2 + |grad z-|^2) + |nu-| |grad z+ + sgn(nu-) grad z-|^2]`.
pub fn dissipation_increment(
    ops: &ScalarOperators,
    zp_half: &FieldVec,
    zm_half: &FieldVec,
    tau: f64,
    params: &PhysicalParams,
) -> f64 {
    let num = params.nu_minus();
    let first = params.nu_star()
        * (ops.h1_inner(&zp_half.coeffs, &zp_half.coeffs)
            + ops.h1_inner(&zm_half.coeffs, &zm_half.coeffs));
    let second = if num == 0.0 {
        0.0
    } else {
        let s = num.signum();
        let w = FieldVec::lincomb(1.0, zp_half, s, zm_half);
        num.abs() * ops.h1_inner(&w.coeffs, &w.coeffs)
    };
    tau * (first.max(0.0) + second.max(0.0))
}

/// `L2` error and `H1` seminorm error of `field` against `exact`, by
/// quadrature with `rule`.
pub fn error_norms<F>(space: &SpacePair, rule: &QuadRule, field: &FieldVec, exact: F) -> (f64, f64)
where
    F: Fn([f64; 2]) -> Jet,
{
    let l2sq = space.integrate(rule, |k, l, x| {
        let (v, _) = space.eval_velocity(field, k, l);
        let e = exact(x).value;
        (v[0] - e[0]).powi(2) + (v[1] - e[1]).powi(2)
    });
    let h1sq = space.integrate(rule, |k, l, x| {
        let (_, g) = space.eval_velocity(field, k, l);
        let e = exact(x).grad;
        (0..4)
            .map(|i| (g[i / 2][i % 2] - e[i / 2][i % 2]).powi(2))
            .sum::<f64>()
    });
    (l2sq.max(0.0).sqrt(), h1sq.max(0.0).sqrt())
}

/// Running maximum over time of spatial errors, i.e. the discrete
/// `L-infinity(0,T; L2)` norm.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MaxTracker {
    pub max: f64,
    pub samples: usize,
}

impl MaxTracker {
    pub fn push(&mut self, v: f64) {
        self.samples += 1;
        if v > self.max || v.is_nan() {
            self.max = v;
        }
    }
}

/// Observed rates `log(e(i-1)/e(i)) / log(h(i-1)/h(i))`; `None` when either
/// error is zero.
pub fn convergence_rates(errors: &[f64], hs: &[f64]) -> Result<Vec<Option<f64>>> {
    if errors.len() != hs.len() || errors.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two matching errors and sizes, got {} and {}",
            errors.len(),
            hs.len()
        )));
    }
    if hs.windows(2).any(|w| !(w[1] < w[0] && w[1] > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "sizes must be positive and decreasing, got {hs:?}"
        )));
    }
    Ok(errors
        .windows(2)
        .zip(hs.windows(2))
        .map(|(e, h)| {
            if e[0] > 0.0 && e[1] > 0.0 {
                Some((e[0] / e[1]).ln() / (h[0] / h[1]).ln())
            } else {
                None
            }
        })
        .collect())
}

/// Energies and cross helicity of continuous fields given pointwise by
/// `z(x) = (z+, z-)`, by quadrature.
pub fn exact_invariants<F>(space: &SpacePair, rule: &QuadRule, b0: [f64; 2], z: F) -> Invariants
where
    F: Fn([f64; 2]) -> ([f64; 2], [f64; 2]),
{
    let mut acc = [0.0; 3];
    for geo in &space.geometry {
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let (p, m) = z(geo.map(l));
            let wk = 2.0 * geo.area * w;
            let u = [0.5 * (p[0] + m[0]), 0.5 * (p[1] + m[1])];
            let bf = [b0[0] + 0.5 * (p[0] - m[0]), b0[1] + 0.5 * (p[1] - m[1])];
            acc[0] += wk * 0.5 * (p[0] * p[0] + p[1] * p[1] + m[0] * m[0] + m[1] * m[1]);
            acc[1] += wk * 0.5 * (u[0] * u[0] + u[1] * u[1] + bf[0] * bf[0] + bf[1] * bf[1]);
            acc[2] += wk * 0.5 * (u[0] * bf[0] + u[1] * bf[1]);
        }
    }
    Invariants {
        energy: Energies {
            elsasser: acc[0],
            primitive: acc[1],
        },
        cross_helicity: acc[2],
    }
}

/// Energies together with the cross helicity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Invariants {
    pub energy: Energies,
    pub cross_helicity: f64,
}

/// One diagnostic sample.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub discrete: Invariants,
    /// Accumulated dissipation up to `t`.
    pub dissipation: f64,
    /// Invariants of the exact solution when one exists.
    pub exact: Option<Invariants>,
    /// `[L2, H1]` errors of `z+` and `z-` when an exact solution exists.
    pub errors: Option<[[f64; 2]; 2]>,
}

impl DiagnosticRecord {
    /// `|E_primitive - E_primitive(exact)|`.
    pub fn energy_error(&self) -> Option<f64> {
        self.exact
            .map(|e| (self.discrete.energy.primitive - e.energy.primitive).abs())
    }

    /// `|E_elsasser - E_elsasser(exact)|`.
    pub fn elsasser_energy_error(&self) -> Option<f64> {
        self.exact
            .map(|e| (self.discrete.energy.elsasser - e.energy.elsasser).abs())
    }

    pub fn cross_helicity_error(&self) -> Option<f64> {
        self.exact
            .map(|e| (self.discrete.cross_helicity - e.cross_helicity).abs())
    }
}
