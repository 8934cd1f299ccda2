//! Manufactured test problems and Elsässer/primitive conversions.
//!
//! Exact fields are given in closed form together with their first and
//! second spatial derivatives and time derivatives, so the forcing
//! `f± = d/dt z± ∓ (B0 . grad) z± + (z∓ . grad) z± - nu+ lap z± - nu- lap z∓ + grad p`
//! is evaluated exactly at any point.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::forms::PhysicalParams;
use crate::mesh::Rect;
use crate::space::FieldVec;

/// Which Elsässer field an equation is written for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Field {
    Plus,
    Minus,
}

impl Field {
    /// `+1` for `z+`, `-1` for `z-`.
    pub fn sign(self) -> f64 {
        match self {
            Field::Plus => 1.0,
            Field::Minus => -1.0,
        }
    }

    pub fn other(self) -> Field {
        match self {
            Field::Plus => Field::Minus,
            Field::Minus => Field::Plus,
        }
    }
}

/// Value, spatial gradient (`grad[c][d] = d v_c / d x_d`), Laplacian and time
/// derivative of a vector field at one space-time point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub value: [f64; 2],
    pub grad: [[f64; 2]; 2],
    pub lap: [f64; 2],
    pub dt: [f64; 2],
}

impl Jet {
    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Jet, b: f64) -> Jet {
        let v = |x: f64, y: f64| a * x + b * y;
        Jet {
            value: [
                v(self.value[0], other.value[0]),
                v(self.value[1], other.value[1]),
            ],
            grad: [
                [
                    v(self.grad[0][0], other.grad[0][0]),
                    v(self.grad[0][1], other.grad[0][1]),
                ],
                [
                    v(self.grad[1][0], other.grad[1][0]),
                    v(self.grad[1][1], other.grad[1][1]),
                ],
            ],
            lap: [v(self.lap[0], other.lap[0]), v(self.lap[1], other.lap[1])],
            dt: [v(self.dt[0], other.dt[0]), v(self.dt[1], other.dt[1])],
        }
    }
}

/// Closed-form Elsässer fields and pressure.
pub trait ExactSolution: Send + Sync + fmt::Debug {
    fn zp(&self, x: [f64; 2], t: f64) -> Jet;
    fn zm(&self, x: [f64; 2], t: f64) -> Jet;
    /// Pressure value and gradient.
    fn pressure(&self, x: [f64; 2], t: f64) -> (f64, [f64; 2]);

    fn z(&self, field: Field, x: [f64; 2], t: f64) -> Jet {
        match field {
            Field::Plus => self.zp(x, t),
            Field::Minus => self.zm(x, t),
        }
    }
}

/// Right-hand side of the Elsässer momentum equation for `field`, obtained by
/// substituting the exact fields.
pub fn manufactured_forcing(
    exact: &dyn ExactSolution,
    params: &PhysicalParams,
    b0: [f64; 2],
    field: Field,
    x: [f64; 2],
    t: f64,
) -> [f64; 2] {
    let s = field.sign();
    let z = exact.z(field, x, t);
    let w = exact.z(field.other(), x, t);
    let (_, gp) = exact.pressure(x, t);
    let (nup, num) = (params.nu_plus(), params.nu_minus());
    std::array::from_fn(|c| {
        let b0_grad = b0[0] * z.grad[c][0] + b0[1] * z.grad[c][1];
        let w_grad = w.value[0] * z.grad[c][0] + w.value[1] * z.grad[c][1];
        z.dt[c] - s * b0_grad + w_grad - nup * z.lap[c] - num * w.lap[c] + gp[c]
    })
}

/// Initial fields of an unforced run with homogeneous boundary data.
pub type InitialFields = Arc<dyn Fn([f64; 2]) -> ([f64; 2], [f64; 2]) + Send + Sync>;

/// Everything a time integrator needs to know about a test problem.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub params: PhysicalParams,
    pub b0: [f64; 2],
    pub domain: Rect,
    /// Exact solution; when absent the run is unforced with zero boundary data.
    pub exact: Option<Arc<dyn ExactSolution>>,
    /// Initial data used when `exact` is absent.
    pub initial: Option<InitialFields>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("b0", &self.b0)
            .field("domain", &self.domain)
            .field("exact", &self.exact)
            .finish()
    }
}

impl ProblemSpec {
    pub fn is_manufactured(&self) -> bool {
        self.exact.is_some()
    }

    pub fn forcing(&self, field: Field, x: [f64; 2], t: f64) -> [f64; 2] {
        match &self.exact {
            Some(e) => manufactured_forcing(e.as_ref(), &self.params, self.b0, field, x, t),
            None => [0.0, 0.0],
        }
    }

    /// Dirichlet data for `field`.
    pub fn boundary(&self, field: Field, x: [f64; 2], t: f64) -> [f64; 2] {
        match &self.exact {
            Some(e) => e.z(field, x, t).value,
            None => [0.0, 0.0],
        }
    }

    /// Initial value of `field` at time `t0`.
    pub fn initial_value(&self, field: Field, x: [f64; 2], t0: f64) -> [f64; 2] {
        match (&self.exact, &self.initial) {
            (Some(e), _) => e.z(field, x, t0).value,
            (None, Some(init)) => {
                let (zp, zm) = init(x);
                match field {
                    Field::Plus => zp,
                    Field::Minus => zm,
                }
            }
            (None, None) => [0.0, 0.0],
        }
    }

    pub fn exact_z(&self, field: Field, x: [f64; 2], t: f64) -> Option<[f64; 2]> {
        self.exact.as_ref().map(|e| e.z(field, x, t).value)
    }

    /// Unforced run on `domain` with zero boundary data, started from two
    /// solenoidal fields that vanish on the boundary.
    pub fn free_decay(params: PhysicalParams, b0: [f64; 2], domain: Rect) -> Self {
        let init: InitialFields = Arc::new(move |x| {
            let xi = (x[0] - domain.x0) / domain.width();
            let eta = (x[1] - domain.y0) / domain.height();
            // z = curl psi = (d psi/dy, -d psi/dx) for psi_a = sin^2(a pi xi) sin^2(b pi eta) / (a b pi).
            let curl = |a: f64, b: f64, amp: f64| {
                let (sx, cx) = (a * PI * xi).sin_cos();
                let (sy, cy) = (b * PI * eta).sin_cos();
                [
                    amp * 2.0 * b * PI * sx * sx * sy * cy / domain.height(),
                    -amp * 2.0 * a * PI * sx * cx * sy * sy / domain.width(),
                ]
            };
            (curl(1.0, 1.0, 1.0), curl(1.0, 2.0, 0.5))
        });
        Self {
            name: "free-decay".into(),
            params,
            b0,
            domain,
            exact: None,
            initial: Some(init),
        }
    }
}

/// `z± = u ± b`.
pub fn elsasser_from_primitive(u: &FieldVec, b: &FieldVec) -> (FieldVec, FieldVec) {
    (
        FieldVec::lincomb(1.0, u, 1.0, b),
        FieldVec::lincomb(1.0, u, -1.0, b),
    )
}

/// `u = (z+ + z-)/2`, `b = (z+ - z-)/2`.
pub fn primitive_from_elsasser(zp: &FieldVec, zm: &FieldVec) -> (FieldVec, FieldVec) {
    (
        FieldVec::lincomb(0.5, zp, 0.5, zm),
        FieldVec::lincomb(0.5, zp, -0.5, zm),
    )
}

/// Travelling wave on `[0.5, 1.5]^2`: a decaying vortex array advected with
/// unit speed (the velocity) plus a slowly growing quadratic magnetic
/// fluctuation.
#[derive(Clone, Copy, Debug)]
pub struct TravellingWave {
    pub nu: f64,
    pub nu_m: f64,
}

impl TravellingWave {
    fn wave(&self, x: [f64; 2], t: f64) -> Jet {
        let k = 2.0 * PI;
        let (sx, cx) = (k * (x[0] - t)).sin_cos();
        let (sy, cy) = (k * (x[1] - t)).sin_cos();
        let decay = (-8.0 * PI * PI * self.nu * t).exp();
        let e = 0.25 * decay;
        let w1 = e * cx * sy;
        let w2 = -e * sx * cy;
        let lam = -8.0 * PI * PI * self.nu;
        Jet {
            value: [0.75 + w1, w2],
            grad: [
                [-k * e * sx * sy, k * e * cx * cy],
                [-k * e * cx * cy, k * e * sx * sy],
            ],
            lap: [-2.0 * k * k * w1, -2.0 * k * k * w2],
            dt: [
                k * e * (sx * sy - cx * cy) + lam * w1,
                k * e * (cx * cy - sx * sy) + lam * w2,
            ],
        }
    }

    fn magnetic(&self, x: [f64; 2], t: f64) -> Jet {
        let g = 0.1 * (self.nu_m * t).exp();
        let (a, b) = (x[1] + 1.0, x[0] + 1.0);
        Jet {
            value: [g * a * a, g * b * b],
            grad: [[0.0, 2.0 * g * a], [2.0 * g * b, 0.0]],
            lap: [2.0 * g, 2.0 * g],
            dt: [self.nu_m * g * a * a, self.nu_m * g * b * b],
        }
    }
}

impl ExactSolution for TravellingWave {
    fn zp(&self, x: [f64; 2], t: f64) -> Jet {
        self.wave(x, t).combine(1.0, &self.magnetic(x, t), 1.0)
    }

    fn zm(&self, x: [f64; 2], t: f64) -> Jet {
        self.wave(x, t).combine(1.0, &self.magnetic(x, t), -1.0)
    }

    fn pressure(&self, x: [f64; 2], t: f64) -> (f64, [f64; 2]) {
        let k = 4.0 * PI;
        let d = (-16.0 * PI * PI * self.nu * t).exp() / 64.0;
        let (sx, cx) = (k * (x[0] - t)).sin_cos();
        let (sy, cy) = (k * (x[1] - t)).sin_cos();
        (-d * (cx + cy), [d * k * sx, d * k * sy])
    }
}

pub fn travelling_wave(params: PhysicalParams, b0: [f64; 2]) -> ProblemSpec {
    ProblemSpec {
        name: "travelling-wave".into(),
        params,
        b0,
        domain: Rect::new(0.5, 1.5, 0.5, 1.5),
        exact: Some(Arc::new(TravellingWave {
            nu: params.nu,
            nu_m: params.nu_m,
        })),
        initial: None,
    }
}

/// Channel parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HartmannParams {
    /// Channel length `L`; the domain is `[0, L] x [-1, 1]`.
    pub length: f64,
    /// Pressure-gradient magnitude.
    pub g: f64,
    pub s: f64,
    /// Hartmann number.
    pub ha: f64,
    /// Magnitude of the imposed field `B0 = (0, M)`.
    pub m: f64,
}

impl HartmannParams {
    /// `L = 6`, `G = S = 1`, `Ha = 5` with imposed field magnitude `m`.
    pub fn channel(m: f64) -> Self {
        Self {
            length: 6.0,
            g: 1.0,
            s: 1.0,
            ha: 5.0,
            m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.length, self.g, self.s, self.ha, self.m];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "Hartmann parameters must be positive: {self:?}"
            )))
        }
    }

    pub fn u1(&self, nu: f64, y: f64) -> f64 {
        let a = self.g / (nu * self.ha * self.ha.tanh());
        a * (1.0 - (self.ha * y).cosh() / self.ha.cosh())
    }

    pub fn b1(&self, y: f64) -> f64 {
        self.g / self.s * ((self.ha * y).sinh() / self.ha.sinh() - y)
    }
}

/// Time factor of the unsteady channel flow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeFactor {
    Steady,
    Lindberg { omega: f64 },
}

/// The exponents `g1, g2` and their derivatives.
pub fn lindberg_exponents(t: f64, omega: f64) -> ([f64; 2], [f64; 2]) {
    let s = 10f64.powf(omega);
    let e = (-t).exp();
    (
        [s * (t + 2.0 * e - 2.0), s * (1.0 - e - t * e)],
        [s * (1.0 - 2.0 * e), s * t * e],
    )
}

/// `G(t) = exp(g1) (cos g2 + sin g2)`.
pub fn lindberg_g(t: f64, omega: f64) -> Result<f64> {
    Ok(lindberg_g_with_derivative(t, omega)?.0)
}

/// `G(t)` and `G'(t)`.
pub fn lindberg_g_with_derivative(t: f64, omega: f64) -> Result<(f64, f64)> {
    let ([g1, g2], [d1, d2]) = lindberg_exponents(t, omega);
    let e = g1.exp();
    let (s, c) = g2.sin_cos();
    let g = e * (c + s);
    let dg = e * (d1 * (c + s) + d2 * (c - s));
    if g.is_finite() && dg.is_finite() {
        Ok((g, dg))
    } else {
        Err(Error::Evaluation(format!(
            "time factor overflows at t = {t} (omega = {omega}, g1 = {g1:.3e})"
        )))
    }
}

/// Steady or time-modulated Hartmann channel flow, `u = (u1(y), 0)`,
/// `B = (b1(y), M)`, fluctuation `b = (b1, 0)`, `p = -G x - S b1^2 / 2`.
#[derive(Clone, Copy, Debug)]
pub struct Hartmann {
    pub hp: HartmannParams,
    pub nu: f64,
    pub time: TimeFactor,
}

impl Hartmann {
    fn factor(&self, t: f64) -> (f64, f64) {
        match self.time {
            TimeFactor::Steady => (1.0, 0.0),
            // Evaluation outside the representable window yields non-finite data,
            // which interpolation and load assembly report as evaluation failures.
            TimeFactor::Lindberg { omega } => {
                lindberg_g_with_derivative(t, omega).unwrap_or((f64::NAN, f64::NAN))
            }
        }
    }

    /// Jets of `u` and `b` at `(y, t)`.
    fn primitive(&self, y: f64, t: f64) -> (Jet, Jet) {
        let hp = &self.hp;
        let ha = hp.ha;
        let a = hp.g / (self.nu * ha * ha.tanh());
        let (chy, shy) = ((ha * y).cosh(), (ha * y).sinh());
        let u1 = hp.u1(self.nu, y);
        let du1 = -a * ha * shy / ha.cosh();
        let d2u1 = -a * ha * ha * chy / ha.cosh();
        let gs = hp.g / hp.s;
        let b1 = hp.b1(y);
        let db1 = gs * (ha * chy / ha.sinh() - 1.0);
        let d2b1 = gs * ha * ha * shy / ha.sinh();
        let (g, dg) = self.factor(t);
        let jet = |v: f64, dv: f64, d2v: f64| Jet {
            value: [g * v, 0.0],
            grad: [[0.0, g * dv], [0.0, 0.0]],
            lap: [g * d2v, 0.0],
            dt: [dg * v, 0.0],
        };
        (jet(u1, du1, d2u1), jet(b1, db1, d2b1))
    }
}

impl ExactSolution for Hartmann {
    fn zp(&self, x: [f64; 2], t: f64) -> Jet {
        let (u, b) = self.primitive(x[1], t);
        u.combine(1.0, &b, 1.0)
    }

    fn zm(&self, x: [f64; 2], t: f64) -> Jet {
        let (u, b) = self.primitive(x[1], t);
        u.combine(1.0, &b, -1.0)
    }

    fn pressure(&self, x: [f64; 2], t: f64) -> (f64, [f64; 2]) {
        let hp = &self.hp;
        let (g, _) = self.factor(t);
        let b1 = hp.b1(x[1]);
        let db1 = hp.g / hp.s * (hp.ha * (hp.ha * x[1]).cosh() / hp.ha.sinh() - 1.0);
        (
            g * (-hp.g * x[0] - 0.5 * hp.s * b1 * b1),
            [-g * hp.g, -g * hp.s * b1 * db1],
        )
    }
}

pub fn hartmann(hp: HartmannParams, params: PhysicalParams) -> Result<ProblemSpec> {
    hp.validate()?;
    Ok(ProblemSpec {
        name: "hartmann".into(),
        params,
        b0: [0.0, hp.m],
        domain: Rect::new(0.0, hp.length, -1.0, 1.0),
        exact: Some(Arc::new(Hartmann {
            hp,
            nu: params.nu,
            time: TimeFactor::Steady,
        })),
        initial: None,
    })
}

pub fn lindberg_hartmann(
    hp: HartmannParams,
    params: PhysicalParams,
    omega: f64,
) -> Result<ProblemSpec> {
    hp.validate()?;
    if !omega.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "omega must be finite, got {omega}"
        )));
    }
    Ok(ProblemSpec {
        name: "lindberg-hartmann".into(),
        params,
        b0: [0.0, hp.m],
        domain: Rect::new(0.0, hp.length, -1.0, 1.0),
        exact: Some(Arc::new(Hartmann {
            hp,
            nu: params.nu,
            time: TimeFactor::Lindberg { omega },
        })),
        initial: None,
    })
}

/// Sixth-order central difference of `f` at `x` with step `h`.
fn d1(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let c = [(1.0, 45.0), (2.0, -9.0), (3.0, 1.0)];
    c.iter()
        .map(|(k, w)| w * (f(x + k * h) - f(x - k * h)))
        .sum::<f64>()
        / (60.0 * h)
}

/// Sixth-order central second difference.
fn d2(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let c = [(1.0, 270.0), (2.0, -27.0), (3.0, 2.0)];
    let s: f64 = c
        .iter()
        .map(|(k, w)| w * (f(x + k * h) + f(x - k * h)))
        .sum();
    (s - 490.0 * f(x)) / (180.0 * h * h)
}

/// Strong residual of the Elsässer system using only point values of the
/// exact fields, differentiated numerically with steps `hx` and `ht`.
/// Returned relative to the largest individual term (at least 1), so fields
/// of size 1e6 are judged by the same standard as fields of size 1.
pub fn strong_residual(
    p: &ProblemSpec,
    field: Field,
    x: [f64; 2],
    t: f64,
    hx: f64,
    ht: f64,
) -> Result<f64> {
    let e = p.exact.as_ref().ok_or_else(|| {
        Error::InvalidArgument("the residual needs a manufactured problem".into())
    })?;
    let val = |f: Field, c: usize, y: [f64; 2], s: f64| e.z(f, y, s).value[c];
    let s = field.sign();
    let w = e.z(field.other(), x, t).value;
    let f = p.forcing(field, x, t);
    let (nup, num) = (p.params.nu_plus(), p.params.nu_minus());
    let mut worst: f64 = 0.0;
    for c in 0..2 {
        let dx = |f: Field| d1(&|a| val(f, c, [a, x[1]], t), x[0], hx);
        let dy = |f: Field| d1(&|a| val(f, c, [x[0], a], t), x[1], hx);
        let lap = |f: Field| {
            d2(&|a| val(f, c, [a, x[1]], t), x[0], hx) + d2(&|a| val(f, c, [x[0], a], t), x[1], hx)
        };
        let dt = d1(&|a| val(field, c, x, a), t, ht);
        let pc = |a: f64| {
            let mut y = x;
            y[c] = a;
            e.pressure(y, t).0
        };
        let (zx, zy) = (dx(field), dy(field));
        let terms = [
            dt,
            -s * (p.b0[0] * zx + p.b0[1] * zy),
            w[0] * zx + w[1] * zy,
            -nup * lap(field),
            -num * lap(field.other()),
            d1(&pc, x[c], hx),
            -f[c],
        ];
        let scale = terms.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(terms.iter().sum::<f64>().abs() / scale);
    }
    Ok(worst)
}

/// Largest [`strong_residual`] of both fields over `samples` of `(x, t)`,
/// with spatial step `1e-3`.
pub fn max_strong_residual(p: &ProblemSpec, samples: &[([f64; 2], f64)], ht: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &(x, t) in samples {
        for field in [Field::Plus, Field::Minus] {
            worst = worst.max(strong_residual(p, field, x, t, 1e-3, ht)?);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_rect_mesh;
    use crate::space::build_spaces;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wave_params() -> PhysicalParams {
        PhysicalParams::new(2.5e-4, 2.5e-4).unwrap()
    }

    fn channel(m: f64) -> HartmannParams {
        HartmannParams {
            length: 6.0,
            g: 1.0,
            s: 1.0,
            ha: 5.0,
            m,
        }
    }

    fn check_residual(p: &ProblemSpec, t_range: (f64, f64), ht: f64, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = p.domain;
        let samples: Vec<([f64; 2], f64)> = (0..100)
            .map(|_| {
                let x = [
                    rng.gen_range(d.x0 + 0.01..d.x1 - 0.01),
                    rng.gen_range(d.y0 + 0.01..d.y1 - 0.01),
                ];
                (x, rng.gen_range(t_range.0..t_range.1))
            })
            .collect();
        max_strong_residual(p, &samples, ht).unwrap()
    }

    #[test]
    fn wave_point_values() {
        let e = TravellingWave {
            nu: 2.5e-4,
            nu_m: 2.5e-4,
        };
        let zp = e.zp([1.0, 1.0], 0.0).value;
        let zm = e.zm([1.0, 1.0], 0.0).value;
        assert!((zp[0] - 1.15).abs() < 1e-14 && (zp[1] - 0.4).abs() < 1e-14);
        assert!((zm[0] - 0.35).abs() < 1e-14 && (zm[1] + 0.4).abs() < 1e-14);
        assert!((e.pressure([1.0, 1.0], 0.0).0 + 1.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn wave_interpolant_at_centre() {
        let p = travelling_wave(wave_params(), [1.0, 1.0]);
        let s = build_spaces(&build_rect_mesh(p.domain, 4, 4).unwrap()).unwrap();
        let zp = s
            .interpolate_velocity(|x| p.initial_value(Field::Plus, x, 0.0))
            .unwrap();
        let centre = s.nodes.iter().position(|x| *x == [1.0, 1.0]).unwrap();
        assert!((zp.coeffs[centre] - 1.15).abs() < 1e-14);
        assert!((zp.coeffs[s.n_nodes + centre] - 0.4).abs() < 1e-14);
    }

    #[test]
    fn wave_fields_are_solenoidal() {
        let e = TravellingWave {
            nu: 2.5e-4,
            nu_m: 2.5e-4,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x = [rng.gen_range(0.5..1.5), rng.gen_range(0.5..1.5)];
            let t = rng.gen_range(0.0..1.0);
            for f in [Field::Plus, Field::Minus] {
                let div_fd = d1(&|a| e.z(f, [a, x[1]], t).value[0], x[0], 1e-3)
                    + d1(&|a| e.z(f, [x[0], a], t).value[1], x[1], 1e-3);
                let g = e.z(f, x, t).grad;
                assert!(div_fd.abs() < 1e-6);
                assert!((g[0][0] + g[1][1]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn wave_residual_oracle() {
        for b0 in [[0.0, 0.0], [1.0, 1.0], [10.0, 10.0]] {
            let p = travelling_wave(wave_params(), b0);
            let r = check_residual(&p, (0.0, 1.0), 1e-3, 7);
            assert!(r <= 1e-6, "B0 = {b0:?}: residual {r:.3e}");
        }
        let p = travelling_wave(PhysicalParams::new(0.3, 0.05).unwrap(), [1.0, -2.0]);
        assert!(check_residual(&p, (0.0, 1.0), 1e-3, 8) <= 1e-6);
    }

    #[test]
    fn hartmann_point_values() {
        let hp = channel(10.0);
        assert!((hp.u1(0.1, 0.0) - 1.97323).abs() < 5e-6);
        assert!(hp.u1(0.1, 1.0).abs() < 1e-14 && hp.u1(0.1, -1.0).abs() < 1e-14);
        assert_eq!(hp.b1(0.0), 0.0);
        assert!(hp.b1(1.0).abs() < 1e-14 && hp.b1(-1.0).abs() < 1e-14);
    }

    #[test]
    fn hartmann_elsasser_split() {
        let p = hartmann(channel(10.0), PhysicalParams::new(0.1, 0.1).unwrap()).unwrap();
        assert_eq!(p.b0, [0.0, 10.0]);
        let e = p.exact.as_ref().unwrap();
        let y = 0.3;
        let hp = channel(10.0);
        let zp = e.zp([1.0, y], 0.0).value;
        let zm = e.zm([1.0, y], 0.0).value;
        assert!((zp[0] - (hp.u1(0.1, y) + hp.b1(y))).abs() < 1e-14);
        assert!((zm[0] - (hp.u1(0.1, y) - hp.b1(y))).abs() < 1e-14);
        assert_eq!(zp[1], 0.0);
        assert_eq!(zm[1], 0.0);
    }

    #[test]
    fn hartmann_forcing_is_not_identically_zero() {
        let p = hartmann(channel(10.0), PhysicalParams::new(0.1, 0.1).unwrap()).unwrap();
        let f = p.forcing(Field::Plus, [1.0, 0.4], 0.0);
        assert!(f[0].abs() > 1e-3);
    }

    #[test]
    fn hartmann_residual_oracle() {
        for m in [1.0, 10.0, 100.0, 1000.0] {
            let p = hartmann(channel(m), PhysicalParams::new(0.1, 0.1).unwrap()).unwrap();
            let r = check_residual(&p, (0.0, 1.0), 1e-3, 3);
            assert!(r <= 1e-6, "M = {m}: residual {r:.3e}");
        }
    }

    #[test]
    fn lindberg_values() {
        assert_eq!(lindberg_g(0.0, 3.1).unwrap(), 1.0);
        assert!(lindberg_g(1.596, 3.1).unwrap().abs() < 5.0);
        let peak = lindberg_g(1.6015, 3.1).unwrap();
        assert!((150.0..450.0).contains(&peak), "G(1.6015) = {peak}");
        let low = lindberg_g(1.604, 3.1).unwrap();
        assert!((-2100.0..-700.0).contains(&low), "G(1.604) = {low}");
        assert!(matches!(lindberg_g(50.0, 3.1), Err(Error::Evaluation(_))));
    }

    #[test]
    fn lindberg_exponent_derivatives() {
        let t = 1.6;
        let h = 1e-4;
        for k in 0..2 {
            let fd = d1(&|s| lindberg_exponents(s, 3.1).0[k], t, h);
            let an = lindberg_exponents(t, 3.1).1[k];
            assert!(
                (fd - an).abs() < 1e-6 * an.abs().max(1.0),
                "g{}: {fd} vs {an}",
                k + 1
            );
        }
        let fd = d1(&|s| lindberg_g(s, 3.1).unwrap(), t, 1e-6);
        let an = lindberg_g_with_derivative(t, 3.1).unwrap().1;
        assert!((fd - an).abs() < 1e-6 * an.abs());
    }

    #[test]
    fn lindberg_hartmann_fields() {
        let params = PhysicalParams::new(0.1, 0.1).unwrap();
        let steady = hartmann(channel(100.0), params).unwrap();
        let p = lindberg_hartmann(channel(100.0), params, 3.1).unwrap();
        let x = [2.0, 0.37];
        let a = p.exact_z(Field::Plus, x, 0.0).unwrap();
        let b = steady.exact_z(Field::Plus, x, 0.0).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-14);
        // Scaling by G(t) commutes with every field.
        let t = 1.6;
        let g = lindberg_g(t, 3.1).unwrap();
        let a = p.exact_z(Field::Minus, x, t).unwrap();
        let b = steady.exact_z(Field::Minus, x, t).unwrap();
        assert!((a[0] - g * b[0]).abs() < 1e-12 * g.abs());
    }

    #[test]
    fn lindberg_residual_oracle() {
        let p =
            lindberg_hartmann(channel(100.0), PhysicalParams::new(0.1, 0.1).unwrap(), 3.1).unwrap();
        let r = check_residual(&p, (1.59, 1.604), 2e-5, 5);
        assert!(r <= 1e-6, "residual {r:.3e}");
    }

    #[test]
    fn conversions_round_trip() {
        let u = FieldVec::velocity(vec![1.0, 0.0, 0.5, -2.0]);
        let b = FieldVec::velocity(vec![0.0, 0.0, 0.25, 3.0]);
        let (zp, zm) = elsasser_from_primitive(&u, &b);
        let (u2, b2) = primitive_from_elsasser(&zp, &zm);
        for (x, y) in u
            .coeffs
            .iter()
            .zip(&u2.coeffs)
            .chain(b.coeffs.iter().zip(&b2.coeffs))
        {
            assert!((x - y).abs() <= 1e-15);
        }
        let (zp, zm) = elsasser_from_primitive(
            &FieldVec::velocity(vec![1.0, 0.0]),
            &FieldVec::velocity(vec![0.0, 0.0]),
        );
        assert_eq!(zp.coeffs, vec![1.0, 0.0]);
        assert_eq!(zm.coeffs, vec![1.0, 0.0]);
    }

    #[test]
    fn free_decay_data() {
        let d = Rect::unit();
        let p = ProblemSpec::free_decay(PhysicalParams::new(0.01, 0.01).unwrap(), [0.0, 0.0], d);
        assert!(!p.is_manufactured());
        for x in [[0.0, 0.3], [1.0, 0.7], [0.2, 0.0], [0.5, 1.0]] {
            for f in [Field::Plus, Field::Minus] {
                let v = p.initial_value(f, x, 0.0);
                assert!(v[0].abs() < 1e-14 && v[1].abs() < 1e-14);
            }
        }
        assert_eq!(p.forcing(Field::Plus, [0.5, 0.5], 0.3), [0.0, 0.0]);
        let v = p.initial_value(Field::Plus, [0.3, 0.6], 0.0);
        assert!(v[0].abs() + v[1].abs() > 0.1);
    }
}
