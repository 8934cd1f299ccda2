//! Assembly of the discrete operators.
//!
//! Both velocity components share every scalar operator, so the assembly
//! works on the scalar P2 space and vector operators are block-diagonal
//! expansions of it. Convection uses the half-difference skew form
//! `c(w; u, v) = 1/2 (w . grad u, v) - 1/2 (w . grad v, u)`.

use crate::error::{Error, Result};
use crate::quadrature::QuadRule;
use crate::space::{p2_lambda_derivatives, p2_values, FieldVec, SpaceKind, SpacePair};
use crate::sparse::SparseMat;

/// Viscosity and resistivity together with the Elsässer combinations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalParams {
    pub nu: f64,
    pub nu_m: f64,
}

impl PhysicalParams {
    /// Dissipative parameters; both must be positive.
    pub fn new(nu: f64, nu_m: f64) -> Result<Self> {
        if !(nu > 0.0 && nu_m > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "nu and nu_m must be positive, got nu={nu}, nu_m={nu_m}"
            )));
        }
        Ok(Self { nu, nu_m })
    }

    /// Ideal (non-dissipative) parameters, allowed only for invariant checks.
    pub fn ideal() -> Self {
        Self { nu: 0.0, nu_m: 0.0 }
    }

    pub fn is_ideal(&self) -> bool {
        self.nu == 0.0 && self.nu_m == 0.0
    }

    pub fn nu_plus(&self) -> f64 {
        0.5 * (self.nu + self.nu_m)
    }

    pub fn nu_minus(&self) -> f64 {
        0.5 * (self.nu - self.nu_m)
    }

    pub fn nu_star(&self) -> f64 {
        self.nu.min(self.nu_m)
    }
}

/// Advecting velocity: an optional P2 field plus a constant vector.
#[derive(Clone, Copy, Debug)]
pub struct Wind<'a> {
    pub field: Option<&'a FieldVec>,
    pub constant: [f64; 2],
}

impl<'a> Wind<'a> {
    pub fn field(f: &'a FieldVec) -> Self {
        Self {
            field: Some(f),
            constant: [0.0; 2],
        }
    }

    pub fn constant(c: [f64; 2]) -> Self {
        Self {
            field: None,
            constant: c,
        }
    }

    /// `f + c`.
    pub fn shifted(f: &'a FieldVec, c: [f64; 2]) -> Self {
        Self {
            field: Some(f),
            constant: c,
        }
    }
}

/// Basis data tabulated at the points of a quadrature rule.
#[derive(Clone, Debug)]
pub struct Tabulation {
    pub rule: QuadRule,
    pub phi: Vec<[f64; 6]>,
    pub dphi_dlambda: Vec<[[f64; 3]; 6]>,
}

impl Tabulation {
    pub fn new(rule: QuadRule) -> Self {
        let phi = rule.points.iter().map(p2_values).collect();
        let dphi_dlambda = rule.points.iter().map(p2_lambda_derivatives).collect();
        Self {
            rule,
            phi,
            dphi_dlambda,
        }
    }

    /// Physical P2 gradients at point `q` of element `k`.
    pub fn gradients(&self, space: &SpacePair, k: usize, q: usize) -> [[f64; 2]; 6] {
        let gl = &space.geometry[k].grad_lambda;
        let d = &self.dphi_dlambda[q];
        let mut g = [[0.0; 2]; 6];
        for a in 0..6 {
            for i in 0..3 {
                g[a][0] += d[a][i] * gl[i][0];
                g[a][1] += d[a][i] * gl[i][1];
            }
        }
        g
    }
}

/// Scalar P2 pattern with per-element slot maps, plus the operators that
/// never change for a given mesh.
#[derive(Clone, Debug)]
pub struct ScalarOperators {
    /// Node-by-node sparsity pattern (values hold the mass matrix).
    pub mass: SparseMat,
    pub stiffness: SparseMat,
    /// `(psi_q, d phi_j / dx)` and `(psi_q, d phi_j / dy)`, pressure rows.
    pub div_x: SparseMat,
    pub div_y: SparseMat,
    /// Value slot of local entry `(a, b)` at `6 * a + b`, per element.
    pub element_slots: Vec<[usize; 36]>,
    pub tab: Tabulation,
}

impl ScalarOperators {
    pub fn new(space: &SpacePair) -> Self {
        let tab = Tabulation::new(QuadRule::degree5());
        let n = space.n_nodes;

        let mut trip = Vec::with_capacity(36 * space.n_elements());
        for dofs in &space.velocity_dofmap {
            for &i in dofs {
                for &j in dofs {
                    trip.push((i, j, 0.0));
                }
            }
        }
        let pattern =
            SparseMat::from_triplets(n, n, &trip, true).expect("element dofs are in range");
        let element_slots: Vec<[usize; 36]> = space
            .velocity_dofmap
            .iter()
            .map(|dofs| {
                let mut s = [0; 36];
                for a in 0..6 {
                    for b in 0..6 {
                        s[6 * a + b] = pattern.slot(dofs[a], dofs[b]).unwrap();
                    }
                }
                s
            })
            .collect();

        let mut mass = vec![0.0; pattern.nnz()];
        let mut stiff = vec![0.0; pattern.nnz()];
        let mut bx = Vec::with_capacity(18 * space.n_elements());
        let mut by = Vec::with_capacity(18 * space.n_elements());
        for (k, dofs) in space.velocity_dofmap.iter().enumerate() {
            let jac = 2.0 * space.geometry[k].area;
            let pdofs = space.pressure_dofmap[k];
            let mut me = [0.0; 36];
            let mut ke = [0.0; 36];
            let mut dx = [[0.0; 6]; 3];
            let mut dy = [[0.0; 6]; 3];
            for (q, (l, w)) in tab.rule.points.iter().zip(&tab.rule.weights).enumerate() {
                let wq = w * jac;
                let phi = &tab.phi[q];
                let g = tab.gradients(space, k, q);
                for a in 0..6 {
                    for b in 0..6 {
                        me[6 * a + b] += wq * phi[a] * phi[b];
                        ke[6 * a + b] += wq * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                    }
                }
                for r in 0..3 {
                    for b in 0..6 {
                        dx[r][b] += wq * l[r] * g[b][0];
                        dy[r][b] += wq * l[r] * g[b][1];
                    }
                }
            }
            for (e, &s) in element_slots[k].iter().enumerate() {
                mass[s] += me[e];
                stiff[s] += ke[e];
            }
            for r in 0..3 {
                for b in 0..6 {
                    bx.push((pdofs[r], dofs[b], dx[r][b]));
                    by.push((pdofs[r], dofs[b], dy[r][b]));
                }
            }
        }
        let np = space.n_pressure_dofs;
        Self {
            stiffness: pattern.with_values(stiff, true),
            mass: pattern.with_values(mass, true),
            div_x: SparseMat::from_triplets(np, n, &bx, false).unwrap(),
            div_y: SparseMat::from_triplets(np, n, &by, false).unwrap(),
            element_slots,
            tab,
        }
    }

    /// Applies a scalar operator to both components of a velocity vector.
    pub fn apply_blockwise(mat: &SparseMat, v: &[f64]) -> Vec<f64> {
        let n = mat.nrows;
        assert_eq!(v.len(), 2 * n);
        let mut out = mat.matvec(&v[..n]);
        out.extend(mat.matvec(&v[n..]));
        out
    }

    /// `(u, v)` for velocity coefficient vectors.
    pub fn l2_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        dot(&Self::apply_blockwise(&self.mass, u), v)
    }

    /// `(grad u, grad v)` for velocity coefficient vectors.
    pub fn h1_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        dot(&Self::apply_blockwise(&self.stiffness, u), v)
    }

    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        self.l2_inner(u, u).max(0.0).sqrt()
    }

    pub fn h1_seminorm(&self, u: &[f64]) -> f64 {
        self.h1_inner(u, u).max(0.0).sqrt()
    }

    /// Values of the scalar skew convection matrix on the shared pattern.
    pub fn convection_values(&self, space: &SpacePair, wind: Wind<'_>) -> Result<Vec<f64>> {
        let mut vals = vec![0.0; self.mass.nnz()];
        self.add_convection(space, wind, 1.0, &mut vals)?;
        Ok(vals)
    }

    /// Adds `scale * C(wind)` into values laid out on the shared pattern.
    pub fn add_convection(
        &self,
        space: &SpacePair,
        wind: Wind<'_>,
        scale: f64,
        vals: &mut [f64],
    ) -> Result<()> {
        if let Some(f) = wind.field {
            if f.kind != SpaceKind::Velocity || f.len() != space.n_velocity_dofs {
                return Err(Error::InvalidArgument(format!(
                    "wind has {} coefficients of kind {:?}, expected {} velocity coefficients",
                    f.len(),
                    f.kind,
                    space.n_velocity_dofs
                )));
            }
        }
        let n = space.n_nodes;
        for (k, dofs) in space.velocity_dofmap.iter().enumerate() {
            let jac = 2.0 * space.geometry[k].area;
            let mut wc = [[0.0; 6]; 2];
            if let Some(f) = wind.field {
                for a in 0..6 {
                    wc[0][a] = f.coeffs[dofs[a]];
                    wc[1][a] = f.coeffs[n + dofs[a]];
                }
            }
            // E[a][b] = (w . grad phi_b, phi_a)
            let mut e = [0.0; 36];
            for (q, w) in self.tab.rule.weights.iter().enumerate() {
                let phi = &self.tab.phi[q];
                let mut wv = wind.constant;
                for a in 0..6 {
                    wv[0] += wc[0][a] * phi[a];
                    wv[1] += wc[1][a] * phi[a];
                }
                let g = self.tab.gradients(space, k, q);
                let wq = w * jac;
                let adv: [f64; 6] = std::array::from_fn(|b| wv[0] * g[b][0] + wv[1] * g[b][1]);
                for a in 0..6 {
                    for b in 0..6 {
                        e[6 * a + b] += wq * phi[a] * adv[b];
                    }
                }
            }
            let slots = &self.element_slots[k];
            for a in 0..6 {
                for b in 0..6 {
                    vals[slots[6 * a + b]] += scale * 0.5 * (e[6 * a + b] - e[6 * b + a]);
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Vector mass matrix on the velocity space.
pub fn assemble_mass(space: &SpacePair) -> SparseMat {
    ScalarOperators::new(space).mass.block_diagonal(2)
}

/// Vector stiffness matrix `(grad u, grad v)`.
pub fn assemble_stiffness(space: &SpacePair) -> SparseMat {
    ScalarOperators::new(space).stiffness.block_diagonal(2)
}

/// Discrete divergence `(q, div v)`: pressure rows, velocity columns.
pub fn assemble_div(space: &SpacePair) -> SparseMat {
    let ops = ScalarOperators::new(space);
    divergence_from(&ops, space)
}

pub(crate) fn divergence_from(ops: &ScalarOperators, space: &SpacePair) -> SparseMat {
    let n = space.n_nodes;
    let mut trip = Vec::with_capacity(ops.div_x.nnz() + ops.div_y.nnz());
    for r in 0..ops.div_x.nrows {
        trip.extend(ops.div_x.row(r).map(|(j, a)| (r, j, a)));
        trip.extend(ops.div_y.row(r).map(|(j, a)| (r, n + j, a)));
    }
    SparseMat::from_triplets(space.n_pressure_dofs, 2 * n, &trip, false).unwrap()
}

/// Vector skew convection matrix for the given wind.
pub fn assemble_convection(space: &SpacePair, wind: Wind<'_>) -> Result<SparseMat> {
    let ops = ScalarOperators::new(space);
    let vals = ops.convection_values(space, wind)?;
    Ok(ops.mass.with_values(vals, false).block_diagonal(2))
}

/// Load vector `(f(., t), phi_i)` on the velocity space.
pub fn assemble_load<F>(space: &SpacePair, f: F, t: f64) -> Result<Vec<f64>>
where
    F: Fn([f64; 2], f64) -> [f64; 2],
{
    assemble_load_with(space, &Tabulation::new(QuadRule::degree5()), f, t)
}

pub fn assemble_load_with<F>(space: &SpacePair, tab: &Tabulation, f: F, t: f64) -> Result<Vec<f64>>
where
    F: Fn([f64; 2], f64) -> [f64; 2],
{
    let n = space.n_nodes;
    let mut out = vec![0.0; 2 * n];
    for (k, dofs) in space.velocity_dofmap.iter().enumerate() {
        let geo = &space.geometry[k];
        let jac = 2.0 * geo.area;
        for (q, (l, w)) in tab.rule.points.iter().zip(&tab.rule.weights).enumerate() {
            let x = geo.map(l);
            let fv = f(x, t);
            if !(fv[0].is_finite() && fv[1].is_finite()) {
                return Err(Error::Evaluation(format!(
                    "forcing is {fv:?} at {x:?}, t = {t}"
                )));
            }
            let wq = w * jac;
            for a in 0..6 {
                let p = wq * tab.phi[q][a];
                out[dofs[a]] += p * fv[0];
                out[n + dofs[a]] += p * fv[1];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rect_mesh, Rect};
    use crate::space::build_spaces;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize) -> SpacePair {
        build_spaces(&build_rect_mesh(Rect::unit(), n, n).unwrap()).unwrap()
    }

    #[test]
    fn params_derived_quantities() {
        let p = PhysicalParams::new(1.0, 0.25).unwrap();
        assert_eq!(p.nu_plus(), 0.625);
        assert_eq!(p.nu_minus(), 0.375);
        assert_eq!(p.nu_plus() - p.nu_minus().abs(), p.nu_star());
        assert!(PhysicalParams::new(0.0, 1.0).is_err());
        assert!(PhysicalParams::ideal().is_ideal());
    }

    #[test]
    fn mass_of_ones_is_twice_area() {
        let m = build_rect_mesh(Rect::new(0.0, 6.0, -1.0, 1.0), 6, 2).unwrap();
        let s = build_spaces(&m).unwrap();
        let mm = assemble_mass(&s);
        let one = vec![1.0; s.n_velocity_dofs];
        assert!((mm.bilinear(&one, &one) - 24.0).abs() < 1e-11);
        assert!(mm.symmetry_defect(1.0) < 1e-14);
    }

    #[test]
    fn mass_norm_of_linear_field() {
        let s = unit(3);
        let f = s.interpolate_velocity(|p| [p[0], 0.0]).unwrap();
        let mm = assemble_mass(&s);
        assert!((mm.bilinear(&f.coeffs, &f.coeffs) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn stiffness_kernel_and_value() {
        let s = unit(4);
        let k = assemble_stiffness(&s);
        let c = s.interpolate_velocity(|_| [2.0, -3.0]).unwrap();
        assert!(k.matvec(&c.coeffs).iter().all(|v| v.abs() < 1e-12));
        let f = s.interpolate_velocity(|p| [p[1], 0.0]).unwrap();
        assert!((k.bilinear(&f.coeffs, &f.coeffs) - 1.0).abs() < 1e-12);
        assert!(k.symmetry_defect(1.0) < 1e-14);
    }

    #[test]
    fn divergence_examples() {
        let s = unit(3);
        let b = assemble_div(&s);
        let rot = s.interpolate_velocity(|p| [p[1], -p[0]]).unwrap();
        let r = b.matvec(&rot.coeffs);
        assert!(r.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-12);
        let c = s.interpolate_velocity(|_| [1.0, 2.0]).unwrap();
        assert!(b.matvec(&c.coeffs).iter().all(|v| v.abs() < 1e-13));
        let v = s.interpolate_velocity(|p| [p[0], 0.0]).unwrap();
        let ones = vec![1.0; s.n_pressure_dofs];
        assert!((b.bilinear(&ones, &v.coeffs) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn convection_with_zero_wind_vanishes() {
        let s = unit(2);
        let c = assemble_convection(&s, Wind::constant([0.0, 0.0])).unwrap();
        assert!(c.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wind_from_wrong_space_is_rejected() {
        let s = unit(2);
        let p = FieldVec::zeros(&s, SpaceKind::Pressure);
        assert!(matches!(
            assemble_convection(&s, Wind::field(&p)),
            Err(Error::InvalidArgument(_))
        ));
    }

    /// Independent per-element evaluation of one convection entry with a
    /// high-order collapsed rule and direct basis formulas.
    fn brute_entry(s: &SpacePair, w: [f64; 2], i: usize, j: usize) -> f64 {
        let rule = QuadRule::exact_to(9);
        let mut total = 0.0;
        for (k, dofs) in s.velocity_dofmap.iter().enumerate() {
            let (Some(a), Some(b)) = (
                dofs.iter().position(|&d| d == i),
                dofs.iter().position(|&d| d == j),
            ) else {
                continue;
            };
            let geo = &s.geometry[k];
            for (l, wt) in rule.points.iter().zip(&rule.weights) {
                let phi = p2_values(l);
                let g = geo.p2_gradients(l);
                let adv_b = w[0] * g[b][0] + w[1] * g[b][1];
                let adv_a = w[0] * g[a][0] + w[1] * g[a][1];
                total += 2.0 * geo.area * wt * 0.5 * (adv_b * phi[a] - adv_a * phi[b]);
            }
        }
        total
    }

    #[test]
    fn constant_wind_entries_match_brute_force() {
        let s = unit(3);
        let b0 = [0.0, 10.0];
        let c = assemble_convection(&s, Wind::constant(b0)).unwrap();
        let mut checked = 0;
        for i in [0, 5, 17, 30] {
            for (j, v) in c.row(i).filter(|&(j, _)| j < s.n_nodes) {
                let e = brute_entry(&s, b0, i, j);
                assert!((v - e).abs() < 1e-12, "({i},{j}): {v} vs {e}");
                checked += 1;
            }
        }
        assert!(checked > 20);
    }

    #[test]
    fn degree5_assembly_matches_higher_order_for_p2_data() {
        let s = unit(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = FieldVec::velocity(
            (0..s.n_velocity_dofs)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        );
        let ops5 = ScalarOperators::new(&s);
        let mut ops9 = ops5.clone();
        ops9.tab = Tabulation::new(QuadRule::exact_to(9));
        let c5 = ops5.convection_values(&s, Wind::field(&w)).unwrap();
        let c9 = ops9.convection_values(&s, Wind::field(&w)).unwrap();
        for (a, b) in c5.iter().zip(&c9) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn load_examples() {
        let s = unit(3);
        let zero = assemble_load(&s, |_, _| [0.0, 0.0], 0.0).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let one = assemble_load(&s, |_, _| [1.0, 0.0], 0.0).unwrap();
        let first: f64 = one[..s.n_nodes].iter().sum();
        assert!((first - 1.0).abs() < 1e-13);
        let bad = assemble_load(
            &s,
            |p, _| [if p[0] > 0.5 { f64::NAN } else { 0.0 }, 0.0],
            0.0,
        );
        assert!(matches!(bad, Err(Error::Evaluation(_))));
    }

    #[test]
    fn skew_symmetry_over_random_winds() {
        let s = unit(2);
        let ops = ScalarOperators::new(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let w = FieldVec::velocity(
                (0..s.n_velocity_dofs)
                    .map(|_| rng.gen_range(-5.0..5.0))
                    .collect(),
            );
            let c = ops
                .mass
                .with_values(
                    ops.convection_values(&s, Wind::shifted(&w, [rng.gen(), rng.gen()]))
                        .unwrap(),
                    false,
                )
                .block_diagonal(2);
            let x: Vec<f64> = (0..s.n_velocity_dofs)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let xx: f64 = x.iter().map(|v| v * v).sum();
            assert!(c.bilinear(&x, &x).abs() <= 1e-12 * xx);
        }
    }

    proptest! {
        #[test]
        fn convection_is_exactly_skew(seed in any::<u64>(), cx in -3.0f64..3.0, cy in -3.0f64..3.0) {
            let s = unit(2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = FieldVec::velocity((0..s.n_velocity_dofs).map(|_| rng.gen_range(-2.0..2.0)).collect());
            let c = assemble_convection(&s, Wind::shifted(&w, [cx, cy])).unwrap();
            prop_assert!(c.symmetry_defect(-1.0) < 1e-14);
        }
    }
}
