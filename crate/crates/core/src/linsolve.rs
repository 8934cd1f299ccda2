//! Saddle-point systems for one Elsässer field and its pressure.
//!
//! The unknowns of the reduced system are ordered as: interior velocity DOFs
//! of the first component, then of the second, then all pressure DOFs, then a
//! Lagrange multiplier pinning the first pressure DOF:
//!
//! ```text
//! [ A   -B^T  0 ] [z]   [f - A_b g]
//! [ -B   0    e ] [p] = [ B_b g   ]
//! [ 0    e^T  0 ] [l]   [ 0       ]
//! ```
//!
//! `A = alpha M + nu K + C(w)` acts identically on both components. Boundary
//! DOFs carry prescribed values `g` and are eliminated. The multiplier absorbs
//! any incompatibility of the boundary data, and the pressure is shifted to
//! zero mean after the solve.

use std::io::Write;
use std::sync::OnceLock;

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut};

use crate::error::{Error, Result};
use crate::forms::{ScalarOperators, Wind};
use crate::space::{FieldVec, SpaceKind, SpacePair};

/// Relative algebraic residual every solve must reach.
pub const RESIDUAL_TOL: f64 = 1e-10;

const NONE: usize = usize::MAX;

/// Mesh-dependent data shared by every saddle solve on one space: scalar
/// operators, the reduced sparsity pattern and its symbolic factorization.
pub struct OseenOperators {
    pub space: SpacePair,
    pub scalar: ScalarOperators,
    /// `(psi_i, 1)` for each pressure DOF.
    pub pressure_weights: Vec<f64>,
    /// P1 mass matrix.
    pressure_mass: crate::sparse::SparseMat,
    /// Reduced index of each P2 node, or `NONE` on the boundary.
    interior: Vec<usize>,
    n_interior: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// CSC slots receiving scalar-pattern entry `s` for each component.
    a_slots: Vec<[usize; 2]>,
    /// Values of the constant (divergence and multiplier) blocks.
    base_values: Vec<f64>,
    symbolic: OnceLock<std::result::Result<SymbolicLu<usize>, String>>,
}

impl std::fmt::Debug for OseenOperators {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OseenOperators")
            .field("n_unknowns", &self.n_unknowns())
            .field("nnz", &self.row_idx.len())
            .finish()
    }
}

impl OseenOperators {
    pub fn new(space: &SpacePair) -> Self {
        let scalar = ScalarOperators::new(space);
        let n = space.n_nodes;
        let np = space.n_pressure_dofs;

        let mut interior = vec![NONE; n];
        let mut n_interior = 0;
        for i in 0..n {
            if !space.is_boundary_node[i] {
                interior[i] = n_interior;
                n_interior += 1;
            }
        }
        let nvel = 2 * n_interior;
        let total = nvel + np + 1;

        // Pressure weights and P1 mass.
        let mut pressure_weights = vec![0.0; np];
        let mut pm = Vec::with_capacity(9 * space.n_elements());
        for (k, tri) in space.pressure_dofmap.iter().enumerate() {
            let area = space.geometry[k].area;
            for a in 0..3 {
                pressure_weights[tri[a]] += area / 3.0;
                for b in 0..3 {
                    let m = if a == b { area / 6.0 } else { area / 12.0 };
                    pm.push((tri[a], tri[b], m));
                }
            }
        }
        let pressure_mass = crate::sparse::SparseMat::from_triplets(np, np, &pm, true).unwrap();

        // Collect (col, row, value, source) and compress.
        #[derive(Clone, Copy)]
        enum Src {
            A(usize, usize),
            Const(f64),
        }
        let mut entries: Vec<(usize, usize, Src)> = Vec::new();
        let pat = &scalar.mass;
        for i in 0..n {
            let ri = interior[i];
            if ri == NONE {
                continue;
            }
            for s in pat.row_ptr[i]..pat.row_ptr[i + 1] {
                let cj = interior[pat.col_idx[s]];
                if cj == NONE {
                    continue;
                }
                for c in 0..2 {
                    entries.push((c * n_interior + cj, c * n_interior + ri, Src::A(s, c)));
                }
            }
        }
        for (c, div) in [&scalar.div_x, &scalar.div_y].into_iter().enumerate() {
            for r in 0..np {
                for (j, b) in div.row(r) {
                    let cj = interior[j];
                    if cj == NONE {
                        continue;
                    }
                    let v = c * n_interior + cj;
                    entries.push((nvel + r, v, Src::Const(-b)));
                    entries.push((v, nvel + r, Src::Const(-b)));
                }
            }
        }
        // A dense mean constraint ruins the fill-reducing ordering, so the
        // multiplier pins the first pressure DOF instead.
        entries.push((total - 1, nvel, Src::Const(1.0)));
        entries.push((nvel, total - 1, Src::Const(1.0)));
        entries.sort_by_key(|e| (e.0, e.1));

        let mut col_ptr = vec![0usize; total + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut base_values = Vec::with_capacity(entries.len());
        let mut a_slots = vec![[NONE; 2]; pat.nnz()];
        for (col, row, src) in entries {
            let fresh = !(row_idx.len() > col_ptr[col] && *row_idx.last().unwrap() == row);
            if fresh {
                row_idx.push(row);
                base_values.push(0.0);
            }
            let slot = row_idx.len() - 1;
            match src {
                Src::A(s, c) => a_slots[s][c] = slot,
                Src::Const(v) => base_values[slot] += v,
            }
            col_ptr[col + 1] = row_idx.len();
        }
        for c in 0..total {
            col_ptr[c + 1] = col_ptr[c + 1].max(col_ptr[c]);
        }

        Self {
            space: space.clone(),
            scalar,
            pressure_weights,
            pressure_mass,
            interior,
            n_interior,
            col_ptr,
            row_idx,
            a_slots,
            base_values,
            symbolic: OnceLock::new(),
        }
    }

    pub fn n_unknowns(&self) -> usize {
        2 * self.n_interior + self.space.n_pressure_dofs + 1
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    fn symbolic_ref(&self) -> SymbolicSparseColMatRef<'_, usize> {
        let n = self.n_unknowns();
        SymbolicSparseColMatRef::new_checked(n, n, &self.col_ptr, None, &self.row_idx)
    }

    fn symbolic_lu(&self) -> Result<SymbolicLu<usize>> {
        self.symbolic
            .get_or_init(|| SymbolicLu::try_new(self.symbolic_ref()).map_err(|e| format!("{e:?}")))
            .clone()
            .map_err(|e| Error::LinearSolve(format!("symbolic factorization: {e}")))
    }

    /// `(p, 1)`.
    pub fn pressure_mean_integral(&self, p: &FieldVec) -> f64 {
        p.coeffs
            .iter()
            .zip(&self.pressure_weights)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn pressure_l2(&self, p: &FieldVec) -> f64 {
        self.pressure_mass
            .bilinear(&p.coeffs, &p.coeffs)
            .max(0.0)
            .sqrt()
    }

    /// Scalar values of `alpha M + nu K + C(wind)` on the shared pattern.
    pub fn scalar_block(&self, alpha: f64, nu: f64, wind: Wind<'_>) -> Result<Vec<f64>> {
        let m = &self.scalar.mass.values;
        let k = &self.scalar.stiffness.values;
        let mut vals: Vec<f64> = m.iter().zip(k).map(|(m, k)| alpha * m + nu * k).collect();
        let trivial = wind.field.is_none() && wind.constant == [0.0, 0.0];
        if !trivial {
            self.scalar
                .add_convection(&self.space, wind, 1.0, &mut vals)?;
        }
        Ok(vals)
    }
}

/// One assembled saddle system, ready to solve.
pub struct SaddleSystem<'a> {
    pub ops: &'a OseenOperators,
    pub values: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Full velocity vector whose boundary entries are the Dirichlet data.
    pub boundary: FieldVec,
}

/// Coefficients of the velocity block `alpha M + nu K + C(wind)`.
#[derive(Clone, Copy, Debug)]
pub struct OseenBlock<'a> {
    pub alpha: f64,
    pub nu: f64,
    pub wind: Wind<'a>,
}

/// Assembles the reduced system. `load` is the full velocity right-hand side
/// (length `2 * n_nodes`), `boundary` supplies the Dirichlet values.
pub fn build_oseen_system<'a>(
    ops: &'a OseenOperators,
    block: OseenBlock<'_>,
    load: &[f64],
    boundary: &FieldVec,
) -> Result<SaddleSystem<'a>> {
    let space = &ops.space;
    let n = space.n_nodes;
    if !(block.alpha.is_finite() && block.nu.is_finite() && block.alpha >= 0.0 && block.nu >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "block coefficients must be finite and non-negative, got alpha={}, nu={}",
            block.alpha, block.nu
        )));
    }
    if load.len() != 2 * n || boundary.len() != 2 * n || boundary.kind != SpaceKind::Velocity {
        return Err(Error::InvalidArgument(
            "load or boundary vector has the wrong size".into(),
        ));
    }
    if let Some(w) = block.wind.field {
        if !w.is_finite() {
            return Err(Error::InvalidArgument("wind is not finite".into()));
        }
    }

    let a = ops.scalar_block(block.alpha, block.nu, block.wind)?;
    let mut values = ops.base_values.clone();
    for (s, slots) in ops.a_slots.iter().enumerate() {
        if slots[0] != NONE {
            values[slots[0]] = a[s];
            values[slots[1]] = a[s];
        }
    }

    let ni = ops.n_interior;
    let np = space.n_pressure_dofs;
    let mut rhs = vec![0.0; ops.n_unknowns()];
    let g = &boundary.coeffs;
    let pat = &ops.scalar.mass;
    for i in 0..n {
        let ri = ops.interior[i];
        if ri == NONE {
            continue;
        }
        for c in 0..2 {
            let mut r = load[c * n + i];
            for s in pat.row_ptr[i]..pat.row_ptr[i + 1] {
                let j = pat.col_idx[s];
                if ops.interior[j] == NONE {
                    r -= a[s] * g[c * n + j];
                }
            }
            rhs[c * ni + ri] = r;
        }
    }
    for (c, div) in [&ops.scalar.div_x, &ops.scalar.div_y]
        .into_iter()
        .enumerate()
    {
        for r in 0..np {
            for (j, b) in div.row(r) {
                if ops.interior[j] == NONE {
                    rhs[2 * ni + r] += b * g[c * n + j];
                }
            }
        }
    }
    Ok(SaddleSystem {
        ops,
        values,
        rhs,
        boundary: boundary.clone(),
    })
}

/// Diagnostics of one saddle solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub relative_residual: f64,
    pub refinement_steps: usize,
}

impl SaddleSystem<'_> {
    fn matrix(&self) -> SparseColMatRef<'_, usize, f64> {
        SparseColMatRef::new(self.ops.symbolic_ref(), &self.values)
    }

    fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.rhs.clone();
        let ops = self.ops;
        for col in 0..ops.n_unknowns() {
            let xc = x[col];
            if xc == 0.0 {
                continue;
            }
            for s in ops.col_ptr[col]..ops.col_ptr[col + 1] {
                r[ops.row_idx[s]] -= self.values[s] * xc;
            }
        }
        r
    }

    /// Reduced matrix-vector product, for tests and diagnostics.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for col in 0..self.ops.n_unknowns() {
            for s in self.ops.col_ptr[col]..self.ops.col_ptr[col + 1] {
                y[self.ops.row_idx[s]] += self.values[s] * x[col];
            }
        }
        y
    }

    /// Reduced matrix entry, zero when structurally absent.
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        let r = self.ops.col_ptr[col]..self.ops.col_ptr[col + 1];
        match self.ops.row_idx[r.clone()].binary_search(&row) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn n_interior(&self) -> usize {
        self.ops.n_interior
    }

    /// Writes the reduced matrix in MatrixMarket coordinate format.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.ops.n_unknowns();
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{n} {n} {}", self.values.len())?;
        for col in 0..n {
            for s in self.ops.col_ptr[col]..self.ops.col_ptr[col + 1] {
                writeln!(
                    w,
                    "{} {} {:.17e}",
                    self.ops.row_idx[s] + 1,
                    col + 1,
                    self.values[s]
                )?;
            }
        }
        Ok(())
    }

    /// Solves the reduced system with a sparse LU and lifts the result to
    /// full velocity and pressure fields.
    pub fn solve(&self) -> Result<(FieldVec, FieldVec, SolveStats)> {
        let ops = self.ops;
        let sym = ops.symbolic_lu()?;
        let lu = Lu::try_new_with_symbolic(sym, self.matrix())
            .map_err(|e| Error::LinearSolve(format!("numeric factorization: {e:?}")))?;

        let nt = ops.n_unknowns();
        let rhs_norm = norm(&self.rhs);
        let mut x = self.rhs.clone();
        lu.solve_in_place_with_conj(Conj::No, MatMut::from_column_major_slice_mut(&mut x, nt, 1));
        let mut r = self.residual(&x);
        let mut rel = relative(norm(&r), rhs_norm);
        let mut refinement_steps = 0;
        while !(rel <= RESIDUAL_TOL) && refinement_steps < 2 {
            lu.solve_in_place_with_conj(
                Conj::No,
                MatMut::from_column_major_slice_mut(&mut r, nt, 1),
            );
            for (xi, di) in x.iter_mut().zip(&r) {
                *xi += di;
            }
            r = self.residual(&x);
            rel = relative(norm(&r), rhs_norm);
            refinement_steps += 1;
        }
        if !(rel <= RESIDUAL_TOL) {
            return Err(Error::LinearSolve(format!(
                "relative residual {rel:.3e} exceeds {RESIDUAL_TOL:.0e} after {refinement_steps} refinement steps \
                 ({nt} unknowns)"
            )));
        }

        let space = &ops.space;
        let n = space.n_nodes;
        let ni = ops.n_interior;
        let mut z = self.boundary.clone();
        for i in 0..n {
            let ri = ops.interior[i];
            if ri != NONE {
                z.coeffs[i] = x[ri];
                z.coeffs[n + i] = x[ni + ri];
            }
        }
        let mut p = FieldVec::pressure(x[2 * ni..2 * ni + space.n_pressure_dofs].to_vec());

        // Shifting p by a constant leaves every interior momentum row unchanged,
        // so moving to zero mean is exact.
        let area = space.mesh.domain.area();
        let mean = ops.pressure_mean_integral(&p) / area;
        for c in &mut p.coeffs {
            *c -= mean;
        }
        let pm = ops.pressure_mean_integral(&p).abs();
        let pl2 = ops.pressure_l2(&p);
        if pm > RESIDUAL_TOL * pl2 {
            return Err(Error::LinearSolve(format!(
                "pressure mean {pm:.3e} not negligible against its norm {pl2:.3e}"
            )));
        }
        if !(z.is_finite() && p.is_finite()) {
            return Err(Error::LinearSolve("solution is not finite".into()));
        }
        Ok((
            z,
            p,
            SolveStats {
                relative_residual: rel,
                refinement_steps,
            },
        ))
    }
}

/// Convenience wrapper around [`SaddleSystem::solve`].
pub fn solve_saddle(sys: &SaddleSystem<'_>) -> Result<(FieldVec, FieldVec, SolveStats)> {
    sys.solve()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn relative(r: f64, b: f64) -> f64 {
    if b > 0.0 {
        r / b
    } else {
        r
    }
}
