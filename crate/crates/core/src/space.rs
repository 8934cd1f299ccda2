//! Taylor-Hood (P2 vector / P1 scalar) spaces on a [`Mesh`].
//!
//! Global P2 nodes are the mesh vertices followed by the edge midpoints; the
//! midpoints are numbered lexicographically by `(y, x)`. A velocity field has
//! `2 * n_nodes` coefficients laid out component-major: DOF `c * n_nodes + i`
//! is component `c` at node `i`. Pressure DOFs are the mesh vertices.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::QuadRule;

/// Local P2 node order: three vertices, then midpoints of edges 01, 12, 20.
pub const P2_EDGES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceKind {
    Velocity,
    Pressure,
}

/// Coefficient vector of a discrete field.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldVec {
    pub coeffs: Vec<f64>,
    pub kind: SpaceKind,
}

impl FieldVec {
    pub fn zeros(space: &SpacePair, kind: SpaceKind) -> Self {
        Self {
            coeffs: vec![0.0; space.n_dofs(kind)],
            kind,
        }
    }

    pub fn velocity(coeffs: Vec<f64>) -> Self {
        Self {
            coeffs,
            kind: SpaceKind::Velocity,
        }
    }

    pub fn pressure(coeffs: Vec<f64>) -> Self {
        Self {
            coeffs,
            kind: SpaceKind::Pressure,
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `a * x + b * y`, coefficientwise.
    pub fn lincomb(a: f64, x: &FieldVec, b: f64, y: &FieldVec) -> FieldVec {
        assert_eq!(x.kind, y.kind, "fields live in different spaces");
        assert_eq!(x.len(), y.len());
        FieldVec {
            coeffs: x
                .coeffs
                .iter()
                .zip(&y.coeffs)
                .map(|(xi, yi)| a * xi + b * yi)
                .collect(),
            kind: x.kind,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// Per-element affine geometry.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub vertices: [[f64; 2]; 3],
    pub area: f64,
    /// Gradients of the barycentric coordinates.
    pub grad_lambda: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(vertices: [[f64; 2]; 3]) -> Self {
        let [p0, p1, p2] = vertices;
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let inv = 1.0 / det;
        let grad_lambda = [
            [(p1[1] - p2[1]) * inv, (p2[0] - p1[0]) * inv],
            [(p2[1] - p0[1]) * inv, (p0[0] - p2[0]) * inv],
            [(p0[1] - p1[1]) * inv, (p1[0] - p0[0]) * inv],
        ];
        Self {
            vertices,
            area: 0.5 * det,
            grad_lambda,
        }
    }

    /// Physical point for barycentric coordinates `l`.
    pub fn map(&self, l: &[f64; 3]) -> [f64; 2] {
        let v = &self.vertices;
        [
            l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0],
            l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1],
        ]
    }

    /// Physical gradients of the six P2 basis functions at barycentric `l`.
    pub fn p2_gradients(&self, l: &[f64; 3]) -> [[f64; 2]; 6] {
        let d = p2_lambda_derivatives(l);
        let mut g = [[0.0; 2]; 6];
        for a in 0..6 {
            for i in 0..3 {
                g[a][0] += d[a][i] * self.grad_lambda[i][0];
                g[a][1] += d[a][i] * self.grad_lambda[i][1];
            }
        }
        g
    }
}

/// Values of the six P2 basis functions at barycentric `l`.
pub fn p2_values(l: &[f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

/// `d phi_a / d lambda_i` for the six P2 basis functions.
pub fn p2_lambda_derivatives(l: &[f64; 3]) -> [[f64; 3]; 6] {
    [
        [4.0 * l[0] - 1.0, 0.0, 0.0],
        [0.0, 4.0 * l[1] - 1.0, 0.0],
        [0.0, 0.0, 4.0 * l[2] - 1.0],
        [4.0 * l[1], 4.0 * l[0], 0.0],
        [0.0, 4.0 * l[2], 4.0 * l[1]],
        [4.0 * l[2], 0.0, 4.0 * l[0]],
    ]
}

/// The Taylor-Hood pair on a mesh.
#[derive(Clone, Debug)]
pub struct SpacePair {
    pub mesh: Mesh,
    /// Coordinates of the P2 nodes.
    pub nodes: Vec<[f64; 2]>,
    pub velocity_dofmap: Vec<[usize; 6]>,
    pub pressure_dofmap: Vec<[usize; 3]>,
    pub n_nodes: usize,
    pub n_velocity_dofs: usize,
    pub n_pressure_dofs: usize,
    /// Sorted P2 node indices on the boundary.
    pub boundary_nodes: Vec<usize>,
    /// Sorted velocity DOFs (both components) on the boundary.
    pub boundary_velocity_dofs: Vec<usize>,
    pub is_boundary_node: Vec<bool>,
    pub geometry: Vec<ElementGeometry>,
}

pub fn build_spaces(mesh: &Mesh) -> Result<SpacePair> {
    mesh.validate()?;
    let nv = mesh.n_vertices();

    let mut edge_midpoints: HashMap<(usize, usize), [f64; 2]> = HashMap::new();
    for tri in &mesh.triangles {
        for [a, b] in P2_EDGES {
            let (u, v) = (tri[a].min(tri[b]), tri[a].max(tri[b]));
            edge_midpoints.entry((u, v)).or_insert_with(|| {
                let (pu, pv) = (mesh.vertices[u], mesh.vertices[v]);
                [0.5 * (pu[0] + pv[0]), 0.5 * (pu[1] + pv[1])]
            });
        }
    }
    let mut edges: Vec<((usize, usize), [f64; 2])> = edge_midpoints.into_iter().collect();
    edges.sort_by(|a, b| {
        a.1[1]
            .total_cmp(&b.1[1])
            .then(a.1[0].total_cmp(&b.1[0]))
            .then(a.0.cmp(&b.0))
    });

    let mut nodes = mesh.vertices.clone();
    let mut edge_node = HashMap::with_capacity(edges.len());
    for (i, (key, mid)) in edges.iter().enumerate() {
        nodes.push(*mid);
        edge_node.insert(*key, nv + i);
    }

    let velocity_dofmap: Vec<[usize; 6]> = mesh
        .triangles
        .iter()
        .map(|tri| {
            let mut local = [tri[0], tri[1], tri[2], 0, 0, 0];
            for (e, [a, b]) in P2_EDGES.iter().enumerate() {
                let key = (tri[*a].min(tri[*b]), tri[*a].max(tri[*b]));
                local[3 + e] = edge_node[&key];
            }
            local
        })
        .collect();
    let pressure_dofmap = mesh.triangles.clone();

    let n_nodes = nodes.len();
    let is_boundary_node: Vec<bool> = nodes.iter().map(|p| mesh.domain.on_boundary(*p)).collect();
    let boundary_nodes: Vec<usize> = (0..n_nodes).filter(|&i| is_boundary_node[i]).collect();
    let mut boundary_velocity_dofs = boundary_nodes.clone();
    boundary_velocity_dofs.extend(boundary_nodes.iter().map(|i| i + n_nodes));

    let geometry = mesh
        .triangles
        .iter()
        .map(|t| ElementGeometry::new(t.map(|v| mesh.vertices[v])))
        .collect();

    Ok(SpacePair {
        mesh: mesh.clone(),
        nodes,
        velocity_dofmap,
        pressure_dofmap,
        n_nodes,
        n_velocity_dofs: 2 * n_nodes,
        n_pressure_dofs: nv,
        boundary_nodes,
        boundary_velocity_dofs,
        is_boundary_node,
        geometry,
    })
}

impl SpacePair {
    pub fn n_dofs(&self, kind: SpaceKind) -> usize {
        match kind {
            SpaceKind::Velocity => self.n_velocity_dofs,
            SpaceKind::Pressure => self.n_pressure_dofs,
        }
    }

    pub fn n_elements(&self) -> usize {
        self.velocity_dofmap.len()
    }

    /// Nodal interpolant of a vector field.
    pub fn interpolate_velocity<F>(&self, f: F) -> Result<FieldVec>
    where
        F: Fn([f64; 2]) -> [f64; 2],
    {
        let n = self.n_nodes;
        let mut coeffs = vec![0.0; 2 * n];
        for (i, p) in self.nodes.iter().enumerate() {
            let v = f(*p);
            if !(v[0].is_finite() && v[1].is_finite()) {
                return Err(Error::Evaluation(format!(
                    "non-finite value {v:?} at node {i} ({p:?})"
                )));
            }
            coeffs[i] = v[0];
            coeffs[n + i] = v[1];
        }
        Ok(FieldVec::velocity(coeffs))
    }

    /// Nodal interpolant of a scalar field in the P1 space.
    pub fn interpolate_pressure<F>(&self, f: F) -> Result<FieldVec>
    where
        F: Fn([f64; 2]) -> f64,
    {
        let mut coeffs = Vec::with_capacity(self.n_pressure_dofs);
        for (i, p) in self.mesh.vertices.iter().enumerate() {
            let v = f(*p);
            if !v.is_finite() {
                return Err(Error::Evaluation(format!(
                    "non-finite value {v} at vertex {i} ({p:?})"
                )));
            }
            coeffs.push(v);
        }
        Ok(FieldVec::pressure(coeffs))
    }

    /// Value and gradient (`grad[c][d] = d u_c / d x_d`) of a velocity field
    /// on element `k` at barycentric `l`.
    pub fn eval_velocity(
        &self,
        field: &FieldVec,
        k: usize,
        l: &[f64; 3],
    ) -> ([f64; 2], [[f64; 2]; 2]) {
        let dofs = &self.velocity_dofmap[k];
        let phi = p2_values(l);
        let grads = self.geometry[k].p2_gradients(l);
        let n = self.n_nodes;
        let mut val = [0.0; 2];
        let mut grad = [[0.0; 2]; 2];
        for a in 0..6 {
            for c in 0..2 {
                let u = field.coeffs[c * n + dofs[a]];
                val[c] += u * phi[a];
                grad[c][0] += u * grads[a][0];
                grad[c][1] += u * grads[a][1];
            }
        }
        (val, grad)
    }

    /// Integral of `g(x)` over the domain with the given rule.
    pub fn integrate<G>(&self, rule: &QuadRule, mut g: G) -> f64
    where
        G: FnMut(usize, &[f64; 3], [f64; 2]) -> f64,
    {
        let mut total = 0.0;
        for (k, geo) in self.geometry.iter().enumerate() {
            let mut local = 0.0;
            for (l, w) in rule.points.iter().zip(&rule.weights) {
                local += w * g(k, l, geo.map(l));
            }
            total += 2.0 * geo.area * local;
        }
        total
    }

    /// Component `c` of velocity DOF `i` and its node.
    pub fn velocity_dof(&self, c: usize, node: usize) -> usize {
        c * self.n_nodes + node
    }
}
