//! Structured triangulations of rectangles.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn unit() -> Self {
        Self::new(0.0, 1.0, 0.0, 1.0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Whether `p` lies on the boundary, within an absolute tolerance scaled to the box.
    pub fn on_boundary(&self, p: [f64; 2]) -> bool {
        let tol = 1e-12 * self.width().abs().max(self.height().abs()).max(1.0);
        (p[0] - self.x0).abs() <= tol
            || (p[0] - self.x1).abs() <= tol
            || (p[1] - self.y0).abs() <= tol
            || (p[1] - self.y1).abs() <= tol
    }
}

/// Which side of the rectangle a boundary edge lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub side: Side,
}

/// Conforming triangulation of a rectangle.
#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub domain: Rect,
}

/// Uniform `nx x ny` grid of cells, each cut along its lower-left to
/// upper-right diagonal. Vertices are numbered lexicographically by `(y, x)`.
pub fn build_rect_mesh(domain: Rect, nx: usize, ny: usize) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument(format!(
            "cell counts must be positive, got nx={nx}, ny={ny}"
        )));
    }
    if !(domain.x1 > domain.x0 && domain.y1 > domain.y0) {
        return Err(Error::InvalidArgument(format!("degenerate box {domain:?}")));
    }

    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        // Hit the far sides exactly so boundary detection is not at the mercy of rounding.
        let y = if j == ny {
            domain.y1
        } else {
            domain.y0 + domain.height() * j as f64 / ny as f64
        };
        for i in 0..=nx {
            let x = if i == nx {
                domain.x1
            } else {
                domain.x0 + domain.width() * i as f64 / nx as f64
            };
            vertices.push([x, y]);
        }
    }

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let v00 = vid(i, j);
            let v10 = vid(i + 1, j);
            let v01 = vid(i, j + 1);
            let v11 = vid(i + 1, j + 1);
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }

    let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        boundary_edges.push(BoundaryEdge {
            vertices: [vid(i, 0), vid(i + 1, 0)],
            side: Side::Bottom,
        });
    }
    for j in 0..ny {
        boundary_edges.push(BoundaryEdge {
            vertices: [vid(nx, j), vid(nx, j + 1)],
            side: Side::Right,
        });
    }
    for i in (0..nx).rev() {
        boundary_edges.push(BoundaryEdge {
            vertices: [vid(i + 1, ny), vid(i, ny)],
            side: Side::Top,
        });
    }
    for j in (0..ny).rev() {
        boundary_edges.push(BoundaryEdge {
            vertices: [vid(0, j + 1), vid(0, j)],
            side: Side::Left,
        });
    }

    Ok(Mesh {
        vertices,
        triangles,
        boundary_edges,
        domain,
    })
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Signed area of triangle `k` (positive for counter-clockwise orientation).
    pub fn signed_area(&self, k: usize) -> f64 {
        let [a, b, c] = self.triangles[k].map(|v| self.vertices[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|k| self.signed_area(k)).sum()
    }

    /// Longest edge over the triangulation.
    pub fn max_edge_length(&self) -> f64 {
        let mut h: f64 = 0.0;
        for tri in &self.triangles {
            for e in 0..3 {
                let a = self.vertices[tri[e]];
                let b = self.vertices[tri[(e + 1) % 3]];
                h = h.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        h
    }

    /// Number of triangles sharing each undirected edge.
    pub fn edge_multiplicity(&self) -> HashMap<(usize, usize), usize> {
        let mut count = HashMap::new();
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        count
    }

    /// Checks orientation, edge-to-edge conformity and area additivity.
    pub fn validate(&self) -> Result<()> {
        for k in 0..self.n_triangles() {
            if self.signed_area(k) <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "triangle {k} has non-positive signed area"
                )));
            }
        }
        let boundary: HashMap<(usize, usize), ()> = self
            .boundary_edges
            .iter()
            .map(|e| {
                let [a, b] = e.vertices;
                ((a.min(b), a.max(b)), ())
            })
            .collect();
        for (edge, n) in self.edge_multiplicity() {
            let expected = if boundary.contains_key(&edge) { 1 } else { 2 };
            if n != expected {
                return Err(Error::InvalidArgument(format!(
                    "edge {edge:?} shared by {n} triangles, expected {expected}"
                )));
            }
        }
        let area = self.total_area();
        let box_area = self.domain.area();
        if (area - box_area).abs() > 1e-12 * box_area {
            return Err(Error::InvalidArgument(format!(
                "triangle areas sum to {area}, box area is {box_area}"
            )));
        }
        Ok(())
    }

    /// Plain-text dump: vertex count, vertex lines, triangle count, triangle lines.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", self.vertices.len())?;
        for v in &self.vertices {
            writeln!(w, "{:.17e} {:.17e}", v[0], v[1])?;
        }
        writeln!(w, "{}", self.triangles.len())?;
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}
