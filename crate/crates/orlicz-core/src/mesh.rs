//! Uniform meshes over an interval or a square, and piecewise-linear nodal
//! functions with Dirichlet zero trace.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone)]
pub enum Cells {
    /// 1D interval elements, node index pairs
    Line(Vec<[usize; 2]>),
    /// 2D triangles, counterclockwise node index triples
    Tri(Vec<[usize; 3]>),
}

impl Cells {
    pub fn len(&self) -> usize {
        match self {
            Cells::Line(v) => v.len(),
            Cells::Tri(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub dim: usize,
    pub nodes: Vec<Point>,
    pub cells: Cells,
    /// sorted indices of the geometric boundary nodes
    pub boundary: Vec<usize>,
    pub diam: f64,
    pub extent: (f64, f64),
    pub resolution: usize,
}

impl Mesh {
    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary.binary_search(&node).is_ok()
    }

    pub fn cell_spacing(&self) -> f64 {
        (self.extent.1 - self.extent.0) / self.resolution as f64
    }

    /// Distance from a point to the boundary of the domain.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        let (a, b) = self.extent;
        let dx = (p[0] - a).min(b - p[0]);
        if self.dim == 1 {
            dx
        } else {
            dx.min((p[1] - a).min(b - p[1]))
        }
    }
}

/// Uniform mesh over (a, b) in 1D or (a, b)^2 in 2D with `resolution` cells
/// per axis. Squares are split into two triangles along the SW-NE diagonal.
pub fn make_mesh(dim: usize, extent: (f64, f64), resolution: usize) -> Result<Arc<Mesh>> {
    if resolution < 2 {
        return Err(Error::BadResolution(resolution));
    }
    let (a, b) = extent;
    if !(b > a) {
        return Err(Error::Precondition(format!(
            "extent ({a}, {b}) is empty"
        )));
    }
    let n = resolution;
    let h = (b - a) / n as f64;
    match dim {
        1 => {
            let nodes: Vec<Point> = (0..=n).map(|i| [a + i as f64 * h, 0.0]).collect();
            let cells = (0..n).map(|i| [i, i + 1]).collect();
            Ok(Arc::new(Mesh {
                dim: 1,
                nodes,
                cells: Cells::Line(cells),
                boundary: vec![0, n],
                diam: b - a,
                extent,
                resolution: n,
            }))
        }
        2 => {
            let idx = |i: usize, j: usize| j * (n + 1) + i;
            let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
            for j in 0..=n {
                for i in 0..=n {
                    nodes.push([a + i as f64 * h, a + j as f64 * h]);
                }
            }
            let mut cells = Vec::with_capacity(2 * n * n);
            for j in 0..n {
                for i in 0..n {
                    let (p00, p10, p01, p11) =
                        (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
                    cells.push([p00, p10, p11]);
                    cells.push([p00, p11, p01]);
                }
            }
            let mut boundary = Vec::new();
            for j in 0..=n {
                for i in 0..=n {
                    if i == 0 || j == 0 || i == n || j == n {
                        boundary.push(idx(i, j));
                    }
                }
            }
            boundary.sort_unstable();
            Ok(Arc::new(Mesh {
                dim: 2,
                nodes,
                cells: Cells::Tri(cells),
                boundary,
                diam: (b - a) * 2f64.sqrt(),
                extent,
                resolution: n,
            }))
        }
        d => Err(Error::Precondition(format!("unsupported dimension {d}"))),
    }
}

/// Nodal values of a piecewise-linear function on a mesh.
#[derive(Debug, Clone)]
pub struct DiscreteFunction {
    pub mesh: Arc<Mesh>,
    pub values: Vec<f64>,
    pub zero_trace: bool,
}

impl DiscreteFunction {
    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let values = vec![0.0; mesh.nodes.len()];
        DiscreteFunction {
            mesh,
            values,
            zero_trace: true,
        }
    }

    /// Nodal interpolation of `f`; boundary values are kept as sampled.
    pub fn from_fn(mesh: Arc<Mesh>, f: impl Fn(Point) -> f64) -> Self {
        let values: Vec<f64> = mesh.nodes.iter().map(|&p| f(p)).collect();
        let zero_trace = mesh.boundary.iter().all(|&i| values[i] == 0.0);
        DiscreteFunction {
            mesh,
            values,
            zero_trace,
        }
    }

    /// Nodal interpolation with the boundary pinned to zero.
    pub fn from_fn_zero_trace(mesh: Arc<Mesh>, f: impl Fn(Point) -> f64) -> Self {
        let mut u = Self::from_fn(mesh, f);
        for &i in &u.mesh.boundary.clone() {
            u.values[i] = 0.0;
        }
        u.zero_trace = true;
        u
    }

    pub fn require_zero_trace(&self) -> Result<()> {
        for &i in &self.mesh.boundary {
            if self.values[i] != 0.0 {
                return Err(Error::NonzeroBoundary {
                    node: i,
                    value: self.values[i],
                });
            }
        }
        Ok(())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> DiscreteFunction {
        DiscreteFunction {
            mesh: self.mesh.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
            zero_trace: self.zero_trace,
        }
    }

    /// self + c * other (same mesh).
    pub fn axpy(&self, c: f64, other: &DiscreteFunction) -> DiscreteFunction {
        debug_assert_eq!(self.values.len(), other.values.len());
        DiscreteFunction {
            mesh: self.mesh.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
            zero_trace: self.zero_trace && other.zero_trace,
        }
    }

    /// Euclidean distance between nodal vectors.
    pub fn nodal_distance(&self, other: &DiscreteFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Point evaluation by linear interpolation; relies on the uniform layout.
    pub fn eval_at(&self, p: Point) -> f64 {
        let m = &self.mesh;
        let (a, _) = m.extent;
        let h = m.cell_spacing();
        let n = m.resolution;
        match &m.cells {
            Cells::Line(_) => {
                let i = (((p[0] - a) / h).floor() as isize).clamp(0, n as isize - 1) as usize;
                let x0 = a + i as f64 * h;
                let s = ((p[0] - x0) / h).clamp(0.0, 1.0);
                (1.0 - s) * self.values[i] + s * self.values[i + 1]
            }
            Cells::Tri(_) => {
                let i = (((p[0] - a) / h).floor() as isize).clamp(0, n as isize - 1) as usize;
                let j = (((p[1] - a) / h).floor() as isize).clamp(0, n as isize - 1) as usize;
                let idx = |i: usize, j: usize| j * (n + 1) + i;
                let sx = ((p[0] - (a + i as f64 * h)) / h).clamp(0.0, 1.0);
                let sy = ((p[1] - (a + j as f64 * h)) / h).clamp(0.0, 1.0);
                let (v00, v10, v01, v11) = (
                    self.values[idx(i, j)],
                    self.values[idx(i + 1, j)],
                    self.values[idx(i, j + 1)],
                    self.values[idx(i + 1, j + 1)],
                );
                // match the SW-NE split used by make_mesh
                if sx >= sy {
                    v00 + sx * (v10 - v00) + sy * (v11 - v10)
                } else {
                    v00 + sy * (v01 - v00) + sx * (v11 - v01)
                }
            }
        }
    }
}

/// Serializable mesh descriptor used in reports.
#[derive(Debug, Clone, Serialize)]
pub struct MeshDescriptor {
    pub dim: usize,
    pub extent: (f64, f64),
    pub resolution: usize,
    pub nodes: usize,
    pub cells: usize,
}

impl From<&Mesh> for MeshDescriptor {
    fn from(m: &Mesh) -> Self {
        MeshDescriptor {
            dim: m.dim,
            extent: m.extent,
            resolution: m.resolution,
            nodes: m.nodes.len(),
            cells: m.cells.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_mesh_counts() {
        let m = make_mesh(1, (0.0, 1.0), 4).unwrap();
        assert_eq!(m.nodes.len(), 5);
        assert_eq!(m.cells.len(), 4);
        assert_eq!(m.boundary, vec![0, 4]);
        assert!((m.diam - 1.0).abs() < 1e-12);
    }

    #[test]
    fn square_mesh_counts() {
        let m = make_mesh(2, (0.0, 1.0), 2).unwrap();
        assert_eq!(m.nodes.len(), 9);
        assert_eq!(m.cells.len(), 8);
        assert!((m.diam - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn wide_interval_diameter() {
        let m = make_mesh(1, (0.0, 2.0), 2).unwrap();
        assert!((m.diam - 2.0).abs() < 1e-12);
    }

    #[test]
    fn too_coarse_rejected() {
        assert!(matches!(
            make_mesh(1, (0.0, 1.0), 1),
            Err(Error::BadResolution(1))
        ));
    }

    #[test]
    fn interpolation_reproduces_linear_functions() {
        let m = make_mesh(2, (0.0, 1.0), 3).unwrap();
        let u = DiscreteFunction::from_fn(m, |p| 2.0 * p[0] - 0.5 * p[1] + 1.0);
        for &p in &[[0.1, 0.7], [0.55, 0.2], [0.9, 0.9]] {
            let exact = 2.0 * p[0] - 0.5 * p[1] + 1.0;
            assert!((u.eval_at(p) - exact).abs() < 1e-12);
        }
    }
}
