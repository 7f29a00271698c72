//! P1 element assembly: energies, residual vectors and modular diagnostics.
//!
//! Piecewise-linear elements make |grad u| constant per cell, so the Phi term
//! integrates exactly up to the evaluation of Phi itself; the F term uses a
//! degree-2 Gauss rule per cell.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{Cells, DiscreteFunction, Mesh, Point};
use crate::nfunction::NFunction;
use crate::nonlinearity::{Nonlinearity, TruncatedNonlinearity};
use crate::quad::GAUSS3;

/// One quadrature point of a cell: location, weight (already scaled by the
/// cell measure), interpolated u, interpolated ceiling, nodal shape values.
#[derive(Debug, Clone, Copy)]
pub struct QuadPt {
    pub x: Point,
    pub w: f64,
    pub u: f64,
    pub ceil: f64,
    pub shape: [f64; 3],
}

/// Geometry and interpolation data of one cell.
#[derive(Debug, Clone, Copy)]
pub struct CellView {
    pub meas: f64,
    /// constant gradient of u on the cell
    pub grad: [f64; 2],
    pub grad_norm: f64,
    pub nodes: [usize; 3],
    pub n_nodes: usize,
    /// gradients of the nodal basis functions
    pub basis_grads: [[f64; 2]; 3],
    pub quads: [QuadPt; 3],
}

/// Walk every cell of `u`'s mesh, handing the callback exact per-cell data.
/// `ceiling` is interpolated with the same shape functions when present.
pub fn visit_cells(
    u: &DiscreteFunction,
    ceiling: Option<&DiscreteFunction>,
    mut cb: impl FnMut(&CellView) -> Result<()>,
) -> Result<()> {
    let mesh = &u.mesh;
    match &mesh.cells {
        Cells::Line(cells) => {
            for &[i0, i1] in cells {
                let (x0, x1) = (mesh.nodes[i0][0], mesh.nodes[i1][0]);
                let h = x1 - x0;
                let (v0, v1) = (u.values[i0], u.values[i1]);
                let g = (v1 - v0) / h;
                let mut quads = [QuadPt {
                    x: [0.0; 2],
                    w: 0.0,
                    u: 0.0,
                    ceil: 0.0,
                    shape: [0.0; 3],
                }; 3];
                for (k, &(xi, w)) in GAUSS3.iter().enumerate() {
                    let (c0, c1) = match ceiling {
                        Some(c) => (c.values[i0], c.values[i1]),
                        None => (0.0, 0.0),
                    };
                    quads[k] = QuadPt {
                        x: [x0 + xi * h, 0.0],
                        w: w * h,
                        u: (1.0 - xi) * v0 + xi * v1,
                        ceil: (1.0 - xi) * c0 + xi * c1,
                        shape: [1.0 - xi, xi, 0.0],
                    };
                }
                cb(&CellView {
                    meas: h,
                    grad: [g, 0.0],
                    grad_norm: g.abs(),
                    nodes: [i0, i1, usize::MAX],
                    n_nodes: 2,
                    basis_grads: [[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0, 0.0]],
                    quads,
                })?;
            }
        }
        Cells::Tri(cells) => {
            for &[i0, i1, i2] in cells {
                let (p0, p1, p2) = (mesh.nodes[i0], mesh.nodes[i1], mesh.nodes[i2]);
                let d1 = [p1[0] - p0[0], p1[1] - p0[1]];
                let d2 = [p2[0] - p0[0], p2[1] - p0[1]];
                let det = d1[0] * d2[1] - d1[1] * d2[0];
                let meas = 0.5 * det.abs();
                // gradients of the barycentric basis
                let g1 = [d2[1] / det, -d2[0] / det];
                let g2 = [-d1[1] / det, d1[0] / det];
                let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
                let vals = [u.values[i0], u.values[i1], u.values[i2]];
                let grad = [
                    vals[0] * g0[0] + vals[1] * g1[0] + vals[2] * g2[0],
                    vals[0] * g0[1] + vals[1] * g1[1] + vals[2] * g2[1],
                ];
                let cv = match ceiling {
                    Some(c) => [c.values[i0], c.values[i1], c.values[i2]],
                    None => [0.0; 3],
                };
                // edge-midpoint rule, degree-2 exact
                let shapes = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
                let mut quads = [QuadPt {
                    x: [0.0; 2],
                    w: 0.0,
                    u: 0.0,
                    ceil: 0.0,
                    shape: [0.0; 3],
                }; 3];
                for (k, sh) in shapes.iter().enumerate() {
                    let x = [
                        sh[0] * p0[0] + sh[1] * p1[0] + sh[2] * p2[0],
                        sh[0] * p0[1] + sh[1] * p1[1] + sh[2] * p2[1],
                    ];
                    quads[k] = QuadPt {
                        x,
                        w: meas / 3.0,
                        u: sh[0] * vals[0] + sh[1] * vals[1] + sh[2] * vals[2],
                        ceil: sh[0] * cv[0] + sh[1] * cv[1] + sh[2] * cv[2],
                        shape: *sh,
                    };
                }
                cb(&CellView {
                    meas,
                    grad,
                    grad_norm: (grad[0] * grad[0] + grad[1] * grad[1]).sqrt(),
                    nodes: [i0, i1, i2],
                    n_nodes: 3,
                    basis_grads: [g0, g1, g2],
                    quads,
                })?;
            }
        }
    }
    Ok(())
}

fn finite(v: f64, at: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::OverflowDomain {
            t: at,
            limit: f64::INFINITY,
        })
    }
}

/// Quadrature of h(x, u(x)) over the domain.
pub fn integrate_pointwise(
    u: &DiscreteFunction,
    mut h: impl FnMut(Point, f64) -> Result<f64>,
) -> Result<f64> {
    let mut acc = 0.0;
    visit_cells(u, None, |cell| {
        for q in &cell.quads {
            acc += q.w * finite(h(q.x, q.u)?, q.u)?;
        }
        Ok(())
    })?;
    Ok(acc)
}

/// Exact per-cell integral of h(|grad u|) (gradient constant on each cell).
pub fn integrate_gradient(
    u: &DiscreteFunction,
    mut h: impl FnMut(f64) -> Result<f64>,
) -> Result<f64> {
    let mut acc = 0.0;
    visit_cells(u, None, |cell| {
        acc += cell.meas * finite(h(cell.grad_norm)?, cell.grad_norm)?;
        Ok(())
    })?;
    Ok(acc)
}

/// Either the plain right-hand side f/F or the truncation g/G at a ceiling.
#[derive(Clone)]
pub enum Rhs {
    Plain(Nonlinearity),
    Truncated(TruncatedNonlinearity),
}

impl Rhs {
    pub fn ceiling(&self) -> Option<&DiscreteFunction> {
        match self {
            Rhs::Plain(_) => None,
            Rhs::Truncated(t) => Some(&t.ceiling),
        }
    }

    pub fn density(&self, ceil: f64, x: Point, t: f64) -> f64 {
        match self {
            Rhs::Plain(f) => f.f(x, t),
            Rhs::Truncated(g) => g.g_with(ceil, x, t),
        }
    }

    pub fn antiderivative(&self, ceil: f64, x: Point, t: f64) -> f64 {
        match self {
            Rhs::Plain(f) => f.big_f(x, t),
            Rhs::Truncated(g) => g.big_g_with(ceil, x, t),
        }
    }
}

/// The discrete energy I(u) = int Phi(|grad u|) - lambda int F(x, u)
/// (or J with G when the right-hand side is truncated).
#[derive(Clone)]
pub struct EnergyFunctional {
    pub phi: NFunction,
    pub rhs: Rhs,
    pub lambda: f64,
    pub mesh: Arc<Mesh>,
}

impl EnergyFunctional {
    pub fn new(phi: NFunction, rhs: Rhs, lambda: f64, mesh: Arc<Mesh>) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::Precondition(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(EnergyFunctional {
            phi,
            rhs,
            lambda,
            mesh,
        })
    }

    pub fn energy(&self, u: &DiscreteFunction) -> Result<f64> {
        u.require_zero_trace()?;
        let mut acc = 0.0;
        visit_cells(u, self.rhs.ceiling(), |cell| {
            acc += cell.meas * self.phi.phi(cell.grad_norm)?;
            for q in &cell.quads {
                acc -= self.lambda * q.w * finite(self.rhs.antiderivative(q.ceil, q.x, q.u), q.u)?;
            }
            Ok(())
        })?;
        finite(acc, f64::NAN)
    }

    /// Nodal residual r_i = int phi(|grad u|) grad u . grad v_i
    ///                    - lambda int rhs(x, u) v_i,
    /// with boundary components pinned to 0.
    pub fn residual(&self, u: &DiscreteFunction) -> Result<Vec<f64>> {
        u.require_zero_trace()?;
        let mut r = vec![0.0; u.values.len()];
        visit_cells(u, self.rhs.ceiling(), |cell| {
            // cells with |grad u| = 0 contribute nothing to the Phi term
            let scale = if cell.grad_norm > 0.0 {
                self.phi.density_at(cell.grad_norm)?
            } else {
                0.0
            };
            for k in 0..cell.n_nodes {
                let i = cell.nodes[k];
                let bg = cell.basis_grads[k];
                r[i] += cell.meas * scale * (cell.grad[0] * bg[0] + cell.grad[1] * bg[1]);
            }
            for q in &cell.quads {
                let fv = finite(self.rhs.density(q.ceil, q.x, q.u), q.u)?;
                for k in 0..cell.n_nodes {
                    r[cell.nodes[k]] -= self.lambda * q.w * fv * q.shape[k];
                }
            }
            Ok(())
        })?;
        for &i in &u.mesh.boundary {
            r[i] = 0.0;
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::OverflowDomain {
                t: f64::NAN,
                limit: f64::INFINITY,
            });
        }
        Ok(r)
    }

    /// Sup over interior nodes of the residual assembled from absolute
    /// values: the magnitude of the cancellation behind each residual entry,
    /// and hence the scale of its double-precision noise floor.
    pub fn residual_scale(&self, u: &DiscreteFunction) -> Result<f64> {
        u.require_zero_trace()?;
        let mut r = vec![0.0; u.values.len()];
        visit_cells(u, self.rhs.ceiling(), |cell| {
            let scale = if cell.grad_norm > 0.0 {
                self.phi.density_at(cell.grad_norm)?
            } else {
                0.0
            };
            for k in 0..cell.n_nodes {
                let i = cell.nodes[k];
                let bg = cell.basis_grads[k];
                r[i] += (cell.meas * scale * (cell.grad[0] * bg[0] + cell.grad[1] * bg[1])).abs();
            }
            for q in &cell.quads {
                let fv = finite(self.rhs.density(q.ceil, q.x, q.u), q.u)?;
                for k in 0..cell.n_nodes {
                    r[cell.nodes[k]] += (self.lambda * q.w * fv * q.shape[k]).abs();
                }
            }
            Ok(())
        })?;
        for &i in &u.mesh.boundary {
            r[i] = 0.0;
        }
        Ok(r.iter().fold(0.0_f64, |m, v| m.max(*v)))
    }

    pub fn residual_sup(&self, u: &DiscreteFunction) -> Result<f64> {
        Ok(self
            .residual(u)?
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs())))
    }
}

/// Discrete membership diagnostics for D_Phi and dom(phi(t)t):
/// the gradient modular, the conjugate modular of the dual field, and the
/// pointwise-identity gap | int phi|g|^2 - (first + second) |.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DomDiagnostics {
    pub modular_phi: f64,
    pub modular_tilde: f64,
    pub identity_gap: f64,
}

pub fn dom_diagnostics(phi: &NFunction, u: &DiscreteFunction) -> Result<DomDiagnostics> {
    let mut m_phi = 0.0;
    let mut m_tilde = 0.0;
    let mut cross = 0.0;
    visit_cells(u, None, |cell| {
        let g = cell.grad_norm;
        m_phi += cell.meas * phi.phi(g)?;
        if g > 0.0 {
            let dens = phi.density_at(g)?;
            m_tilde += cell.meas * phi.complementary(dens * g)?.0;
            cross += cell.meas * dens * g * g;
        }
        Ok(())
    })?;
    Ok(DomDiagnostics {
        modular_phi: m_phi,
        modular_tilde: m_tilde,
        identity_gap: (cross - (m_phi + m_tilde)).abs(),
    })
}
