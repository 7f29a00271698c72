//! Modulars, Luxemburg norms and the classical inequality verifiers
//! (Young/Holder, modular Poincare).

use serde::Serialize;

use crate::assembly::{integrate_gradient, integrate_pointwise};
use crate::error::{Error, Result};
use crate::mesh::DiscreteFunction;
use crate::nfunction::NFunction;

/// Relative termination width of the Luxemburg bisection.
const LUX_TOL: f64 = 1e-10;

/// The modular: int Phi(|u|) dx, or int Phi(|grad u|) dx elementwise.
pub fn modular(phi: &NFunction, u: &DiscreteFunction, of_gradient: bool) -> Result<f64> {
    if of_gradient {
        integrate_gradient(u, |g| phi.phi(g))
    } else {
        integrate_pointwise(u, |_x, v| phi.phi(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LuxemburgNorm {
    pub value: f64,
    /// final bisection bracket
    pub bracket: (f64, f64),
    pub modular_at_value: f64,
}

/// inf { lambda > 0 : int Phi(|u| / lambda) <= 1 }, by bisection over the
/// monotone map lambda -> modular(u / lambda).
pub fn luxemburg_norm(
    phi: &NFunction,
    u: &DiscreteFunction,
    of_gradient: bool,
) -> Result<LuxemburgNorm> {
    luxemburg_norm_with(|lam| modular(phi, &u.scaled(1.0 / lam), of_gradient), u)
}

/// Luxemburg norm with respect to the complementary function.
pub fn luxemburg_norm_tilde(
    phi: &NFunction,
    u: &DiscreteFunction,
    of_gradient: bool,
) -> Result<LuxemburgNorm> {
    let tilde = |v: f64| Ok(phi.complementary(v)?.0);
    luxemburg_norm_with(
        |lam| {
            let w = u.scaled(1.0 / lam);
            if of_gradient {
                integrate_gradient(&w, |g| tilde(g))
            } else {
                integrate_pointwise(&w, |_x, v| tilde(v.abs()))
            }
        },
        u,
    )
}

fn luxemburg_norm_with(
    mut modular_at: impl FnMut(f64) -> Result<f64>,
    u: &DiscreteFunction,
) -> Result<LuxemburgNorm> {
    if u.sup_norm() == 0.0 {
        return Ok(LuxemburgNorm {
            value: 0.0,
            bracket: (0.0, 0.0),
            modular_at_value: 0.0,
        });
    }
    // an evaluation that overflows means the modular is (numerically) infinite,
    // i.e. lambda is still below the norm
    let mut above_one = |lam: f64| -> Result<bool> {
        match modular_at(lam) {
            Ok(m) => Ok(m > 1.0),
            Err(Error::OverflowDomain { .. }) => Ok(true),
            Err(e) => Err(e),
        }
    };
    let mut lo = 1.0_f64;
    let mut hi = 1.0_f64;
    if above_one(1.0)? {
        while above_one(hi)? {
            lo = hi;
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::OverflowDomain {
                    t: hi,
                    limit: 1e300,
                });
            }
        }
    } else {
        while !above_one(lo)? {
            hi = lo;
            lo *= 0.5;
            if lo < 1e-300 {
                // modular stays below 1 for every positive lambda: norm is 0
                return Ok(LuxemburgNorm {
                    value: 0.0,
                    bracket: (0.0, 0.0),
                    modular_at_value: 0.0,
                });
            }
        }
    }
    while hi - lo > LUX_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if above_one(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let value = hi;
    Ok(LuxemburgNorm {
        value,
        bracket: (lo, hi),
        modular_at_value: modular_at(value)?,
    })
}

/// Gradient Luxemburg norm, the working norm on zero-trace functions.
pub fn w01_norm(phi: &NFunction, u: &DiscreteFunction) -> Result<f64> {
    Ok(luxemburg_norm(phi, u, true)?.value)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Holder inequality | int u v | <= 2 ||u||_Phi ||v||_Phi~.
pub fn verify_holder(
    phi: &NFunction,
    u: &DiscreteFunction,
    v: &DiscreteFunction,
    tol: f64,
) -> Result<InequalityCheck> {
    let mut prod = 0.0;
    crate::assembly::visit_cells(u, Some(v), |cell| {
        for q in &cell.quads {
            // `ceil` carries the second function through the same quadrature
            prod += q.w * q.u * q.ceil;
        }
        Ok(())
    })?;
    let lhs = prod.abs();
    let rhs = 2.0 * luxemburg_norm(phi, u, false)?.value * luxemburg_norm_tilde(phi, v, false)?.value;
    Ok(InequalityCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + tol,
    })
}

/// Modular Poincare inequality int Phi(|u|) <= int Phi(d |grad u|),
/// d = diam(Omega), for zero-trace u.
pub fn verify_modular_poincare(
    phi: &NFunction,
    u: &DiscreteFunction,
    diam: f64,
    tol: f64,
) -> Result<InequalityCheck> {
    u.require_zero_trace()?;
    let lhs = modular(phi, u, false)?;
    let rhs = integrate_gradient(u, |g| phi.phi(diam * g))?;
    Ok(InequalityCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_mesh;

    #[test]
    fn modular_examples() {
        let mesh = make_mesh(1, (0.0, 1.0), 16).unwrap();
        let p2 = NFunction::power(2.0);
        let one = DiscreteFunction::from_fn(mesh.clone(), |_| 1.0);
        assert!((modular(&p2, &one, false).unwrap() - 0.5).abs() < 1e-12);
        let zero = DiscreteFunction::zeros(mesh.clone());
        assert_eq!(modular(&p2, &zero, false).unwrap(), 0.0);
        let lin = DiscreteFunction::from_fn(mesh, |p| p[0]);
        assert!((modular(&p2, &lin, true).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn luxemburg_norm_of_unit_function() {
        let mesh = make_mesh(1, (0.0, 1.0), 16).unwrap();
        let one = DiscreteFunction::from_fn(mesh.clone(), |_| 1.0);
        let p2 = NFunction::power(2.0);
        let n = luxemburg_norm(&p2, &one, false).unwrap();
        assert!((n.value - 1.0 / 2f64.sqrt()).abs() < 1e-6);
        assert!((n.modular_at_value - 1.0).abs() < 1e-6);

        let p4 = NFunction::power(4.0);
        let n = luxemburg_norm(&p4, &one, false).unwrap();
        assert!((n.value - 0.25f64.powf(0.25)).abs() < 1e-6);

        let zero = DiscreteFunction::zeros(mesh);
        assert_eq!(luxemburg_norm(&p2, &zero, false).unwrap().value, 0.0);
    }

    #[test]
    fn holder_examples() {
        let mesh = make_mesh(1, (0.0, 1.0), 32).unwrap();
        let p2 = NFunction::power(2.0);
        let zero = DiscreteFunction::zeros(mesh.clone());
        let one = DiscreteFunction::from_fn(mesh.clone(), |_| 1.0);
        let c = verify_holder(&p2, &zero, &one, 1e-9).unwrap();
        assert!(c.holds && c.lhs == 0.0);

        // equality case: |int 1*1| = 1 = 2 (1/sqrt2)(1/sqrt2)
        let c = verify_holder(&p2, &one, &one, 1e-6).unwrap();
        assert!((c.lhs - 1.0).abs() < 1e-12);
        assert!((c.rhs - 1.0).abs() < 1e-5);
        assert!(c.holds);

        let x = DiscreteFunction::from_fn(mesh.clone(), |p| p[0]);
        let y = DiscreteFunction::from_fn(mesh, |p| 1.0 - p[0]);
        let c = verify_holder(&p2, &x, &y, 1e-9).unwrap();
        assert!((c.lhs - 1.0 / 6.0).abs() < 1e-12);
        assert!(c.rhs >= 1.0 / 6.0 && c.holds);
    }

    #[test]
    fn modular_poincare_examples() {
        let mesh = make_mesh(1, (0.0, 1.0), 64).unwrap();
        let p2 = NFunction::power(2.0);
        let zero = DiscreteFunction::zeros(mesh.clone());
        let c = verify_modular_poincare(&p2, &zero, 1.0, 1e-12).unwrap();
        assert!(c.holds && c.lhs == 0.0 && c.rhs == 0.0);

        let u = DiscreteFunction::from_fn_zero_trace(mesh.clone(), |p| p[0] * (1.0 - p[0]));
        let c = verify_modular_poincare(&p2, &u, 1.0, 1e-9).unwrap();
        assert!((c.lhs - 1.0 / 60.0).abs() < 2e-4);
        assert!((c.rhs - 1.0 / 6.0).abs() < 2e-3);
        assert!(c.holds);

        let p4 = NFunction::power(4.0);
        let c = verify_modular_poincare(&p4, &u, 1.0, 1e-9).unwrap();
        assert!(c.holds);
    }

    #[test]
    fn poincare_rejects_nonzero_trace() {
        let mesh = make_mesh(1, (0.0, 1.0), 8).unwrap();
        let u = DiscreteFunction::from_fn(mesh, |p| p[0]);
        assert!(verify_modular_poincare(&NFunction::power(2.0), &u, 1.0, 1e-9).is_err());
    }
}
