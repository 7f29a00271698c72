//! N-functions built from a density phi: evaluation, differentiation, the
//! complementary (Legendre-conjugate) function, Delta_2 classification and the
//! structural indices l, m, l*.
//!
//! The convention throughout is
//!   Phi(t) = integral_0^|t| s phi(s) ds,   Phi'(t) = t phi(t),
//! with phi positive on (0, inf) and t phi(t) strictly increasing.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quad::{adaptive_simpson, geomspace};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Relative tolerance of the Legendre-transform bisection on t*.
const CONJUGATE_TOL: f64 = 1e-12;

/// Evaluations clamp here: the largest Phi value a model is allowed to reach.
const PHI_CAP: f64 = 1e300;

/// The density phi of an N-function, defined on (0, +inf).
///
/// `domain_hint` is the largest argument for which evaluation is safe;
/// beyond it the model is treated as overflowed rather than saturated.
pub struct Density {
    eval: ScalarFn,
    deriv: Option<ScalarFn>,
    pub domain_hint: f64,
}

impl Density {
    pub fn new(eval: impl Fn(f64) -> f64 + Send + Sync + 'static, domain_hint: f64) -> Self {
        Density {
            eval: Arc::new(eval),
            deriv: None,
            domain_hint,
        }
    }

    pub fn with_deriv(
        mut self,
        deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.deriv = Some(Arc::new(deriv));
        self
    }

    /// phi(t) for t > 0.
    pub fn eval(&self, t: f64) -> f64 {
        (self.eval)(t)
    }

    /// phi'(t), closed form when registered, central finite difference otherwise.
    pub fn deriv(&self, t: f64) -> f64 {
        match &self.deriv {
            Some(d) => d(t),
            None => {
                let h = 1e-6 * t.max(1e-6);
                ((self.eval)(t + h) - (self.eval)((t - h).max(t * 0.5))) / (t + h - (t - h).max(t * 0.5))
            }
        }
    }
}

/// A Young function Phi together with its density and (optional) closed form.
#[derive(Clone)]
pub struct NFunction {
    density: Arc<Density>,
    closed_phi: Option<ScalarFn>,
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

impl std::fmt::Debug for NFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NFunction")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("domain_hint", &self.density.domain_hint)
            .finish()
    }
}

/// Construct an N-function from a raw density, validating (phi_1) and (phi_2)
/// on a sample grid. Phi is evaluated by adaptive quadrature of s phi(s).
pub fn build_nfunction(density: Density, quad_points: usize) -> Result<NFunction> {
    let n = quad_points.max(64);
    let grid = geomspace(1e-8, density.domain_hint, n);
    let mut prev = 0.0;
    for &t in &grid {
        let v = t * density.eval(t);
        if !(v > prev) || !v.is_finite() {
            return Err(Error::NonMonotoneDensity { t });
        }
        prev = v;
    }
    // (phi_2): t phi(t) -> 0 at 0 and grows without bound toward the hint.
    let small = grid[0] * density.eval(grid[0]);
    let large = *grid.last().unwrap() * density.eval(*grid.last().unwrap());
    if small > 1e-3 || large < 1e3 {
        return Err(Error::NonMonotoneDensity { t: grid[0] });
    }
    Ok(NFunction {
        density: Arc::new(density),
        closed_phi: None,
        name: "custom".into(),
        params: BTreeMap::new(),
    })
}

impl NFunction {
    fn from_parts(
        name: &str,
        params: &[(&str, f64)],
        density: Density,
        closed_phi: Option<ScalarFn>,
    ) -> Self {
        NFunction {
            density: Arc::new(density),
            closed_phi,
            name: name.to_string(),
            params: params
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        }
    }

    pub fn domain_hint(&self) -> f64 {
        self.density.domain_hint
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        if t.abs() > self.density.domain_hint {
            Err(Error::OverflowDomain {
                t,
                limit: self.density.domain_hint,
            })
        } else {
            Ok(())
        }
    }

    /// phi(t) for t > 0.
    pub fn density_at(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        Ok(self.density.eval(t))
    }

    pub fn density_deriv_at(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        Ok(self.density.deriv(t))
    }

    /// Phi(t) >= 0, even in t.
    pub fn phi(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        let a = t.abs();
        if a == 0.0 {
            return Ok(0.0);
        }
        let v = match &self.closed_phi {
            Some(f) => f(a),
            None => {
                let scale = (a * a * self.density.eval(a)).max(1.0);
                // s*phi(s) -> 0 as s -> 0 by (phi_2) even when phi itself
                // blows up there, so the endpoint is pinned to the limit
                adaptive_simpson(
                    |s| if s == 0.0 { 0.0 } else { s * self.density.eval(s) },
                    0.0,
                    a,
                    1e-12 * scale,
                )
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::OverflowDomain {
                t,
                limit: self.density.domain_hint,
            })
        }
    }

    /// Phi'(t) = t phi(t), extended by 0 at t = 0 per the (phi_2) limit.
    pub fn dphi(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let v = t * self.density.eval(t.abs());
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::OverflowDomain {
                t,
                limit: self.density.domain_hint,
            })
        }
    }

    /// Complementary function by Legendre transform:
    /// returns (Phi~(s), t*) where t* solves t phi(t) = s.
    ///
    /// Monotone bisection on t phi(t); for s = 0 the maximum sits at t = 0.
    pub fn complementary(&self, s: f64) -> Result<(f64, f64)> {
        if s < 0.0 {
            return Err(Error::Precondition(format!(
                "complementary argument must be nonnegative, got {s}"
            )));
        }
        if s == 0.0 {
            return Ok((0.0, 0.0));
        }
        let hint = self.density.domain_hint;
        let smax = hint * self.density.eval(hint);
        if !(s <= smax) {
            return Err(Error::NoBracket { s, max: smax });
        }
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64.min(hint);
        while hi * self.density.eval(hi) < s {
            lo = hi;
            hi = (hi * 2.0).min(hint);
            if hi == lo {
                break;
            }
        }
        while hi - lo > CONJUGATE_TOL * hi.max(1e-300) {
            let mid = 0.5 * (lo + hi);
            if mid * self.density.eval(mid) < s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t_star = 0.5 * (lo + hi);
        Ok((s * t_star - self.phi(t_star)?, t_star))
    }

    /// Default index/classification grid: geometric, 1e-6 up to the domain hint.
    pub fn default_grid(&self) -> Vec<f64> {
        geomspace(1e-6, self.density.domain_hint, 2000)
    }

    /// Bounded-ratio test for Phi(2t) <= K Phi(t).
    ///
    /// Heuristic: the sup of the ratio over the grid plus the log-log slope of
    /// its tail. A diverging tail (or overflow at large t) reads as failure.
    pub fn check_delta2(&self, grid: &[f64]) -> Delta2Report {
        let hint = self.density.domain_hint;
        let mut sup = 0.0_f64;
        let mut pts: Vec<(f64, f64)> = Vec::new();
        let mut overflowed = false;
        for &t in grid {
            if t <= 0.0 || 2.0 * t > hint {
                continue;
            }
            let (p1, p2) = match (self.phi(t), self.phi(2.0 * t)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => {
                    overflowed = true;
                    continue;
                }
            };
            if p1 <= 1e-300 || p2 > PHI_CAP {
                continue;
            }
            let ratio = p2 / p1;
            sup = sup.max(ratio);
            pts.push((t.ln(), ratio.ln()));
        }
        // log-log slope over the last quarter of the usable grid
        let tail = &pts[pts.len().saturating_sub(pts.len() / 4).min(pts.len().saturating_sub(2))..];
        let slope = least_squares_slope(tail);
        let satisfied = !overflowed && sup.is_finite() && slope < 0.01;
        Delta2Report {
            satisfied,
            sup_ratio: if overflowed { f64::INFINITY } else { sup },
            tail_slope: slope,
        }
    }

    /// Grid-based structural indices.
    ///
    /// l   = inf t^2 phi(t) / Phi(t)         (lower index, (phi_3) constant)
    /// m   = 1 + sup (t phi(t))' / phi(t)    ((phi_4) upper bound)
    /// l*  = N l / (N - l) for l < N, +inf otherwise (Sobolev conjugate)
    pub fn indices(&self, grid: &[f64], n_dim: usize) -> Result<IndexReport> {
        let mut l = f64::INFINITY;
        let mut m_check = 0.0_f64;
        let mut sup_ratio2 = f64::NEG_INFINITY;
        let mut inf_ratio2 = f64::INFINITY;
        for &t in grid {
            if t <= 0.0 || t > self.density.domain_hint {
                continue;
            }
            let phi_t = match self.phi(t) {
                Ok(v) => v,
                Err(Error::OverflowDomain { .. }) => continue,
                Err(e) => return Err(e),
            };
            if phi_t == 0.0 {
                return Err(Error::DegenerateIndex { t });
            }
            let p = self.density.eval(t);
            let r1 = t * t * p / phi_t;
            if r1.is_finite() {
                l = l.min(r1);
                m_check = m_check.max(r1);
            }
            // (t phi)' / phi = 1 + t phi'/phi
            let r2 = 1.0 + t * self.density.deriv(t) / p;
            if r2.is_finite() {
                sup_ratio2 = sup_ratio2.max(r2);
                inf_ratio2 = inf_ratio2.min(r2);
            }
        }
        let n = n_dim as f64;
        let l_star = if l < n { n * l / (n - l) } else { f64::INFINITY };
        let d2_phi = self.check_delta2(grid);
        let d2_tilde = self.check_delta2_tilde(400);
        Ok(IndexReport {
            l,
            m: 1.0 + sup_ratio2,
            m_check,
            ell: 1.0 + inf_ratio2,
            l_star,
            grid: GridSpec {
                lo: grid.first().copied().unwrap_or(0.0),
                hi: grid.last().copied().unwrap_or(0.0),
                points: grid.len(),
            },
            delta2_phi: d2_phi.satisfied,
            delta2_tilde: d2_tilde.satisfied,
            sup_ratio_phi: d2_phi.sup_ratio,
            sup_ratio_tilde: d2_tilde.sup_ratio,
        })
    }

    /// Delta_2 test applied to the complementary function, evaluated through
    /// the Legendre transform on an s-grid.
    pub fn check_delta2_tilde(&self, points: usize) -> Delta2Report {
        let hint = self.density.domain_hint;
        let smax = hint * self.density.eval(hint);
        let s_hi = if smax.is_finite() { smax / 2.1 } else { PHI_CAP };
        let grid = geomspace(1e-6, s_hi.max(1.0), points.max(16));
        let mut sup = 0.0_f64;
        let mut pts = Vec::new();
        for &s in &grid {
            if 2.0 * s > smax {
                continue;
            }
            let (v1, v2) = match (self.complementary(s), self.complementary(2.0 * s)) {
                (Ok((a, _)), Ok((b, _))) => (a, b),
                _ => continue,
            };
            if v1 <= 1e-300 {
                continue;
            }
            let ratio = v2 / v1;
            sup = sup.max(ratio);
            pts.push((s.ln(), ratio.ln()));
        }
        let tail = &pts[pts.len().saturating_sub(pts.len() / 4).min(pts.len().saturating_sub(2))..];
        let slope = least_squares_slope(tail);
        Delta2Report {
            satisfied: sup.is_finite() && slope < 0.01 && !pts.is_empty(),
            sup_ratio: sup,
            tail_slope: slope,
        }
    }
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Legendre-transform view of an N-function.
pub struct Complementary<'a> {
    pub base: &'a NFunction,
}

impl<'a> Complementary<'a> {
    pub fn tilde(&self, s: f64) -> Result<f64> {
        Ok(self.base.complementary(s)?.0)
    }

    pub fn argmax(&self, s: f64) -> Result<f64> {
        Ok(self.base.complementary(s)?.1)
    }
}

impl NFunction {
    pub fn complementary_fn(&self) -> Complementary<'_> {
        Complementary { base: self }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Delta2Report {
    pub satisfied: bool,
    pub sup_ratio: f64,
    pub tail_slope: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IndexReport {
    /// inf of t^2 phi / Phi over the grid
    pub l: f64,
    /// 1 + sup of (t phi)'/phi over the grid
    pub m: f64,
    /// sup of t^2 phi / Phi, fallback upper index
    pub m_check: f64,
    /// 1 + inf of (t phi)'/phi, the (phi_4) lower constant
    pub ell: f64,
    /// Sobolev conjugate N l / (N - l), +inf when l >= N
    pub l_star: f64,
    pub grid: GridSpec,
    pub delta2_phi: bool,
    pub delta2_tilde: bool,
    pub sup_ratio_phi: f64,
    pub sup_ratio_tilde: f64,
}

/// Largest t with t^2 phi(t) <= cap; a conservative stand-in for the point
/// where Phi itself reaches the cap (Phi(t) <= t * t phi(t)).
fn hint_from_density(phi: impl Fn(f64) -> f64) -> f64 {
    let over = |t: f64| {
        let v = t * t * phi(t);
        !v.is_finite() || v > PHI_CAP
    };
    let mut hi = 1.0_f64;
    while !over(hi) {
        hi *= 2.0;
        if hi > 1e307 {
            return 1e307;
        }
    }
    let mut lo = hi / 2.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if over(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

fn get_param(params: &BTreeMap<String, f64>, key: &'static str) -> Result<f64> {
    params.get(key).copied().ok_or(Error::ParamOutOfRange {
        name: key,
        value: f64::NAN,
        range: "parameter missing",
    })
}

/// The model catalog. Stable names and parameter keys:
/// "power"(p), "powersum"(p,q), "genpower"(alpha), "plog"(p),
/// "sinh"(alpha,beta), "exp", "loglinear".
///
/// When the optional key "N" is supplied, the dimension-dependent parameter
/// ranges are enforced as well.
pub fn catalog(name: &str, params: &BTreeMap<String, f64>) -> Result<NFunction> {
    const KNOWN: &str = "power, powersum, genpower, plog, sinh, exp, loglinear";
    let n_dim = params.get("N").copied();
    match name {
        "power" => {
            let p = get_param(params, "p")?;
            if !(p > 1.0) {
                return Err(Error::ParamOutOfRange {
                    name: "p",
                    value: p,
                    range: "p > 1",
                });
            }
            let hint = hint_from_density(move |t: f64| t.powf(p - 2.0));
            Ok(NFunction::from_parts(
                "power",
                &[("p", p)],
                Density::new(move |t| t.powf(p - 2.0), hint)
                    .with_deriv(move |t| (p - 2.0) * t.powf(p - 3.0)),
                Some(Arc::new(move |t: f64| t.powf(p) / p)),
            ))
        }
        "powersum" => {
            let p = get_param(params, "p")?;
            let q = get_param(params, "q")?;
            if !(1.0 < p && p < q) {
                return Err(Error::ParamOutOfRange {
                    name: "q",
                    value: q,
                    range: "1 < p < q",
                });
            }
            if let Some(n) = n_dim {
                if !(q < n) {
                    return Err(Error::ParamOutOfRange {
                        name: "q",
                        value: q,
                        range: "q < N",
                    });
                }
            }
            let hint = hint_from_density(move |t: f64| t.powf(p - 2.0) + t.powf(q - 2.0));
            Ok(NFunction::from_parts(
                "powersum",
                &[("p", p), ("q", q)],
                Density::new(move |t| t.powf(p - 2.0) + t.powf(q - 2.0), hint).with_deriv(
                    move |t| (p - 2.0) * t.powf(p - 3.0) + (q - 2.0) * t.powf(q - 3.0),
                ),
                Some(Arc::new(move |t: f64| t.powf(p) / p + t.powf(q) / q)),
            ))
        }
        "genpower" => {
            let a = get_param(params, "alpha")?;
            if !(a > 1.0) {
                return Err(Error::ParamOutOfRange {
                    name: "alpha",
                    value: a,
                    range: "alpha > 1",
                });
            }
            if let Some(n) = n_dim {
                if n > 2.0 && !(a < n / (n - 2.0)) {
                    return Err(Error::ParamOutOfRange {
                        name: "alpha",
                        value: a,
                        range: "1 < alpha < N/(N-2)",
                    });
                }
            }
            let hint = hint_from_density(move |t: f64| 2.0 * a * (1.0 + t * t).powf(a - 1.0));
            Ok(NFunction::from_parts(
                "genpower",
                &[("alpha", a)],
                Density::new(move |t| 2.0 * a * (1.0 + t * t).powf(a - 1.0), hint).with_deriv(
                    move |t| 4.0 * a * (a - 1.0) * t * (1.0 + t * t).powf(a - 2.0),
                ),
                Some(Arc::new(move |t: f64| (1.0 + t * t).powf(a) - 1.0)),
            ))
        }
        "plog" => {
            let p = get_param(params, "p")?;
            if !(p > 1.0) {
                return Err(Error::ParamOutOfRange {
                    name: "p",
                    value: p,
                    range: "p > 1",
                });
            }
            if let Some(n) = n_dim {
                let lo = (-1.0 + (1.0 + 4.0 * n).sqrt()) / 2.0;
                if !(n >= 3.0 && lo < p && p < n - 1.0) {
                    return Err(Error::ParamOutOfRange {
                        name: "p",
                        value: p,
                        range: "(-1+sqrt(1+4N))/2 < p < N-1, N >= 3",
                    });
                }
            }
            // Phi = t^p ln(1+t), phi = Phi'/t
            let dens = move |t: f64| p * t.powf(p - 2.0) * (1.0 + t).ln() + t.powf(p - 1.0) / (1.0 + t);
            let hint = hint_from_density(dens);
            Ok(NFunction::from_parts(
                "plog",
                &[("p", p)],
                Density::new(dens, hint).with_deriv(move |t: f64| {
                    p * (p - 2.0) * t.powf(p - 3.0) * (1.0 + t).ln()
                        + p * t.powf(p - 2.0) / (1.0 + t)
                        + (p - 1.0) * t.powf(p - 2.0) / (1.0 + t)
                        - t.powf(p - 1.0) / (1.0 + t).powi(2)
                }),
                Some(Arc::new(move |t: f64| t.powf(p) * (1.0 + t).ln())),
            ))
        }
        "sinh" => {
            let a = get_param(params, "alpha")?;
            let b = get_param(params, "beta")?;
            if !(0.0 <= a && a <= 1.0) {
                return Err(Error::ParamOutOfRange {
                    name: "alpha",
                    value: a,
                    range: "0 <= alpha <= 1",
                });
            }
            if !(b > 0.0) {
                return Err(Error::ParamOutOfRange {
                    name: "beta",
                    value: b,
                    range: "beta > 0",
                });
            }
            // phi(s) = s^{-alpha} asinh(s)^beta so that s phi(s) = s^{1-alpha} asinh(s)^beta
            let dens = move |t: f64| t.powf(-a) * t.asinh().powf(b);
            let hint = hint_from_density(dens);
            Ok(NFunction::from_parts(
                "sinh",
                &[("alpha", a), ("beta", b)],
                Density::new(dens, hint).with_deriv(move |t: f64| {
                    let ash = t.asinh();
                    -a * t.powf(-a - 1.0) * ash.powf(b)
                        + b * t.powf(-a) * ash.powf(b - 1.0) / (1.0 + t * t).sqrt()
                }),
                None,
            ))
        }
        "exp" => {
            let hint = hint_from_density(|t: f64| (t * t).exp());
            Ok(NFunction::from_parts(
                "exp",
                &[],
                Density::new(|t| (t * t).exp(), hint)
                    .with_deriv(|t| 2.0 * t * (t * t).exp()),
                Some(Arc::new(|t: f64| ((t * t).exp() - 1.0) / 2.0)),
            ))
        }
        "loglinear" => {
            // Phi = t ln(1+t), Phi' = ln(1+t) + t/(1+t), phi = Phi'/t
            let dens = |t: f64| ((1.0 + t).ln() + t / (1.0 + t)) / t;
            let hint = hint_from_density(dens);
            Ok(NFunction::from_parts(
                "loglinear",
                &[],
                Density::new(dens, hint).with_deriv(|t: f64| {
                    let num = (1.0 / (1.0 + t) + 1.0 / (1.0 + t).powi(2)) * t
                        - ((1.0 + t).ln() + t / (1.0 + t));
                    num / (t * t)
                }),
                Some(Arc::new(|t: f64| t * (1.0 + t).ln())),
            ))
        }
        other => Err(Error::UnknownModel(other.to_string(), KNOWN)),
    }
}

/// Shorthand constructors for the models used throughout the tests.
impl NFunction {
    pub fn power(p: f64) -> NFunction {
        catalog("power", &[("p".to_string(), p)].into_iter().collect()).unwrap()
    }

    pub fn exponential() -> NFunction {
        catalog("exp", &BTreeMap::new()).unwrap()
    }

    pub fn loglinear() -> NFunction {
        catalog("loglinear", &BTreeMap::new()).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_build_matches_closed_power() {
        let n = build_nfunction(Density::new(|_| 1.0, 1e6), 256).unwrap();
        assert!((n.phi(3.0).unwrap() - 4.5).abs() < 1e-9);
        assert_eq!(n.phi(0.0).unwrap(), 0.0);
    }

    #[test]
    fn quadrature_build_exponential_density() {
        let n = build_nfunction(Density::new(|s: f64| (s * s).exp(), 20.0), 256).unwrap();
        let expected = (std::f64::consts::E - 1.0) / 2.0;
        assert!((n.phi(1.0).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn decreasing_density_product_rejected() {
        let bad = Density::new(|s: f64| 1.0 / (s * s), 1e6);
        assert!(matches!(
            build_nfunction(bad, 128),
            Err(Error::NonMonotoneDensity { .. })
        ));
    }

    #[test]
    fn catalog_closed_forms() {
        let p4 = NFunction::power(4.0);
        assert!((p4.phi(1.3).unwrap() - 1.3f64.powi(4) / 4.0).abs() < 1e-14);
        let e = NFunction::exponential();
        assert!((e.phi(1.0).unwrap() - (std::f64::consts::E - 1.0) / 2.0).abs() < 1e-14);
        let ll = NFunction::loglinear();
        assert!((ll.phi(2.0).unwrap() - 2.0 * 3.0f64.ln()).abs() < 1e-14);
        let gp = catalog(
            "genpower",
            &[("alpha".to_string(), 2.0)].into_iter().collect(),
        )
        .unwrap();
        assert!((gp.phi(1.0).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn catalog_rejects_bad_params() {
        assert!(matches!(
            catalog("power", &[("p".to_string(), 1.0)].into_iter().collect()),
            Err(Error::ParamOutOfRange { name: "p", .. })
        ));
        assert!(matches!(
            catalog("nope", &BTreeMap::new()),
            Err(Error::UnknownModel(..))
        ));
        // genpower's admissible alpha range depends on the dimension
        let mut ps = BTreeMap::new();
        ps.insert("alpha".to_string(), 4.0);
        ps.insert("N".to_string(), 3.0);
        assert!(matches!(
            catalog("genpower", &ps),
            Err(Error::ParamOutOfRange { name: "alpha", .. })
        ));
    }

    #[test]
    fn catalog_matches_quadrature_rebuild() {
        let p3 = NFunction::power(3.0);
        let rebuilt = build_nfunction(Density::new(|s| s, 1e6), 256).unwrap();
        for &t in &[0.1, 1.0, 7.5, 40.0] {
            let a = p3.phi(t).unwrap();
            let b = rebuilt.phi(t).unwrap();
            assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }
    }

    #[test]
    fn complementary_quadratic() {
        let p2 = NFunction::power(2.0);
        let (v, t) = p2.complementary(3.0).unwrap();
        assert!((v - 4.5).abs() < 1e-9);
        assert!((t - 3.0).abs() < 1e-9);
        assert_eq!(p2.complementary(0.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn complementary_cubic_matches_conjugate_exponent() {
        // conjugate of t^p/p is s^{p'}/p'
        let p3 = NFunction::power(3.0);
        let (v, t) = p3.complementary(1.0).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-9);
        assert!((t - 1.0).abs() < 1e-9);
    }

    #[test]
    fn complementary_rejects_unreachable_slope() {
        let n = build_nfunction(Density::new(|s: f64| s / (1.0 + s), 1e6), 128).unwrap();
        // t phi(t) tops out near the domain hint; slopes beyond are unreachable
        assert!(matches!(
            n.complementary(1e9),
            Err(Error::NoBracket { .. })
        ));
    }

    #[test]
    fn delta2_classification() {
        let p4 = NFunction::power(4.0);
        let rep = p4.check_delta2(&p4.default_grid());
        assert!(rep.satisfied);
        assert!((rep.sup_ratio - 16.0).abs() < 1e-6);

        let p2 = NFunction::power(2.0);
        let rep = p2.check_delta2(&p2.default_grid());
        assert!(rep.satisfied);
        assert!((rep.sup_ratio - 4.0).abs() < 1e-6);

        let e = NFunction::exponential();
        let rep = e.check_delta2(&e.default_grid());
        assert!(!rep.satisfied);
    }

    #[test]
    fn delta2_tilde_of_exponential_holds() {
        // the complementary of the exponential model does satisfy Delta_2
        let e = NFunction::exponential();
        assert!(e.check_delta2_tilde(200).satisfied);
    }

    #[test]
    fn power_indices() {
        let p3 = NFunction::power(3.0);
        let rep = p3.indices(&p3.default_grid(), 2).unwrap();
        assert!((rep.l - 3.0).abs() < 1e-8);
        assert!((rep.m - 3.0).abs() < 1e-8);
        assert!(rep.l_star.is_infinite());

        let p2 = NFunction::power(2.0);
        let rep = p2.indices(&p2.default_grid(), 3).unwrap();
        assert!((rep.l - 2.0).abs() < 1e-8);
        assert!((rep.l_star - 6.0).abs() < 1e-6);
    }

    #[test]
    fn loglinear_lower_constant_is_one() {
        let ll = NFunction::loglinear();
        let rep = ll.indices(&ll.default_grid(), 2).unwrap();
        assert!(rep.ell >= 1.0 - 1e-9 && rep.ell < 1.01);
        assert!(!rep.delta2_tilde);
    }
}
