//! Right-hand sides f(x, t), their antiderivatives F, the growth-hypothesis
//! checkers, and the truncation at a first solution.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::{DiscreteFunction, Point};
use crate::nfunction::{build_nfunction, catalog, Density, IndexReport, NFunction};
use crate::quad::{adaptive_simpson, geomspace};

pub type XtFn = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;

/// (f_0) growth data: the N-function A dominating f and its upper index.
#[derive(Clone)]
pub struct Growth {
    pub big_a: NFunction,
    pub m_a: f64,
}

/// A Caratheodory right-hand side with antiderivative F(x, 0) = 0.
#[derive(Clone)]
pub struct Nonlinearity {
    f: XtFn,
    big_f: XtFn,
    pub growth: Option<Arc<Growth>>,
    /// declared (alpha, C) for the (f_3) bound, when known by construction
    pub f3_data: Option<(f64, f64)>,
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

impl std::fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("name", &self.name)
            .field("params", &self.params)
            .finish()
    }
}

impl Nonlinearity {
    pub fn custom(
        name: &str,
        f: impl Fn(Point, f64) -> f64 + Send + Sync + 'static,
        big_f: impl Fn(Point, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Nonlinearity {
            f: Arc::new(f),
            big_f: Arc::new(big_f),
            growth: None,
            f3_data: None,
            name: name.to_string(),
            params: BTreeMap::new(),
        }
    }

    pub fn f(&self, x: Point, t: f64) -> f64 {
        (self.f)(x, t)
    }

    pub fn big_f(&self, x: Point, t: f64) -> f64 {
        (self.big_f)(x, t)
    }
}

/// Cumulative antiderivative table for models without a closed-form F.
/// Values at uniform nodes come from composite Simpson; within a cell the
/// remainder is integrated by one Simpson step from the left node.
struct CumulativeIntegral {
    h: f64,
    t_max: f64,
    vals: Vec<f64>,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl CumulativeIntegral {
    fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static, t_max: f64, cells: usize) -> Self {
        let f = Arc::new(f);
        let h = t_max / cells as f64;
        let mut vals = Vec::with_capacity(cells + 1);
        vals.push(0.0);
        let mut acc = 0.0;
        let mut f_lo = f(0.0);
        for k in 0..cells {
            let a = k as f64 * h;
            let fm = f(a + 0.5 * h);
            let f_hi = f(a + h);
            acc += h / 6.0 * (f_lo + 4.0 * fm + f_hi);
            vals.push(acc);
            f_lo = f_hi;
        }
        CumulativeIntegral { h, t_max, vals, f }
    }

    fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= self.t_max {
            let g = self.f.clone();
            let scale = (t - self.t_max) * (g(self.t_max).abs() + g(t).abs());
            return self.vals[self.vals.len() - 1]
                + adaptive_simpson(|s| g(s), self.t_max, t, 1e-12 * scale.max(1.0));
        }
        let k = ((t / self.h).floor() as usize).min(self.vals.len() - 2);
        let a = k as f64 * self.h;
        let (fa, fm, fb) = ((self.f)(a), (self.f)(0.5 * (a + t)), (self.f)(t));
        self.vals[k] + (t - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
}

fn upper_index_of(a: &NFunction) -> f64 {
    let grid = geomspace(1e-5, 1e4_f64.min(a.domain_hint()), 600);
    let mut m = 0.0_f64;
    for &t in &grid {
        if let (Ok(phi_t), Ok(dens)) = (a.phi(t), a.density_at(t)) {
            if phi_t > 0.0 {
                let r = t * t * dens / phi_t;
                if r.is_finite() {
                    m = m.max(r);
                }
            }
        }
    }
    m
}

/// Model right-hand sides. Stable names: "pq"(p, q), "pqlog"(p, q),
/// "const"(c).
pub fn model_f(name: &str, params: &BTreeMap<String, f64>) -> Result<Nonlinearity> {
    const KNOWN: &str = "pq, pqlog, const";
    match name {
        "pq" => {
            let p = require(params, "p")?;
            let q = require(params, "q")?;
            check_pq(p, q)?;
            let big_a = catalog("power", &[("p".to_string(), p)].into_iter().collect())?;
            let growth = Growth { big_a, m_a: p };
            Ok(Nonlinearity {
                f: Arc::new(move |_x, t: f64| {
                    let t = t.max(0.0);
                    t.powf(p - 1.0) - t.powf(q - 1.0)
                }),
                big_f: Arc::new(move |_x, t: f64| {
                    let t = t.max(0.0);
                    t.powf(p) / p - t.powf(q) / q
                }),
                growth: Some(Arc::new(growth)),
                f3_data: None,
                name: "pq".into(),
                params: params.clone(),
            })
        }
        "pqlog" => {
            let p = require(params, "p")?;
            let q = require(params, "q")?;
            check_pq(p, q)?;
            let f1 = move |t: f64| {
                if t <= 0.0 {
                    return 0.0;
                }
                p * t.powf(p - 1.0) * (1.0 + t).ln() - t.powf(p) / (1.0 + t).ln()
                    - q * t.powf(q - 1.0)
            };
            let table = Arc::new(CumulativeIntegral::new(f1, 200.0, 20_000));
            // dominating N-function: a(s) s = s^p / ln(1+s)
            let a_dens = move |s: f64| {
                if s <= 0.0 {
                    0.0
                } else {
                    s.powf(p - 1.0) / (1.0 + s).ln()
                }
            };
            let hint = 1e300_f64.powf(1.0 / (p + 1.0));
            let big_a = build_nfunction(Density::new(a_dens, hint), 256)?;
            let m_a = upper_index_of(&big_a);
            Ok(Nonlinearity {
                f: Arc::new(move |_x, t| f1(t)),
                big_f: Arc::new(move |_x, t| table.eval(t)),
                growth: Some(Arc::new(Growth { big_a, m_a })),
                f3_data: None,
                name: "pqlog".into(),
                params: params.clone(),
            })
        }
        "const" => {
            let c = params.get("c").copied().unwrap_or(1.0);
            let big_a = catalog("power", &[("p".to_string(), 2.0)].into_iter().collect())?;
            Ok(Nonlinearity {
                f: Arc::new(move |_x, _t| c),
                big_f: Arc::new(move |_x, t| c * t),
                growth: Some(Arc::new(Growth { big_a, m_a: 2.0 })),
                f3_data: None,
                name: "const".into(),
                params: params.clone(),
            })
        }
        other => Err(Error::UnknownModel(other.to_string(), KNOWN)),
    }
}

fn require(params: &BTreeMap<String, f64>, key: &'static str) -> Result<f64> {
    params.get(key).copied().ok_or(Error::ParamOutOfRange {
        name: key,
        value: f64::NAN,
        range: "parameter missing",
    })
}

fn check_pq(p: f64, q: f64) -> Result<()> {
    if !(1.0 < q && q < p) {
        return Err(Error::ParamOutOfRange {
            name: "q",
            value: q,
            range: "1 < q < p",
        });
    }
    Ok(())
}

/// An (f_3)-compliant right-hand side derived from Phi itself:
///   F(x, t) = Phi(t_+)^alpha (Phi(t_+) - b) / (Phi(t_+) + b),
/// negative and decreasing while Phi < b, positive once Phi > b, and bounded
/// by Phi^alpha with C = 1.
pub fn phi_power_model(phi: &NFunction, alpha: f64, b: f64) -> Result<Nonlinearity> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::ParamOutOfRange {
            name: "alpha",
            value: alpha,
            range: "0 < alpha < 1",
        });
    }
    if !(b > 0.0) {
        return Err(Error::ParamOutOfRange {
            name: "b",
            value: b,
            range: "b > 0",
        });
    }
    let phi_f = phi.clone();
    let phi_big = phi.clone();
    let big_f = move |_x: Point, t: f64| {
        if t <= 0.0 {
            return 0.0;
        }
        match phi_big.phi(t) {
            Ok(v) => v.powf(alpha) * (v - b) / (v + b),
            Err(_) => f64::INFINITY,
        }
    };
    let f = move |_x: Point, t: f64| {
        if t <= 0.0 {
            return 0.0;
        }
        match (phi_f.phi(t), phi_f.dphi(t)) {
            (Ok(v), Ok(dv)) => {
                if v == 0.0 {
                    return 0.0;
                }
                let d_dphi = alpha * v.powf(alpha - 1.0) * (v - b) / (v + b)
                    + v.powf(alpha) * 2.0 * b / (v + b).powi(2);
                d_dphi * dv
            }
            _ => f64::INFINITY,
        }
    };
    let mut params = BTreeMap::new();
    params.insert("alpha".to_string(), alpha);
    params.insert("b".to_string(), b);
    Ok(Nonlinearity {
        f: Arc::new(f),
        big_f: Arc::new(big_f),
        growth: None,
        f3_data: Some((alpha, 1.0)),
        name: "phipow".into(),
        params,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Profile {
    T1,
    T2,
}

impl std::str::FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "T1" | "t1" => Ok(Profile::T1),
            "T2" | "t2" => Ok(Profile::T2),
            other => Err(format!("unknown profile '{other}', expected T1 or T2")),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct F0Check {
    pub holds: bool,
    pub m_a: f64,
    pub l: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct F1Check {
    pub delta: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct F2Check {
    pub t1: f64,
    pub f_at_t1: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct F3Check {
    pub alpha: f64,
    pub c_est: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub profile: Profile,
    pub indices: IndexReport,
    pub f0: F0Check,
    pub f1: F1Check,
    pub f2: F2Check,
    pub f3: F3Check,
}

impl HypothesisReport {
    pub fn profile_holds(&self) -> bool {
        self.failure_reason().is_none()
    }

    /// The first violated condition of the requested profile, if any.
    pub fn failure_reason(&self) -> Option<String> {
        match self.profile {
            Profile::T1 => {
                if !(self.indices.l > 1.0) {
                    return Some(format!("(phi_3) fails: l = {:.6} <= 1", self.indices.l));
                }
                if !self.f0.holds {
                    return Some(format!(
                        "(f_0) fails: m_A = {:.6} not in (1, l = {:.6})",
                        self.f0.m_a, self.f0.l
                    ));
                }
                if !self.f1.holds {
                    return Some("(f_1) fails: F not decreasing near 0".into());
                }
                if !self.f2.holds {
                    return Some("(f_2) fails: no t_1 with F(x, t_1) > 0".into());
                }
                None
            }
            Profile::T2 => {
                if !self.indices.m.is_finite() {
                    return Some("(phi_4) fails: (t phi)'/phi unbounded".into());
                }
                if !(self.indices.m < self.indices.l_star) {
                    return Some(format!(
                        "geometry fails: m = {:.6} >= l* = {:.6}",
                        self.indices.m, self.indices.l_star
                    ));
                }
                if !self.f1.holds {
                    return Some("(f_1) fails: F not decreasing near 0".into());
                }
                if !self.f2.holds {
                    return Some("(f_2) fails: no t_1 with F(x, t_1) > 0".into());
                }
                if !self.f3.holds {
                    return Some(format!(
                        "(f_3) fails: no alpha < 1 with |F| <= C Phi^alpha (fit alpha = {:.4})",
                        self.f3.alpha
                    ));
                }
                None
            }
        }
    }
}

/// Scan grid for the hypothesis checks: geometric, 1e-4 to 1e2, 400 points.
fn scan_grid() -> Vec<f64> {
    geomspace(1e-4, 1e2, 400)
}

/// Verify the (f_0)-(f_3) conditions of the requested profile against a
/// concrete Phi. `xs` are the spatial sample points (quadrature nodes of the
/// target mesh, or any representative set for x-independent models).
pub fn check_hypotheses(
    f: &Nonlinearity,
    phi: &NFunction,
    profile: Profile,
    n_dim: usize,
    xs: &[Point],
) -> Result<HypothesisReport> {
    let indices = phi.indices(&phi.default_grid(), n_dim)?;
    let xs: Vec<Point> = if xs.is_empty() {
        vec![[0.5, 0.5]]
    } else {
        xs.to_vec()
    };
    let grid = scan_grid();

    // (f_0): 1 < m_A < l
    let f0 = match &f.growth {
        Some(g) => F0Check {
            holds: 1.0 < g.m_a && g.m_a < indices.l,
            m_a: g.m_a,
            l: indices.l,
            margin: indices.l - g.m_a,
        },
        None => F0Check {
            holds: false,
            m_a: f64::NAN,
            l: indices.l,
            margin: f64::NAN,
        },
    };

    // (f_1): largest delta with F decreasing (and nonpositive) on [0, delta)
    let mut delta = f64::INFINITY;
    let mut f1_holds = true;
    for &x in &xs {
        let mut prev = 0.0_f64;
        let mut d = 0.0_f64;
        for &t in &grid {
            let v = f.big_f(x, t);
            if v <= prev + 1e-14 && v <= 1e-14 {
                d = t;
                prev = v;
            } else {
                break;
            }
        }
        if d == 0.0 {
            f1_holds = false;
        }
        delta = delta.min(d);
    }
    if !delta.is_finite() {
        delta = 0.0;
    }
    let f1 = F1Check {
        delta,
        holds: f1_holds && delta > 0.0,
    };

    // (f_2): first crossing, then a margin factor so F(t_1) is robustly positive
    let crossing = grid.iter().copied().find(|&t| {
        xs.iter().all(|&x| f.big_f(x, t) > 0.0)
    });
    let f2 = match crossing {
        Some(tc) => {
            let t1 = grid
                .iter()
                .copied()
                .find(|&t| t >= 1.25 * tc && xs.iter().all(|&x| f.big_f(x, t) > 0.0))
                .unwrap_or(tc);
            let f_at_t1 = xs
                .iter()
                .map(|&x| f.big_f(x, t1))
                .fold(f64::INFINITY, f64::min);
            F2Check {
                t1,
                f_at_t1,
                holds: f_at_t1 > 0.0,
            }
        }
        None => F2Check {
            t1: f64::NAN,
            f_at_t1: f64::NAN,
            holds: false,
        },
    };

    // (f_3): |F| <= C Phi^alpha with alpha < 1, declared or fitted on the grid
    let f3 = fit_f3(f, phi, &xs, &grid);

    Ok(HypothesisReport {
        profile,
        indices,
        f0,
        f1,
        f2,
        f3,
    })
}

fn fit_f3(f: &Nonlinearity, phi: &NFunction, xs: &[Point], grid: &[f64]) -> F3Check {
    let declared = f.f3_data;
    // exponent required by the tail (Phi large) and allowed near zero (Phi small)
    let mut needed_hi: f64 = 0.0;
    let mut allowed_lo: f64 = f64::INFINITY;
    let mut samples: Vec<(f64, f64)> = Vec::new(); // (Phi, |F| max over xs)
    for &t in grid {
        // overflowed samples carry no information about the growth exponent
        let p = match phi.phi(t) {
            Ok(v) if v > 0.0 && v.is_finite() => v,
            _ => continue,
        };
        let fmax = xs
            .iter()
            .map(|&x| f.big_f(x, t).abs())
            .fold(0.0_f64, f64::max);
        if !fmax.is_finite() {
            continue;
        }
        samples.push((p, fmax));
        if fmax < 1e-14 {
            continue;
        }
        let r = fmax.ln() / p.ln();
        if p > 10.0 {
            needed_hi = needed_hi.max(r);
        } else if p < 0.1 {
            allowed_lo = allowed_lo.min(r);
        }
    }
    let alpha = declared.map(|(a, _)| a).unwrap_or(needed_hi);
    let feasible = alpha <= allowed_lo + 0.05;
    let c_est = samples
        .iter()
        .map(|&(p, fv)| fv / p.powf(alpha))
        .fold(0.0_f64, f64::max);
    F3Check {
        alpha,
        c_est,
        holds: alpha > 0.0 && alpha < 1.0 && feasible && c_est.is_finite(),
    }
}

/// The right-hand side cut off above a first solution u1.
#[derive(Clone)]
pub struct TruncatedNonlinearity {
    pub base: Nonlinearity,
    pub ceiling: DiscreteFunction,
    /// set when the ceiling has negative nodal values; the truncation argument
    /// presumes a nonnegative ceiling on the relevant set
    pub negative_ceiling: bool,
}

pub fn truncate(f: &Nonlinearity, u1: &DiscreteFunction) -> TruncatedNonlinearity {
    let negative_ceiling = u1.values.iter().any(|&v| v < 0.0);
    TruncatedNonlinearity {
        base: f.clone(),
        ceiling: u1.clone(),
        negative_ceiling,
    }
}

impl TruncatedNonlinearity {
    /// g with the ceiling value at x already known (assembly fast path).
    pub fn g_with(&self, ceil: f64, x: Point, t: f64) -> f64 {
        if t < 0.0 {
            0.0
        } else if t <= ceil {
            self.base.f(x, t)
        } else {
            self.base.f(x, ceil)
        }
    }

    /// G = integral of g; continuous across both branch points.
    pub fn big_g_with(&self, ceil: f64, x: Point, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if ceil <= 0.0 {
            self.base.f(x, ceil) * t
        } else if t <= ceil {
            self.base.big_f(x, t)
        } else {
            self.base.big_f(x, ceil) + self.base.f(x, ceil) * (t - ceil)
        }
    }

    pub fn g(&self, x: Point, t: f64) -> f64 {
        self.g_with(self.ceiling.eval_at(x), x, t)
    }

    pub fn big_g(&self, x: Point, t: f64) -> f64 {
        self.big_g_with(self.ceiling.eval_at(x), x, t)
    }
}
