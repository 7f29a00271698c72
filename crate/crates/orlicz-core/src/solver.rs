//! The two-stage existence pipeline: plateau witness and threshold, global
//! minimization of I, truncation, sampled mountain-pass geometry, and a
//! path-deformation descent realizing the inf-max level.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::Serialize;

use crate::assembly::{
    dom_diagnostics, integrate_gradient, integrate_pointwise, visit_cells, DomDiagnostics,
    EnergyFunctional,
    Rhs,
};
use crate::error::{Error, Result};
use crate::mesh::{DiscreteFunction, Mesh, MeshDescriptor};
use crate::modular::w01_norm;
use crate::nfunction::NFunction;
use crate::nonlinearity::{
    check_hypotheses, truncate, HypothesisReport, Nonlinearity, Profile,
};

/// Nodal tolerance standing in for the a.e. ordering u2 <= u1.
pub const ORDERING_TOL: f64 = 1e-8;
/// Sup-norm gap below which a minimizer is flagged trivial.
pub const TRIVIAL_TOL: f64 = 1e-8;
/// Sup-norm gap certifying u1 != u2.
pub const DISTINCT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy)]
pub struct DescentOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    pub shrink: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions {
            tol: 1e-6,
            max_iter: 200_000,
            armijo: 1e-4,
            shrink: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DescentResult {
    pub u: DiscreteFunction,
    pub energy: f64,
    pub residual_sup: f64,
    pub converged: bool,
    /// strictly decreasing energy values, one per accepted step
    pub trace: Vec<f64>,
}

/// Backtracking gradient descent on the discrete energy. Overflowing trial
/// steps read as +inf and shrink the step; the accepted trace is strictly
/// decreasing by the Armijo condition.
pub fn descend(
    e: &EnergyFunctional,
    start: &DiscreteFunction,
    opts: &DescentOptions,
) -> Result<DescentResult> {
    start.require_zero_trace()?;
    let mut u = start.clone();
    let mut energy = e.energy(&u)?;
    let mut trace = vec![energy];
    let mut alpha = 1.0_f64;
    for _ in 0..opts.max_iter {
        let r = e.residual(&u)?;
        let sup = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if sup < opts.tol {
            return Ok(DescentResult {
                u,
                energy,
                residual_sup: sup,
                converged: true,
                trace,
            });
        }
        let rr: f64 = r.iter().map(|v| v * v).sum();
        alpha = (alpha * 2.0).min(1e6);
        loop {
            let cand = DiscreteFunction {
                mesh: u.mesh.clone(),
                values: u
                    .values
                    .iter()
                    .zip(&r)
                    .map(|(v, g)| v - alpha * g)
                    .collect(),
                zero_trace: true,
            };
            match e.energy(&cand) {
                Ok(ec) if ec <= energy - opts.armijo * alpha * rr => {
                    u = cand;
                    energy = ec;
                    trace.push(ec);
                    break;
                }
                Ok(_) | Err(Error::OverflowDomain { .. }) => {
                    alpha *= opts.shrink;
                    if alpha < 1e-18 {
                        // no decreasing step exists at this precision; hand
                        // back the terminal iterate instead of failing
                        return Ok(DescentResult {
                            residual_sup: sup,
                            converged: sup < opts.tol,
                            u,
                            energy,
                            trace,
                        });
                    }
                }
                Err(other) => return Err(other),
            }
        }
    }
    let sup = e.residual_sup(&u)?;
    Ok(DescentResult {
        u,
        energy,
        residual_sup: sup,
        converged: false,
        trace,
    })
}

fn interior_nodes(mesh: &Mesh) -> Vec<usize> {
    (0..mesh.nodes.len())
        .filter(|&i| !mesh.is_boundary(i))
        .collect()
}

/// Effective residual tolerance at `u`: the requested tol, floored by the
/// double-precision cancellation noise of the residual assembly there.
pub fn noise_floor(e: &EnergyFunctional, u: &DiscreteFunction, tol: f64) -> Result<f64> {
    Ok(tol.max(1e-13 * e.residual_scale(u)?))
}

/// Jacobian of the residual on the interior nodes, assembled per cell: the
/// Phi block in closed form from the density and its derivative, the
/// right-hand-side block by pointwise differencing of f. Far more accurate
/// than global finite differences of the residual, whose cancellation noise
/// caps Newton at a linear rate on stiff problems.
fn assemble_jacobian(
    e: &EnergyFunctional,
    u: &DiscreteFunction,
    interior: &[usize],
) -> Result<DMatrix<f64>> {
    let n = interior.len();
    let mut index = vec![usize::MAX; u.values.len()];
    for (k, &i) in interior.iter().enumerate() {
        index[i] = k;
    }
    let mut jac = DMatrix::zeros(n, n);
    visit_cells(u, e.rhs.ceiling(), |cell| {
        // evaluate just off zero so degenerate cells keep the density limit
        // (nonzero for quadratic growth, vanishing for faster growth)
        let g = cell.grad_norm.max(1e-12);
        let dens = e.phi.density_at(g)?;
        let ddens = e.phi.density_deriv_at(g)?;
        for a in 0..cell.n_nodes {
            let row = index[cell.nodes[a]];
            if row == usize::MAX {
                continue;
            }
            let bga = cell.basis_grads[a];
            let ga = cell.grad[0] * bga[0] + cell.grad[1] * bga[1];
            for b in 0..cell.n_nodes {
                let col = index[cell.nodes[b]];
                if col == usize::MAX {
                    continue;
                }
                let bgb = cell.basis_grads[b];
                let gb = cell.grad[0] * bgb[0] + cell.grad[1] * bgb[1];
                let dot = bga[0] * bgb[0] + bga[1] * bgb[1];
                let mut v = dens * dot;
                if g > 0.0 {
                    v += ddens * ga * gb / g;
                }
                jac[(row, col)] += cell.meas * v;
            }
        }
        for q in &cell.quads {
            let delta = 1e-6 * (1.0 + q.u.abs());
            let fp = e.rhs.density(q.ceil, q.x, q.u + delta);
            let fm = e.rhs.density(q.ceil, q.x, q.u - delta);
            let df = (fp - fm) / (2.0 * delta);
            if !df.is_finite() {
                return Err(Error::OverflowDomain {
                    t: q.u,
                    limit: f64::INFINITY,
                });
            }
            for a in 0..cell.n_nodes {
                let row = index[cell.nodes[a]];
                if row == usize::MAX {
                    continue;
                }
                for b in 0..cell.n_nodes {
                    let col = index[cell.nodes[b]];
                    if col == usize::MAX {
                        continue;
                    }
                    jac[(row, col)] -= e.lambda * q.w * df * q.shape[a] * q.shape[b];
                }
            }
        }
        Ok(())
    })?;
    Ok(jac)
}

/// Levenberg-Marquardt iteration on the residual with an analytically
/// assembled Jacobian. Converges to the nearest critical point, minimizer or
/// saddle alike; the adaptive damping keeps stiff or nearly singular
/// Jacobians (exponential densities, indices close to 1) from stalling plain
/// Newton. Returns the best iterate with its residual even when the target
/// is missed; the caller judges it against the local noise floor.
pub fn newton_polish(
    e: &EnergyFunctional,
    start: &DiscreteFunction,
    tol: f64,
    max_iter: usize,
) -> Result<(DiscreteFunction, f64)> {
    let interior = interior_nodes(&start.mesh);
    let n = interior.len();
    let mut u = start.clone();
    let mut r_full = e.residual(&u)?;
    let mut rnorm = sup_of(&r_full);
    let mut mu = 0.0_f64;
    for _ in 0..max_iter {
        if rnorm < tol {
            return Ok((u, rnorm));
        }
        let jac = assemble_jacobian(e, &u, &interior)?;
        let r_vec = DVector::from_iterator(n, interior.iter().map(|&i| r_full[i]));
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r_vec;
        let diag_scale = (0..n).map(|k| jtj[(k, k)]).fold(0.0_f64, f64::max).max(1e-300);
        let r2 = r_vec.norm_squared();
        let mut nu = 2.0_f64;
        let mut accepted = false;
        for _ in 0..30 {
            let mut lhs = jtj.clone();
            let damping = mu * diag_scale;
            for k in 0..n {
                lhs[(k, k)] += damping;
            }
            let step = match lhs.lu().solve(&(-&jtr)) {
                Some(s) => s,
                None => {
                    mu = (mu * nu).max(1e-14);
                    nu *= 2.0;
                    continue;
                }
            };
            let mut cand = u.clone();
            for (k, &i) in interior.iter().enumerate() {
                cand.values[i] += step[k];
            }
            match e.residual(&cand) {
                Ok(rc) => {
                    let rc2: f64 = interior.iter().map(|&i| rc[i] * rc[i]).sum();
                    // gain ratio against the local model's predicted decrease
                    let predicted = step.dot(&(step.scale(damping) - &jtr));
                    let rho = (r2 - rc2) / predicted.max(1e-300);
                    if rc2 < r2 {
                        u = cand;
                        r_full = rc;
                        rnorm = sup_of(&r_full);
                        mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                        if mu < 1e-16 {
                            mu = 0.0;
                        }
                        accepted = true;
                        break;
                    }
                }
                Err(Error::OverflowDomain { .. }) => {}
                Err(other) => return Err(other),
            }
            mu = (mu * nu).max(1e-14);
            nu *= 2.0;
        }
        if !accepted {
            break;
        }
    }
    Ok((u, rnorm))
}

fn sup_of(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone)]
pub struct Minimization {
    pub u1: DiscreteFunction,
    pub energy: f64,
    pub residual_sup: f64,
    pub trace: Vec<f64>,
    pub trivial: bool,
}

/// Global minimization of I by multi-start descent: zero, the plateau
/// witness, and three random perturbations of it; the lowest basin wins.
/// A Newton polish tightens the winner without leaving its basin.
pub fn minimize_i(
    e: &EnergyFunctional,
    witness: &DiscreteFunction,
    opts: &DescentOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Minimization> {
    let mesh = witness.mesh.clone();
    let interior = interior_nodes(&mesh);
    let amp = 0.3 * witness.sup_norm().max(1e-3);
    let mut starts = vec![DiscreteFunction::zeros(mesh.clone()), witness.clone()];
    for _ in 0..3 {
        let mut v = witness.clone();
        for &i in &interior {
            v.values[i] += amp * rng.random_range(-1.0..1.0);
        }
        starts.push(v);
    }
    // coarse basin identification only; Newton finishes the job
    let coarse = DescentOptions {
        tol: opts.tol.max(1e-4),
        max_iter: opts.max_iter.min(5000),
        ..*opts
    };
    let mut best: Option<DescentResult> = None;
    for s in &starts {
        let res = match descend(e, s, &coarse) {
            Ok(r) => r,
            // a start that overflows or stalls simply does not compete
            Err(Error::OverflowDomain { .. }) | Err(Error::NonDecreasingStep) => continue,
            Err(other) => return Err(other),
        };
        if best.as_ref().map_or(true, |b| res.energy < b.energy) {
            best = Some(res);
        }
    }
    let mut best = best.ok_or(Error::NonDecreasingStep)?;
    let polish = |best: &mut DescentResult| -> Result<()> {
        match newton_polish(e, &best.u, opts.tol * 0.5, 500) {
            Ok((polished, rn)) => {
                let ep = e.energy(&polished)?;
                // accept only improvements that stayed in the basin
                if rn < best.residual_sup
                    && ep <= best.energy + 1e-10 * (1.0 + best.energy.abs())
                {
                    best.u = polished;
                    best.energy = ep;
                    best.trace.push(ep);
                    best.residual_sup = rn;
                }
                Ok(())
            }
            Err(Error::OverflowDomain { .. }) => Ok(()),
            Err(other) => Err(other),
        }
    };
    if best.residual_sup >= opts.tol {
        polish(&mut best)?;
    }
    // slow path: alternate descent stints with polishes; on badly conditioned
    // problems (indices near 1, long shallow valleys) each leg unblocks the
    // other and the residual contracts geometrically per round
    let stint = DescentOptions {
        max_iter: opts.max_iter.min(20_000),
        ..*opts
    };
    let mut rounds = 0;
    while best.residual_sup >= opts.tol
        && best.residual_sup >= noise_floor(e, &best.u, opts.tol)?
    {
        rounds += 1;
        let before = best.residual_sup;
        let energy_before = best.energy;
        let fine = descend(e, &best.u, &stint)?;
        best.u = fine.u;
        best.energy = fine.energy;
        best.residual_sup = fine.residual_sup;
        best.trace.extend(fine.trace.into_iter().skip(1));
        if best.residual_sup >= opts.tol {
            polish(&mut best)?;
        }
        // stop once a full round neither contracts the residual nor lowers
        // the energy; residual plateaus are normal while the iterate still
        // travels down a shallow valley
        let residual_stuck = best.residual_sup >= before * 0.95;
        let energy_stuck = best.energy >= energy_before - 1e-10 * (1.0 + energy_before.abs());
        if rounds >= 60 || (residual_stuck && energy_stuck) {
            break;
        }
    }
    if best.residual_sup >= opts.tol && best.residual_sup >= noise_floor(e, &best.u, opts.tol)? {
        return Err(Error::MaxIterations {
            op: "minimize_i",
            iters: opts.max_iter,
            residual: best.residual_sup,
        });
    }
    let trivial = best.u.sup_norm() < TRIVIAL_TOL;
    Ok(Minimization {
        trivial,
        energy: best.energy,
        residual_sup: best.residual_sup,
        trace: best.trace,
        u1: best.u,
    })
}

/// The plateau construction of the negative-infimum witness: t_1 on an inner
/// region, linear ramp of the given width down to the boundary.
#[derive(Debug, Clone)]
pub struct PlateauFunction {
    pub t1: f64,
    pub inner_nodes: Vec<usize>,
    pub profile: DiscreteFunction,
    pub ramp_width: f64,
}

pub fn build_plateau(mesh: Arc<Mesh>, t1: f64, ramp_width: f64) -> PlateauFunction {
    let m = mesh.clone();
    let profile = DiscreteFunction::from_fn_zero_trace(mesh.clone(), |p| {
        t1 * (m.boundary_distance(p) / ramp_width).min(1.0)
    });
    let inner_nodes = (0..mesh.nodes.len())
        .filter(|&i| mesh.boundary_distance(mesh.nodes[i]) >= ramp_width * (1.0 - 1e-12))
        .collect();
    PlateauFunction {
        t1,
        inner_nodes,
        profile,
        ramp_width,
    }
}

#[derive(Debug, Clone)]
pub struct LambdaStarResult {
    pub lambda_star: f64,
    pub plateau: PlateauFunction,
    pub integral_f: f64,
    pub gradient_modular: f64,
}

/// Witness threshold: shrink the ramp until the plateau has a positive
/// integral of F, then return the exact lambda at which I(u0) crosses zero.
/// I_lambda(u0) = Q(u0) - lambda * int F(x, u0) is affine in lambda with
/// root Q(u0) / int F(x, u0) by construction.
pub fn lambda_star(
    phi: &NFunction,
    f: &Nonlinearity,
    mesh: Arc<Mesh>,
    t1: f64,
    shrink_levels: usize,
) -> Result<LambdaStarResult> {
    if !(t1 > 0.0) {
        return Err(Error::Precondition(format!(
            "plateau height t1 must be positive, got {t1}"
        )));
    }
    let extent = mesh.extent.1 - mesh.extent.0;
    for level in 0..shrink_levels.max(1) {
        let width = extent * 0.25 / 2f64.powi(level as i32);
        let plateau = build_plateau(mesh.clone(), t1, width);
        let integral_f = integrate_pointwise(&plateau.profile, |x, v| Ok(f.big_f(x, v)))?;
        if integral_f > 1e-12 {
            let gradient_modular = integrate_gradient(&plateau.profile, |g| phi.phi(g))?;
            return Ok(LambdaStarResult {
                lambda_star: gradient_modular / integral_f,
                plateau,
                integral_f,
                gradient_modular,
            });
        }
    }
    Err(Error::NoPositivePlateau)
}

#[derive(Debug, Clone, Serialize)]
pub struct MpGeometry {
    pub r: f64,
    pub rho: f64,
    pub holds: bool,
    /// (radius, min sampled J) for every radius tried
    pub per_r: Vec<(f64, f64)>,
}

/// Sampled mountain-pass geometry: J on random zero-trace directions scaled
/// to gradient-Luxemburg norm r. A certificate of failure, not a proof of
/// the infimum.
pub fn verify_mp_geometry(
    j: &EnergyFunctional,
    r_grid: &[f64],
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<MpGeometry> {
    let mesh = j.mesh.clone();
    let interior = interior_nodes(&mesh);
    let mut per_r = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        let mut min_j = f64::INFINITY;
        for _ in 0..samples {
            let mut v = DiscreteFunction::zeros(mesh.clone());
            for &i in &interior {
                v.values[i] = rng.random_range(-1.0..1.0);
            }
            let norm = w01_norm(&j.phi, &v)?;
            if norm == 0.0 {
                continue;
            }
            let v = v.scaled(r / norm);
            match j.energy(&v) {
                Ok(e) => min_j = min_j.min(e),
                // an overflowing sphere sample cannot be the minimum
                Err(Error::OverflowDomain { .. }) => {}
                Err(other) => return Err(other),
            }
        }
        per_r.push((r, min_j));
    }
    let best = per_r
        .iter()
        .copied()
        .filter(|p| p.1.is_finite())
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((f64::NAN, f64::NEG_INFINITY));
    Ok(MpGeometry {
        r: best.0,
        rho: best.1,
        holds: best.1 > 0.0,
        per_r,
    })
}

#[derive(Debug, Clone)]
pub struct MountainPassState {
    pub path: Vec<DiscreteFunction>,
    pub level: f64,
    pub argmax_index: usize,
    pub iterations: usize,
}

/// Discrete mountain-pass descent: deform a path from 0 to u1 by moving every
/// interior path node one descent step of J, re-equidistribute by arclength,
/// and track the path maximum; the argmax node is finally polished to a
/// critical point. The level directly realizes the inf-max definition of c.
pub fn mountain_pass(
    j: &EnergyFunctional,
    u1: &DiscreteFunction,
    path_points: usize,
    tol: f64,
    max_iter: usize,
) -> Result<(DiscreteFunction, f64, MountainPassState)> {
    let j_u1 = j.energy(u1)?;
    if !(j_u1 < 0.0) {
        return Err(Error::Precondition(format!(
            "mountain pass requires J(u1) < 0, got {j_u1}"
        )));
    }
    let k_pts = path_points.max(5);
    let mut path: Vec<DiscreteFunction> = (0..k_pts)
        .map(|k| u1.scaled(k as f64 / (k_pts - 1) as f64))
        .collect();
    let opts = DescentOptions::default();
    let mut deform_tol = tol.max(1e-3);
    let mut alpha = vec![1e-2_f64; k_pts];
    let mut last_level = f64::INFINITY;
    let mut stall = 0usize;
    let mut iterations = 0usize;

    let mut polish_failures = 0usize;
    let mut bisection_done = false;

    let iter_cap = max_iter.min(5000);
    loop {
        if iterations >= iter_cap {
            if !bisection_done {
                if let Some((u2, c)) = saddle_by_bisection(j, u1, tol)? {
                    let state = MountainPassState {
                        path,
                        level: c,
                        argmax_index: 0,
                        iterations,
                    };
                    return Ok((u2, c, state));
                }
            }
            return Err(Error::MaxIterations {
                op: "mountain_pass",
                iters: iter_cap,
                residual: deform_tol,
            });
        }
        iterations += 1;

        let mut energies = Vec::with_capacity(k_pts);
        for p in &path {
            energies.push(j.energy(p)?);
        }
        let argmax = energies
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        // the ridge can be thinner than the node spacing, so the level is
        // sampled along every segment, not just at the nodes
        let (arg, level) = path_level(j, &path, &energies, 8)?;
        if level <= 1e-14 {
            return Err(Error::CollapsedPath { level });
        }

        let r_star = j.residual(&arg)?;
        let sup_star = sup_of(&r_star);
        let stalled = {
            if (last_level - level).abs() <= 1e-9 * (1.0 + level.abs()) {
                stall += 1;
            } else {
                stall = 0;
            }
            last_level = level;
            stall >= 10
        };

        // polish attempts are cheap next to the deformation, so try early and
        // often; a rejected polish just resumes the string
        if sup_star < deform_tol || stalled || iterations % 20 == 0 {
            match try_polish(j, &arg, level, tol) {
                Some((u2, c)) => {
                    let state = MountainPassState {
                        path,
                        level: c,
                        argmax_index: argmax,
                        iterations,
                    };
                    return Ok((u2, c, state));
                }
                None => {
                    if sup_star < noise_floor(j, &arg, tol)? {
                        // the deformation alone reached the tolerance
                        let u2 = arg.clone();
                        let state = MountainPassState {
                            path,
                            level,
                            argmax_index: argmax,
                            iterations,
                        };
                        return Ok((u2, level, state));
                    }
                    deform_tol = (deform_tol * 0.1).max(tol);
                    stall = 0;
                    polish_failures += 1;
                    // for nearly linear Phi the ridge along the string is a
                    // local minimum of |r|^2 that Newton cannot leave; locate
                    // the saddle instead on the basin boundary of the ray
                    if polish_failures >= 3 && !bisection_done {
                        bisection_done = true;
                        if let Some((u2, c)) = saddle_by_bisection(j, u1, tol)? {
                            let state = MountainPassState {
                                path,
                                level: c,
                                argmax_index: argmax,
                                iterations,
                            };
                            return Ok((u2, c, state));
                        }
                    }
                }
            }
        }

        // one descent step per interior path node; displacement capped by the
        // string spacing so the path stays resolved across the ridge
        let mut arclength = 0.0;
        for k in 1..k_pts {
            arclength += path[k].nodal_distance(&path[k - 1]);
        }
        let max_disp = 0.5 * arclength / (k_pts - 1) as f64;
        for k in 1..k_pts - 1 {
            let r = j.residual(&path[k])?;
            let rr: f64 = r.iter().map(|v| v * v).sum();
            if rr == 0.0 {
                continue;
            }
            let e0 = energies[k];
            alpha[k] = (alpha[k] * 2.0).min(1e4).min(max_disp / rr.sqrt());
            loop {
                let cand = DiscreteFunction {
                    mesh: path[k].mesh.clone(),
                    values: path[k]
                        .values
                        .iter()
                        .zip(&r)
                        .map(|(v, g)| v - alpha[k] * g)
                        .collect(),
                    zero_trace: true,
                };
                match j.energy(&cand) {
                    Ok(ec) if ec <= e0 - opts.armijo * alpha[k] * rr => {
                        path[k] = cand;
                        break;
                    }
                    Ok(_) | Err(Error::OverflowDomain { .. }) => {
                        alpha[k] *= 0.5;
                        if alpha[k] < 1e-18 {
                            break;
                        }
                    }
                    Err(other) => return Err(other),
                }
            }
        }

        redistribute(&mut path);
    }
}

/// Maximum of J along the piecewise-linear path, sampled at the nodes and at
/// `seg_samples - 1` interior points of every segment.
fn path_level(
    j: &EnergyFunctional,
    path: &[DiscreteFunction],
    node_energies: &[f64],
    seg_samples: usize,
) -> Result<(DiscreteFunction, f64)> {
    let mut level = f64::NEG_INFINITY;
    let mut arg = path[0].clone();
    for (p, &e) in path.iter().zip(node_energies) {
        if e > level {
            level = e;
            arg = p.clone();
        }
    }
    for k in 0..path.len() - 1 {
        for s in 1..seg_samples {
            let theta = s as f64 / seg_samples as f64;
            let w = path[k].scaled(1.0 - theta).axpy(theta, &path[k + 1]);
            let jw = j.energy(&w)?;
            if jw > level {
                level = jw;
                arg = w;
            }
        }
    }
    // the ridge can sit at a tiny fraction of the first segment when the
    // endpoint amplitude dwarfs it; refine that segment geometrically
    for s in 0..30 {
        let theta = 2f64.powi(-s);
        let w = path[0].scaled(1.0 - theta).axpy(theta, &path[1]);
        let jw = j.energy(&w)?;
        if jw > level {
            level = jw;
            arg = w;
        }
    }
    Ok((arg, level))
}

/// Locate the saddle on the gradient-flow basin boundary between 0 and u1.
/// The separatrix crosses the ray theta*u1 exactly once; bisection on the
/// basin reached by descent brackets the crossing, and a short flow from the
/// bracketed point tracks the stable manifold into Newton's convergence ball.
fn saddle_by_bisection(
    j: &EnergyFunctional,
    u1: &DiscreteFunction,
    tol: f64,
) -> Result<Option<(DiscreteFunction, f64)>> {
    let opts = DescentOptions {
        tol: tol.min(1e-8),
        max_iter: 3000,
        ..DescentOptions::default()
    };
    // 1: landed in the nontrivial well, -1: flowed back to zero, 0: undecided
    let classify = |theta: f64| -> Result<i32> {
        match descend(j, &u1.scaled(theta), &opts) {
            Ok(d) => Ok(if d.energy < -tol && d.u.sup_norm() > TRIVIAL_TOL {
                1
            } else if d.u.sup_norm() < 1e-3 {
                -1
            } else {
                0
            }),
            Err(Error::OverflowDomain { .. }) => Ok(1),
            Err(other) => Err(other),
        }
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    if classify(hi)? != 1 {
        return Ok(None);
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if classify(mid)? <= 0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut cur = u1.scaled(lo);
    let flow = DescentOptions {
        tol: tol.min(1e-8),
        max_iter: 60,
        ..DescentOptions::default()
    };
    let interior = interior_nodes(&u1.mesh);
    let accept = |pw: &DiscreteFunction, rn: f64| -> Result<Option<f64>> {
        if rn < noise_floor(j, pw, tol)? {
            let c = j.energy(pw)?;
            if c > 1e-12 && pw.sup_norm() > TRIVIAL_TOL {
                return Ok(Some(c));
            }
        }
        Ok(None)
    };
    for _ in 0..40 {
        cur = match descend(j, &cur, &flow) {
            Ok(d) => d.u,
            Err(Error::OverflowDomain { .. }) => return Ok(None),
            Err(other) => return Err(other),
        };
        let (mut pw, mut rn) = match newton_polish(j, &cur, tol * 0.5, 300) {
            Ok(v) => v,
            Err(_) => continue,
        };
        if let Some(c) = accept(&pw, rn)? {
            return Ok(Some((pw, c)));
        }
        // Newton is trapped in a positive local minimum of |r|^2: the
        // Jacobian there is nearly singular, and the saddle sits along the
        // degenerate direction. Walk the smallest singular vector both ways,
        // polish again, and iterate from whichever start improved.
        for _cycle in 0..20 {
            let jac = assemble_jacobian(j, &pw, &interior)?;
            let svd = jac.svd(false, true);
            let v_t = match svd.v_t {
                Some(v) => v,
                None => break,
            };
            let k = svd
                .singular_values
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            let scale = pw.sup_norm().max(1e-3);
            let mut improved = false;
            'esc: for &s in &[1e-3, 1e-2, 0.1, 0.3] {
                for sign in [1.0, -1.0] {
                    let mut start = pw.clone();
                    for (col, &i) in interior.iter().enumerate() {
                        start.values[i] += sign * s * scale * v_t[(k, col)];
                    }
                    if let Ok((pw2, rn2)) = newton_polish(j, &start, tol * 0.5, 300) {
                        if let Some(c) = accept(&pw2, rn2)? {
                            return Ok(Some((pw2, c)));
                        }
                        if rn2 < rn * 0.9 {
                            pw = pw2;
                            rn = rn2;
                            improved = true;
                            break 'esc;
                        }
                    }
                }
            }
            if !improved {
                break;
            }
        }
        // resume the flow from the refined point only if it is still far
        // from critical; otherwise the descent just slides off the saddle
        if rn > 1e-3 {
            cur = pw;
        }
    }
    Ok(None)
}

/// Newton-polish a near-critical path node; reject results that fell into a
/// well (J <= 0), vanished, or drifted past the level scale.
fn try_polish(
    j: &EnergyFunctional,
    candidate: &DiscreteFunction,
    level: f64,
    tol: f64,
) -> Option<(DiscreteFunction, f64)> {
    let (polished, rn) = newton_polish(j, candidate, tol * 0.5, 300).ok()?;
    if rn >= noise_floor(j, &polished, tol).ok()? {
        return None;
    }
    let c = j.energy(&polished).ok()?;
    if c > 1e-12 && c <= 2.0 * level + tol && polished.sup_norm() > TRIVIAL_TOL {
        Some((polished, c))
    } else {
        None
    }
}

/// Re-equidistribute the path nodes by cumulative nodal arclength.
fn redistribute(path: &mut Vec<DiscreteFunction>) {
    let k_pts = path.len();
    let mut cum = vec![0.0_f64; k_pts];
    for k in 1..k_pts {
        cum[k] = cum[k - 1] + path[k].nodal_distance(&path[k - 1]);
    }
    let total = cum[k_pts - 1];
    if total == 0.0 {
        return;
    }
    let mut out = Vec::with_capacity(k_pts);
    out.push(path[0].clone());
    let mut seg = 0usize;
    for k in 1..k_pts - 1 {
        let target = total * k as f64 / (k_pts - 1) as f64;
        while seg + 1 < k_pts - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let span = (cum[seg + 1] - cum[seg]).max(1e-300);
        let theta = (target - cum[seg]) / span;
        out.push(path[seg].scaled(1.0 - theta).axpy(theta, &path[seg + 1]));
    }
    out.push(path[k_pts - 1].clone());
    *path = out;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    /// both solutions found and every contract check passed
    TwoSolutions,
    /// lambda <= witness threshold: only the minimizer was attempted
    LambdaTooSmall,
    /// the global minimizer is numerically zero; no second stage
    TrivialMinimizer,
    /// sampled geometry produced no positive rho; no second stage
    GeometryNotVerified,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverReport {
    pub outcome: Outcome,
    pub lambda: f64,
    pub lambda_star: f64,
    pub mesh: MeshDescriptor,
    pub u1: Vec<f64>,
    pub i_u1: f64,
    pub u2: Option<Vec<f64>>,
    pub i_u2: Option<f64>,
    pub c: Option<f64>,
    pub residual_norms: (f64, Option<f64>),
    pub ordering_ok: bool,
    pub distinct: bool,
    pub geometry: Option<(f64, f64)>,
    pub diagnostics_u1: DomDiagnostics,
    pub diagnostics_u2: Option<DomDiagnostics>,
    pub hypothesis: HypothesisReport,
    pub sup_norms: (f64, Option<f64>),
    pub energy_trace_len: usize,
    pub mp_iterations: Option<usize>,
    /// set when a contract check failed; the report then "fails loudly"
    pub contract_violation: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tol: f64,
    pub path_points: usize,
    pub shrink_levels: usize,
    pub geometry_samples: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-6,
            path_points: 25,
            shrink_levels: 6,
            geometry_samples: 200,
            max_iter: 200_000,
            seed: 0,
        }
    }
}

/// Spatial sample points for the hypothesis scans: one quadrature-interior
/// point per cell stride, plus the domain midpoint.
fn sample_points(mesh: &Mesh) -> Vec<[f64; 2]> {
    let (a, b) = mesh.extent;
    let mid = 0.5 * (a + b);
    let mut xs = vec![[mid, if mesh.dim == 2 { mid } else { 0.0 }]];
    for k in 1..8 {
        let x = a + (b - a) * k as f64 / 8.0;
        xs.push([x, if mesh.dim == 2 { x } else { 0.0 }]);
    }
    xs
}

/// The full two-stage pipeline of the existence argument, with every
/// conclusion re-verified on the discrete level.
pub fn solve_two(
    phi: &NFunction,
    f: &Nonlinearity,
    mesh: Arc<Mesh>,
    lambda: f64,
    profile: Profile,
    opts: &SolveOptions,
) -> Result<SolverReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let hyp = check_hypotheses(f, phi, profile, mesh.dim, &sample_points(&mesh))?;
    if let Some(reason) = hyp.failure_reason() {
        return Err(Error::HypothesisFailed {
            profile: match profile {
                Profile::T1 => "T1",
                Profile::T2 => "T2",
            },
            reason,
        });
    }
    let ls = lambda_star(phi, f, mesh.clone(), hyp.f2.t1, opts.shrink_levels)?;
    let e = EnergyFunctional::new(phi.clone(), Rhs::Plain(f.clone()), lambda, mesh.clone())?;
    let descent_opts = DescentOptions {
        tol: opts.tol,
        max_iter: opts.max_iter,
        ..DescentOptions::default()
    };
    let min = minimize_i(&e, &ls.plateau.profile, &descent_opts, &mut rng)?;
    let diag1 = dom_diagnostics(phi, &min.u1)?;

    let mut report = SolverReport {
        outcome: Outcome::TwoSolutions,
        lambda,
        lambda_star: ls.lambda_star,
        mesh: MeshDescriptor::from(mesh.as_ref()),
        u1: min.u1.values.clone(),
        i_u1: min.energy,
        u2: None,
        i_u2: None,
        c: None,
        residual_norms: (min.residual_sup, None),
        ordering_ok: true,
        distinct: false,
        geometry: None,
        diagnostics_u1: diag1,
        diagnostics_u2: None,
        hypothesis: hyp,
        sup_norms: (min.u1.sup_norm(), None),
        energy_trace_len: min.trace.len(),
        mp_iterations: None,
        contract_violation: None,
    };

    if lambda <= ls.lambda_star {
        report.outcome = Outcome::LambdaTooSmall;
        return Ok(report);
    }
    if min.trivial {
        report.outcome = Outcome::TrivialMinimizer;
        return Ok(report);
    }

    // second stage: truncated functional and mountain pass
    let trunc = truncate(f, &min.u1);
    let j = EnergyFunctional::new(
        phi.clone(),
        Rhs::Truncated(trunc),
        lambda,
        mesh.clone(),
    )?;
    let norm_u1 = w01_norm(phi, &min.u1)?;
    let r_cap = norm_u1.min(1.0);
    let r_grid: Vec<f64> = [0.02, 0.05, 0.1, 0.2, 0.4]
        .iter()
        .map(|s| s * r_cap)
        .collect();
    let geo = verify_mp_geometry(&j, &r_grid, opts.geometry_samples, &mut rng)?;
    report.geometry = Some((geo.r, geo.rho));
    if !geo.holds {
        report.outcome = Outcome::GeometryNotVerified;
        return Ok(report);
    }

    let (u2, c, state) = mountain_pass(&j, &min.u1, opts.path_points, opts.tol, opts.max_iter)?;
    let i_u2 = e.energy(&u2)?;
    // u2 <= u1 forces g(x, u2) = f(x, u2), so the residual is taken against
    // the untruncated right-hand side
    let r2 = e.residual_sup(&u2)?;
    let ordering_ok = u2
        .values
        .iter()
        .zip(&min.u1.values)
        .all(|(b, a)| *b <= *a + ORDERING_TOL);
    let distinct = min
        .u1
        .values
        .iter()
        .zip(&u2.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0_f64, f64::max)
        > DISTINCT_TOL;
    let diag2 = dom_diagnostics(phi, &u2)?;

    report.u2 = Some(u2.values.clone());
    report.i_u2 = Some(i_u2);
    report.c = Some(c);
    report.residual_norms.1 = Some(r2);
    report.ordering_ok = ordering_ok;
    report.distinct = distinct;
    report.diagnostics_u2 = Some(diag2);
    report.sup_norms.1 = Some(u2.sup_norm());
    report.mp_iterations = Some(state.iterations);

    let mut violations = Vec::new();
    if !(report.i_u1 < 0.0) {
        violations.push(format!("I(u1) = {:.3e} is not negative", report.i_u1));
    }
    if !(c > 0.0) {
        violations.push(format!("c = {c:.3e} is not positive"));
    }
    if (c - i_u2).abs() > opts.tol.max(1e-10) * (1.0 + c.abs()) {
        violations.push(format!("|c - I(u2)| = {:.3e} exceeds tolerance", (c - i_u2).abs()));
    }
    if !ordering_ok {
        violations.push("ordering u2 <= u1 violated".into());
    }
    if !distinct {
        violations.push("u1 and u2 are not numerically distinct".into());
    }
    if r2 > opts.tol {
        violations.push(format!("residual of u2 against untruncated f is {r2:.3e}"));
    }
    if !violations.is_empty() {
        report.contract_violation = Some(violations.join("; "));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::Rhs;
    use crate::mesh::make_mesh;
    use crate::nonlinearity::model_f;
    use rand::SeedableRng;

    fn const_f(c: f64) -> crate::nonlinearity::Nonlinearity {
        model_f("const", &[("c".to_string(), c)].into_iter().collect()).unwrap()
    }

    #[test]
    fn plateau_shape() {
        let mesh = make_mesh(1, (0.0, 1.0), 64).unwrap();
        let p = build_plateau(mesh.clone(), 2.0, 0.25);
        assert_eq!(p.profile.values[0], 0.0);
        assert_eq!(*p.profile.values.last().unwrap(), 0.0);
        // flat top at t1 on the inner half
        for &i in &p.inner_nodes {
            assert!((p.profile.values[i] - 2.0).abs() < 1e-12);
        }
        assert!(!p.inner_nodes.is_empty());
        let mid = mesh.nodes.len() / 2;
        assert!((p.profile.values[mid] - 2.0).abs() < 1e-12);
        // linear ramp: value at distance w/2 from the boundary is t1/2
        let quarter_ramp = (0.125_f64 / (1.0 / 64.0)).round() as usize;
        assert!((p.profile.values[quarter_ramp] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lambda_star_closed_form_for_constant_rhs() {
        // F(x, t) = t, Phi = t^2/2, plateau of height 1 with ramp width 1/4:
        // Q = 2 * (1/4) * (1/2 * 4^2) = 4, int F = 3/4, so lambda* = 16/3
        let mesh = make_mesh(1, (0.0, 1.0), 128).unwrap();
        let ls = lambda_star(&NFunction::power(2.0), &const_f(1.0), mesh, 1.0, 6).unwrap();
        assert!((ls.lambda_star - 16.0 / 3.0).abs() < 1e-9);
        assert!((ls.integral_f - 0.75).abs() < 1e-12);
        assert!((ls.gradient_modular - 4.0).abs() < 1e-9);
    }

    #[test]
    fn lambda_star_threshold_is_affine_root() {
        let mesh = make_mesh(1, (0.0, 1.0), 64).unwrap();
        let phi = NFunction::power(4.0);
        let f = model_f(
            "pq",
            &[("p".to_string(), 3.0), ("q".to_string(), 2.0)]
                .into_iter()
                .collect(),
        )
        .unwrap();
        let ls = lambda_star(&phi, &f, mesh.clone(), 1.875, 6).unwrap();
        for mult in [0.5, 1.0, 2.0] {
            let lam = mult * ls.lambda_star;
            let e = EnergyFunctional::new(phi.clone(), Rhs::Plain(f.clone()), lam, mesh.clone())
                .unwrap();
            let i0 = e.energy(&ls.plateau.profile).unwrap();
            let predicted = ls.gradient_modular - lam * ls.integral_f;
            assert!((i0 - predicted).abs() < 1e-8 * predicted.abs().max(1.0));
            if mult > 1.0 {
                assert!(i0 < 0.0);
            } else if mult < 1.0 {
                assert!(i0 > 0.0);
            }
        }
    }

    #[test]
    fn negative_rhs_has_no_positive_plateau() {
        let mesh = make_mesh(1, (0.0, 1.0), 32).unwrap();
        let err = lambda_star(&NFunction::power(2.0), &const_f(-1.0), mesh, 1.0, 6);
        assert!(matches!(err, Err(Error::NoPositivePlateau)));
    }

    #[test]
    fn minimize_recovers_poisson_solution() {
        // I(u) = 1/2 int u'^2 - int u is minimized by x(1-x)/2, I = -1/24
        let mesh = make_mesh(1, (0.0, 1.0), 32).unwrap();
        let e = EnergyFunctional::new(
            NFunction::power(2.0),
            Rhs::Plain(const_f(1.0)),
            1.0,
            mesh.clone(),
        )
        .unwrap();
        let witness = build_plateau(mesh.clone(), 0.125, 0.25).profile;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let opts = DescentOptions {
            tol: 1e-10,
            ..DescentOptions::default()
        };
        let min = minimize_i(&e, &witness, &opts, &mut rng).unwrap();
        assert!(min.residual_sup < 1e-10);
        assert!((min.energy + 1.0 / 24.0).abs() < 1e-4);
        for (i, p) in mesh.nodes.iter().enumerate() {
            let exact = p[0] * (1.0 - p[0]) / 2.0;
            assert!((min.u1.values[i] - exact).abs() < 1e-9);
        }
        assert!(!min.trivial);
    }

    #[test]
    fn newton_polish_solves_linear_problem_in_one_shot() {
        let mesh = make_mesh(1, (0.0, 1.0), 16).unwrap();
        let e = EnergyFunctional::new(
            NFunction::power(2.0),
            Rhs::Plain(const_f(1.0)),
            1.0,
            mesh.clone(),
        )
        .unwrap();
        let (u, rn) = newton_polish(&e, &DiscreteFunction::zeros(mesh.clone()), 1e-12, 5).unwrap();
        assert!(rn < 1e-12);
        for (i, p) in mesh.nodes.iter().enumerate() {
            assert!((u.values[i] - p[0] * (1.0 - p[0]) / 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn mountain_pass_needs_negative_endpoint() {
        let mesh = make_mesh(1, (0.0, 1.0), 16).unwrap();
        let e = EnergyFunctional::new(
            NFunction::power(2.0),
            Rhs::Plain(const_f(-1.0)),
            1.0,
            mesh.clone(),
        )
        .unwrap();
        let u1 = DiscreteFunction::from_fn_zero_trace(mesh, |p| p[0] * (1.0 - p[0]));
        assert!(matches!(
            mountain_pass(&e, &u1, 9, 1e-6, 500),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn solve_two_reference_outcomes() {
        let mesh = make_mesh(1, (0.0, 1.0), 48).unwrap();
        let phi = NFunction::power(4.0);
        let f = model_f(
            "pq",
            &[("p".to_string(), 3.0), ("q".to_string(), 2.0)]
                .into_iter()
                .collect(),
        )
        .unwrap();
        let ls = lambda_star(&phi, &f, mesh.clone(), 1.875, 6).unwrap();
        let opts = SolveOptions {
            seed: 42,
            ..SolveOptions::default()
        };

        let rep = solve_two(&phi, &f, mesh.clone(), 0.5 * ls.lambda_star, Profile::T1, &opts)
            .unwrap();
        assert!(matches!(rep.outcome, Outcome::LambdaTooSmall));
        assert!(rep.u2.is_none());

        let rep =
            solve_two(&phi, &f, mesh, 2.0 * ls.lambda_star, Profile::T1, &opts).unwrap();
        assert!(matches!(rep.outcome, Outcome::TwoSolutions));
        assert!(rep.contract_violation.is_none(), "{:?}", rep.contract_violation);
        assert!(rep.i_u1 < -1e-6);
        assert!(rep.c.unwrap() > 1e-6);
        assert!(rep.ordering_ok && rep.distinct);
    }
}
