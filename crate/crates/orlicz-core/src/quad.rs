//! Scalar quadrature helpers: adaptive Simpson for building N-functions and
//! antiderivatives, plus the fixed Gauss rule used in element assembly.

/// 3-point Gauss-Legendre rule on the reference interval [0, 1].
/// Exact for polynomials up to degree 5.
pub const GAUSS3: [(f64, f64); 3] = [
    (0.112701665379258311, 0.277777777777777778),
    (0.5, 0.444444444444444444),
    (0.887298334620741689, 0.277777777777777778),
];

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), fm)
}

fn adaptive_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: f64,
    fm: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let (left, flm) = simpson(f, a, fa, m, fm);
    let (right, frm) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol || !delta.is_finite() {
        return left + right + delta / 15.0;
    }
    adaptive_step(f, a, fa, m, fm, left, flm, 0.5 * tol, depth - 1)
        + adaptive_step(f, m, fm, b, fb, right, frm, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over [a, b] to absolute tolerance `tol`.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let g: &dyn Fn(f64) -> f64 = &f;
    let fa = g(a);
    let fb = g(b);
    let (whole, fm) = simpson(g, a, fa, b, fb);
    adaptive_step(g, a, fa, b, fb, whole, fm, tol.max(f64::MIN_POSITIVE), 48)
}

/// Geometric grid of `n` points spanning [lo, hi], lo > 0.
pub fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (la, lb) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Uniform grid of `n` points spanning [lo, hi].
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}
