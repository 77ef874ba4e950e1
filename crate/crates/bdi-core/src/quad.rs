//! Adaptive Simpson quadrature over real and complex integrands, plus
//! Gauss-Legendre nodes for the fixed-grid PGF kernel.

use num_complex::Complex64;

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;

/// Values an integrand may produce.
pub(crate) trait Integrand: Copy {
    fn zero() -> Self;
    fn add(self, other: Self) -> Self;
    fn sub(self, other: Self) -> Self;
    fn scale(self, k: f64) -> Self;
    fn magnitude(self) -> f64;
}

impl Integrand for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn sub(self, other: Self) -> Self {
        self - other
    }
    fn scale(self, k: f64) -> Self {
        self * k
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl Integrand for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn sub(self, other: Self) -> Self {
        self - other
    }
    fn scale(self, k: f64) -> Self {
        self * k
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

/// Adaptive Simpson on one smooth panel, with Richardson extrapolation.
pub(crate) fn adaptive<T, F>(f: &F, a: f64, b: f64, tol: f64) -> Result<T>
where
    T: Integrand,
    F: Fn(f64) -> Result<T>,
{
    if a == b {
        return Ok(T::zero());
    }
    let fa = f(a)?;
    let fb = f(b)?;
    let mid = 0.5 * (a + b);
    let fm = f(mid)?;
    let whole = simpson(fa, fm, fb, b - a);
    refine(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

/// Adaptive Simpson over `[a, b]` split at the given interior breakpoints
/// (schedule knots), so each panel is smooth.
pub(crate) fn adaptive_segmented<T, F>(
    f: &F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    tol: f64,
) -> Result<T>
where
    T: Integrand,
    F: Fn(f64) -> Result<T>,
{
    let mut cuts: Vec<f64> = vec![a];
    for &k in breakpoints {
        if k > a && k < b {
            cuts.push(k);
        }
    }
    cuts.push(b);
    cuts.sort_by(|x, y| x.total_cmp(y));
    cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * (1.0 + x.abs()));

    let per_panel = tol / (cuts.len() - 1) as f64;
    let mut total = T::zero();
    for pair in cuts.windows(2) {
        total = total.add(adaptive(f, pair[0], pair[1], per_panel)?);
    }
    Ok(total)
}

fn simpson<T: Integrand>(fa: T, fm: T, fb: T, h: f64) -> T {
    fa.add(fm.scale(4.0)).add(fb).scale(h / 6.0)
}

#[allow(clippy::too_many_arguments)]
fn refine<T, F>(f: &F, a: f64, b: f64, fa: T, fm: T, fb: T, whole: T, tol: f64, depth: u32) -> Result<T>
where
    T: Integrand,
    F: Fn(f64) -> Result<T>,
{
    let mid = 0.5 * (a + b);
    let lm = 0.5 * (a + mid);
    let rm = 0.5 * (mid + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = simpson(fa, flm, fm, mid - a);
    let right = simpson(fm, frm, fb, b - mid);
    let both = left.add(right);
    let err = both.sub(whole).magnitude() / 15.0;
    if err <= tol || (b - a) < 1e-14 * (1.0 + a.abs()) {
        return Ok(both.add(both.sub(whole).scale(1.0 / 15.0)));
    }
    if depth == 0 {
        return Err(Error::QuadratureNonConvergent(format!(
            "refinement exhausted on [{a}, {b}] with error {err:e} > {tol:e}"
        )));
    }
    let l = refine(f, a, mid, fa, flm, fm, left, tol / 2.0, depth - 1)?;
    let r = refine(f, mid, b, fm, frm, fb, right, tol / 2.0, depth - 1)?;
    Ok(l.add(r))
}

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre recurrence.
pub(crate) fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    let n = order;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Legendre polynomial P_n and its derivative at `x`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}
