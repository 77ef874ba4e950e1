//! Probability generating functions of the process and their conversion to
//! probability mass functions.
//!
//! The PGF of the full process factors into a no-immigration part and an
//! immigrants-and-descendants part. The latter is evaluated two independent
//! ways (a direct exponent integral, and the per-immigrant descendant form
//! integrated over arrival times) and also factors into a negative-binomial
//! PGF times a correction that is identically 1 while ν/λ stays constant.
//! PMFs come either from closed forms or from inverse-DFT of a PGF sampled
//! on roots of unity.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::quad;
use crate::rate_model::{IntegralTables, NuMode};

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const PGF_QUAD_TOL: f64 = 1e-12;

/// Truncated probability mass function over counts `0..=kmax`.
#[derive(Debug, Clone, PartialEq)]
pub struct PmfVector {
    /// Time the masses refer to, when tied to a process snapshot.
    pub t: Option<f64>,
    pub p: Vec<f64>,
    /// Mass beyond `kmax`, so that `sum(p) + tail_mass = 1`.
    pub tail_mass: f64,
}

impl PmfVector {
    /// Wrap raw masses, clamping roundoff negatives and deriving the tail.
    /// Masses below `-1e-9` are rejected rather than hidden; a total within
    /// rounding above 1 is renormalized, a larger excess is an error.
    pub fn from_masses(t: Option<f64>, mut p: Vec<f64>) -> Result<Self> {
        for (k, v) in p.iter_mut().enumerate() {
            if *v < -1e-9 {
                return Err(Error::NegativeMass { k, value: *v });
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let total: f64 = p.iter().sum();
        if total > 1.0 + 1e-6 {
            return Err(Error::Degenerate(format!(
                "probability masses sum to {total} > 1"
            )));
        }
        if total > 1.0 {
            p.iter_mut().for_each(|v| *v /= total);
        }
        let tail_mass = (1.0 - total).max(0.0);
        Ok(Self { t, p, tail_mass })
    }

    pub fn point_mass(t: Option<f64>, at: usize, kmax: usize) -> Self {
        let mut p = vec![0.0; kmax + 1];
        let tail_mass = if at <= kmax {
            p[at] = 1.0;
            0.0
        } else {
            1.0
        };
        Self { t, p, tail_mass }
    }

    pub fn kmax(&self) -> usize {
        self.p.len() - 1
    }

    /// Mean of the truncated part.
    pub fn mean(&self) -> f64 {
        self.p
            .iter()
            .enumerate()
            .map(|(k, &pk)| k as f64 * pk)
            .sum()
    }

    /// Variance of the truncated part.
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.p
            .iter()
            .enumerate()
            .map(|(k, &pk)| (k as f64 - mean).powi(2) * pk)
            .sum()
    }
}

/// A PGF sample on the closed unit disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgfPoint {
    pub z: Complex64,
    pub value: Complex64,
}

/// The `n`-th roots of unity, the canonical sample set for PGF checks.
pub fn unit_circle(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|j| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / n as f64))
        .collect()
}

fn check_z(z: Complex64) -> Result<()> {
    // A small margin past the unit circle is allowed so finite-difference
    // probes at z = 1 ± h stay legal; the PGFs here converge there.
    if z.norm() > 1.0 + 1e-3 {
        return Err(Error::InvalidParameter(format!(
            "PGF argument must satisfy |z| <= 1, got |z| = {}",
            z.norm()
        )));
    }
    Ok(())
}

/// PGF of the no-immigration process started from `i0` individuals:
/// `((α + (1-α-β) z) / (1 - β z))^{i0}`.
pub fn pgf_bd(z: Complex64, tables: &IntegralTables, t: f64, i0: u64) -> Result<Complex64> {
    check_z(z)?;
    if i0 == 0 || z == ONE {
        return Ok(ONE);
    }
    let p = tables.query(t)?;
    let alpha = p.alpha();
    let beta = p.beta();
    let c = ((-p.s).exp() - p.m) / (1.0 + p.m); // 1 - α - β without double subtraction
    let denom = ONE - beta * z;
    if denom.norm() < 1e-300 {
        return Err(Error::Degenerate(format!(
            "PGF denominator vanished at z = {z}, t = {t}"
        )));
    }
    Ok(((alpha + c * z) / denom).powu(i0 as u32))
}

/// PGF of the descendants alive at `t` of a single immigrant who arrived at
/// `u`, including the immigrant while it survives.
pub fn pgf_descendants(z: Complex64, u: f64, t: f64, tables: &IntegralTables) -> Result<Complex64> {
    check_z(z)?;
    if u > t {
        return Err(Error::InvalidParameter(format!(
            "arrival time {u} exceeds observation time {t}"
        )));
    }
    if z == ONE {
        return Ok(ONE);
    }
    if u == t {
        return Ok(z);
    }
    let pt = tables.query(t)?;
    let pu = tables.query(u)?;
    let s_ut = pt.s - pu.s;
    let l_ut = pu.s.exp() * (pt.l - pu.l);
    let denom = (-s_ut).exp() / (z - ONE) - l_ut;
    if denom.norm() < 1e-300 {
        return Err(Error::Degenerate(format!(
            "descendant PGF pole at z = {z}, u = {u}, t = {t}"
        )));
    }
    Ok(ONE + denom.inv())
}

fn id_segments(tables: &IntegralTables, t: f64) -> Vec<f64> {
    tables
        .params()
        .knots()
        .into_iter()
        .filter(|&k| k > 0.0 && k < t)
        .collect()
}

/// PGF of the immigrants-and-descendants component, as the exponential of
/// the arrival-time integral of `ν(u) (G_desc(z, u, t) - 1)`.
pub fn pgf_id_numeric(z: Complex64, tables: &IntegralTables, t: f64) -> Result<Complex64> {
    check_z(z)?;
    if z == ONE || tables.params().nu_is_zero() || t == 0.0 {
        return Ok(ONE);
    }
    let pt = tables.query(t)?;
    let exponent = quad::adaptive_segmented(
        &|u: f64| {
            let pu = tables.query(u)?;
            let s_ut = pt.s - pu.s;
            let l_ut = pu.s.exp() * (pt.l - pu.l);
            let g_minus_one = ((-s_ut).exp() / (z - ONE) - l_ut).inv();
            Ok(tables.params().nu_rate(u) * g_minus_one)
        },
        0.0,
        t,
        &id_segments(tables, t),
        PGF_QUAD_TOL,
    )?;
    Ok(exponent.exp())
}

/// Same quantity through the other algebraic route, with the integrand kept
/// in the `e^{s(t)}` form. Retained as an independent cross-check of
/// [`pgf_id_numeric`].
pub fn pgf_id_direct(z: Complex64, tables: &IntegralTables, t: f64) -> Result<Complex64> {
    check_z(z)?;
    if z == ONE || tables.params().nu_is_zero() || t == 0.0 {
        return Ok(ONE);
    }
    let pt = tables.query(t)?;
    let est = pt.s.exp();
    let exponent = quad::adaptive_segmented(
        &|u: f64| {
            let pu = tables.query(u)?;
            let num = tables.params().nu_rate(u) * (pt.s - pu.s).exp() * (z - ONE);
            let den = ONE - est * (pt.l - pu.l) * (z - ONE);
            Ok(num / den)
        },
        0.0,
        t,
        &id_segments(tables, t),
        PGF_QUAD_TOL,
    )?;
    Ok(exponent.exp())
}

/// Negative-binomial factor `((1-β)/(1-βz))^{r0}`, evaluated in log space.
pub fn pgf_nbd_factor(z: Complex64, tables: &IntegralTables, t: f64, r0: f64) -> Result<Complex64> {
    check_z(z)?;
    if !(r0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "NBD exponent must be positive, got {r0}"
        )));
    }
    if z == ONE {
        return Ok(ONE);
    }
    let p = tables.query(t)?;
    let q = p.one_minus_beta();
    let beta = p.beta();
    // 1 - βz = (1-β) + β(1-z) avoids cancellation as β -> 1.
    let log_denom = (q + beta * (ONE - z)).ln();
    let log_num = -p.s - (1.0 + p.m).ln();
    Ok(((log_num - log_denom) * r0).exp())
}

/// Correction factor `exp(-∫ r'(u) log A(u) du)` capturing a nonconstant
/// immigration-to-birth ratio. Identically 1 in proportional mode.
pub fn pgf_correction(z: Complex64, tables: &IntegralTables, t: f64) -> Result<Complex64> {
    check_z(z)?;
    let params = tables.params();
    match params.nu {
        NuMode::Proportional { .. } => Ok(ONE),
        NuMode::Schedule { schedule } => {
            if params.lambda.min_rate() <= 0.0 {
                return Err(Error::InvalidParameter(
                    "correction factor needs λ > 0 everywhere to define ν/λ".into(),
                ));
            }
            if z == ONE || t == 0.0 {
                return Ok(ONE);
            }
            let pt = tables.query(t)?;
            let est = pt.s.exp();
            let exponent = quad::adaptive_segmented(
                &|u: f64| {
                    let lam = params.lambda.eval(u);
                    let ratio_slope = (schedule.derivative(u) * lam
                        - schedule.eval(u) * params.lambda.derivative(u))
                        / (lam * lam);
                    let pu = tables.query(u)?;
                    // A(u) stays in the right half-plane for |z| <= 1, so the
                    // principal log is continuous along the path.
                    let log_a = (ONE + est * (pt.l - pu.l) * (ONE - z)).ln();
                    Ok(ratio_slope * log_a)
                },
                0.0,
                t,
                &id_segments(tables, t),
                PGF_QUAD_TOL,
            )?;
            Ok((-exponent).exp())
        }
    }
}

/// PGF of the full process: product of the no-immigration part for the
/// initial `i0` and the immigrants-and-descendants part.
pub fn pgf_bdi(z: Complex64, tables: &IntegralTables, t: f64) -> Result<Complex64> {
    let bd = pgf_bd(z, tables, t, tables.params().i0)?;
    let id = pgf_id_numeric(z, tables, t)?;
    Ok(bd * id)
}

/// Fixed-node evaluator of the immigrants-and-descendants PGF at one time,
/// for bulk evaluation on many `z` (PMF inversion). The arrival-time
/// integral is discretized once on composite Gauss-Legendre panels; each
/// subsequent `eval` costs one complex division per node.
pub struct IdKernel {
    nodes: Vec<KernelNode>,
}

struct KernelNode {
    weight_nu: f64,
    inv_growth: f64,
    carried: f64,
}

impl IdKernel {
    const GL_ORDER: usize = 16;
    const MAX_PANEL: f64 = 2.5;

    pub fn new(tables: &IntegralTables, t: f64) -> Result<Self> {
        let pt = tables.query(t)?;
        let mut cuts = vec![0.0];
        cuts.extend(id_segments(tables, t));
        cuts.push(t);
        let gl = quad::gauss_legendre(Self::GL_ORDER);

        let mut nodes = Vec::new();
        for pair in cuts.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b - a <= 0.0 {
                continue;
            }
            let panels = ((b - a) / Self::MAX_PANEL).ceil().max(1.0) as usize;
            let width = (b - a) / panels as f64;
            for p in 0..panels {
                let lo = a + p as f64 * width;
                let half = width / 2.0;
                let center = lo + half;
                for &(x, w) in &gl {
                    let u = center + half * x;
                    let pu = tables.query(u)?;
                    nodes.push(KernelNode {
                        weight_nu: w * half * tables.params().nu_rate(u),
                        inv_growth: (-(pt.s - pu.s)).exp(),
                        carried: pu.s.exp() * (pt.l - pu.l),
                    });
                }
            }
        }
        Ok(Self { nodes })
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        if z == ONE {
            return ONE;
        }
        let inv_zm1 = (z - ONE).inv();
        let mut exponent = Complex64::new(0.0, 0.0);
        for node in &self.nodes {
            exponent += node.weight_nu / (node.inv_growth * inv_zm1 - node.carried);
        }
        exponent.exp()
    }
}

/// Negative-binomial PMF with parameters `(r, β)` over `0..=kmax`, computed
/// through the log-space ratio recurrence so it stays finite for β close
/// to 1.
pub fn pmf_nbd(r: f64, beta: f64, kmax: usize) -> Result<PmfVector> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "NBD shape must be positive, got {r}"
        )));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Degenerate(format!(
            "NBD beta must lie in [0, 1), got {beta}"
        )));
    }
    let mut p = vec![0.0; kmax + 1];
    if beta == 0.0 {
        p[0] = 1.0;
        return PmfVector::from_masses(None, p);
    }
    let ln_beta = beta.ln();
    let mut lp = r * (-beta).ln_1p();
    p[0] = lp.exp();
    for k in 0..kmax {
        lp += ln_beta + (k as f64 + r).ln() - (k as f64 + 1.0).ln();
        p[k + 1] = lp.exp();
    }
    PmfVector::from_masses(None, p)
}

/// Exact PMF of the no-immigration process with `i0` ancestors, from the
/// power of the modified-geometric PGF.
///
/// `(1-βz)^{i0} G = (α + (1-α-β)z)^{i0}` turns into a forward recurrence
/// whose homogeneous solutions decay like `β^k`, so it is stable.
pub fn pmf_bd(tables: &IntegralTables, t: f64, i0: u64, kmax: usize) -> Result<PmfVector> {
    if i0 == 0 {
        return Ok(PmfVector::point_mass(Some(t), 0, kmax));
    }
    let point = tables.query(t)?;
    let alpha = point.alpha();
    let beta = point.beta();
    let c = ((-point.s).exp() - point.m) / (1.0 + point.m);
    let order = i0 as usize;

    // binomial coefficients C(i0, j)
    let mut binom = vec![1.0_f64; order + 1];
    for j in 1..=order {
        binom[j] = binom[j - 1] * (order - j + 1) as f64 / j as f64;
    }

    let rhs = |k: usize| -> f64 {
        if k > order {
            0.0
        } else {
            binom[k] * alpha.powi((order - k) as i32) * c.powi(k as i32)
        }
    };

    let mut p = vec![0.0; kmax + 1];
    for k in 0..=kmax {
        let mut acc = rhs(k);
        for mth in 1..=order.min(k) {
            acc -= binom[mth] * (-beta).powi(mth as i32) * p[k - mth];
        }
        p[k] = acc;
    }
    PmfVector::from_masses(Some(t), p)
}

/// Limiting PMF as the rates settle: negative binomial in the equilibrium
/// reproduction number.
pub fn equilibrium_pmf(r: f64, r_inf: f64, kmax: usize) -> Result<PmfVector> {
    if !(0.0..1.0).contains(&r_inf) {
        return Err(Error::InvalidParameter(format!(
            "equilibrium reproduction number must lie in [0, 1), got {r_inf}"
        )));
    }
    pmf_nbd(r, r_inf, kmax)
}

/// Invert a PGF into a PMF by sampling `K = 2^ceil(log2(kmax+1))` roots of
/// unity and taking the inverse DFT. Imaginary residue is discarded below
/// 1e-9; larger residue or negative mass is an error, as is a PGF that is
/// not normalized at z = 1.
pub fn pmf_from_pgf<F>(evaluator: F, kmax: usize) -> Result<PmfVector>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let at_one = evaluator(ONE)?;
    if (at_one - ONE).norm() > 1e-6 {
        return Err(Error::InvalidParameter(format!(
            "evaluator is not a normalized PGF: G(1) = {at_one}"
        )));
    }

    let k_pts = (kmax + 1).next_power_of_two();
    let mut g = vec![Complex64::new(0.0, 0.0); k_pts];
    // PGF coefficients are real, so G(conj z) = conj G(z); evaluate half the
    // circle and mirror.
    for j in 0..=k_pts / 2 {
        let z = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / k_pts as f64);
        g[j] = evaluator(z)?;
    }
    for j in k_pts / 2 + 1..k_pts {
        g[j] = g[k_pts - j].conj();
    }

    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(k_pts).process(&mut g);

    let scale = 1.0 / k_pts as f64;
    let full_sum: f64 = g.iter().map(|v| v.re * scale).sum();
    if (full_sum - at_one.re).abs() > 1e-6 {
        return Err(Error::QuadratureNonConvergent(format!(
            "inverted masses sum to {full_sum}, expected G(1) = {}; raise kmax",
            at_one.re
        )));
    }

    let mut p = vec![0.0; kmax + 1];
    for (k, slot) in p.iter_mut().enumerate() {
        let coeff = g[k] * scale;
        if coeff.im.abs() > 1e-9 {
            return Err(Error::QuadratureNonConvergent(format!(
                "imaginary residue {:e} at k = {k}",
                coeff.im
            )));
        }
        *slot = coeff.re;
    }
    PmfVector::from_masses(None, p)
}

/// Full-process PMF at `t` over `0..=kmax`, picking the cheapest exact
/// route: the closed forms when the process is pure no-immigration or an
/// empty-start proportional one, otherwise roots-of-unity inversion of the
/// product PGF.
pub fn analytic_pmf(tables: &IntegralTables, t: f64, kmax: usize) -> Result<PmfVector> {
    let params = tables.params();
    if params.nu_is_zero() {
        return pmf_bd(tables, t, params.i0, kmax);
    }
    if params.i0 == 0 {
        if let Some(r) = params.proportional_ratio() {
            if r > 0.0 {
                let mut pmf = pmf_nbd(r, tables.query(t)?.beta(), kmax)?;
                pmf.t = Some(t);
                return Ok(pmf);
            }
        }
    }
    let kernel = IdKernel::new(tables, t)?;
    let i0 = params.i0;
    let mut pmf = pmf_from_pgf(
        |z| Ok(pgf_bd(z, tables, t, i0)? * kernel.eval(z)),
        kmax,
    )?;
    pmf.t = Some(t);
    Ok(pmf)
}

/// Default truncation for PMF inversion: the smallest power of two at or
/// above mean + 12 standard deviations of the state at `t`.
pub fn default_kmax(tables: &IntegralTables, t: f64) -> Result<usize> {
    let p = tables.query(t)?;
    let params = tables.params();
    let growth = p.s.exp();
    let mean = growth * (params.i0 as f64 + p.n);
    let r0 = params.ratio_at(0.0).unwrap_or(0.0);
    let var = (params.i0 as f64 * (p.l + p.m) + r0 * p.l * (1.0 + p.m)) * growth * growth;
    let target = (mean + 12.0 * var.sqrt()).ceil().max(16.0) as usize;
    Ok(target.next_power_of_two())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate_model::{ModelParams, RateSchedule};

    fn paper_params(i0: u64) -> ModelParams {
        ModelParams::new(
            RateSchedule::new(0.3, 0.06, 50.0, 5.0).unwrap(),
            RateSchedule::constant(0.1).unwrap(),
            NuMode::Proportional { r: 2.0 / 3.0 },
            i0,
            0.02,
            350.0,
        )
        .unwrap()
    }

    fn paper_tables(i0: u64) -> IntegralTables {
        IntegralTables::build_default(&paper_params(i0)).unwrap()
    }

    #[test]
    fn bd_normalized_at_one() {
        let tables = paper_tables(1);
        for &t in &[0.0, 10.0, 53.0, 200.0] {
            let g = pgf_bd(ONE, &tables, t, 3).unwrap();
            assert!((g - ONE).norm() < 1e-9, "G(1) = {g} at t = {t}");
        }
    }

    #[test]
    fn bd_initial_condition_is_power_of_z() {
        let tables = paper_tables(2);
        let z = Complex64::new(0.3, 0.4);
        let g = pgf_bd(z, &tables, 0.0, 2).unwrap();
        assert!((g - z * z).norm() < 1e-12);
    }

    #[test]
    fn bd_at_origin_equals_alpha() {
        // α = M/(1+M) with M from the constant-rate closed form.
        let tables = paper_tables(1);
        let g = pgf_bd(Complex64::new(0.0, 0.0), &tables, 10.0, 1).unwrap();
        let m = 0.5 * (1.0 - (-2.0_f64).exp());
        assert!((g.re - m / (1.0 + m)).abs() < 1e-7, "got {}", g.re);
        assert!(g.im.abs() < 1e-12);
    }

    #[test]
    fn descendants_at_arrival_time_is_z() {
        let tables = paper_tables(0);
        let z = Complex64::new(0.2, -0.5);
        let g = pgf_descendants(z, 7.0, 7.0, &tables).unwrap();
        assert!((g - z).norm() < 1e-12);
    }

    #[test]
    fn descendants_from_time_zero_matches_single_ancestor() {
        let tables = paper_tables(0);
        for &t in &[3.0, 10.0, 60.0] {
            for z in unit_circle(8) {
                let a = pgf_descendants(z, 0.0, t, &tables).unwrap();
                let b = pgf_bd(z, &tables, t, 1).unwrap();
                assert!((a - b).norm() < 1e-10, "mismatch at t = {t}, z = {z}");
            }
        }
    }

    #[test]
    fn id_normalized_and_trivial_without_immigration() {
        let no_nu = ModelParams::new(
            RateSchedule::new(0.3, 0.06, 50.0, 5.0).unwrap(),
            RateSchedule::constant(0.1).unwrap(),
            NuMode::Proportional { r: 0.0 },
            1,
            0.0,
            80.0,
        )
        .unwrap();
        let tables = IntegralTables::build_default(&no_nu).unwrap();
        for z in unit_circle(5) {
            assert!((pgf_id_numeric(z, &tables, 40.0).unwrap() - ONE).norm() < 1e-12);
        }
    }

    #[test]
    fn id_at_origin_matches_nbd_closed_form() {
        // Corollary closed form: G_ID(0, t) = (1-β)^r.
        let tables = paper_tables(0);
        let g = pgf_id_numeric(Complex64::new(0.0, 0.0), &tables, 10.0).unwrap();
        let q = tables.query(10.0).unwrap().one_minus_beta();
        let expected = q.powf(2.0 / 3.0);
        assert!((g.re - expected).abs() < 1e-9, "got {} want {expected}", g.re);
        assert!((expected - 0.207449068254812).abs() < 1e-7);
    }

    #[test]
    fn id_two_routes_agree() {
        let tables = paper_tables(0);
        for &t in &[5.0, 20.0, 60.0] {
            for z in unit_circle(8) {
                let a = pgf_id_numeric(z, &tables, t).unwrap();
                let b = pgf_id_direct(z, &tables, t).unwrap();
                assert!((a - b).norm() < 1e-10, "routes differ at t = {t}, z = {z}");
            }
        }
    }

    #[test]
    fn correction_is_one_in_proportional_mode() {
        let tables = paper_tables(0);
        for z in unit_circle(6) {
            let c = pgf_correction(z, &tables, 30.0).unwrap();
            assert!((c - ONE).norm() < 1e-12);
        }
    }

    fn skewed_schedule_params() -> ModelParams {
        // ν transitions earlier and more slowly than λ, so ν/λ genuinely varies.
        ModelParams::new(
            RateSchedule::new(0.3, 0.06, 50.0, 5.0).unwrap(),
            RateSchedule::constant(0.1).unwrap(),
            NuMode::Schedule {
                schedule: RateSchedule::new(0.2, 0.04, 40.0, 10.0).unwrap(),
            },
            0,
            0.0,
            120.0,
        )
        .unwrap()
    }

    #[test]
    fn factorization_with_varying_ratio() {
        let tables = IntegralTables::build_default(&skewed_schedule_params()).unwrap();
        let r0 = tables.params().ratio_at(0.0).unwrap();
        for &t in &[30.0, 60.0, 100.0] {
            for z in unit_circle(8) {
                let direct = pgf_id_direct(z, &tables, t).unwrap();
                let fact = pgf_nbd_factor(z, &tables, t, r0).unwrap()
                    * pgf_correction(z, &tables, t).unwrap();
                assert!(
                    (direct - fact).norm() < 1e-8,
                    "factorization off at t = {t}, z = {z}: {direct} vs {fact}"
                );
            }
        }
    }

    #[test]
    fn nbd_factor_geometric_when_exponent_one() {
        let tables = paper_tables(0);
        let p = tables.query(10.0).unwrap();
        let z = Complex64::new(0.3, 0.1);
        let g = pgf_nbd_factor(z, &tables, 10.0, 1.0).unwrap();
        let direct = (1.0 - p.beta()) / (ONE - p.beta() * z);
        assert!((g - direct).norm() < 1e-12);
    }

    #[test]
    fn nbd_factor_one_at_time_zero() {
        let tables = paper_tables(0);
        let g = pgf_nbd_factor(Complex64::new(0.5, 0.0), &tables, 0.0, 2.0 / 3.0).unwrap();
        assert!((g - ONE).norm() < 1e-12);
    }

    #[test]
    fn bdi_reduces_to_components() {
        let tables = paper_tables(0);
        let z = Complex64::new(-0.4, 0.3);
        let whole = pgf_bdi(z, &tables, 25.0).unwrap();
        let id = pgf_id_numeric(z, &tables, 25.0).unwrap();
        assert!((whole - id).norm() < 1e-12, "i0 = 0 must leave only the ID part");
    }

    #[test]
    fn kernel_matches_adaptive_quadrature() {
        let tables = paper_tables(0);
        for &t in &[10.0, 50.0, 90.0] {
            let kernel = IdKernel::new(&tables, t).unwrap();
            for z in unit_circle(8) {
                let fast = kernel.eval(z);
                let slow = pgf_id_numeric(z, &tables, t).unwrap();
                assert!((fast - slow).norm() < 1e-10, "kernel off at t = {t}, z = {z}");
            }
        }
    }

    #[test]
    fn nbd_pmf_head_value() {
        let pmf = pmf_nbd(2.0 / 3.0, 0.6, 64).unwrap();
        assert!((pmf.p[0] - 0.542883523318981).abs() < 1e-12);
    }

    #[test]
    fn nbd_pmf_degenerate_beta_zero() {
        let pmf = pmf_nbd(2.0 / 3.0, 0.0, 8).unwrap();
        assert_eq!(pmf.p[0], 1.0);
        assert!(pmf.p[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nbd_pmf_rejects_beta_one() {
        assert!(pmf_nbd(2.0 / 3.0, 1.0, 8).is_err());
    }

    #[test]
    fn nbd_pmf_mean_matches_moment_identity() {
        let beta = 0.905514050251912;
        let r = 2.0 / 3.0;
        let pmf = pmf_nbd(r, beta, 4096).unwrap();
        let expected = r * beta / (1.0 - beta);
        assert!((pmf.p[0] - 0.207449068254812).abs() < 1e-9);
        assert!(
            (pmf.mean() - expected).abs() / expected < 1e-9,
            "mean {} vs {expected}",
            pmf.mean()
        );
        assert!((expected - 6.38905609893065).abs() < 1e-9);
    }

    #[test]
    fn nbd_pmf_survives_extreme_beta() {
        let pmf = pmf_nbd(2.0 / 3.0, 1.0 - 1e-12, 32).unwrap();
        assert!(pmf.p[0] > 0.0 && pmf.p[0].is_finite());
        assert!(pmf.tail_mass > 0.99);
    }

    #[test]
    fn bd_pmf_head_values_at_t10() {
        let tables = paper_tables(1);
        let pmf = pmf_bd(&tables, 10.0, 1, 256).unwrap();
        assert!((pmf.p[0] - 0.301838016750637).abs() < 1e-7, "P0 = {}", pmf.p[0]);
        assert!((pmf.p[1] - 0.0659664980653245).abs() < 1e-7, "P1 = {}", pmf.p[1]);
        assert!((pmf.p[2] - 0.0597335908440670).abs() < 1e-7, "P2 = {}", pmf.p[2]);
    }

    #[test]
    fn bd_pmf_point_masses() {
        let tables = paper_tables(3);
        let at_zero = pmf_bd(&tables, 0.0, 3, 16).unwrap();
        assert_eq!(at_zero.p[3], 1.0);
        assert!(at_zero.p.iter().enumerate().all(|(k, &v)| k == 3 || v == 0.0));
        let no_ancestors = pmf_bd(&tables, 10.0, 0, 16).unwrap();
        assert_eq!(no_ancestors.p[0], 1.0);
    }

    #[test]
    fn bd_pmf_two_ancestors_is_self_convolution() {
        let tables = paper_tables(1);
        let one = pmf_bd(&tables, 10.0, 1, 512).unwrap();
        let two = pmf_bd(&tables, 10.0, 2, 512).unwrap();
        for k in 0..=256 {
            let conv: f64 = (0..=k).map(|j| one.p[j] * one.p[k - j]).sum();
            assert!(
                (two.p[k] - conv).abs() < 1e-12,
                "convolution mismatch at k = {k}"
            );
        }
    }

    #[test]
    fn bd_pmf_matches_dft_inversion() {
        // Independent route: invert the rational PGF numerically.
        let tables = paper_tables(1);
        let closed = pmf_bd(&tables, 10.0, 2, 255).unwrap();
        let inverted =
            pmf_from_pgf(|z| pgf_bd(z, &tables, 10.0, 2), 255).unwrap();
        for k in 0..=255 {
            assert!(
                (closed.p[k] - inverted.p[k]).abs() < 1e-9,
                "k = {k}: {} vs {}",
                closed.p[k],
                inverted.p[k]
            );
        }
    }

    #[test]
    fn inversion_recovers_poisson_head() {
        let pmf = pmf_from_pgf(|z| Ok((2.0 * (z - ONE)).exp()), 63).unwrap();
        assert!((pmf.p[0] - 0.135335283236613).abs() < 1e-12);
        // series oracle for the next two terms
        assert!((pmf.p[1] - 2.0 * 0.135335283236613).abs() < 1e-11);
        assert!((pmf.p[2] - 2.0 * 0.135335283236613).abs() < 1e-11);
    }

    #[test]
    fn inversion_matches_nbd_closed_form() {
        let (r, beta) = (2.0 / 3.0, 0.905514050251912);
        let closed = pmf_nbd(r, beta, 1023).unwrap();
        let inverted = pmf_from_pgf(
            |z| {
                let log_num = r * (1.0 - beta).ln();
                let log_den = r * (ONE - beta * z).ln();
                Ok((log_num - log_den).exp())
            },
            1023,
        )
        .unwrap();
        for k in 0..=1023 {
            assert!(
                (closed.p[k] - inverted.p[k]).abs() < 1e-9,
                "k = {k}: {} vs {}",
                closed.p[k],
                inverted.p[k]
            );
        }
    }

    #[test]
    fn inversion_of_constant_pgf_is_point_mass_at_zero() {
        let pmf = pmf_from_pgf(|_| Ok(ONE), 31).unwrap();
        assert_eq!(pmf.p[0], 1.0);
        assert!(pmf.p[1..].iter().all(|&v| v.abs() == 0.0));
    }

    #[test]
    fn inversion_rejects_unnormalized_evaluator() {
        assert!(pmf_from_pgf(|_| Ok(Complex64::new(0.5, 0.0)), 7).is_err());
    }

    #[test]
    fn equilibrium_pmf_values() {
        let pmf = equilibrium_pmf(2.0 / 3.0, 0.6, 512).unwrap();
        assert!((pmf.p[0] - 0.542883523318981).abs() < 1e-12);
        assert!((pmf.mean() - 1.0).abs() < 1e-9, "mean {}", pmf.mean());
        let frozen = equilibrium_pmf(2.0 / 3.0, 0.0, 8).unwrap();
        assert_eq!(frozen.p[0], 1.0);
    }

    #[test]
    fn corollary_closure_at_t10() {
        // Inverting the numerically integrated PGF must reproduce the NBD law.
        let tables = paper_tables(0);
        let kernel = IdKernel::new(&tables, 10.0).unwrap();
        let kmax = default_kmax(&tables, 10.0).unwrap();
        let inverted = pmf_from_pgf(|z| Ok(kernel.eval(z)), kmax).unwrap();
        let beta = tables.query(10.0).unwrap().beta();
        let closed = pmf_nbd(2.0 / 3.0, beta, kmax).unwrap();
        for k in 0..=kmax {
            assert!(
                (inverted.p[k] - closed.p[k]).abs() < 1e-8,
                "k = {k}: {} vs {}",
                inverted.p[k],
                closed.p[k]
            );
        }
    }

    #[test]
    fn analytic_pmf_routes() {
        // empty-start proportional: must be the NBD closed form
        let tables = paper_tables(0);
        let direct = analytic_pmf(&tables, 10.0, 255).unwrap();
        let beta = tables.query(10.0).unwrap().beta();
        let nbd = pmf_nbd(2.0 / 3.0, beta, 255).unwrap();
        for k in 0..=255 {
            assert!((direct.p[k] - nbd.p[k]).abs() < 1e-12);
        }

        // seeded start: inversion route must equal the convolution of the
        // independent components
        let tables2 = paper_tables(2);
        let whole = analytic_pmf(&tables2, 10.0, 511).unwrap();
        let bd = pmf_bd(&tables2, 10.0, 2, 511).unwrap();
        for k in 0..=255 {
            let conv: f64 = (0..=k).map(|j| bd.p[j] * nbd.p[k - j]).sum();
            assert!(
                (whole.p[k] - conv).abs() < 1e-8,
                "k = {k}: {} vs {}",
                whole.p[k],
                conv
            );
        }
    }

    #[test]
    fn pmf_masses_validate() {
        assert!(PmfVector::from_masses(None, vec![0.5, -1e-3]).is_err());
        let ok = PmfVector::from_masses(None, vec![0.5, 0.25]).unwrap();
        assert!((ok.tail_mass - 0.25).abs() < 1e-15);
    }
}
