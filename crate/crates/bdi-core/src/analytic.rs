//! Closed-form moments, extinction probabilities and times, and the
//! immigration-death (infinite-server queue) special case.
//!
//! Everything here reads the cumulative integrals from [`IntegralTables`]
//! and combines them through the stable forms: means via `e^{s} N`,
//! variances via `r L (1+M) e^{2s}`, never through `β/(1-β)` ratios that
//! blow up as β approaches 1.

use crate::error::{Error, Result};
use crate::pgf::PmfVector;
use crate::quad;
use crate::rate_model::IntegralTables;

/// Horizon used when evaluating "t → ∞" limits through the constant-rate
/// closed forms past the table horizon.
pub const DEFAULT_T_LIM: f64 = 1000.0;

/// Mean, variance and coefficient of variation at one time.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MomentReport {
    pub t: f64,
    pub mean: f64,
    pub variance: f64,
    /// `sqrt(variance)/mean`; +∞ where the mean vanishes (e.g. t = 0 with
    /// no initial individuals).
    pub cv: f64,
}

/// Extinction-time distribution summary for the no-immigration process.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ExtinctionReport {
    pub t_grid: Vec<f64>,
    /// Pr[T ≤ t] along `t_grid`.
    pub cdf: Vec<f64>,
    /// Pr[T < ∞], or a lower bound when `p_finite_exact` is false.
    pub p_finite: f64,
    pub p_finite_exact: bool,
    /// E[T] for a single ancestor; +∞ when extinction is not certain.
    /// `None` when the initial count is not 1.
    pub expected_time: Option<f64>,
}

/// Mean of the no-immigration process: `i0 · e^{s(t)}`.
pub fn mean_bd(tables: &IntegralTables, t: f64, i0: u64) -> Result<f64> {
    Ok(i0 as f64 * tables.query(t)?.s.exp())
}

/// Mean of the immigrants-and-descendants process started empty:
/// `e^{s(t)} N(t)`, the form that stays finite where β ≈ 1.
pub fn mean_bdi0(tables: &IntegralTables, t: f64) -> Result<f64> {
    let p = tables.query(t)?;
    Ok(p.s.exp() * p.n)
}

/// Mean of the full process: `e^{s(t)} (i0 + N(t))` by independence of the
/// two components.
pub fn mean_bdi(tables: &IntegralTables, t: f64) -> Result<f64> {
    let p = tables.query(t)?;
    Ok(p.s.exp() * (tables.params().i0 as f64 + p.n))
}

/// Moments of the empty-start process under proportional immigration.
pub fn moments_bdi0(tables: &IntegralTables, t: f64) -> Result<MomentReport> {
    let r = tables.params().proportional_ratio().ok_or_else(|| {
        Error::InvalidParameter("moment closed forms need proportional immigration".into())
    })?;
    let p = tables.query(t)?;
    let growth = p.s.exp();
    let mean = growth * p.n;
    let variance = r * p.l * (1.0 + p.m) * growth * growth;
    let cv = if mean > 0.0 {
        (r * p.l * (1.0 + p.m)).sqrt() / p.n
    } else {
        f64::INFINITY
    };
    Ok(MomentReport {
        t,
        mean,
        variance,
        cv,
    })
}

/// Variance of the full process at `t`: the no-immigration component
/// contributes `i0 (L+M) e^{2s}`, the immigration component
/// `r L (1+M) e^{2s}` (independence). Proportional mode only; with a free
/// ν schedule the variance falls back to differentiating the PGF.
pub fn variance_bdi(tables: &IntegralTables, t: f64) -> Result<f64> {
    let p = tables.query(t)?;
    let growth2 = (2.0 * p.s).exp();
    let i0 = tables.params().i0 as f64;
    let bd_part = i0 * (p.l + p.m) * growth2;
    match tables.params().proportional_ratio() {
        Some(r) => Ok(bd_part + r * p.l * (1.0 + p.m) * growth2),
        None => {
            // factorial moments from central differences of G on the real axis
            let h = 1e-5;
            let one = num_complex::Complex64::new(1.0, 0.0);
            let g = |x: f64| {
                crate::pgf::pgf_bdi(num_complex::Complex64::new(x, 0.0), tables, t).map(|v| v.re)
            };
            let up = g(1.0 + h)?;
            let dn = g(1.0 - h)?;
            let at = crate::pgf::pgf_bdi(one, tables, t)?.re;
            let d1 = (up - dn) / (2.0 * h);
            let d2 = (up - 2.0 * at + dn) / (h * h);
            Ok(d2 + d1 - d1 * d1)
        }
    }
}

/// Coefficient of variation of the no-immigration process:
/// `sqrt(L+M) / sqrt(i0)`.
pub fn cv_bd(tables: &IntegralTables, t: f64, i0: u64) -> Result<f64> {
    if i0 == 0 {
        return Err(Error::InvalidParameter(
            "coefficient of variation needs at least one ancestor".into(),
        ));
    }
    let p = tables.query(t)?;
    Ok((p.l + p.m).sqrt() / (i0 as f64).sqrt())
}

/// Probability of an empty state under proportional immigration,
/// `P₀ = (1-β)^r`, cross-checked against the `(1-α)^r e^{-rs}` form.
pub fn p0_bdi(tables: &IntegralTables, t: f64) -> Result<f64> {
    let r = tables.params().proportional_ratio().ok_or_else(|| {
        Error::InvalidParameter("closed-form P0 needs proportional immigration".into())
    })?;
    let p = tables.query(t)?;
    let via_beta = (1.0 - p.beta()).powf(r);
    let via_alpha = (r * (-(1.0 + p.m).ln() - p.s)).exp();
    if (via_beta - via_alpha).abs() > 1e-9 {
        return Err(Error::IdentityViolation {
            what: format!("P0 expressions disagree at t = {t}"),
            residual: (via_beta - via_alpha).abs(),
        });
    }
    Ok(via_alpha)
}

fn require_no_immigration(tables: &IntegralTables, what: &str) -> Result<()> {
    if tables.params().nu_is_zero() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{what} is defined for the no-immigration process only"
        )))
    }
}

/// Pr[T ≤ t] = α(t)^{i0}: extinction is exactly the event of an empty state
/// once immigration is off. Both α expressions are evaluated and must agree.
pub fn extinction_cdf(tables: &IntegralTables, t: f64, i0: u64) -> Result<f64> {
    require_no_immigration(tables, "the extinction time")?;
    if i0 == 0 {
        return Err(Error::InvalidParameter(
            "extinction needs at least one initial individual".into(),
        ));
    }
    let p = tables.query(t)?;
    let alpha = p.alpha();
    // the identity 1 + M = L + e^{-s} gives the alternative form
    let alt = 1.0 - 1.0 / ((-p.s).exp() + p.l);
    if (alpha - alt).abs() > 1e-9 {
        return Err(Error::IdentityViolation {
            what: format!("alpha expressions disagree at t = {t}"),
            residual: (alpha - alt).abs(),
        });
    }
    Ok(alpha.powi(i0 as i32))
}

/// Pr[T < ∞] with an exactness flag.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ExtinctionLimit {
    pub probability: f64,
    /// True when M(t) provably diverges (μ settles above λ) and the limit
    /// is exactly 1; false when the horizon value is only a lower bound.
    pub exact: bool,
}

pub fn extinction_limit(tables: &IntegralTables, i0: u64) -> Result<ExtinctionLimit> {
    require_no_immigration(tables, "the extinction limit")?;
    if i0 == 0 {
        return Err(Error::InvalidParameter(
            "extinction needs at least one initial individual".into(),
        ));
    }
    let params = tables.params();
    if params.mu.v1 > params.lambda.v1 {
        return Ok(ExtinctionLimit {
            probability: 1.0,
            exact: true,
        });
    }
    let p = tables.query(tables.horizon())?;
    Ok(ExtinctionLimit {
        probability: p.alpha().powi(i0 as i32),
        exact: false,
    })
}

/// E[T] = ∫ dt / (1 + M(t)) for a single ancestor: quadrature to the
/// horizon plus the constant-rate closed-form tail. +∞ whenever the settled
/// net rate is nonnegative (extinction then is either uncertain or takes
/// infinite expected time).
pub fn expected_extinction_time(tables: &IntegralTables) -> Result<f64> {
    require_no_immigration(tables, "the expected extinction time")?;
    let params = tables.params();
    let lam = params.lambda.v1;
    let mu = params.mu.v1;
    if lam >= mu {
        return Ok(f64::INFINITY);
    }
    if params.last_knot() > tables.horizon() + 1e-12 {
        return Err(Error::InvalidParameter(
            "horizon ends inside a schedule transition; no closed-form tail".into(),
        ));
    }
    let knots = params.knots();
    let body: f64 = quad::adaptive_segmented(
        &|t: f64| Ok(1.0 / (1.0 + tables.query(t)?.m)),
        0.0,
        tables.horizon(),
        &knots,
        1e-10,
    )?;

    // Beyond the horizon M(h + τ) = M(h) + c (e^{bτ} - 1) with b = μ - λ > 0,
    // and ∫₀^∞ dτ/(A + c e^{bτ}) has the logarithmic closed form below.
    let end = tables.query(tables.horizon())?;
    let b = mu - lam;
    let c = mu * (-end.s).exp() / b;
    let a_coef = 1.0 + end.m - c;
    let tail = if a_coef.abs() < 1e-12 {
        1.0 / (b * c)
    } else {
        ((a_coef + c) / c).ln() / (b * a_coef)
    };
    Ok(body + tail)
}

/// Extinction summary over an evenly spaced grid of `points` times.
pub fn extinction_report(tables: &IntegralTables, points: usize) -> Result<ExtinctionReport> {
    let i0 = tables.params().i0;
    let points = points.max(2);
    let horizon = tables.horizon();
    let mut t_grid = Vec::with_capacity(points);
    let mut cdf = Vec::with_capacity(points);
    for i in 0..points {
        let t = horizon * i as f64 / (points - 1) as f64;
        t_grid.push(t);
        cdf.push(extinction_cdf(tables, t, i0)?);
    }
    let limit = extinction_limit(tables, i0)?;
    let expected_time = if i0 == 1 {
        Some(expected_extinction_time(tables)?)
    } else {
        None
    };
    Ok(ExtinctionReport {
        t_grid,
        cdf,
        p_finite: limit.probability,
        p_finite_exact: limit.exact,
        expected_time,
    })
}

/// Mean queue length of the immigration-death process (no births):
/// `m(t) = γ(t) ∫₀ᵗ ν(u)/γ(u) du`, with the `γ = 1 - α` relation verified.
pub fn id_queue_mean(tables: &IntegralTables, t: f64) -> Result<f64> {
    if !tables.params().lambda.is_zero() {
        return Err(Error::InvalidParameter(
            "infinite-server form needs λ ≡ 0".into(),
        ));
    }
    let p = tables.query(t)?;
    let relation = (p.gamma - (1.0 - p.alpha())).abs();
    if relation > 1e-9 {
        return Err(Error::IdentityViolation {
            what: format!("gamma vs 1-alpha at t = {t}"),
            residual: relation,
        });
    }
    let knots = tables.params().knots();
    let integral: f64 = quad::adaptive_segmented(
        &|u: f64| Ok(tables.params().nu_rate(u) / tables.query(u)?.gamma),
        0.0,
        t,
        &knots,
        1e-11,
    )?;
    Ok(p.gamma * integral)
}

/// Survivor count of the pure death process: Binomial(i0, γ(t)).
pub fn pmf_pure_death(tables: &IntegralTables, t: f64, i0: u64) -> Result<PmfVector> {
    if !tables.params().lambda.is_zero() || !tables.params().nu_is_zero() {
        return Err(Error::InvalidParameter(
            "pure death needs λ ≡ 0 and ν ≡ 0".into(),
        ));
    }
    let gamma = tables.query(t)?.gamma;
    let n = i0 as usize;
    let mut p = vec![0.0; n + 1];
    // binomial recurrence over k
    let mut mass = (1.0 - gamma).powi(n as i32);
    for k in 0..=n {
        p[k] = mass;
        if k < n {
            mass *= (n - k) as f64 / (k + 1) as f64 * gamma / (1.0 - gamma).max(f64::MIN_POSITIVE);
        }
    }
    if gamma == 1.0 {
        p.iter_mut().for_each(|v| *v = 0.0);
        p[n] = 1.0;
    }
    PmfVector::from_masses(Some(t), p)
}

/// Expected cumulative external arrivals, internal births and removals up
/// to `t`, integrating the rates against the mean path `e^{s}(i0 + N)`.
pub fn cumulative_means(tables: &IntegralTables, t: f64) -> Result<(f64, f64, f64)> {
    let a_bar = tables.nu_cumulative(t)?;
    let params = tables.params();
    let knots = params.knots();
    // Scale the absolute quadrature tolerance to the size of the integrals.
    let mut peak = 1.0_f64;
    for i in 0..=(t.ceil() as usize) {
        peak = peak.max(mean_bdi(tables, (i as f64).min(t))?);
    }
    let tol = 1e-12 * peak * (1.0 + t);
    let b_bar: f64 = quad::adaptive_segmented(
        &|u: f64| Ok(params.lambda.eval(u) * mean_bdi(tables, u)?),
        0.0,
        t,
        &knots,
        tol,
    )?;
    let r_bar: f64 = quad::adaptive_segmented(
        &|u: f64| Ok(params.mu.eval(u) * mean_bdi(tables, u)?),
        0.0,
        t,
        &knots,
        tol,
    )?;
    Ok((a_bar, b_bar, r_bar))
}

/// Expected new infections and removals during day `day` (the window
/// `[day, day+1)` clipped to the horizon): differences of the cumulative
/// means.
pub fn daily_expected(tables: &IntegralTables, day: usize) -> Result<(f64, f64)> {
    let lo = (day as f64).min(tables.horizon());
    let hi = ((day + 1) as f64).min(tables.horizon());
    let (a0, b0, r0) = cumulative_means(tables, lo)?;
    let (a1, b1, r1) = cumulative_means(tables, hi)?;
    Ok(((a1 - a0) + (b1 - b0), r1 - r0))
}

/// (Ā, B̄, R̄) at every integer day through the horizon, built incrementally
/// so a full-horizon sweep stays linear in the number of days.
pub fn cumulative_means_series(tables: &IntegralTables) -> Result<Vec<(f64, f64, f64)>> {
    let params = tables.params();
    let knots = params.knots();
    let days = tables.horizon().floor() as usize;
    let mut out = Vec::with_capacity(days + 2);
    out.push((0.0, 0.0, 0.0));
    let (mut b_acc, mut r_acc) = (0.0, 0.0);
    let mut peak = 1.0_f64;
    for d in 0..=days {
        let lo = d as f64;
        let hi = ((d + 1) as f64).min(tables.horizon());
        if hi <= lo {
            break;
        }
        peak = peak.max(mean_bdi(tables, hi)?);
        let tol = 1e-12 * peak;
        b_acc += quad::adaptive_segmented(
            &|u: f64| Ok(params.lambda.eval(u) * mean_bdi(tables, u)?),
            lo,
            hi,
            &knots,
            tol,
        )?;
        r_acc += quad::adaptive_segmented(
            &|u: f64| Ok(params.mu.eval(u) * mean_bdi(tables, u)?),
            lo,
            hi,
            &knots,
            tol,
        )?;
        out.push((tables.nu_cumulative(hi)?, b_acc, r_acc));
    }
    Ok(out)
}

/// β(t_lim) through the constant-rate extension past the horizon.
pub fn beta_limit(tables: &IntegralTables, t_lim: f64) -> Result<f64> {
    let p = tables.query_extended(t_lim)?;
    Ok(p.beta())
}

/// P₀(t_lim) = (1-β)^r in log space through the extension.
pub fn p0_limit(tables: &IntegralTables, t_lim: f64) -> Result<f64> {
    let r = tables.params().proportional_ratio().ok_or_else(|| {
        Error::InvalidParameter("closed-form P0 needs proportional immigration".into())
    })?;
    let p = tables.query_extended(t_lim)?;
    Ok((r * (-(1.0 + p.m).ln() - p.s)).exp())
}

/// Location and height of the maximum of the mean path `e^{s}(i0 + N)`,
/// scanned on the table grid.
pub fn mean_peak(tables: &IntegralTables) -> Result<(f64, f64)> {
    let mut best = (0.0, f64::MIN);
    for &t in tables.grid() {
        let m = mean_bdi(tables, t)?;
        if m > best.1 {
            best = (t, m);
        }
    }
    Ok(best)
}
