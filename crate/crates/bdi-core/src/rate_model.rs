//! Time-varying event rates and the cumulative integral tables that every
//! other module consumes.
//!
//! A [`RateSchedule`] holds one rate that steps from `v0` down (or up) to `v1`
//! through a raised-cosine transition on `[t1, t1 + d)`. [`IntegralTables`]
//! precomputes the cumulative integrals
//!
//! ```text
//! s(t) = ∫ (λ - μ),   L(t) = ∫ λ e^{-s},   M(t) = ∫ μ e^{-s},
//! N(t) = ∫ ν e^{-s},  Σ(t) = ∫ e^{-s}
//! ```
//!
//! on a dense grid, together with the bare integrals of μ and ν. The identity
//! `L - M + e^{-s} = 1` holds pointwise and doubles as a convergence
//! certificate for the quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default base grid spacing in days.
pub const DEFAULT_STEP: f64 = 0.01;
/// Default identity-residual tolerance used as the refinement trigger.
pub const DEFAULT_TOL: f64 = 1e-9;

/// A nonnegative rate of time with a raised-cosine step transition.
///
/// Constant `v0` before `t1`, constant `v1` from `t1 + d` on, and one half
/// cycle of a cosine in between. `d = 0` degenerates to an instantaneous step
/// at `t1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSchedule {
    pub v0: f64,
    pub v1: f64,
    pub t1: f64,
    pub d: f64,
}

impl RateSchedule {
    pub fn new(v0: f64, v1: f64, t1: f64, d: f64) -> Result<Self> {
        for (name, v) in [("v0", v0), ("v1", v1), ("t1", t1), ("d", d)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "schedule field {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(Self { v0, v1, t1, d })
    }

    /// A schedule that never transitions.
    pub fn constant(v: f64) -> Result<Self> {
        Self::new(v, v, 0.0, 0.0)
    }

    /// Rate at time `t`. Panics if `t` is negative: rates are only defined
    /// from the process start.
    pub fn eval(&self, t: f64) -> f64 {
        assert!(t >= 0.0, "rate queried at negative time {t}");
        if t < self.t1 {
            self.v0
        } else if self.d > 0.0 && t < self.t1 + self.d {
            let phase = std::f64::consts::PI * (t - self.t1) / self.d;
            self.v1 + (self.v0 - self.v1) * (1.0 + phase.cos()) / 2.0
        } else {
            self.v1
        }
    }

    /// Limit of the rate from below. Differs from `eval` only at an
    /// instantaneous (`d = 0`) step, where the cell to the left of the knot
    /// must integrate the pre-step value.
    pub fn eval_left(&self, t: f64) -> f64 {
        if self.d == 0.0 && t == self.t1 && t > 0.0 {
            self.v0
        } else {
            self.eval(t)
        }
    }

    /// One-sided time derivative; zero outside the transition window.
    pub fn derivative(&self, t: f64) -> f64 {
        assert!(t >= 0.0, "rate queried at negative time {t}");
        if self.d > 0.0 && t >= self.t1 && t < self.t1 + self.d {
            let phase = std::f64::consts::PI * (t - self.t1) / self.d;
            -(self.v0 - self.v1) * std::f64::consts::PI / self.d * phase.sin() / 2.0
        } else {
            0.0
        }
    }

    /// The raised cosine never leaves `[min(v0, v1), max(v0, v1)]`.
    pub fn max_rate(&self) -> f64 {
        self.v0.max(self.v1)
    }

    pub fn min_rate(&self) -> f64 {
        self.v0.min(self.v1)
    }

    /// Start and end of the transition window.
    pub fn knots(&self) -> [f64; 2] {
        [self.t1, self.t1 + self.d]
    }

    pub fn is_zero(&self) -> bool {
        self.v0 == 0.0 && self.v1 == 0.0
    }

    pub fn is_constant(&self) -> bool {
        self.v0 == self.v1
    }
}

/// How the immigration rate ν(t) is specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum NuMode {
    /// ν(t) = r · λ(t) for a fixed ratio r.
    Proportional { r: f64 },
    /// ν(t) follows its own schedule.
    Schedule { schedule: RateSchedule },
}

/// Full model parameterization: birth, removal and immigration rates plus
/// the initial count, fatality labeling probability and time horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: RateSchedule,
    pub mu: RateSchedule,
    pub nu: NuMode,
    pub i0: u64,
    pub r_f: f64,
    pub horizon: f64,
}

impl ModelParams {
    pub fn new(
        lambda: RateSchedule,
        mu: RateSchedule,
        nu: NuMode,
        i0: u64,
        r_f: f64,
        horizon: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&r_f) {
            return Err(Error::InvalidParameter(format!(
                "fatality probability must lie in [0, 1], got {r_f}"
            )));
        }
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if let NuMode::Proportional { r } = nu {
            if !r.is_finite() || r < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "immigration ratio must be finite and >= 0, got {r}"
                )));
            }
        }
        if i0 > i32::MAX as u64 {
            return Err(Error::InvalidParameter(format!(
                "initial count {i0} is unreasonably large"
            )));
        }
        Ok(Self {
            lambda,
            mu,
            nu,
            i0,
            r_f,
            horizon,
        })
    }

    pub fn nu_rate(&self, t: f64) -> f64 {
        match self.nu {
            NuMode::Proportional { r } => r * self.lambda.eval(t),
            NuMode::Schedule { schedule } => schedule.eval(t),
        }
    }

    pub fn nu_rate_left(&self, t: f64) -> f64 {
        match self.nu {
            NuMode::Proportional { r } => r * self.lambda.eval_left(t),
            NuMode::Schedule { schedule } => schedule.eval_left(t),
        }
    }

    pub fn nu_derivative(&self, t: f64) -> f64 {
        match self.nu {
            NuMode::Proportional { r } => r * self.lambda.derivative(t),
            NuMode::Schedule { schedule } => schedule.derivative(t),
        }
    }

    pub fn nu_max(&self) -> f64 {
        match self.nu {
            NuMode::Proportional { r } => r * self.lambda.max_rate(),
            NuMode::Schedule { schedule } => schedule.max_rate(),
        }
    }

    pub fn nu_is_zero(&self) -> bool {
        match self.nu {
            NuMode::Proportional { r } => r == 0.0 || self.lambda.is_zero(),
            NuMode::Schedule { schedule } => schedule.is_zero(),
        }
    }

    /// The immigration-to-birth ratio r(t) = ν(t)/λ(t).
    pub fn ratio_at(&self, t: f64) -> Result<f64> {
        match self.nu {
            NuMode::Proportional { r } => Ok(r),
            NuMode::Schedule { schedule } => {
                let lam = self.lambda.eval(t);
                if lam <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "ratio nu/lambda undefined: lambda({t}) = 0"
                    )));
                }
                Ok(schedule.eval(t) / lam)
            }
        }
    }

    /// Constant ratio r when ν is proportional to λ.
    pub fn proportional_ratio(&self) -> Option<f64> {
        match self.nu {
            NuMode::Proportional { r } => Some(r),
            NuMode::Schedule { .. } => None,
        }
    }

    /// All schedule transition endpoints, sorted and deduplicated.
    pub fn knots(&self) -> Vec<f64> {
        let mut ks: Vec<f64> = Vec::new();
        ks.extend(self.lambda.knots());
        ks.extend(self.mu.knots());
        if let NuMode::Schedule { schedule } = self.nu {
            ks.extend(schedule.knots());
        }
        ks.sort_by(|a, b| a.total_cmp(b));
        ks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        ks
    }

    /// Transition windows `(t1, d)` with nonzero width.
    fn transition_windows(&self) -> Vec<(f64, f64)> {
        let mut ws = vec![(self.lambda.t1, self.lambda.d), (self.mu.t1, self.mu.d)];
        if let NuMode::Schedule { schedule } = self.nu {
            ws.push((schedule.t1, schedule.d));
        }
        ws.retain(|&(_, d)| d > 0.0);
        ws
    }

    /// Largest schedule knot; rates are constant beyond it.
    pub fn last_knot(&self) -> f64 {
        self.knots().last().copied().unwrap_or(0.0)
    }
}

/// One interpolated row of the tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TablePoint {
    pub t: f64,
    pub s: f64,
    pub l: f64,
    pub m: f64,
    pub n: f64,
    pub sigma: f64,
    /// Pure-death survival factor e^{-∫μ}.
    pub gamma: f64,
}

impl TablePoint {
    /// α(t) = M/(1+M), the BD extinction probability for one ancestor.
    pub fn alpha(&self) -> f64 {
        self.m / (1.0 + self.m)
    }

    /// β(t) = L/(1+M).
    pub fn beta(&self) -> f64 {
        self.l / (1.0 + self.m)
    }

    /// 1 - β computed without cancellation via the identity
    /// L - M + e^{-s} = 1, i.e. 1 - β = e^{-s}/(1+M).
    pub fn one_minus_beta(&self) -> f64 {
        (-self.s).exp() / (1.0 + self.m)
    }

    /// e^{s(t)}, the mean growth factor of a single line of descent.
    pub fn growth(&self) -> f64 {
        self.s.exp()
    }
}

/// Precomputed cumulative integrals on a dense grid over `[0, horizon]`.
///
/// Immutable after construction and safe to share across threads. Off-grid
/// queries advance the stored values with the builder's own quadrature
/// stencil, so they are exact at grid points, smooth inside cells and
/// monotone to rounding where the integrand is nonnegative.
#[derive(Debug, Clone)]
pub struct IntegralTables {
    params: ModelParams,
    grid: Vec<f64>,
    s: Vec<f64>,
    l: Vec<f64>,
    m: Vec<f64>,
    n: Vec<f64>,
    sigma: Vec<f64>,
    mu_cum: Vec<f64>,
    nu_cum: Vec<f64>,
}

impl IntegralTables {
    /// Build tables with cumulative per-interval Simpson quadrature.
    ///
    /// Schedule knots are forced onto the grid so every interval has a smooth
    /// integrand. One refinement pass splits intervals whose contribution to
    /// the identity residual exceeds a proportional share of `tol`.
    pub fn build(params: &ModelParams, step: f64, tol: f64) -> Result<Self> {
        if !step.is_finite() || step <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "grid step must be positive, got {step}"
            )));
        }
        if !tol.is_finite() || tol <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {tol}"
            )));
        }

        let grid = base_grid(params, step);
        let mut tables = Self::integrate(params.clone(), grid)?;

        // Identity residuals are accumulated per interval, so an interval's
        // increment localizes its quadrature error. The budget scales with
        // the magnitude of the table values: for long horizons with negative
        // net rate, L and M grow exponentially and an absolute 1e-9 would be
        // below the floating-point floor.
        let budget = tol * tables.identity_scale();
        let horizon = params.horizon;
        let residuals = tables.identity_residuals();
        let mut extra: Vec<f64> = Vec::new();
        for i in 0..tables.grid.len() - 1 {
            let h = tables.grid[i + 1] - tables.grid[i];
            if (residuals[i + 1] - residuals[i]).abs() > budget * h / horizon {
                extra.push(tables.grid[i] + h / 2.0);
            }
        }
        if !extra.is_empty() {
            let mut grid = tables.grid;
            grid.extend(extra);
            grid.sort_by(|a, b| a.total_cmp(b));
            tables = Self::integrate(params.clone(), grid)?;
        }

        let worst = tables.max_identity_residual();
        if worst > budget {
            return Err(Error::QuadratureNonConvergent(format!(
                "identity residual {worst:e} exceeds budget {budget:e} after refinement"
            )));
        }
        Ok(tables)
    }

    /// Build with the default step and tolerance.
    pub fn build_default(params: &ModelParams) -> Result<Self> {
        Self::build(params, DEFAULT_STEP, DEFAULT_TOL)
    }

    fn integrate(params: ModelParams, grid: Vec<f64>) -> Result<Self> {
        let len = grid.len();
        let mut s = vec![0.0; len];
        let mut l = vec![0.0; len];
        let mut m = vec![0.0; len];
        let mut n = vec![0.0; len];
        let mut sigma = vec![0.0; len];
        let mut mu_cum = vec![0.0; len];
        let mut nu_cum = vec![0.0; len];

        // Right endpoints take the left limit of the rates: a cell that ends
        // exactly at an instantaneous step must integrate the pre-step value.
        let net = |t: f64| params.lambda.eval(t) - params.mu.eval(t);
        let net_left = |t: f64| params.lambda.eval_left(t) - params.mu.eval_left(t);
        for i in 0..len - 1 {
            let (a, b) = (grid[i], grid[i + 1]);
            let h = b - a;
            let mid = a + h / 2.0;

            // s first, at the midpoint and the right endpoint, each by a
            // three-point Simpson over its own half interval.
            let s_a = s[i];
            let s_mid = s_a + simpson3(&net, a, mid);
            let s_b = s_mid + h / 12.0 * (net(mid) + 4.0 * net(mid + h / 4.0) + net_left(b));
            let (es_a, es_mid, es_b) = ((-s_a).exp(), (-s_mid).exp(), (-s_b).exp());
            if !(s_b.is_finite() && es_a.is_finite() && es_mid.is_finite() && es_b.is_finite()) {
                return Err(Error::QuadratureNonConvergent(format!(
                    "non-finite integrand near t = {b}"
                )));
            }
            s[i + 1] = s_b;

            let w = h / 6.0;
            let (lam_a, lam_mid, lam_b) = (
                params.lambda.eval(a),
                params.lambda.eval(mid),
                params.lambda.eval_left(b),
            );
            let (mu_a, mu_mid, mu_b) =
                (params.mu.eval(a), params.mu.eval(mid), params.mu.eval_left(b));
            let (nu_a, nu_mid, nu_b) =
                (params.nu_rate(a), params.nu_rate(mid), params.nu_rate_left(b));

            l[i + 1] = l[i] + w * (lam_a * es_a + 4.0 * lam_mid * es_mid + lam_b * es_b);
            m[i + 1] = m[i] + w * (mu_a * es_a + 4.0 * mu_mid * es_mid + mu_b * es_b);
            n[i + 1] = n[i] + w * (nu_a * es_a + 4.0 * nu_mid * es_mid + nu_b * es_b);
            sigma[i + 1] = sigma[i] + w * (es_a + 4.0 * es_mid + es_b);
            mu_cum[i + 1] = mu_cum[i] + w * (mu_a + 4.0 * mu_mid + mu_b);
            nu_cum[i + 1] = nu_cum[i] + w * (nu_a + 4.0 * nu_mid + nu_b);
        }

        Ok(Self {
            params,
            grid,
            s,
            l,
            m,
            n,
            sigma,
            mu_cum,
            nu_cum,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn horizon(&self) -> f64 {
        self.params.horizon
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Identity residual L - M + e^{-s} - 1 at every grid point.
    pub fn identity_residuals(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| self.l[i] - self.m[i] + (-self.s[i]).exp() - 1.0)
            .collect()
    }

    pub fn max_identity_residual(&self) -> f64 {
        self.identity_residuals()
            .iter()
            .fold(0.0_f64, |acc, r| acc.max(r.abs()))
    }

    fn identity_scale(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| self.l[i].abs() + self.m[i].abs() + (-self.s[i]).exp())
            .fold(1.0_f64, f64::max)
    }

    /// Table row at `t ∈ [0, horizon]`.
    ///
    /// Off-grid values come from re-running the builder's own three-point
    /// Simpson from the left grid point, not from interpolating the stored
    /// arrays: that reproduces grid values bit-for-bit, varies smoothly
    /// inside each cell (downstream adaptive quadrature depends on this),
    /// and keeps the cumulative arrays nondecreasing to rounding.
    pub fn query(&self, t: f64) -> Result<TablePoint> {
        let horizon = self.horizon();
        if !t.is_finite() || t < 0.0 || t > horizon * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::OutOfRange { t, horizon });
        }
        let t = t.min(horizon);
        let i = self.segment(t);
        let g = self.grid[i];
        if t == g {
            return Ok(TablePoint {
                t,
                s: self.s[i],
                l: self.l[i],
                m: self.m[i],
                n: self.n[i],
                sigma: self.sigma[i],
                gamma: (-self.mu_cum[i]).exp(),
            });
        }
        let cell = self.integrate_cell(i, t);
        Ok(TablePoint {
            t,
            s: cell.s,
            l: cell.l,
            m: cell.m,
            n: cell.n,
            sigma: cell.sigma,
            gamma: (-cell.mu_cum).exp(),
        })
    }

    /// Cumulative immigration intensity ∫₀ᵗ ν(u) du.
    pub fn nu_cumulative(&self, t: f64) -> Result<f64> {
        let horizon = self.horizon();
        if !t.is_finite() || t < 0.0 || t > horizon * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::OutOfRange { t, horizon });
        }
        let t = t.min(horizon);
        let i = self.segment(t);
        if t == self.grid[i] {
            return Ok(self.nu_cum[i]);
        }
        Ok(self.integrate_cell(i, t).nu_cum)
    }

    /// Advance every cumulative quantity from grid point `i` to `t` inside
    /// cell `i`, with the same stencil the builder used.
    fn integrate_cell(&self, i: usize, t: f64) -> CellPoint {
        let params = &self.params;
        let net = |u: f64| params.lambda.eval(u) - params.mu.eval(u);
        let g = self.grid[i];
        let h = t - g;
        let mid = g + h / 2.0;

        let s_g = self.s[i];
        let s_mid = s_g + simpson3(&net, g, mid);
        let s_t = s_mid + simpson3(&net, mid, t);
        let (es_g, es_mid, es_t) = ((-s_g).exp(), (-s_mid).exp(), (-s_t).exp());

        let w = h / 6.0;
        let (lam_g, lam_mid, lam_t) = (
            params.lambda.eval(g),
            params.lambda.eval(mid),
            params.lambda.eval(t),
        );
        let (mu_g, mu_mid, mu_t) = (params.mu.eval(g), params.mu.eval(mid), params.mu.eval(t));
        let (nu_g, nu_mid, nu_t) = (params.nu_rate(g), params.nu_rate(mid), params.nu_rate(t));

        CellPoint {
            s: s_t,
            l: self.l[i] + w * (lam_g * es_g + 4.0 * lam_mid * es_mid + lam_t * es_t),
            m: self.m[i] + w * (mu_g * es_g + 4.0 * mu_mid * es_mid + mu_t * es_t),
            n: self.n[i] + w * (nu_g * es_g + 4.0 * nu_mid * es_mid + nu_t * es_t),
            sigma: self.sigma[i] + w * (es_g + 4.0 * es_mid + es_t),
            mu_cum: self.mu_cum[i] + w * (mu_g + 4.0 * mu_mid + mu_t),
            nu_cum: self.nu_cum[i] + w * (nu_g + 4.0 * nu_mid + nu_t),
        }
    }

    /// Table row for `t` possibly past the horizon, using the constant-rate
    /// closed forms beyond the last schedule knot. Requires every knot to lie
    /// within the horizon.
    pub fn query_extended(&self, t: f64) -> Result<TablePoint> {
        if t <= self.horizon() {
            return self.query(t);
        }
        let last_knot = self.params.last_knot();
        if last_knot > self.horizon() + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "cannot extend past horizon: schedule still varies at t = {last_knot}"
            )));
        }
        let base = self.query(self.horizon())?;
        let lam = self.params.lambda.v1;
        let mu = self.params.mu.v1;
        let nu = match self.params.nu {
            NuMode::Proportional { r } => r * lam,
            NuMode::Schedule { schedule } => schedule.v1,
        };
        let a = lam - mu;
        let dt = t - base.t;
        let s = base.s + a * dt;
        // ∫ e^{-s(u)} du over the constant-rate stretch.
        let es0 = (-base.s).exp();
        let stretch = if a.abs() < 1e-14 {
            es0 * dt
        } else {
            es0 * (1.0 - (-a * dt).exp()) / a
        };
        Ok(TablePoint {
            t,
            s,
            l: base.l + lam * stretch,
            m: base.m + mu * stretch,
            n: base.n + nu * stretch,
            sigma: base.sigma + stretch,
            gamma: base.gamma * (-mu * dt).exp(),
        })
    }

    fn segment(&self, t: f64) -> usize {
        let k = self.grid.partition_point(|&g| g <= t);
        k.saturating_sub(1).min(self.grid.len() - 2)
    }
}

/// Cumulative values advanced partway into a cell.
struct CellPoint {
    s: f64,
    l: f64,
    m: f64,
    n: f64,
    sigma: f64,
    mu_cum: f64,
    nu_cum: f64,
}

fn base_grid(params: &ModelParams, step: f64) -> Vec<f64> {
    let horizon = params.horizon;
    let steps = (horizon / step).ceil().max(1.0) as usize;
    let mut grid: Vec<f64> = (0..steps).map(|i| i as f64 * step).collect();
    grid.push(horizon);
    for k in params.knots() {
        if k > 0.0 && k < horizon {
            grid.push(k);
        }
    }
    // A transition narrower than the base step still needs enough points to
    // resolve its half cosine.
    for (t1, d) in params.transition_windows() {
        let spacing = (d / 8.0).min(step);
        let mut u = t1 + spacing;
        while u < (t1 + d).min(horizon) - spacing / 2.0 {
            if u > 0.0 {
                grid.push(u);
            }
            u += spacing;
        }
    }
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup_by(|a, b| (*a - *b).abs() <= step * 1e-9);
    grid
}

/// Three-point Simpson over `[a, b]` with an exact midpoint evaluation.
fn simpson3(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let h = b - a;
    h / 6.0 * (f(a) + 4.0 * f(a + h / 2.0) + f(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn paper_lambda() -> RateSchedule {
        RateSchedule::new(0.3, 0.06, 50.0, 5.0).unwrap()
    }

    pub(crate) fn paper_params() -> ModelParams {
        ModelParams::new(
            paper_lambda(),
            RateSchedule::constant(0.1).unwrap(),
            NuMode::Proportional { r: 2.0 / 3.0 },
            0,
            0.02,
            350.0,
        )
        .unwrap()
    }

    #[test]
    fn schedule_flat_before_transition() {
        let s = paper_lambda();
        assert_eq!(s.eval(10.0), 0.3);
        assert_eq!(s.eval(0.0), 0.3);
    }

    #[test]
    fn schedule_cosine_midpoint_is_average() {
        let s = paper_lambda();
        assert!((s.eval(52.5) - 0.18).abs() < 1e-15);
    }

    #[test]
    fn schedule_flat_after_transition() {
        let s = RateSchedule::new(0.2, 0.04, 50.0, 5.0).unwrap();
        assert_eq!(s.eval(55.0), 0.04);
        assert_eq!(s.eval(100.0), 0.04);
    }

    #[test]
    fn schedule_continuous_at_endpoints() {
        let s = paper_lambda();
        assert_eq!(s.eval(50.0), 0.3);
        assert!((s.eval(50.0 + 1e-9) - 0.3).abs() < 1e-6);
        assert!((s.eval(55.0 - 1e-9) - 0.06).abs() < 1e-6);
        assert_eq!(s.eval(55.0), 0.06);
    }

    #[test]
    fn schedule_instantaneous_step_when_d_zero() {
        let s = RateSchedule::new(0.3, 0.06, 50.0, 0.0).unwrap();
        assert_eq!(s.eval(50.0 - 1e-12), 0.3);
        assert_eq!(s.eval(50.0), 0.06);
    }

    #[test]
    #[should_panic(expected = "negative time")]
    fn schedule_rejects_negative_time() {
        paper_lambda().eval(-1.0);
    }

    #[test]
    fn schedule_rejects_negative_rate() {
        assert!(RateSchedule::new(-0.1, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn tables_match_constant_rate_closed_forms_at_t10() {
        // On the constant prefix, s = a0 t, L = (λ0/a0)(1 - e^{-a0 t}),
        // M and N likewise; computed here symbolically as the oracle.
        let tables = IntegralTables::build_default(&paper_params()).unwrap();
        let p = tables.query(10.0).unwrap();
        let a0 = 0.2_f64;
        let decay = 1.0 - (-a0 * 10.0_f64).exp();
        assert!((p.s - 2.0).abs() < 1e-8, "s = {}", p.s);
        assert!((p.l - 0.3 / a0 * decay).abs() < 1e-8, "L = {}", p.l);
        assert!((p.m - 0.1 / a0 * decay).abs() < 1e-8, "M = {}", p.m);
        assert!((p.n - 0.2 / a0 * decay).abs() < 1e-8, "N = {}", p.n);
        assert!((p.gamma - (-1.0_f64).exp()).abs() < 1e-8, "gamma = {}", p.gamma);
    }

    #[test]
    fn tables_zero_at_origin() {
        let tables = IntegralTables::build_default(&paper_params()).unwrap();
        let p = tables.query(0.0).unwrap();
        assert_eq!((p.s, p.l, p.m, p.n, p.sigma), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!(p.gamma, 1.0);
    }

    #[test]
    fn identity_holds_on_every_grid_point() {
        let tables = IntegralTables::build_default(&paper_params()).unwrap();
        assert!(
            tables.max_identity_residual() <= 1e-8,
            "residual {}",
            tables.max_identity_residual()
        );
    }

    #[test]
    fn tables_monotone_where_required() {
        let tables = IntegralTables::build_default(&paper_params()).unwrap();
        for w in tables.l.windows(2) {
            assert!(w[1] >= w[0]);
        }
        for w in tables.m.windows(2) {
            assert!(w[1] >= w[0]);
        }
        for w in tables.n.windows(2) {
            assert!(w[1] >= w[0]);
        }
        for w in tables.sigma.windows(2) {
            assert!(w[1] >= w[0]);
        }
        for w in tables.mu_cum.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn halving_step_changes_little() {
        let params = paper_params();
        let coarse = IntegralTables::build(&params, 0.02, 1e-9).unwrap();
        let fine = IntegralTables::build(&params, 0.01, 1e-9).unwrap();
        // Multiples of the coarse step are grid points of both builds, so
        // this compares quadrature alone; the off-grid point also carries
        // interpolation wiggle near the knot and gets a looser bound.
        for &t in &[1.0, 10.0, 49.98, 52.5, 55.0, 120.0, 350.0] {
            let a = coarse.query(t).unwrap();
            let b = fine.query(t).unwrap();
            let scale = 1.0 + a.l.abs().max(a.m.abs());
            assert!((a.s - b.s).abs() < 1e-9 * scale, "s differs at {t}");
            assert!((a.l - b.l).abs() < 1e-9 * scale, "L differs at {t}");
            assert!((a.m - b.m).abs() < 1e-9 * scale, "M differs at {t}");
            assert!((a.n - b.n).abs() < 1e-9 * scale, "N differs at {t}");
        }
        let a = coarse.query(50.01).unwrap();
        let b = fine.query(50.01).unwrap();
        assert!((a.s - b.s).abs() < 1e-7, "s differs off-grid near the knot");
    }

    #[test]
    fn query_exact_on_grid_points() {
        let tables = IntegralTables::build(&paper_params(), 0.25, 1e-9).unwrap();
        let i = tables.grid.len() / 2;
        let t = tables.grid[i];
        let p = tables.query(t).unwrap();
        assert_eq!(p.s, tables.s[i]);
        assert_eq!(p.l, tables.l[i]);
        assert_eq!(p.m, tables.m[i]);
    }

    #[test]
    fn query_outside_range_rejected() {
        let tables = IntegralTables::build_default(&paper_params()).unwrap();
        assert!(tables.query(-0.5).is_err());
        assert!(tables.query(351.0).is_err());
    }

    #[test]
    fn extension_continuous_at_horizon() {
        let tables = IntegralTables::build_default(&paper_params()).unwrap();
        let at = tables.query(350.0).unwrap();
        let ext = tables.query_extended(350.0 + 1e-9).unwrap();
        assert!((at.s - ext.s).abs() < 1e-7);
        assert!((at.l - ext.l).abs() < 1e-7);
        assert!((at.m - ext.m).abs() < 1e-7);
    }

    #[test]
    fn extension_matches_direct_build() {
        // Build to 400 days directly and compare with the closed-form
        // extension of the 350-day table.
        let mut params = paper_params();
        let short = IntegralTables::build_default(&params).unwrap();
        params.horizon = 400.0;
        let long = IntegralTables::build_default(&params).unwrap();
        let a = short.query_extended(400.0).unwrap();
        let b = long.query(400.0).unwrap();
        let scale = b.l.abs() + b.m.abs() + 1.0;
        assert!((a.s - b.s).abs() < 1e-8);
        assert!((a.l - b.l).abs() < 1e-9 * scale);
        assert!((a.m - b.m).abs() < 1e-9 * scale);
        assert!((a.n - b.n).abs() < 1e-9 * scale);
    }

    #[test]
    fn alpha_beta_forms_consistent() {
        let tables = IntegralTables::build_default(&paper_params()).unwrap();
        for &t in &[1.0, 10.0, 53.0, 120.0, 350.0] {
            let p = tables.query(t).unwrap();
            let direct = 1.0 - p.beta();
            let stable = p.one_minus_beta();
            assert!(
                (direct - stable).abs() < 1e-9,
                "1-beta mismatch at {t}: {direct} vs {stable}"
            );
            // identity form: 1 + M = L + e^{-s}, so α = 1 - 1/(e^{-s} + L)
            let alt_alpha = 1.0 - 1.0 / ((-p.s).exp() + p.l);
            assert!((p.alpha() - alt_alpha).abs() < 1e-9);
        }
    }
}
