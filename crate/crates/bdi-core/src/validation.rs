//! Statistical comparison of simulated ensembles against the closed-form
//! distributions and moments.

use serde::Serialize;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::pgf::PmfVector;
use crate::simulator::EnsembleSummary;

/// One merged cell of a goodness-of-fit table. `k_hi = None` marks the
/// open-ended tail bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GofBin {
    pub k_lo: usize,
    pub k_hi: Option<usize>,
    pub observed: u64,
    pub expected: f64,
}

/// Pearson chi-square result against an analytic PMF.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GofReport {
    pub checkpoint: Option<f64>,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: Vec<GofBin>,
    /// False when fewer than two bins survive the expected-count floor.
    pub applicable: bool,
}

const MIN_EXPECTED: f64 = 5.0;

/// Normalized histogram of the ensemble states at one checkpoint.
/// Runs truncated before the checkpoint are excluded.
pub fn empirical_pmf(summary: &EnsembleSummary, checkpoint: f64, kmax: usize) -> Result<PmfVector> {
    let counts = empirical_counts(summary, checkpoint)?;
    let total: u64 = counts.iter().sum();
    let mut p = vec![0.0; kmax + 1];
    for (k, &c) in counts.iter().enumerate() {
        if k <= kmax {
            p[k] = c as f64 / total as f64;
        }
    }
    let mut pmf = PmfVector::from_masses(Some(checkpoint), p)?;
    // states beyond kmax belong to the tail by construction
    pmf.tail_mass = counts.iter().skip(kmax + 1).sum::<u64>() as f64 / total as f64;
    Ok(pmf)
}

/// Raw state counts (index = state) at one checkpoint.
pub fn empirical_counts(summary: &EnsembleSummary, checkpoint: f64) -> Result<Vec<u64>> {
    let idx = summary
        .checkpoints
        .iter()
        .position(|&c| (c - checkpoint).abs() <= 1e-12)
        .ok_or_else(|| {
            Error::InvalidParameter(format!("{checkpoint} is not a recorded checkpoint"))
        })?;
    let states = summary.states_at(idx);
    let known: Vec<u64> = states.into_iter().flatten().collect();
    if known.is_empty() {
        return Err(Error::Degenerate(
            "no runs reached the requested checkpoint".into(),
        ));
    }
    let top = *known.iter().max().unwrap() as usize;
    let mut counts = vec![0u64; top + 1];
    for s in known {
        counts[s as usize] += 1;
    }
    Ok(counts)
}

/// Pearson chi-square of observed state counts against an analytic PMF.
///
/// Bins are merged upward until each expected count reaches 5; everything
/// beyond the last closed bin is aggregated into one tail bin (merged
/// backward if itself too thin). Merging moves counts, never drops them.
pub fn chi_square_gof(observed: &[u64], analytic: &PmfVector) -> Result<GofReport> {
    let total: u64 = observed.iter().sum();
    if total < 100 {
        return Err(Error::InvalidParameter(format!(
            "need at least 100 observations, got {total}"
        )));
    }
    let total_f = total as f64;

    let mut bins: Vec<GofBin> = Vec::new();
    let mut acc_obs = 0u64;
    let mut acc_exp = 0.0;
    let mut lo = 0usize;
    for k in 0..=analytic.kmax() {
        acc_obs += observed.get(k).copied().unwrap_or(0);
        acc_exp += analytic.p[k] * total_f;
        if acc_exp >= MIN_EXPECTED {
            bins.push(GofBin {
                k_lo: lo,
                k_hi: Some(k),
                observed: acc_obs,
                expected: acc_exp,
            });
            acc_obs = 0;
            acc_exp = 0.0;
            lo = k + 1;
        }
    }
    // open tail: leftover accumulation, the analytic tail mass, and any
    // observations beyond the analytic support
    let beyond: u64 = observed
        .iter()
        .skip(analytic.kmax() + 1)
        .sum();
    let mut tail = GofBin {
        k_lo: lo,
        k_hi: None,
        observed: acc_obs + beyond,
        expected: acc_exp + analytic.tail_mass * total_f,
    };
    if tail.expected < MIN_EXPECTED {
        if let Some(prev) = bins.pop() {
            tail.k_lo = prev.k_lo;
            tail.observed += prev.observed;
            tail.expected += prev.expected;
        }
    }
    bins.push(tail);

    if bins.len() < 2 {
        return Ok(GofReport {
            checkpoint: analytic.t,
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
            bins,
            applicable: false,
        });
    }

    let statistic: f64 = bins
        .iter()
        .map(|b| (b.observed as f64 - b.expected).powi(2) / b.expected)
        .sum();
    let dof = bins.len() - 1;
    let p_value = if statistic == 0.0 {
        1.0
    } else {
        gamma_ur(dof as f64 / 2.0, statistic / 2.0)
    };
    Ok(GofReport {
        checkpoint: analytic.t,
        statistic,
        dof,
        p_value,
        bins,
        applicable: true,
    })
}

/// One row of the moment validation table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentCheck {
    pub t: f64,
    pub n: usize,
    pub empirical_mean: f64,
    pub analytic_mean: f64,
    /// Three standard errors of the sample mean.
    pub mean_tolerance: f64,
    pub mean_ok: bool,
    pub empirical_variance: f64,
    pub analytic_variance: f64,
    /// Four standard errors of the sample variance (normal approximation).
    pub variance_tolerance: f64,
    pub variance_ok: bool,
}

impl MomentCheck {
    pub fn passed(&self) -> bool {
        self.mean_ok && self.variance_ok
    }
}

/// Compare ensemble means and variances with analytic targets, one row per
/// checkpoint. `targets` pairs each checkpoint time with its analytic
/// (mean, variance).
pub fn validate_moments(
    summary: &EnsembleSummary,
    targets: &[(f64, f64, f64)],
) -> Result<Vec<MomentCheck>> {
    let mut out = Vec::with_capacity(targets.len());
    for &(t, analytic_mean, analytic_variance) in targets {
        let idx = summary
            .checkpoints
            .iter()
            .position(|&c| (c - t).abs() <= 1e-12)
            .ok_or_else(|| {
                Error::InvalidParameter(format!("{t} is not a recorded checkpoint"))
            })?;
        let xs: Vec<f64> = summary
            .states_at(idx)
            .into_iter()
            .flatten()
            .map(|s| s as f64)
            .collect();
        let n = xs.len();
        if n < 2 {
            return Err(Error::Degenerate(format!(
                "checkpoint {t} has {n} usable runs"
            )));
        }
        let nf = n as f64;
        let mean = xs.iter().sum::<f64>() / nf;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;

        let mean_tolerance = 3.0 * (var / nf).sqrt();
        // Var(s²) ≈ (m4 - s⁴)/n for large n
        let var_of_var = ((m4 - var * var) / nf).max(0.0);
        let variance_tolerance = 4.0 * var_of_var.sqrt();
        out.push(MomentCheck {
            t,
            n,
            empirical_mean: mean,
            analytic_mean,
            mean_tolerance,
            mean_ok: (mean - analytic_mean).abs() <= mean_tolerance,
            empirical_variance: var,
            analytic_variance,
            variance_tolerance,
            variance_ok: (var - analytic_variance).abs() <= variance_tolerance,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic;
    use crate::pgf;
    use crate::rate_model::{IntegralTables, ModelParams, NuMode, RateSchedule};
    use crate::simulator::{simulate_ensemble, SimConfig};
    use rand::{Rng, SeedableRng};

    fn paper_bdi(horizon: f64, i0: u64) -> ModelParams {
        ModelParams::new(
            RateSchedule::new(0.3, 0.06, 50.0, 5.0).unwrap(),
            RateSchedule::constant(0.1).unwrap(),
            NuMode::Proportional { r: 2.0 / 3.0 },
            i0,
            0.02,
            horizon,
        )
        .unwrap()
    }

    fn summary_at_state(states: &[u64], checkpoint: f64) -> EnsembleSummary {
        use crate::simulator::{Counts, DailySeries, RunRecord};
        let runs = states
            .iter()
            .enumerate()
            .map(|(i, &s)| RunRecord {
                run_index: i as u64,
                checkpoint_states: vec![Some(s)],
                extinction_time: None,
                truncated_at: None,
                end_time: checkpoint,
                counts: Counts::default(),
                daily: DailySeries::default(),
            })
            .collect::<Vec<_>>();
        EnsembleSummary {
            checkpoints: vec![checkpoint],
            horizon: checkpoint,
            n_runs: states.len(),
            n_truncated: 0,
            runs,
        }
    }

    #[test]
    fn empirical_point_masses() {
        let all_zero = summary_at_state(&[0; 50], 1.0);
        let pmf = empirical_pmf(&all_zero, 1.0, 8).unwrap();
        assert_eq!(pmf.p[0], 1.0);

        let single = summary_at_state(&[5], 1.0);
        let pmf = empirical_pmf(&single, 1.0, 8).unwrap();
        assert_eq!(pmf.p[5], 1.0);
    }

    #[test]
    fn gof_statistic_zero_for_exact_match() {
        // counts manufactured to match the analytic masses exactly
        let analytic = PmfVector::from_masses(None, vec![0.5, 0.3, 0.2]).unwrap();
        let observed = vec![500u64, 300, 200];
        let report = chi_square_gof(&observed, &analytic).unwrap();
        assert!(report.applicable);
        assert!(report.statistic.abs() < 1e-9);
        assert_eq!(report.p_value, 1.0);
        let counted: u64 = report.bins.iter().map(|b| b.observed).sum();
        assert_eq!(counted, 1000, "merging must preserve totals");
    }

    #[test]
    fn gof_bins_respect_expected_floor() {
        let analytic = pgf::pmf_nbd(2.0 / 3.0, 0.9, 2047).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        // draw from the analytic PMF itself: the null hypothesis is true
        let mut observed = vec![0u64; 2048];
        for _ in 0..5000 {
            let mut u: f64 = rng.random();
            let mut k = 0usize;
            while k < 2047 && u > analytic.p[k] {
                u -= analytic.p[k];
                k += 1;
            }
            observed[k] += 1;
        }
        let report = chi_square_gof(&observed, &analytic).unwrap();
        assert!(report.applicable);
        for b in &report.bins {
            assert!(b.expected >= MIN_EXPECTED, "bin below floor: {b:?}");
        }
        assert!(report.p_value > 0.001, "true null rejected: {report:?}");
        let counted: u64 = report.bins.iter().map(|b| b.observed).sum();
        assert_eq!(counted, 5000);
    }

    #[test]
    fn gof_degenerate_when_one_bin() {
        let analytic = PmfVector::from_masses(None, vec![1.0]).unwrap();
        let observed = vec![400u64];
        let report = chi_square_gof(&observed, &analytic).unwrap();
        assert!(!report.applicable);
    }

    #[test]
    fn gof_requires_observations() {
        let analytic = PmfVector::from_masses(None, vec![0.5, 0.5]).unwrap();
        assert!(chi_square_gof(&[10, 12], &analytic).is_err());
    }

    #[test]
    fn bdi_ensemble_passes_gof_and_moments_at_t10() {
        let params = paper_bdi(10.0, 0);
        let tables = IntegralTables::build_default(&params).unwrap();
        let cfg = SimConfig::new(params, 20240, 10_000, vec![10.0], 1 << 20).unwrap();
        let summary = simulate_ensemble(&cfg);

        let counts = empirical_counts(&summary, 10.0).unwrap();
        let beta = tables.query(10.0).unwrap().beta();
        let analytic_pmf = pgf::pmf_nbd(2.0 / 3.0, beta, 1023).unwrap();
        let report = chi_square_gof(&counts, &analytic_pmf).unwrap();
        assert!(report.p_value > 0.001, "GOF p = {}", report.p_value);

        let moments = analytic::moments_bdi0(&tables, 10.0).unwrap();
        let checks =
            validate_moments(&summary, &[(10.0, moments.mean, moments.variance)]).unwrap();
        assert!(checks[0].passed(), "moment check failed: {:?}", checks[0]);
        let mean = checks[0].empirical_mean;
        assert!((mean - 6.38905609893065).abs() <= checks[0].mean_tolerance);
    }

    #[test]
    fn deterministic_process_validates_exactly() {
        // μ = 0 pure death is frozen: mean i0, variance 0.
        let params = ModelParams::new(
            RateSchedule::constant(0.0).unwrap(),
            RateSchedule::constant(0.0).unwrap(),
            NuMode::Proportional { r: 0.0 },
            7,
            0.0,
            5.0,
        )
        .unwrap();
        let cfg = SimConfig::new(params, 1, 500, vec![5.0], 100).unwrap();
        let summary = simulate_ensemble(&cfg);
        let checks = validate_moments(&summary, &[(5.0, 7.0, 0.0)]).unwrap();
        assert!(checks[0].passed());
        assert_eq!(checks[0].empirical_variance, 0.0);
    }

    #[test]
    fn flat_region_cv_of_bd_survivors() {
        // BD with one ancestor at t in the flat region: sample cv within 10%
        // of the analytic plateau sqrt(2).
        let mut params = paper_bdi(30.0, 1);
        params.nu = NuMode::Proportional { r: 0.0 };
        let cfg = SimConfig::new(params, 77, 10_000, vec![30.0], 1 << 22).unwrap();
        let summary = simulate_ensemble(&cfg);
        let xs: Vec<f64> = summary
            .states_at(0)
            .into_iter()
            .flatten()
            .map(|s| s as f64)
            .collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let cv = var.sqrt() / mean;
        assert!(
            (cv - 1.41421356237310).abs() / 1.4142 < 0.10,
            "sampled cv {cv}"
        );
    }
}
