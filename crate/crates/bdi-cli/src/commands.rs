//! Subcommand implementations: analytic tables, moments, PMF cross
//! sections, ensemble simulation and the simulation-vs-analytics validator.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use bdi_core::analytic;
use bdi_core::pgf;
use bdi_core::rate_model::IntegralTables;
use bdi_core::simulator::{
    daily_counters, simulate_path, summarize_trajectory, EnsembleSummary, RunRecord,
};
use bdi_core::validation;

use crate::config::ExperimentConfig;
use crate::output::{write_json, CsvCell, CsvWriter};

fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn report_times(config: &ExperimentConfig) -> Vec<f64> {
    let mut ts = Vec::new();
    let mut t = 0.0;
    while t < config.horizon {
        ts.push(t);
        t += config.report_step;
    }
    ts.push(config.horizon);
    ts
}

/// Emit t, rates, cumulative integrals and the derived α, β, γ at the
/// reporting grid.
pub fn cmd_tables(config: &ExperimentConfig) -> Result<()> {
    ensure_out_dir(&config.out_dir)?;
    let tables = config.tables()?;
    let params = tables.params().clone();
    let mut csv = CsvWriter::new(&[
        "t", "lambda", "mu", "nu", "s", "L", "M", "N", "Sigma", "alpha", "beta", "gamma",
    ]);
    for t in report_times(config) {
        let p = tables.query(t)?;
        csv.row(&[
            CsvCell::Float(t),
            CsvCell::Float(params.lambda.eval(t)),
            CsvCell::Float(params.mu.eval(t)),
            CsvCell::Float(params.nu_rate(t)),
            CsvCell::Float(p.s),
            CsvCell::Float(p.l),
            CsvCell::Float(p.m),
            CsvCell::Float(p.n),
            CsvCell::Float(p.sigma),
            CsvCell::Float(p.alpha()),
            CsvCell::Float(p.beta()),
            CsvCell::Float(p.gamma),
        ]);
    }
    let path = config.out_dir.join("tables.csv");
    csv.save(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn p0_full(tables: &IntegralTables, t: f64) -> Result<f64> {
    let params = tables.params();
    if let Some(r) = params.proportional_ratio() {
        let p = tables.query(t)?;
        let id_part = if r > 0.0 {
            (r * (-(1.0 + p.m).ln() - p.s)).exp()
        } else {
            1.0
        };
        Ok(p.alpha().powi(params.i0 as i32) * id_part)
    } else {
        let z = num_complex::Complex64::new(0.0, 0.0);
        Ok(pgf::pgf_bdi(z, tables, t)?.re)
    }
}

/// Mean paths, variance, coefficient of variation, empty-state probability,
/// cumulative means and expected daily increments, one row per day.
pub fn cmd_moments(config: &ExperimentConfig) -> Result<()> {
    ensure_out_dir(&config.out_dir)?;
    let tables = config.tables()?;
    let cumulative = analytic::cumulative_means_series(&tables)?;
    let mut csv = CsvWriter::new(&[
        "t", "mean_bd", "mean_bdi0", "var", "cv", "P0", "A_bar", "B_bar", "R_bar", "I_new",
        "R_new",
    ]);
    let bd_seed = tables.params().i0.max(1) as f64;
    for (day, window) in cumulative.windows(2).enumerate() {
        let t = day as f64;
        let p = tables.query(t)?;
        let mean_full = analytic::mean_bdi(&tables, t)?;
        let var = analytic::variance_bdi(&tables, t)?;
        let cv = if mean_full > 0.0 {
            var.sqrt() / mean_full
        } else {
            f64::INFINITY
        };
        let (a0, b0, r0) = window[0];
        let (a1, b1, r1) = window[1];
        csv.row(&[
            CsvCell::Float(t),
            CsvCell::Float(bd_seed * p.s.exp()),
            CsvCell::Float(analytic::mean_bdi0(&tables, t)?),
            CsvCell::Float(var),
            CsvCell::Float(cv),
            CsvCell::Float(p0_full(&tables, t)?),
            CsvCell::Float(a0),
            CsvCell::Float(b0),
            CsvCell::Float(r0),
            CsvCell::Float((a1 - a0) + (b1 - b0)),
            CsvCell::Float(r1 - r0),
        ]);
    }
    let path = config.out_dir.join("moments.csv");
    csv.save(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn time_tag(t: f64) -> String {
    if t.fract() == 0.0 {
        format!("{}", t as i64)
    } else {
        format!("{t}").replace('.', "p")
    }
}

fn closed_form_pmf_available(tables: &IntegralTables) -> bool {
    let params = tables.params();
    params.nu_is_zero() || (params.i0 == 0 && params.proportional_ratio().is_some())
}

/// Analytic PMF cross sections: one file per requested time (over k), and
/// one file over t for a fixed set of k values when a closed form makes the
/// head of the distribution exact at any truncation.
pub fn cmd_pmf(config: &ExperimentConfig) -> Result<()> {
    ensure_out_dir(&config.out_dir)?;
    let tables = config.tables()?;
    let times = if config.pmf_times.is_empty() {
        config.checkpoints.clone()
    } else {
        config.pmf_times.clone()
    };
    for &t in &times {
        let kmax = match config.pmf_kmax {
            Some(k) => k,
            None => pgf::default_kmax(&tables, t)?,
        };
        let pmf = pgf::analytic_pmf(&tables, t, kmax)?;
        let mut csv = CsvWriter::new(&["k", "p"]);
        for (k, &mass) in pmf.p.iter().enumerate() {
            csv.row(&[CsvCell::Int(k as i64), CsvCell::Float(mass)]);
        }
        let path = config.out_dir.join(format!("pmf_t{}.csv", time_tag(t)));
        csv.save(&path)?;
        println!("wrote {}", path.display());
    }

    if closed_form_pmf_available(&tables) {
        let ks = [0usize, 1, 2, 4, 8, 16, 32, 64, 128];
        let headers: Vec<String> = std::iter::once("t".to_string())
            .chain(ks.iter().map(|k| format!("p{k}")))
            .collect();
        let header_refs: Vec<&str> = headers.iter().map(|s| s.as_str()).collect();
        let mut csv = CsvWriter::new(&header_refs);
        let days = config.horizon.floor() as usize;
        for day in 0..=days {
            let t = day as f64;
            let pmf = pgf::analytic_pmf(&tables, t, 128)?;
            let mut cells = vec![CsvCell::Float(t)];
            cells.extend(ks.iter().map(|&k| CsvCell::Float(pmf.p[k])));
            csv.row(&cells);
        }
        let path = config.out_dir.join("pmf_cross_sections.csv");
        csv.save(&path)?;
        println!("wrote {}", path.display());
    } else {
        println!("skipping pmf_cross_sections.csv: no closed-form PMF head for this model");
    }
    Ok(())
}

#[derive(Serialize)]
struct EventLine {
    t: f64,
    kind: bdi_core::simulator::EventKind,
    #[serde(rename = "I")]
    population: u64,
}

const SIM_BATCH: usize = 16;

/// Simulate the configured ensemble, writing one JSON-lines event log and
/// one daily CSV per run plus an ensemble summary. Runs execute in parallel
/// batches; all writes happen in run order from this thread.
pub fn cmd_simulate(config: &ExperimentConfig) -> Result<()> {
    ensure_out_dir(&config.out_dir)?;
    let sim = config.sim_config()?;
    let mut records: Vec<RunRecord> = Vec::with_capacity(sim.n_runs);

    let mut start = 0usize;
    while start < sim.n_runs {
        let end = (start + SIM_BATCH).min(sim.n_runs);
        let trajectories: Vec<_> = (start as u64..end as u64)
            .into_par_iter()
            .map(|i| (i, simulate_path(&sim, i)))
            .collect();
        for (i, trajectory) in &trajectories {
            let events_path = config.out_dir.join(format!("run_{i:05}.jsonl"));
            let mut out = BufWriter::new(
                fs::File::create(&events_path)
                    .with_context(|| format!("cannot create {}", events_path.display()))?,
            );
            let mut population = trajectory.i0;
            for e in &trajectory.events {
                if e.kind.increments_population() {
                    population += 1;
                } else {
                    population -= 1;
                }
                let line = EventLine {
                    t: e.t,
                    kind: e.kind,
                    population,
                };
                serde_json::to_writer(&mut out, &line)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;

            let record = summarize_trajectory(trajectory, &sim.checkpoints, *i);
            let mut daily_csv = CsvWriter::new(&["day", "i_new", "r_new", "i_end_of_day"]);
            for d in 0..record.daily.i_new.len() {
                daily_csv.row(&[
                    CsvCell::Int(d as i64),
                    CsvCell::Int(record.daily.i_new[d] as i64),
                    CsvCell::Int(record.daily.r_new[d] as i64),
                    CsvCell::Int(record.daily.i_end_of_day[d] as i64),
                ]);
            }
            daily_csv.save(&config.out_dir.join(format!("daily_run_{i:05}.csv")))?;
            records.push(record);
        }
        start = end;
    }

    let n_truncated = records.iter().filter(|r| r.truncated_at.is_some()).count();
    let summary = EnsembleSummary {
        checkpoints: sim.checkpoints.clone(),
        horizon: sim.params.horizon,
        n_runs: sim.n_runs,
        n_truncated,
        runs: records,
    };
    let path = config.out_dir.join("ensemble_summary.json");
    write_json(&path, &summary)?;
    println!(
        "wrote {} runs to {} ({} truncated)",
        summary.n_runs,
        config.out_dir.display(),
        summary.n_truncated
    );
    Ok(())
}

#[derive(Serialize)]
struct CheckLine {
    name: String,
    passed: bool,
    detail: String,
}

#[derive(Serialize)]
struct ValidationReport {
    config_seed: u64,
    n_runs: usize,
    checks: Vec<CheckLine>,
    moment_rows: Vec<validation::MomentCheck>,
    gof_reports: Vec<validation::GofReport>,
    mean_peak_t: f64,
    mean_peak_value: f64,
    all_passed: bool,
}

/// Run the ensemble and test it against the closed forms: moment checks at
/// three/four standard errors, chi-square goodness of fit at each
/// checkpoint, and the extinction fraction when there is no immigration.
/// Returns whether every check passed.
pub fn cmd_validate(config: &ExperimentConfig) -> Result<bool> {
    ensure_out_dir(&config.out_dir)?;
    let tables = config.tables()?;
    let sim = config.sim_config()?;
    let summary = bdi_core::simulator::simulate_ensemble(&sim);

    let mut checks: Vec<CheckLine> = Vec::new();

    let mut targets = Vec::new();
    for &t in &sim.checkpoints {
        targets.push((
            t,
            analytic::mean_bdi(&tables, t)?,
            analytic::variance_bdi(&tables, t)?,
        ));
    }
    let moment_rows = validation::validate_moments(&summary, &targets)?;
    for row in &moment_rows {
        checks.push(CheckLine {
            name: format!("mean@t={}", row.t),
            passed: row.mean_ok,
            detail: format!(
                "empirical {:.6} vs analytic {:.6} (tol {:.6}, n={})",
                row.empirical_mean, row.analytic_mean, row.mean_tolerance, row.n
            ),
        });
        checks.push(CheckLine {
            name: format!("variance@t={}", row.t),
            passed: row.variance_ok,
            detail: format!(
                "empirical {:.6} vs analytic {:.6} (tol {:.6})",
                row.empirical_variance, row.analytic_variance, row.variance_tolerance
            ),
        });
    }

    let mut gof_reports = Vec::new();
    for &t in &sim.checkpoints {
        let counts = validation::empirical_counts(&summary, t)?;
        let kmax = pgf::default_kmax(&tables, t)?;
        let analytic_pmf = pgf::analytic_pmf(&tables, t, kmax)?;
        let report = validation::chi_square_gof(&counts, &analytic_pmf)?;
        if report.applicable {
            checks.push(CheckLine {
                name: format!("gof@t={t}"),
                passed: report.p_value > 0.001,
                detail: format!(
                    "chi2 {:.4} with {} dof, p = {:.6}",
                    report.statistic, report.dof, report.p_value
                ),
            });
        } else {
            checks.push(CheckLine {
                name: format!("gof@t={t}"),
                passed: true,
                detail: "inapplicable: fewer than two bins after merging".into(),
            });
        }
        gof_reports.push(report);
    }

    if sim.params.nu_is_zero() && sim.params.i0 >= 1 {
        let analytic_frac =
            analytic::extinction_cdf(&tables, tables.horizon(), sim.params.i0)?;
        let frac = summary.extinct_fraction();
        let se = (analytic_frac * (1.0 - analytic_frac) / summary.n_runs as f64)
            .sqrt()
            .max(f64::MIN_POSITIVE);
        checks.push(CheckLine {
            name: "extinct_fraction".into(),
            passed: (frac - analytic_frac).abs() <= 3.0 * se,
            detail: format!("empirical {frac:.4} vs analytic {analytic_frac:.4} (3SE {:.4})", 3.0 * se),
        });
    }

    let (peak_t, peak_value) = analytic::mean_peak(&tables)?;
    let all_passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        println!(
            "{} {} — {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    println!(
        "analytic mean path peaks at I = {peak_value:.1} near t = {peak_t:.2}; {} truncated runs",
        summary.n_truncated
    );

    let report = ValidationReport {
        config_seed: sim.master_seed,
        n_runs: sim.n_runs,
        checks,
        moment_rows,
        gof_reports,
        mean_peak_t: peak_t,
        mean_peak_value: peak_value,
        all_passed,
    };
    write_json(&config.out_dir.join("validation_report.json"), &report)?;
    Ok(all_passed)
}

/// Paths the plot command needs from a simulated ensemble.
pub struct PlotData {
    pub tables: IntegralTables,
    pub day_grid: Vec<f64>,
    /// Per run, population sampled at `day_grid`.
    pub paths: Vec<Vec<u64>>,
    /// First run's daily new infections.
    pub first_daily: Vec<u64>,
    /// Expected new infections per day.
    pub expected_daily: Vec<f64>,
    pub out_dir: PathBuf,
}

pub fn gather_plot_data(config: &ExperimentConfig) -> Result<PlotData> {
    ensure_out_dir(&config.out_dir)?;
    let tables = config.tables()?;
    let sim = config.sim_config()?;
    let shown = sim.n_runs.min(14);

    let days = config.horizon.floor() as usize;
    let day_grid: Vec<f64> = (0..=days).map(|d| d as f64).collect();

    let trajectories: Vec<_> = (0..shown as u64)
        .into_par_iter()
        .map(|i| simulate_path(&sim, i))
        .collect();
    let paths = trajectories
        .iter()
        .map(|tr| day_grid.iter().map(|&t| tr.state_at(t)).collect())
        .collect();
    let first_daily = daily_counters(&trajectories[0]).i_new;

    let cumulative = analytic::cumulative_means_series(&tables)?;
    let expected_daily = cumulative
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) + (w[1].1 - w[0].1))
        .collect();

    Ok(PlotData {
        tables,
        day_grid,
        paths,
        first_daily,
        expected_daily,
        out_dir: config.out_dir.clone(),
    })
}
