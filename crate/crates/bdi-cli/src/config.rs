//! Experiment configuration file: one JSON document describing the model,
//! the grid, the ensemble and the outputs. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use bdi_core::rate_model::{IntegralTables, ModelParams, NuMode, RateSchedule};
use bdi_core::simulator::SimConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lambda: RateSchedule,
    pub mu: RateSchedule,
    pub nu: NuMode,
    pub i0: u64,
    pub r_f: f64,
    pub horizon: f64,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    #[serde(default = "default_grid_tol")]
    pub grid_tol: f64,
    pub master_seed: u64,
    pub n_runs: usize,
    #[serde(default = "default_max_events")]
    pub max_events: u64,
    pub checkpoints: Vec<f64>,
    #[serde(default)]
    pub pmf_times: Vec<f64>,
    /// Truncation for PMF tables; derived from mean + 12σ when absent.
    #[serde(default)]
    pub pmf_kmax: Option<usize>,
    #[serde(default = "default_report_step")]
    pub report_step: f64,
    pub out_dir: PathBuf,
}

fn default_grid_step() -> f64 {
    bdi_core::rate_model::DEFAULT_STEP
}

fn default_grid_tol() -> f64 {
    bdi_core::rate_model::DEFAULT_TOL
}

fn default_max_events() -> u64 {
    bdi_core::simulator::DEFAULT_MAX_EVENTS
}

fn default_report_step() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: Self = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        if config.n_runs == 0 {
            anyhow::bail!("n_runs must be at least 1");
        }
        if config.report_step <= 0.0 {
            anyhow::bail!("report_step must be positive");
        }
        Ok(config)
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        ModelParams::new(
            self.lambda,
            self.mu,
            self.nu,
            self.i0,
            self.r_f,
            self.horizon,
        )
        .map_err(Into::into)
    }

    pub fn tables(&self) -> Result<IntegralTables> {
        let params = self.model_params()?;
        IntegralTables::build(&params, self.grid_step, self.grid_tol).map_err(Into::into)
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        SimConfig::new(
            self.model_params()?,
            self.master_seed,
            self.n_runs,
            self.checkpoints.clone(),
            self.max_events,
        )
        .map_err(Into::into)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const PAPER_JSON: &str = include_str!("../../../configs/paper.json");

    #[test]
    fn bundled_config_parses() {
        let config: ExperimentConfig = serde_json::from_str(PAPER_JSON).unwrap();
        assert_eq!(config.lambda.v0, 0.3);
        assert_eq!(config.lambda.v1, 0.06);
        assert_eq!(config.mu.v0, 0.1);
        assert_eq!(config.horizon, 350.0);
        assert_eq!(config.r_f, 0.02);
        match config.nu {
            NuMode::Proportional { r } => assert!((r - 2.0 / 3.0).abs() < 1e-12),
            _ => panic!("paper config uses proportional immigration"),
        }
        config.model_params().unwrap();
        config.sim_config().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut doc: serde_json::Value = serde_json::from_str(PAPER_JSON).unwrap();
        doc.as_object_mut()
            .unwrap()
            .insert("surprise".into(), serde_json::json!(1));
        let err = serde_json::from_value::<ExperimentConfig>(doc);
        assert!(err.is_err(), "unknown top-level key must be rejected");

        let mut doc: serde_json::Value = serde_json::from_str(PAPER_JSON).unwrap();
        doc["lambda"]
            .as_object_mut()
            .unwrap()
            .insert("vx".into(), serde_json::json!(0.5));
        assert!(serde_json::from_value::<ExperimentConfig>(doc).is_err());
    }
}
