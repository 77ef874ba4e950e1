//! Exact event-driven simulation of the time-varying process.
//!
//! Candidate event times are drawn from a constant majorant rate
//! `Λ* = ν_max + (λ_max + μ_max) n` (schedule maxima, so `Λ(t, n) ≤ Λ*`
//! holds between state changes) and accepted with probability `Λ(t, n)/Λ*`;
//! one uniform draw both thins and types the event proportionally to
//! `ν(t) : λ(t) n : μ(t) n`. Each removal is independently labeled a death
//! with probability `r_f`.
//!
//! Runs are reproducible and order-independent: run `i` owns the ChaCha
//! stream `i` of the master seed, so an ensemble gives identical results
//! under any parallel schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rate_model::ModelParams;

/// Default cap on accepted events per run.
pub const DEFAULT_MAX_EVENTS: u64 = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    /// External arrival of one new infected individual.
    Arrival,
    /// Internal infection by a current individual.
    Birth,
    /// Removal not labeled as a death.
    Recovery,
    /// Removal labeled as a death.
    Death,
}

impl EventKind {
    pub fn increments_population(self) -> bool {
        matches!(self, EventKind::Arrival | EventKind::Birth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunStatus {
    ReachedHorizon,
    /// Population hit zero with no immigration to restart it.
    Extinct { at: f64 },
    /// Event cap hit before the horizon; counters past `at` are unknown.
    Truncated { at: f64 },
}

/// One simulated sample path: the full event log plus terminal state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub i0: u64,
    pub horizon: f64,
    pub events: Vec<Event>,
    pub status: RunStatus,
}

/// Cumulative event counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub arrivals: u64,
    pub births: u64,
    pub recoveries: u64,
    pub deaths: u64,
}

impl Counts {
    /// All removals: recoveries plus the death-labeled subset.
    pub fn removals(&self) -> u64 {
        self.recoveries + self.deaths
    }
}

impl Trajectory {
    /// Time up to which the path is known.
    pub fn end_time(&self) -> f64 {
        match self.status {
            RunStatus::ReachedHorizon => self.horizon,
            RunStatus::Extinct { .. } => self.horizon,
            RunStatus::Truncated { at } => at,
        }
    }

    pub fn truncated_at(&self) -> Option<f64> {
        match self.status {
            RunStatus::Truncated { at } => Some(at),
            _ => None,
        }
    }

    pub fn extinction_time(&self) -> Option<f64> {
        match self.status {
            RunStatus::Extinct { at } => Some(at),
            _ => None,
        }
    }

    pub fn counts(&self) -> Counts {
        let mut c = Counts::default();
        for e in &self.events {
            match e.kind {
                EventKind::Arrival => c.arrivals += 1,
                EventKind::Birth => c.births += 1,
                EventKind::Recovery => c.recoveries += 1,
                EventKind::Death => c.deaths += 1,
            }
        }
        c
    }

    /// Population just after the last event at or before `t`.
    pub fn state_at(&self, t: f64) -> u64 {
        let mut n = self.i0;
        for e in &self.events {
            if e.t > t {
                break;
            }
            if e.kind.increments_population() {
                n += 1;
            } else {
                n -= 1;
            }
        }
        n
    }

    pub fn final_state(&self) -> u64 {
        self.state_at(f64::INFINITY)
    }
}

/// Day-indexed counters derived from one trajectory. Arrays cover the
/// complete days the run observed (a truncated run contributes only the
/// days it finished).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DailySeries {
    /// Arrivals plus births during `[d, d+1)`.
    pub i_new: Vec<u64>,
    /// Removals during `[d, d+1)`.
    pub r_new: Vec<u64>,
    /// Population at the end of day `d`.
    pub i_end_of_day: Vec<u64>,
}

/// Bin a trajectory's events into whole days.
pub fn daily_counters(trajectory: &Trajectory) -> DailySeries {
    let days = trajectory.end_time().floor() as usize;
    let mut series = DailySeries {
        i_new: vec![0; days],
        r_new: vec![0; days],
        i_end_of_day: vec![0; days],
    };
    let mut n = trajectory.i0;
    let mut day = 0usize;
    for e in &trajectory.events {
        let event_day = e.t.floor() as usize;
        while day < days && day < event_day {
            series.i_end_of_day[day] = n;
            day += 1;
        }
        if e.kind.increments_population() {
            n += 1;
            if event_day < days {
                series.i_new[event_day] += 1;
            }
        } else {
            n -= 1;
            if event_day < days {
                series.r_new[event_day] += 1;
            }
        }
    }
    while day < days {
        series.i_end_of_day[day] = n;
        day += 1;
    }
    series
}

/// Simulation setup: model, seeding, replication and safety cap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub params: ModelParams,
    pub master_seed: u64,
    pub n_runs: usize,
    pub checkpoints: Vec<f64>,
    pub max_events: u64,
}

impl SimConfig {
    pub fn new(
        params: ModelParams,
        master_seed: u64,
        n_runs: usize,
        checkpoints: Vec<f64>,
        max_events: u64,
    ) -> Result<Self> {
        if n_runs == 0 {
            return Err(Error::InvalidParameter("need at least one run".into()));
        }
        if max_events == 0 {
            return Err(Error::InvalidParameter("event cap must be positive".into()));
        }
        for &c in &checkpoints {
            if !(0.0..=params.horizon).contains(&c) {
                return Err(Error::InvalidParameter(format!(
                    "checkpoint {c} outside [0, {}]",
                    params.horizon
                )));
            }
        }
        Ok(Self {
            params,
            master_seed,
            n_runs,
            checkpoints,
            max_events,
        })
    }

    fn rng_for_run(&self, run_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(run_index);
        rng
    }
}

/// Simulate one sample path by thinning.
pub fn simulate_path(config: &SimConfig, run_index: u64) -> Trajectory {
    let params = &config.params;
    let mut rng = config.rng_for_run(run_index);
    let horizon = params.horizon;
    let nu_zero = params.nu_is_zero();
    let nu_cap = params.nu_max();
    let per_head_cap = params.lambda.max_rate() + params.mu.max_rate();
    let r_f = params.r_f;

    let mut t = 0.0_f64;
    let mut n = params.i0;
    let mut events: Vec<Event> = Vec::new();

    let status = loop {
        if nu_zero && n == 0 {
            break RunStatus::Extinct { at: t };
        }
        if events.len() as u64 >= config.max_events {
            break RunStatus::Truncated { at: t };
        }
        let cap = nu_cap + per_head_cap * n as f64;
        if cap <= 0.0 {
            break RunStatus::ReachedHorizon;
        }
        // candidate from the majorant; 1-u stays in (0, 1]
        let u: f64 = rng.random();
        let mut next = t + -(1.0 - u).ln() / cap;
        if next >= horizon {
            break RunStatus::ReachedHorizon;
        }
        if next <= t {
            next = t.next_up();
        }
        t = next;

        let nu_t = params.nu_rate(t);
        let head_rates = n as f64;
        let birth_rate = params.lambda.eval(t) * head_rates;
        let removal_rate = params.mu.eval(t) * head_rates;
        let pick: f64 = rng.random::<f64>() * cap;
        if pick < nu_t {
            n += 1;
            events.push(Event {
                t,
                kind: EventKind::Arrival,
            });
        } else if pick < nu_t + birth_rate {
            n += 1;
            events.push(Event {
                t,
                kind: EventKind::Birth,
            });
        } else if pick < nu_t + birth_rate + removal_rate {
            n -= 1;
            let kind = if rng.random::<f64>() < r_f {
                EventKind::Death
            } else {
                EventKind::Recovery
            };
            events.push(Event { t, kind });
        }
        // otherwise thinned: the candidate is discarded and time moves on
    };

    Trajectory {
        i0: params.i0,
        horizon,
        events,
        status,
    }
}

/// Per-run digest retained by the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub run_index: u64,
    /// Population at each configured checkpoint; `None` past a truncation.
    pub checkpoint_states: Vec<Option<u64>>,
    pub extinction_time: Option<f64>,
    pub truncated_at: Option<f64>,
    pub end_time: f64,
    pub counts: Counts,
    #[serde(skip)]
    pub daily: DailySeries,
}

/// Summarize one trajectory against the configured checkpoints.
pub fn summarize_trajectory(
    trajectory: &Trajectory,
    checkpoints: &[f64],
    run_index: u64,
) -> RunRecord {
    let end = trajectory.end_time();
    let known_until = match trajectory.status {
        RunStatus::Truncated { at } => at,
        _ => f64::INFINITY,
    };
    let checkpoint_states = checkpoints
        .iter()
        .map(|&c| {
            if c <= known_until {
                Some(trajectory.state_at(c))
            } else {
                None
            }
        })
        .collect();
    RunRecord {
        run_index,
        checkpoint_states,
        extinction_time: trajectory.extinction_time(),
        truncated_at: trajectory.truncated_at(),
        end_time: end,
        counts: trajectory.counts(),
        daily: daily_counters(trajectory),
    }
}

/// Checkpoint samples and extinction statistics across an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub checkpoints: Vec<f64>,
    pub horizon: f64,
    pub n_runs: usize,
    pub n_truncated: usize,
    pub runs: Vec<RunRecord>,
}

impl EnsembleSummary {
    /// States of every run at checkpoint `idx`.
    pub fn states_at(&self, idx: usize) -> Vec<Option<u64>> {
        self.runs
            .iter()
            .map(|r| r.checkpoint_states[idx])
            .collect()
    }

    pub fn extinct_fraction(&self) -> f64 {
        let extinct = self
            .runs
            .iter()
            .filter(|r| r.extinction_time.is_some())
            .count();
        extinct as f64 / self.n_runs as f64
    }

    pub fn extinction_times(&self) -> Vec<f64> {
        self.runs.iter().filter_map(|r| r.extinction_time).collect()
    }
}

/// Run `n_runs` independent paths (in parallel) and collect their digests
/// in run order.
pub fn simulate_ensemble(config: &SimConfig) -> EnsembleSummary {
    let runs: Vec<RunRecord> = (0..config.n_runs as u64)
        .into_par_iter()
        .map(|i| {
            let trajectory = simulate_path(config, i);
            summarize_trajectory(&trajectory, &config.checkpoints, i)
        })
        .collect();
    let n_truncated = runs.iter().filter(|r| r.truncated_at.is_some()).count();
    EnsembleSummary {
        checkpoints: config.checkpoints.clone(),
        horizon: config.params.horizon,
        n_runs: config.n_runs,
        n_truncated,
        runs,
    }
}
