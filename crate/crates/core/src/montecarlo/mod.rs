//! Trajectory-level simulation of the time-changed queues: base queue paths
//! read off at inverse-subordinator times, busy periods and inter-event
//! times mapped through subordinator increments.

mod events;
mod ks;
mod states;

pub use events::{collect_inter_event_times, lag1_autocorrelation, simulate_busy_period, BusySamples, InterEventSamples};
pub use ks::{dkw_band, kolmogorov_pvalue, ks_statistic, ks_statistic_bounded, KsResult};
pub use states::{simulate_time_changed, EstimateTable, SimOutput};

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::exec::Exec;
use crate::queue::QueueParams;
use crate::subordinator::{sample_tempered_stable_increment, GammaParams, TemperedStableParams};

/// Operational clock driving the base queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeChange {
    None,
    Tempered { theta: f64, alpha: f64 },
    Gamma { a: f64, b: f64 },
}

impl TimeChange {
    /// `α = 1` makes the tempered subordinator the identity.
    pub fn tempered(theta: f64, alpha: f64) -> Result<Self> {
        if alpha == 1.0 && theta >= 0.0 {
            return Ok(TimeChange::None);
        }
        TemperedStableParams::new(theta, alpha)?;
        Ok(TimeChange::Tempered { theta, alpha })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TimeChange::None => Ok(()),
            TimeChange::Tempered { theta, alpha } => TemperedStableParams::new(theta, alpha).map(|_| ()),
            TimeChange::Gamma { a, b } => GammaParams::new(a, b).map(|_| ()),
        }
    }

    /// Sampler for subordinator increments `D(x + dt) − D(x)`.
    pub fn increments(&self) -> Result<Increments> {
        self.validate()?;
        Ok(match *self {
            TimeChange::None => Increments::Identity,
            TimeChange::Tempered { theta, alpha } => Increments::Tempered(TemperedStableParams { theta, alpha }),
            TimeChange::Gamma { a, b } => Increments::Gamma { a, b, fixed: None },
        })
    }
}

#[derive(Debug, Clone)]
pub enum Increments {
    Identity,
    Tempered(TemperedStableParams),
    Gamma { a: f64, b: f64, fixed: Option<(f64, Gamma<f64>)> },
}

impl Increments {
    /// Pre-builds the gamma law for a fixed step.
    pub fn with_step(mut self, dt: f64) -> Result<Self> {
        if let Increments::Gamma { a, b, fixed } = &mut self {
            let g = Gamma::new(*a * dt, 1.0 / *b).map_err(|e| Error::Domain(format!("gamma increment: {e}")))?;
            *fixed = Some((dt, g));
        }
        Ok(self)
    }

    pub fn sample<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> Result<f64> {
        match self {
            Increments::Identity => Ok(dt),
            Increments::Tempered(p) => sample_tempered_stable_increment(*p, dt, rng),
            Increments::Gamma { a, b, fixed } => {
                if let Some((h, g)) = fixed {
                    if *h == dt {
                        return Ok(g.sample(rng).max(f64::MIN_POSITIVE));
                    }
                }
                let g = Gamma::new(a * dt, 1.0 / b).map_err(|e| Error::Domain(format!("gamma increment: {e}")))?;
                Ok(g.sample(rng).max(f64::MIN_POSITIVE))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPlan {
    pub qp: QueueParams,
    pub time_change: TimeChange,
    /// Calendar horizon; every target time must lie in `[0, horizon]`.
    pub horizon: f64,
    pub n_paths: usize,
    /// Operational step of the inverse-subordinator grid.
    pub step: f64,
    pub seed: u64,
    pub times: Vec<f64>,
    /// Phase counts `0..=max_state` get their own column.
    pub max_state: usize,
    /// Also estimate with step `2·step` from the same paths.
    #[serde(default)]
    pub step_halving: bool,
    #[serde(default)]
    pub exec: Exec,
}

impl SimPlan {
    pub fn new(qp: QueueParams, time_change: TimeChange, times: Vec<f64>, n_paths: usize, seed: u64) -> Result<Self> {
        let horizon = times.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let plan = SimPlan {
            qp,
            time_change,
            horizon,
            n_paths,
            step: 1e-3,
            seed,
            times,
            max_state: 20,
            step_halving: false,
            exec: Exec::default(),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        self.qp.validate()?;
        self.time_change.validate()?;
        if self.n_paths < 1 {
            return domain("n_paths must be >= 1");
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return domain("horizon must be positive and finite");
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return domain("operational step must be positive");
        }
        if self.times.iter().any(|&t| !(t >= 0.0 && t <= self.horizon)) {
            return domain("target times must lie in [0, horizon]");
        }
        if self.times.windows(2).any(|w| w[1] < w[0]) {
            return domain("target times must be sorted");
        }
        Ok(())
    }
}

/// Fixed chunking so per-chunk reductions do not depend on the worker count.
pub(crate) const CHUNK: usize = 512;

pub(crate) fn chunks(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(CHUNK)).map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(n))).collect()
}

pub(crate) fn run_chunks<T: Send>(
    exec: Exec,
    n: usize,
    f: impl Fn(usize, usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    let cs = chunks(n);
    exec.map_slice(&cs, |&(a, b)| f(a, b)).into_iter().collect()
}
