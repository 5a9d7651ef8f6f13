//! Run configuration. Every key is required except `series` (whose caps
//! have documented defaults) and the per-command sections, which are only
//! read by the command that needs them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tcqueue::analytics::{SeriesConfig, SeriesContext, ThetaReading};
use tcqueue::montecarlo::{SimPlan, TimeChange};
use tcqueue::queue::QueueParams;
use tcqueue::validation::ValidationConfig;
use tcqueue::Exec;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub queue: QueueParams,
    pub time_change: TimeChange,
    #[serde(default)]
    pub series: SeriesConfig,
    pub theta_power_reading: ThetaReading,
    /// Output times for probs, mean, simulate.
    pub times: Vec<f64>,
    /// Largest phase index written to probs.csv.
    pub max_state: usize,
    pub simulation: SimSettings,
    #[serde(default)]
    pub busy: Option<BusySettings>,
    #[serde(default)]
    pub interevent: Option<InterEventSettings>,
    #[serde(default)]
    pub validation: Option<ValidationSettings>,
    pub output_dir: PathBuf,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    pub n_paths: usize,
    pub step: f64,
    pub step_halving: bool,
    pub exec: Exec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusySettings {
    /// Initial phase count; a multiple of k.
    pub a: usize,
    pub times: Vec<f64>,
    pub n_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterEventSettings {
    pub times: Vec<f64>,
    pub samples: usize,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSettings {
    pub queue_single: QueueParams,
    pub mc_paths: usize,
    pub mc_step: f64,
    pub busy_paths: usize,
    pub interevent_samples: usize,
    pub gamma_samples: usize,
    pub level: f64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.into()));
        self.queue.validate()?;
        self.time_change.validate()?;
        self.series.validate()?;
        if self.times.is_empty() || self.times.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
            return bad("times must be a non-empty list of finite values >= 0");
        }
        if self.times.windows(2).any(|w| w[1] < w[0]) {
            return bad("times must be sorted");
        }
        if self.simulation.n_paths < 2 || !(self.simulation.step > 0.0) {
            return bad("simulation needs n_paths >= 2 and step > 0");
        }
        if let Some(b) = &self.busy {
            if b.times.iter().any(|&t| !(t >= 0.0 && t.is_finite())) || b.n_paths < 1 {
                return bad("busy needs finite times >= 0 and n_paths >= 1");
            }
        }
        if let Some(ie) = &self.interevent {
            if ie.samples < 2 || !(ie.level > 0.0 && ie.level < 1.0) {
                return bad("interevent needs samples >= 2 and level in (0, 1)");
            }
        }
        Ok(())
    }

    /// `(θ, α)` of the analytic series; `none` is `(0, 1)`.
    pub fn series_params(&self) -> Result<(f64, f64), CliError> {
        match self.time_change {
            TimeChange::None => Ok((0.0, 1.0)),
            TimeChange::Tempered { theta, alpha } => Ok((theta, alpha)),
            TimeChange::Gamma { .. } => Err(CliError::Config(
                "analytic series exist for the tempered and identity time changes only; use --method mc".into(),
            )),
        }
    }

    pub fn context(&self) -> Result<SeriesContext, CliError> {
        self.context_for(self.queue.clone())
    }

    pub fn context_for(&self, qp: QueueParams) -> Result<SeriesContext, CliError> {
        let (theta, alpha) = self.series_params()?;
        Ok(SeriesContext::new(qp, theta, alpha, self.series)?.with_reading(self.theta_power_reading))
    }

    pub fn sim_plan(&self, times: Vec<f64>, max_state: usize) -> Result<SimPlan, CliError> {
        let mut plan = SimPlan::new(self.queue.clone(), self.time_change, times, self.simulation.n_paths, self.seed)?;
        plan.step = self.simulation.step;
        plan.step_halving = self.simulation.step_halving;
        plan.exec = self.simulation.exec;
        plan.max_state = max_state;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validation_config(&self) -> Result<ValidationConfig, CliError> {
        let Some(v) = &self.validation else {
            return Err(CliError::Config("validate needs a \"validation\" section".into()));
        };
        let TimeChange::Tempered { theta, alpha } = self.time_change else {
            return Err(CliError::Config("validate needs a tempered time change".into()));
        };
        let cfg = ValidationConfig {
            queue: self.queue.clone(),
            queue_single: v.queue_single.clone(),
            theta,
            alpha,
            series: self.series,
            reading: self.theta_power_reading,
            seed: self.seed,
            mc_paths: v.mc_paths,
            mc_step: v.mc_step,
            busy_paths: v.busy_paths,
            interevent_samples: v.interevent_samples,
            gamma_samples: v.gamma_samples,
            level: v.level,
            exec: self.simulation.exec,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
