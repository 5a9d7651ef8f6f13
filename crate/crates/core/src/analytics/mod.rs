//! Closed-form series for the queue time-changed by an inverse tempered
//! stable subordinator.
//!
//! Every series is a sum of three-parameter Mittag-Leffler kernels whose
//! order `g` is a positive integer. Grouping the coefficient ledger by that
//! order turns each probability into `Σ_g w[g] π_g(t)`, where the shell
//! weights `w[g]` do not depend on `t` and the shell kernels `π_g(t)` do not
//! depend on the state. Truncation at order `G` is certified by a Chernoff
//! bound on the inverse subordinator's moment generating function.

mod coefficients;
mod compositions;
mod erlang;
mod kernels;
mod ledger;
mod residuals;
mod series;

use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::queue::QueueParams;
use crate::subordinator::TemperedStableParams;

pub use coefficients::{coefficients, CoefficientIndices, CoefficientSet};
pub use compositions::{compositions_with_total, compositions_with_weight, for_each_bounded, CompositionIndex};
pub use kernels::{chernoff_tail, inverse_mean, inverse_mgf, ChernoffBound};
pub use erlang::{erlang_terms, ErlangSeries, ErlangTerms};
pub use ledger::{busy_weights, Ledger};
pub use residuals::{
    mean_residual, mean_residual_sampled, pgf_residuals_sampled, queue_length_residuals_sampled, residual_suite,
    sample_series, system_residuals, system_residuals_sampled, EquationClass, Residual, ResidualGrid, ResidualKind,
    ResidualSuite, SampledSeries, SUITE_PGF_POINTS,
};
pub use series::{
    busy_period_cdf, certify_range, interarrival_survival, interphase_survival, mean_queue_length, pgf,
    queue_length_prob, sojourn_survival, state_prob, survival, zero_state_prob, CertifiedRange, Evaluator,
    InterEvent, Snapshot, SurvivalLaw,
};

/// Which power of θ multiplies the first block of the state-probability
/// series: `θ^a` (indexed by the tempering sum) or the constant `θ^α`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ThetaReading {
    #[default]
    A,
    Alpha,
}

impl ThetaReading {
    pub fn label(self) -> &'static str {
        match self {
            ThetaReading::A => "a",
            ThetaReading::Alpha => "alpha",
        }
    }
}

impl std::str::FromStr for ThetaReading {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "a" => Ok(ThetaReading::A),
            "alpha" => Ok(ThetaReading::Alpha),
            _ => Err(format!("unknown θ-power reading '{s}' (expected 'a' or 'alpha')")),
        }
    }
}

/// Which composition set feeds the subtracted block for phase `s = k`.
///
/// `Shifted` uses `m'' = (m_1+1, m_2, …)` over the compositions of `n`;
/// `NextLevel` uses every composition of `n+1`. Only the latter makes the
/// series reproduce the base-queue probabilities when `l ≥ 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SkBranch {
    #[default]
    NextLevel,
    Shifted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeriesConfig {
    pub h_cap: usize,
    pub n_cap: usize,
    pub r_cap: usize,
    pub w_cap: usize,
    /// Cap on the outer tempering sums (indices a, b, c, m).
    pub tempering_cap: usize,
    /// Cap on the number of compositions visited while building the ledger.
    pub composition_cap: usize,
    /// Largest Mittag-Leffler order `g` the ledger may reach.
    pub shell_cap: usize,
    /// Relative threshold for individual Mittag-Leffler series.
    pub term_tol: f64,
    /// Target for the certified truncation tail.
    pub target_tol: f64,
    /// Offset added to `β` inside the kernels. Leave at 0; a nonzero value
    /// is a deliberately broken series for negative controls.
    pub beta_shift: f64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        SeriesConfig {
            h_cap: 100_000,
            n_cap: 100_000,
            r_cap: 100_000,
            w_cap: 100_000,
            tempering_cap: 2_000,
            composition_cap: 5_000_000,
            shell_cap: 600,
            term_tol: 1e-16,
            target_tol: 1e-12,
            beta_shift: 0.0,
        }
    }
}

impl SeriesConfig {
    pub fn validate(&self) -> Result<()> {
        let caps = [
            self.h_cap,
            self.n_cap,
            self.r_cap,
            self.w_cap,
            self.tempering_cap,
            self.composition_cap,
            self.shell_cap,
        ];
        if caps.iter().any(|&c| c < 1) {
            return domain("all series caps must be >= 1");
        }
        if !(self.term_tol > 0.0 && self.target_tol > 0.0) {
            return domain("series tolerances must be positive");
        }
        if !self.beta_shift.is_finite() {
            return domain("beta_shift must be finite");
        }
        Ok(())
    }
}

/// Parameters and configuration for every analytic evaluation.
///
/// `tp` may carry `α = 1` and `θ = 0` here: the series stay valid and
/// reduce to the base queue, which is how the degenerate checks run.
#[derive(Debug)]
pub struct SeriesContext {
    pub qp: QueueParams,
    pub tp: TemperedStableParams,
    pub cfg: SeriesConfig,
    pub reading: ThetaReading,
    pub sk_branch: SkBranch,
    cache: RwLock<Option<Arc<Ledger>>>,
}

impl Clone for SeriesContext {
    fn clone(&self) -> Self {
        SeriesContext {
            qp: self.qp.clone(),
            tp: self.tp,
            cfg: self.cfg,
            reading: self.reading,
            sk_branch: self.sk_branch,
            cache: RwLock::new(self.cache.read().ok().and_then(|c| c.clone())),
        }
    }
}

impl SeriesContext {
    pub fn new(qp: QueueParams, theta: f64, alpha: f64, cfg: SeriesConfig) -> Result<Self> {
        qp.validate()?;
        cfg.validate()?;
        if !(alpha > 0.0 && alpha <= 1.0) {
            return domain(format!("series need 0 < α <= 1, got {alpha}"));
        }
        if !(theta >= 0.0) || !theta.is_finite() {
            return domain(format!("series need finite θ >= 0, got {theta}"));
        }
        Ok(SeriesContext {
            qp,
            tp: TemperedStableParams { theta, alpha },
            cfg,
            reading: ThetaReading::A,
            sk_branch: SkBranch::NextLevel,
            cache: RwLock::new(None),
        })
    }

    pub fn with_reading(mut self, reading: ThetaReading) -> Self {
        self.reading = reading;
        self
    }

    pub fn with_sk_branch(mut self, branch: SkBranch) -> Self {
        self.sk_branch = branch;
        *self.cache.get_mut().unwrap() = None;
        self
    }

    pub fn theta(&self) -> f64 {
        self.tp.theta
    }

    pub fn alpha(&self) -> f64 {
        self.tp.alpha
    }

    /// `β = θ^α − Λ − kμ`, always recomputed.
    pub fn beta_const(&self) -> f64 {
        self.tp.theta.powf(self.tp.alpha) - self.qp.big_lambda() - self.qp.phase_rate()
    }

    /// Uniformization rate `Λ + kμ`.
    pub fn rate(&self) -> f64 {
        self.qp.total_rate()
    }

    /// Ledger covering at least `shells` orders, built once and shared.
    pub fn ledger(&self, shells: usize) -> Result<Arc<Ledger>> {
        if let Some(l) = self.cache.read().unwrap().as_ref() {
            if l.shells >= shells {
                return Ok(l.clone());
            }
        }
        let mut guard = self.cache.write().unwrap();
        if let Some(l) = guard.as_ref() {
            if l.shells >= shells {
                return Ok(l.clone());
            }
        }
        let built = Arc::new(Ledger::build(&self.qp, shells, self.sk_branch, &self.cfg)?);
        *guard = Some(built.clone());
        Ok(built)
    }
}
