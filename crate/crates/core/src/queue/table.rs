use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableKind {
    Analytic,
    Uniformization,
    MonteCarlo,
}

impl TableKind {
    pub fn label(self) -> &'static str {
        match self {
            TableKind::Analytic => "analytic",
            TableKind::Uniformization => "uniformization",
            TableKind::MonteCarlo => "montecarlo",
        }
    }
}

/// Probabilities on a time grid × phase-index grid.
///
/// `err` holds truncation bounds for analytic and uniformization tables and
/// standard errors for Monte Carlo tables. `lost_mass[i]` is the probability
/// known to sit outside `states` at `times[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityTable {
    pub times: Vec<f64>,
    pub states: Vec<usize>,
    pub probs: Vec<Vec<f64>>,
    pub err: Vec<Vec<f64>>,
    pub lost_mass: Vec<f64>,
    pub kind: TableKind,
    pub warnings: Vec<String>,
}

impl ProbabilityTable {
    pub fn get(&self, time_idx: usize, state: usize) -> Option<(f64, f64)> {
        let j = self.states.iter().position(|&s| s == state)?;
        Some((self.probs[time_idx][j], self.err[time_idx][j]))
    }

    pub fn row_sum(&self, time_idx: usize) -> f64 {
        crate::exec::pairwise_sum(&self.probs[time_idx])
    }

    /// Σ m · p_m for row `time_idx`.
    pub fn mean(&self, time_idx: usize) -> f64 {
        let xs: Vec<f64> = self
            .states
            .iter()
            .zip(&self.probs[time_idx])
            .map(|(&m, &p)| m as f64 * p)
            .collect();
        crate::exec::pairwise_sum(&xs)
    }
}
