//! The Erlang queue with batch arrivals in operational time: parameters,
//! state-phase bookkeeping, the CTMC generator and its two transient
//! solvers, and exact-event simulation.

mod generator;
mod sim;
mod table;

pub use generator::{
    default_cap, expm_row0, generator, transient_uniformization, transient_uniformization_grid,
    Generator,
};
pub use sim::{cumulative_c, next_event, simulate_gillespie, Trajectory};
pub use table::{ProbabilityTable, TableKind};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueParams {
    /// `λ_i`: rate of batches of size `i`, for `i = 1..=l`.
    pub lambdas: Vec<f64>,
    /// Erlang phases per service.
    pub k: usize,
    pub mu: f64,
}

impl QueueParams {
    pub fn new(lambdas: Vec<f64>, k: usize, mu: f64) -> Result<Self> {
        let q = QueueParams { lambdas, k, mu };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            return domain("at least one batch rate is required");
        }
        if self.lambdas.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return domain("batch rates must be finite and >= 0");
        }
        if !(*self.lambdas.last().unwrap() > 0.0) {
            return domain("the largest batch size must have a positive rate");
        }
        if self.k == 0 {
            return domain("Erlang shape k must be >= 1");
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return domain("service rate must be positive");
        }
        Ok(())
    }

    pub fn l(&self) -> usize {
        self.lambdas.len()
    }

    /// Λ = Σ λ_i.
    pub fn big_lambda(&self) -> f64 {
        self.lambdas.iter().sum()
    }

    /// c_i = λ_i / Λ, for `i = 1..=l` (index `i − 1`).
    pub fn c(&self) -> Vec<f64> {
        let lam = self.big_lambda();
        self.lambdas.iter().map(|x| x / lam).collect()
    }

    /// Phase completion rate kμ.
    pub fn phase_rate(&self) -> f64 {
        self.k as f64 * self.mu
    }

    /// Λ + kμ, the total event rate out of any non-empty state.
    pub fn total_rate(&self) -> f64 {
        self.big_lambda() + self.phase_rate()
    }

    /// Σ i·c_i, the mean batch size.
    pub fn mean_batch(&self) -> f64 {
        self.c().iter().enumerate().map(|(i, c)| (i + 1) as f64 * c).sum()
    }

    /// Long-run phase drift `k(Λ Σ i c_i − μ)`.
    pub fn drift(&self) -> f64 {
        self.k as f64 * (self.big_lambda() * self.mean_batch() - self.mu)
    }
}

/// `(n, s)`: `n` customers, the one in service in phase `s`; `(0, 0)` is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StatePhase {
    pub n: usize,
    pub s: usize,
}

impl StatePhase {
    pub const EMPTY: StatePhase = StatePhase { n: 0, s: 0 };

    pub fn new(n: usize, s: usize, k: usize) -> Result<Self> {
        let sp = StatePhase { n, s };
        sp.validate(k)?;
        Ok(sp)
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let ok = (self.n == 0 && self.s == 0) || (self.n >= 1 && self.s >= 1 && self.s <= k);
        if !ok {
            return domain(format!("({}, {}) is not a valid state for k = {k}", self.n, self.s));
        }
        Ok(())
    }
}

/// `g_k(n, s) = k(n − 1) + s`, and 0 for the empty state.
pub fn phase_index(sp: StatePhase, k: usize) -> Result<usize> {
    if k == 0 {
        return domain("k must be >= 1");
    }
    sp.validate(k)?;
    Ok(if sp.n == 0 { 0 } else { k * (sp.n - 1) + sp.s })
}

/// Inverse of [`phase_index`].
pub fn phase_inverse(m: usize, k: usize) -> StatePhase {
    if m == 0 {
        return StatePhase::EMPTY;
    }
    let s = (m - 1) % k + 1;
    StatePhase { n: (m - s) / k + 1, s }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_index_examples() {
        assert_eq!(phase_index(StatePhase::EMPTY, 3).unwrap(), 0);
        assert_eq!(phase_index(StatePhase { n: 2, s: 2 }, 3).unwrap(), 5);
        assert_eq!(phase_inverse(0, 3), StatePhase::EMPTY);
        assert_eq!(phase_inverse(5, 3), StatePhase { n: 2, s: 2 });
        assert_eq!(phase_inverse(4, 2), StatePhase { n: 2, s: 2 });
    }

    #[test]
    fn invalid_states_rejected() {
        assert!(phase_index(StatePhase { n: 1, s: 0 }, 2).is_err());
        assert!(phase_index(StatePhase { n: 1, s: 3 }, 2).is_err());
        assert!(phase_index(StatePhase { n: 0, s: 1 }, 2).is_err());
    }

    #[test]
    fn bijection() {
        for k in [1, 2, 3, 5] {
            for m in 0..=10_000 {
                assert_eq!(phase_index(phase_inverse(m, k), k).unwrap(), m);
            }
            for n in 1..=50 {
                for s in 1..=k {
                    let sp = StatePhase { n, s };
                    assert_eq!(phase_inverse(phase_index(sp, k).unwrap(), k), sp);
                }
            }
        }
    }

    #[test]
    fn derived_rates() {
        let q = QueueParams::new(vec![0.6, 0.3], 2, 1.2).unwrap();
        assert!((q.big_lambda() - 0.9).abs() < 1e-15);
        assert!((q.mean_batch() - 4.0 / 3.0).abs() < 1e-15);
        assert!((q.c().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(q.drift().abs() < 1e-14);
        assert!(QueueParams::new(vec![0.5, 0.0], 2, 1.0).is_err());
        assert!(QueueParams::new(vec![0.5], 0, 1.0).is_err());
    }
}
