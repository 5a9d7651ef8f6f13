use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::QueueParams;

/// Piecewise-constant phase-count path: `states[i]` holds on
/// `[times[i], times[i+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<usize>,
    pub horizon: f64,
}

impl Trajectory {
    /// State at time `t` (last jump at or before `t`).
    pub fn state_at(&self, t: f64) -> usize {
        let i = self.times.partition_point(|&x| x <= t);
        self.states[i.max(1) - 1]
    }
}

/// One transition out of phase count `j`: `(holding time, next count)`.
#[inline]
pub fn next_event<R: Rng + ?Sized>(params: &QueueParams, cum_c: &[f64], j: usize, rng: &mut R) -> (f64, usize) {
    let lam = params.big_lambda();
    let rate = if j == 0 { lam } else { lam + params.phase_rate() };
    let e: f64 = Exp1.sample(rng);
    let hold = e / rate;
    let u: f64 = rng.random::<f64>() * rate;
    if j > 0 && u >= lam {
        return (hold, j - 1);
    }
    let v = u / lam;
    let i = cum_c.partition_point(|&c| c <= v).min(cum_c.len() - 1);
    (hold, j + (i + 1) * params.k)
}

/// Cumulative batch-size probabilities, for [`next_event`].
pub fn cumulative_c(params: &QueueParams) -> Vec<f64> {
    let mut acc = 0.0;
    params
        .c()
        .iter()
        .map(|c| {
            acc += c;
            acc
        })
        .collect()
}

/// Exact-event path from the empty state up to `horizon`.
pub fn simulate_gillespie<R: Rng + ?Sized>(params: &QueueParams, horizon: f64, rng: &mut R) -> Trajectory {
    let cum = cumulative_c(params);
    let mut times = vec![0.0];
    let mut states = vec![0];
    let mut t = 0.0;
    let mut j = 0;
    loop {
        let (h, nj) = next_event(params, &cum, j, rng);
        t += h;
        if t > horizon {
            break;
        }
        j = nj;
        times.push(t);
        states.push(j);
    }
    Trajectory { times, states, horizon }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::path_rng;
    use crate::queue::transient_uniformization_grid;

    fn pstar() -> QueueParams {
        QueueParams::new(vec![0.6, 0.3], 2, 1.2).unwrap()
    }

    #[test]
    fn first_event_is_arrival() {
        let p = pstar();
        let mut counts = [0usize; 2];
        let n = 100_000;
        let cum = cumulative_c(&p);
        let mut rng = path_rng(1, 0);
        for _ in 0..n {
            let (_, first) = next_event(&p, &cum, 0, &mut rng);
            assert!(first == 2 || first == 4);
            counts[first / 2 - 1] += 1;
        }
        for (i, c) in [2.0 / 3.0, 1.0 / 3.0].iter().enumerate() {
            let phat = counts[i] as f64 / n as f64;
            let se = (c * (1.0 - c) / n as f64).sqrt();
            assert!((phat - c).abs() < 3.0 * se);
        }
    }

    #[test]
    fn matches_uniformization() {
        let p = pstar();
        let times = [0.5, 1.0, 2.0];
        let tab = transient_uniformization_grid(&p, &times, 200, 1e-12).unwrap();
        let n = 100_000u64;
        let mut counts = vec![vec![0u64; 201]; 3];
        for i in 0..n {
            let tr = simulate_gillespie(&p, 2.0, &mut path_rng(2, i));
            for (ti, &t) in times.iter().enumerate() {
                let s = tr.state_at(t);
                if s <= 200 {
                    counts[ti][s] += 1;
                }
            }
        }
        for ti in 0..3 {
            for j in 0..=200 {
                let pj = tab.probs[ti][j];
                if pj < 1e-3 {
                    continue;
                }
                let phat = counts[ti][j] as f64 / n as f64;
                let se = (pj * (1.0 - pj) / n as f64).sqrt();
                assert!((phat - pj).abs() < 4.0 * se, "t={} j={j}: {phat} vs {pj}", times[ti]);
            }
        }
    }
}
