//! Busy periods and inter-event times. Each operational holding time `E`
//! becomes the calendar duration `D(x+E) − D(x)`, drawn directly from the
//! subordinator law; no inverse path is discretized.

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::exec::{path_rng, Exec};
use crate::queue::{cumulative_c, next_event, QueueParams};

use super::{chunks, run_chunks, Increments, TimeChange};

/// Jumps per busy path before it is declared censored.
pub const BUSY_EVENT_CAP: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusySamples {
    pub a: usize,
    pub n: usize,
    pub horizon: f64,
    /// Calendar busy periods that ended by the horizon, in path order.
    pub samples: Vec<f64>,
    /// Paths still busy at the horizon (their `B` exceeds it).
    pub beyond_horizon: usize,
    /// Paths cut by the event cap before reaching the horizon.
    pub censored: usize,
}

impl BusySamples {
    /// Empirical `P(B ≤ t)` for `t ≤ horizon`.
    pub fn ecdf(&self, t: f64) -> f64 {
        self.samples.iter().filter(|&&b| b <= t).count() as f64 / self.n as f64
    }

    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.n as f64
    }
}

/// Busy period started from `a` phases: the absorbing phase-count chain is
/// run in operational time until it hits 0 or calendar time passes
/// `horizon`.
pub fn simulate_busy_period(
    qp: &QueueParams,
    time_change: TimeChange,
    a: usize,
    horizon: f64,
    n: usize,
    seed: u64,
    exec: Exec,
) -> Result<BusySamples> {
    qp.validate()?;
    if a == 0 || a % qp.k != 0 || a > qp.k * qp.l() {
        return domain(format!("busy period start must be a multiple of k in [k, lk], got {a}"));
    }
    if !(horizon > 0.0) || n == 0 {
        return domain("busy period needs horizon > 0 and n >= 1");
    }
    let inc = time_change.increments()?;
    let cum = cumulative_c(qp);
    let parts = run_chunks(exec, n, |lo, hi| -> Result<(Vec<f64>, usize, usize)> {
        let (mut done, mut beyond, mut cut) = (Vec::new(), 0, 0);
        for p in lo..hi {
            let mut rng = path_rng(seed, p as u64);
            let (mut j, mut clock, mut events) = (a, 0.0, 0usize);
            loop {
                let (h, nj) = next_event(qp, &cum, j, &mut rng);
                clock += inc.sample(h, &mut rng)?;
                if clock > horizon {
                    beyond += 1;
                    break;
                }
                j = nj;
                if j == 0 {
                    done.push(clock);
                    break;
                }
                events += 1;
                if events >= BUSY_EVENT_CAP {
                    cut += 1;
                    break;
                }
            }
        }
        Ok((done, beyond, cut))
    })?;
    let mut out = BusySamples { a, n, horizon, samples: Vec::new(), beyond_horizon: 0, censored: 0 };
    for (d, b, c) in parts {
        out.samples.extend(d);
        out.beyond_horizon += b;
        out.censored += c;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterEventSamples {
    /// Consecutive calendar inter-arrival times.
    pub arrival: Vec<f64>,
    /// Consecutive calendar inter-phase times (phase completions at rate kμ).
    pub phase: Vec<f64>,
    /// Calendar holding times in non-empty states.
    pub sojourn: Vec<f64>,
    /// Calendar holding times in the empty state, collected alongside.
    pub sojourn_empty: Vec<f64>,
}

const ARRIVAL: u64 = 1 << 40;
const PHASE: u64 = 2 << 40;
const SOJOURN: u64 = 3 << 40;

fn renewal_stream(inc: &Increments, rate: f64, n: usize, seed: u64, tag: u64, exec: Exec) -> Result<Vec<f64>> {
    let parts = run_chunks(exec, n, |lo, hi| -> Result<Vec<f64>> {
        let mut rng = path_rng(seed, tag + lo as u64);
        (lo..hi)
            .map(|_| {
                let e: f64 = Exp1.sample(&mut rng);
                inc.sample(e / rate, &mut rng)
            })
            .collect()
    })?;
    Ok(parts.concat())
}

/// `n` samples of each inter-event kind for a single-arrival queue.
pub fn collect_inter_event_times(
    qp: &QueueParams,
    time_change: TimeChange,
    n: usize,
    seed: u64,
    exec: Exec,
) -> Result<InterEventSamples> {
    qp.validate()?;
    if qp.l() != 1 {
        return domain("inter-event laws are defined for single arrivals (l = 1)");
    }
    if n == 0 {
        return domain("need at least one sample");
    }
    let inc = time_change.increments()?;
    let arrival = renewal_stream(&inc, qp.lambdas[0], n, seed, ARRIVAL, exec)?;
    let phase = renewal_stream(&inc, qp.phase_rate(), n, seed, PHASE, exec)?;
    let cum = cumulative_c(qp);
    let parts = exec
        .map_slice(&chunks(n), |&(lo, hi)| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut rng = path_rng(seed, SOJOURN + lo as u64);
            let (mut busy, mut idle) = (Vec::with_capacity(hi - lo), Vec::new());
            let mut j = 0;
            while busy.len() < hi - lo {
                let (h, nj) = next_event(qp, &cum, j, &mut rng);
                let d = inc.sample(h, &mut rng)?;
                if j == 0 {
                    idle.push(d);
                } else {
                    busy.push(d);
                }
                j = nj;
            }
            Ok((busy, idle))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (mut sojourn, mut sojourn_empty) = (Vec::new(), Vec::new());
    for (b, i) in parts {
        sojourn.extend(b);
        sojourn_empty.extend(i);
    }
    Ok(InterEventSamples { arrival, phase, sojourn, sojourn_empty })
}

/// Lag-1 sample autocorrelation.
pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 3 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    let var: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    let cov: f64 = xs.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    if var == 0.0 {
        0.0
    } else {
        cov / var
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::{dkw_band, ks_statistic};

    fn p1() -> QueueParams {
        QueueParams::new(vec![0.8], 2, 1.2).unwrap()
    }

    #[test]
    fn busy_samples_positive_and_deterministic() {
        let qp = QueueParams::new(vec![0.6, 0.3], 2, 1.2).unwrap();
        let tc = TimeChange::tempered(0.5, 0.7).unwrap();
        let a = simulate_busy_period(&qp, tc, 2, 2.0, 3000, 4, Exec::Parallel).unwrap();
        let b = simulate_busy_period(&qp, tc, 2, 2.0, 3000, 4, Exec::Sequential).unwrap();
        assert_eq!(a, b);
        assert!(a.samples.iter().all(|&x| x > 0.0 && x <= 2.0));
        assert_eq!(a.samples.len() + a.beyond_horizon + a.censored, 3000);
        assert_eq!(a.censored, 0);
        assert!(simulate_busy_period(&qp, tc, 3, 2.0, 10, 4, Exec::Parallel).is_err());
    }

    #[test]
    fn identity_busy_period_is_classical() {
        // k = 1, single arrivals: M/M/1 busy period from one customer;
        // compare against the same chain simulated by hand.
        let qp = QueueParams::new(vec![0.5], 1, 1.0).unwrap();
        let sim = simulate_busy_period(&qp, TimeChange::None, 1, 3.0, 20_000, 2, Exec::Parallel).unwrap();
        let mut rng = path_rng(77, 0);
        let cum = cumulative_c(&qp);
        let mut direct = Vec::new();
        for _ in 0..20_000 {
            let (mut j, mut t) = (1usize, 0.0);
            while j > 0 && t <= 3.0 {
                let (h, nj) = next_event(&qp, &cum, j, &mut rng);
                t += h;
                j = nj;
            }
            if j == 0 && t <= 3.0 {
                direct.push(t);
            }
        }
        let band = dkw_band(20_000, 0.05);
        for t in [0.25, 0.5, 1.0, 2.0, 3.0] {
            let d = direct.iter().filter(|&&b| b <= t).count() as f64 / 20_000.0;
            assert!((sim.ecdf(t) - d).abs() < 2.0 * band, "{t}");
        }
    }

    #[test]
    fn identity_inter_arrivals_are_exponential() {
        let s = collect_inter_event_times(&p1(), TimeChange::None, 10_000, 9, Exec::Parallel).unwrap();
        let ks = ks_statistic(&s.arrival, |t| 1.0 - (-0.8 * t).exp(), 0.05).unwrap();
        assert!(ks.pass, "{ks:?}");
        let ks = ks_statistic(&s.sojourn, |t| 1.0 - (-3.2 * t).exp(), 0.05).unwrap();
        assert!(ks.pass, "{ks:?}");
        assert!(lag1_autocorrelation(&s.arrival).abs() < 3.0 / 100.0);
    }

    #[test]
    fn time_changed_samples_are_heavier() {
        let tc = TimeChange::tempered(0.5, 0.7).unwrap();
        let s = collect_inter_event_times(&p1(), tc, 5000, 9, Exec::Parallel).unwrap();
        assert_eq!(s.arrival.len(), 5000);
        assert_eq!(s.sojourn.len(), 5000);
        assert!(!s.sojourn_empty.is_empty());
        let ks = ks_statistic(&s.arrival, |t| 1.0 - (-0.8 * t).exp(), 0.05).unwrap();
        assert!(!ks.pass);
        assert!(collect_inter_event_times(&QueueParams::new(vec![0.6, 0.3], 2, 1.2).unwrap(), tc, 10, 1, Exec::Parallel).is_err());
    }
}
