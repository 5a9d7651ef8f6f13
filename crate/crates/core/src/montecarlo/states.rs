//! State-probability estimates from composed paths `Q(Y(t))`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Estimate, Result};
use crate::exec::path_rng;
use crate::queue::{cumulative_c, next_event, ProbabilityTable, QueueParams, TableKind};

use super::{run_chunks, Increments, SimPlan, TimeChange};

/// Monte Carlo table: `table.err` holds `sqrt(p̂(1−p̂)/n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateTable {
    pub table: ProbabilityTable,
    pub n_paths: usize,
    pub step: f64,
    /// Mean phase count per time, with its standard error.
    pub mean: Vec<Estimate>,
}

impl EstimateTable {
    fn from_counts(plan: &SimPlan, step: f64, counts: &[Vec<u64>], sums: &[(f64, f64)]) -> Self {
        let n = plan.n_paths as f64;
        let states: Vec<usize> = (0..=plan.max_state).collect();
        let mut probs = Vec::new();
        let mut err = Vec::new();
        let mut lost = Vec::new();
        for row in counts {
            let p: Vec<f64> = row[..=plan.max_state].iter().map(|&c| c as f64 / n).collect();
            err.push(p.iter().map(|&x| (x * (1.0 - x) / n).sqrt()).collect());
            lost.push(row[plan.max_state + 1] as f64 / n);
            probs.push(p);
        }
        let mean = sums
            .iter()
            .map(|&(s1, s2)| {
                let m = s1 / n;
                let var = (s2 / n - m * m).max(0.0) * n / (n - 1.0).max(1.0);
                Estimate::new(m, (var / n).sqrt())
            })
            .collect();
        EstimateTable {
            table: ProbabilityTable {
                times: plan.times.clone(),
                states,
                probs,
                err,
                lost_mass: lost,
                kind: TableKind::MonteCarlo,
                warnings: Vec::new(),
            },
            n_paths: plan.n_paths,
            step,
            mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub estimates: EstimateTable,
    /// Same paths read off with step `2·step`, when requested.
    pub coarse: Option<EstimateTable>,
    /// Paths that needed the base trajectory extended. Trajectories are
    /// drawn after `Y` is known, so this stays 0.
    pub regenerated: usize,
    /// Phase count per path and time, when requested.
    pub raw: Option<Vec<Vec<usize>>>,
}

impl SimOutput {
    /// Largest `|fine − coarse|` in units of the fine standard error, over
    /// entries with `p̂ ≥ min_prob`.
    pub fn halving_shift(&self, min_prob: f64) -> Option<f64> {
        let coarse = self.coarse.as_ref()?;
        let (f, c) = (&self.estimates.table, &coarse.table);
        let mut worst = 0.0f64;
        for i in 0..f.times.len() {
            for j in 0..f.states.len() {
                let (p, se) = (f.probs[i][j], f.err[i][j]);
                if p >= min_prob && se > 0.0 {
                    worst = worst.max((p - c.probs[i][j]).abs() / se);
                }
            }
        }
        Some(worst)
    }
}

/// `Y(t)` on the step grid for sorted `times`: the index of the last grid
/// point whose `D` is at most `t`.
fn inverse_indices<R: Rng + ?Sized>(inc: &Increments, step: f64, times: &[f64], rng: &mut R) -> Result<Vec<u64>> {
    let mut out = vec![0u64; times.len()];
    let (mut d, mut i, mut next) = (0.0, 0u64, 0);
    while next < times.len() {
        let nd = d + inc.sample(step, rng)?;
        while next < times.len() && times[next] < nd {
            out[next] = i;
            next += 1;
        }
        d = nd;
        i += 1;
    }
    Ok(out)
}

/// Phase counts of a fresh base path at the sorted operational times `ys`.
fn base_states_at<R: Rng + ?Sized>(qp: &QueueParams, cum: &[f64], ys: &[f64], rng: &mut R) -> Vec<usize> {
    let mut out = vec![0; ys.len()];
    let (mut t, mut j, mut next) = (0.0, 0usize, 0);
    while next < ys.len() {
        let (h, nj) = next_event(qp, cum, j, rng);
        while next < ys.len() && ys[next] < t + h {
            out[next] = j;
            next += 1;
        }
        t += h;
        j = nj;
    }
    out
}

/// Sort `ys` and return states in the original order.
fn states_unsorted<R: Rng + ?Sized>(qp: &QueueParams, cum: &[f64], ys: &[f64], rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ys.len()).collect();
    order.sort_by(|&a, &b| ys[a].total_cmp(&ys[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| ys[i]).collect();
    let st = base_states_at(qp, cum, &sorted, rng);
    let mut out = vec![0; ys.len()];
    for (pos, &i) in order.iter().enumerate() {
        out[i] = st[pos];
    }
    out
}

struct Tally {
    fine: Vec<Vec<u64>>,
    coarse: Vec<Vec<u64>>,
    fine_sums: Vec<(f64, f64)>,
    coarse_sums: Vec<(f64, f64)>,
    raw: Vec<Vec<usize>>,
}

impl Tally {
    fn new(nt: usize, width: usize) -> Self {
        Tally {
            fine: vec![vec![0; width]; nt],
            coarse: vec![vec![0; width]; nt],
            fine_sums: vec![(0.0, 0.0); nt],
            coarse_sums: vec![(0.0, 0.0); nt],
            raw: Vec::new(),
        }
    }

    fn add(counts: &mut [Vec<u64>], sums: &mut [(f64, f64)], states: &[usize], cap: usize) {
        for (i, &s) in states.iter().enumerate() {
            counts[i][s.min(cap + 1)] += 1;
            sums[i].0 += s as f64;
            sums[i].1 += (s * s) as f64;
        }
    }

    fn merge(&mut self, o: Tally) {
        for (a, b) in [(&mut self.fine, o.fine), (&mut self.coarse, o.coarse)] {
            for (ra, rb) in a.iter_mut().zip(b) {
                for (x, y) in ra.iter_mut().zip(rb) {
                    *x += y;
                }
            }
        }
        for (a, b) in [(&mut self.fine_sums, o.fine_sums), (&mut self.coarse_sums, o.coarse_sums)] {
            for (x, y) in a.iter_mut().zip(b) {
                x.0 += y.0;
                x.1 += y.1;
            }
        }
        self.raw.extend(o.raw);
    }
}

/// Estimate `P(Q(Y(t)) = m)` for every target time and phase count.
///
/// The inverse path is simulated on the grid `step/2` when step-halving is
/// requested (otherwise `step`); the coarse estimate reads the same path on
/// the even grid points, so the two differ only through discretization.
pub fn simulate_time_changed(plan: &SimPlan, keep_raw: bool) -> Result<SimOutput> {
    plan.validate()?;
    let identity = plan.time_change == TimeChange::None;
    let fine_step = if plan.step_halving { plan.step / 2.0 } else { plan.step };
    let inc = plan.time_change.increments()?.with_step(fine_step)?;
    let cum = cumulative_c(&plan.qp);
    let nt = plan.times.len();
    let width = plan.max_state + 2;
    let parts = run_chunks(plan.exec, plan.n_paths, |a, b| -> Result<Tally> {
        let mut tally = Tally::new(nt, width);
        for p in a..b {
            let mut rng = path_rng(plan.seed, p as u64);
            if identity {
                let st = base_states_at(&plan.qp, &cum, &plan.times, &mut rng);
                Tally::add(&mut tally.fine, &mut tally.fine_sums, &st, plan.max_state);
                Tally::add(&mut tally.coarse, &mut tally.coarse_sums, &st, plan.max_state);
                if keep_raw {
                    tally.raw.push(st);
                }
                continue;
            }
            let idx = inverse_indices(&inc, fine_step, &plan.times, &mut rng)?;
            let mut ys: Vec<f64> = idx.iter().map(|&i| i as f64 * fine_step).collect();
            if plan.step_halving {
                ys.extend(idx.iter().map(|&i| (i & !1) as f64 * fine_step));
            }
            let st = states_unsorted(&plan.qp, &cum, &ys, &mut rng);
            Tally::add(&mut tally.fine, &mut tally.fine_sums, &st[..nt], plan.max_state);
            if plan.step_halving {
                Tally::add(&mut tally.coarse, &mut tally.coarse_sums, &st[nt..], plan.max_state);
            }
            if keep_raw {
                tally.raw.push(st[..nt].to_vec());
            }
        }
        Ok(tally)
    })?;
    let mut total = Tally::new(nt, width);
    for t in parts {
        total.merge(t);
    }
    let estimates = EstimateTable::from_counts(plan, fine_step, &total.fine, &total.fine_sums);
    let coarse = (plan.step_halving && !identity)
        .then(|| EstimateTable::from_counts(plan, plan.step, &total.coarse, &total.coarse_sums));
    Ok(SimOutput { estimates, coarse, regenerated: 0, raw: keep_raw.then_some(total.raw) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Exec;
    use crate::queue::{simulate_gillespie, transient_uniformization_grid};

    fn pstar() -> QueueParams {
        QueueParams::new(vec![0.6, 0.3], 2, 1.2).unwrap()
    }

    #[test]
    fn identity_change_matches_uniformization() {
        let plan = SimPlan::new(pstar(), TimeChange::None, vec![0.5, 1.0], 20_000, 3).unwrap();
        let out = simulate_time_changed(&plan, false).unwrap();
        let exact = transient_uniformization_grid(&pstar(), &[0.5, 1.0], 200, 1e-12).unwrap();
        for i in 0..2 {
            for m in 0..10 {
                let (p, se) = out.estimates.table.get(i, m).unwrap();
                let q = exact.get(i, m).unwrap().0;
                assert!((p - q).abs() <= 4.0 * se.max(1e-4), "t{i} m{m}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn identity_change_matches_gillespie_directly() {
        let plan = SimPlan::new(pstar(), TimeChange::None, vec![1.0], 20_000, 11).unwrap();
        let out = simulate_time_changed(&plan, false).unwrap();
        let n = 20_000;
        let empty = (0..n)
            .filter(|&p| simulate_gillespie(&pstar(), 1.0, &mut path_rng(99, p)).state_at(1.0) == 0)
            .count() as f64
            / n as f64;
        let (p, se) = out.estimates.table.get(0, 0).unwrap();
        assert!((p - empty).abs() < 3.0 * std::f64::consts::SQRT_2 * se, "{p} vs {empty}");
    }

    #[test]
    fn deterministic_regardless_of_workers() {
        let mut plan = SimPlan::new(pstar(), TimeChange::tempered(0.5, 0.7).unwrap(), vec![0.3, 1.0], 1500, 5).unwrap();
        plan.step_halving = true;
        let a = simulate_time_changed(&plan, true).unwrap();
        plan.exec = Exec::Sequential;
        let b = simulate_time_changed(&plan, true).unwrap();
        assert_eq!(a, b);
        assert!(a.halving_shift(0.0).is_some());
        let row: f64 = a.estimates.table.probs[1].iter().sum::<f64>() + a.estimates.table.lost_mass[1];
        assert!((row - 1.0).abs() < 1e-12);
    }

    #[test]
    fn std_err_scales_with_paths() {
        let tc = TimeChange::tempered(0.5, 0.7).unwrap();
        let se = |n| {
            let mut plan = SimPlan::new(pstar(), tc, vec![1.0], n, 8).unwrap();
            plan.step = 4e-3;
            simulate_time_changed(&plan, false).unwrap().estimates.table.err[0][0]
        };
        let (a, b) = (se(1000), se(10_000));
        let ratio = a / b;
        assert!((ratio / 10f64.sqrt() - 1.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn gamma_change_runs() {
        let mut plan = SimPlan::new(pstar(), TimeChange::Gamma { a: 2.0, b: 2.0 }, vec![0.5, 1.0], 2000, 1).unwrap();
        plan.step_halving = true;
        let out = simulate_time_changed(&plan, false).unwrap();
        assert!(out.estimates.table.err.iter().flatten().all(|e| e.is_finite()));
        assert!(out.estimates.table.probs[0][0] > out.estimates.table.probs[1][0]);
    }

    #[test]
    fn invalid_plans_rejected() {
        assert!(SimPlan::new(pstar(), TimeChange::None, vec![1.0], 0, 1).is_err());
        assert!(SimPlan::new(pstar(), TimeChange::None, vec![1.0, 0.5], 10, 1).is_err());
        assert!(TimeChange::tempered(0.5, 1.3).is_err());
        assert_eq!(TimeChange::tempered(0.0, 1.0).unwrap(), TimeChange::None);
    }
}
