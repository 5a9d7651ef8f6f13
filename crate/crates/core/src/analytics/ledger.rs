use crate::error::{domain, Error, Result};
use crate::queue::QueueParams;
use crate::special::ln_factorial;

use super::coefficients::{a_order, gamma0_order, ln_a_coef, ln_batch_product, ln_c0_coef};
use super::compositions::for_each_bounded;
use super::{SeriesConfig, SkBranch};

/// Coefficient ledger grouped by Mittag-Leffler order and scaled by
/// `(Λ+kμ)^{−(g−1)}`.
///
/// With `P = I + Q/(Λ+kμ)` the uniformized jump matrix, the grouped weights
/// satisfy `w[j][g−1] = (P^{g−1})_{0j}`; the tests check this identity.
#[derive(Debug, Clone)]
pub struct Ledger {
    /// Orders `1..=shells` are complete.
    pub shells: usize,
    pub branch: SkBranch,
    /// Zero-state weights, index `g − 1`.
    pub p0: Vec<f64>,
    /// First-block weights `A` per phase index `j ≥ 1` (row 0 unused).
    pub a_block: Vec<Vec<f64>>,
    /// Second minus third block, per phase index.
    pub bc_block: Vec<Vec<f64>>,
    pub compositions_visited: usize,
}

impl Ledger {
    pub fn build(qp: &QueueParams, shells: usize, branch: SkBranch, cfg: &SeriesConfig) -> Result<Self> {
        if shells < 1 {
            return domain("ledger needs at least one shell");
        }
        if shells > cfg.shell_cap {
            return Err(Error::Unconverged {
                what: format!("ledger needs {shells} shells, above shell_cap {}", cfg.shell_cap),
                partial: f64::NAN,
                bound: f64::INFINITY,
            });
        }
        let (l, k) = (qp.l(), qp.k);
        let g_max = shells;
        let c = qp.c();
        let ln_rate = qp.total_rate().ln();
        // Phase indices reachable within g_max − 1 jumps, plus one for the
        // neighbour lookup.
        let j_max = l * k * (g_max - 1) + 2;
        let mut a_block = vec![vec![0.0; g_max]; j_max + 1];
        // A-weights restricted to m_1 >= 1, for the shifted s = k branch.
        let mut a_m1 = vec![vec![0.0; g_max]; j_max + 1];
        let mut p0 = vec![0.0; g_max];
        let mut visited = 0usize;

        // First block: Σ m_j + k(r+1) − s + 1 = g ≤ g_max, n = Σ j m_j − r ≥ 1.
        visited += for_each_bounded(l, g_max - 1, l * (g_max - 1), cfg.composition_cap, |m| {
            let weight: usize = m.iter().enumerate().map(|(j, &x)| (j + 1) * x).sum();
            let total: usize = m.iter().sum();
            for r in 0..weight.min(cfg.r_cap + 1) {
                let n = weight - r;
                if n > cfg.n_cap {
                    continue;
                }
                for s in 1..=k {
                    if total + k * (r + 1) - s + 1 > g_max {
                        continue;
                    }
                    let a = a_order(k, r, s, m) as usize;
                    let j = k * (n - 1) + s;
                    if j > j_max {
                        continue;
                    }
                    let v = (ln_a_coef(qp, &c, r, s, m) - (a - 1) as f64 * ln_rate).exp();
                    a_block[j][a - 1] += v;
                    if s == 1 && m[0] >= 1 {
                        a_m1[j][a - 1] += v;
                    }
                }
            }
        })?;

        // Zero state: γ = h + n + k Σ j m_j ≤ g_max.
        visited += for_each_bounded(l, g_max - 1, (g_max - 1) / k, cfg.composition_cap, |m| {
            let base = gamma0_order(k, 1, m) as usize - 1;
            if base + 1 > g_max {
                return;
            }
            for h in 1..=(g_max - base).min(cfg.h_cap) {
                let g = base + h;
                let v = (ln_c0_coef(qp, &c, h, m) - (g - 1) as f64 * ln_rate).exp();
                p0[g - 1] += v;
            }
        })?;

        // B − C blocks: (kμ/c) Σ_{a + γ = g} (A_j[a] − A_next[a]) P0[γ].
        let ratio = qp.phase_rate() / qp.total_rate();
        let mut bc_block = vec![vec![0.0; g_max]; j_max + 1];
        for j in 1..j_max {
            let s = (j - 1) % k + 1;
            let next: &[f64] = if s < k || branch == SkBranch::NextLevel {
                &a_block[j + 1]
            } else {
                &a_m1[j + 1]
            };
            let diff: Vec<f64> = a_block[j].iter().zip(next).map(|(x, y)| x - y).collect();
            for g in 2..=g_max {
                let mut acc = 0.0;
                for a in 1..g {
                    acc += diff[a - 1] * p0[g - a - 1];
                }
                bc_block[j][g - 1] = ratio * acc;
            }
        }
        let _ = ln_batch_product;
        Ok(Ledger { shells: g_max, branch, p0, a_block, bc_block, compositions_visited: visited })
    }

    /// Largest phase index with a complete weight row.
    pub fn max_state(&self) -> usize {
        self.a_block.len() - 2
    }

    /// Combined weight `w[j][g−1]` (`j = 0` is the zero state).
    pub fn weight(&self, j: usize, g: usize) -> f64 {
        if j == 0 {
            self.p0[g - 1]
        } else {
            self.a_block[j][g - 1] + self.bc_block[j][g - 1]
        }
    }
}

/// Busy-period weights `b[G−1]` for a start at `a` phases, scaled by
/// `(Λ+kμ)^{−G}`, for `G = a + n + k Σ j m_j ≤ shells`.
pub fn busy_weights(qp: &QueueParams, a: usize, shells: usize, cfg: &SeriesConfig) -> Result<Vec<f64>> {
    let (l, k) = (qp.l(), qp.k);
    if a == 0 || a % k != 0 || a > l * k {
        return domain(format!("busy-period start a = {a} must be one of k, 2k, …, lk"));
    }
    let c = qp.c();
    let ln_rate = qp.total_rate().ln();
    let ln_lam = qp.big_lambda().ln();
    let ln_kmu = qp.phase_rate().ln();
    let mut out = vec![0.0; shells];
    if shells < a {
        return Ok(out);
    }
    let room = shells - a;
    for_each_bounded(l, room, room / k, cfg.composition_cap, |m| {
        let n: usize = m.iter().sum();
        let w: usize = m.iter().enumerate().map(|(j, &x)| (j + 1) * x).sum();
        let g = a + n + k * w;
        if g > shells {
            return;
        }
        let served = (a + k * w) as u64;
        let ln_coef = (a as f64).ln()
            + n as f64 * ln_lam
            + ln_batch_product(&c, m)
            + served as f64 * ln_kmu
            + ln_factorial(g as u64 - 1)
            - ln_factorial(served);
        out[g - 1] += (ln_coef - g as f64 * ln_rate).exp();
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Row 0 of `P^{g−1}` for `g = 1..=shells`, on phase indices `0..=cap`.
    fn uniformized_rows(qp: &QueueParams, shells: usize, cap: usize) -> Vec<Vec<f64>> {
        let rate = qp.total_rate();
        let mut v = vec![0.0; cap + 1];
        v[0] = 1.0;
        let mut out = Vec::new();
        for _ in 0..shells {
            out.push(v.clone());
            let mut nv = vec![0.0; cap + 1];
            for j in 0..=cap {
                let x = v[j];
                if x == 0.0 {
                    continue;
                }
                let mut stay = 1.0 - qp.big_lambda() / rate;
                if j > 0 {
                    nv[j - 1] += x * qp.phase_rate() / rate;
                } else {
                    stay = 1.0 - qp.big_lambda() / rate;
                }
                if j > 0 {
                    stay -= qp.phase_rate() / rate;
                }
                nv[j] += x * stay;
                for (i, lam) in qp.lambdas.iter().enumerate() {
                    let to = j + (i + 1) * qp.k;
                    if to <= cap {
                        nv[to] += x * lam / rate;
                    }
                }
            }
            v = nv;
        }
        out
    }

    fn check(qp: QueueParams, shells: usize, branch: SkBranch) -> f64 {
        let led = Ledger::build(&qp, shells, branch, &SeriesConfig::default()).unwrap();
        let cap = led.max_state();
        let rows = uniformized_rows(&qp, shells, cap + 5);
        let mut worst = 0.0f64;
        for g in 1..=shells {
            for j in 0..=cap {
                worst = worst.max((led.weight(j, g) - rows[g - 1][j]).abs());
            }
        }
        worst
    }

    #[test]
    fn weights_are_uniformized_powers() {
        let e = check(QueueParams::new(vec![0.6, 0.3], 2, 1.2).unwrap(), 25, SkBranch::NextLevel);
        assert!(e < 1e-13, "{e}");
        let e = check(QueueParams::new(vec![0.8], 2, 1.2).unwrap(), 25, SkBranch::NextLevel);
        assert!(e < 1e-13, "{e}");
        let e = check(QueueParams::new(vec![0.2, 0.1, 0.3], 3, 0.7).unwrap(), 16, SkBranch::NextLevel);
        assert!(e < 1e-13, "{e}");
    }

    #[test]
    fn shifted_branch_agrees_only_for_single_arrivals() {
        let e = check(QueueParams::new(vec![0.8], 2, 1.2).unwrap(), 20, SkBranch::Shifted);
        assert!(e < 1e-13, "{e}");
        let e = check(QueueParams::new(vec![0.6, 0.3], 2, 1.2).unwrap(), 20, SkBranch::Shifted);
        assert!(e > 1e-3, "{e}");
    }

    #[test]
    fn zero_state_weights_are_probabilities() {
        let qp = QueueParams::new(vec![0.6, 0.3], 2, 1.2).unwrap();
        let led = Ledger::build(&qp, 40, SkBranch::NextLevel, &SeriesConfig::default()).unwrap();
        assert!((led.p0[0] - 1.0).abs() < 1e-15);
        assert!(led.p0.iter().all(|&x| (0.0..=1.0).contains(&x)));
        for g in 1..=40 {
            let total: f64 = (0..=led.max_state()).map(|j| led.weight(j, g)).sum();
            assert!((total - 1.0).abs() < 1e-12, "g={g}: {total}");
        }
    }

    #[test]
    fn busy_weights_sum_below_one() {
        let qp = QueueParams::new(vec![0.6, 0.3], 2, 1.2).unwrap();
        let b = busy_weights(&qp, 2, 200, &SeriesConfig::default()).unwrap();
        let s: f64 = b.iter().sum();
        assert!(s <= 1.0 + 1e-12 && s > 0.8, "{s}");
        assert!(busy_weights(&qp, 3, 20, &SeriesConfig::default()).is_err());
        assert!(busy_weights(&qp, 6, 20, &SeriesConfig::default()).is_err());
    }
}
