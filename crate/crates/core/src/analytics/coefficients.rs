use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::queue::QueueParams;
use crate::special::ln_factorial;

use super::SeriesContext;

/// Index tuple for one entry of the coefficient ledger. `m` belongs to the
/// arrival/service block (`Σ j·m_j − r = n`), `m_prime` to the zero-state
/// factor (`Σ m'_j = w`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoefficientIndices {
    pub n: usize,
    pub s: usize,
    pub r: usize,
    pub h: usize,
    pub w: usize,
    pub m: Vec<usize>,
    pub m_prime: Vec<usize>,
}

/// Every ledger entry for one index tuple. Magnitudes are natural logs;
/// integer orders are exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    pub a_r: u64,
    pub pi_r: f64,
    pub gamma0: u64,
    pub ln_c0: f64,
    pub beta0: f64,
    pub ln_a: f64,
    pub ln_b: f64,
    pub ln_c: f64,
    pub b: u64,
    pub rho: f64,
    pub c: u64,
    pub delta: f64,
    pub beta_m: f64,
}

fn ln_pos(x: f64) -> f64 {
    x.ln()
}

/// `Σ_i (m_i ln c_i − ln m_i!)`, with `0·ln 0 = 0`.
pub(crate) fn ln_batch_product(c: &[f64], m: &[usize]) -> f64 {
    c.iter()
        .zip(m)
        .map(|(&ci, &mi)| {
            if mi == 0 {
                0.0
            } else {
                mi as f64 * ln_pos(ci) - ln_factorial(mi as u64)
            }
        })
        .sum()
}

/// `a_r^{n,s}(m) = Σ m_j + k(r+1) − s + 1`.
pub(crate) fn a_order(k: usize, r: usize, s: usize, m: &[usize]) -> u64 {
    (m.iter().sum::<usize>() + k * (r + 1) - s + 1) as u64
}

/// `γ^0_{h,n}(m) = h + n + k Σ j·m_j` with `n = Σ m_j`.
pub(crate) fn gamma0_order(k: usize, h: usize, m: &[usize]) -> u64 {
    let n: usize = m.iter().sum();
    let w: usize = m.iter().enumerate().map(|(j, &x)| (j + 1) * x).sum();
    (h + n + k * w) as u64
}

/// `ln A_r^{n,s}(m)`.
pub(crate) fn ln_a_coef(qp: &QueueParams, c: &[f64], r: usize, s: usize, m: &[usize]) -> f64 {
    let k = qp.k;
    let serve = (k * (r + 1) - s) as u64;
    let a = a_order(k, r, s, m);
    let nb: usize = m.iter().sum();
    ln_batch_product(c, m) + nb as f64 * qp.big_lambda().ln() + serve as f64 * qp.phase_rate().ln()
        - ln_factorial(serve)
        + ln_factorial(a - 1)
}

/// `ln C^0_{h,n}(m)`.
pub(crate) fn ln_c0_coef(qp: &QueueParams, c: &[f64], h: usize, m: &[usize]) -> f64 {
    let n: usize = m.iter().sum();
    let g = gamma0_order(qp.k, h, m);
    (h as f64).ln()
        + n as f64 * qp.big_lambda().ln()
        + ln_batch_product(c, m)
        + (g - n as u64 - 1) as f64 * qp.phase_rate().ln()
        - ln_factorial(g - n as u64)
        + ln_factorial(g - 1)
}

/// The full notation block for one index tuple. For `s = k` the subtracted
/// entries use `m'' = (m_1 + 1, m_2, …)`.
pub fn coefficients(ctx: &SeriesContext, idx: &CoefficientIndices) -> Result<CoefficientSet> {
    let qp = &ctx.qp;
    let (l, k) = (qp.l(), qp.k);
    if idx.m.len() != l || idx.m_prime.len() != l {
        return domain(format!("compositions must have length l = {l}"));
    }
    if !(1..=k).contains(&idx.s) {
        return domain(format!("phase s = {} outside 1..={k}", idx.s));
    }
    if idx.h < 1 {
        return domain("h must be >= 1");
    }
    let weight: usize = idx.m.iter().enumerate().map(|(j, &x)| (j + 1) * x).sum();
    if weight < idx.r || weight - idx.r != idx.n {
        return domain(format!("Σ j·m_j − r = {} but n = {}", weight as i64 - idx.r as i64, idx.n));
    }
    if idx.m_prime.iter().sum::<usize>() != idx.w {
        return domain("Σ m'_j must equal w");
    }
    let alpha = ctx.alpha();
    let c = qp.c();
    let ln_kmu = qp.phase_rate().ln();

    let a_r = a_order(k, idx.r, idx.s, &idx.m);
    let pi_r = alpha * (a_r as f64 - 1.0) + 1.0;
    let gamma0 = gamma0_order(k, idx.h, &idx.m_prime);
    let ln_c0 = ln_c0_coef(qp, &c, idx.h, &idx.m_prime);
    let beta0 = alpha * (gamma0 as f64 - 1.0) + 1.0;
    let ln_a = ln_a_coef(qp, &c, idx.r, idx.s, &idx.m);
    let ln_b = ln_kmu + ln_a + ln_c0;
    let (ln_next, a_next) = if idx.s < k {
        (ln_a_coef(qp, &c, idx.r, idx.s + 1, &idx.m), a_order(k, idx.r, idx.s + 1, &idx.m))
    } else {
        let mut m2 = idx.m.clone();
        m2[0] += 1;
        (ln_a_coef(qp, &c, idx.r, 1, &m2), a_order(k, idx.r, 1, &m2))
    };
    let ln_c = ln_kmu + ln_next + ln_c0;
    let b = a_r + gamma0;
    let cc = a_next + gamma0;
    Ok(CoefficientSet {
        a_r,
        pi_r,
        gamma0,
        ln_c0,
        beta0,
        ln_a,
        ln_b,
        ln_c,
        b,
        rho: alpha * (b as f64 - 1.0) + 1.0,
        c: cc,
        delta: alpha * (cc as f64 - 1.0) + 1.0,
        beta_m: alpha * gamma0 as f64 + 1.0,
    })
}
