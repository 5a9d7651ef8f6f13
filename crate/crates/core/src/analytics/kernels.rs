//! Shell kernels `π_g(t)`, `ι_g(t)` and the moment generating function of
//! the inverse subordinator, which certifies where the shells may stop.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Estimate, Result};
use std::sync::OnceLock;

use crate::dd::{gamma_ratio, Dd};
use crate::special::{ln_gamma, ml_series, ml_series_dd, ml3_scaled, EvalResult, DEFAULT_TERM_CAP};

/// `rows[m][i] = ln Γ(α i + 1 + m)`, with a direct fallback off the table.
#[derive(Debug, Clone)]
pub(crate) struct LnGammaTable {
    alpha: f64,
    rows: Vec<Vec<f64>>,
    /// `Γ(αi+1+m) / Γ(α(i+1)+1+m)` in double-double, built on first use.
    ratios: OnceLock<Vec<Vec<Dd>>>,
}

impl LnGammaTable {
    pub fn new(alpha: f64, m_rows: usize, cols: usize) -> Self {
        let rows = (0..m_rows)
            .map(|m| (0..cols).map(|i| ln_gamma(alpha * i as f64 + 1.0 + m as f64)).collect())
            .collect();
        LnGammaTable { alpha, rows, ratios: OnceLock::new() }
    }

    fn ratio_at(&self, m: usize, i: usize) -> Dd {
        gamma_ratio(Dd::prod(self.alpha, i as f64) + Dd::new(1.0 + m as f64), self.alpha)
    }

    pub fn ratio(&self, m: usize, i: usize) -> Dd {
        let rows = self.ratios.get_or_init(|| {
            (0..self.rows.len())
                .map(|m| (0..self.rows[m].len()).map(|i| self.ratio_at(m, i)).collect())
                .collect()
        });
        match rows.get(m).and_then(|r| r.get(i)) {
            Some(&v) => v,
            None => self.ratio_at(m, i),
        }
    }

    #[inline]
    pub fn get(&self, m: usize, i: usize) -> f64 {
        match self.rows.get(m).and_then(|r| r.get(i)) {
            Some(&v) => v,
            None => ln_gamma(self.alpha * i as f64 + 1.0 + m as f64),
        }
    }
}

/// `e^{scale} Σ_j (γ)_j x^j / (j! Γ(α(off+j)+1+m))`, re-summed in
/// double-double when the `f64` sum cancels too many digits.
pub(crate) fn ml_table(
    tab: &LnGammaTable,
    gamma: f64,
    x: f64,
    scale: f64,
    m: usize,
    off: usize,
    tol: f64,
) -> EvalResult {
    let r = ml_series(gamma, x, scale, tol, 0.0, DEFAULT_TERM_CAP, |j| tab.get(m, off + j));
    if r.rounding_bound > 1e3 * f64::EPSILON * r.value.abs() {
        let d = ml_series_dd(gamma, x, scale, tab.get(m, off), tol, DEFAULT_TERM_CAP, |j| tab.ratio(m, off + j));
        if d.converged {
            return d;
        }
    }
    r
}

/// Running sum over the tempering index `m` with the bound
/// `|term_m| ≤ x^m/m! · B0`, where `B0` is the absolute sum at `m = 0`.
struct TemperedSum {
    x: f64,
    tol: f64,
    cap: usize,
    sum: f64,
    err: f64,
    b0: f64,
    ln_xm_fact: f64,
}

enum Step {
    More,
    Done(Estimate),
}

impl TemperedSum {
    fn new(x: f64, tol: f64, cap: usize) -> Self {
        TemperedSum { x, tol, cap, sum: 0.0, err: 0.0, b0: 0.0, ln_xm_fact: 0.0 }
    }

    fn push(&mut self, m: usize, parts: &[EvalResult], signs: &[f64]) -> Step {
        let mut abs = 0.0;
        for (p, s) in parts.iter().zip(signs) {
            self.sum += s * p.value;
            self.err += p.total_error();
            abs += p.abs_sum;
        }
        if m == 0 {
            self.b0 = abs;
        }
        if !abs.is_finite() {
            return Step::Done(Estimate::new(self.sum, f64::INFINITY));
        }
        if self.x == 0.0 || self.b0 == 0.0 {
            return Step::Done(Estimate::new(self.sum, self.err));
        }
        let next = (m + 1) as f64;
        self.ln_xm_fact += self.x.ln() - next.ln();
        if self.x < next + 1.0 {
            let tail = self.b0 * self.ln_xm_fact.exp() / (1.0 - self.x / (next + 1.0));
            if tail <= self.tol * self.sum.abs() || tail < 1e-300 {
                return Step::Done(Estimate::new(self.sum, self.err + tail));
            }
        }
        if m + 1 >= self.cap {
            return Step::Done(Estimate::new(self.sum, f64::INFINITY));
        }
        Step::More
    }
}

/// Per-time shell kernels, index `g − 1`.
#[derive(Debug, Clone)]
pub(crate) struct ShellKernels {
    /// `π_g = E[Pois(cY; g−1)]`.
    pub pi: Vec<Estimate>,
    /// The same kernel with the constant `θ^α` replacing `θ^m`.
    pub pi_alpha: Option<Vec<Estimate>>,
    /// `ι_g = P(Pois(cY) ≥ g)`.
    pub iota: Vec<Estimate>,
}

pub(crate) struct KernelArgs<'a> {
    pub table: &'a LnGammaTable,
    pub rate: f64,
    pub theta: f64,
    pub alpha: f64,
    pub shells: usize,
    pub with_alpha_reading: bool,
    pub term_tol: f64,
    pub tempering_cap: usize,
    /// Added to `β`; nonzero only for negative controls.
    pub beta_shift: f64,
}

pub(crate) fn shell_kernels(a: &KernelArgs, t: f64) -> ShellKernels {
    let g_max = a.shells;
    if t == 0.0 {
        let mut pi = vec![Estimate::default(); g_max];
        pi[0] = Estimate::new(1.0, 0.0);
        let pa = a.with_alpha_reading.then(|| {
            let mut v = vec![Estimate::default(); g_max];
            v[0] = Estimate::new(if a.theta > 0.0 { a.theta.powf(a.alpha) } else { 0.0 }, 0.0);
            v
        });
        return ShellKernels { pi, pi_alpha: pa, iota: vec![Estimate::default(); g_max] };
    }
    let (th, al) = (a.theta, a.alpha);
    let beta = th.powf(al) - a.rate + a.beta_shift;
    let x = beta * t.powf(al);
    let ln_t = t.ln();
    let ln_c = a.rate.ln();
    let ln_th = if th > 0.0 { th.ln() } else { 0.0 };
    let ln_tha = al * ln_th;
    let tab = a.table;
    let tol = a.term_tol;
    let ml = |gamma: f64, scale: f64, m: usize, off: usize| ml_table(tab, gamma, x, scale, m, off, tol);

    let mut pi = Vec::with_capacity(g_max);
    let mut pa = Vec::with_capacity(g_max);
    let mut iota = Vec::with_capacity(g_max);
    for g in 1..=g_max {
        let gf = g as f64;
        let base = -th * t + (gf - 1.0) * ln_c + al * (gf - 1.0) * ln_t;
        let second = if th > 0.0 { al * (th * t).ln() } else { f64::NEG_INFINITY };
        let pi_term = |m: usize, lead: f64| -> [EvalResult; 2] {
            let s = base + lead + m as f64 * ln_t;
            let p1 = ml(gf, s, m, g - 1);
            let p2 = if th > 0.0 { ml(gf, s + second, m, g) } else { zero() };
            [p1, p2]
        };

        let mut acc = TemperedSum::new(th * t, tol, a.tempering_cap);
        let mut m = 0;
        pi.push(loop {
            let parts = pi_term(m, m as f64 * ln_th);
            if let Step::Done(e) = acc.push(m, &parts, &[1.0, -1.0]) {
                break e;
            }
            m += 1;
        });

        if a.with_alpha_reading {
            if th == 0.0 {
                pa.push(Estimate::default());
            } else {
                let mut acc = TemperedSum::new(t, tol, a.tempering_cap);
                let mut m = 0;
                pa.push(loop {
                    let parts = pi_term(m, ln_tha);
                    if let Step::Done(e) = acc.push(m, &parts, &[1.0, -1.0]) {
                        break e;
                    }
                    m += 1;
                });
            }
        }

        let base_i = -th * t + gf * ln_c + al * gf * ln_t;
        let mut acc = TemperedSum::new(th * t, tol, a.tempering_cap);
        let mut m = 0;
        iota.push(loop {
            let s = base_i + m as f64 * (ln_th + ln_t);
            let part = ml(gf, s, m, g);
            if let Step::Done(e) = acc.push(m, &[part], &[1.0]) {
                break e;
            }
            m += 1;
        });
    }
    ShellKernels { pi, pi_alpha: a.with_alpha_reading.then_some(pa), iota }
}

fn zero() -> EvalResult {
    EvalResult {
        value: 0.0,
        abs_error_bound: 0.0,
        rounding_bound: 0.0,
        abs_sum: 0.0,
        terms_used: 0,
        converged: true,
    }
}

fn check_args(theta: f64, alpha: f64, t: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) || !(theta >= 0.0) || !theta.is_finite() {
        return domain(format!("need 0 < α <= 1 and θ >= 0 (α={alpha}, θ={theta})"));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return domain(format!("time must be finite and >= 0, got {t}"));
    }
    Ok(())
}

/// Shared m-sum for `e^{−θt} Σ_m (θt)^m [δ/m! + ρ t^α E_{α,α+m+1}((ρ+θ^α)t^α)]`.
fn positive_series(theta: f64, alpha: f64, t: f64, rho: f64, shift: f64, with_one: bool) -> Result<Estimate> {
    check_args(theta, alpha, t)?;
    if t == 0.0 {
        return Ok(Estimate::new(if with_one { 1.0 } else { 0.0 }, 0.0));
    }
    let arg = (shift + theta.powf(alpha)) * t.powf(alpha);
    let x = theta * t;
    let ln_x = if x > 0.0 { x.ln() } else { 0.0 };
    let one = if with_one { 1.0 } else { 0.0 };
    let mut sum = 0.0;
    let mut err = 0.0;
    let mut k0 = 0.0;
    let mut ln_pow = 0.0; // ln(x^m/m!)
    for m in 0..2_000usize {
        let mf = m as f64;
        if m > 0 {
            ln_pow += ln_x - mf.ln();
        }
        let e = ml3_scaled(alpha, alpha + mf + 1.0, 1.0, arg, -x + m as f64 * ln_x, 1e-17, 0.0, 100_000);
        if !e.converged {
            return Err(Error::Unconverged {
                what: "inverse-subordinator moment series".into(),
                partial: sum,
                bound: f64::INFINITY,
            });
        }
        let head = one * (-x + ln_pow).exp();
        let term = head + rho * t.powf(alpha) * e.value;
        sum += term;
        err += rho.abs() * t.powf(alpha) * e.total_error() + head * 1e-16;
        if m == 0 {
            k0 = term;
        }
        if x == 0.0 {
            break;
        }
        // Tail over later m is at most K0 · P(Pois(x) > m).
        let next = (m + 1) as f64;
        if x < next + 1.0 {
            let tail = k0 * (ln_pow + x.ln() - next.ln()).exp() / (1.0 - x / (next + 1.0));
            if tail <= 1e-17 * sum {
                return Ok(Estimate::new(sum, err + tail));
            }
        }
    }
    if x == 0.0 {
        return Ok(Estimate::new(sum, err));
    }
    Err(Error::Unconverged { what: "inverse-subordinator moment series".into(), partial: sum, bound: f64::INFINITY })
}

/// `E[Y(t)]` for the inverse tempered stable subordinator.
pub fn inverse_mean(theta: f64, alpha: f64, t: f64) -> Result<Estimate> {
    positive_series(theta, alpha, t, 1.0, 0.0, false)
}

/// `E[e^{ρ Y(t)}]`, `ρ >= 0`.
pub fn inverse_mgf(theta: f64, alpha: f64, rho: f64, t: f64) -> Result<Estimate> {
    if !(rho >= 0.0) {
        return domain(format!("moment generating function needs ρ >= 0, got {rho}"));
    }
    positive_series(theta, alpha, t, rho, rho, true)
}

/// Chernoff bound on `P(Pois(cY(t)) ≥ G)` and on `Σ_{g>G} P(Pois(cY) ≥ g)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChernoffBound {
    pub shells: usize,
    pub z: f64,
    /// Bound on `ι_G`, hence on every omitted shell mass.
    pub tail: f64,
    /// Bound on `Σ_{g>G} ι_g`.
    pub mean_tail: f64,
}

/// Largest `ρ` with `ln E[e^{ρY(t)}]` safely representable.
fn rho_cap(theta: f64, alpha: f64, t: f64) -> f64 {
    ((600.0 / t).powf(alpha) - theta.powf(alpha)).max(1e-3)
}

/// Values of `ln E[e^{c(z−1)Y}]` on a grid in `u = ln z`.
struct MgfGrid {
    u: Vec<f64>,
    ln_mgf: Vec<f64>,
}

fn mgf_grid(theta: f64, alpha: f64, rate: f64, t: f64) -> Result<MgfGrid> {
    let u_max = (1.0 + rho_cap(theta, alpha, t) / rate).ln();
    let n = 240;
    let mut u = Vec::with_capacity(n);
    let mut ln_mgf = Vec::with_capacity(n);
    for i in 1..=n {
        let ui = u_max * i as f64 / n as f64;
        let rho = rate * ui.exp_m1();
        let e = inverse_mgf(theta, alpha, rho, t)?;
        u.push(ui);
        ln_mgf.push((e.value + e.error).ln());
    }
    Ok(MgfGrid { u, ln_mgf })
}

impl MgfGrid {
    fn best(&self, shells: usize) -> ChernoffBound {
        let g = shells as f64;
        let mut best = (f64::INFINITY, f64::INFINITY, 1.0);
        for (&u, &l) in self.u.iter().zip(&self.ln_mgf) {
            let tail = (l - g * u).exp();
            let mean_tail = tail / u.exp_m1();
            if tail.max(mean_tail) < best.0.max(best.1) {
                best = (tail, mean_tail, u.exp());
            }
        }
        ChernoffBound { shells, z: best.2, tail: best.0.min(1.0), mean_tail: best.1 }
    }
}

/// Bound for a fixed shell count at time `t`; valid for every earlier time.
pub fn chernoff_tail(theta: f64, alpha: f64, rate: f64, t: f64, shells: usize) -> Result<ChernoffBound> {
    check_args(theta, alpha, t)?;
    if t == 0.0 {
        return Ok(ChernoffBound { shells, z: 1.0, tail: 0.0, mean_tail: 0.0 });
    }
    Ok(mgf_grid(theta, alpha, rate, t)?.best(shells))
}

/// Smallest shell count whose bounds at `t` fall below `target`.
pub(crate) fn shells_for(
    theta: f64,
    alpha: f64,
    rate: f64,
    t: f64,
    target: f64,
    shell_cap: usize,
) -> Result<ChernoffBound> {
    check_args(theta, alpha, t)?;
    if t == 0.0 {
        return Ok(ChernoffBound { shells: 1, z: 1.0, tail: 0.0, mean_tail: 0.0 });
    }
    let grid = mgf_grid(theta, alpha, rate, t)?;
    for g in 1..=shell_cap {
        let b = grid.best(g);
        if b.tail <= target && b.mean_tail <= target {
            return Ok(b);
        }
    }
    let b = grid.best(shell_cap);
    Err(Error::Unconverged {
        what: format!("shell truncation at t = {t} within {shell_cap} shells"),
        partial: f64::NAN,
        bound: b.tail.max(b.mean_tail),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_mean_matches_oracle() {
        let e = inverse_mean(0.5, 0.7, 1.0).unwrap();
        // Oracle from numerical Laplace inversion, good to about 1e-11.
        assert!((e.value - 1.4481732693932912).abs() < 1e-11, "{e:?}");
        // θ = 0, α = 1: Y(t) = t.
        let e = inverse_mean(0.0, 1.0, 2.5).unwrap();
        assert!((e.value - 2.5).abs() < 1e-14);
    }

    #[test]
    fn mgf_reduces_to_exponential() {
        let e = inverse_mgf(0.0, 1.0, 0.7, 2.0).unwrap();
        assert!((e.value - (1.4f64).exp()).abs() < 1e-12);
        let e = inverse_mgf(0.5, 0.7, 0.0, 1.3).unwrap();
        assert!((e.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mgf_second_derivative_is_positive() {
        let f = |r: f64| inverse_mgf(0.5, 0.7, r, 1.0).unwrap().value.ln();
        let h = 0.1;
        for r in [0.5, 2.0, 6.0] {
            assert!(f(r + h) - 2.0 * f(r) + f(r - h) > 0.0);
        }
        // Slope at 0 is the mean.
        let d = (inverse_mgf(0.5, 0.7, 1e-6, 1.0).unwrap().value - 1.0) / 1e-6;
        assert!((d - 1.4481732693932912).abs() < 1e-5);
    }

    #[test]
    fn chernoff_bound_dominates_poisson_tail() {
        // Y = t at θ = 0, α = 1.
        let b = chernoff_tail(0.0, 1.0, 3.3, 1.0, 15).unwrap();
        let mut tail = 0.0;
        let mut p = (-3.3f64).exp();
        for n in 0..200 {
            if n >= 15 {
                tail += p;
            }
            p *= 3.3 / (n + 1) as f64;
        }
        assert!(b.tail >= tail && b.tail < 1e-3, "{b:?} {tail}");
        let s = shells_for(0.5, 0.7, 3.3, 2.0, 1e-12, 600).unwrap();
        assert!(s.shells > 10 && s.shells < 400, "{s:?}");
    }

    #[test]
    fn kernels_are_poisson_at_identity_change() {
        let tab = LnGammaTable::new(1.0, 4, 80);
        let args = KernelArgs {
            table: &tab,
            rate: 3.3,
            theta: 0.0,
            alpha: 1.0,
            shells: 30,
            with_alpha_reading: false,
            term_tol: 1e-16,
            tempering_cap: 100,
            beta_shift: 0.0,
        };
        let k = shell_kernels(&args, 1.5);
        let lam = 3.3 * 1.5f64;
        let mut p = (-lam).exp();
        let mut cdf = 0.0;
        for g in 1..=30 {
            let e = k.pi[g - 1];
            assert!((e.value - p).abs() <= e.error && e.error < 1e-9, "g={g} {e:?} {p}");
            cdf += p;
            let e = k.iota[g - 1];
            assert!((e.value - (1.0 - cdf)).abs() <= e.error + 1e-15 && e.error < 1e-9, "g={g} {e:?} {}", e.value - (1.0 - cdf));
            p *= lam / g as f64;
        }
    }

    #[test]
    fn tempered_kernels_sum_to_one() {
        let tab = LnGammaTable::new(0.7, 40, 300);
        let args = KernelArgs {
            table: &tab,
            rate: 3.3,
            theta: 0.5,
            alpha: 0.7,
            shells: 120,
            with_alpha_reading: true,
            term_tol: 1e-16,
            tempering_cap: 200,
            beta_shift: 0.0,
        };
        let k = shell_kernels(&args, 1.0);
        let s: f64 = k.pi.iter().map(|e| e.value).sum();
        assert!((s - 1.0).abs() < 1e-10, "{s}");
        // ι_g = Σ_{h>g} π_h.
        let tail: f64 = k.pi[5..].iter().map(|e| e.value).sum();
        assert!((k.iota[4].value - tail).abs() < 1e-10);
        // Mean of Pois(cY) = c E[Y].
        let m: f64 = k.pi.iter().enumerate().map(|(i, e)| i as f64 * e.value).sum();
        assert!((m - 3.3 * 1.4481732693932912).abs() < 1e-9, "{m}");
        let worst = k.pi.iter().map(|e| e.error).fold(0.0, f64::max);
        assert!(worst < 1e-8, "{worst}");
    }
}
