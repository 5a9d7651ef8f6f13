//! Single-arrival (l = 1) series written out term by term from their own
//! notation (D, F, Z, d, f, z, ζ, η, δ⁰, Z⁰). Shares no coefficient code with
//! the general ledger, so the two paths can be checked against each other.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dd::{gamma_ratio, Dd};
use crate::error::{domain, Error, Estimate, Result};
use crate::special::{ln_factorial, ln_gamma, ml3_scaled, ml_series_dd, EvalResult, DEFAULT_TERM_CAP};

use super::kernels::shells_for;
use super::{SeriesContext, ThetaReading};

/// Orders, exponents and log-coefficients for one `(n, s, r, h, w)` tuple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErlangTerms {
    pub d: u64,
    pub zeta: f64,
    pub delta0: u64,
    pub ln_z0: f64,
    pub ln_d: f64,
    pub f: u64,
    pub eta: f64,
    pub ln_f: f64,
    pub z: u64,
    pub alpha_exp: f64,
    pub ln_z: f64,
}

struct Rates {
    ln_lam: f64,
    ln_kmu: f64,
    k: usize,
    alpha: f64,
}

impl Rates {
    fn of(ctx: &SeriesContext) -> Result<Self> {
        if ctx.qp.l() != 1 {
            return domain("the single-arrival transcription needs l = 1");
        }
        Ok(Rates {
            ln_lam: ctx.qp.lambdas[0].ln(),
            ln_kmu: ctx.qp.phase_rate().ln(),
            k: ctx.qp.k,
            alpha: ctx.alpha(),
        })
    }

    /// d = n + r + k(r+1) − s + 1
    fn d(&self, n: usize, s: usize, r: usize) -> u64 {
        (n + r + self.k * (r + 1) - s + 1) as u64
    }

    fn delta0(&self, h: usize, n: usize) -> u64 {
        (h + n * (self.k + 1)) as u64
    }

    /// ln Z⁰_{h,n}. The exponent of kμ is δ⁰ − n − 1.
    fn ln_z0(&self, h: usize, n: usize) -> f64 {
        let dl = self.delta0(h, n);
        (h as f64).ln() + n as f64 * self.ln_lam - ln_factorial(n as u64)
            + (dl - n as u64 - 1) as f64 * self.ln_kmu
            + ln_factorial(dl - 1)
            - ln_factorial(dl - n as u64)
    }

    fn ln_d(&self, n: usize, s: usize, r: usize) -> f64 {
        let serve = (self.k * (r + 1) - s) as u64;
        (n + r) as f64 * self.ln_lam + serve as f64 * self.ln_kmu
            - ln_factorial((n + r) as u64)
            - ln_factorial(serve)
            + ln_factorial(self.d(n, s, r) - 1)
    }

    fn exp_of(&self, order: u64) -> f64 {
        self.alpha * (order as f64 - 1.0) + 1.0
    }

    fn terms(&self, n: usize, s: usize, r: usize, h: usize, w: usize) -> ErlangTerms {
        let d = self.d(n, s, r);
        let delta0 = self.delta0(h, w);
        let ln_z0 = self.ln_z0(h, w);
        let ln_d = self.ln_d(n, s, r);
        let f = d + delta0;
        let (d_next, ln_d_next) = if s != self.k {
            (self.d(n, s + 1, r), self.ln_d(n, s + 1, r))
        } else {
            (self.d(n + 1, 1, r), self.ln_d(n + 1, 1, r))
        };
        let z = d_next + delta0;
        ErlangTerms {
            d,
            zeta: self.exp_of(d),
            delta0,
            ln_z0,
            ln_d,
            f,
            eta: self.exp_of(f),
            ln_f: self.ln_kmu + ln_d + ln_z0,
            z,
            alpha_exp: self.exp_of(z),
            ln_z: self.ln_kmu + ln_d_next + ln_z0,
        }
    }
}

/// The notation block at `(n, s, r, h, w)`; `n ≥ 1`, `1 ≤ s ≤ k`, `h ≥ 1`.
pub fn erlang_terms(ctx: &SeriesContext, n: usize, s: usize, r: usize, h: usize, w: usize) -> Result<ErlangTerms> {
    let rates = Rates::of(ctx)?;
    if n < 1 || !(1..=rates.k).contains(&s) || h < 1 {
        return domain(format!("invalid index tuple n={n}, s={s}, h={h}"));
    }
    Ok(rates.terms(n, s, r, h, w))
}

/// `e^{−θt} Σ_m θ^m t^{ζ+m−1} [E^d_{α,ζ+m}(ηt^α) − (θt)^α E^d_{α,ζ+α+m}(ηt^α)]`
/// with `ζ = α(d−1)+1`, memoized by order. `theta_power_alpha` swaps `θ^m`
/// for the constant `θ^α`.
struct Kernels<'a> {
    ctx: &'a SeriesContext,
    t: f64,
    memo: HashMap<(u64, bool), Estimate>,
}

fn ml(alpha: f64, b: f64, gamma: f64, x: f64, scale: f64, tol: f64) -> EvalResult {
    let r = ml3_scaled(alpha, b, gamma, x, scale, tol, 0.0, DEFAULT_TERM_CAP);
    if r.rounding_bound > 1e3 * f64::EPSILON * r.value.abs() {
        let d = ml_series_dd(gamma, x, scale, ln_gamma(b), tol, DEFAULT_TERM_CAP, |j| {
            gamma_ratio(Dd::new(b) + Dd::prod(alpha, j as f64), alpha)
        });
        if d.converged {
            return d;
        }
    }
    r
}

impl Kernels<'_> {
    fn get(&mut self, order: u64, theta_power_alpha: bool) -> Result<Estimate> {
        if let Some(e) = self.memo.get(&(order, theta_power_alpha)) {
            return Ok(*e);
        }
        let e = self.compute(order, theta_power_alpha)?;
        self.memo.insert((order, theta_power_alpha), e);
        Ok(e)
    }

    fn compute(&self, order: u64, theta_power_alpha: bool) -> Result<Estimate> {
        let (th, al, t) = (self.ctx.theta(), self.ctx.alpha(), self.t);
        if t == 0.0 {
            // t^{ζ−1} vanishes unless ζ = 1 (order 1).
            let lead = if theta_power_alpha { th.powf(al) } else { 1.0 };
            return Ok(Estimate::new(if order == 1 { lead } else { 0.0 }, 0.0));
        }
        let tol = self.ctx.cfg.term_tol;
        let eta = th.powf(al) - self.ctx.qp.lambdas[0] - self.ctx.qp.phase_rate();
        let x = eta * t.powf(al);
        let zeta = al * (order as f64 - 1.0) + 1.0;
        let g = order as f64;
        let temper = if theta_power_alpha { t } else { th * t };
        let (mut sum, mut err, mut b0) = (0.0, 0.0, 0.0);
        let mut ln_pow = 0.0;
        for m in 0..self.ctx.cfg.tempering_cap {
            let mf = m as f64;
            let lead = if theta_power_alpha {
                if th > 0.0 {
                    al * th.ln()
                } else {
                    f64::NEG_INFINITY
                }
            } else if m == 0 {
                0.0
            } else {
                mf * th.ln()
            };
            let scale = -th * t + lead + (zeta + mf - 1.0) * t.ln();
            let e1 = ml(al, zeta + mf, g, x, scale, tol);
            let e2 = if th > 0.0 {
                ml(al, zeta + al + mf, g, x, scale + al * (th * t).ln(), tol)
            } else {
                EvalResult { value: 0.0, abs_error_bound: 0.0, rounding_bound: 0.0, abs_sum: 0.0, terms_used: 0, converged: true }
            };
            if !(e1.converged && e2.converged) {
                return Err(Error::Unconverged { what: format!("kernel of order {order}"), partial: sum, bound: f64::INFINITY });
            }
            sum += e1.value - e2.value;
            err += e1.total_error() + e2.total_error();
            if m == 0 {
                b0 = e1.abs_sum + e2.abs_sum;
            }
            if temper == 0.0 || scale == f64::NEG_INFINITY {
                return Ok(Estimate::new(sum, err));
            }
            let next = mf + 1.0;
            ln_pow += temper.ln() - next.ln();
            if temper < next + 1.0 {
                let tail = b0 * ln_pow.exp() / (1.0 - temper / (next + 1.0));
                if tail <= tol * sum.abs() || tail < 1e-300 {
                    return Ok(Estimate::new(sum, err + tail));
                }
            }
        }
        Err(Error::Unconverged { what: format!("tempering sum of order {order}"), partial: sum, bound: f64::INFINITY })
    }
}

/// Evaluator for the transcribed series at one time, truncated at the same
/// Mittag-Leffler order as the general path.
pub struct ErlangSeries<'a> {
    ctx: &'a SeriesContext,
    rates: Rates,
    kernels: Kernels<'a>,
    order_cap: u64,
    tail: f64,
}

impl<'a> ErlangSeries<'a> {
    pub fn new(ctx: &'a SeriesContext, t: f64) -> Result<Self> {
        let rates = Rates::of(ctx)?;
        let bound = shells_for(ctx.theta(), ctx.alpha(), ctx.rate(), t, ctx.cfg.target_tol, ctx.cfg.shell_cap)?;
        Ok(ErlangSeries {
            ctx,
            rates,
            kernels: Kernels { ctx, t, memo: HashMap::new() },
            order_cap: bound.shells as u64,
            tail: if t == 0.0 { 0.0 } else { bound.tail },
        })
    }

    pub fn zero_state_prob(&mut self) -> Result<Estimate> {
        let (mut v, mut e) = (0.0, 0.0);
        for h in 1..=self.order_cap as usize {
            let mut n = 0usize;
            while self.rates.delta0(h, n) <= self.order_cap {
                let c = self.rates.ln_z0(h, n).exp();
                let kern = self.kernels.get(self.rates.delta0(h, n), false)?;
                v += c * kern.value;
                e += c * kern.error;
                n += 1;
            }
        }
        Ok(Estimate::new(v, e + self.tail))
    }

    pub fn state_prob(&mut self, n: usize, s: usize) -> Result<Estimate> {
        let k = self.rates.k;
        if n < 1 || !(1..=k).contains(&s) {
            return domain(format!("state (n={n}, s={s}) invalid for k={k}"));
        }
        let first_alpha = self.ctx.reading == ThetaReading::Alpha;
        let cap = self.order_cap;
        let (mut v, mut e) = (0.0, 0.0);
        let mut r = 0usize;
        while self.rates.d(n, s, r) <= cap {
            let d = self.rates.d(n, s, r);
            let c = self.rates.ln_d(n, s, r).exp();
            let kern = self.kernels.get(d, first_alpha)?;
            v += c * kern.value;
            e += c * kern.error;
            for h in 1..=cap as usize {
                let mut w = 0usize;
                loop {
                    let tr = self.rates.terms(n, s, r, h, w);
                    if tr.f > cap && tr.z > cap {
                        break;
                    }
                    if tr.f <= cap {
                        let kern = self.kernels.get(tr.f, false)?;
                        let c = tr.ln_f.exp();
                        v += c * kern.value;
                        e += c * kern.error;
                    }
                    if tr.z <= cap {
                        let kern = self.kernels.get(tr.z, false)?;
                        let c = tr.ln_z.exp();
                        v -= c * kern.value;
                        e += c * kern.error;
                    }
                    w += 1;
                }
                if self.rates.d(n, s, r) + self.rates.delta0(h, 0) > cap {
                    break;
                }
            }
            r += 1;
        }
        Ok(Estimate::new(v, e + self.tail))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{coefficients, CoefficientIndices, Evaluator, SeriesConfig};
    use crate::exec::path_rng;
    use crate::queue::QueueParams;
    use rand::Rng;

    fn p1(theta: f64, alpha: f64) -> SeriesContext {
        let qp = QueueParams::new(vec![0.8], 2, 1.2).unwrap();
        SeriesContext::new(qp, theta, alpha, SeriesConfig::default()).unwrap()
    }

    #[test]
    fn agrees_with_general_path() {
        for (theta, alpha) in [(0.5, 0.7), (0.0, 1.0), (1.3, 0.6)] {
            let ctx = p1(theta, alpha);
            for t in [0.5, 1.0] {
                let snap = Evaluator::new(&ctx, t).unwrap().snapshot(t).unwrap();
                let mut direct = ErlangSeries::new(&ctx, t).unwrap();
                let p0 = direct.zero_state_prob().unwrap();
                assert!((p0.value - snap.zero_state_prob().value).abs() < 1e-10, "θ={theta} t={t}: {p0:?}");
                for n in 1..=6 {
                    for s in 1..=2 {
                        let a = direct.state_prob(n, s).unwrap();
                        let b = snap.state_prob(n, s).unwrap();
                        assert!((a.value - b.value).abs() < 1e-10, "θ={theta} t={t} ({n},{s}): {a:?} {b:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn small_alpha_agrees_within_reported_bounds() {
        // heavy cancellation here; both bounds are wide but must cover the gap
        let ctx = p1(1.3, 0.4);
        let snap = Evaluator::new(&ctx, 1.0).unwrap().snapshot(1.0).unwrap();
        let mut direct = ErlangSeries::new(&ctx, 1.0).unwrap();
        for n in 1..=3 {
            let a = direct.state_prob(n, 2).unwrap();
            let b = snap.state_prob(n, 2).unwrap();
            assert!((a.value - b.value).abs() <= a.error + b.error);
        }
    }

    #[test]
    fn theta_alpha_reading_agrees_too() {
        let ctx = p1(0.5, 0.7).with_reading(ThetaReading::Alpha);
        let snap = Evaluator::new(&ctx, 1.0).unwrap().snapshot(1.0).unwrap();
        let mut direct = ErlangSeries::new(&ctx, 1.0).unwrap();
        for n in 1..=4 {
            let a = direct.state_prob(n, 1).unwrap();
            let b = snap.state_prob(n, 1).unwrap();
            assert!((a.value - b.value).abs() < 1e-10, "{n}: {a:?} {b:?}");
        }
    }

    #[test]
    fn random_tuples_match_the_general_ledger() {
        let ctx = p1(0.5, 0.7);
        let mut rng = path_rng(17, 0);
        for _ in 0..20 {
            let (n, s, r, h, w) = (
                rng.random_range(1..8usize),
                rng.random_range(1..=2usize),
                rng.random_range(0..6usize),
                rng.random_range(1..6usize),
                rng.random_range(0..5usize),
            );
            let e = erlang_terms(&ctx, n, s, r, h, w).unwrap();
            let idx = CoefficientIndices { n, s, r, h, w, m: vec![n + r], m_prime: vec![w] };
            let g = coefficients(&ctx, &idx).unwrap();
            let tag = format!("({n},{s},{r},{h},{w})");
            assert_eq!(e.d, g.a_r, "{tag}");
            assert_eq!(e.delta0, g.gamma0, "{tag}");
            assert_eq!(e.f, g.b, "{tag}");
            assert_eq!(e.z, g.c, "{tag}");
            for (a, b) in [
                (e.zeta, g.pi_r),
                (e.eta, g.rho),
                (e.alpha_exp, g.delta),
                (e.ln_z0, g.ln_c0),
                (e.ln_d, g.ln_a),
                (e.ln_f, g.ln_b),
                (e.ln_z, g.ln_c),
            ] {
                assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()), "{tag}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn initial_values() {
        let ctx = p1(0.5, 0.7);
        let mut s = ErlangSeries::new(&ctx, 0.0).unwrap();
        assert_eq!(s.zero_state_prob().unwrap().value, 1.0);
        assert_eq!(s.state_prob(1, 1).unwrap().value, 0.0);
        let qp = QueueParams::new(vec![0.6, 0.3], 2, 1.2).unwrap();
        let general = SeriesContext::new(qp, 0.5, 0.7, SeriesConfig::default()).unwrap();
        assert!(ErlangSeries::new(&general, 1.0).is_err());
    }
}
