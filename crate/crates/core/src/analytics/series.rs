//! Evaluation of the closed-form series through the shell decomposition.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Estimate, Result};
use crate::queue::{phase_index, QueueParams, StatePhase};
use crate::special::ml_series;

use super::kernels::{inverse_mean, ml_table, shell_kernels, shells_for, ChernoffBound, KernelArgs, LnGammaTable, ShellKernels};
use super::ledger::{busy_weights, Ledger};
use super::{SeriesContext, ThetaReading};

/// Shell count, ledger and kernel tables for every `t ≤ t_max`.
#[derive(Debug, Clone)]
pub struct Evaluator {
    ctx: SeriesContext,
    ledger: Arc<Ledger>,
    bound: ChernoffBound,
    table: LnGammaTable,
    t_max: f64,
}

impl Evaluator {
    pub fn new(ctx: &SeriesContext, t_max: f64) -> Result<Self> {
        if !(t_max >= 0.0) || !t_max.is_finite() {
            return domain(format!("t_max must be finite and >= 0, got {t_max}"));
        }
        let bound = shells_for(
            ctx.theta(),
            ctx.alpha(),
            ctx.rate(),
            t_max,
            ctx.cfg.target_tol,
            ctx.cfg.shell_cap,
        )?;
        Self::with_shells(ctx, t_max, bound)
    }

    /// Fixed shell count; the tail is whatever the Chernoff bound gives.
    pub fn with_shell_count(ctx: &SeriesContext, t_max: f64, shells: usize) -> Result<Self> {
        let bound = super::kernels::chernoff_tail(ctx.theta(), ctx.alpha(), ctx.rate(), t_max, shells)?;
        Self::with_shells(ctx, t_max, bound)
    }

    fn with_shells(ctx: &SeriesContext, t_max: f64, bound: ChernoffBound) -> Result<Self> {
        let ledger = ctx.ledger(bound.shells)?;
        let table = LnGammaTable::new(ctx.alpha(), 48, bound.shells + 256);
        Ok(Evaluator { ctx: ctx.clone(), ledger, bound, table, t_max })
    }

    pub fn shells(&self) -> usize {
        self.bound.shells
    }

    pub fn truncation(&self) -> ChernoffBound {
        self.bound
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn context(&self) -> &SeriesContext {
        &self.ctx
    }

    /// Largest phase index that can carry mass within the retained shells.
    pub fn max_state(&self) -> usize {
        self.ctx.qp.l() * self.ctx.qp.k * (self.shells() - 1)
    }

    pub fn snapshot(&self, t: f64) -> Result<Snapshot> {
        if !(t >= 0.0) || t > self.t_max * (1.0 + 1e-12) {
            return domain(format!("t = {t} outside the certified range [0, {}]", self.t_max));
        }
        let g_max = self.shells();
        let alpha_reading = self.ctx.reading == ThetaReading::Alpha;
        let args = KernelArgs {
            table: &self.table,
            rate: self.ctx.rate(),
            theta: self.ctx.theta(),
            alpha: self.ctx.alpha(),
            shells: g_max,
            with_alpha_reading: alpha_reading,
            term_tol: self.ctx.cfg.term_tol,
            tempering_cap: self.ctx.cfg.tempering_cap,
            beta_shift: self.ctx.cfg.beta_shift,
        };
        let kernels = shell_kernels(&args, t);
        let led = &self.ledger;

        let last = &kernels.iota[g_max - 1];
        let mut tail = (last.value + last.error).min(self.bound.tail).max(0.0);
        if t == 0.0 {
            tail = 0.0;
        }
        // Under the θ^α reading the omitted shells are scaled by roughly the
        // same ratio as the retained ones; a heuristic, not a bound.
        if let Some(pa) = &kernels.pi_alpha {
            let ratio = pa
                .iter()
                .zip(&kernels.pi)
                .filter(|(_, p)| p.value > 1e-300)
                .map(|(a, p)| (a.value / p.value).abs())
                .fold(1.0f64, f64::max);
            tail *= ratio;
        }

        let n_states = self.max_state() + 1;
        let mut probs = Vec::with_capacity(n_states);
        let mut shell_abs = vec![0.0; g_max];
        for j in 0..n_states {
            let (mut v, mut e) = (0.0, 0.0);
            for g in 1..=g_max {
                let (a, bc) = if j == 0 { (0.0, led.p0[g - 1]) } else { (led.a_block[j][g - 1], led.bc_block[j][g - 1]) };
                let pi = &kernels.pi[g - 1];
                match &kernels.pi_alpha {
                    Some(pa) if j > 0 => {
                        let q = &pa[g - 1];
                        v += a * q.value + bc * pi.value;
                        e += a.abs() * q.error + bc.abs() * pi.error;
                        shell_abs[g - 1] += a.abs() + bc.abs();
                    }
                    _ => {
                        let w = a + bc;
                        v += w * pi.value;
                        e += w.abs() * pi.error;
                        shell_abs[g - 1] += w.abs();
                    }
                }
            }
            // At t = 0 the only nonzero entry is exactly 1.
            let round = if t == 0.0 { 0.0 } else { 4.0 * f64::EPSILON * v.abs() };
            probs.push(Estimate::new(v, e + tail + round));
        }
        let kernel_err: f64 = shell_abs
            .iter()
            .zip(&kernels.pi)
            .map(|(w, p)| w * p.error)
            .sum();
        let budget = tail + kernel_err + n_states as f64 * 4.0 * f64::EPSILON;

        Ok(Snapshot {
            t,
            shells: g_max,
            reading: self.ctx.reading,
            probs,
            tail,
            budget,
            bound: self.bound,
            kernels,
            ledger: self.ledger.clone(),
            qp: self.ctx.qp.clone(),
            theta: self.ctx.theta(),
            alpha: self.ctx.alpha(),
            target: self.ctx.cfg.target_tol,
        })
    }
}

/// All analytic quantities at one time point.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub shells: usize,
    pub reading: ThetaReading,
    /// `q_j(t)` by phase index `j`; indices past the end carry at most `tail`.
    pub probs: Vec<Estimate>,
    /// Bound on the mass of the omitted shells.
    pub tail: f64,
    /// Normalization budget: `|Σ_j q_j − 1| ≤ budget` when the series is right.
    pub budget: f64,
    pub bound: ChernoffBound,
    pub(crate) kernels: ShellKernels,
    ledger: Arc<Ledger>,
    qp: QueueParams,
    theta: f64,
    alpha: f64,
    target: f64,
}

impl Snapshot {
    pub fn zero_state_prob(&self) -> Estimate {
        self.probs[0]
    }

    pub fn state_prob(&self, n: usize, s: usize) -> Result<Estimate> {
        if n == 0 {
            return domain("state_prob needs n >= 1; use zero_state_prob for the empty state");
        }
        let j = phase_index(StatePhase::new(n, s, self.qp.k)?, self.qp.k)?;
        Ok(self.queue_length_prob(j))
    }

    pub fn queue_length_prob(&self, m: usize) -> Estimate {
        self.probs.get(m).copied().unwrap_or(Estimate::new(0.0, self.tail))
    }

    pub fn total_probability(&self) -> f64 {
        crate::exec::pairwise_sum(&self.probs.iter().map(|e| e.value).collect::<Vec<_>>())
    }

    /// `Σ_j u^j q_j(t)`, `|u| ≤ 1`.
    pub fn pgf(&self, u: f64) -> Result<Estimate> {
        if !(u.abs() <= 1.0) {
            return domain(format!("pgf needs |u| <= 1, got {u}"));
        }
        let (mut v, mut e, mut pow) = (0.0, 0.0, 1.0);
        for p in &self.probs {
            v += pow * p.value;
            e += pow.abs() * (p.error - self.tail).max(0.0);
            pow *= u;
        }
        Ok(Estimate::new(v, e + self.tail))
    }

    /// Mean phase count `E[L(t)]` from the closed form.
    pub fn mean_queue_length(&self) -> Result<Estimate> {
        let qp = &self.qp;
        let ey = inverse_mean(self.theta, self.alpha, self.t)?;
        let drift = qp.k as f64 * (qp.lambdas.iter().enumerate().map(|(i, l)| (i + 1) as f64 * l).sum::<f64>() - qp.mu);
        let ratio = qp.phase_rate() / qp.total_rate();
        let (mut s, mut e) = (0.0, 0.0);
        for g in 1..=self.shells {
            let w = self.ledger.p0[g - 1];
            let i = &self.kernels.iota[g - 1];
            s += w * i.value;
            e += w.abs() * i.error;
        }
        let tail = if self.t == 0.0 { 0.0 } else { ratio * self.bound.mean_tail };
        Ok(Estimate::new(
            drift * ey.value + ratio * s,
            drift.abs() * ey.error + ratio * e + tail + 8.0 * f64::EPSILON * s.abs(),
        ))
    }

    /// Mean phase count as `Σ_j j q_j`, with the omitted mass bounded
    /// through the shell tail.
    pub fn mean_by_summation(&self) -> Estimate {
        let (mut v, mut e) = (0.0, 0.0);
        for (j, p) in self.probs.iter().enumerate() {
            v += j as f64 * p.value;
            e += j as f64 * (p.error - self.tail).max(0.0);
        }
        // Omitted shells g > G sit at phase index at most lk(g−1).
        let lk = (self.qp.l() * self.qp.k) as f64;
        let tail = if self.t == 0.0 { 0.0 } else { lk * (self.shells as f64 * self.tail + self.bound.mean_tail) };
        Estimate::new(v, e + tail)
    }

    /// `P(B ≤ t)` for a busy period started from `a` phases.
    pub fn busy_period_cdf(&self, a: usize, cfg: &super::SeriesConfig) -> Result<Estimate> {
        let b = busy_weights(&self.qp, a, self.shells, cfg)?;
        if self.t == 0.0 {
            return Ok(Estimate::new(0.0, 0.0));
        }
        let (mut v, mut e) = (0.0, 0.0);
        for (g, w) in b.iter().enumerate() {
            let i = &self.kernels.iota[g];
            v += w * i.value;
            e += w * i.error;
        }
        Ok(Estimate::new(v, e + self.tail + 4.0 * f64::EPSILON))
    }

    pub fn target(&self) -> f64 {
        self.target
    }
}

fn eval(ctx: &SeriesContext, t: f64) -> Result<Snapshot> {
    Evaluator::new(ctx, t)?.snapshot(t)
}

pub fn zero_state_prob(ctx: &SeriesContext, t: f64) -> Result<Estimate> {
    Ok(eval(ctx, t)?.zero_state_prob())
}

pub fn state_prob(ctx: &SeriesContext, n: usize, s: usize, t: f64) -> Result<Estimate> {
    eval(ctx, t)?.state_prob(n, s)
}

pub fn queue_length_prob(ctx: &SeriesContext, m: usize, t: f64) -> Result<Estimate> {
    Ok(eval(ctx, t)?.queue_length_prob(m))
}

pub fn mean_queue_length(ctx: &SeriesContext, t: f64) -> Result<Estimate> {
    eval(ctx, t)?.mean_queue_length()
}

pub fn pgf(ctx: &SeriesContext, u: f64, t: f64) -> Result<Estimate> {
    eval(ctx, t)?.pgf(u)
}

pub fn busy_period_cdf(ctx: &SeriesContext, a: usize, t: f64) -> Result<Estimate> {
    eval(ctx, t)?.busy_period_cdf(a, &ctx.cfg)
}

/// Which event stream a survival function describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterEvent {
    Arrival,
    Phase,
    /// Holding time in a non-empty state.
    Sojourn,
    /// Holding time in the empty state.
    SojournEmpty,
}

impl InterEvent {
    pub fn rate(self, qp: &QueueParams) -> f64 {
        match self {
            InterEvent::Arrival | InterEvent::SojournEmpty => qp.big_lambda(),
            InterEvent::Phase => qp.phase_rate(),
            InterEvent::Sojourn => qp.total_rate(),
        }
    }
}

fn single_arrival(ctx: &SeriesContext) -> Result<()> {
    if ctx.qp.l() != 1 {
        return domain("inter-event laws are available for single arrivals (l = 1) only");
    }
    Ok(())
}

pub fn interarrival_survival(ctx: &SeriesContext, t: f64) -> Result<Estimate> {
    single_arrival(ctx)?;
    survival(ctx, InterEvent::Arrival.rate(&ctx.qp), t)
}

pub fn interphase_survival(ctx: &SeriesContext, t: f64) -> Result<Estimate> {
    single_arrival(ctx)?;
    survival(ctx, InterEvent::Phase.rate(&ctx.qp), t)
}

/// Sojourn in a non-empty state, or in the empty state when `empty`.
pub fn sojourn_survival(ctx: &SeriesContext, t: f64, empty: bool) -> Result<Estimate> {
    single_arrival(ctx)?;
    let kind = if empty { InterEvent::SojournEmpty } else { InterEvent::Sojourn };
    survival(ctx, kind.rate(&ctx.qp), t)
}

/// `P(D(E) > t)` for `E ~ Exp(ρ)`.
///
/// The double series `e^{−θt} Σ_m (θt)^m Σ_r (−ρt^α)^r E^r_{α,rα+m+1}(θ^α t^α)`
/// alternates in `r`, and for large `ρt^α` its cancellation swamps the
/// value. When that happens the same quantity is taken from the single
/// Mittag-Leffler form, whichever carries the smaller error.
pub fn survival(ctx: &SeriesContext, rho: f64, t: f64) -> Result<Estimate> {
    SurvivalLaw::new(ctx, rho)?.at(t)
}

/// [`survival`] for one rate at many times, sharing the Γ tables.
#[derive(Debug, Clone)]
pub struct SurvivalLaw {
    ctx: SeriesContext,
    rho: f64,
    tab: LnGammaTable,
}

impl SurvivalLaw {
    pub fn new(ctx: &SeriesContext, rho: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return domain(format!("survival needs a positive rate, got {rho}"));
        }
        Ok(SurvivalLaw { ctx: ctx.clone(), rho, tab: LnGammaTable::new(ctx.alpha(), 32, 512) })
    }

    pub fn rate(&self) -> f64 {
        self.rho
    }

    pub fn at(&self, t: f64) -> Result<Estimate> {
        if !(t >= 0.0) || !t.is_finite() {
            return domain(format!("time must be finite and >= 0, got {t}"));
        }
        if t == 0.0 {
            return Ok(Estimate::new(1.0, 0.0));
        }
        let double = survival_double_series(&self.ctx, &self.tab, self.rho, t);
        if let Ok(d) = double {
            if d.error <= 1e-10 {
                return Ok(d);
            }
        }
        let single = survival_single(&self.ctx, &self.tab, self.rho, t)?;
        match double {
            Ok(d) if d.error <= single.error => Ok(d),
            _ => Ok(single),
        }
    }
}

pub(crate) fn survival_double_series(ctx: &SeriesContext, tab: &LnGammaTable, rho: f64, t: f64) -> Result<Estimate> {
    let (th, al) = (ctx.theta(), ctx.alpha());
    let tol = ctx.cfg.term_tol;
    let ta = t.powf(al);
    let arg = th.powf(al) * ta;
    let x = th * t;
    let ln_x = if x > 0.0 { x.ln() } else { 0.0 };
    let ln_rho_t = (rho * ta).ln();
    let mut total = 0.0;
    let mut err = 0.0;
    let mut k0 = 0.0;
    let mut ln_pow = 0.0;
    for m in 0..ctx.cfg.tempering_cap {
        if m > 0 {
            ln_pow += ln_x - (m as f64).ln();
        }
        // Exact value of Σ_r |a_r| for this m.
        let pos_scale = -x + m as f64 * ln_x + ln_rho_t;
        let pos = ml_series(1.0, (rho + th.powf(al)) * ta, pos_scale, 1e-17, 0.0, 100_000, |j| {
            tab.get(m, j + 1)
        });
        let abs_total = (-x + ln_pow).exp() + pos.value;

        let mut inner = 0.0;
        let mut abs_inner = 0.0;
        let mut inner_err = 0.0;
        let mut r = 0usize;
        loop {
            let scale = -x + m as f64 * ln_x + r as f64 * ln_rho_t;
            let e = ml_series(r as f64, arg, scale, tol, 0.0, 100_000, |j| tab.get(m, r + j));
            if !e.converged {
                return Err(Error::Unconverged { what: "survival series".into(), partial: total, bound: f64::INFINITY });
            }
            inner += if r % 2 == 1 { -e.value } else { e.value };
            abs_inner += e.value;
            inner_err += e.total_error();
            let rest = abs_total - abs_inner;
            // `rest` is a difference of two sums; once the terms are gone
            // it only carries their rounding.
            let slack = pos.total_error() + 8.0 * f64::EPSILON * (r + 1) as f64 * abs_total;
            let spent = e.value <= 1e-17 * abs_total && rest <= slack;
            if rest <= 1e-15 * abs_total || spent || r > ctx.cfg.r_cap {
                inner_err += rest.max(0.0) + slack;
                break;
            }
            r += 1;
        }
        total += inner;
        err += inner_err;
        if m == 0 {
            k0 = abs_total;
        }
        if x == 0.0 {
            return Ok(Estimate::new(total, err));
        }
        let next = (m + 1) as f64;
        if x < next + 1.0 {
            let tail = k0 * (ln_pow + ln_x - next.ln()).exp() / (1.0 - x / (next + 1.0));
            if tail <= tol * total.abs() {
                return Ok(Estimate::new(total, err + tail));
            }
        }
    }
    Err(Error::Unconverged { what: "survival tempering sum".into(), partial: total, bound: f64::INFINITY })
}

/// `e^{−θt} Σ_m (θt)^m [1/m! − ρt^α E_{α,α+m+1}((θ^α − ρ)t^α)]`.
pub(crate) fn survival_single(ctx: &SeriesContext, tab: &LnGammaTable, rho: f64, t: f64) -> Result<Estimate> {
    let (th, al) = (ctx.theta(), ctx.alpha());
    let ta = t.powf(al);
    let arg = (th.powf(al) - rho) * ta;
    let x = th * t;
    let ln_x = if x > 0.0 { x.ln() } else { 0.0 };
    let (mut total, mut err, mut k0, mut ln_pow) = (0.0, 0.0, 0.0, 0.0);
    for m in 0..ctx.cfg.tempering_cap {
        if m > 0 {
            ln_pow += ln_x - (m as f64).ln();
        }
        let e = ml_table(tab, 1.0, arg, -x + m as f64 * ln_x + (rho * ta).ln(), m, 1, 1e-17);
        if !e.converged {
            return Err(Error::Unconverged { what: "survival series".into(), partial: total, bound: f64::INFINITY });
        }
        let head = (-x + ln_pow).exp();
        total += head - e.value;
        err += e.total_error() + head * 2e-16;
        if m == 0 {
            k0 = head + e.abs_sum;
        }
        if x == 0.0 {
            return Ok(Estimate::new(total, err));
        }
        let next = (m + 1) as f64;
        if x < next + 1.0 {
            let tail = k0 * (ln_pow + ln_x - next.ln()).exp() / (1.0 - x / (next + 1.0));
            if tail <= 1e-17 * total.abs().max(1e-300) {
                return Ok(Estimate::new(total, err + tail));
            }
        }
    }
    Err(Error::Unconverged { what: "survival tempering sum".into(), partial: total, bound: f64::INFINITY })
}

/// Outcome of comparing the certified shell count with twice as many.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertifiedRange {
    pub t_max: f64,
    pub shells: usize,
    pub tail_bound: f64,
    /// Largest `|q_j^{(G)} − q_j^{(2G)}|` over the sampled times.
    pub max_difference: f64,
    pub supported: bool,
}

/// Checks the truncation of `ctx` on `times` by doubling the shell count.
pub fn certify_range(ctx: &SeriesContext, times: &[f64]) -> Result<CertifiedRange> {
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let base = Evaluator::new(ctx, t_max)?;
    let doubled_shells = (2 * base.shells()).min(ctx.cfg.shell_cap);
    let doubled = Evaluator::with_shell_count(ctx, t_max, doubled_shells)?;
    let mut worst = 0.0f64;
    let mut allowed = 0.0f64;
    for &t in times {
        let a = base.snapshot(t)?;
        let b = doubled.snapshot(t)?;
        for j in 0..b.probs.len() {
            let d = (a.queue_length_prob(j).value - b.probs[j].value).abs();
            worst = worst.max(d);
        }
        allowed = allowed.max(a.tail + a.budget);
    }
    Ok(CertifiedRange {
        t_max,
        shells: base.shells(),
        tail_bound: base.truncation().tail,
        max_difference: worst,
        supported: worst <= allowed + ctx.cfg.target_tol,
    })
}
