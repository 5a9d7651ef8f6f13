//! The ten acceptance checks, each producing a report with the measured
//! quantities. Failures are reported, never masked.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analytics::{
    mean_residual, residual_suite, Evaluator, ResidualGrid, SeriesConfig, SeriesContext, SurvivalLaw, ThetaReading,
};
use crate::error::{domain, Result};
use crate::exec::{path_rng, Exec};
use crate::fractional::{caputo_on_grid, caputo_tempered_derivative, laplace_quadrature, numerical_laplace, FracParams, SampledFunction};
use crate::montecarlo::{
    collect_inter_event_times, dkw_band, ks_statistic_bounded, lag1_autocorrelation, simulate_busy_period,
    simulate_time_changed, KsResult, SimOutput, SimPlan, TimeChange,
};
use crate::quad;
use crate::queue::{transient_uniformization_grid, QueueParams};
use crate::special::{ln_gamma, ml3, MlArgs};
use crate::subordinator::{
    gamma_density, gamma_first_passage, inverse_gamma_cdf, inverse_gamma_density_form, GammaParams, InverseGammaForm,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationConfig {
    /// Reference set used by criteria 1–6 and 10.
    pub queue: QueueParams,
    /// Single-arrival set for criterion 7.
    pub queue_single: QueueParams,
    pub theta: f64,
    pub alpha: f64,
    pub series: SeriesConfig,
    pub reading: ThetaReading,
    pub seed: u64,
    pub mc_paths: usize,
    pub mc_step: f64,
    pub busy_paths: usize,
    pub interevent_samples: usize,
    pub gamma_samples: usize,
    pub level: f64,
    pub exec: Exec,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            queue: QueueParams { lambdas: vec![0.6, 0.3], k: 2, mu: 1.2 },
            queue_single: QueueParams { lambdas: vec![0.8], k: 2, mu: 1.2 },
            theta: 0.5,
            alpha: 0.7,
            series: SeriesConfig::default(),
            reading: ThetaReading::A,
            seed: 20_240_917,
            mc_paths: 100_000,
            mc_step: 1e-3,
            busy_paths: 100_000,
            interevent_samples: 10_000,
            gamma_samples: 20_000,
            level: 0.05,
            exec: Exec::default(),
        }
    }
}

impl ValidationConfig {
    pub fn validate(&self) -> Result<()> {
        self.queue.validate()?;
        self.queue_single.validate()?;
        self.series.validate()?;
        TimeChange::tempered(self.theta, self.alpha)?;
        if self.mc_paths < 2 || self.busy_paths < 2 || self.interevent_samples < 2 || self.gamma_samples < 2 {
            return domain("sample counts must be >= 2");
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return domain("level must lie in (0, 1)");
        }
        if !(self.mc_step > 0.0) {
            return domain("mc_step must be positive");
        }
        Ok(())
    }

    fn context(&self, reading: ThetaReading) -> Result<SeriesContext> {
        Ok(SeriesContext::new(self.queue.clone(), self.theta, self.alpha, self.series)?.with_reading(reading))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub measured: BTreeMap<String, f64>,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub config: ValidationConfig,
    pub criteria: Vec<CriterionReport>,
    pub all_passed: bool,
}

pub const CRITERIA: [(u8, &str); 10] = [
    (1, "degenerate reduction"),
    (2, "normalization"),
    (3, "monte carlo agreement"),
    (4, "fractional residuals"),
    (5, "mean queue length"),
    (6, "busy period"),
    (7, "inter-event laws"),
    (8, "special-function identities"),
    (9, "gamma subordinator"),
    (10, "theta-power reading"),
];

/// Measured values plus a verdict, filled by each check.
#[derive(Default)]
struct Outcome {
    measured: BTreeMap<String, f64>,
    notes: Vec<String>,
    passed: bool,
}

impl Outcome {
    fn put(&mut self, key: impl Into<String>, v: f64) {
        // JSON has no inf/NaN.
        let v = if v.is_finite() { v } else if v.is_nan() { f64::MAX } else { v.signum() * f64::MAX };
        self.measured.insert(key.into(), v);
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }
}

/// State shared between checks: the Monte Carlo run at t = 1 feeds both
/// criterion 3 and criterion 10.
#[derive(Default)]
pub struct Session {
    mc: Option<SimOutput>,
}

impl Session {
    fn mc(&mut self, cfg: &ValidationConfig) -> Result<&SimOutput> {
        if self.mc.is_none() {
            let tc = TimeChange::tempered(cfg.theta, cfg.alpha)?;
            let mut plan = SimPlan::new(cfg.queue.clone(), tc, vec![1.0], cfg.mc_paths, cfg.seed)?;
            plan.step = cfg.mc_step;
            plan.step_halving = true;
            plan.exec = cfg.exec;
            self.mc = Some(simulate_time_changed(&plan, false)?);
        }
        Ok(self.mc.as_ref().unwrap())
    }
}

pub fn run_all(cfg: &ValidationConfig) -> Result<ValidationReport> {
    let ids: Vec<u8> = CRITERIA.iter().map(|c| c.0).collect();
    run_selected(cfg, &ids)
}

pub fn run_selected(cfg: &ValidationConfig, ids: &[u8]) -> Result<ValidationReport> {
    cfg.validate()?;
    let mut session = Session::default();
    let mut criteria = Vec::new();
    for &id in ids {
        criteria.push(run_criterion(cfg, id, &mut session)?);
    }
    let all_passed = criteria.iter().all(|c| c.passed);
    Ok(ValidationReport { config: cfg.clone(), criteria, all_passed })
}

pub fn run_criterion(cfg: &ValidationConfig, id: u8, session: &mut Session) -> Result<CriterionReport> {
    let Some(&(_, name)) = CRITERIA.iter().find(|c| c.0 == id) else {
        return domain(format!("no criterion {id}"));
    };
    let start = Instant::now();
    let out = match id {
        1 => degenerate(cfg),
        2 => normalization(cfg),
        3 => mc_agreement(cfg, session),
        4 => residuals(cfg),
        5 => mean_check(cfg),
        6 => busy(cfg),
        7 => inter_event(cfg),
        8 => special_identities(),
        9 => gamma_suite(cfg),
        _ => reading(cfg, session),
    };
    let (passed, measured, detail) = match out {
        Ok(o) => (o.passed, o.measured, o.notes.join("; ")),
        Err(e) => (false, BTreeMap::new(), format!("error: {e}")),
    };
    Ok(CriterionReport { id, name: name.into(), passed, measured, detail, seconds: start.elapsed().as_secs_f64() })
}

fn degenerate(cfg: &ValidationConfig) -> Result<Outcome> {
    let mut o = Outcome::default();
    let ctx = SeriesContext::new(cfg.queue.clone(), 0.0, 1.0, cfg.series)?.with_reading(cfg.reading);
    let times = [0.5, 1.0, 2.0];
    let ev = Evaluator::new(&ctx, 2.0)?;
    let tab = transient_uniformization_grid(&cfg.queue, &times, 400, 1e-13)?;
    let (mut worst, mut worst_mean, mut compared) = (0.0f64, 0.0f64, 0usize);
    for (i, &t) in times.iter().enumerate() {
        let s = ev.snapshot(t)?;
        for (j, &p) in tab.probs[i].iter().enumerate() {
            let q = s.queue_length_prob(j).value;
            if p.max(q) >= 1e-4 {
                worst = worst.max((p - q).abs());
                compared += 1;
            }
        }
        worst_mean = worst_mean.max((s.mean_queue_length()?.value - tab.mean(i)).abs());
    }
    o.put("max_prob_diff", worst);
    o.put("max_mean_diff", worst_mean);
    o.put("states_compared", compared as f64);
    o.passed = worst <= 1e-5 && worst_mean <= 1e-5;
    o.note(format!("θ=0, α=1 against uniformization at t=0.5,1,2: {worst:.2e} (probabilities), {worst_mean:.2e} (mean)"));
    Ok(o)
}

const NORM_TIMES: [f64; 4] = [0.25, 0.5, 1.0, 2.0];

/// Largest `|Σq − 1|`, largest budget, and whether every deviation sits in
/// its budget with budgets ≤ 1e-4.
fn normalization_of(ctx: &SeriesContext) -> Result<(f64, f64, bool)> {
    let ev = Evaluator::new(ctx, 2.0)?;
    let (mut dev, mut budget, mut ok) = (0.0f64, 0.0f64, true);
    for t in NORM_TIMES {
        let s = ev.snapshot(t)?;
        let d = (s.total_probability() - 1.0).abs();
        ok &= d <= s.budget && s.budget <= 1e-4;
        dev = dev.max(d);
        budget = budget.max(s.budget);
    }
    Ok((dev, budget, ok))
}

fn normalization(cfg: &ValidationConfig) -> Result<Outcome> {
    let mut o = Outcome::default();
    let (dev, budget, ok) = normalization_of(&cfg.context(cfg.reading)?)?;
    o.put("max_deviation", dev);
    o.put("max_budget", budget);
    o.passed = ok;
    o.note(format!("reading {}: |Σq−1| ≤ {dev:.2e}, budget {budget:.2e}", cfg.reading.label()));
    Ok(o)
}

/// Largest |p̂ − p|/se over states with analytic probability ≥ 1e-2.
fn mc_z(ctx: &SeriesContext, mc: &SimOutput) -> Result<(f64, usize)> {
    let s = Evaluator::new(ctx, 1.0)?.snapshot(1.0)?;
    let tab = &mc.estimates.table;
    let (mut z, mut n) = (0.0f64, 0);
    for (j, &st) in tab.states.iter().enumerate() {
        let p = s.queue_length_prob(st).value;
        if p >= 1e-2 {
            let (ph, se) = (tab.probs[0][j], tab.err[0][j]);
            z = z.max((ph - p).abs() / se.max(f64::MIN_POSITIVE));
            n += 1;
        }
    }
    Ok((z, n))
}

fn mc_agreement(cfg: &ValidationConfig, session: &mut Session) -> Result<Outcome> {
    let mut o = Outcome::default();
    let ctx = cfg.context(cfg.reading)?;
    let mc = session.mc(cfg)?;
    let (z, n) = mc_z(&ctx, mc)?;
    let shift = mc.halving_shift(1e-2).unwrap_or(f64::INFINITY);
    o.put("max_z", z);
    o.put("states_compared", n as f64);
    o.put("halving_shift_sigma", shift);
    o.put("paths", mc.estimates.n_paths as f64);
    o.passed = z <= 3.0 && shift < 1.0 && n > 0;
    o.note(format!(
        "{} paths, step {:.1e}: worst {z:.2} SE over {n} states; step-halving shift {shift:.2}σ",
        mc.estimates.n_paths, mc.estimates.step
    ));
    Ok(o)
}

fn residuals(cfg: &ValidationConfig) -> Result<Outcome> {
    let mut o = Outcome::default();
    let ctx = cfg.context(cfg.reading)?;
    let suite = residual_suite(&ctx, &ResidualGrid::default(), &[0.5, 1.0, 1.5], cfg.exec)?;
    let max = suite.max_residual();
    o.put("max_residual", max);
    o.put("equations", suite.residuals.len() as f64);
    o.passed = max <= 1e-3;
    if let Some(w) = suite.worst() {
        o.note(format!("{} residuals, worst {:.2e} at {} t={}", suite.residuals.len(), max, w.label(), w.t));
    }
    Ok(o)
}

fn mean_check(cfg: &ValidationConfig) -> Result<Outcome> {
    let mut o = Outcome::default();
    let ctx = cfg.context(cfg.reading)?;
    let s = Evaluator::new(&ctx, 1.0)?.snapshot(1.0)?;
    let closed = s.mean_queue_length()?;
    let summed = s.mean_by_summation();
    let diff = (closed.value - summed.value).abs();
    let budget = closed.error + summed.error;
    let res = mean_residual(&ctx, 1.0)?;
    o.put("closed_form", closed.value);
    o.put("summation", summed.value);
    o.put("difference", diff);
    o.put("combined_budget", budget);
    o.put("cauchy_residual", res);
    o.passed = diff <= budget.max(1e-13) && budget <= 1e-4 && res <= 1e-3;
    o.note(format!("M(1) = {:.12}, Σ m q_m = {:.12}, residual {res:.2e}", closed.value, summed.value));
    Ok(o)
}

fn busy(cfg: &ValidationConfig) -> Result<Outcome> {
    let mut o = Outcome::default();
    let ctx = cfg.context(cfg.reading)?;
    let a = cfg.queue.k;
    let tc = TimeChange::tempered(cfg.theta, cfg.alpha)?;
    let sim = simulate_busy_period(&cfg.queue, tc, a, 2.0, cfg.busy_paths, cfg.seed ^ 0xB5, cfg.exec)?;
    let ev = Evaluator::new(&ctx, 2.0)?;
    let (mut sup, mut err) = (0.0f64, 0.0f64);
    for i in 1..=20 {
        let t = 0.1 * i as f64;
        let f = ev.snapshot(t)?.busy_period_cdf(a, &ctx.cfg)?;
        sup = sup.max((f.value - sim.ecdf(t)).abs());
        err = err.max(f.error);
    }
    let band = dkw_band(cfg.busy_paths, cfg.level);
    o.put("sup_difference", sup);
    o.put("band", band);
    o.put("analytic_error", err);
    o.put("censored_fraction", sim.censored_fraction());
    o.put("beyond_horizon_fraction", sim.beyond_horizon as f64 / sim.n as f64);
    o.passed = sup <= 3.0 * band && sim.censored_fraction() < 1e-3;
    o.note(format!("a={a}, {} paths: sup |F − F̂| = {sup:.2e} vs 3×band {:.2e}", cfg.busy_paths, 3.0 * band));
    Ok(o)
}

/// KS test against a survival law. The CDF is tabulated on a geometric
/// grid, giving an enclosure for every sample, and the law is evaluated
/// exactly only at samples that could still carry the supremum.
pub fn ks_against_survival(samples: &[f64], law: &SurvivalLaw, level: f64) -> Result<(KsResult, usize)> {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let Some(&top) = xs.last() else {
        return domain("KS test needs samples");
    };
    let cert = |t: f64| -> Option<(f64, f64)> {
        let e = law.at(t).ok()?;
        (e.error <= 1e-6 && e.value.is_finite()).then(|| ((1.0 - e.value - e.error).max(0.0), (1.0 - e.value + e.error).min(1.0)))
    };
    let mut nodes: Vec<(f64, (f64, f64))> = Vec::new();
    let mut t = 1e-7;
    while t < top * 1.01 {
        match cert(t) {
            Some(b) => nodes.push((t, b)),
            None => break,
        }
        t *= 1.01;
    }
    let n = xs.len() as f64;
    let mut encl: Vec<(f64, f64)> = xs
        .iter()
        .map(|&x| {
            let i = nodes.partition_point(|(t, _)| *t < x);
            match (i, nodes.len()) {
                (_, 0) => (0.0, 1.0),
                (0, _) => (0.0, nodes[0].1 .1),
                (i, len) if i == len => (nodes[len - 1].1 .0, 1.0),
                (i, _) => (nodes[i - 1].1 .0, nodes[i].1 .1),
            }
        })
        .collect();
    let up = |i: usize, e: (f64, f64)| (e.1 - i as f64 / n).max((i + 1) as f64 / n - e.0);
    let low = |i: usize, e: (f64, f64)| (e.0 - i as f64 / n).max((i + 1) as f64 / n - e.1);
    let mut d_low = encl.iter().enumerate().map(|(i, &e)| low(i, e)).fold(0.0, f64::max);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| up(b, encl[b]).total_cmp(&up(a, encl[a])));
    let mut exact = 0;
    for i in order {
        if up(i, encl[i]) <= d_low {
            break;
        }
        if let Some(e) = cert(xs[i]) {
            encl[i] = e;
            exact += 1;
            d_low = d_low.max(low(i, e));
        }
    }
    let r = ks_statistic_bounded(&xs, |x| encl[xs.partition_point(|&y| y < x)], level)?;
    Ok((r, exact))
}

fn inter_event(cfg: &ValidationConfig) -> Result<Outcome> {
    let mut o = Outcome::default();
    let qp = &cfg.queue_single;
    let n = cfg.interevent_samples;
    let lag_bound = 3.0 / (n as f64).sqrt();
    o.put("lag1_bound", lag_bound);
    let rates = [("arrival", qp.lambdas[0]), ("phase", qp.phase_rate()), ("sojourn", qp.total_rate())];
    let mut ok = true;
    for (label, tc, theta, alpha) in [
        ("", TimeChange::tempered(cfg.theta, cfg.alpha)?, cfg.theta, cfg.alpha),
        ("control_", TimeChange::None, 0.0, 1.0),
    ] {
        let ctx = SeriesContext::new(qp.clone(), theta, alpha, cfg.series)?;
        let s = collect_inter_event_times(qp, tc, n, cfg.seed ^ 0x1E, cfg.exec)?;
        for ((name, rho), xs) in rates.iter().zip([&s.arrival, &s.phase, &s.sojourn]) {
            let law = SurvivalLaw::new(&ctx, *rho)?;
            let (ks, exact) = ks_against_survival(xs, &law, cfg.level)?;
            let lag = lag1_autocorrelation(xs);
            o.put(format!("{label}{name}_d"), ks.d);
            o.put(format!("{label}{name}_slack"), ks.slack);
            o.put(format!("{label}{name}_critical"), ks.critical);
            o.put(format!("{label}{name}_p_value"), ks.p_value);
            o.put(format!("{label}{name}_lag1"), lag);
            o.put(format!("{label}{name}_exact_evaluations"), exact as f64);
            ok &= ks.pass && lag.abs() < lag_bound;
            o.note(format!("{label}{name} (rate {rho}): D = {:.4} (crit {:.4}, p = {:.3}), lag-1 {lag:+.4}", ks.d, ks.critical, ks.p_value));
        }
        if theta == 0.0 {
            // The collapsed series against the plain exponential.
            let mut gap = 0.0f64;
            for (_, rho) in rates {
                let law = SurvivalLaw::new(&ctx, rho)?;
                for t in [0.1, 0.5, 1.0, 2.0, 4.0] {
                    gap = gap.max((law.at(t)?.value - (-rho * t).exp()).abs());
                }
            }
            o.put("control_exponential_gap", gap);
            ok &= gap < 1e-8;
        }
    }
    o.passed = ok;
    Ok(o)
}

/// Grid for the Mittag-Leffler Laplace identity.
pub const ML_LAPLACE_GRID: [(f64, f64, f64, f64); 12] = [
    (0.5, 1.0, 1.0, -0.5),
    (0.5, 1.5, 2.0, 0.4),
    (0.5, 2.0, 0.5, -1.0),
    (0.7, 1.0, 1.0, 0.4),
    (0.7, 1.4, 2.0, -0.5),
    (0.7, 2.0, 3.0, -1.0),
    (0.7, 1.7, 0.5, 0.3),
    (0.9, 1.0, 2.0, -0.5),
    (0.9, 1.5, 1.0, 0.4),
    (0.9, 2.0, 1.5, -1.0),
    (1.0, 1.0, 1.0, -1.0),
    (1.0, 2.0, 2.0, 0.5),
];

fn special_identities() -> Result<Outcome> {
    let mut o = Outcome::default();
    let s = 2.0;
    let t_end = 30.0;
    let (mut worst, mut tail_max) = (0.0f64, 0.0f64);
    for (a, b, g, x) in ML_LAPLACE_GRID {
        let f = |t: f64| {
            if t == 0.0 {
                return if b == 1.0 { 1.0 } else { 0.0 };
            }
            let e = ml3(MlArgs { alpha: a, beta: b, gamma: g, x: x * t.powf(a) }, 1e-16).map(|r| r.value).unwrap_or(f64::NAN);
            t.powf(b - 1.0) * e
        };
        // Beyond T the integrand decays at least like e^{−(s − x₊^{1/α})t}.
        let decay = s - x.max(0.0).powf(1.0 / a);
        let tail = 2.0 * f(t_end).abs() * (-s * t_end).exp() / decay;
        let q = laplace_quadrature(f, s, t_end, 1e-13)?;
        let want = s.powf(a * g - b) / (s.powf(a) - x).powf(g);
        worst = worst.max((q.value - want).abs());
        tail_max = tail_max.max(tail);
    }
    o.put("ml_laplace_max_error", worst);
    o.put("ml_laplace_tail_bound", tail_max);
    o.note(format!("Mittag-Leffler transform over {} grid points: {worst:.2e}", ML_LAPLACE_GRID.len()));

    let (theta, alpha) = (0.5, 0.7);
    let p = FracParams::new(theta, alpha)?;
    let psi = (s + theta).powf(alpha) - theta.powf(alpha);
    let mut cap_worst = 0.0f64;
    let tests: [(fn(f64) -> f64, f64); 2] = [(|t| (-t).exp(), psi * (1.0 / (s + 1.0) - 1.0 / s)), (|t| t * (-t).exp(), psi / ((s + 1.0) * (s + 1.0)))];
    for (f, want) in tests {
        let sf = SampledFunction::uniform(12.0, 9600, f)?;
        let d = caputo_on_grid(&sf, p)?;
        let got = numerical_laplace(&d, s, 1e-9)?;
        cap_worst = cap_worst.max((got.value - want).abs());
    }
    o.put("caputo_laplace_max_error", cap_worst);
    o.note(format!("tempered Caputo transform: {cap_worst:.2e}"));

    let lin = SampledFunction::uniform(2.0, 2000, |t| t)?;
    let sq = SampledFunction::uniform(2.0, 2000, |t| t * t)?;
    let e1 = (caputo_tempered_derivative(&lin, FracParams::new(0.0, 0.5)?, 1.0)?.value - 1.0 / ln_gamma(1.5).exp()).abs();
    let e2 = (caputo_tempered_derivative(&sq, FracParams::new(0.0, 0.6)?, 1.5)?.value
        - 2.0 * 1.5f64.powf(1.4) / ln_gamma(2.4).exp())
    .abs();
    let power = e1.max(e2);
    o.put("power_rule_max_error", power);
    o.note(format!("power rule: {power:.2e}"));
    o.passed = worst <= 1e-8 && tail_max < 1e-10 && cap_worst <= 1e-4 && power <= 1e-6;
    Ok(o)
}

/// `sup_x |∫_0^x h − F̂(x)|` on `x = j·x_max/20`, integrating the density
/// cell by cell.
fn density_vs_samples(h: impl Fn(f64) -> f64, samples: &[f64], x_max: f64) -> Result<f64> {
    let n = samples.len() as f64;
    let (mut acc, mut sup) = (0.0, 0.0f64);
    for j in 1..=19 {
        let (lo, hi) = ((j - 1) as f64 * x_max / 20.0, j as f64 * x_max / 20.0);
        acc += quad::integrate(&h, lo, hi, 1e-11, 1e-10)?.value;
        let ecdf = samples.iter().filter(|&&v| v <= hi).count() as f64 / n;
        sup = sup.max((acc - ecdf).abs());
    }
    Ok(sup)
}

fn gamma_suite(cfg: &ValidationConfig) -> Result<Outcome> {
    let mut o = Outcome::default();
    let mut norm = 0.0f64;
    for (a, b, t) in [(2.0, 3.0, 0.7), (1.0, 1.0, 1.0), (0.8, 1.7, 2.0)] {
        let p = GammaParams::new(a, b)?;
        let tot = quad::integrate_to_infinity(|x| gamma_density(p, x, t).unwrap_or(0.0), 0.0, 1e-13, 1e-12)?;
        norm = norm.max((tot.value - 1.0).abs());
    }
    o.put("density_normalization_error", norm);

    let fd = |p: GammaParams, x: f64, t: f64| -> Result<f64> {
        let h = 1e-5;
        Ok((gamma_density(p, x + h, t)? - gamma_density(p, x - h, t)?) / (2.0 * h))
    };
    // Swapped operator −a(1 − e^{−∂_t/b}); with a = b it is the identity.
    let mut shift = 0.0f64;
    let mut swapped_off = f64::INFINITY;
    let eq = GammaParams::new(1.5, 1.5)?;
    for (x, t) in [(0.5, 1.0), (1.3, 2.0), (2.0, 3.5)] {
        let rhs = -eq.a * (gamma_density(eq, x, t)? - gamma_density(eq, x, t - 1.0 / eq.b)?);
        shift = shift.max((fd(eq, x, t)? - rhs).abs());
    }
    let ne = GammaParams::new(2.0, 0.7)?;
    for (x, t) in [(0.5, 2.0), (1.3, 3.0)] {
        let lhs = fd(ne, x, t)?;
        let general = -ne.b * (gamma_density(ne, x, t)? - gamma_density(ne, x, t - 1.0 / ne.a)?);
        let swapped = -ne.a * (gamma_density(ne, x, t)? - gamma_density(ne, x, t - 1.0 / ne.b)?);
        shift = shift.max((lhs - general).abs());
        swapped_off = swapped_off.min((lhs - swapped).abs());
    }
    o.put("shift_identity_error", shift);
    o.put("shift_swapped_mismatch_a_ne_b", swapped_off);

    let band = dkw_band(cfg.gamma_samples, 0.0027);
    o.put("kolmogorov_band_3sigma", band);
    let mut ok = norm <= 1e-8 && shift <= 1e-4;
    for (tag, a, b, t) in [("unit", 1.0, 1.0, 1.0), ("general", 2.0, 0.5, 1.5)] {
        let p = GammaParams::new(a, b)?;
        let xs: Vec<f64> = cfg.exec
            .map_indexed(cfg.gamma_samples, |i| gamma_first_passage(p, t, 1e-9, &mut path_rng(cfg.seed ^ 0x6A, i as u64)))
            .into_iter()
            .collect::<Result<_>>()?;
        let x_max = 0.95 / a;
        let dens = |form| move |x: f64| if x <= 0.0 { 0.0 } else { inverse_gamma_density_form(p, x, t, form).map(|e| e.value).unwrap_or(f64::NAN) };
        let unit = density_vs_samples(dens(InverseGammaForm::UnitScale), &xs, x_max)?;
        let scaled = density_vs_samples(dens(InverseGammaForm::Scaled), &xs, x_max)?;
        let exact = (1..=19)
            .map(|j| {
                let x = j as f64 * x_max / 20.0;
                let e = xs.iter().filter(|&&v| v <= x).count() as f64 / xs.len() as f64;
                inverse_gamma_cdf(p, x, t).map(|f| (f - e).abs())
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        o.put(format!("{tag}_unit_scale_sup"), unit);
        o.put(format!("{tag}_scaled_sup"), scaled);
        o.put(format!("{tag}_exact_cdf_sup"), exact);
        o.put(format!("{tag}_unit_scale_ratio"), (b * t - 1.0f64).exp());
        o.note(format!(
            "(a,b,t)=({a},{b},{t}): unit-scale {unit:.2e}, scaled {scaled:.2e}, exact CDF {exact:.2e} vs band {band:.2e}"
        ));
        ok &= scaled <= band && exact <= band;
        if tag == "unit" {
            ok &= unit <= band;
        }
    }
    o.note("the unit-scale constant a·e^{−1}/π only holds at b·t = 1; elsewhere it is off by e^{bt−1}, and the e^{−bt}, e^{−ybt} form matches the first-passage samples");
    o.note("the swapped shift operator −a(1 − e^{−∂_t/b}) holds for a = b; in general ∂_x h = −b(1 − e^{−∂_t/a})h");
    o.passed = ok;
    Ok(o)
}

fn reading(cfg: &ValidationConfig, session: &mut Session) -> Result<Outcome> {
    let mut o = Outcome::default();
    let mut passing = Vec::new();
    for r in [ThetaReading::A, ThetaReading::Alpha] {
        let ctx = cfg.context(r)?;
        let (dev, budget, norm_ok) = normalization_of(&ctx)?;
        let mc = session.mc(cfg)?;
        let (z, _) = mc_z(&ctx, mc)?;
        let shift = mc.halving_shift(1e-2).unwrap_or(f64::INFINITY);
        let both = norm_ok && z <= 3.0 && shift < 1.0;
        let l = r.label();
        o.put(format!("{l}_normalization_deviation"), dev);
        o.put(format!("{l}_normalization_budget"), budget);
        o.put(format!("{l}_max_z"), z);
        o.put(format!("{l}_passes"), if both { 1.0 } else { 0.0 });
        o.note(format!("θ^{l}: |Σq−1| = {dev:.2e} (budget {budget:.2e}), worst MC z {z:.2} → {}", if both { "pass" } else { "fail" }));
        if both {
            passing.push(l);
        }
    }
    o.passed = passing.len() == 1;
    o.note(match passing.as_slice() {
        [one] => format!("reading '{one}' is the consistent one"),
        [] => "neither reading passes".into(),
        _ => "both readings pass".into(),
    });
    Ok(o)
}
