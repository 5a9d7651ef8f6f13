//! Tempered stable and gamma subordinators, their inverses, and the
//! associated densities.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1, Gamma, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Estimate, Result};
use crate::quad;
use crate::special::ln_gamma;

/// Rejection attempts per chunk before giving up.
pub const RETRY_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperedStableParams {
    pub theta: f64,
    pub alpha: f64,
}

impl TemperedStableParams {
    pub fn new(theta: f64, alpha: f64) -> Result<Self> {
        let p = TemperedStableParams { theta, alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return domain(format!("stability index must lie in (0,1), got {}", self.alpha));
        }
        if !(self.theta >= 0.0) || !self.theta.is_finite() {
            return domain(format!("tempering must be finite and >= 0, got {}", self.theta));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub a: f64,
    pub b: f64,
}

impl GammaParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
            return domain(format!("gamma subordinator needs a > 0, b > 0 (a={a}, b={b})"));
        }
        Ok(GammaParams { a, b })
    }
}

/// Right-continuous inverse of a discretized subordinator path.
///
/// `knots[i] = (D(x_i), x_i)` on the operational grid `x_i = i·step`; the
/// last knot is the first one with `D > horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct InversePath {
    pub horizon: f64,
    pub step: f64,
    pub knots: Vec<(f64, f64)>,
}

impl InversePath {
    /// `Y(t)`: the last grid point before the path crosses `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        let i = self.knots.partition_point(|&(d, _)| d <= t);
        if i == 0 {
            0.0
        } else {
            self.knots[i - 1].1
        }
    }
}

/// `Ψ(s) = (s+θ)^α − θ^α`.
pub fn laplace_exponent(p: TemperedStableParams, s: f64) -> Result<f64> {
    p.validate()?;
    if !(s >= 0.0) {
        return domain(format!("Laplace exponent needs s >= 0, got {s}"));
    }
    Ok((s + p.theta).powf(p.alpha) - p.theta.powf(p.alpha))
}

/// One-sided α-stable increment with `E e^{−sX} = e^{−dt·s^α}`
/// (Kanter's form of the Chambers-Mallows-Stuck transform).
pub fn sample_stable_increment<R: Rng + ?Sized>(alpha: f64, dt: f64, rng: &mut R) -> f64 {
    let u: f64 = PI * rng.sample::<f64, _>(Open01);
    let w: f64 = rng.sample(Exp1);
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * u).sin() / w).powf((1.0 - alpha) / alpha);
    dt.powf(1.0 / alpha) * a * b
}

/// Tempered stable increment by exponential tilting: draw a stable
/// increment and keep it with probability `e^{−θX}`. Long intervals are
/// split into chunks of length at most `θ^{−α}` so each chunk is accepted
/// with probability at least `e^{−1}`.
pub fn sample_tempered_stable_increment<R: Rng + ?Sized>(
    p: TemperedStableParams,
    dt: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(dt > 0.0) {
        return domain(format!("increment length must be positive, got {dt}"));
    }
    if p.theta == 0.0 {
        return Ok(sample_stable_increment(p.alpha, dt, rng));
    }
    let chunk = p.theta.powf(-p.alpha);
    let pieces = (dt / chunk).ceil().max(1.0) as usize;
    let h = dt / pieces as f64;
    let mut total = 0.0;
    for _ in 0..pieces {
        total += tilted_chunk(p, h, rng)?;
    }
    Ok(total)
}

fn tilted_chunk<R: Rng + ?Sized>(p: TemperedStableParams, h: f64, rng: &mut R) -> Result<f64> {
    for _ in 0..RETRY_CAP {
        let x = sample_stable_increment(p.alpha, h, rng);
        let u: f64 = rng.random();
        if u < (-p.theta * x).exp() {
            return Ok(x);
        }
    }
    Err(Error::Runtime(format!(
        "tempered stable rejection exceeded {RETRY_CAP} attempts (θ={}, α={}, dt={h}); \
         expected acceptance e^(-dt·θ^α) = {:.3e}",
        p.theta,
        p.alpha,
        (-h * p.theta.powf(p.alpha)).exp()
    )))
}

fn check_path_args(horizon: f64, step: f64) -> Result<()> {
    if !(horizon > 0.0 && step > 0.0) || !horizon.is_finite() {
        return domain(format!("inverse path needs horizon > 0 and step > 0 (got {horizon}, {step})"));
    }
    Ok(())
}

/// First-crossing inverse of `D` simulated on the grid `{0, step, 2·step, …}`.
/// The value is the grid point before the crossing, so `Y` is biased low by
/// at most one step.
pub fn inverse_path<R: Rng + ?Sized>(
    p: TemperedStableParams,
    horizon: f64,
    step: f64,
    rng: &mut R,
) -> Result<InversePath> {
    p.validate()?;
    check_path_args(horizon, step)?;
    let mut knots = vec![(0.0, 0.0)];
    let mut d = 0.0;
    let mut i = 0u64;
    while d <= horizon {
        d += sample_tempered_stable_increment(p, step, rng)?;
        i += 1;
        knots.push((d, i as f64 * step));
    }
    Ok(InversePath { horizon, step, knots })
}

/// `Y(t)` at each of the sorted `times`, without storing the path.
pub fn inverse_at_times<R: Rng + ?Sized>(
    p: TemperedStableParams,
    times: &[f64],
    step: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let horizon = times.iter().cloned().fold(0.0, f64::max);
    check_path_args(horizon.max(f64::MIN_POSITIVE), step)?;
    let mut out = vec![0.0; times.len()];
    let mut d = 0.0;
    let mut i = 0u64;
    let mut next = 0;
    while next < times.len() {
        let nd = d + sample_tempered_stable_increment(p, step, rng)?;
        while next < times.len() && times[next] < nd {
            out[next] = i as f64 * step;
            next += 1;
        }
        d = nd;
        i += 1;
    }
    Ok(out)
}

/// Gamma subordinator marginal density `b^{at} x^{at−1} e^{−bx} / Γ(at)`.
pub fn gamma_density(p: GammaParams, x: f64, t: f64) -> Result<f64> {
    if !(x > 0.0 && t > 0.0) {
        return domain(format!("gamma density needs x > 0 and t > 0 (x={x}, t={t})"));
    }
    let s = p.a * t;
    Ok((s * p.b.ln() + (s - 1.0) * x.ln() - p.b * x - ln_gamma(s)).exp())
}

/// Which constant to use in the inverse-gamma density integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InverseGammaForm {
    /// `(a e^{−1}/π) ∫ y^{−ax} e^{−yt} (π cos(aπx) − ln y sin(aπx)) / (1+y) dy`.
    UnitScale,
    /// Same integral with `e^{−bt}` in front and `e^{−ybt}` inside; this is
    /// `∂_x Q(ax, bt)`, and coincides with `UnitScale` at `b = t = 1`.
    Scaled,
}

/// Density of `L(t)` at `x` from the integral representation. The integral
/// only converges for `a·x < 1`; larger arguments report non-convergence.
pub fn inverse_gamma_density(p: GammaParams, x: f64, t: f64) -> Result<Estimate> {
    inverse_gamma_density_form(p, x, t, InverseGammaForm::UnitScale)
}

pub fn inverse_gamma_density_form(
    p: GammaParams,
    x: f64,
    t: f64,
    form: InverseGammaForm,
) -> Result<Estimate> {
    if !(x > 0.0 && t > 0.0) {
        return domain(format!("inverse gamma density needs x > 0 and t > 0 (x={x}, t={t})"));
    }
    let ax = p.a * x;
    if (ax - ax.round()).abs() < 1e-12 {
        return domain(format!("a·x = {ax} is an integer; the integral representation excludes it"));
    }
    if ax > 1.0 {
        return Err(Error::Unconverged {
            what: format!("inverse gamma integral at a·x = {ax} (diverges at y → 0 for a·x > 1)"),
            partial: f64::NAN,
            bound: f64::INFINITY,
        });
    }
    let (pre, rate) = match form {
        InverseGammaForm::UnitScale => (p.a * (-1.0f64).exp() / PI, t),
        InverseGammaForm::Scaled => (p.a * (-p.b * t).exp() / PI, p.b * t),
    };
    let (cs, sn) = ((PI * ax).cos(), (PI * ax).sin());
    let body = |y: f64, ln_y: f64| (-y * rate).exp() / (1.0 + y) * (PI * cs - ln_y * sn);
    // On (0,1] substitute y = u^{1/(1−ax)}, which absorbs y^{−ax}.
    let e = 1.0 / (1.0 - ax);
    let inner = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let ln_y = e * u.ln();
        body(ln_y.exp(), ln_y) * e
    };
    let outer = |y: f64| (-ax * y.ln()).exp() * body(y, y.ln());
    let lo = quad::integrate(inner, 0.0, 1.0, 1e-13, 1e-12)?;
    let hi = quad::integrate_to_infinity(outer, 1.0, 1e-13, 1e-12)?;
    let value = pre * (lo.value + hi.value);
    let err = pre * (lo.error + hi.error);
    if !(lo.converged && hi.converged) {
        return Err(Error::Unconverged { what: "inverse gamma integral".into(), partial: value, bound: err });
    }
    Ok(Estimate::new(value, err))
}

/// `P(L(t) ≤ x) = P(G(x) > t) = Q(ax, bt)`.
pub fn inverse_gamma_cdf(p: GammaParams, x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return domain("inverse gamma cdf needs t > 0");
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    Ok(statrs::function::gamma::gamma_ur(p.a * x, p.b * t))
}

/// Density of `L(t)` by differentiating the exact CDF in `x`.
pub fn inverse_gamma_density_exact(p: GammaParams, x: f64, t: f64) -> Result<Estimate> {
    if !(x > 0.0 && t > 0.0) {
        return domain("inverse gamma density needs x > 0 and t > 0");
    }
    let h = 1e-3 * x.min(1.0);
    let d = |h: f64| -> Result<f64> {
        Ok((inverse_gamma_cdf(p, x + h, t)? - inverse_gamma_cdf(p, x - h, t)?) / (2.0 * h))
    };
    let d1 = d(h)?;
    let d2 = d(h / 2.0)?;
    let rich = d2 + (d2 - d1) / 3.0;
    Ok(Estimate::new(rich, (rich - d2).abs() + 1e-12 / h))
}

/// Inverse gamma path on the operational grid, as [`inverse_path`].
pub fn gamma_inverse_path<R: Rng + ?Sized>(
    p: GammaParams,
    horizon: f64,
    step: f64,
    rng: &mut R,
) -> Result<InversePath> {
    check_path_args(horizon, step)?;
    let inc = Gamma::new(p.a * step, 1.0 / p.b)
        .map_err(|e| Error::Domain(format!("gamma increment: {e}")))?;
    let mut knots = vec![(0.0, 0.0)];
    let mut g = 0.0;
    let mut i = 0u64;
    while g <= horizon {
        g += inc.sample(rng).max(f64::MIN_POSITIVE);
        i += 1;
        knots.push((g, i as f64 * step));
    }
    Ok(InversePath { horizon, step, knots })
}

/// `Y(t)` at each of the sorted `times` for the gamma subordinator.
pub fn gamma_inverse_at_times<R: Rng + ?Sized>(
    p: GammaParams,
    times: &[f64],
    step: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let horizon = times.iter().cloned().fold(0.0, f64::max);
    check_path_args(horizon.max(f64::MIN_POSITIVE), step)?;
    let inc = Gamma::new(p.a * step, 1.0 / p.b)
        .map_err(|e| Error::Domain(format!("gamma increment: {e}")))?;
    let mut out = vec![0.0; times.len()];
    let (mut g, mut i, mut next) = (0.0, 0u64, 0);
    while next < times.len() {
        let ng = g + inc.sample(rng).max(f64::MIN_POSITIVE);
        while next < times.len() && times[next] < ng {
            out[next] = i as f64 * step;
            next += 1;
        }
        g = ng;
        i += 1;
    }
    Ok(out)
}

/// First passage of the gamma subordinator above `t`, located by a coarse
/// grid and then refined with gamma-bridge bisection down to `tol` in
/// operational time.
pub fn gamma_first_passage<R: Rng + ?Sized>(p: GammaParams, t: f64, tol: f64, rng: &mut R) -> Result<f64> {
    if !(t > 0.0 && tol > 0.0) {
        return domain("first passage needs t > 0 and tol > 0");
    }
    let coarse = (t / (p.a / p.b)).max(tol) / 16.0;
    let inc = Gamma::new(p.a * coarse, 1.0 / p.b)
        .map_err(|e| Error::Domain(format!("gamma increment: {e}")))?;
    let (mut x, mut g) = (0.0, 0.0);
    loop {
        let dg = inc.sample(rng);
        if g + dg > t {
            // Crossing inside [x, x + coarse]; G(x) = g <= t < g + dg.
            let (mut lo, mut hi, mut g_lo, mut g_hi) = (x, x + coarse, g, g + dg);
            while hi - lo > tol {
                let half = 0.5 * (hi - lo);
                let split = Beta::new(p.a * half, p.a * half)
                    .map_err(|e| Error::Domain(format!("gamma bridge: {e}")))?;
                let g_mid = g_lo + (g_hi - g_lo) * split.sample(rng);
                if g_mid > t {
                    hi = lo + half;
                    g_hi = g_mid;
                } else {
                    lo += half;
                    g_lo = g_mid;
                }
            }
            return Ok(lo);
        }
        x += coarse;
        g += dg;
    }
}
