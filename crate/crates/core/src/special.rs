//! Gamma-family helpers and the three-parameter Mittag-Leffler function
//!
//! `E^γ_{α,β}(x) = Σ_j (γ)_j x^j / (j! Γ(αj+β))`, summed directly in log space
//! with the sign tracked separately. Every series the analytics module
//! evaluates is built from this kernel.

use crate::dd::Dd;
use crate::error::{domain, Result};

pub const DEFAULT_TERM_CAP: usize = 10_000;

/// Natural log of the gamma function for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return domain(format!("log_gamma requires x > 0, got {x}"));
    }
    Ok(ln_gamma(x))
}

#[inline]
pub(crate) fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// ln(n!) for small integers, exact table lookup below 171.
#[inline]
pub(crate) fn ln_factorial(n: u64) -> f64 {
    statrs::function::factorial::ln_factorial(n)
}

/// Γ(s, x) for s > 0, x ≥ 0 (not regularized).
pub fn upper_incomplete_gamma(s: f64, x: f64) -> Result<f64> {
    if !(s > 0.0) || !(x >= 0.0) {
        return domain(format!("upper_incomplete_gamma needs s > 0, x >= 0 (s={s}, x={x})"));
    }
    if x == 0.0 {
        return Ok(ln_gamma(s).exp());
    }
    Ok(statrs::function::gamma::gamma_ur(s, x) * ln_gamma(s).exp())
}

/// ∫_t^∞ e^{-θs} α s^{-α-1} ds, reduced to an upper incomplete gamma.
pub fn tempered_tail(theta: f64, alpha: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return domain(format!("tempered tail needs t > 0, got {t}"));
    }
    if !(alpha > 0.0 && alpha < 1.0) || !(theta >= 0.0) {
        return domain(format!("tempered tail needs 0<α<1, θ≥0 (α={alpha}, θ={theta})"));
    }
    let head = t.powf(-alpha) * (-theta * t).exp();
    if theta == 0.0 {
        return Ok(head);
    }
    Ok(head - theta.powf(alpha) * upper_incomplete_gamma(1.0 - alpha, theta * t)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlArgs {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub x: f64,
}

impl MlArgs {
    pub fn new(alpha: f64, beta: f64, gamma: f64, x: f64) -> Result<Self> {
        let a = MlArgs { alpha, beta, gamma, x };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.gamma > 0.0) {
            return domain(format!(
                "Mittag-Leffler parameters must be positive (α={}, β={}, γ={})",
                self.alpha, self.beta, self.gamma
            ));
        }
        if !self.x.is_finite() {
            return domain("Mittag-Leffler argument must be finite");
        }
        Ok(())
    }
}

/// Outcome of a truncated series evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub value: f64,
    /// Bound on the truncation error (geometric majorant of the tail).
    pub abs_error_bound: f64,
    /// Floating-point estimate, `ε · Σ|terms|` scaled by the log-space
    /// magnitudes. Grows with cancellation for negative arguments.
    pub rounding_bound: f64,
    /// `Σ|terms|` plus the tail bound: the series value at `|x|`.
    pub abs_sum: f64,
    pub terms_used: usize,
    pub converged: bool,
}

impl EvalResult {
    pub fn total_error(&self) -> f64 {
        self.abs_error_bound + self.rounding_bound
    }
}

/// Three-parameter Mittag-Leffler function.
///
/// Stops once a term falls below `tol · max(1, |partial|)`, the term ratio is
/// below one, and the geometric tail majorant also sits under that threshold.
/// Hitting the term cap returns `converged = false` with the partial sum.
pub fn ml3(args: MlArgs, tol: f64) -> Result<EvalResult> {
    args.validate()?;
    if !(tol > 0.0) {
        return domain(format!("tolerance must be positive, got {tol}"));
    }
    Ok(ml3_scaled(
        args.alpha,
        args.beta,
        args.gamma,
        args.x,
        0.0,
        tol,
        1.0,
        DEFAULT_TERM_CAP,
    ))
}

/// Two-parameter specialization `E_{α,β}(x) = E^1_{α,β}(x)`.
pub fn ml2(alpha: f64, beta: f64, x: f64, tol: f64) -> Result<EvalResult> {
    ml3(MlArgs::new(alpha, beta, 1.0, x)?, tol)
}

/// `e^{ln_scale} · E^γ_{α,β}(x)` with threshold `tol · max(floor, |partial|)`.
///
/// `gamma == 0` is accepted and follows the Pochhammer convention
/// `(0)_0 = 1`, `(0)_j = 0`, so only the `j = 0` term survives.
#[allow(clippy::too_many_arguments)]
pub(crate) fn ml3_scaled(
    alpha: f64,
    beta: f64,
    gamma: f64,
    x: f64,
    ln_scale: f64,
    tol: f64,
    floor: f64,
    cap: usize,
) -> EvalResult {
    ml_series(gamma, x, ln_scale, tol, floor, cap, |j| {
        ln_gamma(alpha * j as f64 + beta)
    })
}

/// Core summation loop. `lg(j)` must return `ln Γ(αj + β)` for the
/// series being summed; callers with a precomputed table pass a lookup.
pub(crate) fn ml_series(
    gamma: f64,
    x: f64,
    ln_scale: f64,
    tol: f64,
    floor: f64,
    cap: usize,
    lg: impl Fn(usize) -> f64,
) -> EvalResult {
    let lg0 = lg(0);
    let head = ln_scale - lg0;
    if gamma == 0.0 || x == 0.0 {
        let v = head.exp();
        return EvalResult {
            value: v,
            abs_error_bound: 0.0,
            rounding_bound: v * f64::EPSILON * (4.0 + head.abs()),
            abs_sum: v.abs(),
            terms_used: 1,
            converged: true,
        };
    }
    let ax = x.abs();
    let lx = ax.ln();
    let negative = x < 0.0;

    let mut sum = 0.0_f64;
    let mut abs_sum = 0.0_f64;
    // exp() of a log-space term carries a relative error proportional to
    // the size of each log component, not of their sum; ln Γ is only good
    // to a few ulp of its own value.
    let mut weighted = 0.0_f64;
    // ln((γ)_j / j!)
    let mut ln_poch = 0.0_f64;
    let mut lg_cur = lg0;

    for j in 0..cap {
        let jf = j as f64;
        let ln_a = ln_scale + jf * lx + ln_poch - lg_cur;
        let mag = ln_a.exp();
        let term = if negative && j % 2 == 1 { -mag } else { mag };
        sum += term;
        abs_sum += mag;
        weighted += mag * (8.0 + 4.0 * (ln_scale.abs() + (jf * lx).abs() + ln_poch.abs() + lg_cur.abs()));

        let lg_next = lg(j + 1);
        let ratio = ax * (jf + gamma) / (jf + 1.0) * (lg_cur - lg_next).exp();
        let threshold = tol * floor.max(sum.abs());
        if mag <= threshold && ratio < 1.0 {
            // Γ(αi+β)/Γ(αi+α+β) decreases in i, and (i+γ)/(i+1) is
            // monotone, so one ratio bounds every later one.
            let lg_after = lg(j + 2);
            let pref = if gamma >= 1.0 {
                (jf + 1.0 + gamma) / (jf + 2.0)
            } else {
                1.0
            };
            let q = ax * pref * (lg_next - lg_after).exp();
            if q < 1.0 {
                let tail = mag * ratio / (1.0 - q);
                if tail <= threshold || mag == 0.0 {
                    return EvalResult {
                        value: sum,
                        abs_error_bound: tail,
                        rounding_bound: weighted * f64::EPSILON,
                        abs_sum: abs_sum + tail,
                        terms_used: j + 1,
                        converged: true,
                    };
                }
            }
        }
        ln_poch += ((jf + gamma) / (jf + 1.0)).ln();
        lg_cur = lg_next;
    }
    EvalResult {
        value: sum,
        abs_error_bound: f64::INFINITY,
        rounding_bound: weighted * f64::EPSILON,
        abs_sum: f64::INFINITY,
        terms_used: cap,
        converged: false,
    }
}

/// The series of [`ml_series`] summed in double-double arithmetic.
///
/// Terms follow the recurrence `a_{j+1} = a_j · x (γ+j)/(j+1) · R_j` with
/// `R_j = Γ(αj+β)/Γ(αj+α+β)` supplied by `ratio(j)`, so only the common
/// factor `e^{ln_scale}/Γ(β)` (with `lg0 = ln Γ(β)`) carries `f64` error.
#[allow(clippy::too_many_arguments)]
pub(crate) fn ml_series_dd(
    gamma: f64,
    x: f64,
    ln_scale: f64,
    lg0: f64,
    tol: f64,
    cap: usize,
    ratio: impl Fn(usize) -> Dd,
) -> EvalResult {
    let head = ln_scale - lg0;
    // ln_scale itself carries a few roundings, and ln Γ a few ulp.
    let factor_err = f64::EPSILON * (16.0 + 8.0 * (ln_scale.abs() + lg0.abs()));
    if gamma == 0.0 || x == 0.0 {
        let v = head.exp();
        return EvalResult {
            value: v,
            abs_error_bound: 0.0,
            rounding_bound: v * factor_err,
            abs_sum: v,
            terms_used: 1,
            converged: true,
        };
    }
    let ax = x.abs();
    let mut term = Dd::ONE;
    let mut sum = Dd::ZERO;
    let mut abs_sum = 0.0f64;
    for j in 0..cap {
        let jf = j as f64;
        sum = sum + term;
        let mag = term.hi.abs();
        abs_sum += mag;
        let r = ratio(j);
        let step = Dd::new(x).mul_f(jf + gamma) / Dd::new(jf + 1.0) * r;
        let ratio_next = ax * (jf + gamma) / (jf + 1.0) * r.hi;
        let threshold = tol * sum.hi.abs();
        if mag <= threshold && ratio_next < 1.0 {
            let pref = if gamma >= 1.0 { (jf + 1.0 + gamma) / (jf + 2.0) } else { 1.0 };
            let q = ax * pref * ratio(j + 1).hi;
            if q < 1.0 {
                let tail = mag * ratio_next / (1.0 - q);
                if tail <= threshold || mag == 0.0 {
                    let total = sum.to_f64();
                    let scale = |v: f64| if v == 0.0 { 0.0 } else { (head + v.abs().ln()).exp() };
                    let value = scale(total).copysign(total);
                    let dd_err = abs_sum * (jf + 2.0) * 2f64.powi(-100);
                    return EvalResult {
                        value,
                        abs_error_bound: scale(tail),
                        rounding_bound: value.abs() * factor_err + scale(dd_err),
                        abs_sum: scale(abs_sum + tail),
                        terms_used: j + 1,
                        converged: true,
                    };
                }
            }
        }
        term = term * step;
    }
    let total = sum.to_f64();
    EvalResult {
        value: (head + total.abs().ln()).exp().copysign(total),
        abs_error_bound: f64::INFINITY,
        rounding_bound: f64::INFINITY,
        abs_sum: f64::INFINITY,
        terms_used: cap,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, PI};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn log_gamma_reference_values() {
        assert!(close(log_gamma(1.0).unwrap(), 0.0, 1e-15));
        assert!(close(log_gamma(2.0).unwrap(), 0.0, 1e-15));
        let refs = [
            (5.0, 24.0_f64.ln()),
            (0.5, 0.5 * PI.ln()),
            (10.5, 13.940_625_219_403_763),
            (100.0, 359.134_205_369_575_4),
            (0.1, 2.252_712_651_734_206),
            (3.7, 1.428_072_326_665_388),
        ];
        for (x, want) in refs {
            let got = log_gamma(x).unwrap();
            assert!(
                ((got - want) / want).abs() <= 1e-13,
                "lnΓ({x}) = {got}, want {want}"
            );
        }
    }

    #[test]
    fn log_gamma_rejects_nonpositive() {
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-1.5).is_err());
        assert!(log_gamma(f64::NAN).is_err());
    }

    #[test]
    fn ml3_exponential_case() {
        let r = ml3(MlArgs::new(1.0, 1.0, 1.0, 1.0).unwrap(), 1e-14).unwrap();
        assert!(r.converged);
        assert!(close(r.value, E, 1e-13), "{}", r.value);
        assert!(r.abs_error_bound <= 1e-14 * r.value);
    }

    #[test]
    fn ml3_zero_argument_keeps_first_term() {
        let r = ml3(MlArgs::new(0.7, 2.0, 3.0, 0.0).unwrap(), 1e-12).unwrap();
        assert_eq!(r.terms_used, 1);
        assert!(close(r.value, 1.0, 1e-15));
    }

    #[test]
    fn ml3_matches_high_precision_oracle() {
        // 50-digit partial sums with the tail below 1e-45.
        let r = ml3(MlArgs::new(0.5, 1.0, 2.0, -1.0).unwrap(), 1e-14).unwrap();
        assert!(r.converged);
        assert!(close(r.value, 0.154_371_561_371_908_44, 1e-13), "{}", r.value);
    }

    #[test]
    fn ml2_reference_values() {
        assert!(close(ml2(1.0, 2.0, 0.0, 1e-12).unwrap().value, 1.0, 1e-15));
        let r = ml2(1.0, 1.0, -2.0, 1e-14).unwrap();
        assert!(close(r.value, (-2.0_f64).exp(), 1e-13));
        let r = ml2(0.7, 1.7, 0.3, 1e-14).unwrap();
        assert!(close(r.value, 1.389_544_419_591_584_3, 1e-13), "{}", r.value);
    }

    #[test]
    fn ml2_equals_ml3_with_unit_gamma() {
        for &(a, b, x) in &[(0.3, 0.9, -2.0), (0.9, 1.3, 1.5), (1.5, 2.5, -4.0)] {
            let two = ml2(a, b, x, 1e-14).unwrap();
            let three = ml3(MlArgs::new(a, b, 1.0, x).unwrap(), 1e-14).unwrap();
            assert!(close(two.value, three.value, two.total_error() + three.total_error()));
        }
    }

    #[test]
    fn ml3_rejects_bad_parameters() {
        assert!(MlArgs::new(0.0, 1.0, 1.0, 0.5).is_err());
        assert!(MlArgs::new(1.0, -1.0, 1.0, 0.5).is_err());
        assert!(MlArgs::new(1.0, 1.0, 0.0, 0.5).is_err());
        let a = MlArgs { alpha: 1.0, beta: 1.0, gamma: 1.0, x: 1.0 };
        assert!(ml3(a, 0.0).is_err());
    }

    #[test]
    fn ml3_term_cap_reports_unconverged() {
        let r = ml3_scaled(0.05, 1.0, 1.0, 30.0, 0.0, 1e-15, 1.0, 5);
        assert!(!r.converged);
        assert_eq!(r.terms_used, 5);
        assert!(r.abs_error_bound.is_infinite());
    }

    #[test]
    fn zero_gamma_convention() {
        let r = ml3_scaled(0.7, 3.0, 0.0, -2.5, 0.0, 1e-14, 1.0, 100);
        assert!(close(r.value, 0.5, 1e-14), "{}", r.value);
    }

    #[test]
    fn tolerance_refinement_is_consistent() {
        for &(a, b, g, x) in &[(0.5, 1.0, 2.0, -1.0), (0.7, 1.4, 2.0, -3.0), (0.9, 2.0, 4.5, 2.0)] {
            let args = MlArgs::new(a, b, g, x).unwrap();
            let coarse = ml3(args, 1e-8).unwrap();
            let fine = ml3(args, 1e-9).unwrap();
            assert!((coarse.value - fine.value).abs() < 1e-8 * coarse.value.abs().max(1.0));
        }
    }

    #[test]
    fn tempered_tail_reduces_to_power_at_zero_tempering() {
        let v = tempered_tail(0.0, 0.4, 2.0).unwrap();
        assert!(close(v, 2.0_f64.powf(-0.4), 1e-15));
    }

    #[test]
    fn tempered_tail_matches_direct_quadrature() {
        let (theta, alpha, t) = (0.5, 0.7, 1.3);
        let f = |s: f64| (-theta * s).exp() * alpha * s.powf(-alpha - 1.0);
        let q = crate::quad::integrate_to_infinity(f, t, 1e-13, 1e-12).unwrap();
        let v = tempered_tail(theta, alpha, t).unwrap();
        assert!(close(v, q.value, 1e-10), "{v} vs {}", q.value);
    }

    #[test]
    fn upper_incomplete_gamma_reference() {
        // Γ(1, x) = e^{-x}; Γ(1/2, x) = √π erfc(√x)
        assert!(close(upper_incomplete_gamma(1.0, 2.0).unwrap(), (-2.0f64).exp(), 1e-15));
        let want = PI.sqrt() * statrs::function::erf::erfc(0.3_f64.sqrt());
        let got = upper_incomplete_gamma(0.5, 0.3).unwrap();
        assert!(close(got, 0.777_359_311_249_808_2, 1e-14), "{got} vs {want}");
    }
}
