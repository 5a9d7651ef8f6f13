//! One-sample Kolmogorov-Smirnov test and the DKW confidence band.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub n: usize,
    pub d: f64,
    pub slack: f64,
    pub level: f64,
    /// Asymptotic critical value of `D_n` at `level`.
    pub critical: f64,
    pub p_value: f64,
    pub pass: bool,
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_pvalue(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * x * x).exp();
        s += if j % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// `D_n = sup |F_n − F|` against `cdf`, compared with the asymptotic
/// critical value `sqrt(ln(2/level)/2)/sqrt(n)`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64, level: f64) -> Result<KsResult> {
    ks_statistic_bounded(samples, |x| {
        let f = cdf(x);
        (f, f)
    }, level)
}

/// As [`ks_statistic`] when only an enclosure `lo ≤ F(x) ≤ hi` is known.
/// `d` is then an upper bound on the statistic, and `slack` how much it
/// may exceed the true value.
pub fn ks_statistic_bounded(samples: &[f64], cdf: impl Fn(f64) -> (f64, f64), level: f64) -> Result<KsResult> {
    if samples.is_empty() {
        return domain("KS test needs at least one sample");
    }
    if !(level > 0.0 && level < 1.0) {
        return domain("KS level must lie in (0, 1)");
    }
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    let nf = n as f64;
    let (mut d, mut d_low) = (0.0f64, 0.0f64);
    for (i, &x) in xs.iter().enumerate() {
        let (lo, hi) = cdf(x);
        let (below, above) = (i as f64 / nf, (i + 1) as f64 / nf);
        d = d.max(hi - below).max(above - lo);
        d_low = d_low.max(lo - below).max(above - hi);
    }
    let sn = nf.sqrt();
    let critical = ((2.0 / level).ln() / 2.0).sqrt() / sn;
    let p_value = kolmogorov_pvalue((sn + 0.12 + 0.11 / sn) * d);
    Ok(KsResult { n, d, slack: d - d_low, level, critical, p_value, pass: d <= critical })
}

/// Half-width of the Dvoretzky-Kiefer-Wolfowitz uniform band.
pub fn dkw_band(n: usize, level: f64) -> f64 {
    ((2.0 / level).ln() / (2.0 * n as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::path_rng;
    use rand_distr::{Distribution, Exp};

    #[test]
    fn calibrated_at_five_percent() {
        let law = Exp::new(1.5).unwrap();
        let mut passes = 0;
        for seed in 0..100 {
            let mut rng = path_rng(seed, 0);
            let xs: Vec<f64> = (0..10_000).map(|_| law.sample(&mut rng)).collect();
            if ks_statistic(&xs, |t| 1.0 - (-1.5 * t).exp(), 0.05).unwrap().pass {
                passes += 1;
            }
        }
        assert!((88..=100).contains(&passes), "{passes}");
    }

    #[test]
    fn detects_wrong_rate() {
        let law = Exp::new(1.6).unwrap();
        let mut rng = path_rng(1, 0);
        let xs: Vec<f64> = (0..10_000).map(|_| law.sample(&mut rng)).collect();
        let r = ks_statistic(&xs, |t| 1.0 - (-0.8 * t).exp(), 0.05).unwrap();
        assert!(!r.pass && r.p_value < 1e-10);
    }

    #[test]
    fn pvalue_and_band() {
        assert!((kolmogorov_pvalue(1.3581) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_pvalue(1.6276) - 0.01).abs() < 1e-3);
        assert!((dkw_band(10_000, 0.05) - 0.01358).abs() < 1e-4);
        assert!(ks_statistic(&[], |t| t, 0.05).is_err());
        let xs = [0.1, 0.4, 0.7];
        let exact = ks_statistic(&xs, |t| t, 0.05).unwrap();
        let loose = ks_statistic_bounded(&xs, |t| (t - 0.01, t + 0.01), 0.05).unwrap();
        assert!((loose.d - exact.d - 0.01).abs() < 1e-12 && exact.slack == 0.0);
    }
}
