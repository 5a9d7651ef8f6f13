use crate::error::{domain, Result};
use crate::special::ln_factorial;

use super::{ProbabilityTable, QueueParams, TableKind};

/// Sparse generator on phase counts `0..=cap`. Jumps that would leave the
/// grid are sent to an absorbing overflow state so lost mass stays visible.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub cap: usize,
    /// Off-diagonal entries `(target, rate)` per row.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Rate into the overflow state per row.
    pub overflow: Vec<f64>,
    pub diag: Vec<f64>,
}

impl Generator {
    pub fn dim(&self) -> usize {
        self.cap + 1
    }

    /// Largest exit rate, used as the uniformization rate.
    pub fn max_exit_rate(&self) -> f64 {
        self.diag.iter().fold(0.0f64, |m, d| m.max(-d))
    }

    pub fn row_sum(&self, j: usize) -> f64 {
        self.rows[j].iter().map(|e| e.1).sum::<f64>() + self.overflow[j] + self.diag[j]
    }

    /// `v ↦ v (I + Q/q)`, carrying overflow separately.
    fn step(&self, v: &[f64], out: &mut [f64], q: f64) -> f64 {
        let mut lost = 0.0;
        for (o, (x, d)) in out.iter_mut().zip(v.iter().zip(&self.diag)) {
            *o = x * (1.0 + d / q);
        }
        for (j, row) in self.rows.iter().enumerate() {
            let x = v[j];
            if x == 0.0 {
                continue;
            }
            for &(to, r) in row {
                out[to] += x * r / q;
            }
            lost += x * self.overflow[j] / q;
        }
        lost
    }
}

/// Smallest multiple of `l·k` exceeding `40(Λ t l k + k)`.
pub fn default_cap(params: &QueueParams, t_max: f64) -> usize {
    let lk = params.l() * params.k;
    let bound = 40.0 * (params.big_lambda() * t_max * lk as f64 + params.k as f64);
    (bound / lk as f64).floor() as usize * lk + lk
}

pub fn generator(params: &QueueParams, cap: usize) -> Result<Generator> {
    params.validate()?;
    let lk = params.l() * params.k;
    if cap < lk {
        return domain(format!("state cap {cap} is below l·k = {lk}"));
    }
    let n = cap + 1;
    let mut rows = vec![Vec::new(); n];
    let mut overflow = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let serve = params.phase_rate();
    for j in 0..n {
        let mut out = 0.0;
        for (i, &lam) in params.lambdas.iter().enumerate() {
            if lam == 0.0 {
                continue;
            }
            let to = j + (i + 1) * params.k;
            if to <= cap {
                rows[j].push((to, lam));
            } else {
                overflow[j] += lam;
            }
            out += lam;
        }
        if j >= 1 {
            rows[j].push((j - 1, serve));
            out += serve;
        }
        diag[j] = -out;
    }
    Ok(Generator { cap, rows, overflow, diag })
}

fn poisson_weights(lambda: f64, tol: f64) -> (Vec<f64>, f64) {
    if lambda == 0.0 {
        return (vec![1.0], 0.0);
    }
    let mut w = Vec::new();
    let mut cum = 0.0;
    let ln_l = lambda.ln();
    let mut n = 0u64;
    loop {
        let lw = -lambda + n as f64 * ln_l - ln_factorial(n);
        let x = lw.exp();
        w.push(x);
        cum += x;
        n += 1;
        if n as f64 > lambda && 1.0 - cum <= tol {
            break;
        }
        if n > 100_000_000 {
            break;
        }
    }
    (w, (1.0 - cum).max(0.0))
}

/// Transient law from the empty state at several times.
pub fn transient_uniformization_grid(
    params: &QueueParams,
    times: &[f64],
    cap: usize,
    tol: f64,
) -> Result<ProbabilityTable> {
    if times.iter().any(|&t| !(t >= 0.0)) {
        return domain("times must be >= 0");
    }
    if !(tol > 0.0) {
        return domain("tolerance must be positive");
    }
    let g = generator(params, cap)?;
    let q = g.max_exit_rate();
    let n = g.dim();
    let mut probs = Vec::with_capacity(times.len());
    let mut errs = Vec::with_capacity(times.len());
    let mut lost_mass = Vec::with_capacity(times.len());
    let mut warnings = Vec::new();
    for &t in times {
        let (w, tail) = poisson_weights(q * t, tol / 2.0);
        let mut v = vec![0.0; n];
        v[0] = 1.0;
        let mut next = vec![0.0; n];
        let mut acc = vec![0.0; n];
        let mut lost = 0.0;
        let mut lost_acc = 0.0;
        for (i, wi) in w.iter().enumerate() {
            for (a, x) in acc.iter_mut().zip(&v) {
                *a += wi * x;
            }
            lost_acc += wi * lost;
            if i + 1 < w.len() {
                lost += g.step(&v, &mut next, q);
                std::mem::swap(&mut v, &mut next);
            }
        }
        if lost_acc > tol / 2.0 {
            warnings.push(format!("t = {t}: overflow mass {lost_acc:.3e} exceeds budget {:.3e}", tol / 2.0));
        }
        errs.push(vec![tail + lost_acc; n]);
        probs.push(acc);
        lost_mass.push(lost_acc + tail);
    }
    Ok(ProbabilityTable {
        times: times.to_vec(),
        states: (0..n).collect(),
        probs,
        err: errs,
        lost_mass,
        kind: TableKind::Uniformization,
        warnings,
    })
}

pub fn transient_uniformization(
    params: &QueueParams,
    t: f64,
    cap: usize,
    tol: f64,
) -> Result<ProbabilityTable> {
    transient_uniformization_grid(params, &[t], cap, tol)
}

/// Row 0 of `exp(Q t)` for the truncated generator, by scaling and squaring
/// a Taylor polynomial on the dense matrix. The last entry is the overflow
/// state. Independent of the uniformization code path.
pub fn expm_row0(params: &QueueParams, t: f64, cap: usize) -> Result<Vec<f64>> {
    let g = generator(params, cap)?;
    let n = g.dim() + 1;
    let mut a = vec![0.0; n * n];
    for j in 0..g.dim() {
        a[j * n + j] = g.diag[j] * t;
        for &(to, r) in &g.rows[j] {
            a[j * n + to] += r * t;
        }
        a[j * n + n - 1] += g.overflow[j] * t;
    }
    let norm = (0..n)
        .map(|i| (0..n).map(|j| a[i * n + j].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    for x in a.iter_mut() {
        *x *= scale;
    }
    let matmul = |x: &[f64], y: &[f64]| {
        let mut z = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let xik = x[i * n + k];
                if xik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    z[i * n + j] += xik * y[k * n + j];
                }
            }
        }
        z
    };
    let mut e = vec![0.0; n * n];
    let mut term = vec![0.0; n * n];
    for i in 0..n {
        e[i * n + i] = 1.0;
        term[i * n + i] = 1.0;
    }
    for p in 1..=20 {
        term = matmul(&term, &a);
        for x in term.iter_mut() {
            *x /= p as f64;
        }
        for (ei, ti) in e.iter_mut().zip(&term) {
            *ei += ti;
        }
    }
    for _ in 0..squarings {
        e = matmul(&e, &e);
    }
    Ok(e[..n].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pstar() -> QueueParams {
        QueueParams::new(vec![0.6, 0.3], 2, 1.2).unwrap()
    }

    #[test]
    fn generator_rows() {
        let p = pstar();
        let g = generator(&p, 40).unwrap();
        assert_eq!(g.rows[0], vec![(2, 0.6), (4, 0.3)]);
        assert!((g.diag[0] + 0.9).abs() < 1e-15);
        for j in 1..=40 {
            assert!((g.diag[j] + p.total_rate()).abs() < 1e-14);
        }
        for j in 0..=40 {
            assert!(g.row_sum(j).abs() < 1e-14);
        }
        assert!(generator(&p, 3).is_err());
    }

    #[test]
    fn mm1_special_case() {
        let p = QueueParams::new(vec![0.7], 1, 1.1).unwrap();
        let g = generator(&p, 10).unwrap();
        assert_eq!(g.rows[3], vec![(4, 0.7), (2, 1.1)]);
        assert!((g.diag[3] + 1.8).abs() < 1e-15);
    }

    #[test]
    fn cap_rule() {
        let p = pstar();
        let cap = default_cap(&p, 2.0);
        assert_eq!(cap % 4, 0);
        assert!(cap as f64 > 40.0 * (0.9 * 2.0 * 4.0 + 2.0));
    }

    #[test]
    fn starts_at_empty_state() {
        let tab = transient_uniformization(&pstar(), 0.0, 40, 1e-12).unwrap();
        assert_eq!(tab.probs[0][0], 1.0);
        assert!(tab.probs[0][1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mass_is_conserved() {
        let p = pstar();
        let tab = transient_uniformization_grid(&p, &[0.5, 1.0, 2.0], 40, 1e-13).unwrap();
        for i in 0..3 {
            let overflow = tab.lost_mass[i];
            assert!((tab.row_sum(i) + overflow - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn agrees_with_dense_exponential() {
        let p = pstar();
        let cap = default_cap(&p, 1.0);
        let tab = transient_uniformization(&p, 1.0, cap, 1e-13).unwrap();
        let row = expm_row0(&p, 1.0, cap).unwrap();
        assert!((tab.probs[0][0] - row[0]).abs() < 1e-8);
        assert!((row[0] - 0.500_406_663_872_946_5).abs() < 1e-10, "{}", row[0]);
        for j in 0..50 {
            assert!((tab.probs[0][j] - row[j]).abs() < 1e-11);
        }
    }

    #[test]
    fn mek1_approaches_stationary_idle_probability() {
        let p = QueueParams::new(vec![0.5], 3, 1.0).unwrap();
        let tab = transient_uniformization(&p, 200.0, 400, 1e-10).unwrap();
        assert!((tab.probs[0][0] - 0.5).abs() < 1e-3, "{}", tab.probs[0][0]);
    }
}
