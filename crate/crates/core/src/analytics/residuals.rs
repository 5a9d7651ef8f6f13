//! Residuals of the governing fractional systems, with every probability
//! taken from the series and every derivative from grid quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Estimate, Result};
use crate::exec::Exec;
use crate::fractional::{caputo_tempered_derivative, FracParams, SampledFunction};
use crate::queue::{phase_index, QueueParams, StatePhase};

use super::{Evaluator, SeriesContext};

/// Uniform grid on `[0, t_end]` with `points` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualGrid {
    pub t_end: f64,
    pub points: usize,
}

impl Default for ResidualGrid {
    fn default() -> Self {
        ResidualGrid { t_end: 2.0, points: 2001 }
    }
}

impl ResidualGrid {
    pub fn new(t_end: f64, points: usize) -> Result<Self> {
        if !(t_end > 0.0) || points < 5 {
            return domain("residual grid needs t_end > 0 and at least 5 points");
        }
        Ok(ResidualGrid { t_end, points })
    }

    pub fn step(&self) -> f64 {
        self.t_end / (self.points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.t_end * i as f64 / (self.points - 1) as f64
    }

    /// Index of `t`, which must be a grid node with two nodes on either side.
    pub fn interior_index(&self, t: f64) -> Result<usize> {
        let x = t / self.step();
        let i = x.round();
        if (x - i).abs() > 1e-9 || i < 2.0 || i as usize + 2 >= self.points {
            return domain(format!("t = {t} is not an interior node of the residual grid"));
        }
        Ok(i as usize)
    }
}

/// The six equation classes of the state-phase system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationClass {
    Zero,
    FirstLevel,
    FirstLevelLastPhase,
    Inner,
    LastPhaseWithBatchFromEmpty,
    LastPhase,
}

impl EquationClass {
    pub const ALL: [EquationClass; 6] = [
        EquationClass::Zero,
        EquationClass::FirstLevel,
        EquationClass::FirstLevelLastPhase,
        EquationClass::Inner,
        EquationClass::LastPhaseWithBatchFromEmpty,
        EquationClass::LastPhase,
    ];

    /// `None` is the empty state.
    pub fn of(state: Option<StatePhase>, qp: &QueueParams) -> EquationClass {
        let Some(sp) = state else { return EquationClass::Zero };
        match (sp.n, sp.s == qp.k) {
            (1, false) => EquationClass::FirstLevel,
            (1, true) => EquationClass::FirstLevelLastPhase,
            (_, false) => EquationClass::Inner,
            (n, true) if n <= qp.l() => EquationClass::LastPhaseWithBatchFromEmpty,
            _ => EquationClass::LastPhase,
        }
    }

    /// A representative state, when the class is non-empty for `qp`.
    pub fn representative(self, qp: &QueueParams) -> Option<Option<StatePhase>> {
        let (k, l) = (qp.k, qp.l());
        let sp = |n, s| Some(Some(StatePhase { n, s }));
        match self {
            EquationClass::Zero => Some(None),
            EquationClass::FirstLevel if k > 1 => sp(1, 1),
            EquationClass::FirstLevelLastPhase => sp(1, k),
            EquationClass::Inner if k > 1 => sp(2, 1),
            EquationClass::LastPhaseWithBatchFromEmpty if l >= 2 => sp(2, k),
            EquationClass::LastPhase => sp(l + 1, k),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResidualKind {
    System { class: EquationClass, n: usize, s: usize },
    QueueLength { m: usize },
    Pgf { u: f64 },
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub kind: ResidualKind,
    pub t: f64,
    /// Caputo tempered derivative from quadrature, with its Richardson error.
    pub lhs: Estimate,
    pub rhs: f64,
    pub residual: f64,
}

impl Residual {
    fn new(kind: ResidualKind, t: f64, lhs: Estimate, rhs: f64) -> Self {
        Residual { kind, t, lhs, rhs, residual: (lhs.value - rhs).abs() }
    }

    pub fn label(&self) -> String {
        match self.kind {
            ResidualKind::System { class: EquationClass::Zero, .. } => "p0".into(),
            ResidualKind::System { n, s, .. } => format!("p{n},{s}"),
            ResidualKind::QueueLength { m } => format!("q{m}"),
            ResidualKind::Pgf { u } => format!("G(u={u})"),
            ResidualKind::Mean => "mean".into(),
        }
    }
}

/// Series values on a grid prefix: queue-length probabilities `q[m][i]`,
/// the mean and the pgf at a few `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSeries {
    pub grid: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub pgf: Vec<(f64, Vec<f64>)>,
}

impl SampledSeries {
    /// All-zero samples of the given shape.
    pub fn zeros(grid: Vec<f64>, q_len: usize, us: &[f64]) -> Self {
        let n = grid.len();
        SampledSeries {
            q: vec![vec![0.0; n]; q_len],
            mean: vec![0.0; n],
            pgf: us.iter().map(|&u| (u, vec![0.0; n])).collect(),
            grid,
        }
    }

    fn column(&self, v: &[f64]) -> Result<SampledFunction> {
        SampledFunction::new(self.grid.clone(), v.to_vec())
    }

    fn q_at(&self, m: usize, i: usize) -> f64 {
        self.q.get(m).map_or(0.0, |c| c[i])
    }

    fn index(&self, t: f64) -> Result<usize> {
        let f = SampledFunction::new(self.grid.clone(), vec![0.0; self.grid.len()])?;
        match f.index_of(t) {
            Some(i) if i > 0 => Ok(i),
            _ => domain(format!("t = {t} is not a sampled node")),
        }
    }
}

/// Evaluate the series on `grid` up to two nodes past `t_last`.
/// `q_len` queue-length indices are kept (beyond the truncation they are 0).
pub fn sample_series(
    ctx: &SeriesContext,
    grid: &ResidualGrid,
    t_last: f64,
    q_len: usize,
    us: &[f64],
    exec: Exec,
) -> Result<SampledSeries> {
    let last = grid.interior_index(t_last)? + 2;
    let nodes: Vec<f64> = (0..=last).map(|i| grid.node(i)).collect();
    let ev = Evaluator::new(ctx, nodes[last])?;
    let rows = exec.map_slice(&nodes, |&t| -> Result<(Vec<f64>, f64, Vec<f64>)> {
        let snap = ev.snapshot(t)?;
        let q = (0..q_len).map(|m| snap.queue_length_prob(m).value).collect();
        let g = us.iter().map(|&u| snap.pgf(u).map(|e| e.value)).collect::<Result<Vec<_>>>()?;
        Ok((q, snap.mean_queue_length()?.value, g))
    });
    let mut out = SampledSeries::zeros(nodes, q_len, us);
    for (i, row) in rows.into_iter().enumerate() {
        let (q, mean, g) = row?;
        for (m, v) in q.into_iter().enumerate() {
            out.q[m][i] = v;
        }
        out.mean[i] = mean;
        for (j, v) in g.into_iter().enumerate() {
            out.pgf[j].1[i] = v;
        }
    }
    Ok(out)
}

fn frac(ctx: &SeriesContext) -> Result<FracParams> {
    FracParams::new(ctx.theta(), ctx.alpha())
}

/// Right-hand side of the state-phase equation for `state` at node `i`.
fn system_rhs(qp: &QueueParams, data: &SampledSeries, state: Option<StatePhase>, i: usize) -> Result<f64> {
    let (k, lam, kmu, c) = (qp.k, qp.big_lambda(), qp.phase_rate(), qp.c());
    let p = |n: usize, s: usize| -> Result<f64> {
        if n == 0 {
            return Ok(0.0);
        }
        Ok(data.q_at(phase_index(StatePhase::new(n, s, k)?, k)?, i))
    };
    let p0 = data.q_at(0, i);
    let Some(sp) = state else {
        return Ok(-lam * p0 + kmu * p(1, 1)?);
    };
    let (n, s) = (sp.n, sp.s);
    let mut rhs = -(lam + kmu) * p(n, s)?;
    rhs += kmu * if s < k { p(n, s + 1)? } else { p(n + 1, 1)? };
    for (m, &cm) in c.iter().enumerate().map(|(j, cm)| (j + 1, cm)) {
        if m < n {
            rhs += lam * cm * p(n - m, s)?;
        } else if m == n && s == k {
            rhs += lam * cm * p0;
        }
    }
    Ok(rhs)
}

/// System residuals from pre-sampled data. `None` is the empty state.
pub fn system_residuals_sampled(
    qp: &QueueParams,
    fp: FracParams,
    data: &SampledSeries,
    t: f64,
    states: &[Option<StatePhase>],
) -> Result<Vec<Residual>> {
    let i = data.index(t)?;
    states
        .iter()
        .map(|&st| {
            let m = match st {
                None => 0,
                Some(sp) => phase_index(StatePhase::new(sp.n, sp.s, qp.k)?, qp.k)?,
            };
            let col = data.q.get(m).ok_or_else(|| crate::Error::Domain(format!("queue length {m} not sampled")))?;
            let lhs = caputo_tempered_derivative(&data.column(col)?, fp, t)?;
            let kind = match st {
                None => ResidualKind::System { class: EquationClass::Zero, n: 0, s: 0 },
                Some(sp) => ResidualKind::System { class: EquationClass::of(st, qp), n: sp.n, s: sp.s },
            };
            Ok(Residual::new(kind, t, lhs, system_rhs(qp, data, st, i)?))
        })
        .collect()
}

/// Queue-length system: `D q_m = −(Λ+kμ)q_m + kμ q_{m+1} + Λ Σ c'_j q_{m−j}`,
/// with `c'_{ik} = c_i`; `D q_0 = −Λ q_0 + kμ q_1`.
pub fn queue_length_residuals_sampled(
    qp: &QueueParams,
    fp: FracParams,
    data: &SampledSeries,
    t: f64,
    ms: &[usize],
) -> Result<Vec<Residual>> {
    let i = data.index(t)?;
    let (k, lam, kmu, c) = (qp.k, qp.big_lambda(), qp.phase_rate(), qp.c());
    ms.iter()
        .map(|&m| {
            let col = data.q.get(m).ok_or_else(|| crate::Error::Domain(format!("queue length {m} not sampled")))?;
            let lhs = caputo_tempered_derivative(&data.column(col)?, fp, t)?;
            let mut rhs = kmu * data.q_at(m + 1, i);
            if m == 0 {
                rhs -= lam * data.q_at(0, i);
            } else {
                rhs -= (lam + kmu) * data.q_at(m, i);
                for (b, &cb) in c.iter().enumerate() {
                    let jump = (b + 1) * k;
                    if jump <= m {
                        rhs += lam * cb * data.q_at(m - jump, i);
                    }
                }
            }
            Ok(Residual::new(ResidualKind::QueueLength { m }, t, lhs, rhs))
        })
        .collect()
}

/// `u D G = (kμ(1−u) − Λu(1 − Σ c_m u^{mk})) G − kμ(1−u) p_0`, both sides.
pub fn pgf_residuals_sampled(qp: &QueueParams, fp: FracParams, data: &SampledSeries, t: f64) -> Result<Vec<Residual>> {
    let i = data.index(t)?;
    let (k, lam, kmu, c) = (qp.k, qp.big_lambda(), qp.phase_rate(), qp.c());
    data.pgf
        .iter()
        .map(|(u, col)| {
            let u = *u;
            let d = caputo_tempered_derivative(&data.column(col)?, fp, t)?;
            let batch: f64 = c.iter().enumerate().map(|(j, cj)| cj * u.powi(((j + 1) * k) as i32)).sum();
            let rhs = (kmu * (1.0 - u) - lam * u * (1.0 - batch)) * col[i] - kmu * (1.0 - u) * data.q_at(0, i);
            Ok(Residual::new(ResidualKind::Pgf { u }, t, Estimate::new(u * d.value, u * d.error), rhs))
        })
        .collect()
}

/// `D M = kμ p_0 − kμ + kΛ Σ i c_i`.
pub fn mean_residual_sampled(qp: &QueueParams, fp: FracParams, data: &SampledSeries, t: f64) -> Result<Residual> {
    let i = data.index(t)?;
    let lhs = caputo_tempered_derivative(&data.column(&data.mean)?, fp, t)?;
    let (k, kmu) = (qp.k as f64, qp.phase_rate());
    let rhs = kmu * data.q_at(0, i) - kmu + k * qp.big_lambda() * qp.mean_batch();
    Ok(Residual::new(ResidualKind::Mean, t, lhs, rhs))
}

fn q_len_for(qp: &QueueParams, states: &[Option<StatePhase>], extra: usize) -> Result<usize> {
    let mut top = extra;
    for sp in states.iter().flatten() {
        top = top.max(phase_index(*sp, qp.k)?);
    }
    Ok(top + qp.k + 2)
}

/// Residuals of the listed state-phase equations at `t` on the default grid.
pub fn system_residuals(ctx: &SeriesContext, t: f64, states: &[Option<StatePhase>]) -> Result<Vec<Residual>> {
    let qp = &ctx.qp;
    let data = sample_series(ctx, &ResidualGrid::default(), t, q_len_for(qp, states, 0)?, &[], Exec::default())?;
    system_residuals_sampled(qp, frac(ctx)?, &data, t, states)
}

/// Mean-equation residual `|D M − kμ p_0 + kμ − kΛ Σ i c_i|` on the default grid.
pub fn mean_residual(ctx: &SeriesContext, t: f64) -> Result<f64> {
    let data = sample_series(ctx, &ResidualGrid::default(), t, 1, &[], Exec::default())?;
    Ok(mean_residual_sampled(&ctx.qp, frac(ctx)?, &data, t)?.residual)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSuite {
    pub grid: ResidualGrid,
    pub residuals: Vec<Residual>,
}

impl ResidualSuite {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.residual).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&Residual> {
        self.residuals.iter().max_by(|a, b| a.residual.total_cmp(&b.residual))
    }
}

pub const SUITE_PGF_POINTS: [f64; 2] = [0.3, 0.7];

/// One representative per non-empty equation class, the first few
/// queue-length equations, the pgf equation and the mean, at every `t`.
/// The series is sampled once, up to the largest `t`.
pub fn residual_suite(ctx: &SeriesContext, grid: &ResidualGrid, times: &[f64], exec: Exec) -> Result<ResidualSuite> {
    let qp = &ctx.qp;
    let Some(&t_last) = times.iter().max_by(|a, b| a.total_cmp(b)) else {
        return domain("residual suite needs at least one time");
    };
    let states: Vec<Option<StatePhase>> = EquationClass::ALL.iter().filter_map(|c| c.representative(qp)).collect();
    let ms: Vec<usize> = (0..=qp.k * qp.l() + 1).collect();
    let q_len = q_len_for(qp, &states, *ms.last().unwrap())?;
    let data = sample_series(ctx, grid, t_last, q_len, &SUITE_PGF_POINTS, exec)?;
    let fp = frac(ctx)?;
    let mut residuals = Vec::new();
    for &t in times {
        grid.interior_index(t)?;
        residuals.extend(system_residuals_sampled(qp, fp, &data, t, &states)?);
        residuals.extend(queue_length_residuals_sampled(qp, fp, &data, t, &ms)?);
        residuals.extend(pgf_residuals_sampled(qp, fp, &data, t)?);
        residuals.push(mean_residual_sampled(qp, fp, &data, t)?);
    }
    Ok(ResidualSuite { grid: *grid, residuals })
}
