mod config;
mod csv;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tcqueue::analytics::{mean_residual_sampled, sample_series, Evaluator, InterEvent, ResidualGrid, SurvivalLaw, ThetaReading};
use tcqueue::fractional::FracParams;
use tcqueue::montecarlo::{
    collect_inter_event_times, lag1_autocorrelation, simulate_busy_period, simulate_time_changed, EstimateTable, KsResult,
    TimeChange,
};
use tcqueue::queue::{default_cap, phase_inverse, transient_uniformization_grid};
use tcqueue::validation::{ks_against_survival, run_selected, CRITERIA};

use config::RunConfig;
use csv::{Cell, Table};

/// Analytic rows whose error bound exceeds this count as unconverged.
const CONVERGENCE_TOL: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] tcqueue::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Json(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Analytic,
    Mc,
    Both,
}

impl Method {
    fn analytic(self) -> bool {
        self != Method::Mc
    }
    fn mc(self) -> bool {
        self != Method::Analytic
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Reading {
    Alpha,
    A,
}

#[derive(Parser, Debug)]
#[command(name = "tcqueue", version, about = "Time-changed Erlang queues with batch arrivals")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed (overrides seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Nonzero exit when any validation fails.
    #[arg(long, global = true)]
    strict: bool,
    #[arg(long, global = true, value_enum, default_value = "analytic")]
    method: Method,
    /// Which θ power multiplies the first block (overrides theta_power_reading).
    #[arg(long, global = true, value_enum)]
    theta_power_reading: Option<Reading>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// State probabilities -> probs.csv
    Probs,
    /// Mean phase count and its Cauchy-problem residual -> mean.csv
    Mean,
    /// Busy-period CDF -> busy.csv
    Busy,
    /// Inter-event survival functions and KS report -> interevent.csv
    Interevent,
    /// Monte Carlo estimate table and raw samples
    Simulate,
    /// Acceptance checks -> validation_report.json
    Validate {
        /// Subset of criteria, e.g. 1,2,8.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
    },
}

/// What a command leaves behind for the exit code.
#[derive(Default)]
struct Status {
    unconverged: usize,
    failed_checks: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(st) => {
            if st.unconverged > 0 {
                eprintln!("{} value(s) did not converge (error bound > {CONVERGENCE_TOL:e})", st.unconverged);
                return ExitCode::from(3);
            }
            if cli.strict && st.failed_checks > 0 {
                eprintln!("{} check(s) failed", st.failed_checks);
                return ExitCode::from(4);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<Status, CliError> {
    let Some(path) = &cli.config else {
        return Err(CliError::Config("--config is required".into()));
    };
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(r) = cli.theta_power_reading {
        cfg.theta_power_reading = match r {
            Reading::A => ThetaReading::A,
            Reading::Alpha => ThetaReading::Alpha,
        };
    }
    std::fs::create_dir_all(&cfg.output_dir)?;
    let out = cfg.output_dir.clone();
    match &cli.cmd {
        Cmd::Probs => probs(&cfg, cli.method, &out),
        Cmd::Mean => mean(&cfg, &out),
        Cmd::Busy => busy(&cfg, cli.method, &out),
        Cmd::Interevent => interevent(&cfg, cli.method, &out),
        Cmd::Simulate => simulate(&cfg, &out),
        Cmd::Validate { criteria } => validate(&cfg, criteria, &out),
    }
}

fn t_max(times: &[f64]) -> f64 {
    times.iter().copied().fold(0.0, f64::max)
}

fn state_cells(j: usize, k: usize) -> [Cell; 3] {
    let sp = phase_inverse(j, k);
    [sp.n.into(), sp.s.into(), j.into()]
}

fn probs(cfg: &RunConfig, method: Method, out: &Path) -> Result<Status, CliError> {
    let mut st = Status::default();
    let k = cfg.queue.k;
    let mut tab = Table::new(&["t", "n", "s", "phase_index", "prob", "err", "method"]);
    let push = |tab: &mut Table, t: f64, j: usize, p: f64, e: f64, m: &str| {
        let [n, s, idx] = state_cells(j, k);
        tab.row(vec![t.into(), n, s, idx, p.into(), e.into(), m.into()]);
    };
    if method.analytic() {
        let ctx = cfg.context()?;
        let ev = Evaluator::new(&ctx, t_max(&cfg.times))?;
        for &t in &cfg.times {
            let snap = ev.snapshot(t)?;
            for j in 0..=cfg.max_state {
                let e = snap.queue_length_prob(j);
                if !(e.error <= CONVERGENCE_TOL) {
                    st.unconverged += 1;
                }
                push(&mut tab, t, j, e.value, e.error, "analytic");
            }
        }
        if cfg.time_change == TimeChange::None {
            let u = transient_uniformization_grid(&cfg.queue, &cfg.times, default_cap(&cfg.queue, t_max(&cfg.times)), 1e-13)?;
            for (i, &t) in cfg.times.iter().enumerate() {
                for j in 0..=cfg.max_state {
                    let (p, e) = u.get(i, j).unwrap_or((0.0, u.lost_mass[i]));
                    push(&mut tab, t, j, p, e, "uniformization-limit");
                }
            }
        }
    }
    if method.mc() {
        let sim = simulate_time_changed(&cfg.sim_plan(cfg.times.clone(), cfg.max_state)?, false)?;
        let m = &sim.estimates.table;
        for (i, &t) in m.times.iter().enumerate() {
            for j in 0..=cfg.max_state {
                push(&mut tab, t, j, m.probs[i][j], m.err[i][j], "montecarlo");
            }
        }
    }
    tab.write(&out.join("probs.csv"))?;
    Ok(st)
}

fn mean(cfg: &RunConfig, out: &Path) -> Result<Status, CliError> {
    let mut st = Status::default();
    let ctx = cfg.context()?;
    let tm = t_max(&cfg.times);
    let ev = Evaluator::new(&ctx, tm)?;
    // Residuals on a 1e-3 grid reaching two nodes past the last time.
    let h = 1e-3;
    let grid = ResidualGrid::new(((tm / h).round() + 2.0).max(4.0) * h, ((tm / h).round() as usize + 3).max(5))?;
    let interior: Vec<f64> = cfg.times.iter().copied().filter(|&t| grid.interior_index(t).is_ok()).collect();
    let data = match interior.last() {
        Some(&last) => Some(sample_series(&ctx, &grid, last, 1, &[], cfg.simulation.exec)?),
        None => None,
    };
    let fp = FracParams::new(ctx.theta(), ctx.alpha())?;
    let mut tab = Table::new(&["t", "mean_phases", "err", "residual"]);
    for &t in &cfg.times {
        let m = ev.snapshot(t)?.mean_queue_length()?;
        if !(m.error <= CONVERGENCE_TOL) {
            st.unconverged += 1;
        }
        let res = match &data {
            Some(d) if interior.contains(&t) => Some(mean_residual_sampled(&cfg.queue, fp, d, t)?.residual),
            _ => None,
        };
        tab.row(vec![t.into(), m.value.into(), m.error.into(), res.into()]);
    }
    tab.write(&out.join("mean.csv"))?;
    Ok(st)
}

#[derive(Serialize)]
struct BusyReport {
    a: usize,
    n_paths: usize,
    horizon: f64,
    completed: usize,
    beyond_horizon: usize,
    censored: usize,
}

fn busy(cfg: &RunConfig, method: Method, out: &Path) -> Result<Status, CliError> {
    let mut st = Status::default();
    let Some(b) = &cfg.busy else {
        return Err(CliError::Config("busy needs a \"busy\" section".into()));
    };
    let analytic = if method.analytic() {
        let ctx = cfg.context()?;
        let ev = Evaluator::new(&ctx, t_max(&b.times))?;
        let mut v = Vec::new();
        for &t in &b.times {
            let f = ev.snapshot(t)?.busy_period_cdf(b.a, &ctx.cfg)?;
            if !(f.error <= CONVERGENCE_TOL) {
                st.unconverged += 1;
            }
            v.push(Some(f));
        }
        v
    } else {
        vec![None; b.times.len()]
    };
    let sim = if method.mc() {
        let horizon = t_max(&b.times).max(f64::MIN_POSITIVE);
        let s = simulate_busy_period(&cfg.queue, cfg.time_change, b.a, horizon, b.n_paths, cfg.seed, cfg.simulation.exec)?;
        csv::write_floats(&out.join("busy_samples.txt"), &s.samples)?;
        let rep = BusyReport {
            a: b.a,
            n_paths: s.n,
            horizon,
            completed: s.samples.len(),
            beyond_horizon: s.beyond_horizon,
            censored: s.censored,
        };
        std::fs::write(out.join("busy_report.json"), serde_json::to_string_pretty(&rep)?)?;
        Some(s)
    } else {
        None
    };
    let mut tab = Table::new(&["t", "a", "cdf", "err", "mc_cdf", "mc_stderr"]);
    for (&t, f) in b.times.iter().zip(analytic) {
        let (mc, se) = match &sim {
            Some(s) => {
                let p = s.ecdf(t);
                (Some(p), Some((p * (1.0 - p) / s.n as f64).sqrt()))
            }
            None => (None, None),
        };
        tab.row(vec![t.into(), b.a.into(), f.map(|f| f.value).into(), f.map(|f| f.error).into(), mc.into(), se.into()]);
    }
    tab.write(&out.join("busy.csv"))?;
    Ok(st)
}

#[derive(Serialize)]
struct KsEntry {
    stream: &'static str,
    rate: f64,
    ks: KsResult,
    lag1_autocorrelation: f64,
    lag1_bound: f64,
}

fn interevent(cfg: &RunConfig, method: Method, out: &Path) -> Result<Status, CliError> {
    let mut st = Status::default();
    let Some(ie) = &cfg.interevent else {
        return Err(CliError::Config("interevent needs an \"interevent\" section".into()));
    };
    if cfg.queue.l() != 1 {
        return Err(CliError::Config("inter-event laws need single arrivals (one entry in lambdas)".into()));
    }
    let ctx = cfg.context()?;
    let streams = [("arrival", InterEvent::Arrival), ("phase", InterEvent::Phase), ("sojourn", InterEvent::Sojourn)];
    let laws = streams
        .iter()
        .map(|(_, s)| SurvivalLaw::new(&ctx, s.rate(&cfg.queue)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut tab = Table::new(&["t", "survival_arrival", "survival_phase", "survival_sojourn"]);
    for &t in &ie.times {
        let mut row = vec![Cell::from(t)];
        for law in &laws {
            let e = law.at(t)?;
            if !(e.error <= CONVERGENCE_TOL) {
                st.unconverged += 1;
            }
            row.push(e.value.into());
        }
        tab.row(row);
    }
    tab.write(&out.join("interevent.csv"))?;
    if method.mc() {
        let s = collect_inter_event_times(&cfg.queue, cfg.time_change, ie.samples, cfg.seed, cfg.simulation.exec)?;
        let bound = 3.0 / (ie.samples as f64).sqrt();
        let mut report = Vec::new();
        for (((name, kind), law), xs) in streams.iter().zip(&laws).zip([&s.arrival, &s.phase, &s.sojourn]) {
            csv::write_floats(&out.join(format!("interevent_{name}_samples.txt")), xs)?;
            let (ks, _) = ks_against_survival(xs, law, ie.level)?;
            let lag = lag1_autocorrelation(xs);
            if !ks.pass || lag.abs() >= bound {
                st.failed_checks += 1;
            }
            eprintln!("{name}: D = {:.5} (critical {:.5}, p = {:.3}), lag-1 {lag:+.4}", ks.d, ks.critical, ks.p_value);
            report.push(KsEntry { stream: name, rate: kind.rate(&cfg.queue), ks, lag1_autocorrelation: lag, lag1_bound: bound });
        }
        std::fs::write(out.join("interevent_ks.json"), serde_json::to_string_pretty(&report)?)?;
    }
    Ok(st)
}

#[derive(Serialize)]
struct SimReport {
    n_paths: usize,
    fine_step: f64,
    coarse_step: Option<f64>,
    /// Largest |fine − coarse| in fine standard errors, entries with p ≥ 0.01.
    halving_shift_sigma: Option<f64>,
    regenerated: usize,
    time_change: TimeChange,
}

fn estimate_rows(tab: &mut Table, est: &EstimateTable, k: usize) {
    let m = &est.table;
    for (i, &t) in m.times.iter().enumerate() {
        for (j, &state) in m.states.iter().enumerate() {
            let [n, s, idx] = state_cells(state, k);
            tab.row(vec![t.into(), n, s, idx, m.probs[i][j].into(), m.err[i][j].into(), est.step.into()]);
        }
    }
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<Status, CliError> {
    let plan = cfg.sim_plan(cfg.times.clone(), cfg.max_state)?;
    let sim = simulate_time_changed(&plan, true)?;
    let k = cfg.queue.k;
    let mut tab = Table::new(&["t", "n", "s", "phase_index", "prob", "std_err", "step"]);
    let mut means = Table::new(&["t", "mean_phases", "std_err", "lost_mass", "step"]);
    for est in std::iter::once(&sim.estimates).chain(sim.coarse.as_ref()) {
        estimate_rows(&mut tab, est, k);
        for (i, &t) in est.table.times.iter().enumerate() {
            let m = est.mean[i];
            means.row(vec![t.into(), m.value.into(), m.error.into(), est.table.lost_mass[i].into(), est.step.into()]);
        }
    }
    tab.write(&out.join("estimates.csv"))?;
    means.write(&out.join("estimates_mean.csv"))?;
    if let Some(raw) = &sim.raw {
        for (i, &t) in plan.times.iter().enumerate() {
            let name = format!("raw_states_t{}.txt", csv::num(t));
            csv::write_column(&out.join(name), raw.iter().map(|path| path[i]))?;
        }
    }
    let rep = SimReport {
        n_paths: plan.n_paths,
        fine_step: sim.estimates.step,
        coarse_step: sim.coarse.as_ref().map(|c| c.step),
        halving_shift_sigma: sim.halving_shift(1e-2),
        regenerated: sim.regenerated,
        time_change: plan.time_change,
    };
    std::fs::write(out.join("simulate_report.json"), serde_json::to_string_pretty(&rep)?)?;
    Ok(Status::default())
}

fn validate(cfg: &RunConfig, criteria: &[u8], out: &Path) -> Result<Status, CliError> {
    let vc = cfg.validation_config()?;
    let ids: Vec<u8> = if criteria.is_empty() { CRITERIA.iter().map(|c| c.0).collect() } else { criteria.to_vec() };
    let report = run_selected(&vc, &ids)?;
    for c in &report.criteria {
        let mark = if c.passed { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {mark} {}: {}", c.id, c.name, c.detail);
    }
    std::fs::write(out.join("validation_report.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(Status { unconverged: 0, failed_checks: report.criteria.iter().filter(|c| !c.passed).count() })
}
