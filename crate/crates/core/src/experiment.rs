//! Monte Carlo ensembles: sample-mean estimates of the mean-square tracking
//! and velocity-estimation errors, their standard errors, and summary
//! convergence metrics.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::format::num;
use crate::sim::{run_trial, IntegratorConfig, Scenario, TrialOutcome};

/// Trials are simulated in parallel in blocks of this size and folded into
/// the statistics in trial order, so results do not depend on thread count.
const BLOCK: usize = 64;

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub trials: usize,
    pub scenario: Scenario,
    /// `integrator.seed` is the base seed; trial `i` uses stream `i`.
    pub integrator: IntegratorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergedTrial {
    pub trial: u64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub n: usize,
    pub times: Vec<f64>,
    /// `E[(x_i − x₀)²]`, indexed `[sample][agent]`.
    pub msq_position: Vec<Vec<f64>>,
    /// `E[(v_i − v₀)²]` with `v_i = α v̄_i`, indexed `[sample][agent]`.
    pub msq_velocity: Vec<Vec<f64>>,
    pub mean_lyapunov: Vec<f64>,
    pub se_position: Vec<Vec<f64>>,
    pub se_velocity: Vec<Vec<f64>>,
    pub se_lyapunov: Vec<f64>,
    pub trials: usize,
    pub completed: usize,
    pub diverged: Vec<DivergedTrial>,
}

/// Welford accumulator over a fixed number of slots.
struct Moments {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(slots: usize) -> Self {
        Self { count: 0, mean: vec![0.0; slots], m2: vec![0.0; slots] }
    }

    fn push(&mut self, values: &[f64]) {
        self.count += 1;
        let c = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(values) {
            let d = v - *m;
            *m += d / c;
            *s += d * (v - *m);
        }
    }

    fn standard_errors(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.mean.len()];
        }
        let c = self.count as f64;
        self.m2.iter().map(|s| (s / (c - 1.0) / c).max(0.0).sqrt()).collect()
    }
}

/// Squared errors of one trial laid out per sample as
/// `(x̄₁² … x̄_n², (αv̄₁)² … (αv̄_n)², V)`.
fn trial_squares(scenario: &Scenario, outcome: &TrialOutcome) -> Vec<f64> {
    let rec = &outcome.record;
    let n = rec.n;
    let mut out = Vec::with_capacity(rec.len() * (2 * n + 1));
    for k in 0..rec.len() {
        let a = scenario.alpha.value(rec.times[k]);
        let eps = &rec.errors[k];
        out.extend(eps[..n].iter().map(|e| e * e));
        out.extend(eps[n..].iter().map(|e| (a * e) * (a * e)));
        out.push(rec.lyapunov[k]);
    }
    out
}

/// Runs `cfg.trials` independent trials and returns per-sample means and
/// standard errors. Divergent trials are left out of the means and listed in
/// `diverged`.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<EnsembleStats> {
    if cfg.trials == 0 {
        return Err(Error::InvalidParameter("ensemble needs at least one trial".into()));
    }
    let n = cfg.scenario.n();
    let width = 2 * n + 1;
    let mut times: Option<Vec<f64>> = None;
    let mut moments: Option<Moments> = None;
    let mut diverged = Vec::new();

    for block_start in (0..cfg.trials).step_by(BLOCK) {
        let block_end = (block_start + BLOCK).min(cfg.trials);
        let outcomes: Vec<Result<TrialOutcome>> = (block_start..block_end)
            .into_par_iter()
            .map(|i| run_trial(&cfg.scenario, &cfg.integrator, i as u64))
            .collect();
        for (offset, outcome) in outcomes.into_iter().enumerate() {
            let outcome = outcome?;
            let trial = (block_start + offset) as u64;
            if let Some(t) = outcome.diverged_at {
                diverged.push(DivergedTrial { trial, t });
                continue;
            }
            let squares = trial_squares(&cfg.scenario, &outcome);
            let acc = moments.get_or_insert_with(|| Moments::new(squares.len()));
            times.get_or_insert_with(|| outcome.record.times.clone());
            acc.push(&squares);
        }
    }

    let times = times.unwrap_or_default();
    let (means, ses, completed) = match &moments {
        Some(m) => (m.mean.clone(), m.standard_errors(), m.count),
        None => (vec![], vec![], 0),
    };
    let split = |flat: &[f64], offset: usize, len: usize| -> Vec<Vec<f64>> {
        flat.chunks(width).map(|row| row[offset..offset + len].to_vec()).collect()
    };
    Ok(EnsembleStats {
        n,
        msq_position: split(&means, 0, n),
        msq_velocity: split(&means, n, n),
        mean_lyapunov: means.chunks(width).map(|row| row[2 * n]).collect(),
        se_position: split(&ses, 0, n),
        se_velocity: split(&ses, n, n),
        se_lyapunov: ses.chunks(width).map(|row| row[2 * n]).collect(),
        times,
        trials: cfg.trials,
        completed,
        diverged,
    })
}

impl EnsembleStats {
    pub fn csv_header(&self) -> String {
        let n = self.n;
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=n).map(|i| format!("msq_x_{i}")));
        cols.extend((1..=n).map(|i| format!("msq_v_{i}")));
        cols.push("mean_V".into());
        cols.extend((1..=n).map(|i| format!("se_x_{i}")));
        cols.extend((1..=n).map(|i| format!("se_v_{i}")));
        cols.push("se_V".into());
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for k in 0..self.times.len() {
            let row = std::iter::once(self.times[k])
                .chain(self.msq_position[k].iter().copied())
                .chain(self.msq_velocity[k].iter().copied())
                .chain(std::iter::once(self.mean_lyapunov[k]))
                .chain(self.se_position[k].iter().copied())
                .chain(self.se_velocity[k].iter().copied())
                .chain(std::iter::once(self.se_lyapunov[k]));
            let cells: Vec<String> = row.map(num).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricOptions {
    /// Moving-average window, in samples.
    pub window: usize,
    /// Only moving-average windows lying entirely at or after this time are
    /// counted towards the monotone fraction.
    pub after: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self { window: 10, after: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentMetrics {
    /// 1-based follower label.
    pub agent: usize,
    pub position_ratio: Option<f64>,
    pub velocity_ratio: Option<f64>,
    pub position_t50: Option<f64>,
    pub position_t10: Option<f64>,
    pub velocity_t50: Option<f64>,
    pub velocity_t10: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceSummary {
    pub agents: Vec<AgentMetrics>,
    pub lyapunov_ratio: Option<f64>,
    pub monotone_fraction: f64,
    pub options: MetricOptions,
    pub final_time: f64,
    pub trials: usize,
    pub completed: usize,
    pub diverged: usize,
}

fn ratio(last: f64, first: f64) -> Option<f64> {
    (first > 0.0).then(|| last / first)
}

/// First sampled time at which `series` drops to `fraction` of its initial value.
fn time_to_fraction(times: &[f64], series: impl Iterator<Item = f64> + Clone, fraction: f64) -> Option<f64> {
    let first = series.clone().next()?;
    if !(first > 0.0) {
        return None;
    }
    times.iter().zip(series).find(|(_, v)| *v <= fraction * first).map(|(t, _)| *t)
}

/// Fraction of consecutive trailing moving averages of `values` that do not
/// increase, counting only windows that start at or after `after`. Returns 1
/// when no pair qualifies.
pub fn monotone_fraction(times: &[f64], values: &[f64], window: usize, after: f64) -> f64 {
    let w = window.max(1);
    if values.len() <= w {
        return 1.0;
    }
    let ma = |end: usize| values[end + 1 - w..=end].iter().sum::<f64>() / w as f64;
    let (mut total, mut ok) = (0usize, 0usize);
    for j in w..values.len() {
        if times[j - w] < after {
            continue;
        }
        total += 1;
        if ma(j) <= ma(j - 1) {
            ok += 1;
        }
    }
    if total == 0 {
        1.0
    } else {
        ok as f64 / total as f64
    }
}

pub fn convergence_metrics(stats: &EnsembleStats, opts: MetricOptions) -> Result<ConvergenceSummary> {
    if stats.times.is_empty() {
        return Err(Error::InvalidParameter("no samples to summarise".into()));
    }
    let last = stats.times.len() - 1;
    let agents = (0..stats.n)
        .map(|i| {
            let pos = stats.msq_position.iter().map(move |row| row[i]);
            let vel = stats.msq_velocity.iter().map(move |row| row[i]);
            AgentMetrics {
                agent: i + 1,
                position_ratio: ratio(stats.msq_position[last][i], stats.msq_position[0][i]),
                velocity_ratio: ratio(stats.msq_velocity[last][i], stats.msq_velocity[0][i]),
                position_t50: time_to_fraction(&stats.times, pos.clone(), 0.5),
                position_t10: time_to_fraction(&stats.times, pos, 0.1),
                velocity_t50: time_to_fraction(&stats.times, vel.clone(), 0.5),
                velocity_t10: time_to_fraction(&stats.times, vel, 0.1),
            }
        })
        .collect();
    Ok(ConvergenceSummary {
        agents,
        lyapunov_ratio: ratio(stats.mean_lyapunov[last], stats.mean_lyapunov[0]),
        monotone_fraction: monotone_fraction(&stats.times, &stats.mean_lyapunov, opts.window, opts.after),
        options: opts,
        final_time: stats.times[last],
        trials: stats.trials,
        completed: stats.completed,
        diverged: stats.diverged.len(),
    })
}

/// The built-in three-follower example: two alternating topologies,
/// `α(t) = 1/(t+1)`, `γ = 0.8`, `k = 6`, unit intensity on every link.
pub fn paper_scenario() -> RunConfig {
    RunConfig::paper()
}
