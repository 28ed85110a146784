//! Fixed-step Euler–Maruyama integration of the closed loop under a
//! piecewise-constant switching schedule.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::num;
use crate::leader::{AlphaFunction, LeaderProfile};
use crate::protocol::{noise_dim, AgentModel, ErrorState, FullState, NoiseModel};
use crate::spectral::GainParameters;
use crate::topology::DirectedTopology;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub topology: usize,
    pub start: f64,
    pub end: f64,
}

/// Contiguous right-open segments `[start, end)`, each at least `dwell` long.
/// The last segment may be shorter when it is cut off by the horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchingSchedule {
    n_topologies: usize,
    segments: Vec<Segment>,
    dwell: f64,
}

impl SwitchingSchedule {
    pub fn new(n_topologies: usize, segments: Vec<Segment>, dwell: f64) -> Result<Self> {
        if !(dwell.is_finite() && dwell > 0.0) {
            return Err(Error::Schedule(format!("dwell time {dwell} must be positive")));
        }
        if segments.is_empty() {
            return Err(Error::Schedule("schedule has no segments".into()));
        }
        let last = segments.len() - 1;
        for (idx, s) in segments.iter().enumerate() {
            if s.topology >= n_topologies {
                return Err(Error::Schedule(format!(
                    "segment {idx} uses topology {} but only {n_topologies} exist",
                    s.topology
                )));
            }
            if !(s.start.is_finite() && s.end.is_finite() && s.end > s.start) {
                return Err(Error::Schedule(format!("segment {idx} is empty or not finite")));
            }
            if idx < last && s.end - s.start < dwell - TIME_EPS {
                return Err(Error::Schedule(format!(
                    "segment {idx} lasts {} < dwell time {dwell}",
                    s.end - s.start
                )));
            }
            if idx > 0 && (segments[idx - 1].end - s.start).abs() > TIME_EPS {
                return Err(Error::Schedule(format!(
                    "segment {idx} starts at {} but previous ends at {}",
                    s.start,
                    segments[idx - 1].end
                )));
            }
        }
        Ok(Self { n_topologies, segments, dwell })
    }

    /// Cycles through `order` with segments of length `period`, starting at 0
    /// and covering `[0, horizon]`.
    pub fn periodic(n_topologies: usize, order: &[usize], period: f64, horizon: f64) -> Result<Self> {
        if order.is_empty() {
            return Err(Error::Schedule("switching order is empty".into()));
        }
        if !(period.is_finite() && period > 0.0 && horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Schedule("period and horizon must be positive".into()));
        }
        let count = ((horizon / period) - TIME_EPS).ceil().max(1.0) as usize;
        let segments = (0..count)
            .map(|j| Segment {
                topology: order[j % order.len()],
                start: j as f64 * period,
                end: if j + 1 == count { horizon } else { (j + 1) as f64 * period },
            })
            .collect();
        Self::new(n_topologies, segments, period)
    }

    /// One topology for the whole horizon.
    pub fn fixed(horizon: f64) -> Result<Self> {
        Self::periodic(1, &[0], horizon, horizon)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn dwell(&self) -> f64 {
        self.dwell
    }

    pub fn n_topologies(&self) -> usize {
        self.n_topologies
    }

    pub fn start(&self) -> f64 {
        self.segments[0].start
    }

    pub fn end(&self) -> f64 {
        self.segments[self.segments.len() - 1].end
    }

    /// Index of the topology active at `t`. The final instant belongs to the
    /// last segment.
    pub fn active_topology(&self, t: f64) -> Result<usize> {
        let (start, end) = (self.start(), self.end());
        if !(t >= start && t <= end) {
            return Err(Error::OutOfRange { t, start, end });
        }
        let idx = self.segments.partition_point(|s| s.end <= t).min(self.segments.len() - 1);
        Ok(self.segments[idx].topology)
    }

    /// `(first step, topology)` pairs with switch times snapped to the nearest
    /// multiple of `dt`.
    fn step_plan(&self, dt: f64) -> Vec<(usize, usize)> {
        let mut plan: Vec<(usize, usize)> = Vec::with_capacity(self.segments.len());
        for s in &self.segments {
            let step = ((s.start - self.start()) / dt).round() as usize;
            match plan.last_mut() {
                Some(last) if last.0 == step => last.1 = s.topology,
                _ => plan.push((step, s.topology)),
            }
        }
        plan
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimMode {
    #[serde(rename = "error", alias = "error_system")]
    ErrorSystem,
    #[serde(rename = "full", alias = "full_system")]
    FullSystem,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub horizon: f64,
    pub sample_stride: usize,
    pub seed: u64,
    pub mode: SimMode,
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon = {} must be positive", self.horizon)));
        }
        if self.sample_stride == 0 {
            return Err(Error::InvalidParameter("sample_stride must be >= 1".into()));
        }
        let steps = self.horizon / self.dt;
        if (steps - steps.round()).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "horizon {} is not a whole number of steps of {}",
                self.horizon, self.dt
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// Everything a trial needs besides integrator settings.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub topologies: Vec<DirectedTopology>,
    pub schedule: SwitchingSchedule,
    pub alpha: AlphaFunction,
    pub leader: LeaderProfile,
    pub noise: NoiseModel,
    pub params: GainParameters,
    /// Initial tracking error `ε(0)`, length `2n`.
    pub initial: Vec<f64>,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.topologies[0].n()
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.topologies.first() else {
            return Err(Error::InvalidTopology("scenario has no topologies".into()));
        };
        let n = first.n();
        if self.topologies.iter().any(|t| t.n() != n) {
            return Err(Error::Dimension("all topologies must have the same follower count".into()));
        }
        if self.schedule.n_topologies() != self.topologies.len() {
            return Err(Error::Schedule(format!(
                "schedule indexes {} topologies, scenario has {}",
                self.schedule.n_topologies(),
                self.topologies.len()
            )));
        }
        if self.noise.n() != n {
            return Err(Error::Dimension(format!("noise model must cover {n} followers")));
        }
        if self.initial.len() != 2 * n {
            return Err(Error::Dimension(format!("initial error must have {} entries", 2 * n)));
        }
        if self.initial.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("initial error must be finite".into()));
        }
        self.leader.nominal.validate()
    }

    pub fn models(&self) -> Result<Vec<AgentModel>> {
        self.topologies.iter().map(|t| AgentModel::new(t, &self.noise)).collect()
    }
}

/// Gaussian increments for one trial. The generator is keyed by the base
/// seed and uses the trial index as its stream id; within a trial each step
/// draws all `n(n+1)` channels in layout order, so the increment for
/// `(step, channel)` is fixed by `(seed, trial)` alone.
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, trial: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        Self { rng }
    }

    /// Fills `out` with independent `N(0, dt)` draws.
    pub fn fill_increments(&mut self, dt: f64, out: &mut [f64]) {
        let sd = dt.sqrt();
        for w in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *w = sd * z;
        }
    }
}

/// Per-step context handed to an [`SdeSystem`].
#[derive(Debug, Clone, Copy)]
pub struct StepContext {
    pub t: f64,
    pub topology: usize,
}

/// `dX = f(t, X) dt + G(t) dW` with state-independent loading `G`.
pub trait SdeSystem {
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn drift(&self, ctx: StepContext, x: &[f64], out: &mut [f64]);
    /// Adds `G(t)·dw` to `out`.
    fn add_diffusion(&self, ctx: StepContext, dw: &[f64], out: &mut [f64]);
}

/// One Euler–Maruyama step with a given Brownian increment, in place.
pub fn em_step_in_place<S: SdeSystem + ?Sized>(
    sys: &S,
    state: &mut [f64],
    ctx: StepContext,
    dt: f64,
    dw: &[f64],
    scratch: &mut [f64],
) -> Result<()> {
    sys.drift(ctx, state, scratch);
    for (s, d) in state.iter_mut().zip(scratch.iter()) {
        *s += d * dt;
    }
    sys.add_diffusion(ctx, dw, state);
    if state.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { t: ctx.t + dt })
    }
}

/// `state + f(t, state)·dt + G(t)·ΔW`.
pub fn em_step_with_increment<S: SdeSystem + ?Sized>(
    sys: &S,
    state: &[f64],
    ctx: StepContext,
    dt: f64,
    dw: &[f64],
) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    let mut next = state.to_vec();
    let mut scratch = vec![0.0; state.len()];
    em_step_in_place(sys, &mut next, ctx, dt, dw, &mut scratch)?;
    Ok(next)
}

/// Euler–Maruyama step drawing `ΔW` from `noise`.
pub fn em_step<S: SdeSystem + ?Sized>(
    sys: &S,
    state: &[f64],
    ctx: StepContext,
    dt: f64,
    noise: &mut NoiseStream,
) -> Result<Vec<f64>> {
    let mut dw = vec![0.0; sys.noise_dim()];
    noise.fill_increments(dt, &mut dw);
    em_step_with_increment(sys, state, ctx, dt, &dw)
}

/// Tracking-error system `dε = F_σ ε dt + Ω_σ dW`.
pub struct ErrorSystem<'a> {
    pub models: &'a [AgentModel],
    pub alpha: AlphaFunction,
    pub params: GainParameters,
}

impl SdeSystem for ErrorSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.models[0].n()
    }

    fn noise_dim(&self) -> usize {
        noise_dim(self.models[0].n())
    }

    fn drift(&self, ctx: StepContext, x: &[f64], out: &mut [f64]) {
        self.models[ctx.topology].error_drift_into(x, self.alpha.value(ctx.t), &self.params, out);
    }

    fn add_diffusion(&self, ctx: StepContext, dw: &[f64], out: &mut [f64]) {
        self.models[ctx.topology].add_noise(dw, self.alpha.value(ctx.t), &self.params, out);
    }
}

/// Full closed loop on `(x, v̂, x₀, v̄₀)`. The leader is integrated with the
/// same scheme as the followers, so the difference with [`ErrorSystem`] under
/// identical increments is round-off only.
pub struct FullSystem<'a> {
    pub models: &'a [AgentModel],
    pub alpha: AlphaFunction,
    pub leader: &'a LeaderProfile,
    pub params: GainParameters,
}

impl SdeSystem for FullSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.models[0].n() + 2
    }

    fn noise_dim(&self) -> usize {
        noise_dim(self.models[0].n())
    }

    fn drift(&self, ctx: StepContext, x: &[f64], out: &mut [f64]) {
        let a_bar0 = self.leader.nominal_acceleration(ctx.t);
        self.models[ctx.topology].full_drift_into(x, self.alpha.value(ctx.t), a_bar0, &self.params, out);
    }

    fn add_diffusion(&self, ctx: StepContext, dw: &[f64], out: &mut [f64]) {
        self.models[ctx.topology].add_noise(dw, self.alpha.value(ctx.t), &self.params, out);
    }
}

/// `V = εᵀPε` with `P = [[I, −γI], [−γI, I]]`.
pub fn lyapunov_value(eps: &[f64], gamma: f64) -> f64 {
    let n = eps.len() / 2;
    let (x, v) = eps.split_at(n);
    x.iter().zip(v).map(|(x, v)| x * x + v * v - 2.0 * gamma * x * v).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub mode: SimMode,
    pub n: usize,
    pub times: Vec<f64>,
    /// Raw integrator state: `ε` in error mode, `(x, v̂, x₀, v̄₀)` in full mode.
    pub states: Vec<Vec<f64>>,
    /// Tracking error `ε` at each sample, in both modes.
    pub errors: Vec<Vec<f64>>,
    pub lyapunov: Vec<f64>,
    /// Leader `(x₀, v₀)` at each sample, full mode only.
    pub leader: Vec<(f64, f64)>,
}

impl TrajectoryRecord {
    fn new(mode: SimMode, n: usize) -> Self {
        Self { mode, n, times: vec![], states: vec![], errors: vec![], lyapunov: vec![], leader: vec![] }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn csv_header(&self) -> String {
        let n = self.n;
        let mut cols = vec!["t".to_string()];
        match self.mode {
            SimMode::ErrorSystem => cols.extend((1..=2 * n).map(|i| format!("eps_{i}"))),
            SimMode::FullSystem => {
                cols.extend((1..=n).map(|i| format!("x_{i}")));
                cols.extend((1..=n).map(|i| format!("vhat_{i}")));
                cols.push("x0".into());
                cols.push("v0".into());
            }
        }
        cols.push("V".into());
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for k in 0..self.len() {
            out.push_str(&num(self.times[k]));
            let n = self.n;
            let values: &[f64] = match self.mode {
                SimMode::ErrorSystem => &self.states[k],
                SimMode::FullSystem => &self.states[k][..2 * n],
            };
            for v in values {
                let _ = write!(out, ",{}", num(*v));
            }
            if self.mode == SimMode::FullSystem {
                let (x0, v0) = self.leader[k];
                let _ = write!(out, ",{},{}", num(x0), num(v0));
            }
            let _ = writeln!(out, ",{}", num(self.lyapunov[k]));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub record: TrajectoryRecord,
    /// Time at which the state became non-finite; the record stops there.
    pub diverged_at: Option<f64>,
}

impl TrialOutcome {
    pub fn into_result(self) -> Result<TrajectoryRecord> {
        match self.diverged_at {
            None => Ok(self.record),
            Some(t) => Err(Error::Divergence { t }),
        }
    }
}

/// Runs one Euler–Maruyama trial over `[0, horizon]`.
///
/// Configuration errors are returned as `Err`; divergence is reported in the
/// outcome together with the samples recorded up to that point.
pub fn run_trial(scenario: &Scenario, config: &IntegratorConfig, trial: u64) -> Result<TrialOutcome> {
    scenario.validate()?;
    config.validate()?;
    let schedule = &scenario.schedule;
    if config.dt > schedule.dwell() + TIME_EPS {
        return Err(Error::Schedule(format!(
            "dt = {} exceeds the dwell time {}",
            config.dt,
            schedule.dwell()
        )));
    }
    if schedule.start().abs() > TIME_EPS || schedule.end() < config.horizon - TIME_EPS {
        return Err(Error::Schedule(format!(
            "schedule covers [{}, {}] but the horizon is [0, {}]",
            schedule.start(),
            schedule.end(),
            config.horizon
        )));
    }

    let n = scenario.n();
    let models = scenario.models()?;
    let gamma = scenario.params.gamma();
    let alpha = scenario.alpha;
    let leader = &scenario.leader;

    let mut state = match config.mode {
        SimMode::ErrorSystem => scenario.initial.clone(),
        SimMode::FullSystem => {
            let eps = ErrorState::from_flat(&scenario.initial)?;
            FullState::from_error(&eps, leader.x0, leader.nominal_velocity(0.0)).to_flat()
        }
    };

    let error_sys = ErrorSystem { models: &models, alpha, params: scenario.params };
    let full_sys = FullSystem { models: &models, alpha, leader, params: scenario.params };
    let sys: &dyn SdeSystem = match config.mode {
        SimMode::ErrorSystem => &error_sys,
        SimMode::FullSystem => &full_sys,
    };

    let mut record = TrajectoryRecord::new(config.mode, n);
    let push = |record: &mut TrajectoryRecord, t: f64, state: &[f64]| {
        let eps: Vec<f64> = match config.mode {
            SimMode::ErrorSystem => state.to_vec(),
            SimMode::FullSystem => {
                let (x0, vb0) = (state[2 * n], state[2 * n + 1]);
                record.leader.push((x0, alpha.value(t) * vb0));
                (0..n).map(|i| state[i] - x0).chain((0..n).map(|i| state[n + i] - vb0)).collect()
            }
        };
        record.times.push(t);
        record.states.push(state.to_vec());
        record.lyapunov.push(lyapunov_value(&eps, gamma));
        record.errors.push(eps);
    };

    push(&mut record, 0.0, &state);
    let plan = schedule.step_plan(config.dt);
    let mut next_switch = 1;
    let mut topology = plan[0].1;
    let mut noise = NoiseStream::new(config.seed, trial);
    let mut dw = vec![0.0; sys.noise_dim()];
    let mut scratch = vec![0.0; state.len()];
    let steps = config.steps();

    for k in 0..steps {
        while next_switch < plan.len() && plan[next_switch].0 <= k {
            topology = plan[next_switch].1;
            next_switch += 1;
        }
        let t = k as f64 * config.dt;
        noise.fill_increments(config.dt, &mut dw);
        let ctx = StepContext { t, topology };
        if let Err(Error::Divergence { t }) = em_step_in_place(sys, &mut state, ctx, config.dt, &dw, &mut scratch) {
            return Ok(TrialOutcome { record, diverged_at: Some(t) });
        }
        if (k + 1) % config.sample_stride == 0 || k + 1 == steps {
            push(&mut record, (k + 1) as f64 * config.dt, &state);
        }
    }
    Ok(TrialOutcome { record, diverged_at: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant(f64);

    impl SdeSystem for Constant {
        fn dim(&self) -> usize {
            1
        }
        fn noise_dim(&self) -> usize {
            1
        }
        fn drift(&self, _: StepContext, _: &[f64], out: &mut [f64]) {
            out[0] = self.0;
        }
        fn add_diffusion(&self, _: StepContext, dw: &[f64], out: &mut [f64]) {
            out[0] += dw[0];
        }
    }

    const CTX: StepContext = StepContext { t: 0.0, topology: 0 };

    #[test]
    fn em_step_examples() {
        let next = em_step_with_increment(&Constant(3.0), &[1.0], CTX, 0.1, &[0.0]).unwrap();
        assert!((next[0] - 1.3).abs() < 1e-15);
        let next = em_step_with_increment(&Constant(0.0), &[1.0], CTX, 0.1, &[0.02]).unwrap();
        assert!((next[0] - 1.02).abs() < 1e-15);
        assert!(em_step_with_increment(&Constant(0.0), &[1.0], CTX, 0.0, &[0.0]).is_err());
        let err = em_step_with_increment(&Constant(f64::INFINITY), &[1.0], CTX, 0.1, &[0.0]).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn noise_stream_is_reproducible_and_trial_dependent() {
        let mut a = NoiseStream::new(7, 3);
        let mut b = NoiseStream::new(7, 3);
        let mut c = NoiseStream::new(7, 4);
        let (mut wa, mut wb, mut wc) = (vec![0.0; 12], vec![0.0; 12], vec![0.0; 12]);
        a.fill_increments(1e-3, &mut wa);
        b.fill_increments(1e-3, &mut wb);
        c.fill_increments(1e-3, &mut wc);
        assert_eq!(wa, wb);
        assert_ne!(wa, wc);
    }

    #[test]
    fn alternating_schedule_lookup() {
        let s = SwitchingSchedule::periodic(2, &[0, 1], 1.0, 10.0).unwrap();
        assert_eq!(s.active_topology(1.5).unwrap(), 1);
        assert_eq!(s.active_topology(0.0).unwrap(), 0);
        assert_eq!(s.active_topology(1.0).unwrap(), 1);
        assert_eq!(s.active_topology(2.0).unwrap(), 0);
        assert_eq!(s.active_topology(10.0).unwrap(), 1);
        assert!(matches!(s.active_topology(10.5), Err(Error::OutOfRange { .. })));
        assert!(s.active_topology(-0.1).is_err());
    }

    #[test]
    fn schedule_guards() {
        let seg = |topology, start, end| Segment { topology, start, end };
        assert!(SwitchingSchedule::new(2, vec![seg(0, 0.0, 0.5), seg(1, 0.5, 2.0)], 1.0).is_err());
        assert!(SwitchingSchedule::new(2, vec![seg(0, 0.0, 1.0), seg(1, 1.5, 3.0)], 1.0).is_err());
        assert!(SwitchingSchedule::new(1, vec![seg(0, 0.0, 1.0), seg(1, 1.0, 3.0)], 1.0).is_err());
        // A short final segment is a horizon cut, not a dwell violation.
        assert!(SwitchingSchedule::new(2, vec![seg(0, 0.0, 1.0), seg(1, 1.0, 1.2)], 1.0).is_ok());
        let p = SwitchingSchedule::periodic(2, &[0, 1], 1.0, 2.5).unwrap();
        assert_eq!(p.segments().len(), 3);
        assert_eq!(p.end(), 2.5);
    }

    #[test]
    fn step_plan_snaps_to_grid() {
        let seg = |topology, start, end| Segment { topology, start, end };
        let s = SwitchingSchedule::new(2, vec![seg(0, 0.0, 1.0004), seg(1, 1.0004, 3.0)], 1.0).unwrap();
        assert_eq!(s.step_plan(1e-3), vec![(0, 0), (1000, 1)]);
    }

    #[test]
    fn lyapunov_value_matches_quadratic_form() {
        let eps = [0.3, -1.2, 0.7, 2.0, 0.1, -0.4];
        let p = crate::spectral::switching_lyapunov_matrix(3, 0.8);
        let e = nalgebra::DVector::from_row_slice(&eps);
        let direct = (e.transpose() * &p * &e)[(0, 0)];
        assert!((lyapunov_value(&eps, 0.8) - direct).abs() < 1e-12);
    }
}
