//! Noisy relative measurements, the control/estimator law, the noise
//! loading matrix `Σ_σ`, and the drift and diffusion of both the full closed
//! loop and the tracking-error system.
//!
//! Noise channels are laid out as `(ω₁₀ … ω_n0, ω₁₁ … ω₁n, …, ω_n1 … ω_nn)`,
//! `n(n+1)` in total. Channels for absent links (including the `ω_ii`
//! self-terms) are kept and loaded with zero, so the layout does not change
//! when the topology switches.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::GainParameters;
use crate::topology::{build_coupling, DirectedTopology};

pub fn noise_dim(n: usize) -> usize {
    n * (n + 1)
}

pub fn leader_channel(i: usize) -> usize {
    i
}

pub fn follower_channel(n: usize, i: usize, j: usize) -> usize {
    n + i * n + j
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// `ϱ_i0`, one per follower.
    pub leader: Vec<f64>,
    /// `ϱ_ij`, `n × n`.
    pub followers: Vec<Vec<f64>>,
}

impl NoiseModel {
    pub fn new(leader: Vec<f64>, followers: Vec<Vec<f64>>) -> Result<Self> {
        let n = leader.len();
        if followers.len() != n || followers.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension(format!("follower intensities must be {n}x{n}")));
        }
        let bad = leader.iter().chain(followers.iter().flatten()).any(|v| !(v.is_finite() && *v >= 0.0));
        if bad {
            return Err(Error::InvalidParameter("noise intensities must be finite and >= 0".into()));
        }
        Ok(Self { leader, followers })
    }

    /// Intensity `value` on every possible link.
    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n], vec![vec![value; n]; n])
    }

    pub fn silent(n: usize) -> Self {
        Self { leader: vec![0.0; n], followers: vec![vec![0.0; n]; n] }
    }

    pub fn n(&self) -> usize {
        self.leader.len()
    }
}

/// `z_ij = a_ij (x_i − x_j + ϱ_ij ω_ij)`.
pub fn measure(a_ij: u8, x_i: f64, x_j: f64, rho_ij: f64, omega: f64) -> f64 {
    a_ij as f64 * (x_i - x_j + rho_ij * omega)
}

/// Returns `(u_i, dv̄_i/dt)` with `u_i = −kα Σz + α v̄_i` and
/// `dv̄_i/dt = ā₀ − γkα Σz`.
pub fn control_and_estimator(
    z_sum: f64,
    v_hat: f64,
    alpha_t: f64,
    a_bar0_t: f64,
    params: &GainParameters,
) -> (f64, f64) {
    let k = params.k();
    let u = -k * alpha_t * z_sum + alpha_t * v_hat;
    let dv = a_bar0_t - params.gamma() * k * alpha_t * z_sum;
    (u, dv)
}

/// `Σ_σ = [B_σΣ₀ | diag(a(1,·)Σ₁, …, a(n,·)Σ_n)]`, `n × n(n+1)`.
pub fn build_sigma(topo: &DirectedTopology, noise: &NoiseModel) -> Result<DMatrix<f64>> {
    let n = topo.n();
    if noise.n() != n {
        return Err(Error::Dimension(format!(
            "noise model has {} followers, topology has {n}",
            noise.n()
        )));
    }
    let mut sigma = DMatrix::zeros(n, noise_dim(n));
    for i in 0..n {
        sigma[(i, leader_channel(i))] = topo.leader_links()[i] as f64 * noise.leader[i];
        for j in 0..n {
            sigma[(i, follower_channel(n, i, j))] = topo.adjacency()[i][j] as f64 * noise.followers[i][j];
        }
    }
    Ok(sigma)
}

/// Tracking error `ε = (x − x₀1, v̄ − v̄₀1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorState {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl ErrorState {
    pub fn from_flat(eps: &[f64]) -> Result<Self> {
        if eps.len() % 2 != 0 || eps.is_empty() {
            return Err(Error::Dimension(format!("error state has odd length {}", eps.len())));
        }
        let n = eps.len() / 2;
        Ok(Self { position: eps[..n].to_vec(), velocity: eps[n..].to_vec() })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.position.iter().chain(&self.velocity).copied().collect()
    }
}

/// Follower positions and nominal-velocity estimates, plus the leader's
/// position and nominal velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub x: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub x0: f64,
    pub v_bar0: f64,
}

impl FullState {
    /// Flat layout `(x, v̂, x₀, v̄₀)`.
    pub fn from_flat(s: &[f64]) -> Result<Self> {
        if s.len() < 4 || s.len() % 2 != 0 {
            return Err(Error::Dimension(format!("full state has invalid length {}", s.len())));
        }
        let n = (s.len() - 2) / 2;
        Ok(Self { x: s[..n].to_vec(), v_hat: s[n..2 * n].to_vec(), x0: s[2 * n], v_bar0: s[2 * n + 1] })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.x.iter().chain(&self.v_hat).copied().collect();
        v.push(self.x0);
        v.push(self.v_bar0);
        v
    }

    pub fn from_error(eps: &ErrorState, x0: f64, v_bar0: f64) -> Self {
        Self {
            x: eps.position.iter().map(|e| e + x0).collect(),
            v_hat: eps.velocity.iter().map(|e| e + v_bar0).collect(),
            x0,
            v_bar0,
        }
    }

    pub fn to_error(&self) -> ErrorState {
        ErrorState {
            position: self.x.iter().map(|x| x - self.x0).collect(),
            velocity: self.v_hat.iter().map(|v| v - self.v_bar0).collect(),
        }
    }
}

/// One topology compiled for repeated evaluation: dense row-major `H`, the
/// leader-link diagonal, and the nonzero entries of each row of `Σ`.
#[derive(Debug, Clone)]
pub struct AgentModel {
    n: usize,
    coupling: Vec<f64>,
    leader: Vec<f64>,
    sigma_rows: Vec<Vec<(usize, f64)>>,
}

impl AgentModel {
    pub fn new(topo: &DirectedTopology, noise: &NoiseModel) -> Result<Self> {
        let n = topo.n();
        let c = build_coupling(topo);
        let sigma = build_sigma(topo, noise)?;
        let coupling = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| c.coupling[(i, j)]).collect();
        let leader = (0..n).map(|i| c.leader[(i, i)]).collect();
        let sigma_rows = (0..n)
            .map(|i| {
                (0..sigma.ncols())
                    .filter(|&col| sigma[(i, col)] != 0.0)
                    .map(|col| (col, sigma[(i, col)]))
                    .collect()
            })
            .collect();
        Ok(Self { n, coupling, leader, sigma_rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn h_row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let row = &self.coupling[i * self.n..(i + 1) * self.n];
        row.iter().zip(x).map(|(h, x)| h * x).sum()
    }

    /// `(Σ dw)_i`.
    pub fn sigma_row_dot(&self, i: usize, dw: &[f64]) -> f64 {
        self.sigma_rows[i].iter().map(|&(c, s)| s * dw[c]).sum()
    }

    /// `F_σ ε` written into `out` (length `2n`).
    pub fn error_drift_into(&self, eps: &[f64], alpha_t: f64, params: &GainParameters, out: &mut [f64]) {
        let n = self.n;
        let (xe, ve) = eps.split_at(n);
        let ka = params.k() * alpha_t;
        for i in 0..n {
            let hx = self.h_row_dot(i, xe);
            out[i] = -ka * hx + alpha_t * ve[i];
            out[n + i] = -params.gamma() * ka * hx;
        }
    }

    /// Closed-loop drift for the flat full state `(x, v̂, x₀, v̄₀)`.
    pub fn full_drift_into(
        &self,
        state: &[f64],
        alpha_t: f64,
        a_bar0_t: f64,
        params: &GainParameters,
        out: &mut [f64],
    ) {
        let n = self.n;
        let x = &state[..n];
        let v_hat = &state[n..2 * n];
        let x0 = state[2 * n];
        let v_bar0 = state[2 * n + 1];
        let ka = params.k() * alpha_t;
        for i in 0..n {
            // Σ_j a_ij (x_i − x_j) + a_i0 (x_i − x₀) = (Hx)_i − b_i x₀
            let rel = self.h_row_dot(i, x) - self.leader[i] * x0;
            out[i] = -ka * rel + alpha_t * v_hat[i];
            out[n + i] = a_bar0_t - params.gamma() * ka * rel;
        }
        out[2 * n] = alpha_t * v_bar0;
        out[2 * n + 1] = a_bar0_t;
    }

    /// Adds `Ω_σ dw` to the first `2n` entries of `out`.
    pub fn add_noise(&self, dw: &[f64], alpha_t: f64, params: &GainParameters, out: &mut [f64]) {
        let n = self.n;
        let ka = params.k() * alpha_t;
        for i in 0..n {
            let s = self.sigma_row_dot(i, dw);
            if s != 0.0 {
                out[i] -= ka * s;
                out[n + i] -= params.gamma() * ka * s;
            }
        }
    }
}

/// `F_σ(t) ε`.
pub fn error_drift(
    eps: &ErrorState,
    topo: &DirectedTopology,
    alpha_t: f64,
    params: &GainParameters,
) -> Result<DVector<f64>> {
    let n = topo.n();
    if eps.position.len() != n || eps.velocity.len() != n {
        return Err(Error::Dimension(format!("error state must have 2x{n} entries")));
    }
    let model = AgentModel::new(topo, &NoiseModel::silent(n))?;
    let mut out = vec![0.0; 2 * n];
    model.error_drift_into(&eps.to_flat(), alpha_t, params, &mut out);
    Ok(DVector::from_vec(out))
}

/// `Ω_σ(t) = [−kαΣ_σ ; −γkαΣ_σ]`, `2n × n(n+1)`.
pub fn error_diffusion(
    topo: &DirectedTopology,
    noise: &NoiseModel,
    alpha_t: f64,
    params: &GainParameters,
) -> Result<DMatrix<f64>> {
    let sigma = build_sigma(topo, noise)?;
    let n = topo.n();
    let ka = params.k() * alpha_t;
    let mut omega = DMatrix::zeros(2 * n, sigma.ncols());
    omega.view_mut((0, 0), (n, sigma.ncols())).copy_from(&(&sigma * -ka));
    omega.view_mut((n, 0), (n, sigma.ncols())).copy_from(&(&sigma * (-params.gamma() * ka)));
    Ok(omega)
}

/// Drift of the full closed loop, followers and leader together.
pub fn full_drift(
    state: &FullState,
    topo: &DirectedTopology,
    alpha_t: f64,
    a_bar0_t: f64,
    params: &GainParameters,
) -> Result<DVector<f64>> {
    let n = topo.n();
    if state.x.len() != n || state.v_hat.len() != n {
        return Err(Error::Dimension(format!("full state must have 2x{n} follower entries")));
    }
    let model = AgentModel::new(topo, &NoiseModel::silent(n))?;
    let mut out = vec![0.0; 2 * n + 2];
    model.full_drift_into(&state.to_flat(), alpha_t, a_bar0_t, params, &mut out);
    Ok(DVector::from_vec(out))
}

/// Noise loading of the full closed loop: the follower rows equal
/// [`error_diffusion`]; the two leader rows are zero.
pub fn full_diffusion(
    topo: &DirectedTopology,
    noise: &NoiseModel,
    alpha_t: f64,
    params: &GainParameters,
) -> Result<DMatrix<f64>> {
    let omega = error_diffusion(topo, noise, alpha_t, params)?;
    let n = topo.n();
    let mut full = DMatrix::zeros(2 * n + 2, omega.ncols());
    full.view_mut((0, 0), (2 * n, omega.ncols())).copy_from(&omega);
    Ok(full)
}
