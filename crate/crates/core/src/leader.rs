//! Leader velocity decomposition `v₀(t) = α(t)·v̄₀(t)` with `dv̄₀/dt = ā₀`,
//! the induced acceleration `a₀ = α̇v̄₀ + αā₀`, and leader trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power-law decreasing gain `α(t) = c / (t + t₀ + 1)^p` on `t ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaFunction {
    pub c: f64,
    pub p: f64,
    #[serde(default)]
    pub t0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Admissibility {
    pub admissible: bool,
    /// `sup α` over `[0, ∞)`.
    pub mu: f64,
    pub integral_diverges: bool,
    /// `∫₀^∞ α²`, `None` when it diverges.
    pub integral_sq: Option<f64>,
}

impl AlphaFunction {
    pub fn new(c: f64, p: f64, t0: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha scale c = {c} must be positive")));
        }
        if !p.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha exponent p = {p} must be finite")));
        }
        if !(t0.is_finite() && t0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("alpha offset t0 = {t0} must be >= 0")));
        }
        Ok(Self { c, p, t0 })
    }

    /// `α(t) = 1/(t+1)`.
    pub fn harmonic() -> Self {
        Self { c: 1.0, p: 1.0, t0: 0.0 }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.c / (t + self.t0 + 1.0).powf(self.p)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        -self.p * self.c / (t + self.t0 + 1.0).powf(self.p + 1.0)
    }

    pub fn mu(&self) -> f64 {
        if self.p >= 0.0 {
            self.value(0.0)
        } else {
            f64::INFINITY
        }
    }

    /// Closed-form test of `∫α = ∞` and `∫α² < ∞`: admissible iff `1/2 < p ≤ 1`.
    pub fn check_admissible(&self) -> Admissibility {
        let integral_diverges = self.p <= 1.0;
        let integral_sq = (2.0 * self.p > 1.0).then(|| {
            let q = 2.0 * self.p - 1.0;
            self.c * self.c / (q * (1.0 + self.t0).powf(q))
        });
        Admissibility {
            admissible: integral_diverges && integral_sq.is_some(),
            mu: self.mu(),
            integral_diverges,
            integral_sq,
        }
    }
}

/// Nominal velocity `v̄₀(t)` and nominal acceleration `ā₀(t) = dv̄₀/dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum Nominal {
    ConstantNominal {
        value: f64,
    },
    SinusoidNominal {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    /// Cubic Hermite interpolation through `(t, v̄₀, ā₀)` nodes, so the
    /// interpolant's derivative is the tabulated acceleration at every node.
    /// Outside the table the velocity continues linearly with the end slope.
    CustomTabulated {
        times: Vec<f64>,
        velocity: Vec<f64>,
        acceleration: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderProfile {
    #[serde(flatten)]
    pub nominal: Nominal,
    #[serde(default)]
    pub x0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderState {
    pub x0: f64,
    pub v0: f64,
    pub a0: f64,
}

impl Nominal {
    pub fn validate(&self) -> Result<()> {
        if let Nominal::CustomTabulated { times, velocity, acceleration } = self {
            if times.len() < 2 || velocity.len() != times.len() || acceleration.len() != times.len() {
                return Err(Error::InvalidParameter(
                    "tabulated profile needs >= 2 nodes and equal-length columns".into(),
                ));
            }
            if times.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::InvalidParameter("tabulated times must be strictly increasing".into()));
            }
        }
        Ok(())
    }

    pub fn velocity(&self, t: f64) -> f64 {
        match self {
            Nominal::ConstantNominal { value } => *value,
            Nominal::SinusoidNominal { amplitude, omega, phase, offset } => {
                offset + amplitude * (omega * t + phase).sin()
            }
            Nominal::CustomTabulated { times, velocity, acceleration } => {
                hermite(times, velocity, acceleration, t).0
            }
        }
    }

    pub fn acceleration(&self, t: f64) -> f64 {
        match self {
            Nominal::ConstantNominal { .. } => 0.0,
            Nominal::SinusoidNominal { amplitude, omega, phase, .. } => {
                amplitude * omega * (omega * t + phase).cos()
            }
            Nominal::CustomTabulated { times, velocity, acceleration } => {
                hermite(times, velocity, acceleration, t).1
            }
        }
    }
}

fn hermite(ts: &[f64], vs: &[f64], acc: &[f64], t: f64) -> (f64, f64) {
    let last = ts.len() - 1;
    if t <= ts[0] {
        return (vs[0] + acc[0] * (t - ts[0]), acc[0]);
    }
    if t >= ts[last] {
        return (vs[last] + acc[last] * (t - ts[last]), acc[last]);
    }
    let i = ts.partition_point(|&x| x <= t) - 1;
    let h = ts[i + 1] - ts[i];
    let s = (t - ts[i]) / h;
    let (s2, s3) = (s * s, s * s * s);
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let v = h00 * vs[i] + h10 * h * acc[i] + h01 * vs[i + 1] + h11 * h * acc[i + 1];
    let d00 = (6.0 * s2 - 6.0 * s) / h;
    let d10 = 3.0 * s2 - 4.0 * s + 1.0;
    let d01 = (-6.0 * s2 + 6.0 * s) / h;
    let d11 = 3.0 * s2 - 2.0 * s;
    let a = d00 * vs[i] + d10 * acc[i] + d01 * vs[i + 1] + d11 * acc[i + 1];
    (v, a)
}

impl LeaderProfile {
    pub fn constant(value: f64, x0: f64) -> Self {
        Self { nominal: Nominal::ConstantNominal { value }, x0 }
    }

    pub fn sinusoid(amplitude: f64, omega: f64, x0: f64) -> Self {
        Self {
            nominal: Nominal::SinusoidNominal { amplitude, omega, phase: 0.0, offset: 0.0 },
            x0,
        }
    }

    pub fn nominal_velocity(&self, t: f64) -> f64 {
        self.nominal.velocity(t)
    }

    pub fn nominal_acceleration(&self, t: f64) -> f64 {
        self.nominal.acceleration(t)
    }
}

/// `a₀(t) = α̇(t)v̄₀(t) + α(t)ā₀(t)`.
pub fn true_acceleration(alpha: &AlphaFunction, profile: &LeaderProfile, t: f64) -> f64 {
    alpha.derivative(t) * profile.nominal_velocity(t) + alpha.value(t) * profile.nominal_acceleration(t)
}

pub fn leader_velocity(alpha: &AlphaFunction, profile: &LeaderProfile, t: f64) -> f64 {
    alpha.value(t) * profile.nominal_velocity(t)
}

/// Leader position from `t = 0`, by closed form for a constant nominal
/// velocity and by quadrature of `v₀` otherwise.
pub fn leader_position(alpha: &AlphaFunction, profile: &LeaderProfile, t: f64) -> f64 {
    if let Some(x) = closed_form_position(alpha, profile, t) {
        return x;
    }
    profile.x0 + integrate_velocity(alpha, profile, t)
}

pub fn closed_form_position(alpha: &AlphaFunction, profile: &LeaderProfile, t: f64) -> Option<f64> {
    let Nominal::ConstantNominal { value } = profile.nominal else {
        return None;
    };
    let base = 1.0 + alpha.t0;
    let end = 1.0 + t + alpha.t0;
    let integral = if (alpha.p - 1.0).abs() < 1e-15 {
        (end / base).ln()
    } else {
        let q = 1.0 - alpha.p;
        (end.powf(q) - base.powf(q)) / q
    };
    Some(profile.x0 + alpha.c * value * integral)
}

/// `∫₀ᵗ α(s)v̄₀(s) ds` on unit panels.
pub fn integrate_velocity(alpha: &AlphaFunction, profile: &LeaderProfile, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let (lo, hi, sign) = if t > 0.0 { (0.0, t, 1.0) } else { (t, 0.0, -1.0) };
    let panels = (hi - lo).ceil().max(1.0) as usize;
    let width = (hi - lo) / panels as f64;
    let f = |s: f64| leader_velocity(alpha, profile, s);
    let total: f64 = (0..panels)
        .map(|i| {
            let a = lo + i as f64 * width;
            let b = if i + 1 == panels { hi } else { a + width };
            quadrature::integrate(f, a, b, 1e-12).integral
        })
        .sum();
    sign * total
}

pub fn leader_state(alpha: &AlphaFunction, profile: &LeaderProfile, t: f64) -> LeaderState {
    LeaderState {
        x0: leader_position(alpha, profile, t),
        v0: leader_velocity(alpha, profile, t),
        a0: true_acceleration(alpha, profile, t),
    }
}
