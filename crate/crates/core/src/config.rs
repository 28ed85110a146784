//! JSON run configuration: parsing with JSON-pointer diagnostics, semantic
//! validation, and resolution into a [`Scenario`] plus integrator settings.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::EnsembleConfig;
use crate::leader::{AlphaFunction, LeaderProfile};
use crate::protocol::NoiseModel;
use crate::sim::{IntegratorConfig, Scenario, Segment, SimMode, SwitchingSchedule};
use crate::spectral::{minimal_gain, GainParameters};
use crate::topology::{build_coupling, DirectedTopology};

/// `k = "auto"` resolves to this multiple of the sufficient bound.
pub const AUTO_GAIN_FACTOR: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub topologies: Vec<TopologyConfig>,
    pub schedule: ScheduleConfig,
    pub alpha: AlphaFunction,
    pub leader: LeaderProfile,
    pub noise: NoiseConfig,
    pub params: ParamsConfig,
    pub integrator: IntegratorSection,
    pub ensemble: EnsembleSection,
    /// Initial tracking error `ε(0)`; zero when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub adjacency: Vec<Vec<i64>>,
    pub leader_links: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleConfig {
    Periodic {
        order: Vec<usize>,
        period: f64,
    },
    Explicit {
        segments: Vec<Segment>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dwell: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseConfig {
    /// `"uniform:<value>-on-links"`.
    Preset(String),
    Explicit { leader: Vec<f64>, followers: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSetting {
    Value(f64),
    Auto(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub gamma: f64,
    pub k: GainSetting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub sample_stride: usize,
    pub mode: SimMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    #[serde(rename = "M")]
    pub trials: usize,
    pub seed: u64,
}

/// A schema or validation failure located by JSON pointer.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{pointer}: {message}")]
pub struct ConfigError {
    pub pointer: String,
    pub message: String,
}

impl ConfigError {
    fn at(pointer: impl Into<String>, message: impl std::fmt::Display) -> Self {
        Self { pointer: pointer.into(), message: message.to_string() }
    }
}

fn pointer_from_path(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment as S;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            S::Seq { index } => out.push_str(&format!("/{index}")),
            S::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            S::Enum { variant } => out.push_str(&format!("/{variant}")),
            S::Unknown => {}
        }
    }
    out
}

/// Validated configuration with the gain possibly still set to `"auto"`.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub topologies: Vec<DirectedTopology>,
    pub schedule: SwitchingSchedule,
    pub alpha: AlphaFunction,
    pub leader: LeaderProfile,
    pub noise: NoiseModel,
    pub gamma: f64,
    pub gain: GainSetting,
    pub initial: Vec<f64>,
    pub integrator: IntegratorConfig,
    pub trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainResolution {
    pub k: f64,
    pub auto: bool,
}

fn parse_uniform(spec: &str) -> Option<f64> {
    let v: f64 = spec.strip_prefix("uniform:")?.strip_suffix("-on-links")?.parse().ok()?;
    (v.is_finite() && v >= 0.0).then_some(v)
}

fn to_bits(values: &[i64], pointer: &str) -> std::result::Result<Vec<u8>, ConfigError> {
    values
        .iter()
        .enumerate()
        .map(|(j, &v)| match v {
            0 | 1 => Ok(v as u8),
            _ => Err(ConfigError::at(format!("{pointer}/{j}"), format!("entry {v} is not 0 or 1"))),
        })
        .collect()
}

impl RunConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| ConfigError::at(pointer_from_path(e.path()), e.inner()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// The built-in three-follower example: unit switching period, constant
    /// nominal leader velocity, `dt = 1e-3`, `T = 100`, 300 trials.
    pub fn paper() -> Self {
        Self {
            topologies: vec![
                TopologyConfig {
                    adjacency: vec![vec![0, 1, 0], vec![1, 0, 0], vec![0, 1, 0]],
                    leader_links: vec![1, 0, 0],
                },
                TopologyConfig {
                    adjacency: vec![vec![0, 1, 0], vec![1, 0, 0], vec![0, 0, 0]],
                    leader_links: vec![1, 0, 1],
                },
            ],
            schedule: ScheduleConfig::Periodic { order: vec![0, 1], period: 1.0 },
            alpha: AlphaFunction::harmonic(),
            leader: LeaderProfile::constant(2.0, 0.0),
            noise: NoiseConfig::Preset("uniform:1-on-links".into()),
            params: ParamsConfig { gamma: 0.8, k: GainSetting::Value(6.0) },
            integrator: IntegratorSection { dt: 1e-3, horizon: 100.0, sample_stride: 1000, mode: SimMode::ErrorSystem },
            ensemble: EnsembleSection { trials: 300, seed: 0 },
            initial: Some(vec![2.0, 1.0, -1.0, -0.2, -2.0, 0.2]),
        }
    }

    /// Validates every section and builds the typed objects. Errors carry the
    /// JSON pointer of the offending field.
    pub fn resolve(&self) -> std::result::Result<ResolvedConfig, ConfigError> {
        if self.topologies.is_empty() {
            return Err(ConfigError::at("/topologies", "at least one topology is required"));
        }
        let mut topologies = Vec::with_capacity(self.topologies.len());
        for (t, spec) in self.topologies.iter().enumerate() {
            let base = format!("/topologies/{t}");
            let n = spec.leader_links.len();
            if n == 0 {
                return Err(ConfigError::at(format!("{base}/leader_links"), "no followers"));
            }
            if spec.adjacency.len() != n {
                return Err(ConfigError::at(format!("{base}/adjacency"), format!("expected {n} rows")));
            }
            let mut adjacency = Vec::with_capacity(n);
            for (i, row) in spec.adjacency.iter().enumerate() {
                let ptr = format!("{base}/adjacency/{i}");
                if row.len() != n {
                    return Err(ConfigError::at(ptr, format!("expected {n} entries")));
                }
                let bits = to_bits(row, &ptr)?;
                if bits[i] != 0 {
                    return Err(ConfigError::at(format!("{ptr}/{i}"), "self-loops are not allowed"));
                }
                adjacency.push(bits);
            }
            let leader_links = to_bits(&spec.leader_links, &format!("{base}/leader_links"))?;
            let topo = DirectedTopology::new(adjacency, leader_links).map_err(|e| ConfigError::at(&base, e))?;
            if let Some(first) = topologies.first() {
                let first: &DirectedTopology = first;
                if first.n() != n {
                    return Err(ConfigError::at(&base, format!("has {n} followers, topology 0 has {}", first.n())));
                }
            }
            topologies.push(topo);
        }
        let n = topologies[0].n();

        let sec = &self.integrator;
        if !(sec.dt.is_finite() && sec.dt > 0.0) {
            return Err(ConfigError::at("/integrator/dt", "must be positive"));
        }
        if !(sec.horizon.is_finite() && sec.horizon > 0.0) {
            return Err(ConfigError::at("/integrator/T", "must be positive"));
        }
        if sec.sample_stride == 0 {
            return Err(ConfigError::at("/integrator/sample_stride", "must be >= 1"));
        }
        let integrator = IntegratorConfig {
            dt: sec.dt,
            horizon: sec.horizon,
            sample_stride: sec.sample_stride,
            seed: self.ensemble.seed,
            mode: sec.mode,
        };
        integrator.validate().map_err(|e| ConfigError::at("/integrator/T", e))?;

        let count = topologies.len();
        let schedule = match &self.schedule {
            ScheduleConfig::Periodic { order, period } => {
                if let Some(j) = order.iter().position(|&p| p >= count) {
                    return Err(ConfigError::at(format!("/schedule/order/{j}"), format!("no topology {}", order[j])));
                }
                if !(period.is_finite() && *period > 0.0) {
                    return Err(ConfigError::at("/schedule/period", "must be positive"));
                }
                SwitchingSchedule::periodic(count, order, *period, sec.horizon)
                    .map_err(|e| ConfigError::at("/schedule", e))?
            }
            ScheduleConfig::Explicit { segments, dwell } => {
                if segments.is_empty() {
                    return Err(ConfigError::at("/schedule/segments", "at least one segment is required"));
                }
                // The final segment may be cut short by the horizon.
                let body = if segments.len() > 1 { &segments[..segments.len() - 1] } else { &segments[..] };
                let dwell = dwell.unwrap_or_else(|| body.iter().map(|s| s.end - s.start).fold(f64::INFINITY, f64::min));
                let s = SwitchingSchedule::new(count, segments.clone(), dwell)
                    .map_err(|e| ConfigError::at("/schedule/segments", e))?;
                if s.start().abs() > 1e-9 || s.end() < sec.horizon - 1e-9 {
                    return Err(ConfigError::at("/schedule/segments", "segments must cover [0, T]"));
                }
                s
            }
        };
        if sec.dt > schedule.dwell() + 1e-12 {
            return Err(ConfigError::at("/integrator/dt", format!("exceeds the dwell time {}", schedule.dwell())));
        }

        let alpha = AlphaFunction::new(self.alpha.c, self.alpha.p, self.alpha.t0).map_err(|e| {
            let field = if !(self.alpha.c > 0.0) { "c" } else if !self.alpha.p.is_finite() { "p" } else { "t0" };
            ConfigError::at(format!("/alpha/{field}"), e)
        })?;
        self.leader.nominal.validate().map_err(|e| ConfigError::at("/leader/params", e))?;

        let noise = match &self.noise {
            NoiseConfig::Preset(s) => {
                let v = parse_uniform(s)
                    .ok_or_else(|| ConfigError::at("/noise", format!("unknown noise preset {s:?}")))?;
                NoiseModel::uniform(n, v).expect("uniform noise is valid")
            }
            NoiseConfig::Explicit { leader, followers } => {
                if leader.len() != n {
                    return Err(ConfigError::at("/noise/leader", format!("expected {n} entries")));
                }
                if let Some(i) = leader.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(ConfigError::at(format!("/noise/leader/{i}"), "intensity must be >= 0"));
                }
                if followers.len() != n {
                    return Err(ConfigError::at("/noise/followers", format!("expected {n} rows")));
                }
                for (i, row) in followers.iter().enumerate() {
                    if row.len() != n {
                        return Err(ConfigError::at(format!("/noise/followers/{i}"), format!("expected {n} entries")));
                    }
                    if let Some(j) = row.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                        return Err(ConfigError::at(format!("/noise/followers/{i}/{j}"), "intensity must be >= 0"));
                    }
                }
                NoiseModel::new(leader.clone(), followers.clone()).map_err(|e| ConfigError::at("/noise", e))?
            }
        };

        let gamma = self.params.gamma;
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(ConfigError::at("/params/gamma", "must lie in (0, 1)"));
        }
        if let GainSetting::Value(k) = self.params.k {
            if !(k.is_finite() && k > 0.0) {
                return Err(ConfigError::at("/params/k", "must be positive or \"auto\""));
            }
        }

        if self.ensemble.trials == 0 {
            return Err(ConfigError::at("/ensemble/M", "must be >= 1"));
        }

        let initial = match &self.initial {
            None => vec![0.0; 2 * n],
            Some(v) if v.len() != 2 * n => {
                return Err(ConfigError::at("/initial", format!("expected {} entries", 2 * n)));
            }
            Some(v) => {
                if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                    return Err(ConfigError::at(format!("/initial/{i}"), "must be finite"));
                }
                v.clone()
            }
        };

        Ok(ResolvedConfig {
            topologies,
            schedule,
            alpha,
            leader: self.leader.clone(),
            noise,
            gamma,
            gain: self.params.k,
            initial,
            integrator,
            trials: self.ensemble.trials,
        })
    }
}

impl ResolvedConfig {
    pub fn n(&self) -> usize {
        self.topologies[0].n()
    }

    pub fn couplings(&self) -> Vec<DMatrix<f64>> {
        self.topologies.iter().map(|t| build_coupling(t).coupling).collect()
    }

    /// Resolves `"auto"` to `1.05 × k_min` from the applicable certificate.
    pub fn resolve_gain(&self) -> Result<GainResolution> {
        match self.gain {
            GainSetting::Value(k) => Ok(GainResolution { k, auto: false }),
            GainSetting::Auto(_) => {
                let k_min = minimal_gain(self.gamma, &self.couplings())?;
                Ok(GainResolution { k: AUTO_GAIN_FACTOR * k_min, auto: true })
            }
        }
    }

    pub fn params(&self) -> Result<GainParameters> {
        GainParameters::new(self.gamma, self.resolve_gain()?.k)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let scenario = Scenario {
            topologies: self.topologies.clone(),
            schedule: self.schedule.clone(),
            alpha: self.alpha,
            leader: self.leader.clone(),
            noise: self.noise.clone(),
            params: self.params()?,
            initial: self.initial.clone(),
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn ensemble(&self) -> Result<EnsembleConfig> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("ensemble needs at least one trial".into()));
        }
        Ok(EnsembleConfig { trials: self.trials, scenario: self.scenario()?, integrator: self.integrator })
    }
}
