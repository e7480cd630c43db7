//! Scenario files: one TOML document per scenario, every physical constant
//! explicit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::signal::SignalSpec;
use crate::torus_field::{SpatialGrid, TorusGrid};
use crate::{Error, Result};

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Homogenize,
    Equilibrate,
    Stability,
    SimulateSlow,
    SimulateDirect,
    Validate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Homogenize,
        Stage::Equilibrate,
        Stage::Stability,
        Stage::SimulateSlow,
        Stage::SimulateDirect,
        Stage::Validate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Homogenize => "homogenize",
            Stage::Equilibrate => "equilibrate",
            Stage::Stability => "stability",
            Stage::SimulateSlow => "simulate-slow",
            Stage::SimulateDirect => "simulate-direct",
            Stage::Validate => "validate",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TorusConfig {
    pub xi_periods: Vec<f64>,
    pub xi_points: Vec<usize>,
    pub tau_period: f64,
    pub tau_points: usize,
}

impl TorusConfig {
    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.xi_periods.clone(), self.xi_points.clone(), self.tau_period, self.tau_points)
            .map_err(|e| config_err("torus", e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    pub chi: f64,
    pub kappa: f64,
    pub mu: f64,
    /// Prey diffusivity of the slow system (`δ̂ = prey_diffusivity·|k|²`).
    pub prey_diffusivity: f64,
    /// Scale ratio for `simulate-direct`.
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KineticsConfig {
    pub model: String,
    pub params: BTreeMap<String, f64>,
    /// Starting point of the equilibrium search.
    pub guess: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    /// Unit wave-vector directions `k̄`.
    pub directions: Vec<Vec<f64>>,
    /// Wave-number magnitudes `α`.
    pub alphas: Vec<f64>,
    /// Signal speeds for traveling waves; drift multipliers otherwise.
    pub c_values: Vec<f64>,
}

/// `p̄₀ = pₑ + A_p cos(2π m·x/L) + noise`, `s̄₀ = sₑ + A_s sin(2π m·x/L)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub amplitude_p: f64,
    pub amplitude_s: f64,
    pub mode: Vec<i32>,
    /// Amplitude of seeded uniform noise added to `p̄₀`.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlowConfig {
    pub lengths: Vec<f64>,
    pub points: Vec<usize>,
    pub end_time: f64,
    pub snapshot_interval: f64,
    pub dt_max: f64,
    pub cfl: f64,
    pub initial: Perturbation,
}

impl SlowConfig {
    pub fn grid(&self) -> Result<SpatialGrid> {
        SpatialGrid::new(self.lengths.clone(), self.points.clone()).map_err(|e| config_err("slow", e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectConfig {
    pub length: f64,
    /// Resolution of the slow grid used for the initial envelope and the
    /// comparison run.
    pub slow_points: usize,
    pub points_per_period: usize,
    pub end_time: f64,
    pub snapshots: usize,
    pub cfl: f64,
    pub slow_dt: f64,
    pub initial: Perturbation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    pub deltas: Vec<f64>,
    pub length: f64,
    pub slow_points: usize,
    pub points_per_period: usize,
    pub end_time: f64,
    pub cfl: f64,
    pub slow_dt: f64,
    pub correction: bool,
    pub initial: Perturbation,
}

/// A scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub stages: Vec<Stage>,
    pub seed: u64,
    pub signal: SignalSpec,
    pub torus: TorusConfig,
    pub physics: Physics,
    pub kinetics: Option<KineticsConfig>,
    pub stability: Option<StabilityConfig>,
    pub slow: Option<SlowConfig>,
    pub direct: Option<DirectConfig>,
    pub validate: Option<ValidateConfig>,
}

fn config_err(key: &str, e: impl std::fmt::Display) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: e.to_string(),
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(config_err(key, format!("must be positive, got {v}")))
    }
}

fn require<T>(section: &Option<T>, key: &str, stage: Stage) -> Result<()> {
    if section.is_none() {
        return Err(config_err(key, format!("section required by stage `{}`", stage.name())));
    }
    Ok(())
}

impl Scenario {
    /// Parse and validate TOML text.
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| {
            let key = e.span().map(|r| text[r].trim().to_string()).unwrap_or_default();
            config_err(&key, e.message())
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Stages to run: the configured list, or `only` when given, each
    /// checked against the sections it needs.
    pub fn stages_to_run(&self, only: &[Stage]) -> Result<Vec<Stage>> {
        let mut st: Vec<Stage> = if only.is_empty() {
            self.stages.clone()
        } else {
            only.to_vec()
        };
        st.sort();
        st.dedup();
        for &s in &st {
            self.check_stage(s)?;
        }
        Ok(st)
    }

    fn check_stage(&self, s: Stage) -> Result<()> {
        let dim = self.torus.xi_points.len();
        match s {
            Stage::Homogenize => {}
            Stage::Equilibrate => require(&self.kinetics, "kinetics", s)?,
            Stage::Stability => {
                require(&self.kinetics, "kinetics", s)?;
                require(&self.stability, "stability", s)?;
            }
            Stage::SimulateSlow => {
                require(&self.kinetics, "kinetics", s)?;
                require(&self.slow, "slow", s)?;
            }
            Stage::SimulateDirect | Stage::Validate => {
                require(&self.kinetics, "kinetics", s)?;
                if s == Stage::SimulateDirect {
                    require(&self.direct, "direct", s)?;
                    if self.physics.delta.is_none() {
                        return Err(config_err("physics.delta", "required by stage `simulate-direct`"));
                    }
                } else {
                    require(&self.validate, "validate", s)?;
                }
                if dim != 1 {
                    return Err(config_err(
                        "torus.xi_points",
                        format!("stage `{}` needs a one-dimensional torus", s.name()),
                    ));
                }
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(config_err("stages", "must not be empty"));
        }
        let dim = self.torus.xi_points.len();
        if self.torus.xi_periods.len() != dim {
            return Err(config_err("torus.xi_periods", "length must match torus.xi_points"));
        }
        self.torus.grid()?;
        positive("physics.kappa", self.physics.kappa)?;
        positive("physics.mu", self.physics.mu)?;
        if !self.physics.chi.is_finite() {
            return Err(config_err("physics.chi", "must be finite"));
        }
        if !(self.physics.prey_diffusivity.is_finite() && self.physics.prey_diffusivity >= 0.0) {
            return Err(config_err("physics.prey_diffusivity", "must be non-negative"));
        }
        if let Some(d) = self.physics.delta {
            positive("physics.delta", d)?;
        }
        if let Some(k) = &self.kinetics {
            crate::kinetics::make_model(&k.model, &k.params).map_err(|e| config_err("kinetics", e))?;
            positive("kinetics.guess[0]", k.guess[0])?;
            positive("kinetics.guess[1]", k.guess[1])?;
        }
        if let Some(st) = &self.stability {
            for (i, d) in st.directions.iter().enumerate() {
                if d.len() != dim {
                    return Err(config_err(&format!("stability.directions[{i}]"), "dimension mismatch"));
                }
            }
            if st.alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
                return Err(config_err("stability.alphas", "must be positive"));
            }
        }
        if let Some(sl) = &self.slow {
            if sl.lengths.len() != dim || sl.points.len() != dim {
                return Err(config_err("slow.points", "dimension must match the torus"));
            }
            sl.grid()?;
            positive("slow.end_time", sl.end_time)?;
            positive("slow.snapshot_interval", sl.snapshot_interval)?;
            positive("slow.dt_max", sl.dt_max)?;
            positive("slow.cfl", sl.cfl)?;
            check_perturbation("slow.initial", &sl.initial, dim)?;
        }
        if let Some(d) = &self.direct {
            positive("direct.length", d.length)?;
            positive("direct.end_time", d.end_time)?;
            positive("direct.cfl", d.cfl)?;
            positive("direct.slow_dt", d.slow_dt)?;
            if d.snapshots == 0 {
                return Err(config_err("direct.snapshots", "must be positive"));
            }
            check_perturbation("direct.initial", &d.initial, 1)?;
        }
        if let Some(v) = &self.validate {
            if v.deltas.len() < 2 {
                return Err(config_err("validate.deltas", "need at least two values"));
            }
            for d in &v.deltas {
                positive("validate.deltas", *d)?;
            }
            positive("validate.length", v.length)?;
            positive("validate.end_time", v.end_time)?;
            positive("validate.cfl", v.cfl)?;
            positive("validate.slow_dt", v.slow_dt)?;
            check_perturbation("validate.initial", &v.initial, 1)?;
        }
        Ok(())
    }
}

fn check_perturbation(key: &str, p: &Perturbation, dim: usize) -> Result<()> {
    if p.mode.len() != dim {
        return Err(config_err(&format!("{key}.mode"), format!("expected {dim} entries")));
    }
    if ![p.amplitude_p, p.amplitude_s, p.noise].iter().all(|v| v.is_finite()) || p.noise < 0.0 {
        return Err(config_err(key, "amplitudes must be finite and noise non-negative"));
    }
    Ok(())
}
