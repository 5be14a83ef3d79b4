//! Run configuration: flat key-value sections in TOML, mirroring the module
//! parameter groups. Unknown keys are rejected; a load/serialize/load cycle
//! reproduces the config exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ccm::{default_library_sizes, ConvergenceThresholds, EmbeddingSpec, LibraryMode};
use crate::harness::{CcmSettings, Condition, ConditionName, SimParams};
use crate::pendulum::{PendulumMapping, PendulumParams};
use crate::physics::{BodyParams, WorldConfig};
use crate::strategies::SpringParams;
use crate::vec2::Vec2;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSection {
    pub dt: f64,
    pub damping: f64,
    pub arena_half_width: f64,
    pub contact_stiffness: f64,
    pub reward_magnitude: f64,
    pub n_predators: usize,
}

impl Default for WorldSection {
    fn default() -> Self {
        let w = WorldConfig::default();
        WorldSection {
            dt: w.dt,
            damping: w.damping,
            arena_half_width: w.arena_half_width,
            contact_stiffness: w.contact_stiffness,
            reward_magnitude: w.reward_magnitude,
            n_predators: w.n_predators,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PendulumSection {
    pub l1: f64,
    pub l2: f64,
    pub m1: f64,
    pub m2: f64,
    pub g: f64,
    /// RK4 substeps per simulation step.
    pub substeps: u32,
    pub anchor_x: f64,
    pub anchor_y: f64,
    /// Arena meters per pendulum meter; when omitted, derived as
    /// `0.45 * arena_half_width / (l1 + l2)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

impl Default for PendulumSection {
    fn default() -> Self {
        let p = PendulumParams::default();
        PendulumSection {
            l1: p.l1,
            l2: p.l2,
            m1: p.m1,
            m2: p.m2,
            g: p.g,
            substeps: 10,
            anchor_x: 0.0,
            anchor_y: 0.0,
            scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CcmSection {
    pub dim: usize,
    pub tau: usize,
    pub theiler: usize,
    pub n_subsamples: usize,
    /// Explicit library grid; empty means the default log-spaced grid.
    pub library_sizes: Vec<usize>,
    pub library_mode: LibraryMode,
    pub min_delta_rho: f64,
    pub min_monotonicity: f64,
    pub min_final_rho: f64,
}

impl Default for CcmSection {
    fn default() -> Self {
        let spec = EmbeddingSpec::default();
        let th = ConvergenceThresholds::default();
        CcmSection {
            dim: spec.dim,
            tau: spec.tau,
            theiler: spec.theiler,
            n_subsamples: 20,
            library_sizes: Vec::new(),
            library_mode: LibraryMode::Subsample,
            min_delta_rho: th.min_delta_rho,
            min_monotonicity: th.min_monotonicity,
            min_final_rho: th.min_final_rho,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub condition: ConditionName,
    pub perturbed: bool,
    pub episodes: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            condition: ConditionName::Chaser,
            perturbed: false,
            episodes: 10,
            steps: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub world: WorldSection,
    pub predator: BodyParams,
    pub prey: BodyParams,
    pub spring: SpringParams,
    pub pendulum: PendulumSection,
    pub ccm: CcmSection,
    pub run: RunSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let w = WorldConfig::default();
        RunConfig {
            world: WorldSection::default(),
            predator: w.predator_body,
            prey: w.prey_body,
            spring: SpringParams::default(),
            pendulum: PendulumSection::default(),
            ccm: CcmSection::default(),
            run: RunSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let params = self.sim_params();
        params.validate().map_err(ConfigError::Invalid)?;
        self.embedding_spec()
            .validate()
            .map_err(ConfigError::Invalid)?;
        if self.ccm.n_subsamples < 1 {
            return Err(ConfigError::Invalid("ccm.n_subsamples must be >= 1".into()));
        }
        if !self.ccm.library_sizes.is_empty()
            && self.ccm.library_sizes.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(ConfigError::Invalid(
                "ccm.library_sizes must be strictly ascending".into(),
            ));
        }
        for (name, v) in [
            ("ccm.min_delta_rho", self.ccm.min_delta_rho),
            ("ccm.min_monotonicity", self.ccm.min_monotonicity),
            ("ccm.min_final_rho", self.ccm.min_final_rho),
        ] {
            if !v.is_finite() {
                return Err(ConfigError::Invalid(format!("{name} must be finite")));
            }
        }
        self.condition().validate().map_err(ConfigError::Invalid)?;
        Ok(())
    }

    pub fn world_config(&self) -> WorldConfig {
        WorldConfig {
            dt: self.world.dt,
            damping: self.world.damping,
            arena_half_width: self.world.arena_half_width,
            contact_stiffness: self.world.contact_stiffness,
            reward_magnitude: self.world.reward_magnitude,
            predator_body: self.predator,
            prey_body: self.prey,
            n_predators: self.world.n_predators,
        }
    }

    pub fn pendulum_params(&self) -> PendulumParams {
        PendulumParams {
            l1: self.pendulum.l1,
            l2: self.pendulum.l2,
            m1: self.pendulum.m1,
            m2: self.pendulum.m2,
            g: self.pendulum.g,
        }
    }

    pub fn pendulum_mapping(&self) -> PendulumMapping {
        let p = self.pendulum_params();
        PendulumMapping {
            anchor: Vec2::new(self.pendulum.anchor_x, self.pendulum.anchor_y),
            scale: self
                .pendulum
                .scale
                .unwrap_or(0.45 * self.world.arena_half_width / (p.l1 + p.l2)),
        }
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams {
            world: self.world_config(),
            spring: self.spring,
            pendulum: self.pendulum_params(),
            mapping: self.pendulum_mapping(),
            pendulum_substeps: self.pendulum.substeps,
        }
    }

    pub fn embedding_spec(&self) -> EmbeddingSpec {
        EmbeddingSpec {
            dim: self.ccm.dim,
            tau: self.ccm.tau,
            theiler: self.ccm.theiler,
        }
    }

    pub fn thresholds(&self) -> ConvergenceThresholds {
        ConvergenceThresholds {
            min_delta_rho: self.ccm.min_delta_rho,
            min_monotonicity: self.ccm.min_monotonicity,
            min_final_rho: self.ccm.min_final_rho,
        }
    }

    /// Analysis settings for series of the given length; an empty
    /// `library_sizes` resolves to the default log-spaced grid.
    pub fn ccm_settings(&self, steps: usize) -> CcmSettings {
        let spec = self.embedding_spec();
        let library_sizes = if self.ccm.library_sizes.is_empty() {
            let available = steps.saturating_sub((spec.dim - 1) * spec.tau);
            default_library_sizes(available)
        } else {
            self.ccm.library_sizes.clone()
        };
        CcmSettings {
            spec,
            library_sizes,
            n_subsamples: self.ccm.n_subsamples,
            mode: self.ccm.library_mode,
            thresholds: self.thresholds(),
        }
    }

    pub fn condition(&self) -> Condition {
        Condition {
            name: self.run.condition,
            perturbed: self.run.perturbed,
            n_episodes: self.run.episodes,
            steps: self.run.steps,
            seed: self.run.seed,
        }
    }
}
