//! Run configuration in TOML. Lengths are in millimetres and angles in
//! degrees; they are converted to SI when the environment is built.

use serde::{Deserialize, Serialize};

use crate::agent::{EpsilonSchedule, TargetStyle, TrainConfig};
use crate::env::{EnvConfig, StartMode, STEP_MAX};
use crate::nn::Architecture;
use crate::tcs::SafetyThresholds;

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed for every random stream of a run.
    pub seed: u64,
    pub train: TrainSection,
    pub epsilon: EpsilonSection,
    pub world: WorldSection,
    pub tcs: TcsSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Environment steps for the whole run.
    pub budget_steps: u64,
    pub start_mode: StartMode,
    /// Length cap for training episodes.
    pub episode_step_max: u32,
    /// Environment steps between intermediate checkpoints; 0 disables them.
    pub checkpoint_every: u64,
    pub lambda: f64,
    pub alpha: f64,
    pub k: usize,
    pub batch_size: usize,
    pub buffer_size: usize,
    pub update_rate: u64,
    pub target_style: TargetStyle,
    pub train_every: u64,
    pub learning_starts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonSection {
    pub eps_min: f64,
    pub eps_max: f64,
    pub indx_decay: u64,
    /// Fixed ε, replacing the decay when set.
    pub frozen_eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSection {
    pub peg_radius_mm: f64,
    pub peg_length_mm: f64,
    /// Radial gap between peg and hole.
    pub clearance_mm: f64,
    pub hole_depth_mm: f64,
    pub hole_center_mm: [f64; 3],
    pub start_height_mm: f64,
    pub fixed_offset_mm: f64,
    pub fixed_offset_angle_deg: f64,
    pub random_radius_mm: f64,
    pub max_grasp_offset_mm: f64,
    pub sensor_noise: bool,
    pub sensor_bias: bool,
    pub aasm: bool,
    /// Length cap for evaluation episodes.
    pub step_max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TcsSection {
    pub enabled: bool,
    pub warn_force_n: f64,
    pub danger_force_n: f64,
    pub warn_moment_nm: f64,
    pub danger_moment_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub episodes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            train: TrainSection::default(),
            epsilon: EpsilonSection::default(),
            world: WorldSection::default(),
            tcs: TcsSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            budget_steps: 200_000,
            start_mode: StartMode::Random,
            episode_step_max: STEP_MAX,
            checkpoint_every: 50_000,
            lambda: t.lambda,
            alpha: t.alpha,
            k: t.k,
            batch_size: t.batch_size,
            buffer_size: t.buffer_size,
            update_rate: t.update_rate,
            target_style: t.target_style,
            train_every: t.train_every,
            learning_starts: t.learning_starts,
        }
    }
}

impl Default for EpsilonSection {
    fn default() -> Self {
        let e = EpsilonSchedule::default();
        Self { eps_min: e.eps_min, eps_max: e.eps_max, indx_decay: e.indx_decay, frozen_eps: e.frozen_eps }
    }
}

fn mm(m: f64) -> f64 {
    m * 1000.0
}

fn m(mm: f64) -> f64 {
    mm / 1000.0
}

impl Default for WorldSection {
    fn default() -> Self {
        let e = EnvConfig::default();
        Self {
            peg_radius_mm: mm(e.peg_radius),
            peg_length_mm: mm(e.peg_length),
            clearance_mm: mm(e.clearance),
            hole_depth_mm: mm(e.hole_depth),
            hole_center_mm: e.hole_center.map(mm),
            start_height_mm: mm(e.start_height),
            fixed_offset_mm: mm(e.fixed_offset),
            fixed_offset_angle_deg: e.fixed_offset_angle_deg,
            random_radius_mm: mm(e.random_radius),
            max_grasp_offset_mm: mm(e.max_grasp_offset),
            sensor_noise: e.sensor_noise,
            sensor_bias: e.sensor_bias,
            aasm: e.aasm,
            step_max: e.step_max,
        }
    }
}

impl Default for TcsSection {
    fn default() -> Self {
        let t = SafetyThresholds::default();
        Self {
            enabled: true,
            warn_force_n: t.warn_f,
            danger_force_n: t.danger_f,
            warn_moment_nm: t.warn_m,
            danger_moment_nm: t.danger_m,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { episodes: 24 }
    }
}

impl RunConfig {
    /// Parses and validates. Errors name the offending key and line.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Effective configuration with every default spelled out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.env_config().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.train_config().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let e = &self.epsilon;
        if !(0.0 <= e.eps_min && e.eps_min <= e.eps_max && e.eps_max <= 1.0 && e.indx_decay > 0) {
            return Err(HarnessError::Config("epsilon: need 0 ≤ eps_min ≤ eps_max ≤ 1 and indx_decay > 0".into()));
        }
        if let Some(f) = e.frozen_eps {
            if !(0.0..=1.0).contains(&f) {
                return Err(HarnessError::Config("epsilon.frozen_eps must be within [0, 1]".into()));
            }
        }
        if self.train.episode_step_max == 0 || self.train.episode_step_max > STEP_MAX {
            return Err(HarnessError::Config("train.episode_step_max must be in 1..=5000".into()));
        }
        if self.eval.episodes == 0 {
            return Err(HarnessError::Config("eval.episodes must be positive".into()));
        }
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        let w = &self.world;
        let t = &self.tcs;
        EnvConfig {
            peg_radius: m(w.peg_radius_mm),
            peg_length: m(w.peg_length_mm),
            clearance: m(w.clearance_mm),
            hole_depth: m(w.hole_depth_mm),
            hole_center: w.hole_center_mm.map(m),
            start_height: m(w.start_height_mm),
            fixed_offset: m(w.fixed_offset_mm),
            fixed_offset_angle_deg: w.fixed_offset_angle_deg,
            random_radius: m(w.random_radius_mm),
            max_grasp_offset: m(w.max_grasp_offset_mm),
            sensor_noise: w.sensor_noise,
            sensor_bias: w.sensor_bias,
            tcs: t.enabled,
            aasm: w.aasm,
            step_max: w.step_max,
            warn_force: t.warn_force_n,
            danger_force: t.danger_force_n,
            warn_moment: t.warn_moment_nm,
            danger_moment: t.danger_moment_nm,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lambda: t.lambda,
            alpha: t.alpha,
            k: t.k,
            step_max: t.episode_step_max,
            batch_size: t.batch_size,
            buffer_size: t.buffer_size,
            update_rate: t.update_rate,
            target_style: t.target_style,
            train_every: t.train_every,
            learning_starts: t.learning_starts,
        }
    }

    pub fn epsilon_schedule(&self) -> EpsilonSchedule {
        let e = &self.epsilon;
        EpsilonSchedule {
            eps_min: e.eps_min,
            eps_max: e.eps_max,
            indx_decay: e.indx_decay,
            steps_accu: 0,
            frozen_eps: e.frozen_eps,
        }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture::standard()
    }
}
