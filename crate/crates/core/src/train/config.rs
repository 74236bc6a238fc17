use serde::{Deserialize, Serialize};

use crate::error::{EnsError, Result};
use crate::fields::{EigenConfig, ModelConfig};
use crate::geometry::ICOSPHERE_MAX_LEVEL;
use crate::render::{MaskParams, ShaderConfig};
use crate::spectral::EigenPolicy;
use crate::train::losses::LossWeights;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    pub coarse_iters: u64,
    pub fine_iters: u64,
    pub coarse_level: u32,
    pub fine_level: u32,
    pub views_per_step: usize,
    pub pixel_fraction: f64,
    pub lr_shader: f64,
    pub lr_deform: f64,
    pub lr_decay_at_refine: f64,
    pub seed: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            coarse_iters: 200,
            fine_iters: 600,
            coarse_level: 3,
            fine_level: 5,
            views_per_step: 6,
            pixel_fraction: 0.05,
            lr_shader: 1e-3,
            lr_deform: 2e-3,
            lr_decay_at_refine: 0.75,
            seed: 0,
        }
    }
}

impl Schedule {
    pub fn total_iters(&self) -> u64 {
        self.coarse_iters + self.fine_iters
    }
}

/// Preset that switches off one component of the full model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    NoIntrinsic,
    NoExtrinsic,
    NoCoarse,
    NoHg,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Self::NoIntrinsic, Self::NoExtrinsic, Self::NoCoarse, Self::NoHg];

    pub fn name(self) -> &'static str {
        match self {
            Self::NoIntrinsic => "no-intrinsic",
            Self::NoExtrinsic => "no-extrinsic",
            Self::NoCoarse => "no-coarse",
            Self::NoHg => "no-hg",
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = EnsError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|a| a.name()).collect();
            EnsError::Argument(format!("unknown ablation {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub shader: ShaderConfig,
    pub mask: MaskParams,
    pub weights: LossWeights,
    pub schedule: Schedule,
    pub ablation: Option<Ablation>,
    pub precision: Precision,
    /// Steps between checkpoints; zero writes only the final one.
    pub checkpoint_every: u64,
    /// Steps between preview renders; zero disables them.
    pub preview_every: u64,
    pub divergence_limit: f64,
    pub divergence_patience: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            shader: ShaderConfig::default(),
            mask: MaskParams::default(),
            weights: LossWeights::default(),
            schedule: Schedule::default(),
            ablation: None,
            precision: Precision::F32,
            checkpoint_every: 0,
            preview_every: 0,
            divergence_limit: 1e3,
            divergence_patience: 50,
        }
    }
}

impl TrainConfig {
    /// Tiny networks, a level-2 eigenbasis and ten steps, for quick end-to-end checks.
    pub fn smoke() -> Self {
        Self {
            model: ModelConfig {
                hidden: 32,
                z_width: 8,
                rff_width: 16,
                eigen: EigenConfig {
                    level: 2,
                    computed: 40,
                    policy: EigenPolicy {
                        low: 16,
                        high: Some((30, 40)),
                    },
                    ..EigenConfig::default()
                },
                coarse_intrinsic_low: 8,
                delta_ramp: 4,
                ..ModelConfig::default()
            },
            shader: ShaderConfig {
                hidden: 32,
                layers: 2,
                ..ShaderConfig::default()
            },
            schedule: Schedule {
                coarse_iters: 4,
                fine_iters: 6,
                coarse_level: 1,
                fine_level: 2,
                views_per_step: 3,
                pixel_fraction: 0.2,
                ..Schedule::default()
            },
            ..Self::default()
        }
    }

    /// Reseed every random component from one value.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.schedule.seed = seed;
        self.model.init_seed = seed.wrapping_add(13);
        self.shader.seed = seed.wrapping_add(21);
        self
    }

    /// Configuration with the ablation preset folded in.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        match c.ablation {
            Some(Ablation::NoIntrinsic) => c.model.zero_intrinsic = true,
            Some(Ablation::NoExtrinsic) => c.model.zero_extrinsic = true,
            Some(Ablation::NoCoarse) => c.model.use_coarse = false,
            Some(Ablation::NoHg) => c.weights.geometry = 0.0,
            None => {}
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.weights.validate()?;
        let s = &self.schedule;
        if s.coarse_level > s.fine_level || s.fine_level > ICOSPHERE_MAX_LEVEL {
            return Err(EnsError::Config(format!(
                "mesh levels {} -> {} must be increasing and at most {ICOSPHERE_MAX_LEVEL}",
                s.coarse_level, s.fine_level
            )));
        }
        if !(s.pixel_fraction > 0.0 && s.pixel_fraction <= 1.0) {
            return Err(EnsError::Config(format!("pixel fraction {} outside (0, 1]", s.pixel_fraction)));
        }
        if s.views_per_step == 0 {
            return Err(EnsError::Config("views per step must be positive".into()));
        }
        for (name, v) in [("lr_shader", s.lr_shader), ("lr_deform", s.lr_deform), ("lr_decay_at_refine", s.lr_decay_at_refine)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EnsError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.mask.sharpness > 0.0 && self.mask.band >= 0.0) {
            return Err(EnsError::Config("mask sharpness must be positive and band non-negative".into()));
        }
        if self.divergence_patience == 0 || !(self.divergence_limit > 0.0) {
            return Err(EnsError::Config("divergence limit and patience must be positive".into()));
        }
        Ok(())
    }
}
