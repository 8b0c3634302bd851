use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{FusionConfig, SamplingMode};
use crate::synthetic::{CameraSpec, CorruptionSpec, PriorModel, SceneSpec, TrajectorySpec};

/// Ablation arm: uniform sampling, probabilistic sampling, or probabilistic
/// sampling with consistency weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arm {
    #[serde(rename = "US")]
    Us,
    #[serde(rename = "PS")]
    Ps,
    #[serde(rename = "PS+CW")]
    PsCw,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Us, Arm::Ps, Arm::PsCw];

    pub fn as_str(&self) -> &'static str {
        match self {
            Arm::Us => "US",
            Arm::Ps => "PS",
            Arm::PsCw => "PS+CW",
        }
    }

    /// The fusion settings this arm implies on top of `base`.
    pub fn apply(&self, base: &FusionConfig) -> FusionConfig {
        let mut f = base.clone();
        match self {
            Arm::Us => {
                f.sampling_mode = SamplingMode::Uniform;
                f.weighting_enabled = false;
            }
            Arm::Ps => {
                f.sampling_mode = SamplingMode::Probabilistic;
                f.weighting_enabled = false;
            }
            Arm::PsCw => {
                f.sampling_mode = SamplingMode::Probabilistic;
                f.weighting_enabled = true;
            }
        }
        f
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "US" => Ok(Arm::Us),
            "PS" => Ok(Arm::Ps),
            "PS+CW" => Ok(Arm::PsCw),
            other => Err(Error::config("arm", format!("expected US, PS or PS+CW, got {other:?}"))),
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_arm() -> Arm {
    Arm::PsCw
}

/// One experiment. Unknown keys are rejected.
///
/// The top-level `seed` drives the prior noise; `prior.seed` is overwritten
/// with it before the window is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub scene: SceneSpec,
    #[serde(default)]
    pub camera: CameraSpec,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub prior: PriorModel,
    #[serde(default)]
    pub corruption: Option<CorruptionSpec>,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_arm")]
    pub arm: Arm,
    #[serde(default)]
    pub depth_cap: Option<f64>,
    #[serde(default)]
    pub png: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            // Name the offending key where serde reports one.
            let msg = e.to_string();
            let field = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.contains("field"))
                .unwrap_or("<document>")
                .to_string();
            Error::config(field, msg)
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Fusion settings after the arm is applied.
    pub fn effective_fusion(&self) -> FusionConfig {
        self.arm.apply(&self.fusion)
    }

    pub fn effective_prior(&self) -> PriorModel {
        PriorModel {
            seed: self.seed,
            ..self.prior.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.effective_fusion().validate()?;
        self.effective_prior().validate()?;
        self.camera.matching_intrinsics()?;
        self.trajectory.poses()?;
        if let Some(cap) = self.depth_cap {
            if !(cap > 0.0) {
                return Err(Error::config("depth_cap", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Parameter swept by [`crate::experiment::run_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NSamples,
    NIter,
    Beta,
    Kappa,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::NSamples => "n_samples",
            SweepAxis::NIter => "n_iter",
            SweepAxis::Beta => "beta",
            SweepAxis::Kappa => "kappa",
        }
    }

    /// `config` with the axis set to `value`.
    pub fn apply(&self, config: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = config.clone();
        let as_count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 && v <= u16::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::config(
                    format!("fusion.{}", self.as_str()),
                    format!("sweep value {v} is not a positive integer"),
                ))
            }
        };
        match self {
            SweepAxis::NSamples => c.fusion.n_samples = as_count(value)?,
            SweepAxis::NIter => c.fusion.n_iter = as_count(value)?,
            SweepAxis::Beta => c.fusion.beta = value,
            SweepAxis::Kappa => c.fusion.kappa = value,
        }
        Ok(c)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n_samples" => Ok(SweepAxis::NSamples),
            "n_iter" => Ok(SweepAxis::NIter),
            "beta" => Ok(SweepAxis::Beta),
            "kappa" => Ok(SweepAxis::Kappa),
            other => Err(Error::config(
                "axis",
                format!("expected n_samples, n_iter, beta or kappa, got {other:?}"),
            )),
        }
    }
}
