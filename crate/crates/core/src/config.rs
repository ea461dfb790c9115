//! Run configurations and the per-system presets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossConfig;
use crate::network::NetworkShape;
use crate::systems::builtin;
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub sigma1: f64,
    pub sigma2: f64,
}

/// Everything needed to reproduce one identification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub system: String,
    pub noise: Noise,
    pub shape: NetworkShape,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        self.loss.validate()?;
        self.train.validate()?;
        for (name, s) in [("sigma1", self.noise.sigma1), ("sigma2", self.noise.sigma2)] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Invalid(format!("{name} must be >= 0, got {s}")));
            }
        }
        Ok(())
    }
}

pub const PRESET_NAMES: [&str; 7] = [
    "takens_bogdanov",
    "pendulum",
    "rossler",
    "lorenz",
    "fitzhugh_nagumo",
    "chemical_kinetics",
    "chua",
];

/// Published settings for a built-in system.
pub fn preset(name: &str) -> Option<RunConfig> {
    let sys = builtin(name)?;
    let (stacks, layers, lr, epochs) = match name {
        "takens_bogdanov" => (1, 10, 0.01, 25),
        "pendulum" => (1, 10, 0.032, 100),
        "rossler" => (1, 10, 0.01, 800),
        "lorenz" => (1, 10, 0.01, 6400),
        "fitzhugh_nagumo" => (2, 1, 0.01, 3200),
        "chemical_kinetics" => (2, 1, 0.01, 6400),
        "chua" => (1, 10, 0.032, 6400),
        _ => return None,
    };
    Some(RunConfig {
        system: name.to_string(),
        noise: Noise {
            sigma1: sys.sigma1,
            sigma2: sys.sigma2,
        },
        shape: NetworkShape::new(sys.n(), stacks, layers).expect("valid preset shape"),
        loss: LossConfig::custom(),
        train: TrainConfig {
            learning_rate: lr,
            epochs,
            ..TrainConfig::default()
        },
        seed: 0,
    })
}
