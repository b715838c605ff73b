//! Experiment configuration, read from TOML.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SplitSpec;
use crate::error::{Error, Result};
use crate::metrics::StatisticsConfig;
use crate::reservoir::EsnHyperParams;
use crate::systems::SystemSpec;

/// Which state components the network sees and predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IoMode {
    /// One observed channel in, every channel out.
    #[default]
    PartialInFullOut,
    FullInFullOut,
    PartialInPartialOut,
}

impl IoMode {
    /// `(input_dim, output_dim)` for a series with `channels` channels.
    pub fn dims(self, channels: usize) -> (usize, usize) {
        match self {
            IoMode::PartialInFullOut => (1, channels),
            IoMode::FullInFullOut => (channels, channels),
            IoMode::PartialInPartialOut => (1, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DivergenceConfig {
    pub delta0: f64,
    pub r: f64,
    pub n_pairs: usize,
}

impl Default for DivergenceConfig {
    fn default() -> Self {
        Self {
            delta0: 2.22e-3,
            r: 0.01,
            n_pairs: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Master seed. Replaces `esn.seed` and seeds noise and ensemble offsets.
    #[serde(default)]
    pub seed: u64,
    /// Simulated source. Exactly one of `system` and `dataset` is set.
    #[serde(default)]
    pub system: Option<SystemSpec>,
    /// CSV source, resolved relative to the config file.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Exponent used for Lyapunov units and washout; defaults to the
    /// system's reference value.
    #[serde(default)]
    pub reference_mle: Option<f64>,
    /// `washout = 0` selects two Lyapunov times.
    #[serde(default)]
    pub esn: EsnHyperParams,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default = "default_ensemble")]
    pub ensemble_size: usize,
    #[serde(default = "default_noise")]
    pub noise_levels: Vec<f64>,
    #[serde(default)]
    pub io_mode: IoMode,
    /// Length of each ensemble prediction, in Lyapunov times.
    #[serde(default = "default_horizon")]
    pub horizon_lyapunov: f64,
    #[serde(default)]
    pub statistics: StatisticsConfig,
    #[serde(default)]
    pub divergence: DivergenceConfig,
}

fn default_thresholds() -> Vec<f64> {
    vec![0.01, 0.1, 0.3]
}
fn default_ensemble() -> usize {
    1000
}
fn default_noise() -> Vec<f64> {
    vec![0.0, 0.01, 0.05, 0.1, 0.2]
}
fn default_horizon() -> f64 {
    25.0
}

impl ExperimentConfig {
    pub fn for_system(name: &str, system: SystemSpec) -> Self {
        Self {
            name: name.into(),
            seed: 0,
            system: Some(system),
            dataset: None,
            reference_mle: None,
            esn: EsnHyperParams::default(),
            split: SplitSpec::default(),
            thresholds: default_thresholds(),
            ensemble_size: default_ensemble(),
            noise_levels: default_noise(),
            io_mode: IoMode::default(),
            horizon_lyapunov: default_horizon(),
            statistics: StatisticsConfig::default(),
            divergence: DivergenceConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let (Some(ds), Some(dir)) = (&cfg.dataset, path.parent()) {
            if ds.is_relative() {
                cfg.dataset = Some(dir.join(ds));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match (&self.system, &self.dataset) {
            (Some(s), None) => s.validate().map_err(|e| Error::Config(e.to_string()))?,
            (None, Some(_)) if self.reference_mle.is_none() => {
                return bad("a dataset source needs `reference_mle`".into())
            }
            (None, Some(_)) => {}
            _ => return bad("set exactly one of `system` and `dataset`".into()),
        }
        if let Some(mle) = self.reference_mle {
            if !(mle > 0.0 && mle.is_finite()) {
                return bad(format!("reference_mle must be positive, got {mle}"));
            }
        }
        if self.thresholds.is_empty()
            || self.thresholds.iter().any(|r| !(*r > 0.0 && r.is_finite()))
            || self.thresholds.windows(2).any(|w| w[0] >= w[1])
        {
            return bad("thresholds must be positive and strictly ascending".into());
        }
        if self.ensemble_size == 0 {
            return bad("ensemble_size must be at least 1".into());
        }
        if self.noise_levels.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("noise levels must be non-negative".into());
        }
        if !(self.horizon_lyapunov > 0.0 && self.horizon_lyapunov.is_finite()) {
            return bad("horizon_lyapunov must be positive".into());
        }
        let f = self.split.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return bad(format!("split.train_fraction must lie in (0, 1), got {f}"));
        }
        let d = &self.divergence;
        if !(d.delta0 > 0.0 && d.r > 0.0 && d.n_pairs > 0) {
            return bad("divergence needs delta0 > 0, r > 0 and n_pairs > 0".into());
        }
        Ok(())
    }

    pub fn reference_mle(&self) -> f64 {
        self.reference_mle
            .or(self.system.map(|s| s.system.reference_mle()))
            .expect("validated config has a reference exponent")
    }

    /// Network settings for a series with `channels` channels sampled at
    /// `dt`: dimensions from the I/O mode, the master seed, and the washout
    /// rule when `esn.washout` is 0.
    pub fn resolved_hp(&self, channels: usize, dt: f64) -> EsnHyperParams {
        let (m, l) = self.io_mode.dims(channels);
        let mut hp = self.esn.clone();
        hp.input_dim = m;
        hp.output_dim = l;
        hp.seed = self.seed;
        if hp.washout == 0 {
            hp.washout = EsnHyperParams::washout_for(self.reference_mle(), dt);
        }
        hp
    }

    /// Steps in one ensemble prediction.
    pub fn horizon_steps(&self, dt: f64) -> usize {
        (self.horizon_lyapunov / (self.reference_mle() * dt)).ceil() as usize
    }
}
