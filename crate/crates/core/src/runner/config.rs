//! Experiment configuration. A profile supplies defaults; a TOML file may
//! override any subset of fields.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cad::CadConfig;
use crate::em_filter::FilterConfig;
use crate::error::{Error, Result};
use crate::io::FrameGeometry;
use crate::mixer::MixUnit;

use super::mnist::AutoencoderConfig;
use super::sprites::SpriteConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Small, fast settings for continuous integration.
    #[default]
    Ci,
    /// Larger models and data; adversarial training on.
    Full,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Conventional,
    #[default]
    PlugAndPlay,
    Mnist,
    Sprites,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixSettings {
    pub s: f64,
    pub replicates: usize,
    /// Stream length; defaults to the number of normal samples.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total: Option<usize>,
    pub unit: MixUnit,
}

impl Default for MixSettings {
    fn default() -> Self {
        MixSettings {
            s: 0.25,
            replicates: 3,
            total: None,
            unit: MixUnit::Pair,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSettings {
    /// Normal-only training clips (conventional mode).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_root: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_labels: Option<PathBuf>,
    /// Labeled clips: test split (conventional) or the mixing pool
    /// (plug-and-play).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    pub geometry: FrameGeometry,
    /// Average per-clip AUCs instead of pooling all frames.
    pub per_clip_auc: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MnistSettings {
    pub dir: PathBuf,
    pub s_grid: Vec<f64>,
    pub replicates: usize,
    pub normal_digit: u8,
    pub anomalous_digit: u8,
    pub filter: FilterConfig,
    pub autoencoder: AutoencoderConfig,
    /// Samples per admission-count bucket.
    pub bucket: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total: Option<usize>,
    /// Also run every grid point with the filter disabled.
    pub compare_unfiltered: bool,
}

impl Default for MnistSettings {
    fn default() -> Self {
        MnistSettings {
            dir: PathBuf::from("data/mnist"),
            s_grid: vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.35, 0.5],
            replicates: 3,
            normal_digit: 0,
            anomalous_digit: 1,
            filter: FilterConfig {
                alpha: 0.25,
                warmup: 0,
                ..FilterConfig::default()
            },
            autoencoder: AutoencoderConfig::default(),
            bucket: 100,
            total: None,
            compare_unfiltered: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpriteSettings {
    pub data: SpriteConfig,
    pub model: CadConfig,
    /// Also run the plug-and-play loop on a mixed sprite stream.
    pub plug_and_play: bool,
}

impl Default for SpriteSettings {
    fn default() -> Self {
        Self::for_profile(Profile::Ci)
    }
}

impl SpriteSettings {
    pub fn for_profile(profile: Profile) -> Self {
        let data = match profile {
            Profile::Ci => SpriteConfig::default(),
            Profile::Full => SpriteConfig {
                height: 96,
                width: 128,
                speed: 3,
                min_size: 12,
                max_size: 20,
                train_clips: 200,
                train_frames: 16,
                test_clips: 40,
                test_frames: 8,
                ..SpriteConfig::default()
            },
        };
        // A single short epoch: the generator needs a larger step than the
        // long-run default to learn the sprite motion.
        let mut model = CadConfig {
            height: data.height,
            width: data.width,
            lr_generator: 1e-3,
            lr_discriminator: 1e-4,
            ..CadConfig::default()
        };
        match profile {
            Profile::Ci => {
                model.generator.base_width = 8;
                model.adversarial = false;
                model.lambda = 0.0;
            }
            Profile::Full => {
                model.generator.base_width = 16;
            }
        }
        SpriteSettings {
            data,
            model,
            plug_and_play: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub profile: Profile,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub filter: FilterConfig,
    pub mix: MixSettings,
    pub model: CadConfig,
    pub data: DataSettings,
    pub mnist: MnistSettings,
    pub sprites: SpriteSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Ci)
    }
}

impl ExperimentConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let mut model = CadConfig::default();
        if profile == Profile::Ci {
            model.generator.base_width = 8;
        }
        ExperimentConfig {
            mode: Mode::default(),
            profile,
            seed: 0,
            out_dir: PathBuf::from("out"),
            filter: FilterConfig::default(),
            mix: MixSettings::default(),
            model,
            data: DataSettings::default(),
            mnist: MnistSettings::default(),
            sprites: SpriteSettings::for_profile(profile),
        }
    }

    /// Profile defaults overlaid with the tables of a TOML document.
    pub fn from_toml(text: &str, profile: Profile) -> Result<Self> {
        let overlay: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        let base = toml::Table::try_from(Self::for_profile(profile))
            .map_err(|e| Error::Config(format!("cannot encode defaults: {e}")))?;
        let merged = merge(base, overlay);
        let mut cfg: Self = merged
            .try_into()
            .map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.profile = profile;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, profile: Profile) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, profile)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot encode config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.mnist.filter.validate()?;
        self.model.validate()?;
        self.sprites.model.validate()?;
        self.sprites.data.validate()?;
        if self.mix.replicates == 0 || self.mnist.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mix.s) {
            return Err(Error::Config(format!("anomaly portion {} outside [0, 1]", self.mix.s)));
        }
        if let Some(s) = self.mnist.s_grid.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Config(format!("anomaly portion {s} outside [0, 1]")));
        }
        if self.mnist.autoencoder.lr <= 0.0 {
            return Err(Error::Config("autoencoder learning rate must be positive".into()));
        }
        Ok(())
    }
}

fn merge(mut base: toml::Table, overlay: toml::Table) -> toml::Table {
    for (k, v) in overlay {
        match (base.remove(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                base.insert(k, toml::Value::Table(merge(b, o)));
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
    base
}
