//! Experiment configuration: one TOML file per run, strictly parsed.

use std::path::{Path, PathBuf};

use disinr_core::data::PhantomFamilyConfig;
use disinr_core::encoders::{Backbone, HashEncodingConfig};
use disinr_core::models::{ModelConfig, ModelKind, Preset};
use disinr_core::physics::{
    make_coil_maps, make_mask, FanBeamGeometry, OperatorDesc, SamplingMaskConfig,
};
use disinr_core::rng::sub_seed;
use disinr_core::training::TrainConfig;
use disinr_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// File name of the resolved-config echo written into every output directory.
pub const CONFIG_ECHO: &str = "config.toml";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Direct image fitting under the identity operator.
    #[default]
    VolumeFit,
    Mri,
    Ct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub backbone: Backbone,
    pub preset: Preset,
    /// Replaces the preset's hash grid.
    pub hash: Option<HashEncodingConfig>,
    pub encoder_width: Option<usize>,
    pub feature_dim: Option<usize>,
    pub decoder_width: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: ModelKind::DisInr,
            backbone: Backbone::Ngp,
            preset: Preset::Desk,
            hash: None,
            encoder_width: None,
            feature_dim: None,
            decoder_width: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorSection {
    pub noise_sigma: f64,
    /// CT projection count over a full turn.
    pub views: usize,
    /// Explicit CT geometry; otherwise derived from the model preset.
    pub geometry: Option<FanBeamGeometry>,
    /// MRI sampling; defaults to Cartesian AF 6 with 24 ACS rows per 256.
    pub mask: Option<SamplingMaskConfig>,
    /// MRI receive coils.
    pub coils: usize,
}

impl Default for OperatorSection {
    fn default() -> Self {
        Self {
            noise_sigma: 0.0,
            views: 60,
            geometry: None,
            mask: None,
            coils: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    /// Pre-train, in-domain test and out-of-domain test shares.
    pub fractions: [f64; 3],
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            fractions: [0.6, 0.2, 0.2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub data: PathBuf,
    pub runs: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            data: "data".into(),
            runs: "runs".into(),
        }
    }
}

/// Everything a command needs. Every random stream derives from the
/// top-level `seed`; nested `seed` fields are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub task: Task,
    pub seed: u64,
    pub model: ModelSection,
    pub phantom: PhantomFamilyConfig,
    pub operator: OperatorSection,
    pub split: SplitSection,
    /// Pre-training schedule.
    pub train: TrainConfig,
    /// Test-time adaptation schedule.
    pub adapt: TrainConfig,
    pub paths: PathsSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::VolumeFit,
            seed: 0,
            model: ModelSection::default(),
            phantom: PhantomFamilyConfig::default(),
            operator: OperatorSection::default(),
            split: SplitSection::default(),
            train: TrainConfig::default(),
            adapt: TrainConfig::default(),
            paths: PathsSection::default(),
        }
    }
}

/// Command-line overrides applied before resolution.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies overrides and validates.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(preset) = o.preset {
            self.model.preset = preset;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn phantom_config(&self) -> PhantomFamilyConfig {
        PhantomFamilyConfig {
            seed: sub_seed(self.seed, "phantom"),
            ..self.phantom.clone()
        }
    }

    pub fn pretrain_config(&self) -> TrainConfig {
        TrainConfig {
            seed: sub_seed(self.seed, "pretrain"),
            ..self.train.clone()
        }
    }

    pub fn adapt_config(&self) -> TrainConfig {
        TrainConfig {
            seed: sub_seed(self.seed, "adapt"),
            ..self.adapt.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config("seed must fit in a signed 64-bit integer".into()));
        }
        let nested = [self.phantom.seed, self.train.seed, self.adapt.seed];
        if nested.iter().chain(self.operator.mask.as_ref().map(|m| &m.seed)).any(|&s| s != 0) {
            log::warn!("nested seed fields are ignored; all seeds derive from the top-level seed");
        }
        self.phantom.validate()?;
        self.train.validate()?;
        self.adapt.validate()?;
        self.model_config()?.validate()?;
        if !(self.operator.noise_sigma >= 0.0) {
            return Err(Error::Config("operator.noise_sigma must be non-negative".into()));
        }
        if self.task == Task::Mri && self.operator.coils == 0 {
            return Err(Error::Config("operator.coils must be at least 1".into()));
        }
        if self.task == Task::Ct {
            let g = self.geometry()?;
            if g.image != self.phantom.extents {
                return Err(Error::Config(format!(
                    "CT geometry images {:?} but phantoms are {:?}",
                    g.image, self.phantom.extents
                )));
            }
        }
        Ok(())
    }

    /// Writes the config echo into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
        let path = dir.join(CONFIG_ECHO);
        std::fs::write(&path, self.to_toml()?)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
    }

    pub fn channels(&self) -> usize {
        if self.task == Task::Mri {
            2
        } else {
            1
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let m = &self.model;
        let mut cfg = ModelConfig::preset(m.preset, m.kind, 2, self.channels());
        cfg.backbone = m.backbone;
        if let Some(h) = &m.hash {
            cfg.hash = h.clone();
        }
        cfg.encoder_width = m.encoder_width.unwrap_or(cfg.encoder_width);
        cfg.feature_dim = m.feature_dim.unwrap_or(cfg.feature_dim);
        cfg.decoder_width = m.decoder_width.unwrap_or(cfg.decoder_width);
        Ok(cfg)
    }

    pub fn geometry(&self) -> Result<FanBeamGeometry> {
        let g = match &self.operator.geometry {
            Some(g) => g.clone(),
            None => match self.model.preset {
                Preset::Paper => FanBeamGeometry::paper(self.operator.views),
                Preset::Desk => {
                    let [h, w] = self.phantom.extents;
                    if h != w {
                        return Err(Error::Config("derived CT geometry needs square phantoms".into()));
                    }
                    FanBeamGeometry::desk_sized(h, self.operator.views)
                }
            },
        };
        g.validate()?;
        Ok(g)
    }

    /// Mask used for MRI; the default ACS width scales with the grid.
    pub fn mask_config(&self) -> SamplingMaskConfig {
        let cfg = self.operator.mask.clone().unwrap_or_else(|| {
            let rows = self.phantom.extents[0];
            let acs = ((24 * rows) as f64 / 256.0).round().max(1.0) as usize;
            SamplingMaskConfig::cartesian(6.0, acs)
        });
        SamplingMaskConfig {
            seed: sub_seed(self.seed, "mask"),
            ..cfg
        }
    }

    pub fn operator_desc(&self) -> Result<OperatorDesc> {
        let extents = self.phantom.extents;
        Ok(match self.task {
            Task::VolumeFit => OperatorDesc::Identity {
                shape: extents.to_vec(),
            },
            Task::Ct => OperatorDesc::FanBeam(self.geometry()?),
            Task::Mri => OperatorDesc::FourierMask {
                mask: make_mask(&self.mask_config(), extents)?,
                coil_maps: make_coil_maps(extents, self.operator.coils, sub_seed(self.seed, "coils"))?,
            },
        })
    }
}
