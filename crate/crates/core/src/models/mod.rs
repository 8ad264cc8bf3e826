//! Composite coordinate networks and their parameter partitions.
//!
//! Three model kinds share the same building blocks:
//!
//! - **DisINR**: `x = g_ψ(f_φ(c) ‖ f_φᵢ(c))`: a shared encoder `f_φ`, one
//!   encoder per subject `f_φᵢ` and a shared decoder `g_ψ` fed the
//!   concatenation (shared features first).
//! - **Naive INR**: a single encoder/decoder trained from scratch, with the
//!   encoder widened so the total size matches DisINR.
//! - **Shared-encoder baseline**: one shared encoder and a decoder per subject.

mod checkpoint;
mod mlp;
mod params;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use mlp::{Activation, Mlp};
pub use params::{Bound, ParamGrads, ParameterSet, Partition, SHARED_DECODER, SHARED_ENCODER};

use crate::diffcore::{Tape, Tensor, Var};
use crate::encoders::{Backbone, Encoding, HashEncoding, HashEncodingConfig, SineLayer};
use crate::{rng, Error, Result};

pub const ENCODER: &str = "encoder";
pub const DECODER: &str = "decoder";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[serde(rename = "disinr")]
    DisInr,
    NaiveInr,
    StrainerLike,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Paper,
    #[default]
    Desk,
}

/// Which subject-specific partition a forward pass uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SubjectId {
    Index(usize),
    /// The reserved partition created for test-time adaptation.
    Test,
}

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubjectId::Index(i) => write!(f, "{i}"),
            SubjectId::Test => f.write_str("test"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub backbone: Backbone,
    /// Spatial dimensionality of the coordinates (2 or 3).
    pub dims: usize,
    /// Output channels: 1 for real images, 2 for complex (real, imag).
    pub channels: usize,
    pub hash: HashEncodingConfig,
    pub fourier_freqs: usize,
    pub siren_width: usize,
    pub siren_omega: f64,
    /// Width of the two encoder layers.
    pub encoder_width: usize,
    /// Output width of each DisINR encoder.
    pub feature_dim: usize,
    pub decoder_width: usize,
    /// Hash entries start uniform in `±hash_init_scale`.
    pub hash_init_scale: f64,
}

impl ModelConfig {
    pub fn preset(preset: Preset, kind: ModelKind, dims: usize, channels: usize) -> Self {
        let hash = match preset {
            Preset::Paper => HashEncodingConfig::paper(),
            Preset::Desk => HashEncodingConfig::desk(),
        };
        Self {
            kind,
            backbone: Backbone::Ngp,
            dims,
            channels,
            hash,
            fourier_freqs: 10,
            siren_width: 128,
            siren_omega: 30.0,
            encoder_width: 128,
            feature_dim: 128,
            decoder_width: 128,
            hash_init_scale: 1e-4,
        }
    }

    pub fn desk(kind: ModelKind, dims: usize, channels: usize) -> Self {
        Self::preset(Preset::Desk, kind, dims, channels)
    }

    pub fn with_kind(&self, kind: ModelKind) -> Self {
        Self {
            kind,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dims) {
            return Err(Error::Config(format!("dims must be 1–3, got {}", self.dims)));
        }
        if self.channels == 0 || self.encoder_width == 0 || self.feature_dim == 0 || self.decoder_width == 0 {
            return Err(Error::Config("layer widths and channels must be positive".into()));
        }
        if self.backbone == Backbone::Ngp {
            self.hash.validate()?;
        }
        Ok(())
    }

    fn encoding(&self, widen: bool) -> Result<Encoding> {
        let factor = if widen { 2 } else { 1 };
        Ok(match self.backbone {
            Backbone::Ngp => {
                let mut cfg = self.hash.clone();
                cfg.features_per_entry *= factor;
                Encoding::Hash(HashEncoding::new(cfg, self.dims)?)
            }
            Backbone::Nerf => Encoding::Fourier {
                dims: self.dims,
                num_freqs: self.fourier_freqs,
            },
            Backbone::Siren => Encoding::Sine(SineLayer {
                in_dim: self.dims,
                width: self.siren_width * factor,
                omega: self.siren_omega,
            }),
        })
    }

    fn encoder(&self, widen: bool) -> Result<Encoder> {
        let encoding = self.encoding(widen)?;
        let out = if widen { 2 * self.feature_dim } else { self.feature_dim };
        let mlp = Mlp::new(
            vec![encoding.output_dim(), self.encoder_width, out],
            vec![Activation::Relu, Activation::Relu],
        );
        Ok(Encoder { encoding, mlp })
    }

    fn decoder(&self, input: usize) -> Mlp {
        Mlp::new(
            vec![input, self.decoder_width, self.channels],
            vec![Activation::Relu, Activation::Identity],
        )
    }
}

/// Coordinate encoding followed by two ReLU layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub encoding: Encoding,
    pub mlp: Mlp,
}

impl Encoder {
    pub fn output_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.encoding.param_count() + self.mlp.param_count()
    }

    pub fn init(&self, rng: &mut impl rand::Rng, hash_scale: f64) -> Vec<Tensor> {
        let mut t = self.encoding.init(rng, hash_scale);
        t.extend(self.mlp.init(rng));
        t
    }

    pub fn forward(&self, tape: &mut Tape, params: &[Var], coords: &Tensor) -> Result<Var> {
        let k = self.encoding.num_tensors();
        let e = self.encoding.forward(tape, &params[..k], coords)?;
        self.mlp.forward(tape, &params[k..], e)
    }
}

/// Resolved architecture of a [`ModelConfig`].
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub kind: ModelKind,
    /// Shared encoder (DisINR, shared-encoder baseline) or the single encoder (naive).
    pub encoder: Encoder,
    /// Per-subject module: an encoder for DisINR; `None` otherwise.
    pub subject_encoder: Option<Encoder>,
    pub decoder: Mlp,
}

impl Architecture {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(match cfg.kind {
            ModelKind::DisInr => {
                let enc = cfg.encoder(false)?;
                let dec = cfg.decoder(2 * enc.output_dim());
                Self {
                    kind: cfg.kind,
                    subject_encoder: Some(enc.clone()),
                    encoder: enc,
                    decoder: dec,
                }
            }
            ModelKind::NaiveInr => {
                let enc = cfg.encoder(true)?;
                let dec = cfg.decoder(enc.output_dim());
                Self {
                    kind: cfg.kind,
                    encoder: enc,
                    subject_encoder: None,
                    decoder: dec,
                }
            }
            ModelKind::StrainerLike => {
                let enc = cfg.encoder(false)?;
                let dec = cfg.decoder(enc.output_dim());
                Self {
                    kind: cfg.kind,
                    encoder: enc,
                    subject_encoder: None,
                    decoder: dec,
                }
            }
        })
    }

    /// Parameters of one complete network: shared modules plus one subject module.
    pub fn model_param_count(&self) -> usize {
        self.encoder.param_count()
            + self.decoder.param_count()
            + self.subject_encoder.as_ref().map_or(0, Encoder::param_count)
    }

    /// Parameters trained at test time with the default freezing policy.
    pub fn adapt_param_count(&self) -> usize {
        match self.kind {
            ModelKind::DisInr => self.subject_encoder.as_ref().unwrap().param_count(),
            ModelKind::NaiveInr | ModelKind::StrainerLike => self.model_param_count(),
        }
    }
}

/// Name of the subject partition for `subject` under `kind`.
pub fn subject_partition(kind: ModelKind, subject: SubjectId) -> Result<String> {
    match kind {
        ModelKind::DisInr => Ok(format!("subject_encoder/{subject}")),
        ModelKind::StrainerLike => Ok(format!("subject_decoder/{subject}")),
        ModelKind::NaiveInr => Err(Error::Lookup("the naive INR has no subject partitions".into())),
    }
}

/// A configured network together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    arch: Architecture,
    pub params: ParameterSet,
    /// Record ids of the pre-training subjects, index-aligned with subject partitions.
    pub record_ids: Vec<String>,
}

impl Model {
    /// Fresh model with `subjects` subject partitions (ignored for the naive INR).
    pub fn new(config: ModelConfig, subjects: usize, seed: u64) -> Result<Self> {
        let arch = Architecture::new(&config)?;
        let scale = config.hash_init_scale;
        let mut params = ParameterSet::new();
        let mut rng = rng::stream(seed, "init/encoder");
        let enc = arch.encoder.init(&mut rng, scale);
        let mut rng = rng::stream(seed, "init/decoder");
        match config.kind {
            ModelKind::NaiveInr => {
                params.insert(Partition::new(ENCODER, enc));
                params.insert(Partition::new(DECODER, arch.decoder.init(&mut rng)));
            }
            ModelKind::DisInr => {
                params.insert(Partition::new(SHARED_ENCODER, enc));
                params.insert(Partition::new(SHARED_DECODER, arch.decoder.init(&mut rng)));
            }
            ModelKind::StrainerLike => {
                params.insert(Partition::new(SHARED_ENCODER, enc));
            }
        }
        let mut model = Self {
            config,
            arch,
            params,
            record_ids: Vec::new(),
        };
        if model.config.kind != ModelKind::NaiveInr {
            for i in 0..subjects {
                let mut rng = rng::stream(seed, &format!("init/subject/{i}"));
                let t = model.subject_init(&mut rng);
                let name = subject_partition(model.config.kind, SubjectId::Index(i))?;
                model.params.insert(Partition::new(name, t));
            }
        }
        Ok(model)
    }

    pub(crate) fn from_parts(
        config: ModelConfig,
        params: ParameterSet,
        record_ids: Vec<String>,
    ) -> Result<Self> {
        let arch = Architecture::new(&config)?;
        Ok(Self {
            config,
            arch,
            params,
            record_ids,
        })
    }

    fn subject_init(&self, rng: &mut rng::Rng) -> Vec<Tensor> {
        match self.config.kind {
            ModelKind::DisInr => self
                .arch
                .subject_encoder
                .as_ref()
                .unwrap()
                .init(rng, self.config.hash_init_scale),
            _ => self.arch.decoder.init(rng),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    /// Number of pre-training subject partitions.
    pub fn num_subjects(&self) -> usize {
        (0..)
            .take_while(|&i| {
                subject_partition(self.kind(), SubjectId::Index(i))
                    .map(|n| self.params.contains(&n))
                    .unwrap_or(false)
            })
            .count()
    }

    /// Adds (or replaces) the subject partition `subject` with a fresh init.
    pub fn spawn_subject(&mut self, subject: SubjectId, seed: u64) -> Result<()> {
        let name = subject_partition(self.kind(), subject)?;
        let mut rng = rng::stream(seed, "spawn");
        let t = self.subject_init(&mut rng);
        self.params.insert(Partition::new(name, t));
        Ok(())
    }

    /// Copies subject `from`'s partition into `to` (shared-encoder baseline option).
    pub fn copy_subject(&mut self, from: SubjectId, to: SubjectId) -> Result<()> {
        let src = subject_partition(self.kind(), from)?;
        let dst = subject_partition(self.kind(), to)?;
        let tensors = self.params.get(&src)?.tensors.clone();
        self.params.insert(Partition::new(dst, tensors));
        Ok(())
    }

    /// Names of the population-shared partitions.
    pub fn shared_partitions(&self) -> Vec<&'static str> {
        match self.kind() {
            ModelKind::DisInr => vec![SHARED_ENCODER, SHARED_DECODER],
            ModelKind::StrainerLike => vec![SHARED_ENCODER],
            ModelKind::NaiveInr => Vec::new(),
        }
    }

    /// Shared (or, for the naive INR, the only) encoder features.
    pub fn shared_features(&self, tape: &mut Tape, bound: &Bound, coords: &Tensor) -> Result<Var> {
        let name = match self.kind() {
            ModelKind::NaiveInr => ENCODER,
            _ => SHARED_ENCODER,
        };
        self.arch.encoder.forward(tape, bound.get(name)?, coords)
    }

    pub fn subject_features(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        subject: SubjectId,
        coords: &Tensor,
    ) -> Result<Var> {
        let enc = self
            .arch
            .subject_encoder
            .as_ref()
            .ok_or_else(|| Error::Lookup("model has no subject encoders".into()))?;
        let name = subject_partition(self.kind(), subject)?;
        enc.forward(tape, bound.get(&name)?, coords)
    }

    /// Decodes given precomputed shared features. Output is `R × channels`.
    pub fn forward_with_shared(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        subject: SubjectId,
        shared: Var,
        coords: &Tensor,
    ) -> Result<Var> {
        match self.kind() {
            ModelKind::DisInr => {
                let own = self.subject_features(tape, bound, subject, coords)?;
                let z = tape.concat(shared, own)?;
                self.arch.decoder.forward(tape, bound.get(SHARED_DECODER)?, z)
            }
            ModelKind::StrainerLike => {
                let name = subject_partition(self.kind(), subject)?;
                self.arch.decoder.forward(tape, bound.get(&name)?, shared)
            }
            ModelKind::NaiveInr => self.arch.decoder.forward(tape, bound.get(DECODER)?, shared),
        }
    }

    /// Full forward pass for one subject (ignored by the naive INR).
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        subject: SubjectId,
        coords: &Tensor,
    ) -> Result<Var> {
        let shared = self.shared_features(tape, bound, coords)?;
        self.forward_with_shared(tape, bound, subject, shared, coords)
    }

    /// Evaluates the network without keeping gradients.
    pub fn render(&self, subject: SubjectId, coords: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind_constants(&mut tape, |n| self.partition_used(n, subject));
        let out = self.forward(&mut tape, &bound, subject, coords)?;
        Ok(tape.value(out).clone())
    }

    /// Shared-encoder features without gradients.
    pub fn shared_feature_values(&self, coords: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind_constants(&mut tape, |n| n == SHARED_ENCODER || n == ENCODER);
        let v = self.shared_features(&mut tape, &bound, coords)?;
        Ok(tape.value(v).clone())
    }

    pub fn subject_feature_values(&self, subject: SubjectId, coords: &Tensor) -> Result<Tensor> {
        let name = subject_partition(self.kind(), subject)?;
        let mut tape = Tape::new();
        let bound = self.params.bind_constants(&mut tape, |n| n == name);
        let v = self.subject_features(&mut tape, &bound, subject, coords)?;
        Ok(tape.value(v).clone())
    }

    /// True if partition `name` participates in the forward pass of `subject`.
    pub fn partition_used(&self, name: &str, subject: SubjectId) -> bool {
        match self.kind() {
            ModelKind::NaiveInr => true,
            _ => {
                self.shared_partitions().contains(&name)
                    || subject_partition(self.kind(), subject).is_ok_and(|s| s == name)
            }
        }
    }
}
