//! The run configuration file: one JSON document, strict keys.
//!
//! Unknown keys are errors by design, so a typo in a hyperparameter name
//! fails the run instead of silently training with a default.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use tscn_core::augment::AugmentPolicy;
use tscn_core::data::SynthConfig;
use tscn_core::encoder::{EncoderSpec, LayerSpec, Shape};
use tscn_core::kernels::KernelSpec;
use tscn_core::trainer::{
    all_but_readout, peak_lr_for_batch, ProtocolConfig, ReadoutDim, StageConfig, FINETUNE_PEAK_LR,
    READOUT_LR,
};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Cifar10,
    Cifar100,
    Synthetic,
}

/// Exactly one dataset: CIFAR binaries from a directory, or the seeded
/// synthetic generator. Field applicability is validated per kind.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub classes: Option<usize>,
    #[serde(default)]
    pub per_class: Option<usize>,
    #[serde(default)]
    pub side: Option<usize>,
    #[serde(default)]
    pub jitter: Option<f64>,
    #[serde(default)]
    pub noise: Option<f64>,
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let synth_fields = self.classes.is_some()
            || self.per_class.is_some()
            || self.side.is_some()
            || self.jitter.is_some()
            || self.noise.is_some()
            || self.seed.is_some();
        match self.kind {
            DatasetKind::Synthetic => {
                if self.dir.is_some() {
                    return Err(CliError::Config("synthetic dataset takes no dir".into()));
                }
                if self.seed.is_none() {
                    return Err(CliError::Config("synthetic dataset needs a seed".into()));
                }
                self.synth_config().validate()?;
            }
            DatasetKind::Cifar10 | DatasetKind::Cifar100 => {
                if self.dir.is_none() {
                    return Err(CliError::Config("cifar datasets need a dir".into()));
                }
                if synth_fields {
                    return Err(CliError::Config(
                        "seed/classes/per_class/side/jitter/noise apply only to synthetic data"
                            .into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn synth_config(&self) -> SynthConfig {
        let d = SynthConfig::default();
        SynthConfig {
            classes: self.classes.unwrap_or(d.classes),
            per_class: self.per_class.unwrap_or(d.per_class),
            side: self.side.unwrap_or(d.side),
            jitter: self.jitter.unwrap_or(d.jitter),
            noise: self.noise.unwrap_or(d.noise),
        }
    }
}

/// Encoder sizing; the layer chain is the two conv/pool blocks of the
/// default backbone with these widths.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub conv_channels: Vec<usize>,
    pub backbone_out: usize,
    pub head_hidden: usize,
    /// Readout width during pretraining (stage 1).
    pub pretrain_dim: usize,
    /// Final embedding width.
    pub embed_dim: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            conv_channels: vec![16, 32],
            backbone_out: 64,
            head_hidden: 128,
            pretrain_dim: 64,
            embed_dim: 2,
        }
    }
}

impl ArchConfig {
    /// Build the encoder chain for a given input shape and readout width.
    pub fn spec(&self, input: Shape, readout: usize) -> Result<EncoderSpec> {
        if self.conv_channels.is_empty() {
            return Err(CliError::Config("conv_channels must not be empty".into()));
        }
        let mut layers = Vec::new();
        let mut channels = input.c;
        for &out in &self.conv_channels {
            layers.push(LayerSpec::Conv { in_channels: channels, out_channels: out });
            layers.push(LayerSpec::ReLU);
            layers.push(LayerSpec::MaxPool);
            channels = out;
        }
        layers.push(LayerSpec::GlobalAvgPool);
        layers.push(LayerSpec::Dense { in_units: channels, out_units: self.backbone_out });
        layers.push(LayerSpec::Dense { in_units: self.backbone_out, out_units: self.head_hidden });
        layers.push(LayerSpec::ReLU);
        layers.push(LayerSpec::Dense { in_units: self.head_hidden, out_units: readout });
        Ok(EncoderSpec::new(input, layers)?)
    }
}

/// Strict kernel selector: `{"kind": "cosine"|"gaussian", "tau": t}` or
/// `{"kind": "cauchy"}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub kind: String,
    #[serde(default)]
    pub tau: Option<f64>,
}

impl KernelSection {
    pub fn to_kernel(&self) -> Result<KernelSpec> {
        let kernel = match (self.kind.as_str(), self.tau) {
            ("cauchy", None) => KernelSpec::Cauchy,
            ("cauchy", Some(_)) => {
                return Err(CliError::Config("the cauchy kernel takes no tau".into()))
            }
            ("cosine", Some(tau)) => KernelSpec::Cosine { tau },
            ("gaussian", Some(tau)) => KernelSpec::Gaussian { tau },
            ("cosine" | "gaussian", None) => {
                return Err(CliError::Config(format!("kernel '{}' needs a tau", self.kind)))
            }
            (other, _) => {
                return Err(CliError::Config(format!(
                    "unknown kernel '{other}' (expected cauchy, cosine, or gaussian)"
                )))
            }
        };
        kernel.validate()?;
        Ok(kernel)
    }
}

fn default_kernel_section() -> KernelSection {
    KernelSection { kind: "cauchy".into(), tau: None }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    pub epochs: usize,
    /// Absent means the batch-scaled default (peak/1000 for fine-tuning).
    #[serde(default)]
    pub peak_lr: Option<f64>,
    #[serde(default)]
    pub warmup_epochs: usize,
    #[serde(default)]
    pub anneal: bool,
    #[serde(default = "default_kernel_section")]
    pub kernel: KernelSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub seed: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    pub pretrain: StageSection,
    /// Absent together with `finetune` for direct single-stage training.
    #[serde(default)]
    pub readout: Option<StageSection>,
    #[serde(default)]
    pub finetune: Option<StageSection>,
}

fn default_batch() -> usize {
    128
}

fn default_momentum() -> f64 {
    0.9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_k")]
    pub knn_k: usize,
    #[serde(default)]
    pub knn_sweep: bool,
    #[serde(default = "default_batch")]
    pub loss_batch: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_kernel_section")]
    pub loss_kernel: KernelSection,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            knn_k: default_k(),
            knn_sweep: false,
            loss_batch: default_batch(),
            seed: 0,
            loss_kernel: default_kernel_section(),
        }
    }
}

fn default_k() -> usize {
    15
}

/// The whole run configuration.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub arch: ArchConfig,
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub augment: AugmentPolicy,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub precision: Precision,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::ConfigParse {
            path: path.into(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.protocol.readout.is_some() != self.protocol.finetune.is_some() {
            return Err(CliError::Config(
                "readout and finetune stages must be given together (or both omitted)".into(),
            ));
        }
        self.augment.validate()?;
        self.dataset.validate()?;
        self.protocol.pretrain.kernel.to_kernel()?;
        if let Some(s) = &self.protocol.readout {
            s.kernel.to_kernel()?;
        }
        if let Some(s) = &self.protocol.finetune {
            s.kernel.to_kernel()?;
        }
        self.eval.loss_kernel.to_kernel()?;
        Ok(())
    }

    /// Whether this run uses the three-stage protocol or direct training.
    pub fn is_protocol(&self) -> bool {
        self.protocol.readout.is_some()
    }

    fn stage(
        &self,
        section: &StageSection,
        default_lr: f64,
        frozen: Vec<usize>,
        dim: ReadoutDim,
    ) -> Result<StageConfig> {
        Ok(StageConfig {
            epochs: section.epochs,
            peak_lr: section.peak_lr.unwrap_or(default_lr),
            warmup_epochs: section.warmup_epochs,
            anneal: section.anneal,
            frozen_layers: frozen,
            readout_dim: dim,
            kernel: section.kernel.to_kernel()?,
        })
    }

    /// Assemble the trainer protocol for an encoder spec (three-stage runs).
    pub fn protocol_config(&self, spec: &EncoderSpec) -> Result<ProtocolConfig> {
        let (Some(readout), Some(finetune)) = (&self.protocol.readout, &self.protocol.finetune)
        else {
            return Err(CliError::Config("not a three-stage protocol config".into()));
        };
        let peak = peak_lr_for_batch(self.protocol.batch_size);
        Ok(ProtocolConfig {
            pretrain: self.stage(&self.protocol.pretrain, peak, Vec::new(), ReadoutDim::Keep)?,
            readout: self.stage(
                readout,
                READOUT_LR,
                all_but_readout(spec),
                ReadoutDim::Dim(self.arch.embed_dim),
            )?,
            finetune: self.stage(finetune, FINETUNE_PEAK_LR, Vec::new(), ReadoutDim::Keep)?,
            batch_size: self.protocol.batch_size,
            momentum: self.protocol.momentum,
            seed: self.protocol.seed,
        })
    }

    /// Assemble the single stage for direct training runs.
    pub fn direct_stage(&self) -> Result<StageConfig> {
        let peak = peak_lr_for_batch(self.protocol.batch_size);
        self.stage(
            &self.protocol.pretrain,
            peak,
            Vec::new(),
            ReadoutDim::Dim(self.arch.embed_dim),
        )
    }
}
