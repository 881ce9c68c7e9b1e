//! SGD with momentum, the warmup + cosine-annealing schedule, and the
//! three-stage dimensionality-annealing protocol.
//!
//! The protocol trains in three stages: (1) pretrain with a wide readout,
//! (2) replace the readout with a freshly initialized narrow one and fit
//! only that layer at a constant learning rate, (3) unfreeze everything and
//! fine-tune gently. Pretraining at high output dimension avoids the poor
//! optima that direct low-dimensional training tends to fall into.

use rayon::prelude::*;

use crate::augment::{augment_pair, AugmentPolicy, FloatImage};
use crate::data::{epoch_batches, LabeledDataset};
use crate::encoder::{backward, forward, EncoderParams, EncoderSpec, Gradients, ParamTensors};
use crate::error::{Error, Result};
use crate::kernels::{infonce_grad, infonce_loss, KernelSpec, PairedEmbedding};
use crate::numeric::{stream_id, RandomStream, Real};

const INIT_TAG: u64 = 0x494E_4954;
const REINIT_TAG: u64 = 0x5245_494E;
const PROTOCOL_TAG: u64 = 0x5354_4147;
const SHUFFLE_TAG: u64 = 0x5348_5546;
const AUGMENT_TAG: u64 = 0x4155_4753;

/// The batch-scaled learning-rate rule `0.03 * b / 256`.
pub fn peak_lr_for_batch(batch_size: usize) -> f64 {
    0.03 * batch_size as f64 / 256.0
}

/// Constant learning rate of the readout-alignment stage (stage 2).
pub const READOUT_LR: f64 = 0.12;

/// Default peak for the full-network fine-tune stage (stage 3): the
/// reference pretraining peak divided by 1000.
pub const FINETUNE_PEAK_LR: f64 = 1.2e-4;

/// Readout width a stage expects, or `Keep` to leave it as is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadoutDim {
    Keep,
    Dim(usize),
}

/// One training stage: schedule, freezing, kernel.
#[derive(Debug, Clone)]
pub struct StageConfig {
    pub epochs: usize,
    pub peak_lr: f64,
    pub warmup_epochs: usize,
    pub anneal: bool,
    pub frozen_layers: Vec<usize>,
    pub readout_dim: ReadoutDim,
    pub kernel: KernelSpec,
}

impl StageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.peak_lr <= 0.0 {
            return Err(Error::Config {
                reason: format!("peak_lr must be > 0, got {}", self.peak_lr),
            });
        }
        if self.warmup_epochs > self.epochs {
            return Err(Error::Config {
                reason: format!(
                    "warmup ({}) exceeds stage epochs ({})",
                    self.warmup_epochs, self.epochs
                ),
            });
        }
        self.kernel.validate()
    }
}

/// The full three-stage plan.
#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub pretrain: StageConfig,
    pub readout: StageConfig,
    pub finetune: StageConfig,
    pub batch_size: usize,
    pub momentum: f64,
    pub seed: u64,
}

/// Layer indices of everything except the readout; the stage-2 freeze set.
pub fn all_but_readout(spec: &EncoderSpec) -> Vec<usize> {
    (0..spec.layers().len() - 1).collect()
}

impl ProtocolConfig {
    /// Desk-scale default for a given encoder: 50-epoch Cauchy pretrain at
    /// the spec's readout width with the batch-scaled peak, 5-epoch readout
    /// fit at `target_dim` at the constant [`READOUT_LR`], 45-epoch full
    /// fine-tune peaking at [`FINETUNE_PEAK_LR`]; `b = 128`, momentum 0.9.
    pub fn desk_default(spec: &EncoderSpec, target_dim: usize, seed: u64) -> Self {
        let batch_size = 128;
        let peak = peak_lr_for_batch(batch_size);
        ProtocolConfig {
            pretrain: StageConfig {
                epochs: 50,
                peak_lr: peak,
                warmup_epochs: 10,
                anneal: true,
                frozen_layers: Vec::new(),
                readout_dim: ReadoutDim::Keep,
                kernel: KernelSpec::Cauchy,
            },
            readout: StageConfig {
                epochs: 5,
                peak_lr: READOUT_LR,
                warmup_epochs: 0,
                anneal: false,
                frozen_layers: all_but_readout(spec),
                readout_dim: ReadoutDim::Dim(target_dim),
                kernel: KernelSpec::Cauchy,
            },
            finetune: StageConfig {
                epochs: 45,
                peak_lr: FINETUNE_PEAK_LR,
                warmup_epochs: 10,
                anneal: true,
                frozen_layers: Vec::new(),
                readout_dim: ReadoutDim::Keep,
                kernel: KernelSpec::Cauchy,
            },
            batch_size,
            momentum: 0.9,
            seed,
        }
    }

    pub fn validate(&self, spec: &EncoderSpec) -> Result<()> {
        self.pretrain.validate()?;
        self.readout.validate()?;
        self.finetune.validate()?;
        if self.batch_size < 2 {
            return Err(Error::BatchTooSmall { batch: self.batch_size });
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config {
                reason: format!("momentum must be in [0, 1), got {}", self.momentum),
            });
        }
        if self.readout.frozen_layers != all_but_readout(spec) {
            return Err(Error::Config {
                reason: "the readout stage must freeze every layer except the readout".into(),
            });
        }
        if !self.finetune.frozen_layers.is_empty() {
            return Err(Error::Config { reason: "the fine-tune stage must freeze nothing".into() });
        }
        Ok(())
    }
}

/// Learning rate at a 0-based optimization step of a stage.
///
/// Linear ramp from 0 to the peak across the warmup steps, then either the
/// cosine decay `peak * (1 + cos(pi t / T)) / 2` over the remaining steps,
/// or a constant peak when annealing is off. Both branches give exactly the
/// peak at the warmup boundary.
pub fn lr_at(stage: &StageConfig, step: usize, steps_per_epoch: usize) -> f64 {
    let total = stage.epochs * steps_per_epoch;
    let warmup = stage.warmup_epochs * steps_per_epoch;
    debug_assert!(step < total.max(1));
    if step < warmup {
        return stage.peak_lr * step as f64 / warmup as f64;
    }
    if !stage.anneal || total == warmup {
        return stage.peak_lr;
    }
    let t = (step - warmup) as f64;
    let span = (total - warmup) as f64;
    stage.peak_lr * 0.5 * (1.0 + (std::f64::consts::PI * t / span).cos())
}

/// Per-parameter momentum buffers.
#[derive(Debug, Clone)]
pub struct OptState<T> {
    pub buffers: Vec<Option<ParamTensors<T>>>,
}

impl<T: Real> OptState<T> {
    pub fn zeros(params: &EncoderParams<T>) -> Self {
        OptState { buffers: params.zero_gradients().layers }
    }
}

/// One SGD-with-momentum update: `buf = m * buf + g; p -= lr * buf`.
///
/// Frozen layers are skipped entirely, parameters and buffers both, so a
/// frozen layer stays bit-identical across a stage even if earlier stages
/// left momentum behind.
pub fn sgd_momentum_step<T: Real>(
    params: &mut EncoderParams<T>,
    grads: &Gradients<T>,
    opt: &mut OptState<T>,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    let n = params.freeze_mask().len();
    if grads.layers.len() != n || opt.buffers.len() != n {
        return Err(Error::Config {
            reason: "gradient/optimizer state layer count mismatch".into(),
        });
    }
    let lr = T::from_f64(lr);
    let m = T::from_f64(momentum);
    for i in 0..n {
        if params.freeze_mask()[i] {
            continue;
        }
        let (Some(g), Some(buf)) = (grads.layers[i].as_ref(), opt.buffers[i].as_mut()) else {
            continue;
        };
        let p = params.layer_mut(i).expect("parameterized layer");
        if g.w.len() != p.w.len() || g.b.len() != p.b.len() {
            return Err(Error::Config { reason: format!("gradient shape mismatch at layer {i}") });
        }
        for ((pv, bv), &gv) in p.w.iter_mut().zip(buf.w.iter_mut()).zip(&g.w) {
            *bv = m * *bv + gv;
            *pv -= lr * *bv;
        }
        for ((pv, bv), &gv) in p.b.iter_mut().zip(buf.b.iter_mut()).zip(&g.b) {
            *bv = m * *bv + gv;
            *pv -= lr * *bv;
        }
    }
    Ok(())
}

/// Per-epoch record of one stage.
#[derive(Debug, Clone, Default)]
pub struct StageHistory {
    /// Mean batch loss of each epoch.
    pub mean_loss: Vec<f64>,
    /// Learning rate at the first step of each epoch.
    pub epoch_lr: Vec<f64>,
}

/// Train one stage; returns the updated parameters and per-epoch history.
///
/// Batch order, per-image augmentation streams, and gradient accumulation
/// are all keyed off `rng` and fixed chunking, so a stage reproduces bit
/// for bit on any worker count.
pub fn train_stage<T: Real>(
    dataset: &LabeledDataset,
    policy: &AugmentPolicy,
    params: EncoderParams<T>,
    stage: &StageConfig,
    batch_size: usize,
    momentum: f64,
    rng: &RandomStream,
) -> Result<(EncoderParams<T>, StageHistory)> {
    if dataset.is_empty() {
        return Err(Error::Empty { what: "dataset" });
    }
    stage.validate()?;
    policy.validate()?;
    if let ReadoutDim::Dim(d) = stage.readout_dim {
        if d != params.readout_dim() {
            return Err(Error::Config {
                reason: format!(
                    "stage expects readout width {d}, params have {}",
                    params.readout_dim()
                ),
            });
        }
    }
    let mut params = params.set_freeze(&stage.frozen_layers)?;
    let mut history = StageHistory::default();
    if stage.epochs == 0 {
        return Ok((params, history));
    }

    let n = dataset.len();
    let steps_per_epoch = n / batch_size;
    let shuffle_seed = rng.fork(SHUFFLE_TAG).next_u64();
    let augment_seed = rng.fork(AUGMENT_TAG).next_u64();
    let mut opt = OptState::zeros(&params);

    for epoch in 0..stage.epochs {
        let batches = epoch_batches(n, batch_size, shuffle_seed, epoch as u64)?;
        let mut epoch_loss = 0.0;
        history.epoch_lr.push(lr_at(stage, epoch * steps_per_epoch, steps_per_epoch));
        for (bi, batch) in batches.iter().enumerate() {
            let lr = lr_at(stage, epoch * steps_per_epoch + bi, steps_per_epoch);

            // two views per image, rows 2m and 2m+1
            let views: Vec<FloatImage<T>> = batch
                .par_iter()
                .map(|&img_idx| {
                    let stream = RandomStream::new(
                        augment_seed,
                        stream_id(&[AUGMENT_TAG, epoch as u64, img_idx as u64]),
                    );
                    let (a, b) = augment_pair::<T>(dataset.image(img_idx), policy, &stream);
                    [a, b]
                })
                .flatten_iter()
                .collect();

            let pass = forward(&views, &params)?;
            let pe = PairedEmbedding::new(&pass.z)?;
            epoch_loss += infonce_loss(&pe, &stage.kernel)?.to_f64();
            let dz = infonce_grad(&pe, &stage.kernel)?;
            let grads = backward(&pass.cache, &dz, &params)?;
            sgd_momentum_step(&mut params, &grads, &mut opt, lr, momentum)?;
        }
        history.mean_loss.push(epoch_loss / steps_per_epoch as f64);
    }
    Ok((params, history))
}

/// Everything recorded about one protocol stage.
#[derive(Debug, Clone)]
pub struct StageRecord<T> {
    pub history: StageHistory,
    /// Snapshot at the stage boundary.
    pub params_after: EncoderParams<T>,
}

/// Loss histories and boundary snapshots of a protocol run.
#[derive(Debug, Clone)]
pub struct ProtocolReport<T> {
    pub stages: Vec<StageRecord<T>>,
}

/// Run the three-stage protocol from freshly initialized parameters.
///
/// Stage 1 pretrains at the spec's (wide) readout width; the readout is
/// then replaced by a freshly initialized layer of the target width and
/// fitted alone at a constant learning rate; stage 3 fine-tunes the whole
/// network with warmup and annealing. Every random choice derives from
/// `cfg.seed`.
pub fn run_protocol<T: Real>(
    dataset: &LabeledDataset,
    policy: &AugmentPolicy,
    spec: EncoderSpec,
    cfg: &ProtocolConfig,
) -> Result<(EncoderParams<T>, ProtocolReport<T>)> {
    cfg.validate(&spec)?;
    if let ReadoutDim::Dim(d) = cfg.pretrain.readout_dim {
        if d != spec.z_dim() {
            return Err(Error::Config {
                reason: format!(
                    "pretrain readout {d} does not match encoder spec {}",
                    spec.z_dim()
                ),
            });
        }
    }
    let root = RandomStream::new(cfg.seed, PROTOCOL_TAG);
    let params = EncoderParams::<T>::init(spec, &mut root.fork(INIT_TAG));

    let (params, h1) = train_stage(
        dataset,
        policy,
        params,
        &cfg.pretrain,
        cfg.batch_size,
        cfg.momentum,
        &root.fork(stream_id(&[PROTOCOL_TAG, 1])),
    )?;
    let stage1 = params.clone();

    let target = match cfg.readout.readout_dim {
        ReadoutDim::Dim(d) => d,
        ReadoutDim::Keep => params.readout_dim(),
    };
    let params = params.reinit_readout(target, &mut root.fork(REINIT_TAG))?;

    let (params, h2) = train_stage(
        dataset,
        policy,
        params,
        &cfg.readout,
        cfg.batch_size,
        cfg.momentum,
        &root.fork(stream_id(&[PROTOCOL_TAG, 2])),
    )?;
    let stage2 = params.clone();

    let (params, h3) = train_stage(
        dataset,
        policy,
        params,
        &cfg.finetune,
        cfg.batch_size,
        cfg.momentum,
        &root.fork(stream_id(&[PROTOCOL_TAG, 3])),
    )?;
    let stage3 = params.clone();

    let report = ProtocolReport {
        stages: vec![
            StageRecord { history: h1, params_after: stage1 },
            StageRecord { history: h2, params_after: stage2 },
            StageRecord { history: h3, params_after: stage3 },
        ],
    };
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthConfig};
    use crate::encoder::{LayerSpec, Shape};
    use approx::assert_relative_eq;

    fn dense(i: usize, o: usize) -> LayerSpec {
        LayerSpec::Dense { in_units: i, out_units: o }
    }

    fn cauchy_stage(epochs: usize) -> StageConfig {
        StageConfig {
            epochs,
            peak_lr: 0.015,
            warmup_epochs: 0,
            anneal: false,
            frozen_layers: Vec::new(),
            readout_dim: ReadoutDim::Keep,
            kernel: KernelSpec::Cauchy,
        }
    }

    fn head_only_spec() -> EncoderSpec {
        EncoderSpec::new(
            Shape::new(2, 1, 1),
            vec![dense(2, 4), LayerSpec::ReLU, dense(4, 2)],
        )
        .unwrap()
    }

    fn tiny_dataset() -> LabeledDataset {
        generate_synthetic(&SynthConfig { per_class: 24, side: 8, ..SynthConfig::default() }, 11)
            .unwrap()
    }

    fn tiny_spec(readout: usize) -> EncoderSpec {
        EncoderSpec::new(
            Shape::new(3, 8, 8),
            vec![
                LayerSpec::Conv { in_channels: 3, out_channels: 6 },
                LayerSpec::ReLU,
                LayerSpec::MaxPool,
                LayerSpec::GlobalAvgPool,
                dense(6, 16),
                dense(16, 24),
                LayerSpec::ReLU,
                dense(24, readout),
            ],
        )
        .unwrap()
    }

    #[test]
    fn lr_schedule_shape() {
        let stage = StageConfig {
            epochs: 1000,
            peak_lr: peak_lr_for_batch(1024),
            warmup_epochs: 10,
            anneal: true,
            frozen_layers: Vec::new(),
            readout_dim: ReadoutDim::Keep,
            kernel: KernelSpec::Cosine { tau: 0.5 },
        };
        let spe = 58;
        assert_relative_eq!(stage.peak_lr, 0.12, epsilon = 1e-12);
        assert_eq!(lr_at(&stage, 0, spe), 0.0);
        // warmup boundary hits the peak from both formulas
        assert_relative_eq!(lr_at(&stage, 10 * spe, spe), 0.12, epsilon = 1e-15);
        assert_relative_eq!(lr_at(&stage, 10 * spe - 1, spe), 0.12 * 579.0 / 580.0);
        // midpoint of the annealing span is half the peak
        let total = 1000 * spe;
        let mid = 10 * spe + (total - 10 * spe) / 2;
        assert_relative_eq!(lr_at(&stage, mid, spe), 0.06, epsilon = 1e-12);
        // final step decays to ~0
        assert!(lr_at(&stage, total - 1, spe) < 1e-6 * 0.12);
    }

    #[test]
    fn constant_schedule_without_annealing() {
        let mut stage = cauchy_stage(5);
        stage.peak_lr = 0.12;
        for step in 0..50 {
            assert_eq!(lr_at(&stage, step, 10), 0.12);
        }
    }

    #[test]
    fn sgd_hand_iteration() {
        let mut rng = RandomStream::new(0, 0);
        let mut params = EncoderParams::<f64>::init(head_only_spec(), &mut rng);
        let mut grads = params.zero_gradients();
        grads.layers[0].as_mut().unwrap().w[0] = 1.0;
        let mut opt = OptState::zeros(&params);
        let start = params.layer(0).unwrap().w[0];

        sgd_momentum_step(&mut params, &grads, &mut opt, 1.0, 0.9).unwrap();
        assert_relative_eq!(params.layer(0).unwrap().w[0], start - 1.0);
        sgd_momentum_step(&mut params, &grads, &mut opt, 1.0, 0.9).unwrap();
        assert_relative_eq!(params.layer(0).unwrap().w[0], start - 2.9, epsilon = 1e-12);
    }

    #[test]
    fn sgd_zero_momentum_and_zero_lr() {
        let mut rng = RandomStream::new(0, 0);
        let mut params = EncoderParams::<f64>::init(head_only_spec(), &mut rng);
        let before = params.clone();
        let mut grads = params.zero_gradients();
        grads.layers[0].as_mut().unwrap().w[0] = 2.0;
        let mut opt = OptState::zeros(&params);

        // momentum 0 reduces to plain gradient descent
        sgd_momentum_step(&mut params, &grads, &mut opt, 0.5, 0.0).unwrap();
        assert_relative_eq!(params.layer(0).unwrap().w[0], before.layer(0).unwrap().w[0] - 1.0);

        // lr 0 keeps parameters, still accumulates the buffer
        let snapshot = params.clone();
        sgd_momentum_step(&mut params, &grads, &mut opt, 0.0, 0.9).unwrap();
        assert_eq!(params, snapshot);
        assert_relative_eq!(opt.buffers[0].as_ref().unwrap().w[0], 2.0 * 0.9 + 2.0);
    }

    #[test]
    fn zero_epoch_stage_returns_input() {
        let ds = tiny_dataset();
        let mut rng = RandomStream::new(1, 0);
        let params = EncoderParams::<f64>::init(tiny_spec(2), &mut rng);
        let weights_before = params.clone();
        let (after, history) = train_stage(
            &ds,
            &AugmentPolicy::default(),
            params,
            &cauchy_stage(0),
            16,
            0.9,
            &RandomStream::new(5, 0),
        )
        .unwrap();
        assert!(history.mean_loss.is_empty());
        assert_eq!(after.layer(0), weights_before.layer(0));
    }

    #[test]
    fn frozen_backbone_is_bit_identical_across_stage() {
        let ds = tiny_dataset();
        let mut rng = RandomStream::new(2, 0);
        let params = EncoderParams::<f64>::init(tiny_spec(2), &mut rng);
        let spec = params.spec().clone();
        let mut stage = cauchy_stage(2);
        stage.frozen_layers = all_but_readout(&spec);
        let before = params.clone();
        let (after, _) = train_stage(
            &ds,
            &AugmentPolicy::default(),
            params,
            &stage,
            16,
            0.9,
            &RandomStream::new(6, 0),
        )
        .unwrap();
        let readout = spec.layers().len() - 1;
        for i in 0..readout {
            assert_eq!(after.layer(i), before.layer(i), "layer {i} changed");
        }
        assert_ne!(after.layer(readout), before.layer(readout));
    }

    #[test]
    fn loss_decreases_over_training() {
        let ds = tiny_dataset();
        let mut rng = RandomStream::new(3, 0);
        let params = EncoderParams::<f32>::init(tiny_spec(2), &mut rng);
        let mut stage = cauchy_stage(30);
        stage.peak_lr = 0.05;
        stage.warmup_epochs = 2;
        stage.anneal = true;
        let (_, history) = train_stage(
            &ds,
            &AugmentPolicy::default(),
            params,
            &stage,
            24,
            0.9,
            &RandomStream::new(7, 0),
        )
        .unwrap();
        assert_eq!(history.mean_loss.len(), 30);
        assert!(
            history.mean_loss[29] < history.mean_loss[0],
            "loss went {} -> {}",
            history.mean_loss[0],
            history.mean_loss[29]
        );
    }

    #[test]
    fn stage_is_reproducible() {
        let ds = tiny_dataset();
        let run = || {
            let mut rng = RandomStream::new(4, 0);
            let params = EncoderParams::<f32>::init(tiny_spec(2), &mut rng);
            train_stage(
                &ds,
                &AugmentPolicy::default(),
                params,
                &cauchy_stage(2),
                16,
                0.9,
                &RandomStream::new(8, 0),
            )
            .unwrap()
        };
        let (a, ha) = run();
        let (b, hb) = run();
        assert_eq!(a, b);
        assert_eq!(ha.mean_loss, hb.mean_loss);
    }

    #[test]
    fn zero_epoch_protocol_returns_reinitialized_readout() {
        let ds = tiny_dataset();
        let spec = tiny_spec(16);
        let mut cfg = ProtocolConfig::desk_default(&spec, 2, 42);
        cfg.batch_size = 16;
        cfg.pretrain.epochs = 0;
        cfg.pretrain.warmup_epochs = 0;
        cfg.readout.epochs = 0;
        cfg.finetune.epochs = 0;
        cfg.finetune.warmup_epochs = 0;
        let (params, report) =
            run_protocol::<f64>(&ds, &AugmentPolicy::default(), spec.clone(), &cfg).unwrap();
        assert_eq!(params.readout_dim(), 2);
        assert_eq!(report.stages.len(), 3);
        // non-readout layers are exactly the fresh initialization
        let root = RandomStream::new(42, PROTOCOL_TAG);
        let fresh = EncoderParams::<f64>::init(spec, &mut root.fork(INIT_TAG));
        assert_eq!(params.layer(0), fresh.layer(0));
    }

    #[test]
    fn protocol_history_lengths_match_epochs() {
        let ds = tiny_dataset();
        let spec = tiny_spec(8);
        let mut cfg = ProtocolConfig::desk_default(&spec, 2, 9);
        cfg.batch_size = 16;
        cfg.pretrain.epochs = 2;
        cfg.pretrain.warmup_epochs = 1;
        cfg.readout.epochs = 1;
        cfg.finetune.epochs = 2;
        cfg.finetune.warmup_epochs = 1;
        let (params, report) =
            run_protocol::<f32>(&ds, &AugmentPolicy::default(), spec, &cfg).unwrap();
        assert_eq!(params.readout_dim(), 2);
        let lens: Vec<usize> = report.stages.iter().map(|s| s.history.mean_loss.len()).collect();
        assert_eq!(lens, vec![2, 1, 2]);
        assert!(params.freeze_mask().iter().all(|&f| !f));
    }
}
