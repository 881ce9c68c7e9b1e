//! The four commands behind the `tscn` binary.

use std::path::{Path, PathBuf};

use tscn_core::augment::{augment_pair, AugmentPolicy, FloatImage};
use tscn_core::data::{
    epoch_batches, generate_synthetic, load_cifar10, load_cifar100, LabeledDataset, Split,
};
use tscn_core::encoder::{forward, EncoderParams, Shape};
use tscn_core::eval::{
    adjusted_rand_index, class_norm_stats, covariance_spectrum, kmeans, knn_accuracy,
    linear_probe, EvalReport,
};
use tscn_core::kernels::{infonce_loss, KernelSpec, PairedEmbedding};
use tscn_core::numeric::{stream_id, Matrix, RandomStream, Real};
use tscn_core::trainer::{run_protocol, train_stage, StageHistory};

use crate::checkpoint;
use crate::config::{DatasetConfig, DatasetKind, Precision, RunConfig};
use crate::csv::{read_embedding, write_embedding, EmbeddingRow};
use crate::dataspec::parse_data_spec;
use crate::error::{CliError, Result};
use crate::svg::render_scatter;

const DIRECT_TAG: u64 = 0x4449_5243;
const EVAL_LOSS_TAG: u64 = 0x4556_4C53;

pub fn load_dataset(config: &DatasetConfig) -> Result<LabeledDataset> {
    config.validate()?;
    let ds = match config.kind {
        DatasetKind::Cifar10 => load_cifar10(config.dir.as_deref().expect("validated"))?,
        DatasetKind::Cifar100 => load_cifar100(config.dir.as_deref().expect("validated"))?,
        DatasetKind::Synthetic => {
            generate_synthetic(&config.synth_config(), config.seed.expect("validated"))?
        }
    };
    Ok(ds)
}

/// `train --config <file>`: run the configured protocol (or direct stage),
/// write a checkpoint per stage boundary plus `checkpoint_final.tscn`, and
/// a loss log with one `stage epoch mean_loss lr` line per epoch.
pub fn cmd_train(config_path: &Path) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let dataset = load_dataset(&config.dataset)?;
    std::fs::create_dir_all(&config.out_dir)
        .map_err(|e| CliError::io(&config.out_dir, e))?;
    match config.precision {
        Precision::F32 => train_run::<f32>(&config, &dataset),
        Precision::F64 => train_run::<f64>(&config, &dataset),
    }
}

fn train_run<T: Real>(config: &RunConfig, dataset: &LabeledDataset) -> Result<()> {
    let (c, h, w) = dataset.image_shape();
    let input = Shape::new(c, h, w);
    let seed = config.protocol.seed;
    let mut log = String::new();
    let out = &config.out_dir;

    if config.is_protocol() {
        let spec = config.arch.spec(input, config.arch.pretrain_dim)?;
        let protocol = config.protocol_config(&spec)?;
        let (final_params, report) =
            run_protocol::<T>(dataset, &config.augment, spec, &protocol)?;
        for (i, stage) in report.stages.iter().enumerate() {
            checkpoint::save(
                &out.join(format!("checkpoint_stage{}.tscn", i + 1)),
                &stage.params_after.to_f32(),
                &format!("stage{}", i + 1),
                seed,
            )?;
            append_log(&mut log, i + 1, &stage.history);
        }
        checkpoint::save(&out.join("checkpoint_final.tscn"), &final_params.to_f32(), "final", seed)?;
    } else {
        let spec = config.arch.spec(input, config.arch.embed_dim)?;
        let stage = config.direct_stage()?;
        let root = RandomStream::new(seed, DIRECT_TAG);
        let params = EncoderParams::<T>::init(spec, &mut root.fork(0));
        let (params, history) = train_stage(
            dataset,
            &config.augment,
            params,
            &stage,
            config.protocol.batch_size,
            config.protocol.momentum,
            &root.fork(1),
        )?;
        checkpoint::save(&out.join("checkpoint_stage1.tscn"), &params.to_f32(), "stage1", seed)?;
        append_log(&mut log, 1, &history);
        checkpoint::save(&out.join("checkpoint_final.tscn"), &params.to_f32(), "final", seed)?;
    }
    let log_path = out.join("loss_log.txt");
    std::fs::write(&log_path, log).map_err(|e| CliError::io(&log_path, e))?;
    Ok(())
}

fn append_log(log: &mut String, stage: usize, history: &StageHistory) {
    for (epoch, (loss, lr)) in history.mean_loss.iter().zip(&history.epoch_lr).enumerate() {
        log.push_str(&format!("{stage} {epoch} {loss:.6} {lr}\n"));
    }
}

fn load_params_for(data: &LabeledDataset, path: &Path) -> Result<EncoderParams<f32>> {
    let (params, _, _) = checkpoint::load(path)?;
    let (c, h, w) = data.image_shape();
    let expect = params.spec().input_shape();
    if (expect.c, expect.h, expect.w) != (c, h, w) {
        return Err(CliError::ShapeMismatch {
            expected: format!("{}x{}x{}", expect.c, expect.h, expect.w),
            got: format!("{c}x{h}x{w}"),
        });
    }
    Ok(params)
}

/// Inference pass over the whole dataset: images only scaled to `[0, 1]`,
/// no augmentation. Returns (H, Z) widened to f64.
fn embed_all(dataset: &LabeledDataset, params: &EncoderParams<f32>) -> Result<(Matrix<f64>, Matrix<f64>)> {
    let n = dataset.len();
    let mut h = Matrix::<f64>::zeros(n, params.spec().h_dim());
    let mut z = Matrix::<f64>::zeros(n, params.spec().z_dim());
    const CHUNK: usize = 256;
    let mut at = 0;
    while at < n {
        let end = (at + CHUNK).min(n);
        let views: Vec<FloatImage<f32>> =
            (at..end).map(|i| dataset.image(i).to_float::<f32>()).collect();
        let pass = forward(&views, params)?;
        for (local, global) in (at..end).enumerate() {
            for (dst, &v) in h.row_mut(global).iter_mut().zip(pass.h.row(local)) {
                *dst = v as f64;
            }
            for (dst, &v) in z.row_mut(global).iter_mut().zip(pass.z.row(local)) {
                *dst = v as f64;
            }
        }
        at = end;
    }
    Ok((h, z))
}

/// `embed --checkpoint <f> --data <spec> --out <csv>`.
pub fn cmd_embed(checkpoint_path: &Path, data: &str, out: &Path) -> Result<()> {
    let dataset = load_dataset(&parse_data_spec(data)?)?;
    let params = load_params_for(&dataset, checkpoint_path)?;
    let (_, z) = embed_all(&dataset, &params)?;
    let rows: Vec<EmbeddingRow> = (0..dataset.len())
        .map(|i| EmbeddingRow {
            index: i,
            label: dataset.fine_label(i),
            split: dataset.split(i),
            z: z.row(i).to_vec(),
        })
        .collect();
    write_embedding(out, z.cols(), &rows)
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub knn_k: usize,
    pub knn_sweep: bool,
    pub loss_batch: usize,
    pub seed: u64,
    pub loss_kernel: KernelSpec,
    pub out: Option<PathBuf>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            knn_k: 15,
            knn_sweep: false,
            loss_batch: 128,
            seed: 0,
            loss_kernel: KernelSpec::Cauchy,
            out: None,
        }
    }
}

/// `eval --checkpoint <f> --data <spec>`: kNN in Z (train to test), linear
/// probe in H, contrastive loss on augmented test batches, covariance
/// spectrum, per-class norms, and k-means ARI over the full embedding.
pub fn cmd_eval(checkpoint_path: &Path, data: &str, options: &EvalOptions) -> Result<()> {
    let dataset = load_dataset(&parse_data_spec(data)?)?;
    let params = load_params_for(&dataset, checkpoint_path)?;
    let report = evaluate(&dataset, &params, options)?;
    let text = report.to_text();
    match &options.out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e))?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn evaluate(
    dataset: &LabeledDataset,
    params: &EncoderParams<f32>,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let (h, z) = embed_all(dataset, params)?;
    let train = dataset.split_indices(Split::Train);
    let test = dataset.split_indices(Split::Test);
    let rows = |m: &Matrix<f64>, idx: &[usize]| -> Matrix<f64> {
        let picked: Vec<Vec<f64>> = idx.iter().map(|&i| m.row(i).to_vec()).collect();
        Matrix::from_rows(&picked).expect("uniform rows")
    };
    let labels = |idx: &[usize]| -> Vec<usize> {
        idx.iter().map(|&i| dataset.fine_label(i)).collect()
    };
    let (ztr, zte) = (rows(&z, &train), rows(&z, &test));
    let (htr, hte) = (rows(&h, &train), rows(&h, &test));
    let (ytr, yte) = (labels(&train), labels(&test));

    let ks: Vec<usize> =
        if options.knn_sweep { (1..=30).collect() } else { vec![options.knn_k] };
    let mut knn = Vec::new();
    for k in ks {
        knn.push((k, knn_accuracy(&ztr, &ytr, &zte, &yte, k)?));
    }

    let linear_accuracy = linear_probe(&htr, &ytr, &hte, &yte)?;
    let final_loss = test_loss(dataset, params, &test, options)?;
    let spectrum = covariance_spectrum(&z)?;
    let class_norms = class_norm_stats(&z, dataset.fine_labels())?;
    let assignment = kmeans(&z, dataset.n_classes(), options.seed)?;
    let ari = adjusted_rand_index(&assignment, dataset.fine_labels())?;

    Ok(EvalReport { knn, linear_accuracy, final_loss, spectrum, class_norms, ari })
}

/// Mean contrastive loss over augmented pairs of the test split.
fn test_loss(
    dataset: &LabeledDataset,
    params: &EncoderParams<f32>,
    test: &[usize],
    options: &EvalOptions,
) -> Result<f64> {
    let b = options.loss_batch.min(test.len());
    let batches = epoch_batches(test.len(), b, options.seed, 0)?;
    let policy = AugmentPolicy::default();
    let mut total = 0.0;
    for batch in &batches {
        let mut views: Vec<FloatImage<f32>> = Vec::with_capacity(2 * batch.len());
        for &pos in batch {
            let image_index = test[pos];
            let stream = RandomStream::new(
                options.seed,
                stream_id(&[EVAL_LOSS_TAG, image_index as u64]),
            );
            let (a, bview) = augment_pair::<f32>(dataset.image(image_index), &policy, &stream);
            views.push(a);
            views.push(bview);
        }
        let pass = forward(&views, params)?;
        let pe = PairedEmbedding::new(&pass.z)?;
        total += infonce_loss(&pe, &options.loss_kernel)?.to_f64();
    }
    Ok(total / batches.len() as f64)
}

/// `scatter --in <csv> --out <svg>`: one circle per row, class colors.
pub fn cmd_scatter(input: &Path, out: &Path) -> Result<()> {
    let (dim, rows) = read_embedding(input)?;
    if dim != 2 {
        return Err(CliError::Csv {
            path: input.into(),
            reason: format!("scatter needs a 2D embedding, this file has {dim} columns"),
        });
    }
    let svg = render_scatter(&rows);
    std::fs::write(out, svg).map_err(|e| CliError::io(out, e))
}
