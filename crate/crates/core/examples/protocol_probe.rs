// temporary probe: protocol vs direct on the current synthetic set
use std::time::Instant;
use tscn_core::augment::AugmentPolicy;
use tscn_core::data::{generate_synthetic, Split, SynthConfig};
use tscn_core::encoder::{forward, EncoderParams, EncoderSpec, Shape};
use tscn_core::eval::knn_accuracy;
use tscn_core::kernels::KernelSpec;
use tscn_core::numeric::{Matrix, RandomStream};
use tscn_core::trainer::{
    peak_lr_for_batch, run_protocol, train_stage, ProtocolConfig, ReadoutDim, StageConfig,
};

fn knn_of(params: &EncoderParams<f32>, ds: &tscn_core::data::LabeledDataset) -> f64 {
    let views: Vec<_> = ds.images().iter().map(|img| img.to_float::<f32>()).collect();
    let mut z = Matrix::<f64>::zeros(ds.len(), params.spec().z_dim());
    for (ci, chunk) in views.chunks(256).enumerate() {
        let pass = forward(chunk, params).unwrap();
        for l in 0..chunk.len() {
            for (dst, &v) in z.row_mut(ci * 256 + l).iter_mut().zip(pass.z.row(l)) {
                *dst = v as f64;
            }
        }
    }
    let pick = |split: Split| {
        let idx = ds.split_indices(split);
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| z.row(i).to_vec()).collect();
        let y: Vec<usize> = idx.iter().map(|&i| ds.fine_label(i)).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    };
    let (ztr, ytr) = pick(Split::Train);
    let (zte, yte) = pick(Split::Test);
    knn_accuracy(&ztr, &ytr, &zte, &yte, 15).unwrap()
}

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let ds = generate_synthetic(&SynthConfig::default(), 1).unwrap();
    let policy = AugmentPolicy::default();

    let t = Instant::now();
    let spec = EncoderSpec::desk(Shape::new(3, 16, 16), 64).unwrap();
    let cfg = ProtocolConfig::desk_default(&spec, 2, seed);
    let (params, rep) = run_protocol::<f32>(&ds, &policy, spec, &cfg).unwrap();
    let ploss = *rep.stages[2].history.mean_loss.last().unwrap();
    let s2 = *rep.stages[1].history.mean_loss.last().unwrap();
    let s1 = *rep.stages[0].history.mean_loss.last().unwrap();
    println!(
        "seed {seed} protocol: s1 {s1:.4} s2 {s2:.4} final {ploss:.4} kNN {:.4} ({:.0?})",
        knn_of(&params.to_f32(), &ds),
        t.elapsed()
    );

    let t = Instant::now();
    let spec2 = EncoderSpec::desk(Shape::new(3, 16, 16), 2).unwrap();
    let stage = StageConfig {
        epochs: 100,
        peak_lr: peak_lr_for_batch(128),
        warmup_epochs: 10,
        anneal: true,
        frozen_layers: Vec::new(),
        readout_dim: ReadoutDim::Dim(2),
        kernel: KernelSpec::Cauchy,
    };
    let root = RandomStream::new(seed, 0xD112EC7);
    let params2 = EncoderParams::<f32>::init(spec2, &mut root.fork(0));
    let (params2, history) =
        train_stage(&ds, &policy, params2, &stage, 128, 0.9, &root.fork(1)).unwrap();
    println!(
        "seed {seed} direct:   final {:.4} kNN {:.4} ({:.0?})",
        history.mean_loss[99],
        knn_of(&params2.to_f32(), &ds),
        t.elapsed()
    );
}
