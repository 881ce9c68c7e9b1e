//! Algebraic invariants of the numeric core and the loss family.

use proptest::prelude::*;

use tscn_core::kernels::{
    infonce_loss, loss_lower_bound, pairwise_sq_dists, KernelSpec, PairedEmbedding,
};
use tscn_core::numeric::{sym_eig, Matrix, RandomStream};

fn random_embedding(rows: usize, cols: usize, rng: &mut RandomStream) -> Matrix<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.uniform(-2.0, 2.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn normalize_rows(z: &Matrix<f64>) -> Matrix<f64> {
    let mut out = z.clone();
    for i in 0..out.rows() {
        let norm = out.row(i).iter().map(|&v| v * v).sum::<f64>().sqrt();
        for v in out.row_mut(i) {
            *v /= norm;
        }
    }
    out
}

/// Cosine InfoNCE at temperature tau equals Gaussian InfoNCE on the
/// row-normalized embedding: the kernels differ by a constant that cancels
/// between numerator and denominator.
#[test]
fn cosine_equals_gaussian_on_normalized_rows() {
    let mut rng = RandomStream::new(0xE93, 0);
    let mut cases = 0;
    for &b in &[2usize, 4, 8] {
        for &d in &[2usize, 16, 128] {
            for &tau in &[0.1, 0.5, 1.0] {
                for _ in 0..12 {
                    let z = random_embedding(2 * b, d, &mut rng);
                    let pe = PairedEmbedding::new(&z).unwrap();
                    let cos = infonce_loss(&pe, &KernelSpec::Cosine { tau }).unwrap();
                    let zn = normalize_rows(&z);
                    let pe_n = PairedEmbedding::new(&zn).unwrap();
                    let gauss = infonce_loss(&pe_n, &KernelSpec::Gaussian { tau }).unwrap();
                    assert!(
                        (cos - gauss).abs() < 1e-10,
                        "b={b} d={d} tau={tau}: cosine {cos} vs gaussian {gauss}"
                    );
                    cases += 1;
                }
            }
        }
    }
    assert!(cases >= 100);
}

#[test]
fn cosine_loss_never_beats_the_lower_bound() {
    let mut rng = RandomStream::new(0xB0D, 0);
    for case in 0..1000 {
        let b = [2, 4, 8, 16][case % 4];
        let d = [2, 3, 16][case % 3];
        let tau = [0.1, 0.5, 1.0][case % 3];
        let z = random_embedding(2 * b, d, &mut rng);
        let pe = PairedEmbedding::new(&z).unwrap();
        let loss = infonce_loss(&pe, &KernelSpec::Cosine { tau }).unwrap();
        let bound = loss_lower_bound(b, tau);
        assert!(loss >= bound - 1e-12, "case {case}: loss {loss} below bound {bound}");
    }
}

/// Random rigid motion: a product of Givens rotations, an optional axis
/// reflection, and a translation.
fn rigid_motion(z: &Matrix<f64>, rng: &mut RandomStream) -> Matrix<f64> {
    let d = z.cols();
    let mut out = z.clone();
    for a in 0..d {
        for b in (a + 1)..d {
            let theta = rng.uniform(0.0, std::f64::consts::TAU);
            let (s, c) = theta.sin_cos();
            for i in 0..out.rows() {
                let row = out.row_mut(i);
                let (x, y) = (row[a], row[b]);
                row[a] = c * x - s * y;
                row[b] = s * x + c * y;
            }
        }
    }
    if rng.chance(0.5) {
        for i in 0..out.rows() {
            out.row_mut(i)[0] = -out.row(i)[0];
        }
    }
    let shift: Vec<f64> = (0..d).map(|_| rng.uniform(-10.0, 10.0)).collect();
    for i in 0..out.rows() {
        for (v, &s) in out.row_mut(i).iter_mut().zip(&shift) {
            *v += s;
        }
    }
    out
}

#[test]
fn cauchy_loss_invariant_under_rigid_motions() {
    let mut rng = RandomStream::new(0x816, 0);
    for _ in 0..50 {
        let z = random_embedding(8, 2, &mut rng);
        let moved = rigid_motion(&z, &mut rng);
        let a = infonce_loss(&PairedEmbedding::new(&z).unwrap(), &KernelSpec::Cauchy).unwrap();
        let b = infonce_loss(&PairedEmbedding::new(&moved).unwrap(), &KernelSpec::Cauchy).unwrap();
        assert!((a - b).abs() < 1e-10, "loss moved from {a} to {b}");
    }
    // higher-dimensional rotation too
    let z = random_embedding(12, 5, &mut rng);
    let moved = rigid_motion(&z, &mut rng);
    let a = infonce_loss(&PairedEmbedding::new(&z).unwrap(), &KernelSpec::Cauchy).unwrap();
    let b = infonce_loss(&PairedEmbedding::new(&moved).unwrap(), &KernelSpec::Cauchy).unwrap();
    assert!((a - b).abs() < 1e-10);
}

#[test]
fn cosine_loss_invariant_under_positive_row_rescaling() {
    let mut rng = RandomStream::new(0x5CA, 0);
    for _ in 0..50 {
        let z = random_embedding(8, 3, &mut rng);
        let mut scaled = z.clone();
        for i in 0..scaled.rows() {
            let f = rng.uniform(0.1, 7.0);
            for v in scaled.row_mut(i) {
                *v *= f;
            }
        }
        let kernel = KernelSpec::Cosine { tau: 0.5 };
        let a = infonce_loss(&PairedEmbedding::new(&z).unwrap(), &kernel).unwrap();
        let b = infonce_loss(&PairedEmbedding::new(&scaled).unwrap(), &kernel).unwrap();
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn pair_swap_leaves_every_loss_unchanged() {
    let mut rng = RandomStream::new(0x99, 0);
    for kernel in [
        KernelSpec::Cauchy,
        KernelSpec::Cosine { tau: 0.5 },
        KernelSpec::Gaussian { tau: 0.5 },
    ] {
        let z = random_embedding(12, 4, &mut rng);
        let mut swapped = z.clone();
        for m in 0..6 {
            for j in 0..4 {
                let a = z[(2 * m, j)];
                let b = z[(2 * m + 1, j)];
                swapped[(2 * m, j)] = b;
                swapped[(2 * m + 1, j)] = a;
            }
        }
        let la = infonce_loss(&PairedEmbedding::new(&z).unwrap(), &kernel).unwrap();
        let lb = infonce_loss(&PairedEmbedding::new(&swapped).unwrap(), &kernel).unwrap();
        assert!((la - lb).abs() < 1e-12, "{kernel:?}: {la} vs {lb}");
    }
}

#[test]
fn squared_distances_agree_with_gaussian_logits() {
    // tiny consistency anchor for the distance matrix used by both kernels
    let z = Matrix::from_vec(2, 2, vec![0.0, 0.0, 3.0, 4.0]).unwrap();
    let d = pairwise_sq_dists(&z);
    assert_eq!(d[(0, 1)], 25.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_is_associative(
        seed in any::<u64>(),
        n in 1usize..6,
        m in 1usize..6,
        p in 1usize..6,
        q in 1usize..6,
    ) {
        let mut rng = RandomStream::new(seed, 0);
        let mut fill = |r: usize, c: usize| {
            let data: Vec<f64> = (0..r * c).map(|_| rng.uniform(-1.0, 1.0)).collect();
            Matrix::from_vec(r, c, data).unwrap()
        };
        let a = fill(n, m);
        let b = fill(m, p);
        let c = fill(p, q);
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        let scale = left.max_abs().max(right.max_abs()).max(1.0);
        for (x, y) in left.data().iter().zip(right.data()) {
            prop_assert!((x - y).abs() / scale < 1e-9);
        }
    }

    #[test]
    fn sym_eig_reconstructs_the_matrix(seed in any::<u64>()) {
        let n = 8;
        let mut rng = RandomStream::new(seed, 1);
        let mut m = Matrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.uniform(-3.0, 3.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        let tol = 1e-10;
        let (vals, vecs) = sym_eig(&m, tol).unwrap();

        // descending order
        for w in vals.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        // reconstruction: V diag(vals) V^T == M within 1e-8 max-norm
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += vecs[(i, k)] * vals[k] * vecs[(j, k)];
                }
                prop_assert!((acc - m[(i, j)]).abs() <= 1e-8);
            }
        }
        // eigenpairs: M v_k = lambda_k v_k within 10 * tol
        for k in 0..n {
            for r in 0..n {
                let mv: f64 = (0..n).map(|c| m[(r, c)] * vecs[(c, k)]).sum();
                prop_assert!((mv - vals[k] * vecs[(r, k)]).abs() <= 10.0 * tol.max(1e-9));
            }
        }
        // orthonormal eigenvectors within 10 * tol
        for a in 0..n {
            for b in 0..n {
                let dot: f64 = (0..n).map(|r| vecs[(r, a)] * vecs[(r, b)]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() <= 10.0 * tol.max(1e-9));
            }
        }
    }

    #[test]
    fn augmented_pixels_stay_in_unit_range(seed in any::<u64>()) {
        use tscn_core::augment::{augment_pair, AugmentPolicy, ImageU8};
        let mut rng = RandomStream::new(seed, 2);
        let mut img = ImageU8::filled(8, 8, 0);
        for c in 0..3 {
            for y in 0..8 {
                for x in 0..8 {
                    img.set(c, y, x, rng.below(256) as u8);
                }
            }
        }
        let stream = RandomStream::new(seed, 3);
        let (a, b) = augment_pair::<f64>(&img, &AugmentPolicy::default(), &stream);
        for &v in a.data.iter().chain(&b.data) {
            prop_assert!((0.0..=1.0).contains(&v) && v.is_finite());
        }
    }

    #[test]
    fn epoch_batches_never_repeat_an_index(
        seed in any::<u64>(),
        n in 8usize..120,
        b in 2usize..8,
        epoch in 0u64..50,
    ) {
        prop_assume!(b <= n);
        let batches = tscn_core::data::epoch_batches(n, b, seed, epoch).unwrap();
        let mut seen = vec![false; n];
        for batch in &batches {
            prop_assert_eq!(batch.len(), b);
            for &i in batch {
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
        }
        prop_assert_eq!(batches.len(), n / b);
    }

    #[test]
    fn cifar_records_round_trip(seed in any::<u64>()) {
        use tscn_core::data::{parse_cifar10_record, write_cifar10_record, CIFAR10_RECORD_BYTES};
        let mut rng = RandomStream::new(seed, 4);
        let mut record = vec![0u8; CIFAR10_RECORD_BYTES];
        record[0] = rng.below(10) as u8;
        for b in record[1..].iter_mut() {
            *b = rng.below(256) as u8;
        }
        let (label, img) = parse_cifar10_record(&record).unwrap();
        prop_assert_eq!(write_cifar10_record(label, &img), record);
    }
}
