//! Similarity kernels and the contrastive InfoNCE objective.
//!
//! A batch of `b` source images yields `2b` embedded views, rows `2m` and
//! `2m+1` being the two views of image `m`. For every anchor `i` with
//! partner `j`, the per-anchor loss is
//!
//! ```text
//! l(i, j) = -log( sim(i, j) / sum_{k != i} sim(i, k) )
//! ```
//!
//! where `sim` is `exp(cos(z_i, z_k)/tau)` for the cosine kernel,
//! `exp(-d_ik^2 / (2 tau))` for the Gaussian kernel, and the heavy-tailed
//! Cauchy kernel `1 / (1 + d_ik^2)` for low-dimensional embeddings. The
//! batch loss averages over all `2b` anchors, so each pair is counted in
//! both directions; the denominator includes the positive partner.

use crate::error::{Error, Result};
use crate::numeric::{Matrix, Real};

/// Which similarity kernel drives the loss, plus its temperature.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Cosine { tau: f64 },
    Gaussian { tau: f64 },
    Cauchy,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Cosine { tau } | KernelSpec::Gaussian { tau } if tau <= 0.0 => {
                Err(Error::BadTemperature { tau })
            }
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelSpec::Cosine { tau } => write!(f, "cosine(tau={tau})"),
            KernelSpec::Gaussian { tau } => write!(f, "gaussian(tau={tau})"),
            KernelSpec::Cauchy => write!(f, "cauchy"),
        }
    }
}

/// A `2b x d` embedding matrix with the two-views-per-image row pairing.
///
/// Construction validates the pairing convention (even row count, at least
/// one pair) and that every entry is finite.
pub struct PairedEmbedding<'a, T: Real> {
    z: &'a Matrix<T>,
}

impl<'a, T: Real> PairedEmbedding<'a, T> {
    pub fn new(z: &'a Matrix<T>) -> Result<Self> {
        if z.rows() < 2 || z.rows() % 2 != 0 {
            return Err(Error::BadPairing { rows: z.rows() });
        }
        if let Some((row, col)) = z.find_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        Ok(PairedEmbedding { z })
    }

    pub fn z(&self) -> &Matrix<T> {
        self.z
    }

    /// Number of source images in the batch.
    pub fn pairs(&self) -> usize {
        self.z.rows() / 2
    }

    /// The positive partner of anchor `i`: rows 2m and 2m+1 pair up.
    #[inline]
    pub fn partner(i: usize) -> usize {
        i ^ 1
    }
}

/// All pairwise squared Euclidean distances; symmetric with a zero diagonal.
pub fn pairwise_sq_dists<T: Real>(z: &Matrix<T>) -> Matrix<T> {
    let n = z.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        let zi = z.row(i);
        for j in (i + 1)..n {
            let zj = z.row(j);
            let mut acc = T::ZERO;
            for (&a, &b) in zi.iter().zip(zj) {
                let diff = a - b;
                acc += diff * diff;
            }
            d[(i, j)] = acc;
            d[(j, i)] = acc;
        }
    }
    d
}

/// Cosine similarities of all row pairs, in `[-1, 1]` with a unit diagonal.
///
/// A zero-norm row is an error rather than a clamp: a collapsed encoder
/// should fail loudly here, not silently.
pub fn cosine_sim_matrix<T: Real>(z: &Matrix<T>) -> Result<Matrix<T>> {
    let n = z.rows();
    let mut norms = Vec::with_capacity(n);
    for i in 0..n {
        let norm = z.row(i).iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm == T::ZERO {
            return Err(Error::ZeroNormRow { row: i });
        }
        norms.push(norm);
    }
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        s[(i, i)] = T::ONE;
        let zi = z.row(i);
        for j in (i + 1)..n {
            let dot = zi.iter().zip(z.row(j)).map(|(&a, &b)| a * b).sum::<T>();
            let sim = (dot / (norms[i] * norms[j])).max(-T::ONE).min(T::ONE);
            s[(i, j)] = sim;
            s[(j, i)] = sim;
        }
    }
    Ok(s)
}

/// Logit matrix for the softmax-style kernels; `None` for Cauchy.
fn logits<T: Real>(z: &Matrix<T>, kernel: &KernelSpec) -> Result<Option<Matrix<T>>> {
    match *kernel {
        KernelSpec::Cosine { tau } => {
            let mut l = cosine_sim_matrix(z)?;
            let inv = T::from_f64(1.0 / tau);
            l.scale(inv);
            Ok(Some(l))
        }
        KernelSpec::Gaussian { tau } => {
            let mut l = pairwise_sq_dists(z);
            let factor = T::from_f64(-0.5 / tau);
            l.scale(factor);
            Ok(Some(l))
        }
        KernelSpec::Cauchy => Ok(None),
    }
}

/// Mean InfoNCE loss over all `2b` anchors.
pub fn infonce_loss<T: Real>(pe: &PairedEmbedding<'_, T>, kernel: &KernelSpec) -> Result<T> {
    kernel.validate()?;
    let z = pe.z();
    let n = z.rows();
    let mut total = T::ZERO;
    match logits(z, kernel)? {
        None => {
            let q = cauchy_similarities(z);
            for i in 0..n {
                let row = q.row(i);
                let mut denom = T::ZERO;
                for (k, &qik) in row.iter().enumerate() {
                    if k != i {
                        denom += qik;
                    }
                }
                total += denom.ln() - row[PairedEmbedding::<T>::partner(i)].ln();
            }
        }
        Some(l) => {
            for i in 0..n {
                total += anchor_softmax_loss(&l, i);
            }
        }
    }
    Ok(total / T::from_f64(n as f64))
}

/// Per-anchor `-l_ip + logsumexp_{k != i} l_ik`, max-shifted for stability.
fn anchor_softmax_loss<T: Real>(l: &Matrix<T>, i: usize) -> T {
    let row = l.row(i);
    let mut m = T::from_f64(f64::NEG_INFINITY);
    for (k, &v) in row.iter().enumerate() {
        if k != i {
            m = m.max(v);
        }
    }
    let mut sum = T::ZERO;
    for (k, &v) in row.iter().enumerate() {
        if k != i {
            sum += (v - m).exp();
        }
    }
    m + sum.ln() - row[PairedEmbedding::<T>::partner(i)]
}

fn cauchy_similarities<T: Real>(z: &Matrix<T>) -> Matrix<T> {
    let mut q = pairwise_sq_dists(z);
    for v in q.data_mut() {
        *v = T::ONE / (T::ONE + *v);
    }
    q
}

/// Exact gradient of [`infonce_loss`] with respect to the embedding rows.
///
/// For the distance kernels the gradient of each anchor term is a sum of
/// `coef * (z_i - z_k)` pulls and pushes, so the whole gradient reduces to
/// a symmetric coefficient matrix `M` applied as `diag(M 1) Z - M Z`. The
/// cosine kernel adds the normalization correction per row.
pub fn infonce_grad<T: Real>(pe: &PairedEmbedding<'_, T>, kernel: &KernelSpec) -> Result<Matrix<T>> {
    kernel.validate()?;
    let z = pe.z();
    let n = z.rows();
    let d = z.cols();
    let scale = T::from_f64(1.0 / n as f64);
    let two = T::from_f64(2.0);

    match *kernel {
        KernelSpec::Cauchy => {
            let q = cauchy_similarities(z);
            // a[i][k] = 2 q_ik [k = partner(i)] - (2 / S_i) q_ik^2, zero diagonal
            let mut a = Matrix::zeros(n, n);
            for i in 0..n {
                let qrow = q.row(i);
                let mut s = T::ZERO;
                for (k, &v) in qrow.iter().enumerate() {
                    if k != i {
                        s += v;
                    }
                }
                let rep = two / s;
                let arow = a.row_mut(i);
                for (k, &v) in qrow.iter().enumerate() {
                    if k != i {
                        arow[k] = -rep * v * v;
                    }
                }
                let p = PairedEmbedding::<T>::partner(i);
                arow[p] += two * qrow[p];
            }
            Ok(difference_form_grad(z, &a, scale))
        }
        KernelSpec::Gaussian { tau } => {
            let l = logits(z, kernel)?.expect("gaussian has logits");
            let c = softmax_coefficients(&l);
            // l_ik = -d_ik^2 / (2 tau), so d l_ik / d z_i = -(z_i - z_k)/tau
            let mut a = c;
            a.scale(T::from_f64(-1.0 / tau));
            Ok(difference_form_grad(z, &a, scale))
        }
        KernelSpec::Cosine { tau } => {
            let sims = cosine_sim_matrix(z)?;
            let mut l = sims.clone();
            l.scale(T::from_f64(1.0 / tau));
            let c = softmax_coefficients(&l);
            // b = c + c^T, then per row:
            //   g_a = (sum_k b_ak zhat_k - (sum_k b_ak s_ak) zhat_a) / (tau |z_a|)
            let mut b = Matrix::zeros(n, n);
            for i in 0..n {
                for k in 0..n {
                    b[(i, k)] = c[(i, k)] + c[(k, i)];
                }
            }
            let norms: Vec<T> = (0..n)
                .map(|i| z.row(i).iter().map(|&v| v * v).sum::<T>().sqrt())
                .collect();
            let mut g = Matrix::zeros(n, d);
            let inv_tau = T::from_f64(1.0 / tau);
            for a_row in 0..n {
                let mut self_coef = T::ZERO;
                for k in 0..n {
                    self_coef += b[(a_row, k)] * sims[(a_row, k)];
                }
                let out = g.row_mut(a_row);
                for k in 0..n {
                    let w = b[(a_row, k)] / norms[k];
                    if w != T::ZERO {
                        for (o, &zk) in out.iter_mut().zip(z.row(k)) {
                            *o += w * zk;
                        }
                    }
                }
                let za = z.row(a_row);
                let front = scale * inv_tau / norms[a_row];
                for (o, &v) in out.iter_mut().zip(za) {
                    *o = front * (*o - self_coef * (v / norms[a_row]));
                }
            }
            Ok(g)
        }
    }
}

/// Softmax coefficients `c_ik = p_ik - [k = partner(i)]` over `k != i`.
fn softmax_coefficients<T: Real>(l: &Matrix<T>) -> Matrix<T> {
    let n = l.rows();
    let mut c = Matrix::zeros(n, n);
    for i in 0..n {
        let row = l.row(i);
        let mut m = T::from_f64(f64::NEG_INFINITY);
        for (k, &v) in row.iter().enumerate() {
            if k != i {
                m = m.max(v);
            }
        }
        let mut sum = T::ZERO;
        for (k, &v) in row.iter().enumerate() {
            if k != i {
                sum += (v - m).exp();
            }
        }
        let crow = c.row_mut(i);
        for (k, &v) in row.iter().enumerate() {
            if k != i {
                crow[k] = (v - m).exp() / sum;
            }
        }
        crow[PairedEmbedding::<T>::partner(i)] -= T::ONE;
    }
    c
}

/// Gradient for losses whose anchor terms differentiate to
/// `sum_k a_ik (z_i - z_k)` on row `i` and the mirrored pull on row `k`:
/// with `m = a + a^T`, the result is `scale * (diag(m 1) z - m z)`.
fn difference_form_grad<T: Real>(z: &Matrix<T>, a: &Matrix<T>, scale: T) -> Matrix<T> {
    let n = z.rows();
    let d = z.cols();
    let mut g = Matrix::zeros(n, d);
    for i in 0..n {
        let mut rowsum = T::ZERO;
        let out = g.row_mut(i);
        for k in 0..n {
            let m_ik = a[(i, k)] + a[(k, i)];
            if m_ik != T::ZERO {
                rowsum += m_ik;
                for (o, &zk) in out.iter_mut().zip(z.row(k)) {
                    *o -= m_ik * zk;
                }
            }
        }
        for (o, &zi) in out.iter_mut().zip(z.row(i)) {
            *o = scale * (*o + rowsum * zi);
        }
    }
    g
}

/// Lower bound of the cosine InfoNCE loss for batch size `b` at temperature
/// `tau`: reached when every positive pair aligns and all negatives are
/// antipodal.
pub fn loss_lower_bound(b: usize, tau: f64) -> f64 {
    let inv = 1.0 / tau;
    -inv + (inv.exp() + (2 * b - 2) as f64 * (-inv).exp()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mat(rows: usize, cols: usize, v: &[f64]) -> Matrix<f64> {
        Matrix::from_vec(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn identical_rows_have_zero_distance() {
        let z = mat(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        let d = pairwise_sq_dists(&z);
        assert_eq!(d.data(), &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn three_four_five_triangle() {
        let z = mat(2, 2, &[0.0, 0.0, 3.0, 4.0]);
        let d = pairwise_sq_dists(&z);
        assert_eq!(d[(0, 1)], 25.0);
        assert_eq!(d[(1, 0)], 25.0);
    }

    #[test]
    fn distances_symmetric_zero_diagonal() {
        let z = mat(4, 3, &[0.1, -2.0, 3.0, 4.0, 5.5, -1.0, 0.0, 0.0, 2.0, -7.0, 1.0, 1.0]);
        let d = pairwise_sq_dists(&z);
        for i in 0..4 {
            assert_eq!(d[(i, i)], 0.0);
            for j in 0..4 {
                assert_eq!(d[(i, j)], d[(j, i)]);
            }
        }
    }

    #[test]
    fn cosine_orthogonal_and_parallel() {
        let z = mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let s = cosine_sim_matrix(&z).unwrap();
        assert_eq!(s[(0, 1)], 0.0);
        assert_eq!(s[(0, 0)], 1.0);

        let z = mat(2, 2, &[1.0, 0.0, 2.0, 0.0]);
        let s = cosine_sim_matrix(&z).unwrap();
        assert_eq!(s[(0, 1)], 1.0);
    }

    #[test]
    fn cosine_zero_row_is_an_error() {
        let z = mat(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        match cosine_sim_matrix(&z) {
            Err(Error::ZeroNormRow { row }) => assert_eq!(row, 1),
            other => panic!("expected zero-norm error, got {other:?}"),
        }
    }

    #[test]
    fn single_pair_loss_is_zero_for_every_kernel() {
        let z = mat(2, 2, &[0.3, -1.0, 2.0, 0.5]);
        let pe = PairedEmbedding::new(&z).unwrap();
        for kernel in [
            KernelSpec::Cauchy,
            KernelSpec::Cosine { tau: 0.5 },
            KernelSpec::Gaussian { tau: 0.5 },
        ] {
            let loss: f64 = infonce_loss(&pe, &kernel).unwrap();
            assert_relative_eq!(loss, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn cauchy_two_pair_hand_value() {
        // pairs at (0,0) and (10,0): within-pair distance 0, across 100.
        let z = mat(4, 2, &[0.0, 0.0, 0.0, 0.0, 10.0, 0.0, 10.0, 0.0]);
        let pe = PairedEmbedding::new(&z).unwrap();
        let loss = infonce_loss(&pe, &KernelSpec::Cauchy).unwrap();
        // -ln 1 + ln(1 + 2/101)
        assert_relative_eq!(loss, (1.0f64 + 2.0 / 101.0).ln(), epsilon = 1e-12);
        assert_relative_eq!(loss, 0.0196085, epsilon = 1e-6);
    }

    #[test]
    fn cosine_two_pair_hand_value() {
        let z = mat(4, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        let pe = PairedEmbedding::new(&z).unwrap();
        let loss = infonce_loss(&pe, &KernelSpec::Cosine { tau: 0.5 }).unwrap();
        // -2 + ln(e^2 + 2)
        assert_relative_eq!(loss, -2.0 + (2.0f64.exp() + 2.0).ln(), epsilon = 1e-12);
        assert_relative_eq!(loss, 0.2395448, epsilon = 1e-6);
    }

    #[test]
    fn nan_rejected() {
        let z = mat(2, 2, &[f64::NAN, 0.0, 1.0, 1.0]);
        assert!(matches!(PairedEmbedding::new(&z), Err(Error::NonFinite { row: 0, col: 0 })));
    }

    #[test]
    fn single_pair_gradient_is_zero() {
        let z = mat(2, 2, &[0.3, -1.0, 2.0, 0.5]);
        let pe = PairedEmbedding::new(&z).unwrap();
        let g = infonce_grad(&pe, &KernelSpec::Cauchy).unwrap();
        for &v in g.data() {
            assert_relative_eq!(v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn cauchy_gradient_rows_sum_to_zero() {
        let z = mat(
            8,
            2,
            &[
                0.5, -0.1, 0.6, 0.0, -1.2, 0.7, -1.0, 0.9, 2.0, 2.0, 1.9, 2.2, -0.3, -2.0, 0.0,
                -1.8,
            ],
        );
        let pe = PairedEmbedding::new(&z).unwrap();
        let g = infonce_grad(&pe, &KernelSpec::Cauchy).unwrap();
        for c in 0..2 {
            let sum: f64 = (0..8).map(|r| g[(r, c)]).sum();
            assert_relative_eq!(sum, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn lower_bound_values() {
        // b = 1: the single denominator term cancels the numerator.
        assert_relative_eq!(loss_lower_bound(1, 0.3), 0.0, epsilon = 1e-15);
        // hand evaluation at b = 2, tau = 0.5
        assert_relative_eq!(loss_lower_bound(2, 0.5), 0.0359763, epsilon = 1e-6);
        // large-batch value at tau = 0.5 is about 3.65
        let lb = loss_lower_bound(1024, 0.5);
        assert!((3.64..=3.66).contains(&lb), "bound was {lb}");
    }
}
