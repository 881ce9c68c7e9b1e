//! Embedding-quality measurements.
//!
//! The quantitative stack: kNN classification accuracy in the embedding
//! space `Z`, a linear probe in the backbone space `H`, the covariance
//! eigenspectrum (the dimensional-collapse diagnostic), per-class norm
//! quartiles, and k-means + adjusted Rand index for class separation.
//! Everything here runs in `f64`.

use rayon::prelude::*;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numeric::{stream_id, sym_eig, Matrix, RandomStream};

const KMEANS_TAG: u64 = 0x4B4D_4E53;

/// Fraction of test points whose k nearest training rows vote their label.
///
/// Distance ties break toward the lower training index; vote ties toward
/// the smaller class index. Both rules make the result independent of how
/// test points are partitioned across workers.
pub fn knn_accuracy(
    ztrain: &Matrix<f64>,
    ytrain: &[usize],
    ztest: &Matrix<f64>,
    ytest: &[usize],
    k: usize,
) -> Result<f64> {
    if ztrain.rows() == 0 || ztest.rows() == 0 {
        return Err(Error::Empty { what: "kNN input" });
    }
    if ytrain.len() != ztrain.rows() {
        return Err(Error::LabelCount { labels: ytrain.len(), rows: ztrain.rows() });
    }
    if ytest.len() != ztest.rows() {
        return Err(Error::LabelCount { labels: ytest.len(), rows: ztest.rows() });
    }
    if k < 1 || k > ztrain.rows() {
        return Err(Error::BadK { k, limit: ztrain.rows() });
    }
    if ztrain.cols() != ztest.cols() {
        return Err(Error::ShapeMismatch {
            op: "knn_accuracy",
            a_rows: ztrain.rows(),
            a_cols: ztrain.cols(),
            b_rows: ztest.rows(),
            b_cols: ztest.cols(),
        });
    }

    let correct: usize = (0..ztest.rows())
        .into_par_iter()
        .map(|t| {
            let q = ztest.row(t);
            let mut dists: Vec<(f64, usize)> = (0..ztrain.rows())
                .map(|i| {
                    let d = q
                        .iter()
                        .zip(ztrain.row(i))
                        .map(|(&a, &b)| (a - b) * (a - b))
                        .sum::<f64>();
                    (d, i)
                })
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| {
                a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1))
            };
            dists.select_nth_unstable_by(k - 1, cmp);
            dists.truncate(k);

            let mut votes: HashMap<usize, usize> = HashMap::new();
            for &(_, i) in &dists {
                *votes.entry(ytrain[i]).or_insert(0) += 1;
            }
            let winner = votes
                .iter()
                .map(|(&class, &count)| (count, std::cmp::Reverse(class)))
                .max()
                .map(|(_, std::cmp::Reverse(class))| class)
                .expect("k >= 1");
            usize::from(winner == ytest[t])
        })
        .sum();
    Ok(correct as f64 / ztest.rows() as f64)
}

/// Test accuracy of an unregularized multinomial logistic regression on
/// standardized features.
///
/// Full-batch gradient descent on the softmax cross-entropy: fixed budget
/// of 500 iterations at step 0.1, stopping early once the gradient max-norm
/// drops below 1e-6. Entirely deterministic.
pub fn linear_probe(
    htrain: &Matrix<f64>,
    ytrain: &[usize],
    htest: &Matrix<f64>,
    ytest: &[usize],
) -> Result<f64> {
    if htrain.rows() == 0 || htest.rows() == 0 {
        return Err(Error::Empty { what: "probe input" });
    }
    if ytrain.len() != htrain.rows() {
        return Err(Error::LabelCount { labels: ytrain.len(), rows: htrain.rows() });
    }
    if ytest.len() != htest.rows() {
        return Err(Error::LabelCount { labels: ytest.len(), rows: htest.rows() });
    }
    let classes = ytrain.iter().max().map_or(0, |&m| m + 1);
    let distinct = {
        let mut seen = vec![false; classes];
        for &y in ytrain {
            seen[y] = true;
        }
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(Error::SingleClass { found: distinct });
    }

    let d = htrain.cols();
    let n = htrain.rows();

    // standardize with training statistics; constant features pass through
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(htrain.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    for i in 0..n {
        for ((s, &v), &m) in var.iter_mut().zip(htrain.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std: Vec<f64> =
        var.iter().map(|&s| if s > 0.0 { (s / n as f64).sqrt() } else { 1.0 }).collect();
    let standardize = |h: &Matrix<f64>| -> Matrix<f64> {
        let mut x = h.clone();
        for i in 0..x.rows() {
            for ((v, &m), &s) in x.row_mut(i).iter_mut().zip(&mean).zip(&std) {
                *v = (*v - m) / s;
            }
        }
        x
    };
    let xtrain = standardize(htrain);
    let xtest = standardize(htest);

    let mut weights = Matrix::<f64>::zeros(classes, d);
    let mut bias = vec![0.0; classes];
    let step = 0.1;
    let inv_n = 1.0 / n as f64;

    for _ in 0..500 {
        let mut gw = Matrix::<f64>::zeros(classes, d);
        let mut gb = vec![0.0; classes];
        for i in 0..n {
            let x = xtrain.row(i);
            let mut logits: Vec<f64> = (0..classes)
                .map(|c| {
                    bias[c]
                        + weights.row(c).iter().zip(x).map(|(&w, &v)| w * v).sum::<f64>()
                })
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for l in &mut logits {
                *l = (*l - max).exp();
                sum += *l;
            }
            for c in 0..classes {
                let p = logits[c] / sum - f64::from(u8::from(ytrain[i] == c));
                gb[c] += p * inv_n;
                for (g, &v) in gw.row_mut(c).iter_mut().zip(x) {
                    *g += p * v * inv_n;
                }
            }
        }
        let gmax = gw.max_abs().max(gb.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        for c in 0..classes {
            bias[c] -= step * gb[c];
            for (w, &g) in weights.row_mut(c).iter_mut().zip(gw.row(c)) {
                *w -= step * g;
            }
        }
        if gmax < 1e-6 {
            break;
        }
    }

    let mut correct = 0;
    for i in 0..xtest.rows() {
        let x = xtest.row(i);
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for c in 0..classes {
            let score = bias[c]
                + weights.row(c).iter().zip(x).map(|(&w, &v)| w * v).sum::<f64>();
            if score > best_score {
                best_score = score;
                best = c;
            }
        }
        correct += usize::from(best == ytest[i]);
    }
    Ok(correct as f64 / xtest.rows() as f64)
}

/// Descending eigenvalues of the sample covariance (centered, divisor n-1).
pub fn covariance_spectrum(z: &Matrix<f64>) -> Result<Vec<f64>> {
    let n = z.rows();
    if n < 2 {
        return Err(Error::Empty { what: "covariance input (needs >= 2 rows)" });
    }
    let d = z.cols();
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(z.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = Matrix::<f64>::zeros(d, d);
    for i in 0..n {
        let row = z.row(i);
        for a in 0..d {
            let ca = row[a] - mean[a];
            let cov_row = cov.row_mut(a);
            for (b, &v) in row.iter().enumerate() {
                cov_row[b] += ca * (v - mean[b]);
            }
        }
    }
    cov.scale(1.0 / (n - 1) as f64);
    let (vals, _) = sym_eig(&cov, 1e-10)?;
    // covariance is PSD; round off the eigensolver's tiny negatives
    Ok(vals.into_iter().map(|v| v.max(0.0)).collect())
}

/// 25/50/75th percentiles of embedding norms for one class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormQuartiles {
    pub class: usize,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    // linear interpolation between closest ranks
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Per-class quartiles of row L2 norms, for classes present in `labels`.
pub fn class_norm_stats(z: &Matrix<f64>, labels: &[usize]) -> Result<Vec<NormQuartiles>> {
    if labels.len() != z.rows() {
        return Err(Error::LabelCount { labels: labels.len(), rows: z.rows() });
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut norms: Vec<Vec<f64>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        let n = z.row(i).iter().map(|&v| v * v).sum::<f64>().sqrt();
        norms[y].push(n);
    }
    let mut out = Vec::new();
    for (class, mut ns) in norms.into_iter().enumerate() {
        if ns.is_empty() {
            continue;
        }
        ns.sort_by(|a, b| a.partial_cmp(b).expect("finite norms"));
        out.push(NormQuartiles {
            class,
            q25: percentile(&ns, 0.25),
            q50: percentile(&ns, 0.50),
            q75: percentile(&ns, 0.75),
        });
    }
    Ok(out)
}

/// Lloyd's algorithm with k-means++ seeding from the stream.
///
/// Runs at most 100 iterations, stopping early once no centroid moves more
/// than 1e-8. Assignment ties break toward the lower centroid index; empty
/// clusters keep their previous centroid.
pub fn kmeans(z: &Matrix<f64>, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = z.rows();
    if k == 0 || k > n {
        return Err(Error::BadK { k, limit: n });
    }
    let d = z.cols();
    let mut rng = RandomStream::new(seed, stream_id(&[KMEANS_TAG]));

    // k-means++: next center drawn with probability proportional to the
    // squared distance to the nearest existing center
    let mut centers = Matrix::<f64>::zeros(k, d);
    let first = rng.below(n as u64) as usize;
    centers.row_mut(0).copy_from_slice(z.row(first));
    let mut best_d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(z.row(i), centers.row(0)))
        .collect();
    for c in 1..k {
        let total: f64 = best_d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.next_f64() * total;
            let mut chosen = n - 1;
            for (i, &w) in best_d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.below(n as u64) as usize
        };
        centers.row_mut(c).copy_from_slice(z.row(pick));
        for (i, b) in best_d2.iter_mut().enumerate() {
            *b = b.min(sq_dist(z.row(i), centers.row(c)));
        }
    }

    let mut assign = vec![0usize; n];
    for _ in 0..100 {
        for (i, a) in assign.iter_mut().enumerate() {
            let row = z.row(i);
            let mut best = 0;
            let mut best_dist = f64::INFINITY;
            for c in 0..k {
                let dist = sq_dist(row, centers.row(c));
                if dist < best_dist {
                    best_dist = dist;
                    best = c;
                }
            }
            *a = best;
        }
        let mut sums = Matrix::<f64>::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for (s, &v) in sums.row_mut(a).iter_mut().zip(z.row(i)) {
                *s += v;
            }
        }
        let mut max_move = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            let mut move_sq = 0.0;
            for (center, &s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                let new = s * inv;
                move_sq += (new - *center) * (new - *center);
                *center = new;
            }
            max_move = max_move.max(move_sq.sqrt());
        }
        if max_move < 1e-8 {
            break;
        }
    }
    Ok(assign)
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Chance-corrected pair-counting agreement between two partitions.
///
/// 1.0 for identical partitions; 0.0 in expectation for independent ones.
/// The degenerate case where both partitions are single clusters returns 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LabelCount { labels: a.len(), rows: b.len() });
    }
    if a.is_empty() {
        return Err(Error::Empty { what: "partition" });
    }
    let mut joint: HashMap<(usize, usize), u64> = HashMap::new();
    let mut ca: HashMap<usize, u64> = HashMap::new();
    let mut cb: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_insert(0) += 1;
        *ca.entry(x).or_insert(0) += 1;
        *cb.entry(y).or_insert(0) += 1;
    }
    let comb2 = |x: u64| -> f64 { (x * (x.saturating_sub(1))) as f64 / 2.0 };
    let index: f64 = joint.values().map(|&v| comb2(v)).sum();
    let sum_a: f64 = ca.values().map(|&v| comb2(v)).sum();
    let sum_b: f64 = cb.values().map(|&v| comb2(v)).sum();
    let total = comb2(a.len() as u64);
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// The full measurement record written by the eval command.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// (k, accuracy) pairs, ascending in k.
    pub knn: Vec<(usize, f64)>,
    pub linear_accuracy: f64,
    pub final_loss: f64,
    /// Descending covariance eigenvalues of the embedding.
    pub spectrum: Vec<f64>,
    pub class_norms: Vec<NormQuartiles>,
    pub ari: f64,
}

impl EvalReport {
    /// Key-value text form. Keys: `final_loss`, `linear_accuracy`, `ari`,
    /// `knn_accuracy.k<k>`, `eigenvalue_spectrum` (space-separated,
    /// descending), and `class_norms.<class>` (`q25 q50 q75`).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("final_loss = {}\n", self.final_loss));
        out.push_str(&format!("linear_accuracy = {}\n", self.linear_accuracy));
        out.push_str(&format!("ari = {}\n", self.ari));
        for (k, acc) in &self.knn {
            out.push_str(&format!("knn_accuracy.k{k} = {acc}\n"));
        }
        let spectrum: Vec<String> = self.spectrum.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!("eigenvalue_spectrum = {}\n", spectrum.join(" ")));
        for nq in &self.class_norms {
            out.push_str(&format!(
                "class_norms.{} = {} {} {}\n",
                nq.class, nq.q25, nq.q50, nq.q75
            ));
        }
        out
    }
}
