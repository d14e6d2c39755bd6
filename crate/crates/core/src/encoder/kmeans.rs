//! k-means codebooks (k-means++ seeding, Lloyd refinement).

use rand::Rng;

use crate::encoder::Descriptors;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub k: usize,
    pub dim: usize,
    /// `k x dim`, row-major.
    pub centers: Vec<f64>,
}

#[inline]
fn sq_dist(x: &[f32], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(&a, &b)| {
        let d = a as f64 - b;
        d * d
    }).sum()
}

impl KMeans {
    pub fn new(k: usize, dim: usize, centers: Vec<f64>) -> Result<Self> {
        if k == 0 || dim == 0 || centers.len() != k * dim {
            return Err(Error::DimensionMismatch(format!("codebook {k}x{dim} with {} values", centers.len())));
        }
        if centers.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("codebook".into()));
        }
        Ok(Self { k, dim, centers })
    }

    pub fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.dim..(i + 1) * self.dim]
    }

    /// Nearest center and squared distance; ties go to the lowest index.
    pub fn assign(&self, x: &[f32]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for i in 0..self.k {
            let d = sq_dist(x, self.center(i));
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
}

/// k-means++ seeding: each new center is drawn with probability
/// proportional to the squared distance to the nearest existing one.
pub fn kmeans_plus_plus(samples: &Descriptors, k: usize, rng: &mut impl Rng) -> Result<KMeans> {
    let n = samples.len();
    if n < k {
        return Err(Error::TooFewSamples { needed: k, got: n });
    }
    let d = samples.dim();
    let mut centers: Vec<f64> = Vec::with_capacity(k * d);
    let first = rng.gen_range(0..n);
    centers.extend(samples.row(first).iter().map(|&v| v as f64));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(samples.row(i), &centers[..d])).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.extend(samples.row(pick).iter().map(|&v| v as f64));
        let new = &centers[c * d..(c + 1) * d];
        for (i, best) in nearest.iter_mut().enumerate() {
            let dist = sq_dist(samples.row(i), new);
            if dist < *best {
                *best = dist;
            }
        }
    }
    KMeans::new(k, d, centers)
}

/// Lloyd iterations from k-means++ seeds. Empty clusters are re-seeded at
/// the sample farthest from its center.
pub fn train_kmeans(samples: &Descriptors, k: usize, max_iter: usize, rng: &mut impl Rng) -> Result<KMeans> {
    let mut model = kmeans_plus_plus(samples, k, rng)?;
    let (n, d) = (samples.len(), samples.dim());
    let mut assignment = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let mut changed = false;
        let mut dists = vec![0f64; n];
        for i in 0..n {
            let (c, dist) = model.assign(samples.row(i));
            dists[i] = dist;
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![0f64; k * d];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignment[i];
            counts[c] += 1;
            for (s, &v) in sums[c * d..(c + 1) * d].iter_mut().zip(samples.row(i)) {
                *s += v as f64;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("non-empty sample set");
                dists[far] = 0.0;
                assignment[far] = c;
                for (dst, &v) in model.centers[c * d..(c + 1) * d].iter_mut().zip(samples.row(far)) {
                    *dst = v as f64;
                }
                continue;
            }
            for (dst, s) in model.centers[c * d..(c + 1) * d].iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                *dst = s / counts[c] as f64;
            }
        }
    }
    Ok(model)
}
