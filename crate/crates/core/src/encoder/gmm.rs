//! Diagonal-covariance Gaussian mixtures trained by EM.

use log::{debug, warn};
use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;

use crate::encoder::kmeans::train_kmeans;
use crate::encoder::Descriptors;
use crate::error::{Error, Result};
use crate::rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// E-step shard size. Fixed so the reduction order, and therefore the
/// result, does not depend on the number of worker threads.
const SHARD: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    k: usize,
    dim: usize,
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    inv_var: Vec<f64>,
    log_norm: Vec<f64>,
}

impl GmmModel {
    pub fn new(k: usize, dim: usize, weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::InvalidArgument(format!("GMM with K={k}, D={dim}")));
        }
        if weights.len() != k || means.len() != k * dim || variances.len() != k * dim {
            return Err(Error::DimensionMismatch(format!("GMM parameter lengths for K={k}, D={dim}")));
        }
        if weights.iter().chain(&means).chain(&variances).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("GMM parameters".into()));
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvalidArgument("GMM weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("GMM weights sum to {total}")));
        }
        if variances.iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidArgument("GMM variances must be positive".into()));
        }
        let inv_var = variances.iter().map(|v| 1.0 / v).collect();
        let log_norm = (0..k)
            .map(|c| {
                let lv: f64 = variances[c * dim..(c + 1) * dim].iter().map(|v| v.ln()).sum();
                weights[c].ln() - 0.5 * (dim as f64 * LN_2PI + lv)
            })
            .collect();
        Ok(Self { k, dim, weights, means, variances, inv_var, log_norm })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn mean(&self, c: usize) -> &[f64] {
        &self.means[c * self.dim..(c + 1) * self.dim]
    }

    pub fn variance(&self, c: usize) -> &[f64] {
        &self.variances[c * self.dim..(c + 1) * self.dim]
    }

    /// Writes posteriors `q_k(x)` into `out` and returns `log p(x)`.
    pub fn posteriors(&self, x: &[f64], out: &mut [f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let d = self.dim;
        let mut max = f64::NEG_INFINITY;
        for c in 0..self.k {
            let mu = &self.means[c * d..(c + 1) * d];
            let iv = &self.inv_var[c * d..(c + 1) * d];
            let mut m = 0.0;
            for i in 0..d {
                let z = x[i] - mu[i];
                m += z * z * iv[i];
            }
            let l = self.log_norm[c] - 0.5 * m;
            out[c] = l;
            if l > max {
                max = l;
            }
        }
        let mut sum = 0.0;
        for v in out.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in out.iter_mut() {
            *v /= sum;
        }
        max + sum.ln()
    }

    /// Mean per-sample log-likelihood.
    pub fn mean_log_likelihood(&self, samples: &Descriptors) -> f64 {
        let mut q = vec![0.0; self.k];
        let mut x = vec![0.0; self.dim];
        let total: f64 = samples
            .rows()
            .map(|r| {
                widen(r, &mut x);
                self.posteriors(&x, &mut q)
            })
            .sum();
        total / samples.len() as f64
    }
}

#[inline]
pub(crate) fn widen(src: &[f32], dst: &mut [f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = s as f64;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once the relative log-likelihood improvement drops below this.
    pub tol: f64,
    pub seed: u64,
    /// Samples used for k-means++ seeding.
    pub init_subsample: usize,
    pub init_iters: usize,
    /// Floor on every variance, as a fraction of the per-dimension data variance.
    pub variance_floor: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            k: 64,
            max_iter: 100,
            tol: 1e-6,
            seed: 0,
            init_subsample: 20_000,
            init_iters: 10,
            variance_floor: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GmmTrace {
    /// Mean log-likelihood of the model at the start of each iteration,
    /// followed by the final model's value.
    pub log_likelihood: Vec<f64>,
    /// `(iteration, component)` pairs re-seeded after losing all mass.
    pub reseeded: Vec<(usize, usize)>,
    pub converged: bool,
}

struct Stats {
    mass: Vec<f64>,
    first: Vec<f64>,
    second: Vec<f64>,
    log_likelihood: f64,
    worst: (f64, usize),
}

impl Stats {
    fn zeros(k: usize, d: usize) -> Self {
        Self {
            mass: vec![0.0; k],
            first: vec![0.0; k * d],
            second: vec![0.0; k * d],
            log_likelihood: 0.0,
            worst: (f64::INFINITY, usize::MAX),
        }
    }

    fn merge(&mut self, o: &Stats) {
        for (a, b) in self.mass.iter_mut().zip(&o.mass) {
            *a += b;
        }
        for (a, b) in self.first.iter_mut().zip(&o.first) {
            *a += b;
        }
        for (a, b) in self.second.iter_mut().zip(&o.second) {
            *a += b;
        }
        self.log_likelihood += o.log_likelihood;
        if o.worst.0 < self.worst.0 {
            self.worst = o.worst;
        }
    }
}

/// Responsibility-weighted moments about the current means.
fn e_step(model: &GmmModel, samples: &Descriptors) -> Stats {
    let (k, d) = (model.k, model.dim);
    let shards: Vec<Stats> = samples
        .data()
        .par_chunks(SHARD * d)
        .enumerate()
        .map(|(s, chunk)| {
            let mut st = Stats::zeros(k, d);
            let mut q = vec![0.0; k];
            let mut x = vec![0.0; d];
            for (r, row) in chunk.chunks_exact(d).enumerate() {
                widen(row, &mut x);
                let ll = model.posteriors(&x, &mut q);
                st.log_likelihood += ll;
                if ll < st.worst.0 {
                    st.worst = (ll, s * SHARD + r);
                }
                for c in 0..k {
                    let w = q[c];
                    if w == 0.0 {
                        continue;
                    }
                    st.mass[c] += w;
                    let mu = model.mean(c);
                    let f = &mut st.first[c * d..(c + 1) * d];
                    let sc = &mut st.second[c * d..(c + 1) * d];
                    for i in 0..d {
                        let z = x[i] - mu[i];
                        f[i] += w * z;
                        sc[i] += w * z * z;
                    }
                }
            }
            st
        })
        .collect();
    let mut total = Stats::zeros(k, d);
    for s in &shards {
        total.merge(s);
    }
    total
}

fn data_variance(samples: &Descriptors) -> (Vec<f64>, Vec<f64>) {
    let d = samples.dim();
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for r in samples.rows() {
        for (m, &v) in mean.iter_mut().zip(r) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for r in samples.rows() {
        for i in 0..d {
            let z = r[i] as f64 - mean[i];
            var[i] += z * z;
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

/// Initial mixture from a k-means++ / Lloyd codebook on a subsample.
fn initialize(samples: &Descriptors, cfg: &GmmConfig, floor: &[f64], data_var: &[f64]) -> Result<GmmModel> {
    let (n, d, k) = (samples.len(), samples.dim(), cfg.k);
    let mut r = rng::stream(cfg.seed, "gmm-init");
    let sub = if n > cfg.init_subsample.max(k) {
        let idx = sample_indices(&mut r, n, cfg.init_subsample.max(k)).into_vec();
        samples.select(&idx)
    } else {
        samples.clone()
    };
    let km = train_kmeans(&sub, k, cfg.init_iters, &mut r)?;
    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0; k * d];
    let mut sq = vec![0.0; k * d];
    for row in sub.rows() {
        let (c, _) = km.assign(row);
        counts[c] += 1;
        for i in 0..d {
            let z = row[i] as f64 - km.center(c)[i];
            sums[c * d + i] += z;
            sq[c * d + i] += z * z;
        }
    }
    let total: usize = counts.iter().map(|&c| c.max(1)).sum();
    let weights = counts.iter().map(|&c| c.max(1) as f64 / total as f64).collect();
    let mut means = km.centers.clone();
    let mut variances = vec![0.0; k * d];
    for c in 0..k {
        for i in 0..d {
            let j = c * d + i;
            if counts[c] >= 2 {
                let m = sums[j] / counts[c] as f64;
                means[j] += m;
                variances[j] = (sq[j] / counts[c] as f64 - m * m).max(floor[i]);
            } else {
                variances[j] = data_var[i].max(floor[i]);
            }
        }
    }
    GmmModel::new(k, d, weights, means, variances)
}

/// Fits a `cfg.k`-component diagonal GMM by EM.
///
/// The M-step clamps variances at the floor, which is the exact constrained
/// maximizer per dimension, so the log-likelihood trace is nondecreasing
/// except in iterations that had to re-seed an empty component.
pub fn train_gmm(samples: &Descriptors, cfg: &GmmConfig) -> Result<(GmmModel, GmmTrace)> {
    let (n, d, k) = (samples.len(), samples.dim(), cfg.k);
    if k == 0 {
        return Err(Error::InvalidArgument("GMM needs K >= 1".into()));
    }
    if n < 10 * k {
        return Err(Error::TooFewSamples { needed: 10 * k, got: n });
    }
    if samples.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("GMM training samples".into()));
    }
    let (_, data_var) = data_variance(samples);
    let floor: Vec<f64> = data_var.iter().map(|v| (cfg.variance_floor * v).max(1e-12)).collect();
    let mut model = initialize(samples, cfg, &floor, &data_var)?;
    let mut trace = GmmTrace::default();
    let mut prev: Option<f64> = None;
    for iter in 0..cfg.max_iter {
        let stats = e_step(&model, samples);
        let ll = stats.log_likelihood / n as f64;
        trace.log_likelihood.push(ll);
        debug!("EM iteration {iter}: mean log-likelihood {ll}");
        if let Some(p) = prev {
            if (ll - p) / p.abs().max(f64::MIN_POSITIVE) < cfg.tol {
                trace.converged = true;
                return Ok((model, trace));
            }
        }
        prev = Some(ll);

        let mut weights = vec![0.0; k];
        let mut means = model.means.clone();
        let mut variances = vec![0.0; k * d];
        for c in 0..k {
            let mass = stats.mass[c];
            if mass < 1e-8 {
                // re-seed on the worst-explained sample with the data variance
                let row = samples.row(stats.worst.1.min(n - 1));
                warn!("GMM component {c} lost all mass at iteration {iter}; re-seeding");
                trace.reseeded.push((iter, c));
                for i in 0..d {
                    means[c * d + i] = row[i] as f64;
                    variances[c * d + i] = data_var[i].max(floor[i]);
                }
                weights[c] = 1.0 / n as f64;
                continue;
            }
            weights[c] = mass / n as f64;
            for i in 0..d {
                let j = c * d + i;
                let shift = stats.first[j] / mass;
                means[j] += shift;
                variances[j] = (stats.second[j] / mass - shift * shift).max(floor[i]);
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        model = GmmModel::new(k, d, weights, means, variances)?;
    }
    trace.log_likelihood.push(model.mean_log_likelihood(samples));
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn two_clusters(n: usize, seed: u64) -> Descriptors {
        let mut r = rng::stream(seed, "data");
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut data = Vec::with_capacity(2 * n);
        for i in 0..n {
            let c = if i % 2 == 0 { 0.0 } else { 10.0 };
            data.push((c + noise.sample(&mut r)) as f32);
            data.push((c + noise.sample(&mut r)) as f32);
        }
        Descriptors::new(2, data).unwrap()
    }

    #[test]
    fn recovers_separated_means() {
        let samples = two_clusters(2000, 1);
        let (gmm, trace) = train_gmm(&samples, &GmmConfig { k: 2, seed: 3, ..Default::default() }).unwrap();
        let mut found = [false; 2];
        for c in 0..2 {
            let m = gmm.mean(c);
            for (t, f) in [0.0, 10.0].iter().zip(found.iter_mut()) {
                if (m[0] - t).abs() < 0.1 && (m[1] - t).abs() < 0.1 {
                    *f = true;
                }
            }
            assert!((gmm.weights()[c] - 0.5).abs() < 0.01);
        }
        assert!(found.iter().all(|&f| f), "means {:?}", gmm.means());
        for w in trace.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
        }
    }

    #[test]
    fn single_component_is_closed_form() {
        let mut r = rng::stream(9, "data");
        let data: Vec<f32> = (0..300).map(|_| r.gen_range(-2.0..5.0)).collect();
        let samples = Descriptors::new(3, data).unwrap();
        let (gmm, _) = train_gmm(&samples, &GmmConfig { k: 1, ..Default::default() }).unwrap();
        let (mean, var) = data_variance(&samples);
        assert_eq!(gmm.weights(), &[1.0]);
        for i in 0..3 {
            assert!((gmm.mean(0)[i] - mean[i]).abs() < 1e-12);
            assert!((gmm.variance(0)[i] - var[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn posteriors_sum_to_one() {
        let samples = two_clusters(400, 2);
        let (gmm, _) = train_gmm(&samples, &GmmConfig { k: 3, ..Default::default() }).unwrap();
        let mut q = vec![0.0; 3];
        for x in [[0.0, 0.0], [5.0, 5.0], [100.0, -40.0]] {
            gmm.posteriors(&x, &mut q);
            assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_too_few_samples() {
        let samples = two_clusters(19, 1);
        assert!(matches!(
            train_gmm(&samples, &GmmConfig { k: 2, ..Default::default() }),
            Err(Error::TooFewSamples { needed: 20, got: 19 })
        ));
    }

    #[test]
    fn model_validation() {
        assert!(GmmModel::new(2, 1, vec![0.5, 0.6], vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(GmmModel::new(1, 1, vec![1.0], vec![0.0], vec![0.0]).is_err());
        assert!(GmmModel::new(1, 2, vec![1.0], vec![0.0], vec![1.0]).is_err());
    }
}
