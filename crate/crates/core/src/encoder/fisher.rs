//! Fisher Vector pooling against a diagonal GMM.
//!
//! For component `k` with weight `w_k`, mean `mu_k` and deviation
//! `sigma_k`, and posteriors `q_nk` over the `N` pooled descriptors:
//!
//! ```text
//! u_k = 1 / (N sqrt(w_k))   * sum_n q_nk (x_n - mu_k) / sigma_k
//! v_k = 1 / (N sqrt(2 w_k)) * sum_n q_nk [((x_n - mu_k) / sigma_k)^2 - 1]
//! ```
//!
//! The output is laid out per component: `[u_1, v_1, u_2, v_2, ...]`, each
//! block `D` long, so the length is `2 K D`.
//!
//! Sufficient statistics are kept in 128-bit fixed point (60 fractional
//! bits). Integer addition is associative, so accumulators of disjoint
//! cell sets add up exactly to the accumulator of their union regardless of
//! visiting order.

use crate::encoder::gmm::{widen, GmmModel};
use crate::encoder::pca::PcaModel;
use crate::encoder::select::{for_each_selected, Region};
use crate::encoder::{normalize, EncodedDescriptor, EncoderConfig, Encoding};
use crate::error::{Error, Result};
use crate::field::FeatureField;

const FIXED_ONE: f64 = (1u64 << 60) as f64;

#[inline]
fn to_fixed(v: f64) -> i128 {
    (v * FIXED_ONE) as i128
}

#[inline]
fn from_fixed(v: i128) -> f64 {
    v as f64 / FIXED_ONE
}

/// Unnormalized FV sufficient statistics of a descriptor set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FisherAccumulator {
    k: usize,
    dim: usize,
    count: u64,
    first: Vec<i128>,
    second: Vec<i128>,
}

/// Per-GMM constants reused across descriptors.
struct Workspace {
    inv_sigma: Vec<f64>,
    posteriors: Vec<f64>,
    x: Vec<f64>,
}

impl Workspace {
    fn new(gmm: &GmmModel) -> Self {
        Self {
            inv_sigma: gmm.variances().iter().map(|v| 1.0 / v.sqrt()).collect(),
            posteriors: vec![0.0; gmm.k()],
            x: vec![0.0; gmm.dim()],
        }
    }
}

impl FisherAccumulator {
    pub fn new(k: usize, dim: usize) -> Self {
        Self { k, dim, count: 0, first: vec![0; k * dim], second: vec![0; k * dim] }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    fn add_widened(&mut self, gmm: &GmmModel, ws: &mut Workspace, threshold: f64) {
        let d = self.dim;
        gmm.posteriors(&ws.x, &mut ws.posteriors);
        self.count += 1;
        for c in 0..self.k {
            let q = ws.posteriors[c];
            if q < threshold || q == 0.0 {
                continue;
            }
            let mu = gmm.mean(c);
            let is = &ws.inv_sigma[c * d..(c + 1) * d];
            let f = &mut self.first[c * d..(c + 1) * d];
            let s = &mut self.second[c * d..(c + 1) * d];
            for i in 0..d {
                let z = (ws.x[i] - mu[i]) * is[i];
                f[i] += to_fixed(q * z);
                s[i] += to_fixed(q * (z * z - 1.0));
            }
        }
    }

    /// Adds one descriptor; posteriors below `threshold` are skipped.
    pub fn add(&mut self, gmm: &GmmModel, x: &[f32], threshold: f64) {
        let mut ws = Workspace::new(gmm);
        widen(x, &mut ws.x);
        self.add_widened(gmm, &mut ws, threshold);
    }

    pub fn merge(&mut self, other: &FisherAccumulator) -> Result<()> {
        if (self.k, self.dim) != (other.k, other.dim) {
            return Err(Error::DimensionMismatch("merging accumulators of different shapes".into()));
        }
        self.count += other.count;
        for (a, b) in self.first.iter_mut().zip(&other.first) {
            *a += b;
        }
        for (a, b) in self.second.iter_mut().zip(&other.second) {
            *a += b;
        }
        Ok(())
    }

    /// `sum_n q_nk z_nk` and `sum_n q_nk (z_nk^2 - 1)` as f64.
    pub fn sums(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.first.iter().map(|&v| from_fixed(v)).collect(),
            self.second.iter().map(|&v| from_fixed(v)).collect(),
        )
    }

    /// The Fisher-normalized vector in double precision, before signed
    /// square root and L2 normalization.
    pub fn fisher_vector(&self, gmm: &GmmModel) -> Result<Vec<f64>> {
        if self.count == 0 {
            return Err(Error::EmptyRegion);
        }
        if (gmm.k(), gmm.dim()) != (self.k, self.dim) {
            return Err(Error::DimensionMismatch("accumulator and GMM shapes differ".into()));
        }
        let d = self.dim;
        let n = self.count as f64;
        let mut out = vec![0.0; 2 * self.k * d];
        for c in 0..self.k {
            let w = gmm.weights()[c];
            let su = 1.0 / (n * w.sqrt());
            let sv = 1.0 / (n * (2.0 * w).sqrt());
            let block = &mut out[2 * c * d..2 * (c + 1) * d];
            for i in 0..d {
                block[i] = from_fixed(self.first[c * d + i]) * su;
                block[d + i] = from_fixed(self.second[c * d + i]) * sv;
            }
        }
        Ok(out)
    }
}

/// Fisher Vector encoder with an optional PCA stage in front of the GMM.
#[derive(Debug, Clone)]
pub struct FisherEncoder {
    pub gmm: GmmModel,
    pub pca: Option<PcaModel>,
    pub config: EncoderConfig,
}

impl FisherEncoder {
    pub fn new(gmm: GmmModel, pca: Option<PcaModel>, config: EncoderConfig) -> Result<Self> {
        if config.apply_pca && pca.is_none() {
            return Err(Error::InvalidArgument("PCA requested but no PCA model given".into()));
        }
        let pca = if config.apply_pca { pca } else { None };
        let in_dim = pca.as_ref().map_or(gmm.dim(), |p| p.output_dim);
        if in_dim != gmm.dim() {
            return Err(Error::DimensionMismatch(format!(
                "PCA output {in_dim} does not match GMM dimension {}",
                gmm.dim()
            )));
        }
        Ok(Self { gmm, pca, config })
    }

    pub fn input_dim(&self) -> usize {
        self.pca.as_ref().map_or(self.gmm.dim(), |p| p.input_dim)
    }

    pub fn output_len(&self) -> usize {
        2 * self.gmm.k() * self.gmm.dim()
    }

    fn check_fields(&self, fields: &[FeatureField]) -> Result<()> {
        let want = self.input_dim();
        if let Some(f) = fields.iter().find(|f| f.dim() != want) {
            return Err(Error::DimensionMismatch(format!(
                "encoder expects {want}-dim descriptors, field has {}",
                f.dim()
            )));
        }
        Ok(())
    }

    pub fn accumulate(&self, fields: &[FeatureField], region: Region<'_>) -> Result<FisherAccumulator> {
        self.check_fields(fields)?;
        let mut acc = FisherAccumulator::new(self.gmm.k(), self.gmm.dim());
        let mut ws = Workspace::new(&self.gmm);
        let threshold = self.config.posterior_threshold;
        for_each_selected(fields, region, |desc| {
            match &self.pca {
                Some(p) => p.project_into(desc, &mut ws.x),
                None => widen(desc, &mut ws.x),
            }
            acc.add_widened(&self.gmm, &mut ws, threshold);
        });
        Ok(acc)
    }

    pub fn finalize(&self, acc: &FisherAccumulator) -> Result<EncodedDescriptor> {
        let fv = acc.fisher_vector(&self.gmm)?;
        Ok(normalize(fv, Encoding::Fisher, self.gmm.k(), self.gmm.dim(), &self.config))
    }

    pub fn encode(&self, fields: &[FeatureField], region: Region<'_>) -> Result<EncodedDescriptor> {
        let acc = self.accumulate(fields, region)?;
        self.finalize(&acc)
    }
}

/// Fisher Vector of the cells selected by `region`, fields used as given.
pub fn encode_fv(
    fields: &[FeatureField],
    region: Region<'_>,
    gmm: &GmmModel,
    cfg: &EncoderConfig,
) -> Result<EncodedDescriptor> {
    let cfg = EncoderConfig { apply_pca: false, ..cfg.clone() };
    FisherEncoder::new(gmm.clone(), None, cfg)?.encode(fields, region)
}
