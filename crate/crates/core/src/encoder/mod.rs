//! Codebook learning and orderless pooling of local descriptors.

pub mod fisher;
pub mod gmm;
pub mod kmeans;
pub mod pca;
pub mod persist;
pub mod select;
pub mod vlad;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FeatureField;

pub use fisher::{encode_fv, FisherAccumulator, FisherEncoder};
pub use gmm::{train_gmm, GmmConfig, GmmModel, GmmTrace};
pub use kmeans::{train_kmeans, KMeans};
pub use pca::{apply_pca, train_pca, PcaModel};
pub use select::{MaskRegion, PixelRect, PixelSet, Region};
pub use vlad::{encode_bow, encode_vlad};

/// A flat `len x dim` matrix of descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptors {
    dim: usize,
    data: Vec<f32>,
}

impl Descriptors {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::DimensionMismatch(format!("{} values do not form {dim}-dim rows", data.len())));
        }
        Ok(Self { dim, data })
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn push(&mut self, row: &[f32]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch(format!("row of {} values, expected {}", row.len(), self.dim)));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { dim: self.dim, data }
    }

    /// Every descriptor of the given fields.
    pub fn from_fields(fields: &[FeatureField]) -> Result<Self> {
        let dim = fields.first().map(|f| f.dim()).ok_or_else(|| Error::EmptyInput("no fields".into()))?;
        let mut out = Self::empty(dim);
        for f in fields {
            if f.dim() != dim {
                return Err(Error::DimensionMismatch("fields of different dimension".into()));
            }
            out.data.extend_from_slice(f.data());
        }
        Ok(out)
    }

    /// Uniform subsample without replacement, order preserved.
    pub fn subsample(&self, max: usize, rng: &mut impl Rng) -> Self {
        if self.len() <= max {
            return self.clone();
        }
        let mut idx = sample_indices(rng, self.len(), max).into_vec();
        idx.sort_unstable();
        self.select(&idx)
    }

    pub fn project(&self, pca: &PcaModel) -> Result<Self> {
        if pca.input_dim != self.dim {
            return Err(Error::DimensionMismatch(format!("PCA expects {} dims, got {}", pca.input_dim, self.dim)));
        }
        let mut data = Vec::with_capacity(self.len() * pca.output_dim);
        for r in self.rows() {
            data.extend(pca.project(r));
        }
        Ok(Self { dim: pca.output_dim, data })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub signed_sqrt: bool,
    pub l2_normalize: bool,
    pub apply_pca: bool,
    /// Posteriors below this are skipped during FV accumulation.
    pub posterior_threshold: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { signed_sqrt: true, l2_normalize: true, apply_pca: false, posterior_threshold: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Encoding {
    Fisher,
    Vlad,
    Bow,
    /// Output of a fully-connected head on a warped crop.
    Fc,
}

/// A pooled descriptor of an image or region.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDescriptor {
    pub values: Vec<f32>,
    pub encoding: Encoding,
    pub k: usize,
    pub dim: usize,
    pub signed_sqrt: bool,
    pub l2_normalized: bool,
    /// The pooled vector was identically zero, so it could not be normalized.
    pub zero: bool,
}

/// Scales `v` to unit L2 norm; returns false (leaving `v`) when it is zero.
pub fn l2_normalize_in_place(v: &mut [f64]) -> bool {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

pub fn signed_sqrt_in_place(v: &mut [f64]) {
    for x in v {
        *x = x.signum() * x.abs().sqrt();
    }
}

pub(crate) fn normalize(mut v: Vec<f64>, encoding: Encoding, k: usize, dim: usize, cfg: &EncoderConfig) -> EncodedDescriptor {
    if cfg.signed_sqrt {
        signed_sqrt_in_place(&mut v);
    }
    let zero = if cfg.l2_normalize { !l2_normalize_in_place(&mut v) } else { v.iter().all(|&x| x == 0.0) };
    EncodedDescriptor {
        values: v.into_iter().map(|x| x as f32).collect(),
        encoding,
        k,
        dim,
        signed_sqrt: cfg.signed_sqrt,
        l2_normalized: cfg.l2_normalize,
        zero,
    }
}

/// Codebook behind an [`Encoder`].
#[derive(Debug, Clone)]
pub enum Codebook {
    Fisher(GmmModel),
    Vlad(KMeans),
    Bow(KMeans),
}

/// Any of the pooling encoders, with optional PCA in front.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub pca: Option<PcaModel>,
    pub codebook: Codebook,
    pub config: EncoderConfig,
}

impl Encoder {
    pub fn input_dim(&self) -> usize {
        match (&self.pca, &self.codebook) {
            (Some(p), _) => p.input_dim,
            (None, Codebook::Fisher(g)) => g.dim(),
            (None, Codebook::Vlad(k) | Codebook::Bow(k)) => k.dim,
        }
    }

    pub fn output_len(&self) -> usize {
        match &self.codebook {
            Codebook::Fisher(g) => 2 * g.k() * g.dim(),
            Codebook::Vlad(k) => k.k * k.dim,
            Codebook::Bow(k) => k.k,
        }
    }

    fn projected(&self, fields: &[FeatureField]) -> Result<Option<Vec<FeatureField>>> {
        match &self.pca {
            Some(p) => Ok(Some(fields.iter().map(|f| apply_pca(f, p)).collect::<Result<_>>()?)),
            None => Ok(None),
        }
    }

    pub fn encode(&self, fields: &[FeatureField], region: Region<'_>) -> Result<EncodedDescriptor> {
        match &self.codebook {
            Codebook::Fisher(g) => {
                let cfg = EncoderConfig { apply_pca: self.pca.is_some(), ..self.config.clone() };
                FisherEncoder::new(g.clone(), self.pca.clone(), cfg)?.encode(fields, region)
            }
            Codebook::Vlad(k) => {
                let p = self.projected(fields)?;
                encode_vlad(p.as_deref().unwrap_or(fields), region, k, &self.config)
            }
            Codebook::Bow(k) => {
                let p = self.projected(fields)?;
                encode_bow(p.as_deref().unwrap_or(fields), region, k, &self.config)
            }
        }
    }
}
