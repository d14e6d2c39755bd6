//! Principal component projection of local descriptors.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::encoder::Descriptors;
use crate::error::{Error, Result};
use crate::field::FeatureField;

/// Eigenvalues below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub input_dim: usize,
    pub output_dim: usize,
    pub mean: Vec<f64>,
    /// `output_dim x input_dim`; rows are orthonormal principal directions.
    pub components: Vec<f64>,
    /// Variance along each retained direction, descending.
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    /// Zero-mean identity projection.
    pub fn identity(dim: usize) -> Self {
        let mut components = vec![0.0; dim * dim];
        for i in 0..dim {
            components[i * dim + i] = 1.0;
        }
        Self { input_dim: dim, output_dim: dim, mean: vec![0.0; dim], components, eigenvalues: vec![1.0; dim] }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.components[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn project_into(&self, x: &[f32], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate().take(self.output_dim) {
            let row = self.row(o);
            *slot = x.iter().zip(&self.mean).zip(row).map(|((&v, m), r)| (v as f64 - m) * r).sum();
        }
    }

    pub fn project(&self, x: &[f32]) -> Vec<f32> {
        let mut out = vec![0.0; self.output_dim];
        self.project_into(x, &mut out);
        out.into_iter().map(|v| v as f32).collect()
    }

    /// Maps a projection back to input space.
    pub fn reconstruct(&self, y: &[f32]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (o, &c) in y.iter().enumerate() {
            for (dst, r) in out.iter_mut().zip(self.row(o)) {
                *dst += c as f64 * r;
            }
        }
        out
    }
}

/// Top-`out_dim` eigenvectors of the sample covariance.
pub fn train_pca(samples: &Descriptors, out_dim: usize) -> Result<PcaModel> {
    let (n, d) = (samples.len(), samples.dim());
    if out_dim == 0 || out_dim > d {
        return Err(Error::InvalidArgument(format!("PCA output dim {out_dim} for input dim {d}")));
    }
    if n <= out_dim {
        return Err(Error::TooFewSamples { needed: out_dim + 1, got: n });
    }
    let mut mean = vec![0.0; d];
    for r in samples.rows() {
        for (m, &v) in mean.iter_mut().zip(r) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut z = vec![0.0; d];
    for r in samples.rows() {
        for i in 0..d {
            z[i] = r[i] as f64 - mean[i];
        }
        for i in 0..d {
            let zi = z[i];
            if zi == 0.0 {
                continue;
            }
            for j in i..d {
                cov[(i, j)] += zi * z[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / (n - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let available = order.iter().filter(|&&i| eig.eigenvalues[i] > RANK_TOL * top && top > 0.0).count();
    if available < out_dim {
        return Err(Error::RankDeficient { available, requested: out_dim });
    }
    let mut components = Vec::with_capacity(out_dim * d);
    let mut eigenvalues = Vec::with_capacity(out_dim);
    for &i in order.iter().take(out_dim) {
        let col = eig.eigenvectors.column(i);
        // sign convention: largest-magnitude entry positive
        let pivot = (0..d).max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()).then(b.cmp(&a))).unwrap_or(0);
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        components.extend(col.iter().map(|v| v * sign));
        eigenvalues.push(eig.eigenvalues[i]);
    }
    Ok(PcaModel { input_dim: d, output_dim: out_dim, mean, components, eigenvalues })
}

/// Projects every descriptor of a field.
pub fn apply_pca(field: &FeatureField, pca: &PcaModel) -> Result<FeatureField> {
    if field.dim() != pca.input_dim {
        return Err(Error::DimensionMismatch(format!(
            "PCA expects {} dims, field has {}",
            pca.input_dim,
            field.dim()
        )));
    }
    let mut data = Vec::with_capacity(field.cells() * pca.output_dim);
    let mut buf = vec![0.0; pca.output_dim];
    for desc in field.descriptors() {
        pca.project_into(desc, &mut buf);
        data.extend(buf.iter().map(|&v| v as f32));
    }
    field.with_data(pca.output_dim, data)
}
