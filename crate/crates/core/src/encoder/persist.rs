//! GMM, PCA and k-means sections for the model container. Parameters are
//! stored as f64 LE.

use crate::container::{tag, ByteReader, ByteWriter, Container, Section};
use crate::encoder::{GmmModel, KMeans, PcaModel};
use crate::error::{Error, Result};

fn dim_u32(r: &mut ByteReader<'_>) -> Result<usize> {
    Ok(r.u32()? as usize)
}

fn checked_len(a: usize, b: usize) -> Result<usize> {
    a.checked_mul(b).ok_or_else(|| Error::Malformed("dimension overflow".into()))
}

pub fn gmm_section(gmm: &GmmModel) -> Section {
    let mut w = ByteWriter::new();
    w.u32(gmm.k() as u32);
    w.u32(gmm.dim() as u32);
    w.f64_slice(gmm.weights());
    w.f64_slice(gmm.means());
    w.f64_slice(gmm.variances());
    Section::new(tag("GMM"), w.into_inner())
}

pub fn gmm_from_section(s: &Section) -> Result<GmmModel> {
    let mut r = ByteReader::new(&s.payload);
    let k = dim_u32(&mut r)?;
    let d = dim_u32(&mut r)?;
    let weights = r.f64_vec(k)?;
    let kd = checked_len(k, d)?;
    let means = r.f64_vec(kd)?;
    let variances = r.f64_vec(kd)?;
    r.expect_end()?;
    GmmModel::new(k, d, weights, means, variances)
}

pub fn pca_section(pca: &PcaModel) -> Section {
    let mut w = ByteWriter::new();
    w.u32(pca.input_dim as u32);
    w.u32(pca.output_dim as u32);
    w.f64_slice(&pca.mean);
    w.f64_slice(&pca.components);
    w.f64_slice(&pca.eigenvalues);
    Section::new(tag("PCA"), w.into_inner())
}

pub fn pca_from_section(s: &Section) -> Result<PcaModel> {
    let mut r = ByteReader::new(&s.payload);
    let input_dim = dim_u32(&mut r)?;
    let output_dim = dim_u32(&mut r)?;
    if output_dim == 0 || output_dim > input_dim {
        return Err(Error::Malformed(format!("PCA {input_dim} -> {output_dim}")));
    }
    let mean = r.f64_vec(input_dim)?;
    let components = r.f64_vec(checked_len(input_dim, output_dim)?)?;
    let eigenvalues = r.f64_vec(output_dim)?;
    r.expect_end()?;
    if mean.iter().chain(&components).chain(&eigenvalues).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("PCA section".into()));
    }
    Ok(PcaModel { input_dim, output_dim, mean, components, eigenvalues })
}

pub fn kmeans_section(km: &KMeans) -> Section {
    let mut w = ByteWriter::new();
    w.u32(km.k as u32);
    w.u32(km.dim as u32);
    w.f64_slice(&km.centers);
    Section::new(tag("KMS"), w.into_inner())
}

pub fn kmeans_from_section(s: &Section) -> Result<KMeans> {
    let mut r = ByteReader::new(&s.payload);
    let k = dim_u32(&mut r)?;
    let d = dim_u32(&mut r)?;
    let centers = r.f64_vec(checked_len(k, d)?)?;
    r.expect_end()?;
    KMeans::new(k, d, centers)
}

/// Looks up a required section by tag.
pub fn require<'c>(c: &'c Container, name: &str) -> Result<&'c Section> {
    c.get(name).ok_or_else(|| Error::Malformed(format!("missing section {name}")))
}
