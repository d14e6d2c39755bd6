//! Hard-assignment encoders against a k-means codebook: VLAD and a plain
//! bag-of-words histogram.

use crate::encoder::kmeans::KMeans;
use crate::encoder::select::{for_each_selected, Region};
use crate::encoder::{l2_normalize_in_place, EncodedDescriptor, EncoderConfig, Encoding};
use crate::error::{Error, Result};
use crate::field::FeatureField;

fn check(fields: &[FeatureField], codebook: &KMeans) -> Result<()> {
    if let Some(f) = fields.iter().find(|f| f.dim() != codebook.dim) {
        return Err(Error::DimensionMismatch(format!(
            "codebook is {}-dim, field has {}",
            codebook.dim,
            f.dim()
        )));
    }
    Ok(())
}

/// Residual sums `sum_{x -> c} (x - c)` per center, before normalization,
/// and the number of pooled descriptors.
pub fn vlad_residuals(fields: &[FeatureField], region: Region<'_>, codebook: &KMeans) -> Result<(Vec<f64>, usize)> {
    check(fields, codebook)?;
    let d = codebook.dim;
    let mut sums = vec![0.0; codebook.k * d];
    let mut n = 0;
    for_each_selected(fields, region, |x| {
        let (c, _) = codebook.assign(x);
        let center = codebook.center(c);
        for ((s, &v), m) in sums[c * d..(c + 1) * d].iter_mut().zip(x).zip(center) {
            *s += v as f64 - m;
        }
        n += 1;
    });
    if n == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok((sums, n))
}

/// VLAD: residual sums, then per-block (intra) L2 normalization and a
/// global L2 normalization when `cfg.l2_normalize` is set.
pub fn encode_vlad(
    fields: &[FeatureField],
    region: Region<'_>,
    codebook: &KMeans,
    cfg: &EncoderConfig,
) -> Result<EncodedDescriptor> {
    let (mut v, _) = vlad_residuals(fields, region, codebook)?;
    let mut zero = v.iter().all(|&x| x == 0.0);
    if cfg.l2_normalize {
        for block in v.chunks_exact_mut(codebook.dim) {
            l2_normalize_in_place(block);
        }
        zero = !l2_normalize_in_place(&mut v);
    }
    Ok(EncodedDescriptor {
        values: v.into_iter().map(|x| x as f32).collect(),
        encoding: Encoding::Vlad,
        k: codebook.k,
        dim: codebook.dim,
        signed_sqrt: false,
        l2_normalized: cfg.l2_normalize,
        zero,
    })
}

/// Hard-assignment visual-word histogram, divided by the descriptor count
/// and L2-normalized when `cfg.l2_normalize` is set.
pub fn encode_bow(
    fields: &[FeatureField],
    region: Region<'_>,
    codebook: &KMeans,
    cfg: &EncoderConfig,
) -> Result<EncodedDescriptor> {
    check(fields, codebook)?;
    let mut hist = vec![0.0; codebook.k];
    let mut n = 0usize;
    for_each_selected(fields, region, |x| {
        hist[codebook.assign(x).0] += 1.0;
        n += 1;
    });
    if n == 0 {
        return Err(Error::EmptyRegion);
    }
    hist.iter_mut().for_each(|h| *h /= n as f64);
    if cfg.l2_normalize {
        l2_normalize_in_place(&mut hist);
    }
    Ok(EncodedDescriptor {
        values: hist.into_iter().map(|x| x as f32).collect(),
        encoding: Encoding::Bow,
        k: codebook.k,
        dim: 1,
        signed_sqrt: false,
        l2_normalized: cfg.l2_normalize,
        zero: false,
    })
}
