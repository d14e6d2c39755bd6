//! Dense SIFT on a regular grid.
//!
//! Each descriptor covers a square support split into 4x4 spatial cells with
//! 8 orientation bins. Gradients are centered differences; each pixel votes
//! its gradient magnitude, weighted by a Gaussian centered on the support
//! (sigma = half the support), bilinearly into the neighbouring cells and
//! linearly into the two nearest orientation bins.

use std::f32::consts::TAU;

use crate::error::{Error, Result};
use crate::field::{FeatureField, FieldGeometry};
use crate::image::ImagePlane;

pub const SIFT_CELLS: usize = 4;
pub const SIFT_ORIENTATIONS: usize = 8;
pub const SIFT_DIM: usize = SIFT_CELLS * SIFT_CELLS * SIFT_ORIENTATIONS;

/// Descriptors whose raw norm falls below this are emitted as zeros.
const MIN_NORM: f32 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiftConfig {
    /// Side of the square support in pixels; a multiple of the 4 cells.
    pub support: usize,
    /// Pixels between neighbouring descriptors.
    pub step: usize,
    pub clamp: f32,
}

impl Default for SiftConfig {
    fn default() -> Self {
        Self { support: 32, step: 4, clamp: 0.2 }
    }
}

impl SiftConfig {
    fn validate(&self) -> Result<()> {
        if self.support < SIFT_CELLS || self.support % SIFT_CELLS != 0 {
            return Err(Error::InvalidArgument(format!(
                "SIFT support {} must be a positive multiple of {SIFT_CELLS}",
                self.support
            )));
        }
        if self.step == 0 {
            return Err(Error::InvalidArgument("SIFT step must be >= 1".into()));
        }
        if !(self.clamp > 0.0) {
            return Err(Error::InvalidArgument(format!("SIFT clamp {}", self.clamp)));
        }
        Ok(())
    }
}

/// Per-pixel gradient votes: two orientation bins with their weights.
struct OrientedGradients {
    width: usize,
    bin: Vec<u8>,
    weight: Vec<[f32; 2]>,
}

fn oriented_gradients(gray: &ImagePlane) -> OrientedGradients {
    let (w, h) = (gray.width(), gray.height());
    let px = gray.plane(0);
    let at = |x: usize, y: usize| px[y * w + x];
    let mut bin = vec![0u8; w * h];
    let mut weight = vec![[0f32; 2]; w * h];
    let per_bin = TAU / SIFT_ORIENTATIONS as f32;
    for y in 0..h {
        let (ym, yp) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (xm, xp) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let gx = (at(xp, y) - at(xm, y)) * 0.5;
            let gy = (at(x, yp) - at(x, ym)) * 0.5;
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let mut theta = gy.atan2(gx);
            if theta < 0.0 {
                theta += TAU;
            }
            let t = theta / per_bin;
            let b0 = (t.floor() as usize) % SIFT_ORIENTATIONS;
            let frac = t - t.floor();
            bin[y * w + x] = b0 as u8;
            weight[y * w + x] = [mag * (1.0 - frac), mag * frac];
        }
    }
    OrientedGradients { width: w, bin, weight }
}

/// Bilinear split of a support coordinate into the neighbouring cells.
fn cell_weights(support: usize) -> Vec<[(usize, f32); 2]> {
    let cell = (support / SIFT_CELLS) as f32;
    (0..support)
        .map(|u| {
            let t = (u as f32 + 0.5) / cell - 0.5;
            let c0 = t.floor();
            let frac = t - c0;
            let c0 = c0 as isize;
            let lo = if c0 >= 0 { (c0 as usize, 1.0 - frac) } else { (0, 0.0) };
            let hi = if c0 + 1 < SIFT_CELLS as isize { ((c0 + 1) as usize, frac) } else { (0, 0.0) };
            [lo, hi]
        })
        .collect()
}

fn gaussian_window(support: usize) -> Vec<f32> {
    let sigma = support as f32 / 2.0;
    let c = (support as f32 - 1.0) / 2.0;
    (0..support)
        .map(|u| {
            let d = u as f32 - c;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect()
}

/// L2 normalize, clamp components, renormalize. Weak descriptors become zero.
pub fn normalize_descriptor(desc: &mut [f32], clamp: f32) {
    let norm = desc.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm < MIN_NORM {
        desc.fill(0.0);
        return;
    }
    for v in desc.iter_mut() {
        *v = (*v / norm).min(clamp);
    }
    let norm = desc.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm > 0.0 {
        for v in desc.iter_mut() {
            *v /= norm;
        }
    }
}

/// Dense 128-dimensional SIFT descriptors with top-left corners on a
/// `step`-spaced grid starting at the image origin.
pub fn dense_sift(img: &ImagePlane, cfg: &SiftConfig) -> Result<FeatureField> {
    cfg.validate()?;
    let gray = img.to_gray();
    let (w, h) = (gray.width(), gray.height());
    if w < cfg.support || h < cfg.support {
        return Err(Error::EmptyField(format!(
            "image {w}x{h} smaller than SIFT support {}",
            cfg.support
        )));
    }
    let grid_w = (w - cfg.support) / cfg.step + 1;
    let grid_h = (h - cfg.support) / cfg.step + 1;
    let grads = oriented_gradients(&gray);
    let cells = cell_weights(cfg.support);
    let window = gaussian_window(cfg.support);

    let mut data = vec![0f32; grid_w * grid_h * SIFT_DIM];
    for gy in 0..grid_h {
        for gx in 0..grid_w {
            let desc = &mut data[(gy * grid_w + gx) * SIFT_DIM..][..SIFT_DIM];
            let (x0, y0) = (gx * cfg.step, gy * cfg.step);
            for v in 0..cfg.support {
                let row = (y0 + v) * grads.width + x0;
                let wy = window[v];
                let [(cy0, fy0), (cy1, fy1)] = cells[v];
                for u in 0..cfg.support {
                    let idx = row + u;
                    let [m0, m1] = grads.weight[idx];
                    if m0 == 0.0 && m1 == 0.0 {
                        continue;
                    }
                    let g = wy * window[u];
                    let b0 = grads.bin[idx] as usize;
                    let b1 = (b0 + 1) % SIFT_ORIENTATIONS;
                    let [(cx0, fx0), (cx1, fx1)] = cells[u];
                    for (cy, fy) in [(cy0, fy0), (cy1, fy1)] {
                        if fy == 0.0 {
                            continue;
                        }
                        for (cx, fx) in [(cx0, fx0), (cx1, fx1)] {
                            if fx == 0.0 {
                                continue;
                            }
                            let s = g * fy * fx;
                            let base = (cy * SIFT_CELLS + cx) * SIFT_ORIENTATIONS;
                            desc[base + b0] += s * m0;
                            desc[base + b1] += s * m1;
                        }
                    }
                }
            }
            normalize_descriptor(desc, cfg.clamp);
        }
    }
    let center = cfg.support as f32 / 2.0 - 0.5;
    FeatureField::new(
        grid_w,
        grid_h,
        SIFT_DIM,
        FieldGeometry { stride: cfg.step as f32, offset: (center, center), scale: 1.0 },
        "dsift",
        data,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(v: &[f32]) -> f32 {
        v.iter().map(|x| x * x).sum::<f32>().sqrt()
    }

    #[test]
    fn constant_image_gives_zero_descriptors() {
        let img = ImagePlane::filled(40, 40, 1, 0.7).unwrap();
        let f = dense_sift(&img, &SiftConfig::default()).unwrap();
        assert_eq!((f.grid_w(), f.grid_h()), (3, 3));
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn additive_shift_invariance() {
        // values on a 1/256 grid so the shifted image is exact in f32
        let img = ImagePlane::from_fn(48, 40, |x, y| (((x * 13 + y * 7) % 97) as f32) / 256.0).unwrap();
        let shifted = ImagePlane::from_fn(48, 40, |x, y| (((x * 13 + y * 7) % 97) as f32) / 256.0 + 0.25).unwrap();
        let a = dense_sift(&img, &SiftConfig::default()).unwrap();
        let b = dense_sift(&shifted, &SiftConfig::default()).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn descriptors_are_unit_or_zero() {
        let img = ImagePlane::from_fn(50, 45, |x, y| ((x as f32 * 0.3).sin() * (y as f32 * 0.2).cos() + 1.0) / 2.0).unwrap();
        let f = dense_sift(&img, &SiftConfig { step: 3, ..Default::default() }).unwrap();
        for d in f.descriptors() {
            let n = norm(d);
            assert!(n == 0.0 || (n - 1.0).abs() < 1e-5, "norm {n}");
            assert!(d.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn grid_geometry() {
        let img = ImagePlane::filled(64, 64, 1, 0.0).unwrap();
        let f = dense_sift(&img, &SiftConfig::default()).unwrap();
        assert_eq!((f.grid_w(), f.grid_h(), f.dim()), (9, 9, 128));
        assert_eq!(f.offset(), (15.5, 15.5));
        assert_eq!(f.center(8, 0).0, 15.5 + 32.0);
    }

    #[test]
    fn too_small_image_is_empty_field() {
        let img = ImagePlane::filled(31, 64, 1, 0.0).unwrap();
        assert!(matches!(dense_sift(&img, &SiftConfig::default()), Err(Error::EmptyField(_))));
    }
}
