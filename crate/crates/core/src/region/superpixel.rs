//! SLIC-style superpixels: local k-means on color and position followed by
//! connectivity enforcement.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::field::RegionMask;
use crate::image::ImagePlane;
use crate::region::ProposalSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicConfig {
    /// Weight of spatial distance (in grid steps) against color distance.
    pub compactness: f64,
    pub iterations: usize,
    /// Components smaller than this fraction of the mean superpixel area are merged.
    pub min_size_fraction: f64,
}

impl Default for SlicConfig {
    fn default() -> Self {
        Self { compactness: 0.1, iterations: 10, min_size_fraction: 0.25 }
    }
}

struct Center {
    x: f64,
    y: f64,
    color: Vec<f64>,
}

fn grid_shape(w: usize, h: usize, target: usize) -> (usize, usize) {
    let target = target.min(w * h);
    let nx = ((target as f64 * w as f64 / h as f64).sqrt().round() as usize).clamp(1, w);
    let ny = ((target as f64 / nx as f64).round() as usize).clamp(1, h);
    (nx, ny)
}

pub fn superpixels(img: &ImagePlane, target: usize) -> Result<ProposalSet> {
    superpixels_with(img, target, &SlicConfig::default())
}

pub fn superpixels_with(img: &ImagePlane, target: usize, cfg: &SlicConfig) -> Result<ProposalSet> {
    if target == 0 {
        return Err(Error::InvalidArgument("superpixel count must be at least 1".into()));
    }
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let (nx, ny) = grid_shape(w, h, target);
    let (sx, sy) = (w as f64 / nx as f64, h as f64 / ny as f64);
    let step = (sx * sy).sqrt();
    let color_at = |p: usize, c: usize| img.plane(c)[p] as f64;

    // start from the grid tiling
    let mut labels: Vec<usize> = (0..w * h)
        .map(|p| {
            let (x, y) = (p % w, p / w);
            let i = ((x as f64 / sx) as usize).min(nx - 1);
            let j = ((y as f64 / sy) as usize).min(ny - 1);
            j * nx + i
        })
        .collect();
    let mut centers: Vec<Center> = (0..nx * ny)
        .map(|k| {
            let (i, j) = (k % nx, k / nx);
            let (x, y) = ((i as f64 + 0.5) * sx - 0.5, (j as f64 + 0.5) * sy - 0.5);
            let p = (y.round() as usize).min(h - 1) * w + (x.round() as usize).min(w - 1);
            Center { x, y, color: (0..ch).map(|c| color_at(p, c)).collect() }
        })
        .collect();

    let m2 = (cfg.compactness / step).powi(2);
    let mut dist = vec![f64::INFINITY; w * h];
    for _ in 0..cfg.iterations {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let xa = (c.x - step).floor().max(0.0) as usize;
            let xb = ((c.x + step).ceil() as usize).min(w - 1);
            let ya = (c.y - step).floor().max(0.0) as usize;
            let yb = ((c.y + step).ceil() as usize).min(h - 1);
            for y in ya..=yb {
                for x in xa..=xb {
                    let p = y * w + x;
                    let dc: f64 = (0..ch).map(|q| (color_at(p, q) - c.color[q]).powi(2)).sum();
                    let ds = (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2);
                    let d = dc + m2 * ds;
                    if d < dist[p] {
                        dist[p] = d;
                        labels[p] = k;
                    }
                }
            }
        }
        let mut sums = vec![(0.0, 0.0, vec![0.0; ch], 0usize); centers.len()];
        for (p, &k) in labels.iter().enumerate() {
            let s = &mut sums[k];
            s.0 += (p % w) as f64;
            s.1 += (p / w) as f64;
            for q in 0..ch {
                s.2[q] += color_at(p, q);
            }
            s.3 += 1;
        }
        for (c, (x, y, col, n)) in centers.iter_mut().zip(sums) {
            if n > 0 {
                let n = n as f64;
                c.x = x / n;
                c.y = y / n;
                c.color = col.into_iter().map(|v| v / n).collect();
            }
        }
    }

    let min_size = ((cfg.min_size_fraction * (w * h) as f64 / centers.len() as f64) as usize).max(1);
    let ids = enforce_connectivity(&labels, w, h, min_size);
    ProposalSet::from_partition(&RegionMask::new(w, h, ids)?)
}

/// Relabels 4-connected components densely from 1 in raster order; a
/// component below `min_size` joins the component of the pixel left of (or
/// above) its first pixel.
fn enforce_connectivity(labels: &[usize], w: usize, h: usize, min_size: usize) -> Vec<u32> {
    let mut out = vec![0u32; w * h];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    let mut comp = Vec::new();
    for start in 0..w * h {
        if out[start] != 0 {
            continue;
        }
        let (x, y) = (start % w, start / w);
        let adjacent = if x > 0 {
            out[start - 1]
        } else if y > 0 {
            out[start - w]
        } else {
            0
        };
        next += 1;
        let id = next;
        comp.clear();
        out[start] = id;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            comp.push(p);
            let (px, py) = (p % w, p / w);
            let mut visit = |q: usize| {
                if out[q] == 0 && labels[q] == labels[start] {
                    out[q] = id;
                    queue.push_back(q);
                }
            };
            if px > 0 {
                visit(p - 1);
            }
            if px + 1 < w {
                visit(p + 1);
            }
            if py > 0 {
                visit(p - w);
            }
            if py + 1 < h {
                visit(p + w);
            }
        }
        if comp.len() < min_size && adjacent != 0 {
            for &p in &comp {
                out[p] = adjacent;
            }
            next -= 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_partition(set: &ProposalSet) {
        assert!(set.is_partition());
        let total: usize = set.proposals.iter().map(|p| p.area()).sum();
        assert_eq!(total, set.width * set.height);
    }

    #[test]
    fn constant_image_tiles() {
        let img = ImagePlane::filled(40, 40, 1, 0.5).unwrap();
        let set = superpixels(&img, 4).unwrap();
        assert_partition(&set);
        assert_eq!(set.proposals.len(), 4);
        for p in &set.proposals {
            assert_eq!(p.area(), 400);
        }
    }

    #[test]
    fn single_region() {
        let img = ImagePlane::from_fn(17, 9, |x, y| ((x * 7 + y * 3) % 5) as f32 / 5.0).unwrap();
        let set = superpixels(&img, 1).unwrap();
        assert_eq!(set.proposals.len(), 1);
        assert_eq!(set.proposals[0].area(), 17 * 9);
    }

    #[test]
    fn components_are_split_and_small_ones_merged() {
        #[rustfmt::skip]
        let labels = [
            0, 0, 1, 0,
            1, 1, 1, 0,
            0, 1, 1, 1,
        ];
        let out = enforce_connectivity(&labels, 4, 3, 1);
        assert_eq!(out, vec![1, 1, 2, 3, 2, 2, 2, 3, 4, 2, 2, 2]);
        let merged = enforce_connectivity(&labels, 4, 3, 2);
        assert_eq!(merged, vec![1, 1, 2, 3, 2, 2, 2, 3, 2, 2, 2, 2]);
    }
}
