//! Procedural texture crops for desk-scale benchmarks.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use texturebank::pnm::write_image;
use texturebank::{rng, ImagePlane};

use crate::io::write_atomic;
use crate::manifest::{Manifest, Record, Split};

pub const PERIOD: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthClass {
    HStripes,
    VStripes,
    Checker,
    Noise,
    Blobs,
}

impl SynthClass {
    pub const ALL: [SynthClass; 5] =
        [SynthClass::HStripes, SynthClass::VStripes, SynthClass::Checker, SynthClass::Noise, SynthClass::Blobs];

    pub fn name(self) -> &'static str {
        match self {
            SynthClass::HStripes => "hstripes",
            SynthClass::VStripes => "vstripes",
            SynthClass::Checker => "checker",
            SynthClass::Noise => "noise",
            SynthClass::Blobs => "blobs",
        }
    }
}

impl fmt::Display for SynthClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthClass {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match SynthClass::ALL.iter().find(|c| c.name() == s) {
            Some(c) => Ok(*c),
            None => bail!("unknown texture class {s:?}; valid: hstripes, vstripes, checker, noise, blobs"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: Vec<SynthClass>,
    pub size: usize,
    pub train: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { classes: SynthClass::ALL.to_vec(), size: 64, train: 100, test: 100, seed: 0 }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            bail!("a synthetic set needs at least 2 classes");
        }
        if self.train == 0 || self.test == 0 {
            bail!("per-split counts must be >= 1");
        }
        if self.size < 8 {
            bail!("crop size {} < 8", self.size);
        }
        Ok(())
    }

    /// Crops in manifest order: per class, train then test.
    pub fn crops(&self) -> Vec<(SynthClass, Split, usize)> {
        let mut v = Vec::new();
        for &c in &self.classes {
            for (split, n) in [(Split::Train, self.train), (Split::Test, self.test)] {
                v.extend((0..n).map(|i| (c, split, i)));
            }
        }
        v
    }

    pub fn render_crop(&self, class: SynthClass, split: Split, index: usize) -> ImagePlane {
        let mut r = rng::stream(self.seed, &format!("synth/{class}/{split}/{index}"));
        render(class, self.size, &mut r)
    }
}

fn square_wave(t: usize) -> f32 {
    if t % PERIOD < PERIOD / 2 {
        1.0
    } else {
        0.0
    }
}

/// Horizontal stripes: intensity depends on the row only.
pub fn stripes(size: usize, horizontal: bool, phase: usize) -> ImagePlane {
    ImagePlane::from_fn(size, size, |x, y| square_wave(if horizontal { y } else { x } + phase)).unwrap()
}

/// Rotates a square single-channel image by 90 degrees counter-clockwise.
pub fn rot90(img: &ImagePlane) -> ImagePlane {
    let n = img.width();
    assert_eq!(n, img.height(), "rot90 needs a square image");
    ImagePlane::from_fn(n, n, |x, y| img.get(0, n - 1 - y, x)).unwrap()
}

fn gaussian_blur(v: &[f32], n: usize, sigma: f32) -> Vec<f32> {
    let r = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f32> = (-r..=r).map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f32 = kernel.iter().sum();
    let kernel: Vec<f32> = kernel.iter().map(|k| k / total).collect();
    // periodic boundary keeps blob statistics uniform up to the edges
    let wrap = |i: isize| i.rem_euclid(n as isize) as usize;
    let mut tmp = vec![0f32; n * n];
    for y in 0..n {
        for x in 0..n {
            tmp[y * n + x] = kernel.iter().enumerate().map(|(k, w)| w * v[y * n + wrap(x as isize + k as isize - r)]).sum();
        }
    }
    let mut out = vec![0f32; n * n];
    for y in 0..n {
        for x in 0..n {
            out[y * n + x] = kernel.iter().enumerate().map(|(k, w)| w * tmp[wrap(y as isize + k as isize - r) * n + x]).sum();
        }
    }
    out
}

/// One crop of `class`. Gaussian noise is stored as `0.5 + z/6` clamped to
/// [0, 1] so it survives 8-bit PGM storage.
pub fn render(class: SynthClass, size: usize, r: &mut impl Rng) -> ImagePlane {
    match class {
        SynthClass::HStripes => stripes(size, true, r.gen_range(0..PERIOD)),
        SynthClass::VStripes => stripes(size, false, r.gen_range(0..PERIOD)),
        SynthClass::Checker => {
            let (px, py) = (r.gen_range(0..2 * PERIOD), r.gen_range(0..2 * PERIOD));
            ImagePlane::from_fn(size, size, |x, y| (((x + px) / PERIOD + (y + py) / PERIOD) % 2) as f32).unwrap()
        }
        SynthClass::Noise => {
            let data = (0..size * size).map(|_| (0.5 + r.sample::<f32, _>(StandardNormal) / 6.0).clamp(0.0, 1.0)).collect();
            ImagePlane::new(size, size, 1, data).unwrap()
        }
        SynthClass::Blobs => {
            let z: Vec<f32> = (0..size * size).map(|_| r.sample(StandardNormal)).collect();
            let smooth = gaussian_blur(&z, size, 2.0);
            ImagePlane::new(size, size, 1, smooth.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect()).unwrap()
        }
    }
}

/// Writes the crops as PGM files under `dir/images` plus `dir/manifest.tsv`.
pub fn write_synthetic(spec: &SyntheticSpec, dir: &Path) -> Result<PathBuf> {
    spec.validate()?;
    let mut records = Vec::new();
    for (class, split, i) in spec.crops() {
        let rel = PathBuf::from(format!("images/{class}_{split}_{i:04}.pgm"));
        write_atomic(&dir.join(&rel), &write_image(&spec.render_crop(class, split, i))?)?;
        records.push(Record { image: rel, split, labels: vec![class.to_string()], mask: None, proposals: None });
    }
    let manifest = Manifest {
        root: dir.to_path_buf(),
        classes: spec.classes.iter().map(|c| c.to_string()).collect(),
        records,
    };
    let path = dir.join("manifest.tsv");
    write_atomic(&path, manifest.to_text().as_bytes())?;
    Ok(path)
}
