//! Image planes, bilinear rescaling and the multi-scale ladder.

use crate::error::{Error, Result};

/// Channel-planar, row-major f32 image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Degenerate(format!("image size {width}x{height}")));
        }
        if channels == 0 {
            return Err(Error::InvalidArgument("image with zero channels".into()));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "image data length {} != {width}x{height}x{channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data".into()));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds a single-channel image from a generator over `(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Luma plane. RGB is combined with ITU-R BT.601 weights.
    pub fn to_gray(&self) -> ImagePlane {
        match self.channels {
            1 => self.clone(),
            3 => {
                let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
                let data = r
                    .iter()
                    .zip(g)
                    .zip(b)
                    .map(|((r, g), b)| 0.299 * r + 0.587 * g + 0.114 * b)
                    .collect();
                ImagePlane { width: self.width, height: self.height, channels: 1, data }
            }
            c => {
                let n = self.width * self.height;
                let data = (0..n)
                    .map(|i| (0..c).map(|k| self.data[k * n + i]).sum::<f32>() / c as f32)
                    .collect();
                ImagePlane { width: self.width, height: self.height, channels: 1, data }
            }
        }
    }

    /// Copies the rectangle `[x0, x0+w) x [y0, y0+h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<ImagePlane> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::InvalidArgument(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h * self.channels);
        for c in 0..self.channels {
            for y in y0..y0 + h {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + x0..row + x0 + w]);
            }
        }
        ImagePlane::new(w, h, self.channels, data)
    }
}

/// Bilinear sample at continuous pixel-center coordinates, clamped at the borders.
#[inline]
pub(crate) fn sample_bilinear(plane: &[f32], width: usize, height: usize, x: f64, y: f64) -> f32 {
    let x = x.clamp(0.0, (width - 1) as f64);
    let y = y.clamp(0.0, (height - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = (x - x0 as f64) as f32;
    let fy = (y - y0 as f64) as f32;
    let top = plane[y0 * width + x0] * (1.0 - fx) + plane[y0 * width + x1] * fx;
    let bottom = plane[y1 * width + x0] * (1.0 - fx) + plane[y1 * width + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Resamples the source window `[sx0, sx0+sw) x [sy0, sy0+sh)` (edge
/// coordinates, pixel `i` covering `[i, i+1)`) onto an `out_w x out_h` grid.
pub(crate) fn resample_window(
    img: &ImagePlane,
    (sx0, sy0, sw, sh): (f64, f64, f64, f64),
    out_w: usize,
    out_h: usize,
) -> Result<ImagePlane> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Degenerate(format!("resampled size {out_w}x{out_h}")));
    }
    let kx = sw / out_w as f64;
    let ky = sh / out_h as f64;
    let mut data = Vec::with_capacity(out_w * out_h * img.channels);
    for c in 0..img.channels {
        let plane = img.plane(c);
        for oy in 0..out_h {
            let y = sy0 + (oy as f64 + 0.5) * ky - 0.5;
            for ox in 0..out_w {
                let x = sx0 + (ox as f64 + 0.5) * kx - 0.5;
                data.push(sample_bilinear(plane, img.width, img.height, x, y));
            }
        }
    }
    ImagePlane::new(out_w, out_h, img.channels, data)
}

/// Bilinear rescale to `round(w * factor) x round(h * factor)`.
///
/// Pixel centers are aligned (`src = (dst + 0.5) * w / w' - 0.5`) and reads
/// are clamped at the border. A factor of exactly 1 returns a copy.
pub fn rescale_image(img: &ImagePlane, factor: f64) -> Result<ImagePlane> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::InvalidArgument(format!("rescale factor {factor}")));
    }
    let out_w = (img.width as f64 * factor).round() as usize;
    let out_h = (img.height as f64 * factor).round() as usize;
    if out_w == 0 || out_h == 0 {
        return Err(Error::Degenerate(format!(
            "rescaling {}x{} by {factor} gives {out_w}x{out_h}",
            img.width, img.height
        )));
    }
    if factor == 1.0 {
        return Ok(img.clone());
    }
    resample_window(img, (0.0, 0.0, img.width as f64, img.height as f64), out_w, out_h)
}

/// Parameters of the geometric scale ladder `2^s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderSpec {
    pub s_min: f64,
    pub s_max: f64,
    pub step: f64,
    pub area_cap: f64,
}

impl Default for LadderSpec {
    fn default() -> Self {
        Self { s_min: -3.0, s_max: 1.5, step: 0.5, area_cap: 1024.0 * 1024.0 }
    }
}

/// Scale factors `2^s` for `s = s_min, s_min + step, ..., s_max`, keeping
/// only those whose rescaled area stays within `area_cap`.
pub fn scale_ladder(width: usize, height: usize, spec: &LadderSpec) -> Result<Vec<f64>> {
    if !(spec.step > 0.0) {
        return Err(Error::InvalidArgument(format!("ladder step {}", spec.step)));
    }
    if spec.s_min > spec.s_max {
        return Err(Error::InvalidArgument(format!(
            "ladder s_min {} > s_max {}",
            spec.s_min, spec.s_max
        )));
    }
    let count = ((spec.s_max - spec.s_min) / spec.step + 1e-9).floor() as usize + 1;
    let factors: Vec<f64> = (0..count)
        .map(|i| (spec.s_min + i as f64 * spec.step).exp2())
        .filter(|f| (width as f64 * f) * (height as f64 * f) <= spec.area_cap)
        .collect();
    if factors.is_empty() {
        return Err(Error::EmptyLadder { width, height });
    }
    Ok(factors)
}
