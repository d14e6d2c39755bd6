//! Dense descriptor grids and per-pixel region masks.

use crate::error::{Error, Result};

/// A dense grid of `dim`-dimensional local descriptors.
///
/// Cell `(i, j)` is centered at pixel `offset + stride * (i, j)` of the image
/// rescaled by `scale`; pixel centers sit on integer coordinates. Data is
/// cell-major: the descriptor of cell `(i, j)` occupies
/// `data[(j * grid_w + i) * dim..][..dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureField {
    grid_w: usize,
    grid_h: usize,
    dim: usize,
    stride: f32,
    offset: (f32, f32),
    scale: f32,
    source: String,
    data: Vec<f32>,
}

/// Geometry of a field, without the descriptor payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldGeometry {
    pub stride: f32,
    pub offset: (f32, f32),
    pub scale: f32,
}

impl FeatureField {
    pub fn new(
        grid_w: usize,
        grid_h: usize,
        dim: usize,
        geometry: FieldGeometry,
        source: impl Into<String>,
        data: Vec<f32>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dimension must be >= 1".into()));
        }
        if !(geometry.stride >= 1.0) || !geometry.stride.is_finite() {
            return Err(Error::InvalidArgument(format!("field stride {}", geometry.stride)));
        }
        if !(geometry.scale > 0.0) || !geometry.scale.is_finite() {
            return Err(Error::InvalidArgument(format!("field scale {}", geometry.scale)));
        }
        if !geometry.offset.0.is_finite() || !geometry.offset.1.is_finite() {
            return Err(Error::NonFinite("field offset".into()));
        }
        if data.len() != grid_w * grid_h * dim {
            return Err(Error::DimensionMismatch(format!(
                "field data length {} != {grid_w}x{grid_h}x{dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field data".into()));
        }
        Ok(Self {
            grid_w,
            grid_h,
            dim,
            stride: geometry.stride,
            offset: geometry.offset,
            scale: geometry.scale,
            source: source.into(),
            data,
        })
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        self.grid_w * self.grid_h
    }

    pub fn geometry(&self) -> FieldGeometry {
        FieldGeometry { stride: self.stride, offset: self.offset, scale: self.scale }
    }

    pub fn stride(&self) -> f32 {
        self.stride
    }

    pub fn offset(&self) -> (f32, f32) {
        self.offset
    }

    pub fn scale(&self) -> f32 {
        self.scale
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn descriptor(&self, i: usize, j: usize) -> &[f32] {
        let start = (j * self.grid_w + i) * self.dim;
        &self.data[start..start + self.dim]
    }

    /// Descriptors in row-major cell order.
    pub fn descriptors(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    /// Center of cell `(i, j)` in the rescaled image.
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.offset.0 as f64 + self.stride as f64 * i as f64,
            self.offset.1 as f64 + self.stride as f64 * j as f64,
        )
    }

    /// Center of cell `(i, j)` mapped back to original-image coordinates.
    pub fn original_center(&self, i: usize, j: usize) -> (f64, f64) {
        let (x, y) = self.center(i, j);
        let s = self.scale as f64;
        ((x + 0.5) / s - 0.5, (y + 0.5) / s - 0.5)
    }

    /// Records the rescale factor the field was computed at.
    pub fn with_scale(mut self, scale: f32) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidArgument(format!("field scale {scale}")));
        }
        self.scale = scale;
        Ok(self)
    }

    /// Same geometry, different descriptors.
    pub fn with_data(&self, dim: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(self.grid_w, self.grid_h, dim, self.geometry(), self.source.clone(), data)
    }
}

/// Per-pixel region labels at image resolution; 0 means unlabeled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl RegionMask {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Degenerate(format!("mask size {width}x{height}")));
        }
        if labels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "mask length {} != {width}x{height}",
                labels.len()
            )));
        }
        Ok(Self { width, height, labels })
    }

    /// Every pixel labeled with `id`.
    pub fn full(width: usize, height: usize, id: u32) -> Result<Self> {
        Self::new(width, height, vec![id; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Distinct non-zero ids, ascending.
    pub fn region_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.labels.iter().copied().filter(|&l| l != 0).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Nearest pixel to an original-image coordinate, clamped into the image.
#[inline]
pub fn nearest_pixel(x: f64, y: f64, width: usize, height: usize) -> (usize, usize) {
    let px = x.round().clamp(0.0, (width - 1) as f64) as usize;
    let py = y.round().clamp(0.0, (height - 1) as f64) as usize;
    (px, py)
}
