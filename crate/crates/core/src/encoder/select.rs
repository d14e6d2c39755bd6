//! Which descriptor cells belong to a region.
//!
//! A cell belongs to a region when its center, mapped back to
//! original-image resolution and rounded to the nearest pixel (clamped into
//! the image), lies on a pixel of that region.

use crate::field::{nearest_pixel, FeatureField, RegionMask};

/// A set of pixels on an image canvas.
pub trait PixelSet: Sync {
    fn dims(&self) -> (usize, usize);
    fn contains(&self, x: usize, y: usize) -> bool;
}

/// Pixels of a [`RegionMask`] carrying one region id.
#[derive(Debug, Clone, Copy)]
pub struct MaskRegion<'a> {
    pub mask: &'a RegionMask,
    pub id: u32,
}

impl PixelSet for MaskRegion<'_> {
    fn dims(&self) -> (usize, usize) {
        (self.mask.width(), self.mask.height())
    }

    fn contains(&self, x: usize, y: usize) -> bool {
        self.mask.get(x, y) == self.id
    }
}

/// Inclusive pixel rectangle on a `width x height` canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub width: usize,
    pub height: usize,
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelSet for PixelRect {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }
}

#[derive(Clone, Copy)]
pub enum Region<'a> {
    /// Every cell of every field.
    Whole,
    Pixels(&'a dyn PixelSet),
}

impl<'a> Region<'a> {
    pub fn mask(mask: &'a MaskRegion<'a>) -> Self {
        Region::Pixels(mask)
    }

    pub fn selects(&self, field: &FeatureField, i: usize, j: usize) -> bool {
        match self {
            Region::Whole => true,
            Region::Pixels(set) => {
                let (w, h) = set.dims();
                let (x, y) = field.original_center(i, j);
                let (px, py) = nearest_pixel(x, y, w, h);
                set.contains(px, py)
            }
        }
    }
}

/// Calls `f` on every selected descriptor, field by field in row-major cell order.
pub fn for_each_selected<'f>(fields: &'f [FeatureField], region: Region<'_>, mut f: impl FnMut(&'f [f32])) {
    for field in fields {
        for j in 0..field.grid_h() {
            for i in 0..field.grid_w() {
                if region.selects(field, i, j) {
                    f(field.descriptor(i, j));
                }
            }
        }
    }
}

/// Number of cells a region captures.
pub fn count_selected(fields: &[FeatureField], region: Region<'_>) -> usize {
    let mut n = 0;
    for_each_selected(fields, region, |_| n += 1);
    n
}
