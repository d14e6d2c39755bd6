//! Region descriptors: orderless pooling over a proposal, and net outputs on
//! a warped crop of its bounding box.

use crate::encoder::{
    l2_normalize_in_place, EncodedDescriptor, Encoder, Encoding, FisherAccumulator, FisherEncoder, PixelRect, Region,
};
use crate::error::{Error, Result};
use crate::field::FeatureField;
use crate::filterbank::NetSpec;
use crate::image::{resample_window, ImagePlane};
use crate::region::Proposal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpSpec {
    pub target_side: usize,
    pub border_fraction: f64,
}

impl Default for WarpSpec {
    fn default() -> Self {
        Self { target_side: 224, border_fraction: 0.10 }
    }
}

impl WarpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.target_side < 8 {
            return Err(Error::InvalidArgument(format!("warp target side {} < 8", self.target_side)));
        }
        if !(self.border_fraction >= 0.0 && self.border_fraction.is_finite()) {
            return Err(Error::InvalidArgument("warp border fraction must be >= 0".into()));
        }
        Ok(())
    }
}

/// Pools the proposal's cells; fails with `EmptyRegion` when none is inside.
pub fn describe_region_fv(fields: &[FeatureField], proposal: &Proposal, encoder: &Encoder) -> Result<EncodedDescriptor> {
    encoder.encode(fields, Region::Pixels(proposal))
}

/// Unnormalized FV statistics of a proposal.
pub fn region_accumulator(
    fields: &[FeatureField],
    proposal: &Proposal,
    encoder: &FisherEncoder,
) -> Result<FisherAccumulator> {
    encoder.accumulate(fields, Region::Pixels(proposal))
}

/// As [`describe_region_fv`], but when no cell center falls inside the
/// proposal its bounding box is grown by 1, 2, 4, ... pixels per side until
/// one does. Returns the descriptor and the dilation used (0 if none).
pub fn describe_region_fv_dilated(
    fields: &[FeatureField],
    proposal: &Proposal,
    encoder: &Encoder,
) -> Result<(EncodedDescriptor, usize)> {
    match describe_region_fv(fields, proposal, encoder) {
        Err(Error::EmptyRegion) => {}
        other => return other.map(|d| (d, 0)),
    }
    let (w, h) = (proposal.width(), proposal.height());
    let (x0, y0, x1, y1) = proposal.bbox();
    let mut grow = 1;
    loop {
        let rect = PixelRect {
            width: w,
            height: h,
            x0: x0.saturating_sub(grow),
            y0: y0.saturating_sub(grow),
            x1: (x1 + grow).min(w - 1),
            y1: (y1 + grow).min(h - 1),
        };
        match encoder.encode(fields, Region::Pixels(&rect)) {
            Err(Error::EmptyRegion) if rect.x0 > 0 || rect.y0 > 0 || rect.x1 < w - 1 || rect.y1 < h - 1 => grow *= 2,
            other => return other.map(|d| (d, grow)),
        }
    }
}

/// Source window `(x0, y0, w, h)` in edge coordinates: the bounding box
/// grown by `border_fraction` of its size on each side, clamped to the image.
pub fn warp_window(proposal: &Proposal, warp: &WarpSpec) -> Result<(f64, f64, f64, f64)> {
    let (x0, y0, x1, y1) = proposal.bbox();
    let (bw, bh) = ((x1 + 1 - x0) as f64, (y1 + 1 - y0) as f64);
    let (iw, ih) = (proposal.width() as f64, proposal.height() as f64);
    let ex0 = (x0 as f64 - warp.border_fraction * bw).max(0.0);
    let ey0 = (y0 as f64 - warp.border_fraction * bh).max(0.0);
    let ex1 = ((x1 + 1) as f64 + warp.border_fraction * bw).min(iw);
    let ey1 = ((y1 + 1) as f64 + warp.border_fraction * bh).min(ih);
    if ex1 - ex0 <= 0.0 || ey1 - ey0 <= 0.0 {
        return Err(Error::Degenerate("empty warp window".into()));
    }
    Ok((ex0, ey0, ex1 - ex0, ey1 - ey0))
}

/// Crop around the proposal, warped to the target square.
pub fn warp_region(img: &ImagePlane, proposal: &Proposal, warp: &WarpSpec) -> Result<ImagePlane> {
    warp.validate()?;
    if (img.width(), img.height()) != (proposal.width(), proposal.height()) {
        return Err(Error::DimensionMismatch("proposal canvas differs from the image".into()));
    }
    resample_window(img, warp_window(proposal, warp)?, warp.target_side, warp.target_side)
}

/// L2-normalized output of the network's fully-connected head on the warped crop.
pub fn describe_region_fc(
    img: &ImagePlane,
    proposal: &Proposal,
    net: &NetSpec,
    warp: &WarpSpec,
) -> Result<EncodedDescriptor> {
    let crop = warp_region(img, proposal, warp)?;
    let mut v: Vec<f64> = net.run_head(&crop)?.into_iter().map(f64::from).collect();
    let zero = !l2_normalize_in_place(&mut v);
    Ok(EncodedDescriptor {
        dim: v.len(),
        values: v.into_iter().map(|x| x as f32).collect(),
        encoding: Encoding::Fc,
        k: 1,
        signed_sqrt: false,
        l2_normalized: true,
        zero,
    })
}
