//! Region description, proposals, superpixels and proposal pasting.

pub mod describe;
pub mod paste;
pub mod proposal;
pub mod superpixel;

pub use describe::{
    describe_region_fc, describe_region_fv, describe_region_fv_dilated, region_accumulator, warp_region, warp_window,
    WarpSpec,
};
pub use paste::{paste_proposals, LabelMap};
pub use proposal::{Proposal, ProposalSet};
pub use superpixel::{superpixels, superpixels_with, SlicConfig};
