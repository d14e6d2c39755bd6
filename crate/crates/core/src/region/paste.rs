//! Fusing classified proposals into a per-pixel label map.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::region::Proposal;

/// Per-pixel labels: 0 is unassigned, `v > 0` is class `v - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::DimensionMismatch(format!("{} labels for {width}x{height}", labels.len())));
        }
        Ok(Self { width, height, labels })
    }

    pub fn unassigned(width: usize, height: usize) -> Self {
        Self { width, height, labels: vec![0; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn class_at(&self, x: usize, y: usize) -> Option<usize> {
        match self.get(x, y) {
            0 => None,
            v => Some(v as usize - 1),
        }
    }
}

fn paste_key(p: &Proposal) -> Result<(f64, usize)> {
    match (p.score, p.label) {
        (Some(s), Some(_)) if s.is_finite() => Ok((s / p.area() as f64, p.area())),
        (Some(_), Some(_)) => Err(Error::NonFinite(format!("score of proposal {}", p.id))),
        _ => Err(Error::InvalidArgument(format!("proposal {} has not been classified", p.id))),
    }
}

/// Paste order: score/area ascending, then larger area first, then lower
/// proposal id. Label and mask break any remaining ties so the order is total.
fn paste_order(a: &Proposal, b: &Proposal) -> Ordering {
    let (ka, aa) = paste_key(a).unwrap_or((f64::NAN, 0));
    let (kb, ab) = paste_key(b).unwrap_or((f64::NAN, 0));
    ka.total_cmp(&kb)
        .then(ab.cmp(&aa))
        .then(a.id.cmp(&b.id))
        .then(a.label.cmp(&b.label))
        .then_with(|| a.runs().cmp(b.runs()))
}

/// Pastes proposals in increasing paste order; later ones overwrite.
pub fn paste_proposals(proposals: &[Proposal], width: usize, height: usize) -> Result<LabelMap> {
    let mut map = LabelMap::unassigned(width, height);
    let mut order: Vec<&Proposal> = Vec::with_capacity(proposals.len());
    for p in proposals {
        if p.width() != width || p.height() != height {
            return Err(Error::DimensionMismatch(format!("proposal {} is not {width}x{height}", p.id)));
        }
        paste_key(p)?;
        order.push(p);
    }
    order.sort_by(|a, b| paste_order(a, b));
    for p in order {
        let v = p.label.map(|l| l as u32 + 1).unwrap_or(0);
        for px in p.pixels() {
            map.labels[px] = v;
        }
    }
    Ok(map)
}
