//! Region proposals as run-length encoded binary masks.

use std::fmt::Write as _;

use crate::encoder::PixelSet;
use crate::error::{Error, Result};
use crate::field::RegionMask;

/// A candidate region: row-major runs `(start, len)` on a `width x height`
/// canvas, plus the classification result once known.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub id: u32,
    width: usize,
    height: usize,
    runs: Vec<(usize, usize)>,
    area: usize,
    pub score: Option<f64>,
    pub label: Option<usize>,
}

impl Proposal {
    /// Runs must be sorted, non-empty, non-overlapping and inside the canvas.
    pub fn from_runs(id: u32, width: usize, height: usize, mut runs: Vec<(usize, usize)>) -> Result<Self> {
        runs.sort_unstable();
        let total = width * height;
        let mut area = 0;
        let mut end = 0;
        for (k, &(s, l)) in runs.iter().enumerate() {
            if l == 0 || s + l > total {
                return Err(Error::Malformed(format!("proposal {id}: run {s}:{l} outside {width}x{height}")));
            }
            if k > 0 && s < end {
                return Err(Error::Malformed(format!("proposal {id}: overlapping runs")));
            }
            end = s + l;
            area += l;
        }
        if area == 0 {
            return Err(Error::Malformed(format!("proposal {id} is empty")));
        }
        // merge touching runs so equal masks have equal encodings
        let mut merged: Vec<(usize, usize)> = Vec::with_capacity(runs.len());
        for (s, l) in runs {
            match merged.last_mut() {
                Some((ps, pl)) if *ps + *pl == s => *pl += l,
                _ => merged.push((s, l)),
            }
        }
        Ok(Self { id, width, height, runs: merged, area, score: None, label: None })
    }

    pub fn from_predicate(id: u32, width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let mut runs = Vec::new();
        let mut open: Option<usize> = None;
        for p in 0..width * height {
            let inside = f(p % width, p / width);
            match (inside, open) {
                (true, None) => open = Some(p),
                (false, Some(s)) => {
                    runs.push((s, p - s));
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(s) = open {
            runs.push((s, width * height - s));
        }
        Self::from_runs(id, width, height, runs)
    }

    pub fn from_mask(mask: &RegionMask, id: u32) -> Result<Self> {
        Self::from_predicate(id, mask.width(), mask.height(), |x, y| mask.get(x, y) == id)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn runs(&self) -> &[(usize, usize)] {
        &self.runs
    }

    pub fn area(&self) -> usize {
        self.area
    }

    pub fn contains_index(&self, p: usize) -> bool {
        let k = self.runs.partition_point(|&(s, _)| s <= p);
        k > 0 && {
            let (s, l) = self.runs[k - 1];
            p < s + l
        }
    }

    pub fn pixels(&self) -> impl Iterator<Item = usize> + '_ {
        self.runs.iter().flat_map(|&(s, l)| s..s + l)
    }

    /// Inclusive pixel bounds `(x0, y0, x1, y1)`.
    pub fn bbox(&self) -> (usize, usize, usize, usize) {
        let w = self.width;
        let (mut x0, mut x1) = (usize::MAX, 0);
        for &(s, l) in &self.runs {
            let (ys, ye) = (s / w, (s + l - 1) / w);
            if ys != ye {
                x0 = 0;
                x1 = w - 1;
            } else {
                x0 = x0.min(s % w);
                x1 = x1.max((s + l - 1) % w);
            }
        }
        let y0 = self.runs[0].0 / w;
        let (ls, ll) = *self.runs.last().unwrap_or(&(0, 1));
        (x0, y0, x1, (ls + ll - 1) / w)
    }

    pub fn with_result(mut self, label: usize, score: f64) -> Self {
        self.label = Some(label);
        self.score = Some(score);
        self
    }
}

impl PixelSet for Proposal {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn contains(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && self.contains_index(y * self.width + x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSet {
    pub width: usize,
    pub height: usize,
    pub proposals: Vec<Proposal>,
}

impl ProposalSet {
    pub fn new(width: usize, height: usize, proposals: Vec<Proposal>) -> Result<Self> {
        if let Some(p) = proposals.iter().find(|p| p.width != width || p.height != height) {
            return Err(Error::DimensionMismatch(format!(
                "proposal {} is {}x{}, set is {width}x{height}",
                p.id, p.width, p.height
            )));
        }
        Ok(Self { width, height, proposals })
    }

    /// One proposal per non-zero id of a partition.
    pub fn from_partition(mask: &RegionMask) -> Result<Self> {
        let (w, h) = (mask.width(), mask.height());
        let ids = mask.region_ids();
        let mut runs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); ids.len()];
        let slot = |id: u32| ids.binary_search(&id).ok();
        let labels = mask.labels();
        let mut p = 0;
        while p < labels.len() {
            let id = labels[p];
            let mut q = p + 1;
            while q < labels.len() && labels[q] == id {
                q += 1;
            }
            if let Some(k) = slot(id).filter(|_| id != 0) {
                runs[k].push((p, q - p));
            }
            p = q;
        }
        let proposals = ids
            .iter()
            .zip(runs)
            .filter(|(&id, _)| id != 0)
            .map(|(&id, r)| Proposal::from_runs(id, w, h, r))
            .collect::<Result<_>>()?;
        Self::new(w, h, proposals)
    }

    /// Parses `count width height` followed by `id start:len ...` lines.
    pub fn from_rle_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Malformed("empty proposal file".into()))?;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::Malformed(format!("bad header token {t:?}"))))
            .collect::<Result<_>>()?;
        let [count, w, h] = nums[..] else {
            return Err(Error::Malformed("proposal header must be: count width height".into()));
        };
        if w == 0 || h == 0 {
            return Err(Error::Malformed("proposal canvas has zero size".into()));
        }
        let mut proposals = Vec::with_capacity(count);
        for line in lines {
            let mut toks = line.split_whitespace();
            let id: u32 = toks
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Malformed(format!("bad proposal line {line:?}")))?;
            let runs = toks
                .map(|t| {
                    let (s, l) = t.split_once(':').ok_or_else(|| Error::Malformed(format!("bad run {t:?}")))?;
                    let s = s.parse().map_err(|_| Error::Malformed(format!("bad run {t:?}")))?;
                    let l = l.parse().map_err(|_| Error::Malformed(format!("bad run {t:?}")))?;
                    Ok((s, l))
                })
                .collect::<Result<Vec<_>>>()?;
            proposals.push(Proposal::from_runs(id, w, h, runs)?);
        }
        if proposals.len() != count {
            return Err(Error::Malformed(format!("header announces {count} proposals, found {}", proposals.len())));
        }
        Self::new(w, h, proposals)
    }

    pub fn to_rle_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.proposals.len(), self.width, self.height);
        for p in &self.proposals {
            let _ = write!(out, "{}", p.id);
            for &(s, l) in &p.runs {
                let _ = write!(out, " {s}:{l}");
            }
            out.push('\n');
        }
        out
    }

    /// Proposal ids per pixel, 0 where none; later proposals win overlaps.
    pub fn to_mask(&self) -> Result<RegionMask> {
        let mut labels = vec![0u32; self.width * self.height];
        for p in &self.proposals {
            for px in p.pixels() {
                labels[px] = p.id;
            }
        }
        RegionMask::new(self.width, self.height, labels)
    }

    /// True when every pixel belongs to exactly one proposal.
    pub fn is_partition(&self) -> bool {
        let mut hits = vec![0u8; self.width * self.height];
        for p in &self.proposals {
            for px in p.pixels() {
                hits[px] = hits[px].saturating_add(1);
            }
        }
        hits.iter().all(|&h| h == 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runs_are_validated_and_merged() {
        assert!(Proposal::from_runs(1, 4, 4, vec![]).is_err());
        assert!(Proposal::from_runs(1, 4, 4, vec![(14, 3)]).is_err());
        assert!(Proposal::from_runs(1, 4, 4, vec![(0, 3), (2, 2)]).is_err());
        let p = Proposal::from_runs(1, 4, 4, vec![(4, 2), (0, 4)]).unwrap();
        assert_eq!(p.runs(), &[(0, 6)]);
        assert_eq!(p.area(), 6);
        assert!(p.contains(1, 1) && !p.contains(2, 1));
        assert_eq!(p.bbox(), (0, 0, 3, 1));
    }

    #[test]
    fn bbox_of_a_block() {
        let p = Proposal::from_predicate(3, 10, 8, |x, y| (2..5).contains(&x) && (3..7).contains(&y)).unwrap();
        assert_eq!(p.bbox(), (2, 3, 4, 6));
        assert_eq!(p.area(), 12);
    }

    #[test]
    fn rle_text_round_trip() {
        let text = "2 4 3\n7 0:2 5:3\n9 11:1\n";
        let set = ProposalSet::from_rle_text(text).unwrap();
        assert_eq!(set.to_rle_text(), text);
        assert!(ProposalSet::from_rle_text("3 4 3\n7 0:2\n").is_err());
        assert!(ProposalSet::from_rle_text("1 4 3\n7 0:13\n").is_err());
    }

    #[test]
    fn partition_from_mask() {
        let mask = RegionMask::new(3, 2, vec![1, 1, 2, 0, 2, 2]).unwrap();
        let set = ProposalSet::from_partition(&mask).unwrap();
        assert_eq!(set.proposals.len(), 2);
        assert_eq!(set.proposals[1].runs(), &[(2, 1), (4, 2)]);
        assert!(!set.is_partition());
        assert_eq!(set.to_mask().unwrap(), mask);
    }
}
