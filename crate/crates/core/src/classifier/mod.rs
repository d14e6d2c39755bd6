//! 1-vs-rest linear SVMs with median-score recalibration.

pub mod svm;

use log::warn;
use rayon::prelude::*;

use crate::container::{tag, ByteReader, ByteWriter, Section};
use crate::encoder::Descriptors;
use crate::error::{Error, Result};
use crate::rng;

pub use svm::{primal_objective, train_binary, BinarySvm, SvmConfig};

/// Norms further than this from 1 trigger renormalization before training.
const UNIT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Calibration {
    /// Not attempted yet.
    None,
    /// `score' = a * score + c`, already folded into the weights.
    Applied { a: f64, c: f64 },
    /// Median positive and negative scores coincided.
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmBank {
    pub classes: Vec<String>,
    pub dim: usize,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub calibration: Vec<Calibration>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scores: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub class: String,
    pub positives: usize,
    pub negatives: usize,
    pub primal: f64,
    pub dual: f64,
    pub epochs: usize,
    pub converged: bool,
    pub calibration: Calibration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedClass {
    pub class: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub classes: Vec<ClassReport>,
    pub skipped: Vec<SkippedClass>,
    pub renormalized: usize,
}

/// Median with the two middle values averaged for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Affine map sending the positive median to 1 and the negative median to -1.
pub fn calibration_from_scores(positive: &[f64], negative: &[f64]) -> Result<Calibration> {
    let (mp, mn) = match (median(positive), median(negative)) {
        (Some(p), Some(n)) => (p, n),
        _ => return Err(Error::EmptyInput("calibration needs positive and negative scores".into())),
    };
    if mp == mn {
        return Ok(Calibration::Skipped);
    }
    let a = 2.0 / (mp - mn);
    let c = -(mp + mn) / (mp - mn);
    if a < 0.0 {
        warn!("median positive score {mp} is below median negative {mn}; calibration flips scores");
    }
    Ok(Calibration::Applied { a, c })
}

fn check_finite(x: &Descriptors) -> Result<()> {
    if x.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("SVM training descriptors".into()));
    }
    Ok(())
}

/// Rows brought to unit norm where they are not; returns how many changed.
fn ensure_unit_rows(x: &Descriptors) -> Result<(Descriptors, usize)> {
    let mut data = x.data().to_vec();
    let mut changed = 0;
    for row in data.chunks_exact_mut(x.dim()) {
        let n = row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        if n > 0.0 && (n - 1.0).abs() > UNIT_TOL {
            row.iter_mut().for_each(|v| *v = (*v as f64 / n) as f32);
            changed += 1;
        }
    }
    Ok((Descriptors::new(x.dim(), data)?, changed))
}

impl SvmBank {
    pub fn new(classes: Vec<String>, dim: usize, weights: Vec<Vec<f64>>, biases: Vec<f64>) -> Result<Self> {
        if weights.len() != classes.len() || biases.len() != classes.len() {
            return Err(Error::DimensionMismatch("class, weight and bias counts differ".into()));
        }
        if weights.iter().any(|w| w.len() != dim) {
            return Err(Error::DimensionMismatch(format!("weight vectors must have dim {dim}")));
        }
        if weights.iter().flatten().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("SVM bank".into()));
        }
        let calibration = vec![Calibration::None; classes.len()];
        Ok(Self { classes, dim, weights, biases, calibration })
    }

    pub fn score(&self, class: usize, x: &[f32]) -> f64 {
        self.weights[class].iter().zip(x).map(|(w, &v)| w * v as f64).sum::<f64>() + self.biases[class]
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    /// Recomputes training scores and folds the median calibration into each class.
    pub fn calibrate(mut self, x: &Descriptors, labels: &[Vec<usize>]) -> Result<Self> {
        if x.dim() != self.dim || labels.len() != x.len() {
            return Err(Error::DimensionMismatch("calibration data does not match the bank".into()));
        }
        for c in 0..self.classes.len() {
            let (mut pos, mut neg) = (Vec::new(), Vec::new());
            for (r, l) in x.rows().zip(labels) {
                let s = self.score(c, r);
                if l.contains(&c) {
                    pos.push(s);
                } else {
                    neg.push(s);
                }
            }
            let cal = calibration_from_scores(&pos, &neg)?;
            if let Calibration::Applied { a, c: shift } = cal {
                self.weights[c].iter_mut().for_each(|w| *w *= a);
                self.biases[c] = a * self.biases[c] + shift;
            } else {
                warn!("class {}: median scores coincide, calibration skipped", self.classes[c]);
            }
            self.calibration[c] = cal;
        }
        Ok(self)
    }

    pub fn predict(&self, x: &[f32]) -> Result<Prediction> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch(format!("bank expects {} dims, got {}", self.dim, x.len())));
        }
        let scores: Vec<f64> = (0..self.classes.len()).map(|c| self.score(c, x)).collect();
        let mut label = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[label] {
                label = i;
            }
        }
        Ok(Prediction { scores, label })
    }

    pub fn to_section(&self) -> Result<Section> {
        let mut w = ByteWriter::new();
        w.u32(self.classes.len() as u32);
        w.u32(self.dim as u32);
        for (c, name) in self.classes.iter().enumerate() {
            w.str16(name)?;
            let wf: Vec<f32> = self.weights[c].iter().map(|&v| v as f32).collect();
            w.f32_slice(&wf);
            w.f64(self.biases[c]);
            match self.calibration[c] {
                Calibration::None => {
                    w.u8(0);
                    w.f64(1.0);
                    w.f64(0.0);
                }
                Calibration::Applied { a, c } => {
                    w.u8(1);
                    w.f64(a);
                    w.f64(c);
                }
                Calibration::Skipped => {
                    w.u8(2);
                    w.f64(1.0);
                    w.f64(0.0);
                }
            }
        }
        Ok(Section::new(tag("SVM"), w.into_inner()))
    }

    pub fn from_section(s: &Section) -> Result<Self> {
        let mut r = ByteReader::new(&s.payload);
        let n = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let (mut classes, mut weights, mut biases, mut calibration) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n {
            classes.push(r.str16()?);
            weights.push(r.f32_vec(dim)?.into_iter().map(f64::from).collect());
            biases.push(r.f64()?);
            let status = r.u8()?;
            let (a, c) = (r.f64()?, r.f64()?);
            calibration.push(match status {
                0 => Calibration::None,
                1 => Calibration::Applied { a, c },
                2 => Calibration::Skipped,
                t => return Err(Error::Malformed(format!("calibration status {t}"))),
            });
        }
        r.expect_end()?;
        let mut bank = Self::new(classes, dim, weights, biases)?;
        bank.calibration = calibration;
        Ok(bank)
    }
}

/// Trains one calibrated 1-vs-rest SVM per class. `labels[i]` lists the
/// class indices of sample `i`. Classes lacking positives or negatives are
/// left out of the bank and recorded in the report.
pub fn train_svm(
    x: &Descriptors,
    labels: &[Vec<usize>],
    classes: &[String],
    cfg: &SvmConfig,
) -> Result<(SvmBank, TrainReport)> {
    cfg.validate()?;
    if labels.len() != x.len() {
        return Err(Error::DimensionMismatch(format!("{} samples, {} label sets", x.len(), labels.len())));
    }
    if x.is_empty() {
        return Err(Error::EmptyInput("no training samples".into()));
    }
    if let Some(bad) = labels.iter().flatten().find(|&&c| c >= classes.len()) {
        return Err(Error::InvalidArgument(format!("label index {bad} out of range")));
    }
    check_finite(x)?;
    let (x, renormalized) = ensure_unit_rows(x)?;
    if renormalized > 0 {
        warn!("{renormalized} training descriptors were not L2-normalized; renormalized");
    }
    let mut report = TrainReport { renormalized, ..Default::default() };
    let mut kept = Vec::new();
    for (c, name) in classes.iter().enumerate() {
        let pos = labels.iter().filter(|l| l.contains(&c)).count();
        let neg = labels.len() - pos;
        if pos == 0 || neg == 0 {
            let reason = if pos == 0 { "no positive examples" } else { "no negative examples" };
            warn!("class {name} skipped: {reason}");
            report.skipped.push(SkippedClass { class: name.clone(), reason: reason.into() });
        } else {
            kept.push((c, pos, neg));
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyInput("no class has both positives and negatives".into()));
    }
    let fits: Vec<Result<BinarySvm>> = kept
        .par_iter()
        .map(|&(c, _, _)| {
            let y: Vec<f64> = labels.iter().map(|l| if l.contains(&c) { 1.0 } else { -1.0 }).collect();
            train_binary(&x, &y, cfg, &mut rng::stream(cfg.seed, &format!("svm/{}", classes[c])))
        })
        .collect();
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    let mut names = Vec::new();
    let mut remap = vec![usize::MAX; classes.len()];
    for (slot, (&(c, pos, neg), fit)) in kept.iter().zip(fits).enumerate() {
        let fit = fit?;
        remap[c] = slot;
        names.push(classes[c].clone());
        report.classes.push(ClassReport {
            class: classes[c].clone(),
            positives: pos,
            negatives: neg,
            primal: fit.primal,
            dual: fit.dual,
            epochs: fit.epochs,
            converged: fit.converged,
            calibration: Calibration::None,
        });
        weights.push(fit.w);
        biases.push(fit.b);
    }
    let local: Vec<Vec<usize>> =
        labels.iter().map(|l| l.iter().filter_map(|&c| Some(remap[c]).filter(|&s| s != usize::MAX)).collect()).collect();
    let bank = SvmBank::new(names, x.dim(), weights, biases)?.calibrate(&x, &local)?;
    for (r, cal) in report.classes.iter_mut().zip(&bank.calibration) {
        r.calibration = *cal;
    }
    Ok((bank, report))
}
