//! Benchmark measures: class-normalized accuracy, per-pixel accuracy and
//! 11-point interpolated mean average precision.
//!
//! An optional "other" class is scored like any class but kept out of the
//! overall value; it is reported on its own in [`EvalReport::other`], and
//! [`EvalReport::overall_with_other`] gives the value with it included.

use std::fmt::Write as _;

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::region::LabelMap;

pub const REPORT_SCHEMA: &str = "texturebank.eval/1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassSet {
    pub names: Vec<String>,
    /// Index of the pseudo-background class reported separately.
    pub other: Option<usize>,
}

impl ClassSet {
    pub fn new(names: Vec<String>) -> Self {
        Self { names, other: None }
    }

    pub fn with_other(mut self, name: &str) -> Self {
        self.other = self.names.iter().position(|n| n == name);
        self
    }

    fn name(&self, c: usize) -> String {
        self.names.get(c).cloned().unwrap_or_else(|| format!("class{c}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    /// Per-image or per-segment accuracy averaged over classes.
    Acc,
    /// Per-pixel accuracy averaged over classes.
    Ppacc,
    /// Per-pixel accuracy over all labeled pixels together.
    PpaccGlobal,
    Map11,
}

impl Measure {
    pub const ALL: [Measure; 4] = [Measure::Acc, Measure::Ppacc, Measure::PpaccGlobal, Measure::Map11];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Acc => "acc",
            Measure::Ppacc => "ppacc",
            Measure::PpaccGlobal => "ppacc-global",
            Measure::Map11 => "map11",
        }
    }
}

impl std::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Measure::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let valid: Vec<_> = Measure::ALL.iter().map(|m| m.name()).collect();
            Error::InvalidArgument(format!("unknown measure {s:?}; valid measures: {}", valid.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelMode {
    ClassNormalized,
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassValue {
    pub class: usize,
    pub name: String,
    pub value: f64,
    /// Items, pixels or positives behind the value.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub schema: &'static str,
    pub measure: Measure,
    pub overall: f64,
    pub overall_with_other: f64,
    pub per_class: Vec<ClassValue>,
    pub other: Option<ClassValue>,
    pub evaluated: usize,
    pub ignored: usize,
    /// Classes left out for lack of examples.
    pub excluded: Vec<String>,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "schema={}", self.schema);
        let _ = writeln!(s, "measure={}", self.measure.name());
        let _ = writeln!(s, "overall={:.6}", self.overall);
        let _ = writeln!(s, "overall_with_other={:.6}", self.overall_with_other);
        let _ = writeln!(s, "evaluated={}", self.evaluated);
        let _ = writeln!(s, "ignored={}", self.ignored);
        for c in &self.per_class {
            let _ = writeln!(s, "class.{}={:.6} count={}", c.name, c.value, c.count);
        }
        if let Some(o) = &self.other {
            let _ = writeln!(s, "other.{}={:.6} count={}", o.name, o.value, o.count);
        }
        for e in &self.excluded {
            let _ = writeln!(s, "excluded={e}");
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Splits per-class values into the regular ones and the "other" class.
fn split_other(values: Vec<ClassValue>, classes: &ClassSet) -> (Vec<ClassValue>, Option<ClassValue>) {
    let (other, rest): (Vec<_>, Vec<_>) = values.into_iter().partition(|v| Some(v.class) == classes.other);
    (rest, other.into_iter().next())
}

/// Per-class accuracy from correct/total counts per class, truth-indexed.
fn accuracy_report(
    measure: Measure,
    correct: &[usize],
    total: &[usize],
    classes: &ClassSet,
    global: bool,
    ignored: usize,
) -> Result<EvalReport> {
    let evaluated: usize = total.iter().sum();
    if evaluated == 0 {
        return Err(if matches!(measure, Measure::Acc) {
            Error::EmptyInput("no labels to evaluate".into())
        } else {
            Error::NoLabeledPixels
        });
    }
    let values: Vec<ClassValue> = (0..total.len())
        .filter(|&c| total[c] > 0)
        .map(|c| ClassValue { class: c, name: classes.name(c), value: correct[c] as f64 / total[c] as f64, count: total[c] })
        .collect();
    let pooled = |vs: &mut dyn Iterator<Item = &ClassValue>| {
        let (mut ok, mut n) = (0usize, 0usize);
        for v in vs {
            ok += correct[v.class];
            n += v.count;
        }
        if n == 0 {
            0.0
        } else {
            ok as f64 / n as f64
        }
    };
    let overall_with_other =
        if global { pooled(&mut values.iter()) } else { mean(values.iter().map(|v| v.value)) };
    let (per_class, other) = split_other(values, classes);
    let overall = if other.is_none() {
        overall_with_other
    } else if global {
        pooled(&mut per_class.iter())
    } else {
        mean(per_class.iter().map(|v| v.value))
    };
    Ok(EvalReport {
        schema: REPORT_SCHEMA,
        measure,
        overall,
        overall_with_other,
        per_class,
        other,
        evaluated,
        ignored,
        excluded: Vec::new(),
    })
}

/// Mean over classes of the fraction of items of that class predicted correctly.
pub fn class_normalized_accuracy(pred: &[usize], truth: &[usize], classes: &ClassSet) -> Result<EvalReport> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!("{} predictions, {} labels", pred.len(), truth.len())));
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput("no labels to evaluate".into()));
    }
    let n = truth.iter().chain(pred).max().map_or(0, |m| m + 1).max(classes.names.len());
    let (mut correct, mut total) = (vec![0; n], vec![0; n]);
    for (&p, &t) in pred.iter().zip(truth) {
        total[t] += 1;
        if p == t {
            correct[t] += 1;
        }
    }
    accuracy_report(Measure::Acc, &correct, &total, classes, false, 0)
}

/// Pixel accuracy over pixels whose truth label is non-zero.
pub fn per_pixel_accuracy(pred: &LabelMap, truth: &LabelMap, mode: PixelMode, classes: &ClassSet) -> Result<EvalReport> {
    if (pred.width, pred.height) != (truth.width, truth.height) {
        return Err(Error::DimensionMismatch(format!(
            "prediction {}x{} vs truth {}x{}",
            pred.width, pred.height, truth.width, truth.height
        )));
    }
    let n = truth.labels.iter().max().copied().unwrap_or(0) as usize;
    let n = n.max(classes.names.len());
    let (mut correct, mut total) = (vec![0; n], vec![0; n]);
    let mut ignored = 0;
    for (&p, &t) in pred.labels.iter().zip(&truth.labels) {
        if t == 0 {
            ignored += 1;
            continue;
        }
        let c = t as usize - 1;
        total[c] += 1;
        if p == t {
            correct[c] += 1;
        }
    }
    let measure = match mode {
        PixelMode::ClassNormalized => Measure::Ppacc,
        PixelMode::Global => Measure::PpaccGlobal,
    };
    accuracy_report(measure, &correct, &total, classes, mode == PixelMode::Global, ignored)
}

/// 11-point interpolated AP on one ranked list.
/// `scores[i]` and `positive[i]` describe item `i`; ties rank lower indices first.
pub fn average_precision_11pt(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let npos = positive.iter().filter(|&&p| p).count();
    if npos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    // (tp, precision) after each rank
    let mut table = Vec::with_capacity(order.len());
    let mut tp = 0usize;
    for (rank, &i) in order.iter().enumerate() {
        if positive[i] {
            tp += 1;
        }
        table.push((tp, tp as f64 / (rank + 1) as f64));
    }
    // suffix maximum of precision
    let mut best = vec![0.0f64; table.len() + 1];
    for k in (0..table.len()).rev() {
        best[k] = best[k + 1].max(table[k].1);
    }
    let mut sum = 0.0;
    let mut k = 0;
    for level in 0..=10usize {
        // recall tp/npos >= level/10, compared exactly
        while k < table.len() && 10 * table[k].0 < level * npos {
            k += 1;
        }
        sum += best[k];
    }
    Some(sum / 11.0)
}

/// Mean of per-class 11-point AP. `scores[c][i]` is the score of item `i`
/// for class `c`; `truth[i]` lists the classes of item `i`.
pub fn mean_ap_11pt(scores: &[Vec<f64>], truth: &[Vec<usize>], classes: &ClassSet) -> Result<EvalReport> {
    if scores.is_empty() || truth.is_empty() {
        return Err(Error::EmptyInput("no scores to rank".into()));
    }
    if let Some(bad) = scores.iter().find(|s| s.len() != truth.len()) {
        return Err(Error::DimensionMismatch(format!("{} scores for {} items", bad.len(), truth.len())));
    }
    let mut values = Vec::new();
    let mut excluded = Vec::new();
    for (c, s) in scores.iter().enumerate() {
        let positive: Vec<bool> = truth.iter().map(|t| t.contains(&c)).collect();
        match average_precision_11pt(s, &positive) {
            Some(ap) => values.push(ClassValue {
                class: c,
                name: classes.name(c),
                value: ap,
                count: positive.iter().filter(|&&p| p).count(),
            }),
            None => {
                warn!("class {} has no positives; excluded from mAP", classes.name(c));
                excluded.push(classes.name(c));
            }
        }
    }
    if values.is_empty() {
        return Err(Error::EmptyInput("no class has positives".into()));
    }
    let overall_with_other = mean(values.iter().map(|v| v.value));
    let (per_class, other) = split_other(values, classes);
    let overall = if other.is_some() { mean(per_class.iter().map(|v| v.value)) } else { overall_with_other };
    Ok(EvalReport {
        schema: REPORT_SCHEMA,
        measure: Measure::Map11,
        overall,
        overall_with_other,
        per_class,
        other,
        evaluated: truth.len(),
        ignored: 0,
        excluded,
    })
}
