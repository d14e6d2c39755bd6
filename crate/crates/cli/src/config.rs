//! Pipeline configuration as `key=value` text.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};
use texturebank::classifier::SvmConfig;
use texturebank::encoder::{EncoderConfig, GmmConfig};
use texturebank::filterbank::{SiftConfig, TapPoint};
use texturebank::image::LadderSpec;

#[derive(Debug, Clone, PartialEq)]
pub enum ExtractorChoice {
    Sift(SiftConfig),
    Net { weights: PathBuf, tap: Option<TapPoint> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Ladder {
    Geometric(LadderSpec),
    /// Explicit factors, used as given.
    Factors(Vec<f64>),
}

impl Ladder {
    pub fn factors(&self, width: usize, height: usize) -> texturebank::Result<Vec<f64>> {
        match self {
            Ladder::Geometric(spec) => texturebank::image::scale_ladder(width, height, spec),
            Ladder::Factors(f) => Ok(f.clone()),
        }
    }

    /// `default`, `smin:smax:step[:areacap]` or a comma list of factors.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "default" {
            return Ok(Ladder::Geometric(LadderSpec::default()));
        }
        if s.contains(':') {
            let parts: Vec<f64> = s.split(':').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>()
                .with_context(|| format!("bad scale ladder {s:?}"))?;
            let spec = match parts[..] {
                [s_min, s_max, step] => LadderSpec { s_min, s_max, step, ..Default::default() },
                [s_min, s_max, step, area_cap] => LadderSpec { s_min, s_max, step, area_cap },
                _ => bail!("scale ladder {s:?}: expected smin:smax:step[:areacap]"),
            };
            return Ok(Ladder::Geometric(spec));
        }
        let factors: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>()
            .with_context(|| format!("bad scale list {s:?}"))?;
        if factors.is_empty() || factors.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
            bail!("scale factors must be positive: {s:?}");
        }
        Ok(Ladder::Factors(factors))
    }

    fn render(&self) -> String {
        match self {
            Ladder::Geometric(l) => format!("{}:{}:{}:{}", l.s_min, l.s_max, l.step, l.area_cap),
            Ladder::Factors(f) => f.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderChoice {
    Fv,
    Vlad,
    Bow,
}

impl EncoderChoice {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "fv" => EncoderChoice::Fv,
            "vlad" => EncoderChoice::Vlad,
            "bow" => EncoderChoice::Bow,
            _ => bail!("unknown encoder {s:?}; valid: fv, vlad, bow"),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            EncoderChoice::Fv => "fv",
            EncoderChoice::Vlad => "vlad",
            EncoderChoice::Bow => "bow",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub extractor: ExtractorChoice,
    pub ladder: Ladder,
    pub encoder: EncoderChoice,
    pub encoding: EncoderConfig,
    /// PCA output dimension; `None` picks 80 for SIFT and no PCA for nets.
    pub pca_dim: Option<usize>,
    pub gmm: GmmConfig,
    /// Descriptors subsampled across training images for codebook learning.
    pub codebook_samples: usize,
    pub svm: SvmConfig,
    pub superpixels: usize,
    pub other_class: Option<String>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            extractor: ExtractorChoice::Sift(SiftConfig::default()),
            ladder: Ladder::Geometric(LadderSpec::default()),
            encoder: EncoderChoice::Fv,
            encoding: EncoderConfig::default(),
            pca_dim: None,
            gmm: GmmConfig::default(),
            codebook_samples: 256_000,
            svm: SvmConfig::default(),
            superpixels: 64,
            other_class: None,
            seed: 0,
        }
    }
}

fn parse_bool(v: &str) -> Result<bool> {
    match v {
        "1" | "true" | "on" | "yes" => Ok(true),
        "0" | "false" | "off" | "no" => Ok(false),
        _ => bail!("expected a boolean, got {v:?}"),
    }
}

impl PipelineConfig {
    /// Effective PCA dimension, if any.
    pub fn pca(&self) -> Option<usize> {
        match (self.pca_dim, &self.extractor) {
            (Some(0), _) => None,
            (Some(d), _) => Some(d),
            (None, ExtractorChoice::Sift(_)) => Some(80),
            (None, ExtractorChoice::Net { .. }) => None,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let num = |v: &str| v.parse::<f64>().with_context(|| format!("{key}: expected a number, got {v:?}"));
        let int = |v: &str| v.parse::<usize>().with_context(|| format!("{key}: expected an integer, got {v:?}"));
        match key.trim() {
            "extractor" => {
                self.extractor = match v {
                    "sift" => ExtractorChoice::Sift(SiftConfig::default()),
                    "net" => match &self.extractor {
                        ExtractorChoice::Net { .. } => self.extractor.clone(),
                        _ => ExtractorChoice::Net { weights: PathBuf::new(), tap: None },
                    },
                    _ => bail!("extractor must be sift or net, got {v:?}"),
                }
            }
            "weights" => match &mut self.extractor {
                ExtractorChoice::Net { weights, .. } => *weights = PathBuf::from(v),
                _ => self.extractor = ExtractorChoice::Net { weights: PathBuf::from(v), tap: None },
            },
            "tap" => {
                let tap: TapPoint = v.parse()?;
                match &mut self.extractor {
                    ExtractorChoice::Net { tap: t, .. } => *t = Some(tap),
                    _ => bail!("tap only applies to extractor=net"),
                }
            }
            "sift.step" | "sift.support" | "sift.clamp" => match &mut self.extractor {
                ExtractorChoice::Sift(cfg) => match key {
                    "sift.step" => cfg.step = int(v)?,
                    "sift.support" => cfg.support = int(v)?,
                    _ => cfg.clamp = num(v)? as f32,
                },
                _ => bail!("{key} only applies to extractor=sift"),
            },
            "scales" => self.ladder = Ladder::parse(v)?,
            "encoder" => self.encoder = EncoderChoice::parse(v)?,
            "signed_sqrt" => self.encoding.signed_sqrt = parse_bool(v)?,
            "l2_normalize" => self.encoding.l2_normalize = parse_bool(v)?,
            "posterior_threshold" => self.encoding.posterior_threshold = num(v)?,
            "pca" => self.pca_dim = if v == "auto" { None } else { Some(int(v)?) },
            "gmm.k" => self.gmm.k = int(v)?,
            "gmm.max_iter" => self.gmm.max_iter = int(v)?,
            "gmm.tol" => self.gmm.tol = num(v)?,
            "gmm.init_subsample" => self.gmm.init_subsample = int(v)?,
            "gmm.variance_floor" => self.gmm.variance_floor = num(v)?,
            "codebook_samples" => self.codebook_samples = int(v)?,
            "svm.c" => self.svm.c = num(v)?,
            "svm.max_epochs" => self.svm.max_epochs = int(v)?,
            "svm.tol" => self.svm.tol = num(v)?,
            "superpixels" => self.superpixels = int(v)?,
            "other_class" => self.other_class = if v.is_empty() { None } else { Some(v.to_string()) },
            "seed" => {
                self.seed = v.parse().with_context(|| format!("seed: expected an integer, got {v:?}"))?;
            }
            other => bail!("unknown config key {other:?}"),
        }
        self.gmm.seed = self.seed;
        self.svm.seed = self.seed;
        Ok(())
    }

    /// Parses `key=value` lines; `#` starts a comment.
    pub fn parse_into(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').with_context(|| format!("config line {}: expected key=value", n + 1))?;
            self.set(k.trim(), v).with_context(|| format!("config line {}", n + 1))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.parse_into(text)?;
        Ok(cfg)
    }

    fn entries(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        match &self.extractor {
            ExtractorChoice::Sift(s) => {
                m.insert("extractor", "sift".into());
                m.insert("sift.step", s.step.to_string());
                m.insert("sift.support", s.support.to_string());
                m.insert("sift.clamp", s.clamp.to_string());
            }
            ExtractorChoice::Net { weights, tap } => {
                m.insert("extractor", "net".into());
                m.insert("weights", weights.display().to_string());
                if let Some(t) = tap {
                    m.insert("tap", t.to_string());
                }
            }
        }
        m.insert("scales", self.ladder.render());
        m.insert("encoder", self.encoder.name().into());
        m.insert("signed_sqrt", self.encoding.signed_sqrt.to_string());
        m.insert("l2_normalize", self.encoding.l2_normalize.to_string());
        m.insert("posterior_threshold", self.encoding.posterior_threshold.to_string());
        m.insert("pca", self.pca_dim.map_or("auto".into(), |d| d.to_string()));
        m.insert("gmm.k", self.gmm.k.to_string());
        m.insert("gmm.max_iter", self.gmm.max_iter.to_string());
        m.insert("gmm.tol", self.gmm.tol.to_string());
        m.insert("gmm.init_subsample", self.gmm.init_subsample.to_string());
        m.insert("gmm.variance_floor", self.gmm.variance_floor.to_string());
        m.insert("codebook_samples", self.codebook_samples.to_string());
        m.insert("svm.c", self.svm.c.to_string());
        m.insert("svm.max_epochs", self.svm.max_epochs.to_string());
        m.insert("svm.tol", self.svm.tol.to_string());
        m.insert("superpixels", self.superpixels.to_string());
        m.insert("other_class", self.other_class.clone().unwrap_or_default());
        m.insert("seed", self.seed.to_string());
        m
    }

    /// Canonical text; parsing it back gives the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    /// Hash of everything that affects dense feature extraction.
    pub fn extraction_hash(&self, weights_bytes: Option<&[u8]>) -> String {
        let e = self.entries();
        let mut h = Sha256::new();
        for key in ["extractor", "sift.step", "sift.support", "sift.clamp", "tap", "scales"] {
            if let Some(v) = e.get(key) {
                h.update(format!("{key}={v}\n"));
            }
        }
        if let Some(b) = weights_bytes {
            h.update(Sha256::digest(b));
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
