//! Dense feature extraction and the on-disk feature cache.
//!
//! Each image gets one `FFLD` file per surviving ladder scale,
//! `{stem}.s{idx}.ffld`, and an index `{stem}.fields` listing them under the
//! extraction hash. The index is written last, so an image whose index is
//! missing is simply extracted again.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use rayon::prelude::*;
use texturebank::filterbank::{extract_pyramid, DenseExtractor, NetExtractor, NetSpec, SiftExtractor};
use texturebank::tensorfile::{read_tensor, write_tensor};
use texturebank::{pnm, FeatureField, ImagePlane};

use crate::config::{ExtractorChoice, PipelineConfig};
use crate::io::{read, read_text, write_atomic};
use crate::manifest::{cache_stem, Manifest, Record};

pub const CACHE_ENV: &str = "TEXTUREBANK_CACHE";

pub fn default_cache_dir() -> PathBuf {
    std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("tb-cache"))
}

/// The configured extractor together with the bytes that identify it.
pub struct Extraction {
    pub extractor: Box<dyn DenseExtractor>,
    pub net: Option<NetSpec>,
    pub hash: String,
}

impl Extraction {
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self> {
        match &cfg.extractor {
            ExtractorChoice::Sift(s) => Ok(Self {
                extractor: Box::new(SiftExtractor { config: *s }),
                net: None,
                hash: cfg.extraction_hash(None),
            }),
            ExtractorChoice::Net { weights, tap } => {
                if weights.as_os_str().is_empty() {
                    bail!("extractor=net needs a weights file");
                }
                let bytes = read(weights)?;
                let net = NetSpec::from_bytes(&bytes).with_context(|| format!("loading {}", weights.display()))?;
                Self::from_net(cfg, net, *tap, &bytes)
            }
        }
    }

    pub fn from_net(cfg: &PipelineConfig, net: NetSpec, tap: Option<texturebank::filterbank::TapPoint>, bytes: &[u8]) -> Result<Self> {
        let tap = match tap.or_else(|| net.default_tap()) {
            Some(t) => t,
            None => bail!("the network has no convolution to tap"),
        };
        Ok(Self {
            extractor: Box::new(NetExtractor { net: net.clone(), tap }),
            net: Some(net),
            hash: cfg.extraction_hash(Some(bytes)),
        })
    }

    pub fn extract(&self, cfg: &PipelineConfig, img: &ImagePlane) -> Result<Vec<FeatureField>> {
        let ladder = cfg.ladder.factors(img.width(), img.height())?;
        Ok(extract_pyramid(img, self.extractor.as_ref(), &ladder)?)
    }
}

pub fn load_image(path: &Path) -> Result<ImagePlane> {
    pnm::read_image(&read(path)?).with_context(|| format!("decoding {}", path.display()))
}

pub struct FeatureCache {
    pub dir: PathBuf,
    pub hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExtractSummary {
    pub extracted: usize,
    pub reused: usize,
    pub files: usize,
}

enum Status {
    Fresh(Vec<PathBuf>),
    Stale(String),
    Missing,
}

impl FeatureCache {
    pub fn new(dir: impl Into<PathBuf>, hash: impl Into<String>) -> Self {
        Self { dir: dir.into(), hash: hash.into() }
    }

    fn index_path(&self, stem: &str) -> PathBuf {
        self.dir.join(format!("{stem}.fields"))
    }

    fn status(&self, stem: &str) -> Result<Status> {
        let p = self.index_path(stem);
        if !p.exists() {
            return Ok(Status::Missing);
        }
        let text = read_text(&p)?;
        let mut lines = text.lines();
        let hash = lines.next().and_then(|l| l.strip_prefix("hash=")).unwrap_or("").to_string();
        if hash != self.hash {
            return Ok(Status::Stale(hash));
        }
        let files: Vec<PathBuf> = lines.filter(|l| !l.is_empty()).map(|l| self.dir.join(l)).collect();
        if files.iter().all(|f| f.exists()) {
            Ok(Status::Fresh(files))
        } else {
            Ok(Status::Missing)
        }
    }

    /// Extracts every record not already cached under the current hash.
    /// A record cached under a different hash is an error unless `force`.
    pub fn extract_all(
        &self,
        manifest: &Manifest,
        records: &[&Record],
        cfg: &PipelineConfig,
        ex: &Extraction,
        force: bool,
    ) -> Result<ExtractSummary> {
        let stems: Vec<String> = records.iter().map(|r| cache_stem(&r.image)).collect();
        for (r, stem) in records.iter().zip(&stems) {
            if let Status::Stale(old) = self.status(stem)? {
                if !force {
                    bail!(
                        "{}: cached features were extracted with a different configuration \
                         (hash {old}, now {}); rerun with --force to overwrite",
                        r.image.display(),
                        self.hash
                    );
                }
            }
        }
        let outcomes: Vec<Result<Option<usize>>> = records
            .par_iter()
            .zip(&stems)
            .map(|(r, stem)| {
                if let Status::Fresh(_) = self.status(stem)? {
                    return Ok(None);
                }
                let img = load_image(&manifest.resolve(&r.image))?;
                let fields = ex.extract(cfg, &img).with_context(|| format!("extracting {}", r.image.display()))?;
                let mut index = format!("hash={}\n", self.hash);
                for (i, f) in fields.iter().enumerate() {
                    let name = format!("{stem}.s{i}.ffld");
                    write_atomic(&self.dir.join(&name), &write_tensor(f)?)?;
                    index.push_str(&name);
                    index.push('\n');
                }
                write_atomic(&self.index_path(stem), index.as_bytes())?;
                Ok(Some(fields.len()))
            })
            .collect();
        let mut s = ExtractSummary::default();
        for o in outcomes {
            match o? {
                Some(n) => {
                    s.extracted += 1;
                    s.files += n;
                }
                None => s.reused += 1,
            }
        }
        info!("features: {} extracted ({} files), {} reused", s.extracted, s.files, s.reused);
        Ok(s)
    }

    pub fn load(&self, record: &Record) -> Result<Vec<FeatureField>> {
        let stem = cache_stem(&record.image);
        match self.status(&stem)? {
            Status::Fresh(files) => files
                .iter()
                .map(|f| read_tensor(&read(f)?).with_context(|| format!("decoding {}", f.display())))
                .collect(),
            Status::Stale(_) => bail!("{}: cached features are stale; run extract --force", record.image.display()),
            Status::Missing => bail!("{}: no cached features; run extract first", record.image.display()),
        }
    }
}

/// Extracts anything missing, then loads features for `records` in order.
pub fn cached_fields(
    manifest: &Manifest,
    records: &[&Record],
    cfg: &PipelineConfig,
    ex: &Extraction,
    cache: &FeatureCache,
    force: bool,
) -> Result<Vec<Vec<FeatureField>>> {
    cache.extract_all(manifest, records, cfg, ex, force)?;
    records.par_iter().map(|r| cache.load(r)).collect()
}
