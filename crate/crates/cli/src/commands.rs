//! Argument parsing and dispatch for the `texturebank` binary.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use texturebank::container::Container;
use texturebank::eval::Measure;
use texturebank::tensorfile::read_tensor;

use crate::bench::{layer_sweep, random_sweep_net, run_texture_benchmark, BenchConfig};
use crate::config::{EncoderChoice, Ladder, PipelineConfig};
use crate::features::{default_cache_dir, load_image, Extraction, FeatureCache};
use crate::io::{read, read_text, write_atomic};
use crate::manifest::{cache_stem, Manifest, Split};
use crate::model::Model;
use crate::pipeline::{self, ProposalSource, Session};
use crate::synth::{write_synthetic, SynthClass, SyntheticSpec};

#[derive(Debug, Parser)]
#[command(name = "texturebank", version, about = "Texture, material and region recognition with FV pooling")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// key=value configuration file; flags override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Network tap, <layerIndex>[:pre|post]
    #[arg(long, global = true)]
    pub tap: Option<String>,
    /// smin:smax:step[:areacap], a comma list of factors, or "default"
    #[arg(long, global = true)]
    pub scales: Option<String>,
    /// fv, vlad or bow
    #[arg(long, global = true)]
    pub encoder: Option<String>,
    /// Extra config overrides, key=value
    #[arg(long = "set", global = true)]
    pub set: Vec<String>,
    /// Feature cache directory (default: $TEXTUREBANK_CACHE or ./tb-cache)
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    /// Overwrite cached features extracted under a different configuration
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract dense multi-scale features into the cache
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        split: Option<String>,
    },
    /// Learn PCA and the codebook from the train split
    GmmTrain {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the codebook (or reuse one) and the SVM bank
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Model from gmm-train whose codebook is reused
        #[arg(long)]
        codebook: Option<PathBuf>,
    },
    /// Classify whole images of a split
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label regions of one image, or of every image of a manifest split
    Segment {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "manifest")]
        image: Option<PathBuf>,
        /// RLE text or PGM partition
        #[arg(long, conflicts_with = "superpixels")]
        proposals: Option<PathBuf>,
        #[arg(long)]
        superpixels: Option<usize>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions (acc, map11) or a segmentation index (ppacc, ppacc-global)
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, default_value = "acc")]
        measure: String,
        /// Output path stem; .txt and .json are written
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a procedural texture dataset
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "hstripes,vstripes,checker,noise,blobs")]
        classes: String,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 100)]
        train: usize,
        #[arg(long, default_value_t = 100)]
        test: usize,
    },
    /// Describe a model, tensor, manifest or config file
    Inspect { path: PathBuf },
    /// Run the in-memory synthetic benchmark
    Bench {
        /// Also run the random-network layer sweep
        #[arg(long)]
        sweep: bool,
    },
}

impl GlobalArgs {
    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(p) = &self.config {
            cfg.parse_into(&read_text(p)?).with_context(|| format!("config {}", p.display()))?;
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').with_context(|| format!("--set expects key=value, got {kv:?}"))?;
            cfg.set(k, v)?;
        }
        if let Some(s) = self.seed {
            cfg.set("seed", &s.to_string())?;
        }
        if let Some(t) = &self.tap {
            cfg.set("tap", t)?;
        }
        if let Some(s) = &self.scales {
            cfg.ladder = Ladder::parse(s)?;
        }
        if let Some(e) = &self.encoder {
            cfg.encoder = EncoderChoice::parse(e)?;
        }
        Ok(cfg)
    }

    fn cache(&self, hash: &str) -> FeatureCache {
        FeatureCache::new(self.cache.clone().unwrap_or_else(default_cache_dir), hash)
    }
}

fn log_path(out: &Path) -> PathBuf {
    out.with_extension("log")
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let g = &cli.global;
    match &cli.command {
        Command::Extract { manifest, split } => {
            let cfg = g.pipeline_config()?;
            let m = Manifest::load(manifest)?;
            let ex = Extraction::from_config(&cfg)?;
            let records = match split {
                Some(s) => m.split(s.parse()?)?,
                None => m.records.iter().collect(),
            };
            let cache = g.cache(&ex.hash);
            let s = cache.extract_all(&m, &records, &cfg, &ex, g.force)?;
            println!("extracted={} reused={} files={} cache={}", s.extracted, s.reused, s.files, cache.dir.display());
        }
        Command::GmmTrain { manifest, out } => {
            let cfg = g.pipeline_config()?;
            let m = Manifest::load(manifest)?;
            let cache = g.cache(&Extraction::from_config(&cfg)?.hash);
            let (model, log) = pipeline::gmm_train(&m, &cfg, &Session { cache: &cache, force: g.force })?;
            model.save(out)?;
            write_atomic(&log_path(out), log.as_bytes())?;
            println!("wrote {}", out.display());
        }
        Command::Train { manifest, out, codebook } => {
            let mut cfg = g.pipeline_config()?;
            let m = Manifest::load(manifest)?;
            let reused = codebook.as_deref().map(Model::load).transpose()?;
            if let Some(r) = &reused {
                cfg.extractor = r.config.extractor.clone();
            }
            let ex = match &reused {
                Some(r) => r.extraction()?,
                None => Extraction::from_config(&cfg)?,
            };
            let cache = g.cache(&ex.hash);
            let (model, log) = pipeline::train(&m, &cfg, reused, &Session { cache: &cache, force: g.force })?;
            model.save(out)?;
            Model::load(out).context("re-reading the written model")?;
            write_atomic(&log_path(out), log.as_bytes())?;
            println!("wrote {}", out.display());
        }
        Command::Predict { model, manifest, split, out } => {
            let model = Model::load(model)?;
            let m = Manifest::load(manifest)?;
            let cache = g.cache(&model.extraction()?.hash);
            let split: Split = split.parse()?;
            let (classes, rows) = pipeline::predict(&model, &m, split, &Session { cache: &cache, force: g.force })?;
            write_atomic(out, pipeline::predictions_to_tsv(&classes, &rows).as_bytes())?;
            println!("wrote {} predictions to {}", rows.len(), out.display());
        }
        Command::Segment { model, image, proposals, superpixels, manifest, split, out } => {
            let model = Model::load(model)?;
            let ex = model.extraction()?;
            match (image, manifest) {
                (Some(image), None) => {
                    let img = load_image(image)?;
                    let source = match (proposals, superpixels) {
                        (Some(p), _) => ProposalSource::File(p),
                        (None, Some(n)) => ProposalSource::Superpixels(*n),
                        (None, None) => bail!("segment needs --proposals or --superpixels"),
                    };
                    let set = pipeline::proposals_for(&img, source)?;
                    let fields = ex.extract(&model.config, &img)?;
                    let seg = pipeline::segment(&img, &fields, &set, &model)?;
                    let path = pipeline::write_segmentation(&seg, out, &cache_stem(image))?;
                    println!("wrote {}", path.display());
                }
                (None, Some(manifest)) => {
                    let m = Manifest::load(manifest)?;
                    let cache = g.cache(&ex.hash);
                    let session = Session { cache: &cache, force: g.force };
                    let path = pipeline::segment_split(&model, &m, split.parse()?, *superpixels, out, &session)?;
                    println!("wrote {}", path.display());
                }
                _ => bail!("segment needs either --image or --manifest"),
            }
        }
        Command::Eval { manifest, predictions, measure, out } => {
            let measure: Measure = measure.parse()?;
            let m = Manifest::load(manifest)?;
            let cfg = g.pipeline_config()?;
            let other = cfg.other_class.as_deref();
            let report = match measure {
                Measure::Acc | Measure::Map11 => pipeline::eval_predictions(&read_text(predictions)?, &m, measure, other)?,
                Measure::Ppacc | Measure::PpaccGlobal => pipeline::eval_segmentation(predictions, &m, measure, other)?,
            };
            pipeline::write_report(&report, out)?;
            print!("{}", report.to_text());
        }
        Command::Synth { out, classes, size, train, test } => {
            let spec = SyntheticSpec {
                classes: classes.split(',').map(|c| c.trim().parse()).collect::<Result<Vec<SynthClass>>>()?,
                size: *size,
                train: *train,
                test: *test,
                seed: g.seed.unwrap_or(0),
            };
            let path = write_synthetic(&spec, out)?;
            println!("wrote {}", path.display());
        }
        Command::Inspect { path } => print!("{}", inspect(path)?),
        Command::Bench { sweep } => {
            let b = BenchConfig { seed: g.seed.unwrap_or(0), ..Default::default() };
            let r = run_texture_benchmark(&b)?;
            println!(
                "fv_accuracy={:.4} bow_accuracy={:.4} fv_dim={} train={} test={} em_iters={} seconds={:.1}",
                r.fv_accuracy,
                r.bow_accuracy,
                r.fv_dim,
                r.train_images,
                r.test_images,
                r.em_trace.log_likelihood.len().saturating_sub(1),
                r.elapsed.as_secs_f64()
            );
            if *sweep {
                let spec = SyntheticSpec {
                    classes: vec![SynthClass::HStripes, SynthClass::Checker],
                    size: 32,
                    train: 20,
                    test: 20,
                    seed: b.seed,
                };
                for l in layer_sweep(&random_sweep_net(b.seed), &spec, 4, b.seed)? {
                    println!("conv{} layer={} dim={} accuracy={:.4}", l.conv, l.layer_index, l.dim, l.accuracy);
                }
            }
        }
    }
    Ok(())
}

/// Human-readable summary of any file the tool reads or writes.
pub fn inspect(path: &Path) -> Result<String> {
    let bytes = read(path)?;
    let mut s = String::new();
    if bytes.starts_with(b"FFLD") {
        let f = read_tensor(&bytes)?;
        s += &format!(
            "tensor name={} dim={} grid={}x{} stride={} offset=({}, {}) scale={}\n",
            f.source(),
            f.dim(),
            f.grid_w(),
            f.grid_h(),
            f.stride(),
            f.offset().0,
            f.offset().1,
            f.scale()
        );
    } else if bytes.starts_with(b"TBMK") {
        let c = Container::from_bytes(&bytes)?;
        for sec in &c.sections {
            s += &format!("section {} bytes={}\n", sec.tag_str(), sec.payload.len());
        }
        let m = Model::from_container(&c)?;
        s += &format!(
            "encoder={} input_dim={} output_len={} pca={}\n",
            m.config.encoder.name(),
            m.encoder.input_dim(),
            m.encoder.output_len(),
            m.encoder.pca.as_ref().map_or("off".to_string(), |p| p.output_dim.to_string())
        );
        if let Some(svm) = &m.svm {
            s += &format!("classes={}\n", svm.classes.join(","));
        }
    } else {
        let text = String::from_utf8(bytes).context("unrecognized binary file")?;
        if let Ok(m) = Manifest::parse(&text, path.parent().unwrap_or(Path::new(""))) {
            s += &format!("manifest records={} classes={}\n", m.records.len(), m.classes.join(","));
            for split in [Split::Train, Split::Val, Split::Test] {
                s += &format!("split {split}={}\n", m.records.iter().filter(|r| r.split == split).count());
            }
        } else {
            let cfg = PipelineConfig::from_text(&text)?;
            s += &cfg.to_text();
            s += &format!("extraction_hash={}\n", cfg.extraction_hash(None));
        }
    }
    Ok(s)
}
