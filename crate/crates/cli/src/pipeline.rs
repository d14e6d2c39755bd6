//! The end-to-end commands on top of the feature cache.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde_json::json;
use texturebank::classifier::{train_svm, SvmBank, TrainReport};
use texturebank::encoder::{
    train_gmm, train_kmeans, train_pca, Codebook, Descriptors, Encoder, GmmTrace, Region,
};
use texturebank::eval::{
    class_normalized_accuracy, mean_ap_11pt, per_pixel_accuracy, ClassSet, EvalReport, Measure, PixelMode,
};
use texturebank::region::{describe_region_fv_dilated, paste_proposals, superpixels, LabelMap, ProposalSet};
use texturebank::{pnm, rng, FeatureField, ImagePlane, RegionMask};

use crate::config::{EncoderChoice, PipelineConfig};
use crate::features::{cached_fields, Extraction, FeatureCache};
use crate::io::{read, read_text, write_atomic};
use crate::manifest::{cache_stem, Manifest, Record, Split};
use crate::model::Model;

/// Up to `budget` descriptors, spread evenly over the images.
pub fn sample_descriptors(fields: &[Vec<FeatureField>], budget: usize, seed: u64) -> Result<Descriptors> {
    if fields.is_empty() {
        bail!("no images to sample descriptors from");
    }
    let quota = budget.div_ceil(fields.len()).max(1);
    let parts: Vec<Descriptors> = fields
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let all = Descriptors::from_fields(f)?;
            Ok(all.subsample(quota, &mut rng::stream(seed, &format!("codebook-sample/{i}"))))
        })
        .collect::<Result<_>>()?;
    let mut out = Descriptors::empty(parts[0].dim());
    for p in &parts {
        for row in p.rows() {
            out.push(row)?;
        }
    }
    Ok(out)
}

/// PCA (if configured) and the codebook for the configured encoder.
pub fn learn_encoder(samples: &Descriptors, cfg: &PipelineConfig) -> Result<(Encoder, Option<GmmTrace>)> {
    let pca = match cfg.pca() {
        Some(d) if d < samples.dim() => Some(train_pca(samples, d)?),
        Some(d) => {
            warn!("pca={d} is not below the descriptor dimension {}; PCA disabled", samples.dim());
            None
        }
        None => None,
    };
    let projected = match &pca {
        Some(p) => samples.project(p)?,
        None => samples.clone(),
    };
    let (codebook, trace) = match cfg.encoder {
        EncoderChoice::Fv => {
            let mut g = cfg.gmm.clone();
            g.seed = cfg.seed;
            let (gmm, trace) = train_gmm(&projected, &g)?;
            (Codebook::Fisher(gmm), Some(trace))
        }
        EncoderChoice::Vlad | EncoderChoice::Bow => {
            let km = train_kmeans(&projected, cfg.gmm.k, cfg.gmm.max_iter, &mut rng::stream(cfg.seed, "kmeans"))?;
            if cfg.encoder == EncoderChoice::Vlad { (Codebook::Vlad(km), None) } else { (Codebook::Bow(km), None) }
        }
    };
    Ok((Encoder { pca, codebook, config: cfg.encoding.clone() }, trace))
}

/// Whole-image descriptors, one row per image.
pub fn encode_images(encoder: &Encoder, fields: &[Vec<FeatureField>]) -> Result<Descriptors> {
    let rows: Vec<Vec<f32>> =
        fields.par_iter().map(|f| Ok(encoder.encode(f, Region::Whole)?.values)).collect::<Result<_>>()?;
    let mut x = Descriptors::empty(encoder.output_len());
    for r in &rows {
        x.push(r)?;
    }
    Ok(x)
}

pub struct Session<'a> {
    pub cache: &'a FeatureCache,
    pub force: bool,
}

fn split_fields(
    manifest: &Manifest,
    split: Split,
    cfg: &PipelineConfig,
    ex: &Extraction,
    ctx: &Session,
) -> Result<(Vec<Record>, Vec<Vec<FeatureField>>)> {
    let records = manifest.split(split)?;
    let fields = cached_fields(manifest, &records, cfg, ex, ctx.cache, ctx.force)?;
    Ok((records.into_iter().cloned().collect(), fields))
}

/// Learns PCA and the codebook from the train split.
pub fn gmm_train(manifest: &Manifest, cfg: &PipelineConfig, ctx: &Session) -> Result<(Model, String)> {
    let ex = Extraction::from_config(cfg)?;
    let (_, fields) = split_fields(manifest, Split::Train, cfg, &ex, ctx)?;
    let samples = sample_descriptors(&fields, cfg.codebook_samples, cfg.seed)?;
    info!("codebook: {} samples of dimension {}", samples.len(), samples.dim());
    let (encoder, trace) = learn_encoder(&samples, cfg)?;
    let mut log = String::new();
    let _ = writeln!(log, "samples={} dim={}", samples.len(), samples.dim());
    if let Some(t) = &trace {
        write_trace(&mut log, t);
    }
    Ok((Model { config: cfg.clone(), net: ex.net, encoder, svm: None }, log))
}

fn write_trace(log: &mut String, t: &GmmTrace) {
    for (i, ll) in t.log_likelihood.iter().enumerate() {
        let _ = writeln!(log, "em iter={i} mean_loglik={ll:.12}");
    }
    for (it, c) in &t.reseeded {
        let _ = writeln!(log, "em reseeded iter={it} component={c}");
    }
    let _ = writeln!(log, "em converged={}", t.converged);
}

fn write_svm_report(log: &mut String, r: &TrainReport) {
    for c in &r.classes {
        let _ = writeln!(
            log,
            "svm class={} positives={} negatives={} primal={:.9} dual={:.9} epochs={} converged={} calibration={:?}",
            c.class, c.positives, c.negatives, c.primal, c.dual, c.epochs, c.converged, c.calibration
        );
    }
    for s in &r.skipped {
        let _ = writeln!(log, "svm skipped class={} reason={}", s.class, s.reason);
    }
    if r.renormalized > 0 {
        let _ = writeln!(log, "svm renormalized={}", r.renormalized);
    }
}

/// Trains codebook (unless given) and SVMs on the train split. Returns the
/// model and the training log.
pub fn train(manifest: &Manifest, cfg: &PipelineConfig, codebook: Option<Model>, ctx: &Session) -> Result<(Model, String)> {
    let records = manifest.split(Split::Train)?;
    let (mut model, mut log) = match codebook {
        Some(m) => (m, String::from("codebook=reused\n")),
        None => gmm_train(manifest, cfg, ctx)?,
    };
    model.config.svm = cfg.svm.clone();
    model.config.svm.seed = cfg.seed;
    let ex = model.extraction()?;
    let fields = cached_fields(manifest, &records, &model.config, &ex, ctx.cache, ctx.force)?;
    let x = encode_images(&model.encoder, &fields)?;
    let labels: Vec<Vec<usize>> = records.iter().map(|r| manifest.label_indices(r)).collect();
    let (bank, report) = train_svm(&x, &labels, &manifest.classes, &model.config.svm)?;
    write_svm_report(&mut log, &report);
    model.svm = Some(bank);
    Ok((model, log))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub image: PathBuf,
    pub label: String,
    pub scores: Vec<f64>,
}

pub fn predict(model: &Model, manifest: &Manifest, split: Split, ctx: &Session) -> Result<(Vec<String>, Vec<PredictionRow>)> {
    let bank = model.svm()?;
    let ex = model.extraction()?;
    let records = manifest.split(split)?;
    let fields = cached_fields(manifest, &records, &model.config, &ex, ctx.cache, ctx.force)?;
    let x = encode_images(&model.encoder, &fields)?;
    let rows = records
        .iter()
        .zip(x.rows())
        .map(|(r, row)| {
            let p = bank.predict(row)?;
            Ok(PredictionRow { image: r.image.clone(), label: bank.classes[p.label].clone(), scores: p.scores })
        })
        .collect::<Result<_>>()?;
    Ok((bank.classes.clone(), rows))
}

pub fn predictions_to_tsv(classes: &[String], rows: &[PredictionRow]) -> String {
    let mut s = format!("#image\tpredicted\t{}\n", classes.join("\t"));
    for r in rows {
        let scores: Vec<String> = r.scores.iter().map(|v| format!("{v:.9}")).collect();
        let _ = writeln!(s, "{}\t{}\t{}", r.image.display(), r.label, scores.join("\t"));
    }
    s
}

pub fn predictions_from_tsv(text: &str) -> Result<(Vec<String>, Vec<PredictionRow>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().and_then(|h| h.strip_prefix('#')).context("predictions lack a '#' header")?;
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.len() < 2 || cols[0] != "image" || cols[1] != "predicted" {
        bail!("predictions header must start with image, predicted");
    }
    let classes: Vec<String> = cols[2..].iter().map(|s| s.to_string()).collect();
    let rows = lines
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != cols.len() {
                bail!("prediction row has {} fields, expected {}", f.len(), cols.len());
            }
            let scores = f[2..].iter().map(|v| v.parse::<f64>().context("bad score")).collect::<Result<_>>()?;
            Ok(PredictionRow { image: PathBuf::from(f[0]), label: f[1].to_string(), scores })
        })
        .collect::<Result<_>>()?;
    Ok((classes, rows))
}

/// Where segmentation proposals come from.
pub enum ProposalSource<'a> {
    File(&'a Path),
    Superpixels(usize),
}

pub fn load_proposals(path: &Path) -> Result<ProposalSet> {
    let bytes = read(path)?;
    let set = if bytes.starts_with(b"P5") {
        let (w, h, labels) = pnm::read_labels(&bytes)?;
        ProposalSet::from_partition(&RegionMask::new(w, h, labels.into_iter().map(u32::from).collect())?)?
    } else {
        ProposalSet::from_rle_text(std::str::from_utf8(&bytes).context("proposal file is not UTF-8")?)?
    };
    Ok(set)
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub map: LabelMap,
    pub classes: Vec<String>,
    pub scores_json: serde_json::Value,
}

/// Classifies every proposal from the image's cached fields and pastes
/// the results into a label map.
pub fn segment(img: &ImagePlane, fields: &[FeatureField], proposals: &ProposalSet, model: &Model) -> Result<Segmentation> {
    let bank: &SvmBank = model.svm()?;
    if proposals.proposals.is_empty() {
        bail!("empty proposals: nothing to classify");
    }
    if (proposals.width, proposals.height) != (img.width(), img.height()) {
        bail!(
            "proposals are {}x{} but the image is {}x{}",
            proposals.width,
            proposals.height,
            img.width(),
            img.height()
        );
    }
    let results: Vec<(texturebank::region::Proposal, serde_json::Value)> = proposals
        .proposals
        .par_iter()
        .map(|p| {
            let (desc, grow) = describe_region_fv_dilated(fields, p, &model.encoder)?;
            let pred = bank.predict(&desc.values)?;
            let score = pred.scores[pred.label];
            let entry = json!({
                "id": p.id,
                "area": p.area(),
                "label": pred.label + 1,
                "class": bank.classes[pred.label],
                "score": score,
                "dilation": grow,
                "scores": pred.scores,
            });
            Ok((p.clone().with_result(pred.label, score), entry))
        })
        .collect::<Result<_>>()?;
    let scored: Vec<_> = results.iter().map(|(p, _)| p.clone()).collect();
    let map = paste_proposals(&scored, img.width(), img.height())?;
    let scores_json = json!({
        "classes": bank.classes,
        "proposals": results.into_iter().map(|(_, e)| e).collect::<Vec<_>>(),
    });
    Ok(Segmentation { map, classes: bank.classes.clone(), scores_json })
}

pub fn proposals_for(img: &ImagePlane, source: ProposalSource) -> Result<ProposalSet> {
    match source {
        ProposalSource::File(p) => load_proposals(p),
        ProposalSource::Superpixels(n) => Ok(superpixels(img, n)?),
    }
}

/// Writes `{stem}.labels.pgm`, `{stem}.classes.tsv` and `{stem}.scores.json`.
pub fn write_segmentation(seg: &Segmentation, out_dir: &Path, stem: &str) -> Result<PathBuf> {
    let labels: Vec<u16> = seg
        .map
        .labels
        .iter()
        .map(|&v| u16::try_from(v).context("label value exceeds 16 bits"))
        .collect::<Result<_>>()?;
    let map_path = out_dir.join(format!("{stem}.labels.pgm"));
    write_atomic(&map_path, &pnm::write_labels16(seg.map.width, seg.map.height, &labels)?)?;
    let mut table = String::from("#value\tclass\n0\t\n");
    for (i, c) in seg.classes.iter().enumerate() {
        let _ = writeln!(table, "{}\t{c}", i + 1);
    }
    write_atomic(&out_dir.join(format!("{stem}.classes.tsv")), table.as_bytes())?;
    write_atomic(
        &out_dir.join(format!("{stem}.scores.json")),
        serde_json::to_string_pretty(&seg.scores_json)?.as_bytes(),
    )?;
    Ok(map_path)
}

/// Segments every record of a split, using its proposals column or
/// superpixels. Writes `index.tsv` mapping images to label maps.
pub fn segment_split(
    model: &Model,
    manifest: &Manifest,
    split: Split,
    superpixels: Option<usize>,
    out_dir: &Path,
    ctx: &Session,
) -> Result<PathBuf> {
    let ex = model.extraction()?;
    let records = manifest.split(split)?;
    let fields = cached_fields(manifest, &records, &model.config, &ex, ctx.cache, ctx.force)?;
    let mut index = String::from("#image\tlabelmap\n");
    for (r, f) in records.iter().zip(&fields) {
        let img = crate::features::load_image(&manifest.resolve(&r.image))?;
        let resolved = r.proposals.as_ref().map(|p| manifest.resolve(p));
        let source = match (&resolved, superpixels) {
            (_, Some(n)) => ProposalSource::Superpixels(n),
            (Some(p), None) => ProposalSource::File(p),
            (None, None) => ProposalSource::Superpixels(model.config.superpixels),
        };
        let proposals = proposals_for(&img, source)?;
        let seg = segment(&img, f, &proposals, model).with_context(|| format!("segmenting {}", r.image.display()))?;
        let stem = cache_stem(&r.image);
        write_segmentation(&seg, out_dir, &stem)?;
        let _ = writeln!(index, "{}\t{stem}.labels.pgm", r.image.display());
    }
    let path = out_dir.join("index.tsv");
    write_atomic(&path, index.as_bytes())?;
    Ok(path)
}

fn class_set(manifest: &Manifest, other: Option<&str>) -> Result<ClassSet> {
    let set = ClassSet::new(manifest.classes.clone());
    Ok(match other {
        Some(o) if manifest.class_index(o).is_some() => set.with_other(o),
        Some(o) => bail!("other class {o:?} is not in the manifest"),
        None => set,
    })
}

fn records_by_image(manifest: &Manifest) -> HashMap<PathBuf, &Record> {
    manifest.records.iter().map(|r| (r.image.clone(), r)).collect()
}

/// Image-level measures (`acc`, `map11`) from a predictions file.
pub fn eval_predictions(
    predictions: &str,
    manifest: &Manifest,
    measure: Measure,
    other: Option<&str>,
) -> Result<EvalReport> {
    let classes = class_set(manifest, other)?;
    let (pred_classes, rows) = predictions_from_tsv(predictions)?;
    if rows.is_empty() {
        bail!("predictions file has no rows");
    }
    let by_image = records_by_image(manifest);
    let truth: Vec<Vec<usize>> = rows
        .iter()
        .map(|r| match by_image.get(&r.image) {
            Some(rec) => Ok(manifest.label_indices(rec)),
            None => bail!("{} is not in the manifest", r.image.display()),
        })
        .collect::<Result<_>>()?;
    match measure {
        Measure::Acc => {
            let pred: Vec<usize> = rows
                .iter()
                .map(|r| manifest.class_index(&r.label).with_context(|| format!("unknown predicted class {:?}", r.label)))
                .collect::<Result<_>>()?;
            let first: Vec<usize> = truth
                .iter()
                .zip(&rows)
                .map(|(t, r)| t.first().copied().with_context(|| format!("{} has no label", r.image.display())))
                .collect::<Result<_>>()?;
            Ok(class_normalized_accuracy(&pred, &first, &classes)?)
        }
        Measure::Map11 => {
            let scores: Vec<Vec<f64>> = manifest
                .classes
                .iter()
                .map(|c| match pred_classes.iter().position(|p| p == c) {
                    Some(j) => rows.iter().map(|r| r.scores[j]).collect(),
                    None => vec![f64::MIN; rows.len()],
                })
                .collect();
            Ok(mean_ap_11pt(&scores, &truth, &classes)?)
        }
        m => bail!("measure {} needs a segmentation index, not image predictions", m.name()),
    }
}

fn read_class_table(path: &Path) -> Result<HashMap<u32, String>> {
    let mut m = HashMap::new();
    for line in read_text(path)?.lines().filter(|l| !l.starts_with('#') && !l.is_empty()) {
        let (v, name) = line.split_once('\t').with_context(|| format!("bad class table line {line:?}"))?;
        if !name.is_empty() {
            m.insert(v.parse().context("bad class table value")?, name.to_string());
        }
    }
    Ok(m)
}

/// Pixel measures (`ppacc`, `ppacc-global`) from a segmentation index,
/// pooled over all images.
pub fn eval_segmentation(
    index_path: &Path,
    manifest: &Manifest,
    measure: Measure,
    other: Option<&str>,
) -> Result<EvalReport> {
    let mode = match measure {
        Measure::Ppacc => PixelMode::ClassNormalized,
        Measure::PpaccGlobal => PixelMode::Global,
        m => bail!("measure {} needs image predictions, not a segmentation index", m.name()),
    };
    let classes = class_set(manifest, other)?;
    let dir = index_path.parent().unwrap_or(Path::new("."));
    let by_image = records_by_image(manifest);
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for line in read_text(index_path)?.lines().filter(|l| !l.starts_with('#') && !l.is_empty()) {
        let (image, map) = line.split_once('\t').with_context(|| format!("bad index line {line:?}"))?;
        let rec = by_image.get(Path::new(image)).with_context(|| format!("{image} is not in the manifest"))?;
        let mask = rec.mask.as_ref().with_context(|| format!("{image} has no ground-truth mask"))?;
        let (tw, th, t) = pnm::read_labels(&read(&manifest.resolve(mask))?)?;
        let map_path = dir.join(map);
        let (pw, ph, p) = pnm::read_labels(&read(&map_path)?)?;
        if (tw, th) != (pw, ph) {
            bail!("{image}: prediction is {pw}x{ph}, truth is {tw}x{th}");
        }
        let table_path = PathBuf::from(map_path.to_string_lossy().replace(".labels.pgm", ".classes.tsv"));
        let table = read_class_table(&table_path)?;
        for v in p {
            let mapped = match table.get(&u32::from(v)) {
                Some(name) => manifest.class_index(name).map_or(0, |c| c as u32 + 1),
                None => 0,
            };
            pred.push(mapped);
        }
        for v in t {
            if usize::from(v) > manifest.classes.len() {
                bail!("{image}: mask value {v} exceeds the {} classes", manifest.classes.len());
            }
            truth.push(u32::from(v));
        }
    }
    let n = pred.len();
    Ok(per_pixel_accuracy(&LabelMap::new(n, 1, pred)?, &LabelMap::new(n, 1, truth)?, mode, &classes)?)
}

/// Writes `{out}.txt` and `{out}.json`.
pub fn write_report(report: &EvalReport, out: &Path) -> Result<()> {
    write_atomic(&out.with_extension("txt"), report.to_text().as_bytes())?;
    write_atomic(&out.with_extension("json"), report.to_json().as_bytes())
}
