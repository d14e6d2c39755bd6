//! In-memory synthetic benchmarks: the texture classification run and the
//! per-layer sweep over a random network.

use std::time::{Duration, Instant};

use anyhow::Result;
use log::info;
use rayon::prelude::*;
use texturebank::classifier::{train_svm, SvmConfig};
use texturebank::encoder::{GmmConfig, GmmTrace};
use texturebank::eval::{class_normalized_accuracy, ClassSet};
use texturebank::filterbank::{extract_pyramid, Conv, DenseExtractor, Layer, NetExtractor, NetSpec, SiftExtractor, TapPoint};
use texturebank::{rng, FeatureField};

use crate::config::{EncoderChoice, PipelineConfig};
use crate::manifest::Split;
use crate::pipeline::{encode_images, learn_encoder, sample_descriptors};
use crate::synth::{SynthClass, SyntheticSpec};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub spec: SyntheticSpec,
    pub ladder: Vec<f64>,
    pub pca: usize,
    pub k: usize,
    pub samples: usize,
    pub em_iters: usize,
    pub svm_c: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            spec: SyntheticSpec::default(),
            ladder: vec![0.5f64.sqrt(), 1.0, 2f64.sqrt()],
            pca: 80,
            k: 256,
            samples: 12_000,
            em_iters: 15,
            svm_c: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub fv_accuracy: f64,
    pub bow_accuracy: f64,
    pub fv_dim: usize,
    pub train_images: usize,
    pub test_images: usize,
    pub em_trace: GmmTrace,
    pub elapsed: Duration,
}

pub struct SplitData {
    pub fields: Vec<Vec<FeatureField>>,
    pub labels: Vec<usize>,
}

fn extract_split(spec: &SyntheticSpec, split: Split, extractor: &dyn DenseExtractor, ladder: &[f64]) -> Result<SplitData> {
    let crops: Vec<(usize, SynthClass, usize)> = spec
        .classes
        .iter()
        .enumerate()
        .flat_map(|(ci, &c)| (0..if split == Split::Train { spec.train } else { spec.test }).map(move |i| (ci, c, i)))
        .collect();
    let fields = crops
        .par_iter()
        .map(|&(_, c, i)| Ok(extract_pyramid(&spec.render_crop(c, split, i), extractor, ladder)?))
        .collect::<Result<_>>()?;
    Ok(SplitData { fields, labels: crops.iter().map(|c| c.0).collect() })
}

/// Learns the encoder on `train`, fits SVMs and returns test accuracy
/// (class-normalized) and the EM trace if a GMM was trained.
pub fn classify(cfg: &PipelineConfig, classes: &[String], train: &SplitData, test: &SplitData) -> Result<(f64, usize, Option<GmmTrace>)> {
    let samples = sample_descriptors(&train.fields, cfg.codebook_samples, cfg.seed)?;
    let (encoder, trace) = learn_encoder(&samples, cfg)?;
    let x = encode_images(&encoder, &train.fields)?;
    let labels: Vec<Vec<usize>> = train.labels.iter().map(|&l| vec![l]).collect();
    let (bank, _) = train_svm(&x, &labels, classes, &cfg.svm)?;
    let xt = encode_images(&encoder, &test.fields)?;
    let pred: Vec<usize> = xt
        .rows()
        .map(|row| {
            let p = bank.predict(row)?;
            Ok(classes.iter().position(|c| *c == bank.classes[p.label]).expect("bank classes come from the list"))
        })
        .collect::<Result<_>>()?;
    let report = class_normalized_accuracy(&pred, &test.labels, &ClassSet::new(classes.to_vec()))?;
    Ok((report.overall, encoder.output_len(), trace))
}

fn pipeline_config(b: &BenchConfig, encoder: EncoderChoice) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        encoder,
        pca_dim: Some(b.pca),
        gmm: GmmConfig { k: b.k, max_iter: b.em_iters, seed: b.seed, ..Default::default() },
        codebook_samples: b.samples,
        svm: SvmConfig { c: b.svm_c, seed: b.seed, ..Default::default() },
        seed: b.seed,
        ..Default::default()
    };
    cfg.gmm.init_subsample = cfg.gmm.init_subsample.min(b.samples);
    cfg
}

/// Dense-SIFT FV against a bag-of-words baseline on the same PCA features.
pub fn run_texture_benchmark(b: &BenchConfig) -> Result<BenchResult> {
    let start = Instant::now();
    b.spec.validate()?;
    let sift = SiftExtractor::default();
    let train = extract_split(&b.spec, Split::Train, &sift, &b.ladder)?;
    let test = extract_split(&b.spec, Split::Test, &sift, &b.ladder)?;
    info!("benchmark features extracted in {:.1?}", start.elapsed());
    let classes: Vec<String> = b.spec.classes.iter().map(|c| c.to_string()).collect();
    let (fv_accuracy, fv_dim, trace) = classify(&pipeline_config(b, EncoderChoice::Fv), &classes, &train, &test)?;
    info!("fv accuracy {fv_accuracy:.4} after {:.1?}", start.elapsed());
    let (bow_accuracy, _, _) = classify(&pipeline_config(b, EncoderChoice::Bow), &classes, &train, &test)?;
    info!("bow accuracy {bow_accuracy:.4} after {:.1?}", start.elapsed());
    Ok(BenchResult {
        fv_accuracy,
        bow_accuracy,
        fv_dim,
        train_images: train.labels.len(),
        test_images: test.labels.len(),
        em_trace: trace.unwrap_or_default(),
        elapsed: start.elapsed(),
    })
}

/// A random five-convolution network for the layer sweep.
pub fn random_sweep_net(seed: u64) -> NetSpec {
    let mut r = rng::stream(seed, "sweep-net");
    let plan = [(8, 1, 3, 1, 1), (8, 8, 3, 2, 1), (12, 8, 3, 1, 1), (12, 12, 3, 2, 1), (16, 12, 3, 1, 1)];
    let mut layers = Vec::new();
    for (out_c, in_c, k, stride, pad) in plan {
        layers.push(Layer::Convolution(Conv::random(&mut r, out_c, in_c, k, stride, pad)));
        layers.push(Layer::Relu);
    }
    NetSpec::new(layers).expect("the sweep net is well formed")
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerAccuracy {
    pub conv: usize,
    pub layer_index: usize,
    pub dim: usize,
    pub accuracy: f64,
}

/// FV pooling at each convolution of `net`, two texture classes.
pub fn layer_sweep(net: &NetSpec, spec: &SyntheticSpec, k: usize, seed: u64) -> Result<Vec<LayerAccuracy>> {
    spec.validate()?;
    let classes: Vec<String> = spec.classes.iter().map(|c| c.to_string()).collect();
    let mut out = Vec::new();
    for (n, &layer_index) in net.conv_indices().iter().enumerate() {
        let ex = NetExtractor { net: net.clone(), tap: TapPoint::pre(layer_index) };
        let train = extract_split(spec, Split::Train, &ex, &[1.0])?;
        let test = extract_split(spec, Split::Test, &ex, &[1.0])?;
        let dim = train.fields[0][0].dim();
        let cfg = PipelineConfig {
            pca_dim: Some(0),
            gmm: GmmConfig { k, max_iter: 30, seed, ..Default::default() },
            codebook_samples: 20_000,
            seed,
            ..Default::default()
        };
        let (accuracy, _, _) = classify(&cfg, &classes, &train, &test)?;
        info!("sweep conv{} (layer {layer_index}, {dim} channels): accuracy {accuracy:.4}", n + 1);
        out.push(LayerAccuracy { conv: n + 1, layer_index, dim, accuracy });
    }
    Ok(out)
}
