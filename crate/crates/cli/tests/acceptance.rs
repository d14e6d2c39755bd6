//! One PASS/FAIL line per acceptance criterion; exits nonzero on any FAIL.

#[path = "../../core/tests/support/oracles.rs"]
#[allow(dead_code)]
mod oracles;

use std::time::{Duration, Instant};

use oracles::{PlainGmm, Volume};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use texturebank::classifier::{calibration_from_scores, train_binary, Calibration, SvmConfig};
use texturebank::encoder::{
    train_gmm, Codebook, Descriptors, Encoder, EncoderConfig, FisherEncoder, GmmConfig, GmmModel, MaskRegion, Region,
};
use texturebank::eval::{average_precision_11pt, mean_ap_11pt, ClassSet};
use texturebank::field::FieldGeometry;
use texturebank::filterbank::{extract_pyramid, Conv, Layer, NetSpec, Pool, SiftExtractor, TapPoint};
use texturebank::region::{describe_region_fv, paste_proposals, region_accumulator, Proposal};
use texturebank::{rng, FeatureField, ImagePlane, RegionMask};
use texturebank_cli::bench::{layer_sweep, random_sweep_net, run_texture_benchmark, BenchConfig};
use texturebank_cli::synth::{SynthClass, SyntheticSpec};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, start: Instant, out: Outcome) -> Outcome {
    let t = start.elapsed();
    match out {
        Ok(d) if t <= limit => Ok(format!("{d}; {:.2}s", t.as_secs_f64())),
        Ok(d) => Err(format!("{d}; {:.2}s exceeds {}s", t.as_secs_f64(), limit.as_secs())),
        Err(d) => Err(format!("{d}; {:.2}s", t.as_secs_f64())),
    }
}

fn fv_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng::stream(101, "fv-oracle");
    let raw = EncoderConfig { signed_sqrt: false, l2_normalize: false, apply_pca: false, posterior_threshold: 0.0 };
    let mut worst = 0.0f64;
    let instances = 250;
    for _ in 0..instances {
        let (k, d, n) = (r.gen_range(1..=3), r.gen_range(1..=4), r.gen_range(1..=10));
        let g = PlainGmm::random(&mut r, k, d);
        let xs32: Vec<f32> = (0..n * d).map(|_| r.gen_range(-3.0f32..3.0)).collect();
        let xs: Vec<Vec<f64>> = xs32.chunks(d).map(|c| c.iter().map(|&v| v as f64).collect()).collect();
        let geo = FieldGeometry { stride: 1.0, offset: (0.0, 0.0), scale: 1.0 };
        let field = FeatureField::new(n, 1, d, geo, "x", xs32).map_err(|e| e.to_string())?;
        let gmm = GmmModel::new(k, d, g.w.clone(), g.mu.clone(), g.variances()).map_err(|e| e.to_string())?;
        let enc = FisherEncoder::new(gmm.clone(), None, raw.clone()).map_err(|e| e.to_string())?;
        let fv = enc.accumulate(&[field], Region::Whole).and_then(|a| a.fisher_vector(&gmm)).map_err(|e| e.to_string())?;
        let want = oracles::fisher_vector_oracle(&g, &xs);
        if fv.len() != want.len() {
            return Err(format!("length {} vs {}", fv.len(), want.len()));
        }
        worst = fv.iter().zip(&want).fold(worst, |m, (a, b)| m.max((a - b).abs()));
    }
    within(Duration::from_secs(10), start, check(worst <= 1e-6, format!("{instances} instances, max abs diff {worst:.3e} (limit 1e-6)")))
}

fn fv_dimensionality() -> Outcome {
    let (k, d) = (64, 512);
    let gmm = GmmModel::new(k, d, vec![1.0 / k as f64; k], vec![0.0; k * d], vec![1.0; k * d]).map_err(|e| e.to_string())?;
    let enc = FisherEncoder::new(gmm, None, EncoderConfig::default()).map_err(|e| e.to_string())?;
    let geo = FieldGeometry { stride: 1.0, offset: (0.0, 0.0), scale: 1.0 };
    let field = FeatureField::new(2, 1, d, geo, "conv5", vec![0.1; 2 * d]).map_err(|e| e.to_string())?;
    let len = enc.encode(&[field], Region::Whole).map_err(|e| e.to_string())?.values.len();
    check(len == 65_536 && enc.output_len() == 65_536, format!("K=64, D=512 gives {len} dims (want 65536)"))
}

fn em_monotone() -> Outcome {
    let start = Instant::now();
    let mut r = rng::stream(102, "clusters");
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut data = Vec::new();
    for i in 0..4000 {
        let c = if i % 2 == 0 { 0.0 } else { 10.0 };
        data.push((c + noise.sample(&mut r)) as f32);
        data.push((c + noise.sample(&mut r)) as f32);
    }
    let mut runs = 0;
    let mut worst_drop = 0.0f64;
    let mut worst_err = 0.0f64;
    for seed in 0..5 {
        let cfg = GmmConfig { k: 2, seed, max_iter: 50, ..Default::default() };
        let (gmm, trace) = train_gmm(&Descriptors::new(2, data.clone()).unwrap(), &cfg).map_err(|e| e.to_string())?;
        for p in trace.log_likelihood.windows(2) {
            worst_drop = worst_drop.max((p[0] - p[1]) / p[0].abs().max(1e-300));
        }
        let mut means: Vec<(f64, f64)> = (0..2).map(|c| (gmm.mean(c)[0], gmm.mean(c)[1])).collect();
        means.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (m, t) in means.iter().zip([0.0, 10.0]) {
            worst_err = worst_err.max((m.0 - t).abs()).max((m.1 - t).abs());
        }
        runs += 1;
    }
    // random higher-dimensional mixtures exercise the monotonicity bound on harder fits
    for seed in 0..5u64 {
        let mut r = rng::stream(seed, "em-random");
        let (n, d) = (600, 4);
        let xs: Vec<f32> = (0..n * d).map(|i| r.gen_range(-1.0f32..1.0) + (i / d % 3) as f32).collect();
        let cfg = GmmConfig { k: 5, seed, max_iter: 40, tol: 0.0, ..Default::default() };
        let (_, trace) = train_gmm(&Descriptors::new(d, xs).unwrap(), &cfg).map_err(|e| e.to_string())?;
        for p in trace.log_likelihood.windows(2) {
            worst_drop = worst_drop.max((p[0] - p[1]) / p[0].abs().max(1e-300));
        }
        runs += 1;
    }
    let ok = worst_drop <= 1e-9 && worst_err <= 0.1;
    within(
        Duration::from_secs(30),
        start,
        check(ok, format!("{runs} runs, worst relative drop {worst_drop:.2e} (limit 1e-9), worst mean error {worst_err:.4} (limit 0.1)")),
    )
}

fn random_net(r: &mut impl Rng) -> (NetSpec, usize) {
    let in_c = if r.gen_bool(0.5) { 1 } else { 3 };
    let convs = r.gen_range(1..=3);
    let mut layers = Vec::new();
    let mut ch = in_c;
    for i in 0..convs {
        let out_c = r.gen_range(1..=6);
        let k = r.gen_range(1..=5);
        let (stride, pad) = (r.gen_range(1..=2), r.gen_range(0..=k / 2 + 1));
        layers.push(Layer::Convolution(Conv::random(r, out_c, ch, k, stride, pad)));
        ch = out_c;
        if r.gen_bool(0.7) {
            layers.push(Layer::Relu);
        }
        if i + 1 < convs && r.gen_bool(0.3) {
            let k = r.gen_range(2..=3);
            layers.push(Layer::MaxPool(Pool { kh: k, kw: k, stride_h: 2, stride_w: 2 }));
        }
    }
    (NetSpec::new(layers).unwrap(), in_c)
}

fn conv_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng::stream(103, "conv-oracle");
    let (mut checked, mut worst) = (0, 0.0f64);
    while checked < 100 {
        let (net, in_c) = random_net(&mut r);
        let (w, h) = (r.gen_range(12..=40), r.gen_range(12..=40));
        let data: Vec<f32> = (0..w * h * in_c).map(|_| r.gen_range(0.0..1.0)).collect();
        let img = ImagePlane::new(w, h, in_c, data.clone()).unwrap();
        let convs = net.conv_indices();
        let tap = TapPoint { layer_index: convs[r.gen_range(0..convs.len())], post_relu: r.gen_bool(0.5) };
        let last = if tap.post_relu && matches!(net.layers().get(tap.layer_index + 1), Some(Layer::Relu)) {
            tap.layer_index + 1
        } else {
            tap.layer_index
        };
        let input = Volume { c: in_c, h, w, data: data.iter().map(|&v| v as f64).collect() };
        let Some(want) = oracles::naive_forward(net.layers(), input, last) else {
            continue;
        };
        let field = net.run(&img, tap).map_err(|e| e.to_string())?;
        if (field.dim(), field.grid_h(), field.grid_w()) != (want.c, want.h, want.w) {
            return Err(format!("net {checked}: shape mismatch"));
        }
        for y in 0..want.h {
            for x in 0..want.w {
                let got = field.descriptor(x, y);
                for c in 0..want.c {
                    worst = worst.max((got[c] as f64 - want.data[(c * want.h + y) * want.w + x]).abs());
                }
            }
        }
        checked += 1;
    }
    within(Duration::from_secs(60), start, check(worst <= 1e-5, format!("{checked} nets, max abs diff {worst:.3e} (limit 1e-5)")))
}

fn calibration() -> Outcome {
    let mut r = rng::stream(104, "calibration");
    let (mut worst, mut order_violations, mut sets) = (0.0f64, 0, 0);
    for _ in 0..500 {
        let (np, nn) = (r.gen_range(1..40), r.gen_range(1..40));
        let pos: Vec<f64> = (0..np).map(|_| r.gen_range(-5.0..5.0)).collect();
        let neg: Vec<f64> = (0..nn).map(|_| r.gen_range(-5.0..5.0)).collect();
        let Calibration::Applied { a, c } = calibration_from_scores(&pos, &neg).map_err(|e| e.to_string())? else {
            continue;
        };
        sets += 1;
        let f = |s: &f64| a * s + c;
        let mp = oracles::median(&pos.iter().map(f).collect::<Vec<_>>());
        let mn = oracles::median(&neg.iter().map(f).collect::<Vec<_>>());
        worst = worst.max((mp - 1.0).abs()).max((mn + 1.0).abs());
        if oracles::median(&pos) > oracles::median(&neg) {
            let test: Vec<f64> = (0..30).map(|_| r.gen_range(-10.0..10.0)).collect();
            for i in 0..test.len() {
                for j in 0..test.len() {
                    if test[i] < test[j] && f(&test[i]) > f(&test[j]) {
                        order_violations += 1;
                    }
                }
            }
        }
    }
    check(
        worst <= 1e-12 && order_violations == 0,
        format!("{sets} score sets, worst median error {worst:.2e} (limit 1e-12), {order_violations} ranking violations"),
    )
}

fn svm_oracle() -> Outcome {
    let mut r = rng::stream(105, "svm-oracle");
    let mut worst = 0.0f64;
    let trials = 40;
    for trial in 0..trials {
        let (n, d) = (r.gen_range(2..=20), r.gen_range(1..=3));
        let mut xs: Vec<Vec<f64>> = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = if i % 2 == 0 { 1.0 } else { -1.0 };
            let mut v: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0) + 0.4 * label).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-3);
            v.iter_mut().for_each(|a| *a = (*a / norm) as f32 as f64);
            xs.push(v);
            y.push(label);
        }
        let c = [0.1, 1.0, 10.0][trial % 3];
        let flat: Vec<f32> = xs.iter().flatten().map(|&v| v as f32).collect();
        let cfg = SvmConfig { c, tol: 1e-6, max_epochs: 100_000, seed: trial as u64 };
        let fit = train_binary(&Descriptors::new(d, flat).unwrap(), &y, &cfg, &mut rng::stream(0, "svm/toy"))
            .map_err(|e| e.to_string())?;
        let (exact, gap) = oracles::svm_exact_objective(&xs, &y, c);
        if gap > 1e-8 * exact.max(1.0) {
            return Err(format!("trial {trial}: oracle gap {gap:.2e} does not certify optimality"));
        }
        worst = worst.max((fit.primal - exact).abs() / exact.max(1e-12));
    }
    check(worst <= 1e-3, format!("{trials} toys of <= 20 points, worst relative objective error {worst:.2e} (limit 1e-3)"))
}

fn map_oracle() -> Outcome {
    let mut r = rng::stream(106, "map-oracle");
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = r.gen_range(1..=40);
        let levels = r.gen_range(1..=8);
        let scores: Vec<f64> = (0..n).map(|_| r.gen_range(0..levels) as f64 / levels as f64).collect();
        let mut positive: Vec<bool> = (0..n).map(|_| r.gen_bool(0.3)).collect();
        positive[r.gen_range(0..n)] = true;
        let truth: Vec<Vec<usize>> = positive.iter().map(|&p| if p { vec![0] } else { vec![] }).collect();
        let m = mean_ap_11pt(&[scores.clone()], &truth, &ClassSet::new(vec!["c".into()])).map_err(|e| e.to_string())?;
        let b = oracles::ap_11pt_bruteforce(&scores, &positive).ok_or("oracle found no positives")?;
        worst = worst.max((m.overall - b).abs());
    }
    let worked = average_precision_11pt(&[0.9, 0.8, 0.7], &[true, false, true]).ok_or("no AP")?;
    let want = (6.0 + 10.0 / 3.0) / 11.0;
    check(
        worst <= 1e-12 && (worked - want).abs() <= 1e-12,
        format!("1000 lists, max diff {worst:.2e} (limit 1e-12); worked example {worked:.12} vs {want:.12}"),
    )
}

fn textured(w: usize, h: usize, seed: u64) -> ImagePlane {
    let mut r = rng::stream(seed, "tex");
    let (fx, fy) = (r.gen_range(0.1f32..0.5), r.gen_range(0.1f32..0.5));
    ImagePlane::from_fn(w, h, |x, y| 0.5 + 0.25 * ((x as f32 * fx).sin() + (y as f32 * fy).cos())).unwrap()
}

fn region_pooling() -> Outcome {
    let mut identical = 0;
    let mut additive = 0;
    let trials = 5;
    for t in 0..trials {
        let img = textured(72, 64, t);
        let fields = extract_pyramid(&img, &SiftExtractor::default(), &[1.0, 0.75]).map_err(|e| e.to_string())?;
        let samples = Descriptors::from_fields(&fields).unwrap();
        let (gmm, _) = train_gmm(&samples, &GmmConfig { k: 4, max_iter: 5, seed: t, ..Default::default() })
            .map_err(|e| e.to_string())?;
        let enc = FisherEncoder::new(gmm.clone(), None, EncoderConfig::default()).unwrap();
        let whole = enc.encode(&fields, Region::Whole).map_err(|e| e.to_string())?;
        let mask = RegionMask::full(72, 64, 3).unwrap();
        let by_mask = enc.encode(&fields, Region::Pixels(&MaskRegion { mask: &mask, id: 3 })).map_err(|e| e.to_string())?;
        let full = Proposal::from_predicate(1, 72, 64, |_, _| true).unwrap();
        let wrapped = Encoder { pca: None, codebook: Codebook::Fisher(gmm), config: EncoderConfig::default() };
        let by_prop = describe_region_fv(&fields, &full, &wrapped).map_err(|e| e.to_string())?;
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        if bits(&by_mask.values) == bits(&whole.values) && bits(&by_prop.values) == bits(&whole.values) {
            identical += 1;
        }
        let mut r = rng::stream(t, "partition");
        let parts = r.gen_range(2..6u32);
        let cut: Vec<u32> = (0..parts).map(|_| r.gen_range(0..136)).collect();
        let props: Vec<Proposal> = (0..parts)
            .map(|p| {
                Proposal::from_predicate(p + 1, 72, 64, |x, y| {
                    (0..parts).filter(|&q| (x + y) as u32 >= cut[q as usize]).count() as u32 % parts == p
                })
            })
            .filter_map(|p| p.ok())
            .collect();
        let mut sum: Option<texturebank::encoder::FisherAccumulator> = None;
        for p in &props {
            match region_accumulator(&fields, p, &enc) {
                Ok(a) => match &mut sum {
                    Some(s) => s.merge(&a).map_err(|e| e.to_string())?,
                    None => sum = Some(a),
                },
                Err(texturebank::Error::EmptyRegion) => {}
                Err(e) => return Err(e.to_string()),
            }
        }
        if sum == Some(enc.accumulate(&fields, Region::Whole).map_err(|e| e.to_string())?) {
            additive += 1;
        }
    }
    check(
        identical == trials && additive == trials,
        format!("{identical}/{trials} bit-identical whole-image encodings, {additive}/{trials} exact partition sums"),
    )
}

fn pasting() -> Outcome {
    let mut r = rng::stream(107, "paste");
    let (w, h) = (20, 16);
    let mut stable = 0;
    for _ in 0..100 {
        let n = r.gen_range(1..14);
        let mut props: Vec<Proposal> = (0..n)
            .map(|i| {
                let (x0, y0) = (r.gen_range(0..w), r.gen_range(0..h));
                let (x1, y1) = (r.gen_range(x0..w), r.gen_range(y0..h));
                let score = [0.25, 0.5, r.gen_range(-1.0..1.0)][r.gen_range(0..3)];
                Proposal::from_predicate(1 + (i as u32 % 5), w, h, |x, y| (x0..=x1).contains(&x) && (y0..=y1).contains(&y))
                    .unwrap()
                    .with_result(r.gen_range(0..4), score)
            })
            .collect();
        let base = paste_proposals(&props, w, h).map_err(|e| e.to_string())?;
        let mut same = true;
        for _ in 0..5 {
            props.shuffle(&mut r);
            same &= paste_proposals(&props, w, h).map_err(|e| e.to_string())? == base;
        }
        stable += usize::from(same);
    }
    // A: 10x10 at score 0.8, B: 5x2 at score 0.9 inside it
    let a = Proposal::from_predicate(1, 10, 10, |_, _| true).unwrap().with_result(0, 0.8);
    let b = Proposal::from_predicate(2, 10, 10, |x, y| x < 5 && y < 2).unwrap().with_result(1, 0.9);
    let ok_ab = [vec![a.clone(), b.clone()], vec![b, a]].iter().all(|set| {
        let m = paste_proposals(set, 10, 10).unwrap();
        m.class_at(0, 0) == Some(1) && m.class_at(9, 9) == Some(0)
    });
    check(stable == 100 && ok_ab, format!("{stable}/100 sets permutation-invariant; A/B overlap labeled B: {ok_ab}"))
}

fn benchmark() -> Outcome {
    let start = Instant::now();
    let r = run_texture_benchmark(&BenchConfig::default()).map_err(|e| e.to_string())?;
    let ok = r.fv_accuracy >= 0.95 && r.fv_accuracy >= r.bow_accuracy && r.train_images == 500 && r.test_images == 500;
    within(
        Duration::from_secs(300),
        start,
        check(
            ok,
            format!(
                "FV accuracy {:.4} (>= 0.95), BoW accuracy {:.4}, {} train / {} test crops, FV dim {}",
                r.fv_accuracy, r.bow_accuracy, r.train_images, r.test_images, r.fv_dim
            ),
        ),
    )
}

fn sweep() -> Outcome {
    let spec = SyntheticSpec { classes: vec![SynthClass::HStripes, SynthClass::Checker], size: 32, train: 20, test: 20, seed: 5 };
    let net = random_sweep_net(5);
    let res = layer_sweep(&net, &spec, 4, 5).map_err(|e| e.to_string())?;
    let accs: Vec<String> = res.iter().map(|l| format!("conv{}={:.3}", l.conv, l.accuracy)).collect();
    check(
        res.len() == 5 && res.iter().all(|l| (0.0..=1.0).contains(&l.accuracy)),
        format!("{} layers: {}", res.len(), accs.join(" ")),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("fv-oracle-equivalence", fv_oracle),
        ("fv-dimensionality", fv_dimensionality),
        ("em-monotonicity-recovery", em_monotone),
        ("convolution-oracle", conv_oracle),
        ("calibration", calibration),
        ("svm-oracle", svm_oracle),
        ("map-oracle", map_oracle),
        ("region-pooling", region_pooling),
        ("pasting-determinism", pasting),
        ("synthetic-benchmark", benchmark),
        ("layer-sweep", sweep),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(d) => println!("PASS {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
