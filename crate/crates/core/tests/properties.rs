mod support;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use texturebank::classifier::calibration_from_scores;
use texturebank::classifier::Calibration;
use texturebank::encoder::{encode_fv, EncoderConfig, FisherEncoder, GmmModel, MaskRegion, Region};
use texturebank::eval::{class_normalized_accuracy, mean_ap_11pt, per_pixel_accuracy, ClassSet, PixelMode};
use texturebank::field::FieldGeometry;
use texturebank::region::{paste_proposals, superpixels, LabelMap, Proposal};
use texturebank::tensorfile::{read_tensor, write_tensor};
use texturebank::{rng, FeatureField, ImagePlane, RegionMask};

fn arb_field() -> impl Strategy<Value = FeatureField> {
    (1usize..6, 1usize..6, 1usize..9, 1u32..9, -20.0f32..20.0, -20.0f32..20.0, 0.05f32..4.0, "[a-z0-9:_]{0,12}", any::<u64>())
        .prop_map(|(w, h, d, stride, ox, oy, scale, name, seed)| {
            let mut r = rng::stream(seed, "field");
            let data = (0..w * h * d).map(|_| f32::from_bits(r.gen::<u32>() & 0xbf7f_ffff)).collect();
            FeatureField::new(w, h, d, FieldGeometry { stride: stride as f32, offset: (ox, oy), scale }, name, data)
                .unwrap()
        })
}

fn random_gmm(r: &mut impl Rng, k: usize, d: usize) -> GmmModel {
    let raw: Vec<f64> = (0..k).map(|_| r.gen_range(0.2..1.0)).collect();
    let s: f64 = raw.iter().sum();
    GmmModel::new(
        k,
        d,
        raw.iter().map(|v| v / s).collect(),
        (0..k * d).map(|_| r.gen_range(-1.0..1.0)).collect(),
        (0..k * d).map(|_| r.gen_range(0.2..2.0)).collect(),
    )
    .unwrap()
}

fn grid_field(r: &mut impl Rng, w: usize, h: usize, d: usize, stride: f32) -> FeatureField {
    let data = (0..w * h * d).map(|_| r.gen_range(-2.0f32..2.0)).collect();
    FeatureField::new(w, h, d, FieldGeometry { stride, offset: (stride / 2.0, stride / 2.0), scale: 1.0 }, "g", data)
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tensor_file_round_trip_is_bit_exact(field in arb_field()) {
        let bytes = write_tensor(&field).unwrap();
        let back = read_tensor(&bytes).unwrap();
        prop_assert_eq!(write_tensor(&back).unwrap(), bytes);
        let bits = |f: &FeatureField| f.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&field));
        prop_assert_eq!(back.geometry(), field.geometry());
        prop_assert_eq!(back.source(), field.source());
    }

    #[test]
    fn signed_sqrt_keeps_signs_and_output_is_unit(seed in any::<u64>(), k in 1usize..4, d in 1usize..5) {
        let mut r = rng::stream(seed, "fv-norm");
        let gmm = random_gmm(&mut r, k, d);
        let field = grid_field(&mut r, 4, 3, d, 1.0);
        let raw_cfg = EncoderConfig { signed_sqrt: false, l2_normalize: false, ..Default::default() };
        let raw = encode_fv(&[field.clone()], Region::Whole, &gmm, &raw_cfg).unwrap();
        let sq = encode_fv(&[field.clone()], Region::Whole, &gmm, &EncoderConfig { l2_normalize: false, ..Default::default() }).unwrap();
        for (a, b) in raw.values.iter().zip(&sq.values) {
            prop_assert_eq!(a.signum() == b.signum() || *a == 0.0, true);
        }
        let full = encode_fv(&[field], Region::Whole, &gmm, &EncoderConfig::default()).unwrap();
        let norm = full.values.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        prop_assert!(full.zero || (norm - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn accumulators_add_over_any_partition(seed in any::<u64>(), parts in 2u32..6) {
        let mut r = rng::stream(seed, "additivity");
        let gmm = random_gmm(&mut r, 3, 2);
        let fields = vec![grid_field(&mut r, 6, 5, 2, 4.0), grid_field(&mut r, 3, 2, 2, 8.0).with_scale(0.5).unwrap()];
        let labels: Vec<u32> = (0..24 * 20).map(|_| r.gen_range(1..=parts)).collect();
        let mask = RegionMask::new(24, 20, labels).unwrap();
        let enc = FisherEncoder::new(gmm, None, EncoderConfig::default()).unwrap();
        let whole = enc.accumulate(&fields, Region::Whole).unwrap();
        let mut sum = None;
        for id in 1..=parts {
            let part = MaskRegion { mask: &mask, id };
            let acc = enc.accumulate(&fields, Region::Pixels(&part)).unwrap();
            match &mut sum {
                None => sum = Some(acc),
                Some(s) => s.merge(&acc).unwrap(),
            }
        }
        prop_assert_eq!(sum.unwrap(), whole);
    }

    #[test]
    fn calibrated_medians_are_plus_minus_one(seed in any::<u64>(), np in 1usize..30, nn in 1usize..30) {
        let mut r = rng::stream(seed, "calibration");
        let pos: Vec<f64> = (0..np).map(|_| r.gen_range(-5.0..5.0)).collect();
        let neg: Vec<f64> = (0..nn).map(|_| r.gen_range(-5.0..5.0)).collect();
        match calibration_from_scores(&pos, &neg).unwrap() {
            Calibration::Applied { a, c } => {
                let f = |s: &f64| a * s + c;
                let mp = support::oracles::median(&pos.iter().map(f).collect::<Vec<_>>());
                let mn = support::oracles::median(&neg.iter().map(f).collect::<Vec<_>>());
                prop_assert!((mp - 1.0).abs() <= 1e-12 && (mn + 1.0).abs() <= 1e-12, "{} {}", mp, mn);
                if a > 0.0 {
                    let test: Vec<f64> = (0..20).map(|_| r.gen_range(-10.0..10.0)).collect();
                    let best = |v: &[f64]| (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
                    let mapped: Vec<f64> = test.iter().map(f).collect();
                    prop_assert_eq!(best(&test), best(&mapped));
                    for i in 0..test.len() {
                        for j in 0..test.len() {
                            if test[i] < test[j] {
                                prop_assert!(mapped[i] <= mapped[j]);
                            }
                        }
                    }
                }
            }
            Calibration::Skipped => prop_assert_eq!(support::oracles::median(&pos), support::oracles::median(&neg)),
            Calibration::None => prop_assert!(false),
        }
    }

    #[test]
    fn pasting_ignores_input_order(seed in any::<u64>(), n in 0usize..12) {
        let mut r = rng::stream(seed, "paste");
        let (w, h) = (16, 12);
        let mut props: Vec<Proposal> = (0..n)
            .map(|i| {
                let (x0, y0) = (r.gen_range(0..w), r.gen_range(0..h));
                let (x1, y1) = (r.gen_range(x0..w), r.gen_range(y0..h));
                let score = [0.25, 0.5, 1.0, r.gen_range(-1.0..1.0)][r.gen_range(0..4)];
                Proposal::from_predicate(1 + (i as u32 % 4), w, h, |x, y| (x0..=x1).contains(&x) && (y0..=y1).contains(&y))
                    .unwrap()
                    .with_result(r.gen_range(0..3), score)
            })
            .collect();
        let base = paste_proposals(&props, w, h).unwrap();
        for _ in 0..4 {
            props.shuffle(&mut r);
            prop_assert_eq!(&paste_proposals(&props, w, h).unwrap(), &base);
        }
    }

    #[test]
    fn superpixels_partition_the_image(seed in any::<u64>(), target in 1usize..20, w in 4usize..30, h in 4usize..30) {
        let mut r = rng::stream(seed, "slic");
        let img = ImagePlane::new(w, h, 3, (0..w * h * 3).map(|_| r.gen_range(0.0..1.0)).collect()).unwrap();
        let set = superpixels(&img, target).unwrap();
        prop_assert!(set.is_partition());
        let mask = set.to_mask().unwrap();
        for p in &set.proposals {
            // connected: flood fill from the first pixel reaches the whole region
            let start = p.pixels().next().unwrap();
            let mut seen = vec![false; w * h];
            let mut stack = vec![start];
            seen[start] = true;
            let mut count = 0;
            while let Some(q) = stack.pop() {
                count += 1;
                let (x, y) = (q % w, q / w);
                let mut nb = Vec::new();
                if x > 0 { nb.push(q - 1); }
                if x + 1 < w { nb.push(q + 1); }
                if y > 0 { nb.push(q - w); }
                if y + 1 < h { nb.push(q + w); }
                for t in nb {
                    if !seen[t] && mask.labels()[t] == p.id {
                        seen[t] = true;
                        stack.push(t);
                    }
                }
            }
            prop_assert_eq!(count, p.area());
        }
    }

    #[test]
    fn measures_are_bounded_and_relabeling_invariant(seed in any::<u64>(), n in 1usize..60, k in 1usize..5) {
        let mut r = rng::stream(seed, "eval");
        let truth: Vec<usize> = (0..n).map(|_| r.gen_range(0..k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| r.gen_range(0..k)).collect();
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut r);
        let classes = ClassSet::new((0..k).map(|c| c.to_string()).collect());
        let a = class_normalized_accuracy(&pred, &truth, &classes).unwrap().overall;
        let pt: Vec<usize> = truth.iter().map(|&t| perm[t]).collect();
        let pp: Vec<usize> = pred.iter().map(|&p| perm[p]).collect();
        let b = class_normalized_accuracy(&pp, &pt, &classes).unwrap().overall;
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a - b).abs() <= 1e-12);

        let tmap = LabelMap::new(n, 1, truth.iter().map(|&t| if r.gen_bool(0.2) { 0 } else { t as u32 + 1 }).collect()).unwrap();
        let pmap = LabelMap::new(n, 1, pred.iter().map(|&p| p as u32 + 1).collect()).unwrap();
        if let Ok(g) = per_pixel_accuracy(&pmap, &tmap, PixelMode::Global, &classes) {
            let labeled = tmap.labels.iter().filter(|&&t| t != 0).count();
            let correct = tmap.labels.iter().zip(&pmap.labels).filter(|(t, p)| **t != 0 && t == p).count();
            prop_assert_eq!(g.overall, correct as f64 / labeled as f64);
            let cn = per_pixel_accuracy(&pmap, &tmap, PixelMode::ClassNormalized, &classes).unwrap();
            prop_assert!((0.0..=1.0).contains(&cn.overall));
        }

        let scores: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| r.gen_range(0.0..1.0)).collect()).collect();
        let sets: Vec<Vec<usize>> = truth.iter().map(|&t| vec![t]).collect();
        let m = mean_ap_11pt(&scores, &sets, &classes).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.overall));
    }
}
