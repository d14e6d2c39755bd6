//! Slow, direct reference implementations used as test oracles. None of
//! these share code with the library paths they check.

#![allow(dead_code)]

use rand::Rng;
use texturebank::filterbank::{Conv, Layer, Pool};

// ---------------------------------------------------------------- FV

/// A diagonal GMM as plain arrays.
#[derive(Debug, Clone)]
pub struct PlainGmm {
    pub k: usize,
    pub d: usize,
    pub w: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl PlainGmm {
    pub fn random(rng: &mut impl Rng, k: usize, d: usize) -> Self {
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        Self {
            k,
            d,
            w: raw.iter().map(|r| r / total).collect(),
            mu: (0..k * d).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            sigma: (0..k * d).map(|_| rng.gen_range(0.5..2.0)).collect(),
        }
    }

    pub fn variances(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| s * s).collect()
    }
}

/// log p(X) summed over samples, computed from the densities directly.
pub fn log_likelihood(g: &PlainGmm, xs: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for x in xs {
        let logs: Vec<f64> = (0..g.k)
            .map(|c| {
                let mut l = g.w[c].ln();
                for i in 0..g.d {
                    let s = g.sigma[c * g.d + i];
                    let z = (x[i] - g.mu[c * g.d + i]) / s;
                    l += -0.5 * z * z - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
                }
                l
            })
            .collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        total += m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    }
    total
}

/// Richardson-extrapolated central difference of `f` at 0.
fn derivative(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    let d1 = |h: f64| (f(h) - f(-h)) / (2.0 * h);
    (4.0 * d1(h / 2.0) - d1(h)) / 3.0
}

/// Fisher Vector as the numerically differentiated log-likelihood with
/// respect to each mean and deviation, scaled by `sigma / (N sqrt(w))` and
/// `sigma / (N sqrt(2 w))`. Laid out `[u_1, v_1, ..., u_K, v_K]`.
pub fn fisher_vector_oracle(g: &PlainGmm, xs: &[Vec<f64>]) -> Vec<f64> {
    let n = xs.len() as f64;
    let mut out = vec![0.0; 2 * g.k * g.d];
    for c in 0..g.k {
        for i in 0..g.d {
            let idx = c * g.d + i;
            let s = g.sigma[idx];
            let h = 1e-3 * s;
            let d_mu = derivative(
                |t| {
                    let mut p = g.clone();
                    p.mu[idx] += t;
                    log_likelihood(&p, xs)
                },
                h,
            );
            let d_sigma = derivative(
                |t| {
                    let mut p = g.clone();
                    p.sigma[idx] += t;
                    log_likelihood(&p, xs)
                },
                h,
            );
            out[2 * c * g.d + i] = s * d_mu / (n * g.w[c].sqrt());
            out[2 * c * g.d + g.d + i] = s * d_sigma / (n * (2.0 * g.w[c]).sqrt());
        }
    }
    out
}

// ---------------------------------------------------------------- network

/// Channel-planar volume in f64.
#[derive(Debug, Clone)]
pub struct Volume {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Volume {
    fn at(&self, c: usize, y: isize, x: isize) -> f64 {
        if y < 0 || x < 0 || y >= self.h as isize || x >= self.w as isize {
            0.0
        } else {
            self.data[(c * self.h + y as usize) * self.w + x as usize]
        }
    }
}

pub fn naive_conv(v: &Volume, conv: &Conv) -> Option<Volume> {
    let ph = v.h + 2 * conv.pad_h;
    let pw = v.w + 2 * conv.pad_w;
    if ph < conv.kh || pw < conv.kw {
        return None;
    }
    let oh = (ph - conv.kh) / conv.stride_h + 1;
    let ow = (pw - conv.kw) / conv.stride_w + 1;
    let mut data = vec![0.0; conv.out_c * oh * ow];
    for o in 0..conv.out_c {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = conv.biases[o] as f64;
                for ci in 0..conv.in_c {
                    for ky in 0..conv.kh {
                        for kx in 0..conv.kw {
                            let wv = conv.weights[((o * conv.in_c + ci) * conv.kh + ky) * conv.kw + kx] as f64;
                            let iy = (y * conv.stride_h + ky) as isize - conv.pad_h as isize;
                            let ix = (x * conv.stride_w + kx) as isize - conv.pad_w as isize;
                            acc += wv * v.at(ci, iy, ix);
                        }
                    }
                }
                data[(o * oh + y) * ow + x] = acc;
            }
        }
    }
    Some(Volume { c: conv.out_c, h: oh, w: ow, data })
}

pub fn naive_pool(v: &Volume, p: &Pool) -> Option<Volume> {
    if v.h < p.kh || v.w < p.kw {
        return None;
    }
    let oh = (v.h - p.kh) / p.stride_h + 1;
    let ow = (v.w - p.kw) / p.stride_w + 1;
    let mut data = Vec::new();
    for c in 0..v.c {
        for y in 0..oh {
            for x in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for ky in 0..p.kh {
                    for kx in 0..p.kw {
                        m = m.max(v.at(c, (y * p.stride_h + ky) as isize, (x * p.stride_w + kx) as isize));
                    }
                }
                data.push(m);
            }
        }
    }
    Some(Volume { c: v.c, h: oh, w: ow, data })
}

/// Runs layers `0..=last`; None when an activation becomes empty.
pub fn naive_forward(layers: &[Layer], input: Volume, last: usize) -> Option<Volume> {
    let mut v = input;
    for layer in &layers[..=last] {
        v = match layer {
            Layer::Convolution(c) => naive_conv(&v, c)?,
            Layer::Relu => Volume { data: v.data.iter().map(|&x| x.max(0.0)).collect(), ..v },
            Layer::MaxPool(p) => naive_pool(&v, p)?,
            Layer::FullyConnected(_) => unreachable!("oracle covers convolutional stacks only"),
        };
    }
    Some(v)
}

/// Input-pixel span `[lo, hi]` (along one axis) of output cell `idx` of
/// layer `last`, walked backwards one layer at a time. Returns
/// `(center of cell 0, center of cell 1 - center of cell 0)`.
pub fn receptive_span(layers: &[Layer], last: usize, horizontal: bool) -> (f64, f64) {
    let center = |idx: i64| {
        let (mut lo, mut hi) = (idx, idx);
        for layer in layers[..=last].iter().rev() {
            let (k, s, p) = match layer {
                Layer::Convolution(c) => {
                    if horizontal {
                        (c.kw, c.stride_w, c.pad_w)
                    } else {
                        (c.kh, c.stride_h, c.pad_h)
                    }
                }
                Layer::MaxPool(q) => {
                    if horizontal {
                        (q.kw, q.stride_w, 0)
                    } else {
                        (q.kh, q.stride_h, 0)
                    }
                }
                _ => continue,
            };
            lo = lo * s as i64 - p as i64;
            hi = hi * s as i64 - p as i64 + k as i64 - 1;
        }
        (lo + hi) as f64 / 2.0
    };
    (center(0), center(1) - center(0))
}

// ---------------------------------------------------------------- SVM

/// Exact-to-certificate solution of the bias-augmented hinge SVM dual by
/// accelerated projected gradient. Returns `(primal, duality gap)`.
pub fn svm_exact_objective(x: &[Vec<f64>], y: &[f64], c: f64) -> (f64, f64) {
    let n = x.len();
    let d = x[0].len();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * (x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum::<f64>() + 1.0)).collect())
        .collect();
    let lipschitz: f64 = (0..n).map(|i| q[i][i]).sum::<f64>().max(1e-12);
    let step = 1.0 / lipschitz;
    let primal_dual = |alpha: &[f64]| {
        let mut w = vec![0.0; d + 1];
        for i in 0..n {
            for j in 0..d {
                w[j] += alpha[i] * y[i] * x[i][j];
            }
            w[d] += alpha[i] * y[i];
        }
        let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
        let loss: f64 = (0..n)
            .map(|i| {
                let s: f64 = x[i].iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[d];
                (1.0 - y[i] * s).max(0.0)
            })
            .sum();
        (reg + c * loss, alpha.iter().sum::<f64>() - reg)
    };
    let mut alpha = vec![0.0; n];
    let mut z = alpha.clone();
    let mut t = 1.0f64;
    let mut best = (f64::INFINITY, f64::NEG_INFINITY);
    for it in 0..2_000_000 {
        let grad: Vec<f64> = (0..n).map(|i| 1.0 - (0..n).map(|j| q[i][j] * z[j]).sum::<f64>()).collect();
        let next: Vec<f64> = (0..n).map(|i| (z[i] + step * grad[i]).clamp(0.0, c)).collect();
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = (0..n).map(|i| next[i] + (t - 1.0) / t_next * (next[i] - alpha[i])).collect();
        alpha = next;
        t = t_next;
        if it % 100 == 0 {
            let (p, dv) = primal_dual(&alpha);
            best = (best.0.min(p), best.1.max(dv));
            if best.0 - best.1 < 1e-10 * best.0.abs().max(1.0) {
                break;
            }
        }
    }
    (best.0, best.0 - best.1)
}

// ---------------------------------------------------------------- mAP

/// 11-point AP from a full precision/recall table, each prefix recounted.
pub fn ap_11pt_bruteforce(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n = scores.len();
    let npos = positive.iter().filter(|&&p| p).count();
    if npos == 0 {
        return None;
    }
    // selection ranking: highest score first, lowest index among ties
    let mut taken = vec![false; n];
    let mut ranking = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            if best.map_or(true, |b| scores[i] > scores[b]) {
                best = Some(i);
            }
        }
        let b = best.unwrap();
        taken[b] = true;
        ranking.push(b);
    }
    let table: Vec<(usize, f64)> = (1..=n)
        .map(|k| {
            let tp = ranking[..k].iter().filter(|&&i| positive[i]).count();
            (tp, tp as f64 / k as f64)
        })
        .collect();
    let mut sum = 0.0;
    for level in 0..=10 {
        let p = table.iter().filter(|(tp, _)| 10 * tp >= level * npos).map(|&(_, p)| p).fold(0.0, f64::max);
        sum += p;
    }
    Some(sum / 11.0)
}

// ---------------------------------------------------------------- misc

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Bilinear resize of one plane, pixel centers aligned, reads clamped.
pub fn bilinear_resize(plane: &[f32], w: usize, h: usize, ow: usize, oh: usize) -> Vec<f64> {
    let px = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        plane[y * w + x] as f64
    };
    let mut out = Vec::with_capacity(ow * oh);
    for oy in 0..oh {
        for ox in 0..ow {
            let sx = (ox as f64 + 0.5) * w as f64 / ow as f64 - 0.5;
            let sy = (oy as f64 + 0.5) * h as f64 / oh as f64 - 0.5;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let v = (1.0 - fy) * ((1.0 - fx) * px(x0, y0) + fx * px(x0 + 1, y0))
                + fy * ((1.0 - fx) * px(x0, y0 + 1) + fx * px(x0 + 1, y0 + 1));
            out.push(v);
        }
    }
    out
}
