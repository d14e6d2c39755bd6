//! A minimal feed-forward network runner used as a deep filter bank.
//!
//! Supports convolution, ReLU, max-pooling and a trailing fully-connected
//! block. Dense fields are tapped at a convolution layer, before or after
//! the ReLU that follows it; the field geometry comes from composing layer
//! strides, kernels and paddings.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::container::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::field::{FeatureField, FieldGeometry};
use crate::image::ImagePlane;

pub const WEIGHTS_MAGIC: [u8; 4] = *b"FBNK";
pub const WEIGHTS_VERSION: u16 = 1;

const TAG_CONV: u8 = 1;
const TAG_RELU: u8 = 2;
const TAG_POOL: u8 = 3;
const TAG_FC: u8 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub out_c: usize,
    pub in_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    /// `out_c x in_c x kh x kw`, row-major.
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pool {
    pub kh: usize,
    pub kw: usize,
    pub stride_h: usize,
    pub stride_w: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fc {
    pub out_dim: usize,
    pub in_dim: usize,
    /// `out_dim x in_dim`, row-major.
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Convolution(Conv),
    Relu,
    MaxPool(Pool),
    FullyConnected(Fc),
}

impl Conv {
    /// Uniform initialization scaled by fan-in so activations stay O(1).
    pub fn random(
        rng: &mut impl Rng,
        out_c: usize,
        in_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let fan_in = (in_c * k * k) as f32;
        let a = (3.0 / fan_in).sqrt();
        Self {
            out_c,
            in_c,
            kh: k,
            kw: k,
            stride_h: stride,
            stride_w: stride,
            pad_h: pad,
            pad_w: pad,
            weights: (0..out_c * in_c * k * k).map(|_| rng.gen_range(-a..a)).collect(),
            biases: (0..out_c).map(|_| rng.gen_range(-0.1..0.1)).collect(),
        }
    }
}

impl Fc {
    pub fn random(rng: &mut impl Rng, out_dim: usize, in_dim: usize) -> Self {
        let a = (3.0 / in_dim as f32).sqrt();
        Self {
            out_dim,
            in_dim,
            weights: (0..out_dim * in_dim).map(|_| rng.gen_range(-a..a)).collect(),
            biases: (0..out_dim).map(|_| rng.gen_range(-0.1..0.1)).collect(),
        }
    }
}

/// Where a dense field is read out of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TapPoint {
    pub layer_index: usize,
    /// Read after the ReLU directly following the tapped convolution.
    pub post_relu: bool,
}

impl TapPoint {
    pub fn pre(layer_index: usize) -> Self {
        Self { layer_index, post_relu: false }
    }

    pub fn post(layer_index: usize) -> Self {
        Self { layer_index, post_relu: true }
    }
}

impl fmt::Display for TapPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.layer_index, if self.post_relu { "post" } else { "pre" })
    }
}

impl FromStr for TapPoint {
    type Err = Error;

    /// `<layerIndex>[:pre|post]`, default `pre`.
    fn from_str(s: &str) -> Result<Self> {
        let (idx, mode) = match s.split_once(':') {
            Some((i, m)) => (i, m),
            None => (s, "pre"),
        };
        let layer_index = idx
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad tap layer index {idx:?}")))?;
        let post_relu = match mode.trim() {
            "pre" => false,
            "post" => true,
            m => return Err(Error::InvalidArgument(format!("bad tap mode {m:?}, expected pre|post"))),
        };
        Ok(Self { layer_index, post_relu })
    }
}

/// Channel-planar activation volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl Activation {
    pub fn from_image(img: &ImagePlane) -> Self {
        Self { c: img.channels(), h: img.height(), w: img.width(), data: img.data().to_vec() }
    }
}

/// Image-space geometry of an activation grid: cell `i` is centered at
/// `start + jump * i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceptiveField {
    pub jump: (f64, f64),
    pub start: (f64, f64),
}

impl ReceptiveField {
    pub fn identity() -> Self {
        Self { jump: (1.0, 1.0), start: (0.0, 0.0) }
    }

    fn through(self, kh: usize, kw: usize, sh: usize, sw: usize, ph: usize, pw: usize) -> Self {
        let cx = (kw as f64 - 1.0) / 2.0 - pw as f64;
        let cy = (kh as f64 - 1.0) / 2.0 - ph as f64;
        Self {
            jump: (self.jump.0 * sw as f64, self.jump.1 * sh as f64),
            start: (self.start.0 + self.jump.0 * cx, self.start.1 + self.jump.1 * cy),
        }
    }
}

/// A validated layer stack.
#[derive(Debug, Clone, PartialEq)]
pub struct NetSpec {
    layers: Vec<Layer>,
}

impl NetSpec {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network has no layers".into()));
        }
        let mut channels: Option<usize> = None;
        let mut fc_dim: Option<usize> = None;
        for (i, layer) in layers.iter().enumerate() {
            match layer {
                Layer::Convolution(c) => {
                    if fc_dim.is_some() {
                        return Err(Error::InvalidArgument(format!(
                            "layer {i}: convolution after the fully-connected block"
                        )));
                    }
                    if c.out_c == 0 || c.in_c == 0 || c.kh == 0 || c.kw == 0 || c.stride_h == 0 || c.stride_w == 0 {
                        return Err(Error::InvalidArgument(format!("layer {i}: zero convolution dimension")));
                    }
                    if let Some(ch) = channels {
                        if ch != c.in_c {
                            return Err(Error::DimensionMismatch(format!(
                                "layer {i}: convolution expects {} channels, previous layer gives {ch}",
                                c.in_c
                            )));
                        }
                    }
                    if c.weights.len() != c.out_c * c.in_c * c.kh * c.kw || c.biases.len() != c.out_c {
                        return Err(Error::DimensionMismatch(format!("layer {i}: convolution weight count")));
                    }
                    if c.weights.iter().chain(&c.biases).any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite(format!("layer {i} weights")));
                    }
                    channels = Some(c.out_c);
                }
                Layer::Relu => {}
                Layer::MaxPool(p) => {
                    if fc_dim.is_some() {
                        return Err(Error::InvalidArgument(format!("layer {i}: pooling after the fully-connected block")));
                    }
                    if p.kh == 0 || p.kw == 0 || p.stride_h == 0 || p.stride_w == 0 {
                        return Err(Error::InvalidArgument(format!("layer {i}: zero pooling dimension")));
                    }
                }
                Layer::FullyConnected(f) => {
                    if f.out_dim == 0 || f.in_dim == 0 {
                        return Err(Error::InvalidArgument(format!("layer {i}: zero FC dimension")));
                    }
                    if let Some(prev) = fc_dim {
                        if prev != f.in_dim {
                            return Err(Error::DimensionMismatch(format!(
                                "layer {i}: FC expects {} inputs, previous FC gives {prev}",
                                f.in_dim
                            )));
                        }
                    }
                    if f.weights.len() != f.out_dim * f.in_dim || f.biases.len() != f.out_dim {
                        return Err(Error::DimensionMismatch(format!("layer {i}: FC weight count")));
                    }
                    if f.weights.iter().chain(&f.biases).any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite(format!("layer {i} weights")));
                    }
                    fc_dim = Some(f.out_dim);
                }
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_channels(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l {
            Layer::Convolution(c) => Some(c.in_c),
            _ => None,
        })
    }

    pub fn conv_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Convolution(_)))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_fc(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::FullyConnected(_)))
    }

    /// Last convolution, read before its nonlinearity.
    pub fn default_tap(&self) -> Option<TapPoint> {
        self.conv_indices().last().map(|&i| TapPoint::pre(i))
    }

    fn check_tap(&self, tap: TapPoint) -> Result<usize> {
        match self.layers.get(tap.layer_index) {
            Some(Layer::Convolution(_)) => {}
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "tap layer {} is not a convolution",
                    tap.layer_index
                )))
            }
        }
        let post = tap.post_relu && matches!(self.layers.get(tap.layer_index + 1), Some(Layer::Relu));
        Ok(tap.layer_index + usize::from(post))
    }

    /// Receptive-field geometry of the output of layer `last` (inclusive).
    pub fn receptive_field(&self, last: usize) -> ReceptiveField {
        let mut rf = ReceptiveField::identity();
        for layer in &self.layers[..=last.min(self.layers.len() - 1)] {
            rf = match layer {
                Layer::Convolution(c) => rf.through(c.kh, c.kw, c.stride_h, c.stride_w, c.pad_h, c.pad_w),
                Layer::MaxPool(p) => rf.through(p.kh, p.kw, p.stride_h, p.stride_w, 0, 0),
                _ => rf,
            };
        }
        rf
    }

    fn check_input(&self, img: &ImagePlane) -> Result<()> {
        if let Some(c) = self.input_channels() {
            if c != img.channels() {
                return Err(Error::DimensionMismatch(format!(
                    "network expects {c} input channels, image has {}",
                    img.channels()
                )));
            }
        }
        Ok(())
    }

    fn forward_until(&self, img: &ImagePlane, last: usize) -> Result<Activation> {
        self.check_input(img)?;
        let mut act = Activation::from_image(img);
        for (i, layer) in self.layers[..=last].iter().enumerate() {
            act = match layer {
                Layer::Convolution(c) => conv_forward(&act, c),
                Layer::Relu => {
                    let mut a = act;
                    relu_inplace(&mut a.data);
                    Ok(a)
                }
                Layer::MaxPool(p) => pool_forward(&act, p),
                Layer::FullyConnected(f) => fc_forward(&act, f),
            }
            .map_err(|e| match e {
                Error::Degenerate(m) => Error::Degenerate(format!("layer {i}: {m}")),
                other => other,
            })?;
        }
        Ok(act)
    }

    /// Dense field at `tap` with stride and offset from receptive-field arithmetic.
    pub fn run(&self, img: &ImagePlane, tap: TapPoint) -> Result<FeatureField> {
        let last = self.check_tap(tap)?;
        let act = self.forward_until(img, last)?;
        let rf = self.receptive_field(last);
        if rf.jump.0 != rf.jump.1 {
            return Err(Error::InvalidArgument(format!(
                "anisotropic tap stride {}x{} is not representable",
                rf.jump.0, rf.jump.1
            )));
        }
        let cells = act.h * act.w;
        let mut data = vec![0f32; cells * act.c];
        for ch in 0..act.c {
            for cell in 0..cells {
                data[cell * act.c + ch] = act.data[ch * cells + cell];
            }
        }
        FeatureField::new(
            act.w,
            act.h,
            act.c,
            FieldGeometry {
                stride: rf.jump.0 as f32,
                offset: (rf.start.0 as f32, rf.start.1 as f32),
                scale: 1.0,
            },
            tap.to_string(),
            data,
        )
    }

    /// Output of the full network (fully-connected head included).
    pub fn run_head(&self, img: &ImagePlane) -> Result<Vec<f32>> {
        if !matches!(self.layers.last(), Some(Layer::FullyConnected(_)) | Some(Layer::Relu)) || !self.has_fc() {
            return Err(Error::InvalidArgument("network has no fully-connected head".into()));
        }
        Ok(self.forward_until(img, self.layers.len() - 1)?.data)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::new();
        w.bytes(&WEIGHTS_MAGIC);
        w.u16(WEIGHTS_VERSION);
        w.u16(0);
        w.u32(self.layers.len() as u32);
        let dim = |v: usize| u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("dimension {v} exceeds u32")));
        for layer in &self.layers {
            match layer {
                Layer::Convolution(c) => {
                    w.u8(TAG_CONV);
                    let dims = [c.out_c, c.in_c, c.kh, c.kw, c.stride_h, c.stride_w, c.pad_h, c.pad_w];
                    w.u8(dims.len() as u8);
                    for d in dims {
                        w.u32(dim(d)?);
                    }
                    w.f32_slice(&c.weights);
                    w.f32_slice(&c.biases);
                }
                Layer::Relu => {
                    w.u8(TAG_RELU);
                    w.u8(0);
                }
                Layer::MaxPool(p) => {
                    w.u8(TAG_POOL);
                    let dims = [p.kh, p.kw, p.stride_h, p.stride_w];
                    w.u8(dims.len() as u8);
                    for d in dims {
                        w.u32(dim(d)?);
                    }
                }
                Layer::FullyConnected(f) => {
                    w.u8(TAG_FC);
                    w.u8(2);
                    w.u32(dim(f.out_dim)?);
                    w.u32(dim(f.in_dim)?);
                    w.f32_slice(&f.weights);
                    w.f32_slice(&f.biases);
                }
            }
        }
        Ok(w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.magic()?;
        if magic != WEIGHTS_MAGIC {
            return Err(Error::BadMagic { expected: WEIGHTS_MAGIC, found: magic });
        }
        let version = r.u16()?;
        if version != WEIGHTS_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let _reserved = r.u16()?;
        let count = r.u32()? as usize;
        let mut layers = Vec::with_capacity(count.min(1024));
        for i in 0..count {
            let tag = r.u8()?;
            let ndims = r.u8()? as usize;
            let dims = (0..ndims).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            let expect = |n: usize| {
                if ndims == n {
                    Ok(())
                } else {
                    Err(Error::Malformed(format!("layer {i}: expected {n} dims, found {ndims}")))
                }
            };
            let layer = match tag {
                TAG_CONV => {
                    expect(8)?;
                    let n = dims[0] * dims[1] * dims[2] * dims[3];
                    Layer::Convolution(Conv {
                        out_c: dims[0],
                        in_c: dims[1],
                        kh: dims[2],
                        kw: dims[3],
                        stride_h: dims[4],
                        stride_w: dims[5],
                        pad_h: dims[6],
                        pad_w: dims[7],
                        weights: r.f32_vec(n)?,
                        biases: r.f32_vec(dims[0])?,
                    })
                }
                TAG_RELU => {
                    expect(0)?;
                    Layer::Relu
                }
                TAG_POOL => {
                    expect(4)?;
                    Layer::MaxPool(Pool { kh: dims[0], kw: dims[1], stride_h: dims[2], stride_w: dims[3] })
                }
                TAG_FC => {
                    expect(2)?;
                    Layer::FullyConnected(Fc {
                        out_dim: dims[0],
                        in_dim: dims[1],
                        weights: r.f32_vec(dims[0] * dims[1])?,
                        biases: r.f32_vec(dims[0])?,
                    })
                }
                t => return Err(Error::Malformed(format!("layer {i}: unknown layer tag {t}"))),
            };
            layers.push(layer);
        }
        r.expect_end()?;
        Self::new(layers)
    }
}

fn out_extent(input: usize, pad: usize, k: usize, stride: usize) -> Result<usize> {
    let padded = input + 2 * pad;
    if padded < k {
        return Err(Error::Degenerate(format!("input extent {input} (+2x{pad} pad) smaller than kernel {k}")));
    }
    Ok((padded - k) / stride + 1)
}

/// im2col followed by a blocked matrix product.
pub(crate) fn conv_forward(x: &Activation, c: &Conv) -> Result<Activation> {
    if x.c != c.in_c {
        return Err(Error::DimensionMismatch(format!("convolution expects {} channels, got {}", c.in_c, x.c)));
    }
    let oh = out_extent(x.h, c.pad_h, c.kh, c.stride_h)?;
    let ow = out_extent(x.w, c.pad_w, c.kw, c.stride_w)?;
    let ohw = oh * ow;
    let kdim = c.in_c * c.kh * c.kw;
    let mut cols = vec![0f32; kdim * ohw];
    for ci in 0..c.in_c {
        let plane = &x.data[ci * x.h * x.w..(ci + 1) * x.h * x.w];
        for ky in 0..c.kh {
            for kx in 0..c.kw {
                let row = (ci * c.kh + ky) * c.kw + kx;
                let dst = &mut cols[row * ohw..(row + 1) * ohw];
                for oy in 0..oh {
                    let iy = (oy * c.stride_h + ky) as isize - c.pad_h as isize;
                    if iy < 0 || iy >= x.h as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * x.w..(iy as usize + 1) * x.w];
                    for ox in 0..ow {
                        let ix = (ox * c.stride_w + kx) as isize - c.pad_w as isize;
                        if ix >= 0 && ix < x.w as isize {
                            dst[oy * ow + ox] = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    let mut out = vec![0f32; c.out_c * ohw];
    for oc in 0..c.out_c {
        let acc = &mut out[oc * ohw..(oc + 1) * ohw];
        acc.fill(c.biases[oc]);
        let wrow = &c.weights[oc * kdim..(oc + 1) * kdim];
        for (k, &wk) in wrow.iter().enumerate() {
            if wk == 0.0 {
                continue;
            }
            let col = &cols[k * ohw..(k + 1) * ohw];
            for (a, &v) in acc.iter_mut().zip(col) {
                *a += wk * v;
            }
        }
    }
    Ok(Activation { c: c.out_c, h: oh, w: ow, data: out })
}

fn relu_inplace(v: &mut [f32]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn pool_forward(x: &Activation, p: &Pool) -> Result<Activation> {
    let oh = out_extent(x.h, 0, p.kh, p.stride_h)?;
    let ow = out_extent(x.w, 0, p.kw, p.stride_w)?;
    let mut out = Vec::with_capacity(x.c * oh * ow);
    for ch in 0..x.c {
        let plane = &x.data[ch * x.h * x.w..(ch + 1) * x.h * x.w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f32::NEG_INFINITY;
                for ky in 0..p.kh {
                    let row = (oy * p.stride_h + ky) * x.w;
                    for kx in 0..p.kw {
                        m = m.max(plane[row + ox * p.stride_w + kx]);
                    }
                }
                out.push(m);
            }
        }
    }
    Ok(Activation { c: x.c, h: oh, w: ow, data: out })
}

fn fc_forward(x: &Activation, f: &Fc) -> Result<Activation> {
    if x.data.len() != f.in_dim {
        return Err(Error::DimensionMismatch(format!(
            "fully-connected layer expects {} inputs, got {} ({}x{}x{})",
            f.in_dim,
            x.data.len(),
            x.c,
            x.h,
            x.w
        )));
    }
    let out = (0..f.out_dim)
        .map(|o| {
            let row = &f.weights[o * f.in_dim..(o + 1) * f.in_dim];
            f.biases[o] + row.iter().zip(&x.data).map(|(w, v)| w * v).sum::<f32>()
        })
        .collect();
    Ok(Activation { c: f.out_dim, h: 1, w: 1, data: out })
}
