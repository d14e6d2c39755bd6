//! Binary PGM (P5) and PPM (P6) images, 8- or 16-bit.

use crate::error::{Error, Result};
use crate::image::ImagePlane;

/// Raw decoded samples, interleaved, as stored in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pnm {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

fn header_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Truncated("PNM header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn header_number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let tok = header_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Malformed(format!("bad PNM header field {:?}", String::from_utf8_lossy(tok))))
}

pub fn decode(bytes: &[u8]) -> Result<Pnm> {
    let mut pos = 0;
    let channels = match header_token(bytes, &mut pos)? {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(Error::Malformed(format!(
                "unsupported PNM type {:?} (binary P5/P6 only)",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let width = header_number(bytes, &mut pos)?;
    let height = header_number(bytes, &mut pos)?;
    let maxval = header_number(bytes, &mut pos)?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::Malformed(format!("PNM header {width}x{height} maxval {maxval}")));
    }
    // exactly one whitespace byte separates header and raster
    pos += 1;
    let n = width * height * channels;
    let wide = maxval > 255;
    let need = if wide { n * 2 } else { n };
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() < need {
        return Err(Error::Truncated(format!("PNM raster has {} bytes, needs {need}", raster.len())));
    }
    let samples = if wide {
        raster[..need].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    } else {
        raster[..need].iter().map(|&b| b as u16).collect()
    };
    Ok(Pnm { width, height, channels, maxval: maxval as u16, samples })
}

pub fn encode(pnm: &Pnm) -> Result<Vec<u8>> {
    let magic = match pnm.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::InvalidArgument(format!("PNM supports 1 or 3 channels, got {c}"))),
    };
    if pnm.samples.len() != pnm.width * pnm.height * pnm.channels {
        return Err(Error::DimensionMismatch("PNM sample count".into()));
    }
    let mut out = format!("{magic}\n{} {}\n{}\n", pnm.width, pnm.height, pnm.maxval).into_bytes();
    if pnm.maxval > 255 {
        for s in &pnm.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    } else {
        out.extend(pnm.samples.iter().map(|&s| s as u8));
    }
    Ok(out)
}

impl Pnm {
    pub fn to_image(&self) -> Result<ImagePlane> {
        let n = self.width * self.height;
        let scale = 1.0 / self.maxval as f32;
        let mut data = vec![0f32; n * self.channels];
        for (i, px) in self.samples.chunks_exact(self.channels).enumerate() {
            for (c, &s) in px.iter().enumerate() {
                data[c * n + i] = (s.min(self.maxval) as f32) * scale;
            }
        }
        ImagePlane::new(self.width, self.height, self.channels, data)
    }

    /// Quantizes an image to 8 bits.
    pub fn from_image(img: &ImagePlane) -> Self {
        let n = img.width() * img.height();
        let c = img.channels();
        let mut samples = vec![0u16; n * c];
        for ch in 0..c {
            let plane = img.plane(ch);
            for i in 0..n {
                samples[i * c + ch] = (plane[i].clamp(0.0, 1.0) * 255.0).round() as u16;
            }
        }
        Self { width: img.width(), height: img.height(), channels: c, maxval: 255, samples }
    }
}

pub fn read_image(bytes: &[u8]) -> Result<ImagePlane> {
    decode(bytes)?.to_image()
}

pub fn write_image(img: &ImagePlane) -> Result<Vec<u8>> {
    encode(&Pnm::from_image(img))
}

/// Single-channel integer labels, e.g. proposal partitions or label maps.
pub fn read_labels(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let pnm = decode(bytes)?;
    if pnm.channels != 1 {
        return Err(Error::InvalidArgument("label maps must be single-channel PGM".into()));
    }
    Ok((pnm.width, pnm.height, pnm.samples))
}

/// Writes labels as a 16-bit PGM (maxval 65535).
pub fn write_labels16(width: usize, height: usize, labels: &[u16]) -> Result<Vec<u8>> {
    encode(&Pnm { width, height, channels: 1, maxval: 65535, samples: labels.to_vec() })
}
