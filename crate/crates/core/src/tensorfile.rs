//! The `FFLD` binary exchange format for feature fields.
//!
//! ```text
//! 0..4    "FFLD"
//! 4..6    version (u16 LE, 1)
//! 6..8    reserved, zero
//! 8..20   D, H, W (3 x u32 LE)
//! 20..32  stride, offsetX, offsetY (3 x f32 LE)
//! 32..36  scale (f32 LE)
//! 36..38  name length n (u16 LE)
//! 38..    n bytes of UTF-8 layer name
//! then    D*H*W f32 LE values, D-major (plane d, row y, column x)
//! ```

use crate::container::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::field::{FeatureField, FieldGeometry};

pub const TENSOR_MAGIC: [u8; 4] = *b"FFLD";
pub const TENSOR_VERSION: u16 = 1;

pub fn write_tensor(field: &FeatureField) -> Result<Vec<u8>> {
    let (d, h, w) = (field.dim(), field.grid_h(), field.grid_w());
    let dims = [d, h, w]
        .iter()
        .map(|&v| u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("dimension {v} exceeds u32"))))
        .collect::<Result<Vec<u32>>>()?;
    let mut out = ByteWriter::new();
    out.bytes(&TENSOR_MAGIC);
    out.u16(TENSOR_VERSION);
    out.u16(0);
    for v in dims {
        out.u32(v);
    }
    out.f32(field.stride());
    out.f32(field.offset().0);
    out.f32(field.offset().1);
    out.f32(field.scale());
    out.str16(field.source())?;
    let data = field.data();
    for c in 0..d {
        for cell in 0..h * w {
            out.f32(data[cell * d + c]);
        }
    }
    Ok(out.into_inner())
}

pub fn read_tensor(bytes: &[u8]) -> Result<FeatureField> {
    let mut r = ByteReader::new(bytes);
    let magic = r.magic()?;
    if magic != TENSOR_MAGIC {
        return Err(Error::BadMagic { expected: TENSOR_MAGIC, found: magic });
    }
    let version = r.u16()?;
    if version != TENSOR_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let _reserved = r.u16()?;
    let d = r.u32()? as usize;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let stride = r.f32()?;
    let offset = (r.f32()?, r.f32()?);
    let scale = r.f32()?;
    let name = r.str16()?;
    let n = d
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| Error::Malformed("tensor shape overflows".into()))?;
    if r.remaining() < n.saturating_mul(4) {
        return Err(Error::Truncated(format!(
            "payload has {} bytes, shape ({d},{h},{w}) needs {}",
            r.remaining(),
            n * 4
        )));
    }
    let planar = r.f32_vec(n)?;
    r.expect_end()?;
    let cells = h * w;
    let mut data = vec![0f32; n];
    for c in 0..d {
        for cell in 0..cells {
            data[cell * d + c] = planar[c * cells + cell];
        }
    }
    FeatureField::new(w, h, d, FieldGeometry { stride, offset, scale }, name, data)
}
