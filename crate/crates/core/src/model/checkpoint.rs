//! `UMC1` model checkpoints.
//!
//! Layout (little-endian): magic `UMC1` | u8 architecture tag (0 softmax,
//! 1 mlp, 2 cnn) | u16 height | u16 width | u8 channels | u16 classes |
//! u32 width parameter (hidden units or filters, 0 for softmax) |
//! u64 parameter count | parameters as f64.

use std::fs;
use std::path::Path;

use super::{Architecture, Classifier};
use crate::error::{Error, Result};
use crate::image::Dims;

pub const UMC_MAGIC: &[u8; 4] = b"UMC1";
const HEADER: usize = 4 + 1 + 2 + 2 + 1 + 2 + 4 + 8;

pub fn encode_checkpoint(model: &Classifier) -> Result<Vec<u8>> {
    let (tag, width_param) = match model.architecture() {
        Architecture::SoftmaxRegression => (0u8, 0u32),
        Architecture::Mlp { hidden } => (1, hidden as u32),
        Architecture::SmallCnn { filters } => (2, filters as u32),
    };
    let d = model.dims();
    let to16 = |v: usize, what: &str| u16::try_from(v).map_err(|_| Error::Format(format!("{what} exceeds u16")));
    let mut out = Vec::with_capacity(HEADER + 8 * model.params().len());
    out.extend_from_slice(UMC_MAGIC);
    out.push(tag);
    out.extend_from_slice(&to16(d.height, "height")?.to_le_bytes());
    out.extend_from_slice(&to16(d.width, "width")?.to_le_bytes());
    out.push(d.channels as u8);
    out.extend_from_slice(&to16(model.class_count(), "classes")?.to_le_bytes());
    out.extend_from_slice(&width_param.to_le_bytes());
    out.extend_from_slice(&(model.params().len() as u64).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Classifier> {
    if bytes.len() < HEADER {
        return Err(Error::Format("truncated checkpoint header".into()));
    }
    if &bytes[..4] != UMC_MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]) as usize;
    let tag = bytes[4];
    let dims = Dims::new(u16_at(5), u16_at(7), bytes[9] as usize);
    let classes = u16_at(10);
    let width_param = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let arch = match tag {
        0 => Architecture::SoftmaxRegression,
        1 => Architecture::Mlp { hidden: width_param },
        2 => Architecture::SmallCnn { filters: width_param },
        t => return Err(Error::Format(format!("unknown architecture tag {t}"))),
    };
    let body = &bytes[HEADER..];
    if body.len() != count * 8 {
        return Err(Error::Format(format!("expected {} parameter bytes, found {}", count * 8, body.len())));
    }
    let params = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Classifier::from_params(arch, dims, classes, params).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_checkpoint(model: &Classifier, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Classifier> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = SeededRng::new(2);
        for arch in [Architecture::SoftmaxRegression, Architecture::mlp(), Architecture::small_cnn()] {
            let m = Classifier::new(arch, Dims::new(6, 4, 3), 5, &mut rng).unwrap();
            let back = decode_checkpoint(&encode_checkpoint(&m).unwrap()).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn corrupt_checkpoints_rejected() {
        let m = Classifier::zeros(Architecture::SoftmaxRegression, Dims::new(2, 2, 1), 2).unwrap();
        let bytes = encode_checkpoint(&m).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
        let mut bad_tag = bytes;
        bad_tag[4] = 9;
        assert!(decode_checkpoint(&bad_tag).is_err());
    }
}
