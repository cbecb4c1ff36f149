//! `UPR1` perturbation files.
//!
//! Layout (little-endian): magic `UPR1` | u8 mode (0 sample-wise, 1 class-wise)
//! | u32 field count | u16 height | u16 width | u8 channels | u8 bounded flag |
//! f64 epsilon (0 when unbounded) | fields as f64, field after field.

use std::fs;
use std::path::Path;

use super::{NoiseMode, Perturbation};
use crate::error::{Error, Result};
use crate::image::Dims;

pub const UPR_MAGIC: &[u8; 4] = b"UPR1";
const HEADER: usize = 4 + 1 + 4 + 2 + 2 + 1 + 1 + 8;

pub fn encode_upr(p: &Perturbation) -> Result<Vec<u8>> {
    let d = p.dims();
    let to16 = |v: usize| u16::try_from(v).map_err(|_| Error::Format("image side exceeds u16".into()));
    let mut out = Vec::with_capacity(HEADER + 8 * d.len() * p.fields().len());
    out.extend_from_slice(UPR_MAGIC);
    out.push(match p.mode() {
        NoiseMode::SampleWise => 0,
        NoiseMode::ClassWise => 1,
    });
    out.extend_from_slice(&(p.fields().len() as u32).to_le_bytes());
    out.extend_from_slice(&to16(d.height)?.to_le_bytes());
    out.extend_from_slice(&to16(d.width)?.to_le_bytes());
    out.push(d.channels as u8);
    out.push(u8::from(p.epsilon().is_some()));
    out.extend_from_slice(&p.epsilon().unwrap_or(0.0).to_le_bytes());
    for v in p.fields().iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_upr(bytes: &[u8]) -> Result<Perturbation> {
    if bytes.len() < HEADER {
        return Err(Error::Format("truncated perturbation header".into()));
    }
    if &bytes[..4] != UPR_MAGIC {
        return Err(Error::Format("bad perturbation magic".into()));
    }
    let mode = match bytes[4] {
        0 => NoiseMode::SampleWise,
        1 => NoiseMode::ClassWise,
        m => return Err(Error::Format(format!("unknown noise mode {m}"))),
    };
    let count = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let dims = Dims::new(
        u16::from_le_bytes([bytes[9], bytes[10]]) as usize,
        u16::from_le_bytes([bytes[11], bytes[12]]) as usize,
        bytes[13] as usize,
    );
    let bounded = bytes[14] != 0;
    let eps = f64::from_le_bytes(bytes[15..23].try_into().unwrap());
    let body = &bytes[HEADER..];
    if body.len() != count * dims.len() * 8 {
        return Err(Error::Format(format!(
            "expected {} field bytes, found {}",
            count * dims.len() * 8,
            body.len()
        )));
    }
    let values: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let fields = if dims.is_empty() {
        vec![Vec::new(); count]
    } else {
        values.chunks_exact(dims.len()).map(<[f64]>::to_vec).collect()
    };
    Perturbation::new(mode, dims, fields, bounded.then_some(eps))
}

pub fn save_upr(p: &Perturbation, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_upr(p)?)?;
    Ok(())
}

pub fn load_upr(path: impl AsRef<Path>) -> Result<Perturbation> {
    decode_upr(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip(values in proptest::collection::vec(-1.0f64..1.0, 12), class_wise in any::<bool>(), eps in proptest::option::of(0.0f64..1.0)) {
            let mode = if class_wise { NoiseMode::ClassWise } else { NoiseMode::SampleWise };
            let fields = values.chunks(4).map(<[f64]>::to_vec).collect();
            let p = Perturbation::new(mode, Dims::new(2, 2, 1), fields, eps).unwrap();
            prop_assert_eq!(decode_upr(&encode_upr(&p).unwrap()).unwrap(), p);
        }
    }

    #[test]
    fn truncated_rejected() {
        let p = Perturbation::zeros(NoiseMode::SampleWise, Dims::new(2, 2, 1), 2, Some(0.1));
        let bytes = encode_upr(&p).unwrap();
        assert!(decode_upr(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_upr(b"UDS1").is_err());
    }
}
