//! Weight files: a 16-byte header (`b"WSBW"`, format version `u32`,
//! parameter count `u64`, all little-endian) followed by the parameters as
//! little-endian `f32` in canonical order.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"WSBW";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

pub fn encode(params: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * params.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(*p as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedHeader);
    }
    if bytes[..4] != MAGIC {
        return Err(Error::BadWeightMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count * 4 {
        return Err(Error::Corrupt(format!(
            "weight payload holds {} bytes, header declares {count} parameters",
            payload.len()
        )));
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect())
}

pub fn write(path: &Path, params: &[f64]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(params)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let bytes = encode(&[1.0, -0.5]);
        assert_eq!(bytes.len(), 16 + 8);
        assert_eq!(&bytes[..4], b"WSBW");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
    }

    #[test]
    fn rejects_corruption() {
        let mut bytes = encode(&[1.0, 2.0, 3.0]);
        assert!(matches!(decode(&bytes[..10]), Err(Error::TruncatedHeader)));
        assert!(matches!(decode(&bytes[..20]), Err(Error::Corrupt(_))));
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::BadWeightMagic)));
    }

    proptest! {
        #[test]
        fn f32_values_round_trip_exactly(v in prop::collection::vec(any::<f32>().prop_filter("finite", |x| x.is_finite()), 0..64)) {
            let params: Vec<f64> = v.iter().map(|&x| x as f64).collect();
            prop_assert_eq!(decode(&encode(&params)).unwrap(), params);
        }
    }
}
