//! `MLVP` parameter checkpoints.
//!
//! Layout (little-endian): magic `MLVP`, `u32` version, `u32` d_in,
//! `u32` d_hidden, `u32` d_out, then `w1, b1, w2, b2` as row-major `f64`.

use std::fs;
use std::path::Path;

use super::MlpParams;
use crate::error::{Error, Result};
use crate::numkit::{Mat64, Vec64};

const MAGIC: [u8; 4] = *b"MLVP";
const VERSION: u32 = 1;

pub fn params_to_bytes(params: &MlpParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 8 * params.num_params());
    out.extend_from_slice(&MAGIC);
    for v in [
        VERSION,
        params.d_in() as u32,
        params.d_hidden() as u32,
        params.d_out() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for t in params.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn params_from_bytes(bytes: &[u8]) -> Result<MlpParams> {
    let mut cur = bytes;
    let mut take = |n: usize, what: &'static str| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(Error::TruncatedFile(what));
        }
        let (head, tail) = cur.split_at(n);
        cur = tail;
        Ok(head)
    };
    let magic: [u8; 4] = take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic {
            expected: MAGIC,
            found: magic,
        });
    }
    let mut header = [0u32; 4];
    for h in &mut header {
        *h = u32::from_le_bytes(take(4, "header")?.try_into().unwrap());
    }
    let [version, d_in, d_hidden, d_out] = header.map(|v| v as usize);
    if version != VERSION as usize {
        return Err(Error::VersionUnsupported(version as u32));
    }
    let mut floats = |n: usize| -> Result<Vec<f64>> {
        Ok(take(8 * n, "parameters")?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let w1 = Mat64::from_vec(d_in, d_hidden, floats(d_in * d_hidden)?)?;
    let b1 = Vec64::new(floats(d_hidden)?)?;
    let w2 = Mat64::from_vec(d_hidden, d_out, floats(d_hidden * d_out)?)?;
    let b2 = Vec64::new(floats(d_out)?)?;
    if !cur.is_empty() {
        return Err(Error::TrailingData(cur.len()));
    }
    Ok(MlpParams { w1, b1, w2, b2 })
}

pub fn save_params(path: impl AsRef<Path>, params: &MlpParams) -> Result<()> {
    crate::io_util::write_atomic(path.as_ref(), &params_to_bytes(params))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<MlpParams> {
    params_from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let p = MlpParams::init(&mut Rng::new(12), 7, 5, 3);
        let bytes = params_to_bytes(&p);
        assert_eq!(&bytes[..4], b"MLVP");
        assert_eq!(bytes.len(), 20 + 8 * p.num_params());
        assert_eq!(params_from_bytes(&bytes).unwrap(), p);
    }

    #[test]
    fn rejects_corruption() {
        let p = MlpParams::init(&mut Rng::new(1), 2, 2, 2);
        let mut bytes = params_to_bytes(&p);
        assert!(matches!(
            params_from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::TruncatedFile(_))
        ));
        bytes.push(0);
        assert!(matches!(params_from_bytes(&bytes), Err(Error::TrailingData(1))));
        bytes[0] = b'X';
        assert!(matches!(params_from_bytes(&bytes), Err(Error::BadMagic { .. })));
        let mut v2 = params_to_bytes(&p);
        v2[4] = 2;
        assert!(matches!(params_from_bytes(&v2), Err(Error::VersionUnsupported(2))));
    }
}
