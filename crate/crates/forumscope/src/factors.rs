//! Binary factor files.
//!
//! Layout: magic `CPF1`, then `I`, `J`, `K`, `R` as little-endian `u32`
//! (20 header bytes), then `U`, `T` and `W` row-major as little-endian `f64`.

use std::io::{Read, Write};

use forumscope_core::linalg::Matrix;
use forumscope_core::tensor::CpModel;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CPF1";
pub const HEADER_LEN: usize = 20;

pub fn encode(model: &CpModel) -> Result<Vec<u8>> {
    let (ni, nj, nk) = model.shape();
    let dims = [ni, nj, nk, model.rank];
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * model.rank * (ni + nj + nk));
    out.extend_from_slice(MAGIC);
    for d in dims {
        let d = u32::try_from(d).map_err(|_| Error::FactorFile(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for m in [&model.users, &model.threads, &model.weeks] {
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<CpModel> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::FactorFile("missing CPF1 header".into()));
    }
    let dim = |ix: usize| u32::from_le_bytes(bytes[4 + 4 * ix..8 + 4 * ix].try_into().unwrap()) as usize;
    let (ni, nj, nk, rank) = (dim(0), dim(1), dim(2), dim(3));
    let cells = (ni + nj + nk) * rank;
    if bytes.len() != HEADER_LEN + 8 * cells {
        return Err(Error::FactorFile(format!(
            "expected {} bytes for shape ({ni}, {nj}, {nk}) rank {rank}, found {}",
            HEADER_LEN + 8 * cells,
            bytes.len()
        )));
    }
    let mut values = bytes[HEADER_LEN..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |rows: usize| Matrix::from_vec(rows, rank, values.by_ref().take(rows * rank).collect());
    let users = take(ni);
    let threads = take(nj);
    let weeks = take(nk);
    Ok(CpModel::new(users, threads, weeks)?)
}

pub fn write(out: &mut impl Write, model: &CpModel) -> Result<()> {
    out.write_all(&encode(model)?).map_err(|e| Error::io("<factors>", e))
}

pub fn read(input: &mut impl Read) -> Result<CpModel> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(|e| Error::io("<factors>", e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let model = CpModel::random((4, 3, 2), 2, 5);
        let bytes = encode(&model).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 8 * 2 * 9);
        assert_eq!(&bytes[..4], b"CPF1");
        assert_eq!(&bytes[4..8], &4u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &2u32.to_le_bytes());
        let back = decode(&bytes).unwrap();
        assert_eq!(back.users, model.users);
        assert_eq!(back.threads, model.threads);
        assert_eq!(back.weeks, model.weeks);
    }

    #[test]
    fn truncated_file_rejected() {
        let bytes = encode(&CpModel::random((2, 2, 2), 1, 1)).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode(b"CPF2").is_err());
    }
}
