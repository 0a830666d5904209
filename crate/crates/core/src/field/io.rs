//! FLD1 binary field files.
//!
//! Layout: magic `FLD1`, then little-endian `u32` values `n`, `m`, tensor rank
//! `t` and the `t` tensor dims, then `m^n × slots` little-endian `f64` values,
//! lattice-point-major then slot.

use super::{Grid, Shape, TensorField};
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"FLD1";

pub fn encode(f: &TensorField) -> Vec<u8> {
    let dims = f.shape().dims();
    let mut out = Vec::with_capacity(16 + 4 * dims.len() + 8 * f.values().len());
    out.extend_from_slice(MAGIC);
    for v in [f.grid().dim(), f.grid().m(), dims.len()].into_iter().chain(dims.iter().copied()) {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in f.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<TensorField> {
    let mut cur = bytes;
    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic).map_err(|_| Error::Format("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let mut next_u32 = |what: &str| -> Result<usize> {
        let mut b = [0u8; 4];
        cur.read_exact(&mut b).map_err(|_| Error::Format(format!("truncated header reading {what}")))?;
        Ok(u32::from_le_bytes(b) as usize)
    };
    let n = next_u32("dimension")?;
    let m = next_u32("points per axis")?;
    let rank = next_u32("tensor rank")?;
    if rank > 4 {
        return Err(Error::Format(format!("tensor rank {rank} too large")));
    }
    let dims = (0..rank).map(|_| next_u32("tensor dim")).collect::<Result<Vec<_>>>()?;
    let grid = Grid::new(n, m).map_err(|e| Error::Format(e.to_string()))?;
    let shape = Shape::new(dims);
    let header = 16 + 4 * rank;
    let count = grid.len() * shape.slots();
    let payload = &bytes[header..];
    if payload.len() != 8 * count {
        return Err(Error::Format(format!("expected {} payload bytes, found {}", 8 * count, payload.len())));
    }
    let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    TensorField::from_values(grid, shape, values)
}

pub fn write_field(f: &TensorField, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(&encode(f))?;
    file.flush()?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<TensorField> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::random::band_limited;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = Grid::new(3, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let f = band_limited(g, Shape::matrix(2, 3), 2, 1.0, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.fld");
        write_field(&f, &path).unwrap();
        let back = read_field(&path).unwrap();
        assert_eq!(back.shape(), f.shape());
        assert!(back.values().iter().zip(f.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn header_layout() {
        let g = Grid::new(2, 8).unwrap();
        let f = TensorField::zeros(g, Shape::vector(2));
        let b = encode(&f);
        assert_eq!(&b[..4], b"FLD1");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 8);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[16..20].try_into().unwrap()), 2);
        assert_eq!(b.len(), 20 + 8 * 128);
    }

    #[test]
    fn malformed_files() {
        assert!(matches!(decode(b"FLD2\0\0\0\0"), Err(Error::Format(_))));
        assert!(matches!(decode(b"FL"), Err(Error::Format(_))));
        let g = Grid::new(2, 8).unwrap();
        let mut b = encode(&TensorField::zeros(g, Shape::scalar()));
        b.pop();
        assert!(matches!(decode(&b), Err(Error::Format(_))));
        let mut bad = encode(&TensorField::zeros(g, Shape::scalar()));
        bad[8] = 13;
        assert!(matches!(decode(&bad), Err(Error::Format(_))));
    }
}
