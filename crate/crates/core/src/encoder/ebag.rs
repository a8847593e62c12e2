//! `.ebag` container: one slide's embeddings in a flat little-endian layout.
//!
//! ```text
//! magic "EBAG" | version u16 = 1 | id_len u16 | slide_id utf-8
//! n u32 | dim u32 | reserved u64 = 0
//! coords: n × (x u32, y u32)
//! matrix: n·dim × f32, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::bag::EmbeddingBag;
use crate::error::{Error, Result};

pub const EBAG_MAGIC: &[u8; 4] = b"EBAG";
pub const EBAG_VERSION: u16 = 1;
pub const EBAG_EXTENSION: &str = "ebag";

/// Size in bytes of the encoded bag.
pub fn encoded_len(slide_id_len: usize, n: usize, dim: usize) -> usize {
    4 + 2 + 2 + slide_id_len + 4 + 4 + 8 + n * 8 + n * dim * 4
}

pub fn encode_bag(bag: &EmbeddingBag) -> Result<Vec<u8>> {
    bag.validate()?;
    let id = bag.slide_id.as_bytes();
    let id_len = u16::try_from(id.len())
        .map_err(|_| Error::Format(format!("slide_id of {} bytes exceeds u16", id.len())))?;
    let n = u32::try_from(bag.n()).map_err(|_| Error::Format("row count exceeds u32".into()))?;
    let dim = u32::try_from(bag.dim()).map_err(|_| Error::Format("dimension exceeds u32".into()))?;

    let mut buf = Vec::with_capacity(encoded_len(id.len(), bag.n(), bag.dim()));
    buf.extend_from_slice(EBAG_MAGIC);
    buf.extend_from_slice(&EBAG_VERSION.to_le_bytes());
    buf.extend_from_slice(&id_len.to_le_bytes());
    buf.extend_from_slice(id);
    buf.extend_from_slice(&n.to_le_bytes());
    buf.extend_from_slice(&dim.to_le_bytes());
    buf.extend_from_slice(&0u64.to_le_bytes());
    for &(x, y) in &bag.coords {
        buf.extend_from_slice(&x.to_le_bytes());
        buf.extend_from_slice(&y.to_le_bytes());
    }
    for v in bag.matrix.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

/// Writes `bag` and returns the number of bytes written.
pub fn write_bag<W: Write>(bag: &EmbeddingBag, mut sink: W) -> Result<usize> {
    let buf = encode_bag(bag)?;
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(buf.len())
}

pub fn read_bag<R: Read>(mut source: R) -> Result<EmbeddingBag> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf)?;
    decode_bag(&buf)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos + len;
        if end > self.buf.len() {
            return Err(Error::Truncated {
                expected: end,
                actual: self.buf.len(),
            });
        }
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_bag(buf: &[u8]) -> Result<EmbeddingBag> {
    let mut cur = Cursor { buf, pos: 0 };
    let magic = cur.take(4)?;
    if magic != EBAG_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}, expected \"EBAG\"", String::from_utf8_lossy(magic))));
    }
    let version = cur.u16()?;
    if version != EBAG_VERSION {
        return Err(Error::Format(format!("unsupported EBAG version {version}")));
    }
    let id_len = cur.u16()? as usize;
    let slide_id = std::str::from_utf8(cur.take(id_len)?)
        .map_err(|e| Error::Format(format!("slide_id is not UTF-8: {e}")))?
        .to_string();
    let n = cur.u32()? as usize;
    let dim = cur.u32()? as usize;
    let reserved = cur.u64()?;
    if reserved != 0 {
        return Err(Error::Format(format!("reserved field is {reserved}, expected 0")));
    }
    if n == 0 {
        return Err(Error::EmptyBag(slide_id));
    }
    if dim == 0 {
        return Err(Error::Format("dimension 0".into()));
    }

    let expected = encoded_len(id_len, n, dim);
    if buf.len() != expected {
        return Err(Error::Truncated {
            expected,
            actual: buf.len(),
        });
    }

    let coords = (0..n)
        .map(|_| Ok((cur.u32()?, cur.u32()?)))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f32> = cur
        .take(n * dim * 4)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let matrix = Array2::from_shape_vec((n, dim), values).expect("length checked");
    EmbeddingBag::new(slide_id, coords, matrix)
}

pub fn save_bag(bag: &EmbeddingBag, path: impl AsRef<Path>) -> Result<usize> {
    write_bag(bag, BufWriter::new(File::create(path)?))
}

pub fn load_bag(path: impl AsRef<Path>) -> Result<EmbeddingBag> {
    read_bag(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small_bag() -> EmbeddingBag {
        EmbeddingBag::from_rows("s1", &[vec![1.0, -2.5, 3.25], vec![0.0, f32::MIN_POSITIVE, -0.0]]).unwrap()
    }

    #[test]
    fn byte_count_follows_layout() {
        // 4 magic + 2 version + 2 id_len + 2 id + 4 n + 4 dim + 8 reserved
        // + 2 coords * 8 + 6 floats * 4
        let bag = small_bag();
        let mut buf = Vec::new();
        let written = write_bag(&bag, &mut buf).unwrap();
        assert_eq!(written, 64 + 2);
        assert_eq!(written, buf.len());
        assert_eq!(&buf[..4], b"EBAG");
        assert_eq!(&buf[4..6], &[1, 0]);
        assert_eq!(&buf[6..8], &[2, 0]);
        assert_eq!(&buf[8..10], b"s1");
        assert_eq!(&buf[10..14], &[2, 0, 0, 0]);
        assert_eq!(&buf[14..18], &[3, 0, 0, 0]);
        assert_eq!(&buf[18..26], &[0; 8]);
    }

    #[test]
    fn zero_payload() {
        let bag = EmbeddingBag::from_rows("z", &[vec![0.0]]).unwrap();
        let buf = encode_bag(&bag).unwrap();
        assert_eq!(&buf[buf.len() - 4..], &[0, 0, 0, 0]);
    }

    #[test]
    fn round_trip_keeps_negative_zero() {
        let bag = small_bag();
        let back = decode_bag(&encode_bag(&bag).unwrap()).unwrap();
        assert_eq!(back, bag);
        assert!(back.matrix[[1, 2]].is_sign_negative());
    }

    #[test]
    fn rejects_bad_streams() {
        let mut buf = encode_bag(&small_bag()).unwrap();
        let mut bad_magic = buf.clone();
        bad_magic[3] = b'X';
        assert!(matches!(decode_bag(&bad_magic), Err(Error::Format(_))));

        let truncated = &buf[..buf.len() - 6];
        assert!(matches!(decode_bag(truncated), Err(Error::Truncated { .. })));
        assert!(matches!(decode_bag(&buf[..3]), Err(Error::Truncated { .. })));

        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(decode_bag(&long), Err(Error::Truncated { .. })));

        let nan = f32::NAN.to_le_bytes();
        let len = buf.len();
        buf[len - 4..].copy_from_slice(&nan);
        assert!(matches!(decode_bag(&buf), Err(Error::Data(_))));
    }

    proptest! {
        #[test]
        fn encode_decode_is_identity(
            n in 1usize..=64,
            dim in 1usize..=64,
            id in "[a-zA-Z0-9_.-]{0,24}",
            seed in any::<u32>(),
        ) {
            let values: Vec<f32> = (0..n * dim)
                .map(|i| f32::from_bits((i as u32).wrapping_mul(2654435761) ^ seed) )
                .map(|v| if v.is_finite() { v } else { 1.5 })
                .collect();
            let coords = (0..n as u32).map(|k| (k * 256, seed % 1000)).collect();
            let bag = EmbeddingBag::new(id, coords, Array2::from_shape_vec((n, dim), values).unwrap()).unwrap();
            let bytes = encode_bag(&bag).unwrap();
            prop_assert_eq!(bytes.len(), encoded_len(bag.slide_id.len(), n, dim));
            let back = decode_bag(&bytes).unwrap();
            let same_bits = back.matrix.iter().zip(bag.matrix.iter()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same_bits);
            prop_assert_eq!(back.coords, bag.coords);
            prop_assert_eq!(back.slide_id, bag.slide_id);
        }
    }
}
