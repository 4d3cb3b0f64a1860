//! Binary frame cache.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "EIDS" | version u16 | split u8 | n_rows u64 | n_cols u64
//! | n_cols × (name_len u32, UTF-8 bytes)
//! | n_rows·n_cols × f32 (row-major)
//! | n_rows × u8 binary labels | n_rows × u8 class labels
//! | CRC-32 of everything above, u32
//! ```

use std::path::Path;

use super::frame::{FeatureFrame, Split};
use super::{DataError, Result};

pub const FRAME_MAGIC: &[u8; 4] = b"EIDS";
pub const FRAME_VERSION: u16 = 1;

pub fn encode_frame(frame: &FeatureFrame) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + frame.matrix().len() * 4 + frame.n_rows() * 2);
    out.extend_from_slice(FRAME_MAGIC);
    out.extend_from_slice(&FRAME_VERSION.to_le_bytes());
    out.push(match frame.split() {
        Split::Train => 0,
        Split::Test => 1,
    });
    out.extend_from_slice(&(frame.n_rows() as u64).to_le_bytes());
    out.extend_from_slice(&(frame.n_features() as u64).to_le_bytes());
    for name in frame.feature_names() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for v in frame.matrix() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(frame.binary_labels());
    out.extend_from_slice(frame.class_labels());
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| DataError::Format("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_frame(bytes: &[u8]) -> Result<FeatureFrame> {
    if bytes.len() < 4 || &bytes[..4] != FRAME_MAGIC {
        return Err(DataError::BadMagic);
    }
    if bytes.len() < 4 + 2 + 4 {
        return Err(DataError::Checksum);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(DataError::Checksum);
    }
    let version = u16::from_le_bytes([body[4], body[5]]);
    if version != FRAME_VERSION {
        return Err(DataError::UnsupportedVersion(version));
    }
    let mut cur = Cursor { buf: body, pos: 6 };
    let split = match cur.take(1)?[0] {
        0 => Split::Train,
        1 => Split::Test,
        t => return Err(DataError::Format(format!("unknown split tag {t}"))),
    };
    let n_rows = cur.u64()? as usize;
    let n_cols = cur.u64()? as usize;
    let mut names = Vec::with_capacity(n_cols.min(1024));
    for _ in 0..n_cols {
        let len = cur.u32()? as usize;
        let raw = cur.take(len)?;
        names.push(
            std::str::from_utf8(raw)
                .map_err(|_| DataError::Format("feature name is not UTF-8".into()))?
                .to_string(),
        );
    }
    let cells = n_rows
        .checked_mul(n_cols)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| DataError::Format("dimensions overflow".into()))?;
    let matrix = cur
        .take(cells)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let binary = cur.take(n_rows)?.to_vec();
    let classes = cur.take(n_rows)?.to_vec();
    if cur.pos != body.len() {
        return Err(DataError::Format("trailing bytes before checksum".into()));
    }
    FeatureFrame::new(names, matrix, binary, classes, split)
}

pub fn save_frame(frame: &FeatureFrame, path: &Path) -> Result<()> {
    std::fs::write(path, encode_frame(frame)).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_frame(path: &Path) -> Result<FeatureFrame> {
    let bytes = std::fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_frame(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> FeatureFrame {
        FeatureFrame::new(
            vec!["dur".into(), "ct_srv_src".into()],
            vec![0.0, 1.0, 0.25, f32::MIN_POSITIVE],
            vec![0, 1],
            vec![0, 9],
            Split::Test,
        )
        .unwrap()
    }

    #[test]
    fn truncated_file_fails_checksum() {
        let bytes = encode_frame(&sample());
        for cut in [1, 5, 13] {
            assert!(matches!(
                decode_frame(&bytes[..bytes.len() - cut]),
                Err(DataError::Checksum)
            ));
        }
    }

    #[test]
    fn wrong_magic_is_a_format_error() {
        let mut bytes = encode_frame(&sample());
        bytes[0] = b'X';
        assert!(matches!(decode_frame(&bytes), Err(DataError::BadMagic)));
    }

    #[test]
    fn flipped_payload_bit_fails_checksum() {
        let mut bytes = encode_frame(&sample());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x10;
        assert!(matches!(decode_frame(&bytes), Err(DataError::Checksum)));
    }

    #[test]
    fn version_mismatch_detected() {
        let mut bytes = encode_frame(&sample());
        bytes[4] = 9;
        let n = bytes.len();
        let crc = crc32fast::hash(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(decode_frame(&bytes), Err(DataError::UnsupportedVersion(9))));
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(
            rows in 1usize..20,
            cols in 1usize..6,
            seed in any::<u64>(),
            test_split in any::<bool>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let matrix: Vec<f32> = (0..rows * cols).map(|_| rng.gen()).collect();
            let classes: Vec<u8> = (0..rows).map(|_| rng.gen_range(0..10)).collect();
            let binary: Vec<u8> = classes.iter().map(|&c| u8::from(c != 0)).collect();
            let names = (0..cols).map(|j| format!("f{j}_é")).collect();
            let split = if test_split { Split::Test } else { Split::Train };
            let f = FeatureFrame::new(names, matrix, binary, classes, split).unwrap();
            let bytes = encode_frame(&f);
            let g = decode_frame(&bytes).unwrap();
            prop_assert_eq!(&g, &f);
            let bits = |fr: &FeatureFrame| fr.matrix().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&g), bits(&f));
            prop_assert_eq!(encode_frame(&g), bytes);
        }
    }
}
