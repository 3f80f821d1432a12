//! VEFT: a container of named little-endian `f32` tensors.
//!
//! ```text
//! "VEFT"  u16 version=1  u32 count
//! count × { u16 name_len, name (UTF-8), u8 rank, rank × u64 dim, Π dim × f32 }
//! u32 CRC-32 of every payload byte, in file order
//! ```
//! All integers are little-endian.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"VEFT";
pub const VERSION: u16 = 1;

pub type NamedTensor = (String, Tensor);

pub fn encode(tensors: &[NamedTensor]) -> Result<Vec<u8>> {
    let mut names = HashSet::new();
    let mut out = Vec::with_capacity(14 + tensors.iter().map(|(n, t)| 11 + n.len() + 8 * t.rank() + 4 * t.numel()).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let count = u32::try_from(tensors.len()).map_err(|_| Error::Contract("too many tensors for one container".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    let mut crc = crc32fast::Hasher::new();
    for (name, t) in tensors {
        if !names.insert(name.as_str()) {
            return Err(Error::Contract(format!("duplicate tensor name {name:?}")));
        }
        let len = u16::try_from(name.len()).map_err(|_| Error::Contract(format!("tensor name too long: {} bytes", name.len())))?;
        let rank = u8::try_from(t.rank()).map_err(|_| Error::Contract(format!("tensor {name:?} has rank {}", t.rank())))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(rank);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        let start = out.len();
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        crc.update(&out[start..]);
    }
    out.extend_from_slice(&crc.finalize().to_le_bytes());
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let remaining = self.bytes.len() - self.pos;
        if n > remaining {
            return Err(Error::Corruption {
                offset: self.pos as u64,
                detail: format!("truncated: {what} needs {n} bytes, {remaining} left"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c.take(4, "magic").map_err(|_| Error::format("offset 0", "not a VEFT container (too short)"))?;
    if magic != MAGIC {
        return Err(Error::format("offset 0", format!("bad magic {magic:?}")));
    }
    let version = u16::from_le_bytes(c.array("version")?);
    if version != VERSION {
        return Err(Error::format("offset 4", format!("version {version}, this build reads {VERSION}")));
    }
    let count = u32::from_le_bytes(c.array("tensor count")?);
    let mut crc = crc32fast::Hasher::new();
    let mut names = HashSet::new();
    let mut out = Vec::new();
    for i in 0..count {
        let at = c.pos;
        let len = u16::from_le_bytes(c.array("name length")?) as usize;
        let name = std::str::from_utf8(c.take(len, "name")?)
            .map_err(|_| Error::format(format!("offset {}", at + 2), format!("tensor {i} name is not UTF-8")))?
            .to_owned();
        if !names.insert(name.clone()) {
            return Err(Error::format(format!("offset {at}"), format!("duplicate tensor name {name:?}")));
        }
        let rank = c.array::<1>("rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(c.array("dimension")?));
        }
        let numel = shape.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d));
        let bytes_needed = numel.and_then(|n| n.checked_mul(4)).and_then(|n| usize::try_from(n).ok());
        let Some(bytes_needed) = bytes_needed else {
            return Err(Error::Corruption { offset: at as u64, detail: format!("tensor {name:?} shape {shape:?} overflows") });
        };
        let payload = c.take(bytes_needed, "payload")?;
        crc.update(payload);
        let data = payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("chunk of 4"))).collect();
        let shape = shape.into_iter().map(|d| d as usize).collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    let crc_at = c.pos as u64;
    let stored = u32::from_le_bytes(c.array("checksum")?);
    let computed = crc.finalize();
    if stored != computed {
        return Err(Error::Corruption {
            offset: crc_at,
            detail: format!("payload checksum {computed:08x} does not match stored {stored:08x}"),
        });
    }
    if c.pos != bytes.len() {
        return Err(Error::Corruption { offset: c.pos as u64, detail: format!("{} trailing bytes", bytes.len() - c.pos) });
    }
    Ok(out)
}

pub fn write(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    let bytes = encode(tensors)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a container; corruption and format errors name the file.
pub fn read(path: &Path) -> Result<Vec<NamedTensor>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format { location, detail } => Error::Format { location: format!("{}: {location}", path.display()), detail },
        Error::Corruption { offset, detail } => Error::Corruption { offset, detail: format!("{}: {detail}", path.display()) },
        other => other,
    })
}

/// Looks up a tensor by name.
pub fn find<'a>(tensors: &'a [NamedTensor], name: &str) -> Option<&'a Tensor> {
    tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn layout_is_exact() {
        let t = Tensor::new(vec![1, 2], vec![1.0, -2.5]).unwrap();
        let bytes = encode(&[("ab".into(), t)]).unwrap();
        let mut expected = b"VEFT\x01\x00\x01\x00\x00\x00\x02\x00ab\x02".to_vec();
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&2u64.to_le_bytes());
        let payload: Vec<u8> = [1.0f32, -2.5].iter().flat_map(|v| v.to_le_bytes()).collect();
        expected.extend_from_slice(&payload);
        expected.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn small_and_empty_round_trips() {
        let t = Tensor::new(vec![2, 3], vec![0.1, -0.0, f32::MIN_POSITIVE, 1e30, -7.25, 3.0]).unwrap();
        let back = decode(&encode(&[("x".into(), t.clone())]).unwrap()).unwrap();
        assert_eq!(back[0].0, "x");
        assert_eq!(back[0].1.shape(), t.shape());
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back[0].1), bits(&t));
        assert!(decode(&encode(&[]).unwrap()).unwrap().is_empty());
    }

    #[test]
    fn errors() {
        let good = encode(&[("g".into(), Tensor::zeros(&[2, 2]))]).unwrap();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode(&bad_magic), Err(Error::Format { .. })));
        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(matches!(decode(&bad_version), Err(Error::Format { .. })));
        assert!(matches!(decode(b"VE"), Err(Error::Format { .. })));

        let mut flipped = good.clone();
        let payload_at = good.len() - 4 - 16;
        flipped[payload_at + 3] ^= 0x40;
        assert!(matches!(decode(&flipped), Err(Error::Corruption { .. })));

        match decode(&good[..good.len() - 10]) {
            Err(Error::Corruption { offset, .. }) => assert_eq!(offset as usize, payload_at),
            other => panic!("{other:?}"),
        }
        let mut trailing = good.clone();
        trailing.push(0);
        assert!(matches!(decode(&trailing), Err(Error::Corruption { .. })));

        let dup = [("a".to_string(), Tensor::zeros(&[1])), ("a".to_string(), Tensor::zeros(&[1]))];
        assert!(matches!(encode(&dup), Err(Error::Contract(_))));
    }

    #[test]
    fn file_errors_name_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.veft");
        std::fs::write(&path, b"nope").unwrap();
        let err = read(&path).unwrap_err();
        assert!(err.to_string().contains("x.veft"), "{err}");
        assert!(matches!(read(&dir.path().join("missing.veft")), Err(Error::Io { .. })));
    }

    fn shape() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(0usize..=8, 0..=4).prop_filter("at most 64 elements", |s| s.iter().product::<usize>() <= 64)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn round_trip_is_bit_exact(
            specs in prop::collection::vec((shape(), "[a-z_]{0,6}", any::<u64>()), 0..4),
        ) {
            let mut tensors = Vec::new();
            for (i, (shape, name, seed)) in specs.into_iter().enumerate() {
                let n: usize = shape.iter().product();
                // raw bit patterns, NaN payloads and infinities included
                let mut x = seed;
                let data = (0..n).map(|_| {
                    x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    f32::from_bits((x >> 32) as u32)
                }).collect();
                tensors.push((format!("{name}{i}"), Tensor::new(shape, data).unwrap()));
            }
            let bytes = encode(&tensors).unwrap();
            let back = decode(&bytes).unwrap();
            prop_assert_eq!(back.len(), tensors.len());
            for ((na, ta), (nb, tb)) in tensors.iter().zip(&back) {
                prop_assert_eq!(na, nb);
                prop_assert_eq!(ta.shape(), tb.shape());
                let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                prop_assert_eq!(bits(ta), bits(tb));
            }
            prop_assert_eq!(encode(&back).unwrap(), bytes);
        }
    }
}
