//! FBAG: a little-endian binary container for bag datasets.
//!
//! ```text
//! header   magic "FBAG" | version u32 | num_bags u64 | feature_dim u32 | num_classes u32 | split u8
//! record   bag_id u64 | label u32 | n u32 | n·feature_dim × f32
//! trailer  FNV-1a 64 checksum of every preceding byte, u64
//! ```

use std::fs;
use std::path::Path;

use super::{Bag, BagDataset, Split};
use crate::error::{Error, Result};

pub const FBAG_MAGIC: &[u8; 4] = b"FBAG";
pub const FBAG_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 4 + 4 + 1;

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

pub fn encode_bags(ds: &BagDataset) -> Vec<u8> {
    let payload: usize = ds.bags().iter().map(|b| 16 + 4 * b.features().len()).sum();
    let mut out = Vec::with_capacity(HEADER_LEN + payload + 8);
    out.extend_from_slice(FBAG_MAGIC);
    out.extend_from_slice(&FBAG_VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    out.extend_from_slice(&(ds.feature_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(ds.num_classes() as u32).to_le_bytes());
    out.push(match ds.split() {
        Split::Train => 0,
        Split::Test => 1,
    });
    for bag in ds.bags() {
        out.extend_from_slice(&bag.bag_id.to_le_bytes());
        out.extend_from_slice(&(bag.label as u32).to_le_bytes());
        out.extend_from_slice(&(bag.len() as u32).to_le_bytes());
        for x in bag.features() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let sum = fnv1a64(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode_bags(bytes: &[u8]) -> Result<BagDataset> {
    let header_err = || Error::Malformed("FBAG header is incomplete".into());
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4).ok_or_else(header_err)? != FBAG_MAGIC {
        return Err(Error::Malformed("not an FBAG container (bad magic)".into()));
    }
    let version = cur.u32().ok_or_else(header_err)?;
    if version != FBAG_VERSION {
        return Err(Error::VersionMismatch { expected: FBAG_VERSION, found: version });
    }
    let num_bags = cur.u64().ok_or_else(header_err)? as usize;
    let dim = cur.u32().ok_or_else(header_err)? as usize;
    let num_classes = cur.u32().ok_or_else(header_err)? as usize;
    let split = match cur.take(1).ok_or_else(header_err)?[0] {
        0 => Split::Train,
        1 => Split::Test,
        other => return Err(Error::Malformed(format!("unknown split tag {other}"))),
    };

    let mut bags = Vec::with_capacity(num_bags.min(1 << 20));
    for bag_index in 0..num_bags {
        let truncated = || Error::TruncatedBag { bag_index };
        let bag_id = cur.u64().ok_or_else(truncated)?;
        let label = cur.u32().ok_or_else(truncated)? as usize;
        let n = cur.u32().ok_or_else(truncated)? as usize;
        let len = n.checked_mul(dim).and_then(|x| x.checked_mul(4)).ok_or_else(truncated)?;
        let raw = cur.take(len).ok_or_else(truncated)?;
        let features = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        bags.push(Bag::new(bag_id, label, dim, features)?);
    }

    let body_end = cur.pos;
    let stored =
        cur.u64().ok_or_else(|| Error::LengthMismatch(format!("checksum trailer missing after {num_bags} bags")))?;
    if cur.pos != bytes.len() {
        return Err(Error::LengthMismatch(format!("{} trailing bytes after checksum", bytes.len() - cur.pos)));
    }
    let computed = fnv1a64(&bytes[..body_end]);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }
    BagDataset::new(bags, num_classes, dim, split)
}

pub fn save_bags(ds: &BagDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_bags(ds)).map_err(|e| Error::io(path, e))
}

pub fn load_bags(path: impl AsRef<Path>) -> Result<BagDataset> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bags(&bytes)
}
