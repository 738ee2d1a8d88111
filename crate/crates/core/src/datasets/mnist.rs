//! MNIST in the IDX format: big-endian `u32` header fields, `u8` payload.
//! Each image becomes a single-instance bag of 784 pixels scaled to `[0, 1]`.
//! Files may be plain or gzip-compressed (`<name>.gz`).

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::{Bag, BagDataset, Split};
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Clone, Debug)]
pub struct MnistData {
    pub train: BagDataset,
    pub test: BagDataset,
}

/// Loads the four standard IDX files from `dir`.
pub fn load_mnist(dir: impl AsRef<Path>) -> Result<MnistData> {
    let dir = dir.as_ref();
    let train = load_pair(dir, TRAIN_IMAGES, TRAIN_LABELS, Split::Train, 0)?;
    let offset = train.len() as u64;
    let test = load_pair(dir, TEST_IMAGES, TEST_LABELS, Split::Test, offset)?;
    Ok(MnistData { train, test })
}

fn load_pair(dir: &Path, images: &str, labels: &str, split: Split, id_offset: u64) -> Result<BagDataset> {
    let (img_path, img_bytes) = read_maybe_gz(dir, images)?;
    let (lbl_path, lbl_bytes) = read_maybe_gz(dir, labels)?;
    let (dim, pixels) = parse_idx_images(&img_bytes, &img_path)?;
    let labels = parse_idx_labels(&lbl_bytes, &lbl_path)?;
    if labels.len() != pixels.len() / dim {
        return Err(Error::LengthMismatch(format!(
            "{} holds {} images but {} holds {} labels",
            img_path.display(),
            pixels.len() / dim,
            lbl_path.display(),
            labels.len()
        )));
    }
    let bags = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            if label > 9 {
                return Err(Error::Malformed(format!("label {label} at index {i} is not a digit")));
            }
            let features = pixels[i * dim..(i + 1) * dim].iter().map(|&p| f32::from(p) / 255.0).collect();
            Bag::new(id_offset + i as u64, label as usize, dim, features)
        })
        .collect::<Result<Vec<_>>>()?;
    BagDataset::new(bags, 10, dim, split)
}

fn read_maybe_gz(dir: &Path, name: &str) -> Result<(PathBuf, Vec<u8>)> {
    let plain = dir.join(name);
    if plain.is_file() {
        let bytes = fs::read(&plain).map_err(|e| Error::io(&plain, e))?;
        return Ok((plain, bytes));
    }
    let gz = dir.join(format!("{name}.gz"));
    if gz.is_file() {
        let file = fs::File::open(&gz).map_err(|e| Error::io(&gz, e))?;
        let mut bytes = Vec::new();
        GzDecoder::new(file).read_to_end(&mut bytes).map_err(|e| Error::io(&gz, e))?;
        return Ok((gz, bytes));
    }
    Err(Error::MissingFile(plain))
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes.get(at..at + 4).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]])).ok_or_else(|| Error::TruncatedPayload {
        path: path.to_path_buf(),
        needed: at + 4,
        found: bytes.len(),
    })
}

/// Returns `(pixels per image, flat pixel buffer)`.
pub fn parse_idx_images<'a>(bytes: &'a [u8], path: &Path) -> Result<(usize, &'a [u8])> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::MagicMismatch { path: path.to_path_buf(), expected: IMAGES_MAGIC, found: magic });
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let dim = rows * cols;
    if dim == 0 {
        return Err(Error::Malformed(format!("{}: zero-sized images", path.display())));
    }
    let needed = 16 + count * dim;
    if bytes.len() < needed {
        return Err(Error::TruncatedPayload { path: path.to_path_buf(), needed, found: bytes.len() });
    }
    Ok((dim, &bytes[16..needed]))
}

pub fn parse_idx_labels<'a>(bytes: &'a [u8], path: &Path) -> Result<&'a [u8]> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(Error::MagicMismatch { path: path.to_path_buf(), expected: LABELS_MAGIC, found: magic });
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let needed = 8 + count;
    if bytes.len() < needed {
        return Err(Error::TruncatedPayload { path: path.to_path_buf(), needed, found: bytes.len() });
    }
    Ok(&bytes[8..needed])
}
