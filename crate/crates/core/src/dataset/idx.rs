//! Reader and writer for the big-endian IDX container used by MNIST and its
//! relatives. Files ending in `.gz` are transparently decompressed.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use ndarray::Array2;

use super::LabeledImageSet;
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Load an image file and its label file into a [`LabeledImageSet`] with raw
/// intensities in `[0, 255]`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledImageSet> {
    let images = parse_images(&read_maybe_gz(images_path)?)?;
    let labels = parse_labels(&read_maybe_gz(labels_path)?)?;
    if images.len() != labels.len() {
        return Err(Error::Inconsistent(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let source = images_path
        .file_name()
        .map(|s| s.to_string_lossy().trim_end_matches(".gz").to_string())
        .unwrap_or_default();
    LabeledImageSet::new(images, labels, num_classes, source)
}

pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::file(path, e))?;
    if path.extension().is_some_and(|ext| ext == "gz") {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::file(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::Truncated {
            expected: at + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = read_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

fn check_payload(bytes: &[u8], header: usize, payload: usize) -> Result<()> {
    let expected = header + payload;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() - expected
        )));
    }
    Ok(())
}

pub fn parse_images(bytes: &[u8]) -> Result<Vec<Array2<f64>>> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let per_image = rows * cols;
    check_payload(bytes, 16, count * per_image)?;
    let payload = &bytes[16..];
    Ok((0..count)
        .map(|i| {
            let px = &payload[i * per_image..(i + 1) * per_image];
            Array2::from_shape_fn((rows, cols), |(r, c)| px[r * cols + c] as f64)
        })
        .collect())
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    check_magic(bytes, LABEL_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    check_payload(bytes, 8, count)?;
    Ok(bytes[8..].iter().map(|&b| b as usize).collect())
}

/// Encode images as an IDX byte stream. Intensities are rounded and clamped
/// to `0..=255`.
pub fn encode_images(images: &[Array2<f64>]) -> Result<Vec<u8>> {
    let (rows, cols) = images.first().map_or((0, 0), |img| img.dim());
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for word in [IMAGE_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    for img in images {
        if img.dim() != (rows, cols) {
            return Err(Error::Shape("images of differing sizes".into()));
        }
        out.extend(img.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8));
    }
    Ok(out)
}

pub fn encode_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        let byte = u8::try_from(l)
            .map_err(|_| Error::InvalidParameter(format!("label {l} does not fit in a byte")))?;
        out.push(byte);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(words: &[u32]) -> Vec<u8> {
        words.iter().flat_map(|w| w.to_be_bytes()).collect()
    }

    #[test]
    fn two_three_by_three_images() {
        let mut bytes = header(&[IMAGE_MAGIC, 2, 3, 3]);
        bytes.extend(0u8..18);
        let images = parse_images(&bytes).unwrap();
        assert_eq!(images.len(), 2);
        assert_eq!(images[0].dim(), (3, 3));
        assert_eq!(images[0][[0, 1]], 1.0);
        assert_eq!(images[1][[2, 2]], 17.0);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = header(&[0x0000_0999, 1, 1, 1]);
        bytes.push(0);
        assert!(matches!(
            parse_images(&bytes),
            Err(Error::BadMagic { found: 0x999, .. })
        ));
    }

    #[test]
    fn rejects_short_payload() {
        let mut bytes = header(&[IMAGE_MAGIC, 2, 3, 3]);
        bytes.extend(0u8..10);
        assert!(matches!(
            parse_images(&bytes),
            Err(Error::Truncated { expected: 34, found: 26 })
        ));
        let labels = header(&[LABEL_MAGIC, 5]);
        assert!(matches!(parse_labels(&labels), Err(Error::Truncated { .. })));
    }

    #[test]
    fn rejects_short_header() {
        assert!(matches!(parse_images(&[0, 0, 8]), Err(Error::Truncated { .. })));
    }

    #[test]
    fn count_mismatch_is_inconsistent() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        let images = vec![Array2::zeros((2, 2)); 3];
        crate::io::write_atomic(&img, &encode_images(&images).unwrap()).unwrap();
        crate::io::write_atomic(&lab, &encode_labels(&[0, 1]).unwrap()).unwrap();
        assert!(matches!(load_idx(&img, &lab), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn gzip_by_suffix() {
        use flate2::write::GzEncoder;
        use flate2::Compression;
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let images = vec![Array2::from_elem((2, 2), 9.0); 2];
        let mut enc = GzEncoder::new(Vec::new(), Compression::fast());
        enc.write_all(&encode_images(&images).unwrap()).unwrap();
        let img = dir.path().join("x-images.gz");
        crate::io::write_atomic(&img, &enc.finish().unwrap()).unwrap();
        let lab = dir.path().join("x-labels");
        crate::io::write_atomic(&lab, &encode_labels(&[1, 0]).unwrap()).unwrap();
        let set = load_idx(&img, &lab).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.num_classes(), 2);
        assert_eq!(set.images()[1][[1, 1]], 9.0);
        assert_eq!(set.meta().source, "x-images");
    }
}
