//! Labeled image collections: loading, normalization, class-balanced
//! splitting, per-class subsampling and rotation augmentation.

mod idx;
mod rotate;

pub use idx::{encode_images, encode_labels, load_idx, parse_images, parse_labels, read_maybe_gz};
pub use rotate::rotate_image;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub type Image = Array2<f64>;

/// Affine map applied by [`normalize`], expressed in the units of the
/// originally loaded data: `normalized = (raw - mean) / std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Augmentation {
    pub seed: u64,
    /// Rotation applied to each image, in degrees, uniform on `[0, 360)`.
    pub angles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SetMeta {
    pub source: String,
    /// Position of each image in the originally loaded file.
    pub source_indices: Vec<usize>,
    pub normalization: Option<NormalizationStats>,
    pub augmentation: Option<Augmentation>,
}

/// Grayscale images of one common size with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageSet {
    images: Vec<Image>,
    labels: Vec<usize>,
    num_classes: usize,
    meta: SetMeta,
}

impl LabeledImageSet {
    pub fn new(
        images: Vec<Image>,
        labels: Vec<usize>,
        num_classes: usize,
        source: impl Into<String>,
    ) -> Result<Self> {
        let meta = SetMeta {
            source: source.into(),
            source_indices: (0..images.len()).collect(),
            ..SetMeta::default()
        };
        Self::with_meta(images, labels, num_classes, meta)
    }

    pub fn with_meta(
        images: Vec<Image>,
        labels: Vec<usize>,
        num_classes: usize,
        meta: SetMeta,
    ) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Inconsistent(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if meta.source_indices.len() != images.len() {
            return Err(Error::Inconsistent("provenance length differs from image count".into()));
        }
        if let Some(first) = images.first() {
            let dim = first.dim();
            if let Some(bad) = images.iter().position(|img| img.dim() != dim) {
                return Err(Error::Shape(format!(
                    "image {bad} is {:?}, expected {:?}",
                    images[bad].dim(),
                    dim
                )));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Inconsistent(format!(
                "label {bad} outside 0..{num_classes}"
            )));
        }
        Ok(Self {
            images,
            labels,
            num_classes,
            meta,
        })
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn meta(&self) -> &SetMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `(rows, cols)` shared by every image, `None` when empty.
    pub fn image_dim(&self) -> Option<(usize, usize)> {
        self.images.first().map(|img| img.dim())
    }

    /// Intensity of an empty pixel in the current units: 0 for raw data,
    /// the normalized image of 0 after [`normalize`].
    pub fn background(&self) -> f64 {
        match self.meta.normalization {
            Some(s) => -s.mean / s.std,
            None => 0.0,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Indices of each class, in ascending order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }

    /// Subset in the order given; augmentation angles follow their images.
    pub fn select(&self, indices: &[usize]) -> LabeledImageSet {
        let meta = SetMeta {
            source: self.meta.source.clone(),
            source_indices: indices.iter().map(|&i| self.meta.source_indices[i]).collect(),
            normalization: self.meta.normalization,
            augmentation: self.meta.augmentation.as_ref().map(|a| Augmentation {
                seed: a.seed,
                angles: indices.iter().map(|&i| a.angles[i]).collect(),
            }),
        };
        LabeledImageSet {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            meta,
        }
    }
}

/// Two disjoint halves of a source set, split class by class.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub half_a: LabeledImageSet,
    pub half_b: LabeledImageSet,
    pub seed: u64,
}

/// Standardize with one mean and one (population) standard deviation taken
/// over every pixel of every image.
pub fn normalize(set: LabeledImageSet) -> Result<LabeledImageSet> {
    if set.is_empty() {
        return Err(Error::Degenerate("cannot normalize an empty set".into()));
    }
    let count: usize = set.images.iter().map(|img| img.len()).sum();
    let n = count as f64;
    let mean = set.images.iter().map(|img| img.sum()).sum::<f64>() / n;
    let var = set
        .images
        .iter()
        .map(|img| img.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>())
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::Degenerate(format!(
            "pixel standard deviation is {std}; the dataset is constant"
        )));
    }
    let LabeledImageSet {
        mut images,
        labels,
        num_classes,
        mut meta,
    } = set;
    images
        .par_iter_mut()
        .for_each(|img| img.mapv_inplace(|v| (v - mean) / std));
    // compose with any earlier pass so stats stay in raw units
    meta.normalization = Some(match meta.normalization {
        Some(prev) => NormalizationStats {
            mean: prev.mean + prev.std * mean,
            std: prev.std * std,
        },
        None => NormalizationStats { mean, std },
    });
    Ok(LabeledImageSet {
        images,
        labels,
        num_classes,
        meta,
    })
}

/// Shuffle each class with the seeded generator and give the first
/// `floor(n_c / 2)` indices to `half_a`, the rest to `half_b`. Both halves
/// keep the source ordering.
pub fn split_by_class_halves(set: &LabeledImageSet, seed: u64) -> SplitPair {
    let mut rng = SeededRng::new(seed);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for mut members in set.class_indices() {
        rng.shuffle(&mut members);
        let cut = members.len() / 2;
        a.extend_from_slice(&members[..cut]);
        b.extend_from_slice(&members[cut..]);
    }
    a.sort_unstable();
    b.sort_unstable();
    SplitPair {
        half_a: set.select(&a),
        half_b: set.select(&b),
        seed,
    }
}

/// Seeded uniform sample of `per_class` items from every class (without
/// replacement). Classes with no members are skipped.
pub fn subsample_per_class(
    set: &LabeledImageSet,
    per_class: usize,
    seed: u64,
) -> Result<LabeledImageSet> {
    if per_class == 0 {
        return Err(Error::InvalidParameter("per_class must be positive".into()));
    }
    let by_class = set.class_indices();
    let smallest = by_class.iter().map(Vec::len).filter(|&n| n > 0).min().unwrap_or(0);
    if per_class > smallest {
        return Err(Error::Size(format!(
            "per_class {per_class} exceeds the smallest class size {smallest}"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let mut picked = Vec::with_capacity(per_class * by_class.len());
    for mut members in by_class.into_iter().filter(|m| !m.is_empty()) {
        rng.shuffle(&mut members);
        picked.extend_from_slice(&members[..per_class]);
    }
    picked.sort_unstable();
    Ok(set.select(&picked))
}

/// Rotate every image by its own angle drawn uniformly from `[0, 360)`.
/// Rotated-out regions take [`LabeledImageSet::background`].
pub fn augment_uniform_rotations(set: &LabeledImageSet, seed: u64) -> LabeledImageSet {
    let mut rng = SeededRng::new(seed);
    let angles: Vec<f64> = (0..set.len()).map(|_| 360.0 * rng.next_f64()).collect();
    let fill = set.background();
    let images = set
        .images
        .par_iter()
        .zip(angles.par_iter())
        .map(|(img, &angle)| rotate_image(&img.view(), angle, fill))
        .collect();
    let mut meta = set.meta.clone();
    meta.augmentation = Some(Augmentation { seed, angles });
    LabeledImageSet {
        images,
        labels: set.labels.clone(),
        num_classes: set.num_classes,
        meta,
    }
}
