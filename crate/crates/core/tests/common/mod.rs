//! Small synthetic IDX datasets for the integration tests.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use ndarray::Array2;

use bispectral_ot::cli::ExperimentConfig;
use bispectral_ot::dataset::{encode_images, encode_labels};
use bispectral_ot::io::write_atomic;
use bispectral_ot::rng::SeededRng;
use bispectral_ot::Metric;

pub const SIDE: usize = 20;
pub const CLASSES: usize = 4;

/// One 20x20 glyph per class, jittered: a ring, an off-centre bar, an L
/// and a pair of dots. Intensities in 0..=255 like MNIST.
pub fn glyph(class: usize, rng: &mut SeededRng) -> Array2<f64> {
    let c = (SIDE as f64 - 1.0) / 2.0;
    let jitter = 0.8 + 0.4 * rng.next_f64();
    Array2::from_shape_fn((SIDE, SIDE), |(i, j)| {
        let (y, x) = (i as f64 - c, j as f64 - c);
        let r = (x * x + y * y).sqrt();
        let on = match class {
            0 => (r - 6.0 * jitter).abs() < 1.2,
            1 => x.abs() < 1.5 && y > -7.0 * jitter && y < 2.0,
            2 => (x.abs() < 1.5 && y.abs() < 7.0 * jitter) || (y > 5.0 && y < 7.5 && x > 0.0 && x < 6.0 * jitter),
            _ => ((x - 4.0 * jitter).powi(2) + y * y).sqrt() < 2.5 || ((x + 3.0).powi(2) + (y - 4.0).powi(2)).sqrt() < 1.8,
        };
        if on {
            200.0 + 55.0 * rng.next_f64()
        } else {
            10.0 * rng.next_f64()
        }
    })
}

/// Writes `mnist/train-{images-idx3,labels-idx1}-ubyte` under `dir` with
/// `per_class` images of each class, classes interleaved.
pub fn write_dataset(dir: &Path, per_class: usize, seed: u64) -> (PathBuf, PathBuf) {
    let mut rng = SeededRng::new(seed);
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..per_class {
        for k in 0..CLASSES {
            images.push(glyph(k, &mut rng));
            labels.push(k);
        }
    }
    let root = dir.join("mnist");
    let img = root.join("train-images-idx3-ubyte");
    let lbl = root.join("train-labels-idx1-ubyte");
    write_atomic(&img, &encode_images(&images).unwrap()).unwrap();
    write_atomic(&lbl, &encode_labels(&labels).unwrap()).unwrap();
    (img, lbl)
}

/// A fast config over a dataset written by [`write_dataset`].
pub fn small_config(data: &Path, out: &Path) -> ExperimentConfig {
    let (images, labels) = write_dataset(data, 24, 7);
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.images = Some(images);
    cfg.dataset.labels = Some(labels);
    cfg.split.per_class = 8;
    cfg.embedding.angular_bins = 12;
    cfg.embedding.radial_bins = Some(6);
    cfg.transport.metrics = vec![Metric::L1, Metric::Cosine];
    cfg.transport.epsilons = vec![0.1];
    cfg.transport.normalize_cost = true;
    cfg.output.dir = out.to_path_buf();
    cfg.resolved().unwrap()
}
