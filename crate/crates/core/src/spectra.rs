//! Fourier analysis on the cyclic group `Z/KZ` and the bispectral image
//! embedding built from it.
//!
//! For a length-`K` signal `f` the coefficients are
//! `F_k = sum_g f(g) exp(-2 pi i k g / K)` (no normalization), the power
//! spectrum is `|F_k|^2` and the bispectrum is the `K x K` matrix
//! `B_ij = F_i F_j conj(F_{(i + j) mod K})`. A cyclic shift by `t` multiplies
//! `F_k` by `exp(-2 pi i k t / K)`; those phases cancel in `B`, while the
//! relative phase between frequencies survives.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledImageSet;
use crate::error::{Error, Result};
use crate::polar::{to_polar, PolarImage};

/// Fourier coefficients `F_0 .. F_{K-1}` of a signal on `Z/KZ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoefficients {
    pub coeffs: Vec<Complex64>,
}

impl SpectralCoefficients {
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }
}

/// `K x K` complex bispectrum of one signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Bispectrum1D {
    pub matrix: Array2<Complex64>,
}

/// Per-radius bispectra, radius-major and row-major within each matrix, each
/// complex entry stored as a consecutive `(re, im)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BispectralFeature {
    pub values: Vec<f64>,
    pub radial_bins: usize,
    pub angular_bins: usize,
}

impl BispectralFeature {
    pub fn dim(radial_bins: usize, angular_bins: usize) -> usize {
        2 * radial_bins * angular_bins * angular_bins
    }
}

/// Direct-summation DFT with a precomputed table of the `K` roots of unity.
#[derive(Debug, Clone)]
pub struct CyclicDft {
    roots: Vec<Complex64>,
}

impl CyclicDft {
    pub fn new(order: usize) -> Self {
        // Upper half mirrors the lower half so real input gives exactly
        // Hermitian output.
        let mut roots = vec![Complex64::new(1.0, 0.0); order];
        for j in 1..=order / 2 {
            let (s, c) = (2.0 * PI * j as f64 / order as f64).sin_cos();
            roots[j] = Complex64::new(c, -s);
            roots[order - j] = Complex64::new(c, s);
        }
        if order % 2 == 0 {
            roots[order / 2] = Complex64::new(-1.0, 0.0);
        }
        Self { roots }
    }

    pub fn order(&self) -> usize {
        self.roots.len()
    }

    pub fn transform(&self, signal: ArrayView1<'_, f64>) -> SpectralCoefficients {
        let n = self.order();
        assert_eq!(signal.len(), n, "signal length must equal the group order");
        let coeffs = (0..n)
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                let mut idx = 0usize;
                for &v in signal.iter() {
                    acc += self.roots[idx] * v;
                    idx += k;
                    if idx >= n {
                        idx -= n;
                    }
                }
                acc
            })
            .collect();
        SpectralCoefficients { coeffs }
    }
}

pub fn dft(signal: &[f64]) -> SpectralCoefficients {
    CyclicDft::new(signal.len()).transform(ArrayView1::from(signal))
}

pub fn power_spectrum(c: &SpectralCoefficients) -> Vec<f64> {
    c.coeffs.iter().map(|z| z.norm_sqr()).collect()
}

pub fn bispectrum(c: &SpectralCoefficients) -> Bispectrum1D {
    let f = &c.coeffs;
    let n = f.len();
    let matrix = Array2::from_shape_fn((n, n), |(i, j)| f[i] * f[j] * f[(i + j) % n].conj());
    Bispectrum1D { matrix }
}

/// Bispectrum of every angular slice, concatenated across radii.
pub fn bispectral_embedding(polar: &PolarImage) -> BispectralFeature {
    bispectral_embedding_with(&CyclicDft::new(polar.angular_bins()), polar)
}

fn bispectral_embedding_with(plan: &CyclicDft, polar: &PolarImage) -> BispectralFeature {
    let (radial_bins, angular_bins) = polar.grid().dim();
    let mut values = Vec::with_capacity(BispectralFeature::dim(radial_bins, angular_bins));
    for slice in polar.grid().rows() {
        let b = bispectrum(&plan.transform(slice));
        for z in b.matrix.iter() {
            values.push(z.re);
            values.push(z.im);
        }
    }
    BispectralFeature {
        values,
        radial_bins,
        angular_bins,
    }
}

/// How an image is turned into a feature vector for the ground cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// Row-major flattened pixels.
    Raw,
    /// Polar resampling followed by per-radius bispectra.
    Bispectral,
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Representation::Raw => "raw",
            Representation::Bispectral => "bispectral",
        })
    }
}

impl FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raw" | "pixels" => Ok(Representation::Raw),
            "bispectral" | "bispectrum" => Ok(Representation::Bispectral),
            other => Err(Error::InvalidParameter(format!("unknown representation {other:?}"))),
        }
    }
}

/// Polar grid resolution used by the bispectral representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolarConfig {
    pub radial_bins: usize,
    pub angular_bins: usize,
}

/// Bispectral features of a whole set, one row per image, in order.
pub fn embed_dataset(set: &LabeledImageSet, config: PolarConfig) -> Result<Array2<f32>> {
    let dim = BispectralFeature::dim(config.radial_bins, config.angular_bins);
    let plan = CyclicDft::new(config.angular_bins);
    let fill = set.background();
    let rows: Vec<Vec<f64>> = set
        .images()
        .par_iter()
        .map(|img| {
            let polar = to_polar(&img.view(), config.radial_bins, config.angular_bins, fill)?;
            Ok(bispectral_embedding_with(&plan, &polar).values)
        })
        .collect::<Result<_>>()?;
    Ok(stack_rows(&rows, dim))
}

/// Feature vector of a single image; rows of [`embed_representation`]
/// equal this up to the `f32` cast.
pub fn embed_image(
    img: &ArrayView2<'_, f64>,
    representation: Representation,
    config: PolarConfig,
    fill: f64,
) -> Result<Vec<f64>> {
    match representation {
        Representation::Raw => Ok(img.iter().copied().collect()),
        Representation::Bispectral => {
            let polar = to_polar(img, config.radial_bins, config.angular_bins, fill)?;
            Ok(bispectral_embedding(&polar).values)
        }
    }
}

/// Flattened pixels, one row per image.
pub fn raw_features(set: &LabeledImageSet) -> Array2<f32> {
    let dim = set.image_dim().map_or(0, |(r, c)| r * c);
    let rows: Vec<Vec<f64>> = set.images().iter().map(|img| img.iter().copied().collect()).collect();
    stack_rows(&rows, dim)
}

pub fn embed_representation(
    set: &LabeledImageSet,
    representation: Representation,
    config: PolarConfig,
) -> Result<Array2<f32>> {
    match representation {
        Representation::Raw => Ok(raw_features(set)),
        Representation::Bispectral => embed_dataset(set, config),
    }
}

fn stack_rows(rows: &[Vec<f64>], dim: usize) -> Array2<f32> {
    let mut out = Array2::zeros((rows.len(), dim));
    for (mut dst, src) in out.rows_mut().into_iter().zip(rows) {
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = s as f32;
        }
    }
    out
}
