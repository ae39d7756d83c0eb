//! Polar resampling. On the `R x K` grid produced here a planar rotation by
//! `360/K` degrees is a one-bin cyclic shift of the angular axis.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::interp::{bilinear, AxisCenter};

/// Default angular resolution, giving invariance to 9 degree rotations.
pub const DEFAULT_ANGULAR_BINS: usize = 40;

/// Default radial resolution: one bin per pixel of the inscribed radius.
pub fn default_radial_bins(rows: usize, cols: usize) -> usize {
    rows.min(cols) / 2
}

/// Intensities sampled on `radial_bins x angular_bins` polar grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarImage {
    grid: Array2<f64>,
    radial_spacing: f64,
}

impl PolarImage {
    pub fn from_grid(grid: Array2<f64>, radial_spacing: f64) -> Self {
        Self {
            grid,
            radial_spacing,
        }
    }

    pub fn grid(&self) -> &Array2<f64> {
        &self.grid
    }

    pub fn radial_bins(&self) -> usize {
        self.grid.nrows()
    }

    pub fn angular_bins(&self) -> usize {
        self.grid.ncols()
    }

    /// Pixels per radial bin.
    pub fn radial_spacing(&self) -> f64 {
        self.radial_spacing
    }
}

/// Resample onto `radial_bins x angular_bins` points.
///
/// Entry `(r, k)` is the bilinear interpolation of `img` at radius
/// `(r + 0.5) * spacing` and angle `2 pi k / K`, measured counterclockwise
/// from the +x (column) axis with y pointing up, where
/// `spacing = (min(M, N) / 2) / R`. Samples off the grid read as `fill`.
pub fn to_polar(
    img: &ArrayView2<'_, f64>,
    radial_bins: usize,
    angular_bins: usize,
    fill: f64,
) -> Result<PolarImage> {
    let (rows, cols) = img.dim();
    if radial_bins == 0 || radial_bins > default_radial_bins(rows, cols) {
        return Err(Error::InvalidParameter(format!(
            "radial bins must be in 1..={} for a {rows}x{cols} image, got {radial_bins}",
            default_radial_bins(rows, cols)
        )));
    }
    let spacing = (rows.min(cols) as f64 / 2.0) / radial_bins as f64;
    to_polar_with_spacing(img, radial_bins, angular_bins, spacing, fill)
}

/// [`to_polar`] with an explicit radial spacing, so the sampled radii do not
/// depend on the image size.
pub fn to_polar_with_spacing(
    img: &ArrayView2<'_, f64>,
    radial_bins: usize,
    angular_bins: usize,
    radial_spacing: f64,
    fill: f64,
) -> Result<PolarImage> {
    if radial_bins == 0 {
        return Err(Error::InvalidParameter("radial bins must be positive".into()));
    }
    if angular_bins < 2 {
        return Err(Error::InvalidParameter(format!(
            "angular bins must be at least 2, got {angular_bins}"
        )));
    }
    if !(radial_spacing > 0.0 && radial_spacing.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "radial spacing must be positive, got {radial_spacing}"
        )));
    }
    let (rows, cols) = img.dim();
    let cy = AxisCenter::of_len(rows);
    let cx = AxisCenter::of_len(cols);
    let directions: Vec<(f64, f64)> = (0..angular_bins)
        .map(|k| (2.0 * PI * k as f64 / angular_bins as f64).sin_cos())
        .collect();
    let grid = Array2::from_shape_fn((radial_bins, angular_bins), |(r, k)| {
        let rho = (r as f64 + 0.5) * radial_spacing;
        let (sin, cos) = directions[k];
        bilinear(img, cy.locate(-rho * sin), cx.locate(rho * cos), fill)
    });
    Ok(PolarImage::from_grid(grid, radial_spacing))
}

/// Cyclic shift along the angular axis: output `(r, k)` is input
/// `(r, (k - t) mod K)`.
pub fn cyclic_shift(polar: &PolarImage, t: i64) -> PolarImage {
    let k_bins = polar.angular_bins() as i64;
    let grid = Array2::from_shape_fn(polar.grid.dim(), |(r, k)| {
        let src = (k as i64 - t).rem_euclid(k_bins) as usize;
        polar.grid[[r, src]]
    });
    PolarImage::from_grid(grid, polar.radial_spacing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::rotate_image;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn random_image(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = SeededRng::new(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.next_f64())
    }

    fn random_polar(r: usize, k: usize, seed: u64) -> PolarImage {
        PolarImage::from_grid(random_image(r, k, seed), 1.0)
    }

    #[test]
    fn constant_image_gives_constant_grid() {
        let img = Array2::from_elem((28, 28), 3.25);
        let polar = to_polar(&img.view(), 14, 40, 0.0).unwrap();
        assert!(polar.grid().iter().all(|&v| (v - 3.25).abs() < 1e-9));
    }

    #[test]
    fn default_mnist_shape() {
        let img = random_image(28, 28, 0);
        let polar = to_polar(&img.view(), default_radial_bins(28, 28), DEFAULT_ANGULAR_BINS, 0.0)
            .unwrap();
        assert_eq!(polar.grid().dim(), (14, 40));
        assert_eq!(polar.radial_spacing(), 1.0);
    }

    #[test]
    fn parameter_ranges() {
        let img = random_image(28, 28, 0);
        assert!(to_polar(&img.view(), 0, 40, 0.0).is_err());
        assert!(to_polar(&img.view(), 15, 40, 0.0).is_err());
        assert!(to_polar(&img.view(), 14, 1, 0.0).is_err());
        assert!(to_polar(&img.view(), 14, 2, 0.0).is_ok());
    }

    #[test]
    fn quarter_turn_shifts_by_quarter_of_bins() {
        // 90 degree rotations are exact and 90 degrees is 10 bins at K = 40
        let img = random_image(28, 28, 5);
        let rot = rotate_image(&img.view(), 90.0, 0.0);
        let a = to_polar(&img.view(), 14, 40, 0.0).unwrap();
        let b = to_polar(&rot.view(), 14, 40, 0.0).unwrap();
        let shifted = cyclic_shift(&a, 10);
        let err = (b.grid() - shifted.grid()).mapv(f64::abs).fold(0.0_f64, |m, &v| m.max(v));
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn padding_with_background_is_bit_exact() {
        let img = random_image(12, 9, 2);
        let mut padded = Array2::from_elem((18, 15), -0.4);
        padded.slice_mut(ndarray::s![3..15, 3..12]).assign(&img);
        let a = to_polar_with_spacing(&img.view(), 6, 16, 1.0, -0.4).unwrap();
        let b = to_polar_with_spacing(&padded.view(), 6, 16, 1.0, -0.4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shift_identities() {
        let p = random_polar(3, 7, 1);
        assert_eq!(cyclic_shift(&p, 0), p);
        assert_eq!(cyclic_shift(&p, 7), p);
        assert_eq!(cyclic_shift(&cyclic_shift(&p, 1), -1), p);
        let s = cyclic_shift(&p, 2);
        assert_eq!(s.grid()[[1, 2]], p.grid()[[1, 0]]);
    }

    proptest! {
        #[test]
        fn shifts_compose_additively(a in -50i64..50, b in -50i64..50, k in 2usize..20) {
            let p = random_polar(3, k, 9);
            prop_assert_eq!(cyclic_shift(&cyclic_shift(&p, a), b), cyclic_shift(&p, a + b));
        }
    }
}
