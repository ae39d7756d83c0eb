//! Tolerances measured on real MNIST digits. Skipped (with a note on
//! stderr) when the dataset is not available; see `acceptance.rs` for the
//! lookup rules.

use std::path::PathBuf;
use std::sync::OnceLock;

use bispectral_ot::cli::DATA_DIR_ENV;
use bispectral_ot::dataset::{load_idx, normalize, rotate_image, split_by_class_halves, subsample_per_class};
use bispectral_ot::eval::{off_diagonal_spread, rotation_distance_grid};
use bispectral_ot::polar::{cyclic_shift, to_polar};
use bispectral_ot::spectra::{embed_image, PolarConfig, Representation};
use bispectral_ot::{LabeledImageSet, Metric};

/// Median relative L2 error between the polar grid of a digit rotated by
/// one angular bin (9 degrees at K = 40) and the original grid shifted by
/// one bin; measured 0.1080 over the 100 sampled digits.
const TAU_INTERP: f64 = 0.11;
/// 95th percentile of the relative L2 change of the K = 40 bispectral
/// feature under a 9 degree pixel rotation; measured 0.2207.
const TAU_FEAT: f64 = 0.225;
/// Largest over the (0, 15) degree entry of the raw-pixel rotation grid of
/// the sampled sevens; measured 1.527.
const RAW_GRID_RATIO: f64 = 1.45;
/// Mean rotation distance over mean distance to other classes, for the
/// sampled sevens: measured 0.863 for raw pixels, 0.032 for bispectra.
const RAW_ROTATION_SCALE: f64 = 0.8;
const BISPECTRAL_ROTATION_SCALE: f64 = 0.04;

const POLAR: PolarConfig = PolarConfig { radial_bins: 14, angular_bins: 40 };

fn mnist() -> Option<&'static LabeledImageSet> {
    static SET: OnceLock<Option<LabeledImageSet>> = OnceLock::new();
    SET.get_or_init(|| {
        let dir = std::env::var_os(DATA_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
            .join("mnist");
        let find = |stem: &str| {
            [dir.join(stem), dir.join(format!("{stem}.gz"))].into_iter().find(|p| p.is_file())
        };
        let (Some(images), Some(labels)) = (find("train-images-idx3-ubyte"), find("train-labels-idx1-ubyte")) else {
            eprintln!("MNIST not found under {}; skipping", dir.display());
            return None;
        };
        Some(normalize(load_idx(&images, &labels).unwrap()).unwrap())
    })
    .as_ref()
}

fn sample() -> Option<(LabeledImageSet, f64)> {
    let set = mnist()?;
    Some((subsample_per_class(set, 10, 42).unwrap(), set.background()))
}

fn norm(x: impl Iterator<Item = f64>) -> f64 {
    x.map(|v| v * v).sum::<f64>().sqrt()
}

fn percentile(mut v: Vec<f64>, q: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    v[((v.len() - 1) as f64 * q).round() as usize]
}

#[test]
fn one_bin_rotation_is_a_polar_shift() {
    let Some((digits, fill)) = sample() else { return };
    let errors: Vec<f64> = digits
        .images()
        .iter()
        .map(|img| {
            let step = 360.0 / POLAR.angular_bins as f64;
            let rotated = rotate_image(&img.view(), step, fill);
            let a = to_polar(&rotated.view(), POLAR.radial_bins, POLAR.angular_bins, fill).unwrap();
            let b = cyclic_shift(&to_polar(&img.view(), POLAR.radial_bins, POLAR.angular_bins, fill).unwrap(), 1);
            norm(a.grid().iter().zip(b.grid()).map(|(x, y)| x - y)) / norm(b.grid().iter().copied())
        })
        .collect();
    let median = percentile(errors, 0.5);
    eprintln!("median relative polar error {median:.4}");
    assert!(median > 0.0 && median <= TAU_INTERP, "{median}");
}

#[test]
fn bispectral_features_barely_move_under_rotation() {
    let Some((digits, fill)) = sample() else { return };
    let changes: Vec<f64> = digits
        .images()
        .iter()
        .map(|img| {
            let rotated = rotate_image(&img.view(), 9.0, fill);
            let a = embed_image(&img.view(), Representation::Bispectral, POLAR, fill).unwrap();
            let b = embed_image(&rotated.view(), Representation::Bispectral, POLAR, fill).unwrap();
            norm(a.iter().zip(&b).map(|(x, y)| x - y)) / norm(a.iter().copied())
        })
        .collect();
    let p95 = percentile(changes, 0.95);
    eprintln!("95th percentile relative feature change {p95:.4}");
    assert!(p95 <= TAU_FEAT, "{p95}");
}

#[test]
fn rotation_grids_raw_versus_bispectral() {
    let Some((digits, fill)) = sample() else { return };
    // ten sevens: no rotational symmetry
    let (sevens, others): (Vec<usize>, Vec<usize>) = (0..digits.len()).partition(|&i| digits.labels()[i] == 7);
    let images = vec![sevens.iter().map(|&i| digits.images()[i].clone()).collect::<Vec<_>>()];
    let angles: Vec<f64> = (0..24).map(|i| 15.0 * i as f64).collect();
    for repr in [Representation::Raw, Representation::Bispectral] {
        let grid = rotation_distance_grid(&images, &angles, Metric::L2, repr, POLAR, fill).unwrap().remove(0);
        let off: Vec<f64> = (0..24).flat_map(|s| (0..24).filter(move |&t| t != s).map(move |t| (s, t))).map(|(s, t)| grid[[s, t]]).collect();
        let max = off.iter().cloned().fold(0.0, f64::max);
        let mean = off.iter().sum::<f64>() / off.len() as f64;
        // typical distance from a seven to a digit of another class
        let feat = |i: usize| embed_image(&digits.images()[i].view(), repr, POLAR, fill).unwrap();
        let sevens_f: Vec<_> = sevens.iter().map(|&i| feat(i)).collect();
        let mut across = 0.0;
        for &j in &others {
            let fj = feat(j);
            across += sevens_f.iter().map(|f| Metric::L2.distance(f, &fj)).sum::<f64>();
        }
        across /= (others.len() * sevens.len()) as f64;
        // The (max - min) / mean spread is printed, not asserted: 15 degree
        // steps only land on the 9 degree bins at multiples of 45, where the
        // bispectral distance nearly vanishes, so its relative spread is
        // large even though every entry is small.
        let (ratio, spread, scale) = (max / grid[[0, 1]], off_diagonal_spread(&grid), mean / across);
        eprintln!("{repr}: max / (0, 15) entry {ratio:.3}, spread {spread:.3}, rotation / class distance {scale:.3}");
        match repr {
            Representation::Raw => {
                assert!(ratio >= RAW_GRID_RATIO, "{ratio}");
                assert!(scale >= RAW_ROTATION_SCALE, "{scale}");
            }
            Representation::Bispectral => assert!(scale <= BISPECTRAL_ROTATION_SCALE, "{scale}"),
        }
    }
}

#[test]
fn class_halves_of_the_training_split() {
    let Some(set) = mnist() else { return };
    let split = split_by_class_halves(set, 0);
    assert_eq!(
        split.half_a.class_counts(),
        vec![2961, 3371, 2979, 3065, 2921, 2710, 2959, 3132, 2925, 2974]
    );
    // odd classes put their extra image in the second half
    assert_eq!((split.half_a.len(), split.half_b.len()), (29_997, 30_003));
}
