use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::cost::{pairwise_cost, Metric};
use crate::dataset::{rotate_image, Image};
use crate::error::{Error, Result};
use crate::spectra::{embed_image, PolarConfig, Representation};

/// Mean pairwise distance between every pair of classes. Diagonal entries
/// average over distinct pairs only, so a class needs two members.
pub fn interclass_distance_stats<T>(
    features: ArrayView2<'_, T>,
    labels: &[usize],
    metric: Metric,
    num_classes: usize,
) -> Result<Array2<f64>>
where
    T: Copy + Into<f64> + Send + Sync,
{
    if features.nrows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    let mut members = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        let slot = members.get_mut(l).ok_or_else(|| {
            Error::InvalidParameter(format!("label {l} out of range for {num_classes} classes"))
        })?;
        slot.push(i);
    }
    if let Some(k) = members.iter().position(|m| m.len() < 2) {
        return Err(Error::Degenerate(format!("class {k} has fewer than two members")));
    }
    let blocks: Vec<_> = members.iter().map(|idx| features.select(Axis(0), idx)).collect();
    let pairs: Vec<(usize, usize)> = (0..num_classes)
        .flat_map(|a| (a..num_classes).map(move |b| (a, b)))
        .collect();
    let means = pairs
        .par_iter()
        .map(|&(a, b)| {
            let d = pairwise_cost(blocks[a].view(), blocks[b].view(), metric)?.values;
            Ok(if a == b {
                let n = d.nrows() as f64;
                (d.sum() - d.diag().sum()) / (n * (n - 1.0))
            } else {
                d.mean().unwrap_or(0.0)
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut out = Array2::zeros((num_classes, num_classes));
    for (&(a, b), m) in pairs.iter().zip(means) {
        out[[a, b]] = m;
        out[[b, a]] = m;
    }
    Ok(out)
}

/// Summary of a class-distance matrix: the diagonal, and for each class
/// the mean of its off-diagonal row.
#[derive(Debug, Clone, PartialEq)]
pub struct Separation {
    pub intra: Vec<f64>,
    pub inter: Vec<f64>,
}

impl Separation {
    pub fn of(stats: &Array2<f64>) -> Self {
        let k = stats.nrows();
        let intra = stats.diag().to_vec();
        let inter = (0..k)
            .map(|a| {
                let off: f64 = (0..k).filter(|&b| b != a).map(|b| stats[[a, b]]).sum();
                off / (k - 1).max(1) as f64
            })
            .collect();
        Self { intra, inter }
    }

    pub fn mean_intra(&self) -> f64 {
        self.intra.iter().sum::<f64>() / self.intra.len() as f64
    }

    pub fn mean_inter(&self) -> f64 {
        self.inter.iter().sum::<f64>() / self.inter.len() as f64
    }

    /// Classes whose intra-class mean is not below their inter-class mean.
    pub fn overlapping(&self) -> Vec<usize> {
        (0..self.intra.len()).filter(|&k| self.intra[k] >= self.inter[k]).collect()
    }

    /// Classes ordered from most to least compact.
    pub fn compactness_ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.intra.len()).collect();
        order.sort_by(|&a, &b| self.intra[a].total_cmp(&self.intra[b]).then(a.cmp(&b)));
        order
    }
}

/// Per class, the `A x A` matrix whose `(s, t)` entry is the distance
/// between an image rotated by `angles[s]` and the same image rotated by
/// `angles[t]`, averaged over the class's images.
pub fn rotation_distance_grid(
    images_by_class: &[Vec<Image>],
    angles: &[f64],
    metric: Metric,
    representation: Representation,
    config: PolarConfig,
    fill: f64,
) -> Result<Vec<Array2<f64>>> {
    if angles.is_empty() {
        return Err(Error::InvalidParameter("no rotation angles".into()));
    }
    images_by_class
        .iter()
        .map(|images| {
            let a = angles.len();
            let mut grid = Array2::zeros((a, a));
            for img in images {
                let feats: Vec<Vec<f64>> = angles
                    .par_iter()
                    .map(|&angle| {
                        let rotated = rotate_image(&img.view(), angle, fill);
                        embed_image(&rotated.view(), representation, config, fill)
                    })
                    .collect::<Result<_>>()?;
                for s in 0..a {
                    for t in (s + 1)..a {
                        let d = metric.distance(&feats[s], &feats[t]);
                        grid[[s, t]] += d;
                        grid[[t, s]] += d;
                    }
                }
            }
            if !images.is_empty() {
                grid /= images.len() as f64;
            }
            Ok(grid)
        })
        .collect()
}

/// `(max - min) / mean` over the off-diagonal entries: 0 for a perfectly
/// flat grid.
pub fn off_diagonal_spread(grid: &Array2<f64>) -> f64 {
    let n = grid.nrows();
    let off: Vec<f64> = (0..n)
        .flat_map(|s| (0..n).filter(move |&t| t != s).map(move |t| (s, t)))
        .map(|(s, t)| grid[[s, t]])
        .collect();
    if off.is_empty() {
        return 0.0;
    }
    let (lo, hi) = off
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mean = off.iter().sum::<f64>() / off.len() as f64;
    if mean == 0.0 {
        0.0
    } else {
        (hi - lo) / mean
    }
}
