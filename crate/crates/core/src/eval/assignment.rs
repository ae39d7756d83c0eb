use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard class decision for every source point, plus the soft evidence
/// it was taken from.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAssignment {
    pub assigned: Vec<usize>,
    /// `gamma * H`: mass each source point sends to each target class.
    pub mass_by_class: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Each source-class row sums to 1.
    Row,
    /// Entries are fractions of the total transported mass.
    Mass,
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::Row => "row",
            Normalization::Mass => "mass",
        })
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "row" => Ok(Normalization::Row),
            "mass" => Ok(Normalization::Mass),
            other => Err(Error::InvalidParameter(format!("unknown normalization {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassConfusion {
    /// Entry `(a, b)`: mass moved from source class `a` to target class `b`.
    pub matrix: Array2<f64>,
    pub normalization: Normalization,
}

fn check_labels(labels: &[usize], num_classes: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= num_classes) {
        Some(l) => Err(Error::InvalidParameter(format!(
            "label {l} out of range for {num_classes} classes"
        ))),
        None => Ok(()),
    }
}

pub fn one_hot(labels: &[usize], num_classes: usize) -> Result<Array2<f64>> {
    check_labels(labels, num_classes)?;
    let mut h = Array2::zeros((labels.len(), num_classes));
    for (j, &l) in labels.iter().enumerate() {
        h[[j, l]] = 1.0;
    }
    Ok(h)
}

/// Assign each source point to the target class receiving the most of its
/// mass; ties go to the smallest class index.
pub fn class_assignment(
    gamma: ArrayView2<'_, f64>,
    target_labels: &[usize],
    num_classes: usize,
) -> Result<ClassAssignment> {
    if gamma.ncols() != target_labels.len() {
        return Err(Error::Shape(format!(
            "plan has {} columns but {} target labels",
            gamma.ncols(),
            target_labels.len()
        )));
    }
    check_labels(target_labels, num_classes)?;
    let mut mass_by_class = Array2::zeros((gamma.nrows(), num_classes));
    for (row, mut out) in gamma.rows().into_iter().zip(mass_by_class.rows_mut()) {
        for (&g, &l) in row.iter().zip(target_labels) {
            out[l] += g;
        }
    }
    let assigned = mass_by_class
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect();
    Ok(ClassAssignment {
        assigned,
        mass_by_class,
    })
}

pub fn class_preservation_accuracy(assigned: &[usize], source_labels: &[usize]) -> Result<f64> {
    if assigned.len() != source_labels.len() {
        return Err(Error::Shape(format!(
            "{} assignments for {} source labels",
            assigned.len(),
            source_labels.len()
        )));
    }
    if assigned.is_empty() {
        return Err(Error::Shape("no source points".into()));
    }
    let hits = assigned.iter().zip(source_labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / assigned.len() as f64)
}

/// Accuracy restricted to each source class; `None` for classes with no
/// source points.
pub fn per_class_accuracy(
    assigned: &[usize],
    source_labels: &[usize],
    num_classes: usize,
) -> Result<Vec<Option<f64>>> {
    if assigned.len() != source_labels.len() {
        return Err(Error::Shape(format!(
            "{} assignments for {} source labels",
            assigned.len(),
            source_labels.len()
        )));
    }
    check_labels(source_labels, num_classes)?;
    let mut hits = vec![0usize; num_classes];
    let mut totals = vec![0usize; num_classes];
    for (&a, &s) in assigned.iter().zip(source_labels) {
        totals[s] += 1;
        hits[s] += usize::from(a == s);
    }
    Ok(hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
        .collect())
}

/// Soft confusion: transported mass aggregated by (source class, target
/// class).
pub fn class_confusion(
    gamma: ArrayView2<'_, f64>,
    source_labels: &[usize],
    target_labels: &[usize],
    num_classes: usize,
    normalization: Normalization,
) -> Result<ClassConfusion> {
    if gamma.dim() != (source_labels.len(), target_labels.len()) {
        return Err(Error::Shape(format!(
            "plan is {:?} but there are {} source and {} target labels",
            gamma.dim(),
            source_labels.len(),
            target_labels.len()
        )));
    }
    check_labels(source_labels, num_classes)?;
    check_labels(target_labels, num_classes)?;
    let mut matrix = Array2::zeros((num_classes, num_classes));
    for (row, &a) in gamma.rows().into_iter().zip(source_labels) {
        for (&g, &b) in row.iter().zip(target_labels) {
            matrix[[a, b]] += g;
        }
    }
    normalize(&mut matrix, normalization);
    Ok(ClassConfusion {
        matrix,
        normalization,
    })
}

/// Confusion of the hard assignments, counting each source point once.
/// With row normalization, `sum_a n_a C_aa / n` equals the accuracy.
pub fn hard_confusion(
    assigned: &[usize],
    source_labels: &[usize],
    num_classes: usize,
    normalization: Normalization,
) -> Result<ClassConfusion> {
    if assigned.len() != source_labels.len() {
        return Err(Error::Shape(format!(
            "{} assignments for {} source labels",
            assigned.len(),
            source_labels.len()
        )));
    }
    check_labels(assigned, num_classes)?;
    check_labels(source_labels, num_classes)?;
    let mut matrix = Array2::zeros((num_classes, num_classes));
    for (&a, &s) in assigned.iter().zip(source_labels) {
        matrix[[s, a]] += 1.0;
    }
    normalize(&mut matrix, normalization);
    Ok(ClassConfusion {
        matrix,
        normalization,
    })
}

fn normalize(matrix: &mut Array2<f64>, normalization: Normalization) {
    match normalization {
        Normalization::Row => {
            for mut row in matrix.rows_mut() {
                let total = row.sum();
                if total > 0.0 {
                    row.mapv_inplace(|v| v / total);
                }
            }
        }
        Normalization::Mass => {
            let total = matrix.sum();
            if total > 0.0 {
                matrix.mapv_inplace(|v| v / total);
            }
        }
    }
}
