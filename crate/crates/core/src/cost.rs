//! Dense ground-cost matrices between two feature sets.
//!
//! Features may be stored as `f32`; every distance is accumulated in `f64`
//! with a fixed eight-lane reduction order, so results do not depend on the
//! block size or on the number of threads.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default working-set size for one row tile plus one column tile.
pub const DEFAULT_BLOCK_BUDGET: usize = 4 << 20;

const LANES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "l2")]
    L2,
    #[serde(rename = "l2sq")]
    L2Squared,
    #[serde(rename = "cosine")]
    Cosine,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::L1, Metric::L2, Metric::L2Squared, Metric::Cosine];

    /// Distance between two vectors of equal length.
    pub fn distance<T: Copy + Into<f64>>(self, a: &[T], b: &[T]) -> f64 {
        match self {
            Metric::L1 => l1(a, b),
            Metric::L2 => sq_dist(a, b).sqrt(),
            Metric::L2Squared => sq_dist(a, b),
            Metric::Cosine => cosine(dot(a, b), dot(a, a), dot(b, b)),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::L1 => "l1",
            Metric::L2 => "l2",
            Metric::L2Squared => "l2sq",
            Metric::Cosine => "cosine",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" | "cityblock" | "manhattan" => Ok(Metric::L1),
            "l2" | "euclidean" => Ok(Metric::L2),
            "l2sq" | "l2_squared" | "sqeuclidean" => Ok(Metric::L2Squared),
            "cos" | "cosine" => Ok(Metric::Cosine),
            other => Err(Error::InvalidParameter(format!("unknown metric {other:?}"))),
        }
    }
}

/// `n x m` matrix of nonnegative ground costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub values: Array2<f64>,
    pub metric: Metric,
    pub row_source: String,
    pub col_source: String,
}

impl CostMatrix {
    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Divide by the largest entry (no-op for an all-zero matrix).
    pub fn normalized_by_max(mut self) -> Self {
        let max = self.max();
        if max > 0.0 {
            self.values.mapv_inplace(|v| v / max);
        }
        self
    }

    pub fn with_sources(mut self, rows: impl Into<String>, cols: impl Into<String>) -> Self {
        self.row_source = rows.into();
        self.col_source = cols.into();
        self
    }
}

#[inline]
fn l1<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> f64 {
    reduce(a, b, |x, y| (x - y).abs())
}

#[inline]
fn sq_dist<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> f64 {
    reduce(a, b, |x, y| (x - y) * (x - y))
}

#[inline]
fn dot<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> f64 {
    reduce(a, b, |x, y| x * y)
}

#[inline]
fn cosine(xy: f64, xx: f64, yy: f64) -> f64 {
    // sqrt(fl(d * d)) == d, so identical vectors give exactly zero
    (1.0 - xy / (xx * yy).sqrt()).clamp(0.0, 2.0)
}

#[inline(always)]
fn reduce<T: Copy + Into<f64>>(a: &[T], b: &[T], op: impl Fn(f64, f64) -> f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += op(xa[l].into(), xb[l].into());
        }
    }
    let mut tail = 0.0;
    for (&x, &y) in ra.iter().zip(rb) {
        tail += op(x.into(), y.into());
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// [`pairwise_cost_blocked`] with [`DEFAULT_BLOCK_BUDGET`].
pub fn pairwise_cost<T>(x: ArrayView2<'_, T>, y: ArrayView2<'_, T>, metric: Metric) -> Result<CostMatrix>
where
    T: Copy + Into<f64> + Send + Sync,
{
    pairwise_cost_blocked(x, y, metric, DEFAULT_BLOCK_BUDGET)
}

/// Cost between every row of `x` and every row of `y`.
///
/// Rows are processed in tiles sized so that one row tile and one column
/// tile fit in `block_budget` bytes; row tiles run in parallel and write
/// disjoint parts of the output.
pub fn pairwise_cost_blocked<T>(
    x: ArrayView2<'_, T>,
    y: ArrayView2<'_, T>,
    metric: Metric,
    block_budget: usize,
) -> Result<CostMatrix>
where
    T: Copy + Into<f64> + Send + Sync,
{
    let (n, d) = x.dim();
    let (m, dy) = y.dim();
    if n == 0 || m == 0 {
        return Err(Error::Shape(format!("empty feature set ({n} x {m})")));
    }
    if d != dy {
        return Err(Error::Shape(format!("feature dimensions differ: {d} vs {dy}")));
    }
    let x = x.as_standard_layout();
    let y = y.as_standard_layout();

    let (x_norms, y_norms) = if metric == Metric::Cosine {
        let xn: Vec<f64> = x.rows().into_iter().map(|r| dot(slice(&r), slice(&r))).collect();
        let yn: Vec<f64> = y.rows().into_iter().map(|r| dot(slice(&r), slice(&r))).collect();
        if let Some(i) = xn.iter().position(|&v| v == 0.0) {
            return Err(Error::Degenerate(format!("row {i} of the source set has zero norm")));
        }
        if let Some(j) = yn.iter().position(|&v| v == 0.0) {
            return Err(Error::Degenerate(format!("row {j} of the target set has zero norm")));
        }
        (xn, yn)
    } else {
        (Vec::new(), Vec::new())
    };

    let row_bytes = (d * std::mem::size_of::<T>()).max(1);
    let tile = (block_budget / (2 * row_bytes)).max(1);

    let mut values = Array2::<f64>::zeros((n, m));
    values
        .axis_chunks_iter_mut(Axis(0), tile)
        .into_par_iter()
        .enumerate()
        .for_each(|(ti, mut out)| {
            let i0 = ti * tile;
            for j0 in (0..m).step_by(tile) {
                let j1 = (j0 + tile).min(m);
                for (di, mut out_row) in out.rows_mut().into_iter().enumerate() {
                    let i = i0 + di;
                    let xr = x.row(i);
                    let xs = slice(&xr);
                    for j in j0..j1 {
                        let yr = y.row(j);
                        let ys = slice(&yr);
                        out_row[j] = match metric {
                            Metric::Cosine => cosine(dot(xs, ys), x_norms[i], y_norms[j]),
                            other => other.distance(xs, ys),
                        };
                    }
                }
            }
        });

    Ok(CostMatrix {
        values,
        metric,
        row_source: String::new(),
        col_source: String::new(),
    })
}

fn slice<'a, T>(row: &'a ndarray::ArrayView1<'_, T>) -> &'a [T] {
    row.as_slice().expect("standard layout rows are contiguous")
}
