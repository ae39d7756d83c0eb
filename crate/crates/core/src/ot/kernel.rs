use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Scalings outside `[LOWER, UPPER]` are absorbed into the potentials.
pub(crate) const LOWER: f64 = 1e-100;
pub(crate) const UPPER: f64 = 1e100;
/// Matrices smaller than this are processed on the calling thread.
const PARALLEL_MIN: usize = 1 << 14;
/// Ratio between consecutive regularizations of the warm-start schedule.
const SCHEDULE_RATIO: f64 = 0.5;
/// Intermediate stages stop at this marginal violation...
pub(crate) const STAGE_TOL: f64 = 1e-4;
/// ...or after this many passes, and never take more than half of what is
/// left of `max_iter`.
pub(crate) const STAGE_PASSES: usize = 2_000;

/// Decreasing regularizations ending at `eps`, starting near the spread of
/// the cost. At small `eps` a cold start spends most of its passes moving
/// the potentials; solving a chain of coarser problems first and reusing
/// their potentials reaches the same final fixed point much sooner.
pub(crate) fn epsilon_schedule(cost: &ArrayView2<'_, f64>, eps: f64) -> Vec<f64> {
    let (lo, hi) = cost
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| (lo.min(c), hi.max(c)));
    let spread = hi - lo;
    let mut stages = Vec::new();
    let mut e = spread;
    while e > eps / SCHEDULE_RATIO {
        stages.push(e);
        e *= SCHEDULE_RATIO;
    }
    stages.push(eps);
    stages
}

/// Gibbs kernel with log-domain potentials folded in:
/// `K_ij = exp((alpha_i + beta_j - C_ij) / eps)`, so the plan is
/// `diag(u) K diag(v)`.
///
/// The potentials start at the row minima of `C` and the column minima of
/// the remainder, which puts a 1 in every row and column of `K` however
/// large `C / eps` is.
pub(crate) struct StabilizedKernel<'a> {
    cost: ArrayView2<'a, f64>,
    eps: f64,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    pub(crate) k: Array2<f64>,
    pub(crate) absorptions: usize,
}

impl<'a> StabilizedKernel<'a> {
    pub(crate) fn new(cost: ArrayView2<'a, f64>, eps: f64) -> Self {
        let (n, m) = cost.dim();
        let alpha: Vec<f64> = cost
            .rows()
            .into_iter()
            .map(|r| r.iter().cloned().fold(f64::INFINITY, f64::min))
            .collect();
        let mut beta = vec![f64::INFINITY; m];
        for (i, row) in cost.rows().into_iter().enumerate() {
            for (b, &c) in beta.iter_mut().zip(row.iter()) {
                *b = b.min(c - alpha[i]);
            }
        }
        let mut kernel = Self {
            cost,
            eps,
            alpha,
            beta,
            k: Array2::zeros((n, m)),
            absorptions: 0,
        };
        kernel.rebuild();
        kernel
    }

    pub(crate) fn rebuild(&mut self) {
        let (alpha, beta, eps, cost) = (&self.alpha, &self.beta, self.eps, &self.cost);
        let fill = |(i, mut row): (usize, ndarray::ArrayViewMut1<'_, f64>)| {
            for (j, k) in row.iter_mut().enumerate() {
                *k = ((alpha[i] + beta[j] - cost[[i, j]]) / eps).exp();
            }
        };
        if self.k.len() < PARALLEL_MIN {
            self.k.axis_iter_mut(Axis(0)).enumerate().for_each(fill);
        } else {
            self.k.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(fill);
        }
    }


    /// Fold positive scalings into the potentials and reset them to 1.
    /// Zero scalings (zero-mass rows or columns) stay zero.
    pub(crate) fn absorb(&mut self, u: &mut [f64], v: &mut [f64]) {
        self.fold(u, v);
        self.absorptions += 1;
        self.rebuild();
    }

    /// Fold the scalings and continue at a new regularization.
    pub(crate) fn restage(&mut self, u: &mut [f64], v: &mut [f64], eps: f64) {
        self.fold(u, v);
        self.eps = eps;
        self.rebuild();
    }

    fn fold(&mut self, u: &mut [f64], v: &mut [f64]) {
        for (a, s) in self.alpha.iter_mut().zip(u.iter_mut()) {
            if *s > 0.0 {
                *a += self.eps * s.ln();
                *s = 1.0;
            }
        }
        for (b, s) in self.beta.iter_mut().zip(v.iter_mut()) {
            if *s > 0.0 {
                *b += self.eps * s.ln();
                *s = 1.0;
            }
        }
    }

    /// Exact log-sum-exp update of the row potentials so that, with
    /// `v = 1`, every row of the plan carries its target mass. Used when
    /// `K v` underflows for some row. Expects scalings already absorbed.
    pub(crate) fn log_row_update(&mut self, p: &[f64], u: &mut [f64]) -> Result<()> {
        let eps = self.eps;
        for (i, row) in self.cost.rows().into_iter().enumerate() {
            if p[i] == 0.0 {
                continue;
            }
            let lse = log_sum_exp(row.iter().zip(&self.beta).map(|(&c, &b)| (b - c) / eps));
            if !lse.is_finite() {
                return Err(underflow());
            }
            self.alpha[i] = eps * (p[i].ln() - lse);
            u[i] = 1.0;
        }
        self.absorptions += 1;
        self.rebuild();
        Ok(())
    }

    pub(crate) fn log_col_update(&mut self, q: &[f64], v: &mut [f64]) -> Result<()> {
        let eps = self.eps;
        for (j, col) in self.cost.columns().into_iter().enumerate() {
            if q[j] == 0.0 {
                continue;
            }
            let lse = log_sum_exp(col.iter().zip(&self.alpha).map(|(&c, &a)| (a - c) / eps));
            if !lse.is_finite() {
                return Err(underflow());
            }
            self.beta[j] = eps * (q[j].ln() - lse);
            v[j] = 1.0;
        }
        self.absorptions += 1;
        self.rebuild();
        Ok(())
    }

    pub(crate) fn plan(&self, u: &[f64], v: &[f64]) -> Array2<f64> {
        let mut gamma = self.k.clone();
        for (mut row, &ui) in gamma.rows_mut().into_iter().zip(u) {
            for (g, &vj) in row.iter_mut().zip(v) {
                *g *= ui * vj;
            }
        }
        gamma
    }
}

fn underflow() -> Error {
    Error::Numerical(
        "every kernel entry of a row or column underflowed even in the log domain; \
         rescale the costs (--normalize-cost) or raise epsilon"
            .into(),
    )
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `K v`, each row reduced sequentially.
pub(crate) fn mat_vec(k: &Array2<f64>, v: &[f64], out: &mut [f64]) {
    if k.len() < PARALLEL_MIN {
        for (o, row) in out.iter_mut().zip(k.axis_iter(Axis(0))) {
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        return;
    }
    out.par_iter_mut()
        .zip(k.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(o, row)| {
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        });
}

/// `K^T u`, accumulated row by row within fixed column chunks.
pub(crate) fn mat_t_vec(k: &Array2<f64>, u: &[f64], out: &mut [f64]) {
    const CHUNK: usize = 256;
    let kernel = |(ci, chunk): (usize, &mut [f64])| {
        let j0 = ci * CHUNK;
        chunk.iter_mut().for_each(|o| *o = 0.0);
        for (row, &ui) in k.axis_iter(Axis(0)).zip(u) {
            if ui == 0.0 {
                continue;
            }
            let src = &row.as_slice().expect("kernel is row-major")[j0..j0 + chunk.len()];
            for (o, &kij) in chunk.iter_mut().zip(src) {
                *o += kij * ui;
            }
        }
    };
    if k.len() < PARALLEL_MIN {
        out.chunks_mut(CHUNK).enumerate().for_each(kernel);
    } else {
        out.par_chunks_mut(CHUNK).enumerate().for_each(kernel);
    }
}

pub(crate) fn in_bounds(s: f64) -> bool {
    s == 0.0 || (LOWER..=UPPER).contains(&s)
}
