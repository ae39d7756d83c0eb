//! Discrete optimal transport between two weighted point sets.
//!
//! [`sinkhorn`] and [`greenkhorn`] solve the entropically regularized
//! problem `min <G, C> - eps * H(G)` over couplings with marginals `p` and
//! `q`; both converge to the same plan. [`exact_ot_small`] solves the
//! unregularized problem exactly on tiny instances and serves as a
//! reference.

mod exact;
mod greenkhorn;
mod kernel;
mod sinkhorn;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use exact::exact_ot_small;
pub use greenkhorn::greenkhorn;
pub use sinkhorn::sinkhorn;

/// Regularization `0.01`, tolerance `1e-6`, `10_000` passes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub epsilon: f64,
    /// Bound on `||G 1 - p||_1 + ||G^T 1 - q||_1` for convergence.
    pub tol: f64,
    /// Full passes for Sinkhorn; Greenkhorn gets `max_iter * (n + m)`
    /// single-coordinate updates.
    pub max_iter: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            tol: 1e-6,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Sinkhorn,
    Greenkhorn,
    Exact,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Sinkhorn => "sinkhorn",
            SolverKind::Greenkhorn => "greenkhorn",
            SolverKind::Exact => "exact",
        })
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sinkhorn" => Ok(SolverKind::Sinkhorn),
            "greenkhorn" => Ok(SolverKind::Greenkhorn),
            "exact" => Ok(SolverKind::Exact),
            other => Err(Error::InvalidParameter(format!("unknown solver {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub solver: SolverKind,
    /// Sinkhorn passes, Greenkhorn coordinate updates, or exact-solver steps.
    pub iterations: usize,
    /// `||G 1 - p||_1 + ||G^T 1 - q||_1` of the returned plan.
    pub marginal_violation: f64,
    pub converged: bool,
    /// Number of times the scalings were folded back into the log-domain
    /// potentials.
    pub absorptions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub gamma: Array2<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub epsilon: f64,
    pub diagnostics: Diagnostics,
}

impl TransportPlan {
    pub fn shape(&self) -> (usize, usize) {
        self.gamma.dim()
    }
}

pub fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// `<G, C>`.
pub fn transport_cost(plan: &TransportPlan, cost: ArrayView2<'_, f64>) -> Result<f64> {
    if plan.gamma.dim() != cost.dim() {
        return Err(Error::Shape(format!(
            "plan is {:?} but cost is {:?}",
            plan.gamma.dim(),
            cost.dim()
        )));
    }
    Ok(plan.gamma.iter().zip(cost.iter()).map(|(g, c)| g * c).sum())
}

/// `H(G) = -sum G_ij ln G_ij` with `0 ln 0 = 0`.
pub fn entropy(gamma: &Array2<f64>) -> f64 {
    -gamma
        .iter()
        .filter(|&&g| g > 0.0)
        .map(|&g| g * g.ln())
        .sum::<f64>()
}

pub fn marginal_violation(gamma: &Array2<f64>, p: &[f64], q: &[f64]) -> f64 {
    let rows: f64 = gamma
        .rows()
        .into_iter()
        .zip(p)
        .map(|(r, &pi)| (r.sum() - pi).abs())
        .sum();
    let cols: f64 = gamma
        .columns()
        .into_iter()
        .zip(q)
        .map(|(c, &qj)| (c.sum() - qj).abs())
        .sum();
    rows + cols
}

pub(crate) fn validate(
    cost: &ArrayView2<'_, f64>,
    p: &[f64],
    q: &[f64],
    params: Option<&SolverParams>,
) -> Result<()> {
    let (n, m) = cost.dim();
    if n == 0 || m == 0 {
        return Err(Error::Shape("cost matrix is empty".into()));
    }
    if p.len() != n || q.len() != m {
        return Err(Error::Shape(format!(
            "marginals of length {} and {} for a {n}x{m} cost",
            p.len(),
            q.len()
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParameter("cost matrix has non-finite entries".into()));
    }
    for (name, w) in [("p", p), ("q", q)] {
        if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name} has negative or non-finite mass")));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("{name} sums to {total}, not 1")));
        }
    }
    if let Some(params) = params {
        if !(params.epsilon > 0.0 && params.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                params.epsilon
            )));
        }
        if !(params.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", params.tol)));
        }
        if params.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be positive".into()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn plan(gamma: Array2<f64>) -> TransportPlan {
        TransportPlan {
            gamma,
            p: vec![],
            q: vec![],
            epsilon: 0.0,
            diagnostics: Diagnostics {
                solver: SolverKind::Exact,
                iterations: 0,
                marginal_violation: 0.0,
                converged: true,
                absorptions: 0,
            },
        }
    }

    #[test]
    fn transport_cost_cases() {
        let zero = Array2::zeros((2, 3));
        let g = Array2::from_elem((2, 3), 1.0 / 6.0);
        assert_eq!(transport_cost(&plan(g), zero.view()).unwrap(), 0.0);
        let half_id = array![[0.5, 0.0], [0.0, 0.5]];
        let c = array![[0.0, 1.0], [1.0, 0.0]];
        assert_eq!(transport_cost(&plan(half_id.clone()), c.view()).unwrap(), 0.0);
        assert!(transport_cost(&plan(half_id), zero.view()).is_err());
    }

    #[test]
    fn validation() {
        let c = array![[0.0, 1.0], [1.0, 0.0]];
        let u = uniform(2);
        let ok = SolverParams::default();
        assert!(validate(&c.view(), &u, &u, Some(&ok)).is_ok());
        let bad_eps = SolverParams { epsilon: 0.0, ..ok };
        assert!(validate(&c.view(), &u, &u, Some(&bad_eps)).is_err());
        assert!(validate(&c.view(), &[0.7, 0.7], &u, None).is_err());
        assert!(validate(&c.view(), &[1.5, -0.5], &u, None).is_err());
        assert!(validate(&c.view(), &[1.0], &u, None).is_err());
        let nan = array![[0.0, f64::NAN], [1.0, 0.0]];
        assert!(matches!(
            validate(&nan.view(), &u, &u, None),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn entropy_of_uniform() {
        let g = Array2::from_elem((2, 2), 0.25);
        assert!((entropy(&g) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&array![[1.0, 0.0]]), 0.0);
    }
}
