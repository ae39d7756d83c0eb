use ndarray::ArrayView2;

use super::kernel::{
    epsilon_schedule, in_bounds, mat_t_vec, mat_vec, StabilizedKernel, STAGE_PASSES, STAGE_TOL,
};
use super::{marginal_violation, validate, Diagnostics, SolverKind, SolverParams, TransportPlan};
use crate::error::Result;

/// Entropic OT by alternating row and column scaling.
///
/// Stops once the row-marginal error of the current plan (columns are
/// exact after each column update) drops to `tol`, or after `max_iter`
/// passes; in the latter case the plan is returned with
/// `converged = false`. Scalings leaving `[1e-100, 1e100]` are absorbed into
/// log-domain potentials and the kernel is rebuilt.
///
/// The potentials are warm-started by a short run at each regularization
/// of [`epsilon_schedule`]; those passes count towards `max_iter`.
pub fn sinkhorn(
    cost: ArrayView2<'_, f64>,
    p: &[f64],
    q: &[f64],
    params: &SolverParams,
) -> Result<TransportPlan> {
    validate(&cost, p, q, Some(params))?;
    let (n, m) = cost.dim();
    let schedule = epsilon_schedule(&cost, params.epsilon);
    let mut kernel = StabilizedKernel::new(cost, schedule[0]);
    let mut u: Vec<f64> = p.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect();
    let mut v: Vec<f64> = q.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect();
    let mut scratch = (vec![0.0; n], vec![0.0; m]);

    let mut iterations = 0;
    let mut stopped = false;
    for (stage, &eps) in schedule.iter().enumerate() {
        let last = stage + 1 == schedule.len();
        if stage > 0 {
            kernel.restage(&mut u, &mut v, eps);
        }
        let left = params.max_iter - iterations;
        let (tol, budget) = if last {
            (params.tol, left)
        } else {
            (params.tol.max(STAGE_TOL), (left / 2).min(STAGE_PASSES))
        };
        let (passes, done) = scale(&mut kernel, &mut u, &mut v, p, q, tol, budget, &mut scratch)?;
        iterations += passes;
        stopped = last && done;
    }

    let gamma = kernel.plan(&u, &v);
    let violation = marginal_violation(&gamma, p, q);
    Ok(TransportPlan {
        gamma,
        p: p.to_vec(),
        q: q.to_vec(),
        epsilon: params.epsilon,
        diagnostics: Diagnostics {
            solver: SolverKind::Sinkhorn,
            iterations,
            marginal_violation: violation,
            converged: stopped && violation <= params.tol,
            absorptions: kernel.absorptions,
        },
    })
}

/// Alternating updates at the kernel's current regularization. Returns the
/// passes made and whether the row error reached `tol`.
#[allow(clippy::too_many_arguments)]
fn scale(
    kernel: &mut StabilizedKernel<'_>,
    u: &mut [f64],
    v: &mut [f64],
    p: &[f64],
    q: &[f64],
    tol: f64,
    budget: usize,
    (kv, ktu): &mut (Vec<f64>, Vec<f64>),
) -> Result<(usize, bool)> {
    let mut passes = 0;
    loop {
        mat_vec(&kernel.k, v, kv);
        if passes > 0 {
            let err: f64 = u.iter().zip(kv.iter()).zip(p).map(|((ui, k), pi)| (ui * k - pi).abs()).sum();
            if err <= tol {
                return Ok((passes, true));
            }
        }
        if passes == budget {
            return Ok((passes, false));
        }
        passes += 1;

        if p.iter().zip(kv.iter()).any(|(&pi, &k)| pi > 0.0 && !(k > 0.0 && k.is_finite())) {
            kernel.absorb(u, v);
            kernel.log_row_update(p, u)?;
        } else {
            for ((ui, &pi), &k) in u.iter_mut().zip(p).zip(kv.iter()) {
                *ui = if pi > 0.0 { pi / k } else { 0.0 };
            }
        }

        mat_t_vec(&kernel.k, u, ktu);
        if q.iter().zip(ktu.iter()).any(|(&qj, &k)| qj > 0.0 && !(k > 0.0 && k.is_finite())) {
            kernel.absorb(u, v);
            kernel.log_col_update(q, v)?;
        } else {
            for ((vj, &qj), &k) in v.iter_mut().zip(q).zip(ktu.iter()) {
                *vj = if qj > 0.0 { qj / k } else { 0.0 };
            }
        }

        if !u.iter().chain(v.iter()).all(|&s| in_bounds(s)) {
            kernel.absorb(u, v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::{entropy, exact_ot_small, transport_cost, uniform};
    use crate::rng::SeededRng;
    use ndarray::{array, Array2};

    fn random_cost(n: usize, m: usize, seed: u64) -> Array2<f64> {
        let mut rng = SeededRng::new(seed);
        Array2::from_shape_simple_fn((n, m), || rng.next_f64())
    }

    fn max_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn single_point() {
        let plan = sinkhorn(array![[3.0]].view(), &[1.0], &[1.0], &SolverParams::default()).unwrap();
        assert_eq!(plan.gamma, array![[1.0]]);
        assert!(plan.diagnostics.converged);
    }

    #[test]
    fn zero_cost_gives_independent_coupling() {
        let (p, q) = (uniform(3), uniform(5));
        for eps in [1e-3, 0.01, 1.0, 50.0] {
            let params = SolverParams { epsilon: eps, ..SolverParams::default() };
            let plan = sinkhorn(Array2::zeros((3, 5)).view(), &p, &q, &params).unwrap();
            assert!(plan.gamma.iter().all(|&g| (g - 1.0 / 15.0).abs() < 1e-9));
        }
    }

    #[test]
    fn uniform_permutation_instance() {
        let c = Array2::from_shape_fn((4, 4), |(i, j)| if i == j { 0.0 } else { 1.0 });
        let params = SolverParams { epsilon: 1e-3, ..SolverParams::default() };
        let plan = sinkhorn(c.view(), &uniform(4), &uniform(4), &params).unwrap();
        let target = Array2::from_shape_fn((4, 4), |(i, j)| if i == j { 0.25 } else { 0.0 });
        assert!(max_diff(&plan.gamma, &target) <= 1e-3);
        assert!(plan.diagnostics.converged);
        assert!(plan.diagnostics.marginal_violation <= 1e-6);
    }

    #[test]
    fn unnormalized_costs_need_the_log_domain() {
        // C / eps reaches 1e6: the plain kernel would be all zeros
        let c = random_cost(6, 6, 3).mapv(|x| 1e4 * x);
        let params = SolverParams { epsilon: 0.01, tol: 1e-9, max_iter: 100_000 };
        let plan = sinkhorn(c.view(), &uniform(6), &uniform(6), &params).unwrap();
        assert!(plan.gamma.iter().all(|g| g.is_finite() && *g >= 0.0));
        assert!(plan.diagnostics.converged, "{:?}", plan.diagnostics);
        let exact = exact_ot_small(c.view(), &uniform(6), &uniform(6)).unwrap();
        let a = transport_cost(&plan, c.view()).unwrap();
        let b = transport_cost(&exact, c.view()).unwrap();
        assert!((a - b).abs() <= 1e-6 * b, "{a} vs {b}");
    }

    #[test]
    fn scale_covariance() {
        let c = random_cost(5, 7, 4);
        let (p, q) = (uniform(5), uniform(7));
        let params = SolverParams { epsilon: 0.1, tol: 1e-12, max_iter: 100_000 };
        let a = sinkhorn(c.view(), &p, &q, &params).unwrap();
        let scaled = SolverParams { epsilon: 0.1 * 37.0, ..params };
        let b = sinkhorn(c.mapv(|x| 37.0 * x).view(), &p, &q, &scaled).unwrap();
        assert!(max_diff(&a.gamma, &b.gamma) <= 1e-9);
    }

    #[test]
    fn entropy_decreases_with_epsilon() {
        let c = random_cost(8, 8, 5);
        let (p, q) = (uniform(8), uniform(8));
        let entropies: Vec<f64> = [1.0, 0.1, 0.01]
            .iter()
            .map(|&eps| {
                let params = SolverParams { epsilon: eps, tol: 1e-10, max_iter: 100_000 };
                entropy(&sinkhorn(c.view(), &p, &q, &params).unwrap().gamma)
            })
            .collect();
        assert!(entropies.windows(2).all(|w| w[1] <= w[0]), "{entropies:?}");
    }

    #[test]
    fn non_uniform_and_zero_mass_marginals() {
        let c = random_cost(4, 3, 6);
        let p = [0.5, 0.0, 0.3, 0.2];
        let q = [0.25, 0.25, 0.5];
        let params = SolverParams { epsilon: 0.05, tol: 1e-10, max_iter: 100_000 };
        let plan = sinkhorn(c.view(), &p, &q, &params).unwrap();
        assert!(plan.diagnostics.converged);
        assert!(plan.gamma.row(1).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn reports_non_convergence() {
        let c = random_cost(10, 10, 7);
        let params = SolverParams { epsilon: 1e-4, tol: 1e-14, max_iter: 3 };
        let plan = sinkhorn(c.view(), &uniform(10), &uniform(10), &params).unwrap();
        assert!(!plan.diagnostics.converged);
        assert_eq!(plan.diagnostics.iterations, 3);
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = array![[0.0, f64::INFINITY], [1.0, 0.0]];
        assert!(sinkhorn(c.view(), &uniform(2), &uniform(2), &SolverParams::default()).is_err());
        let zero_eps = SolverParams { epsilon: 0.0, ..SolverParams::default() };
        let ok = array![[0.0, 1.0], [1.0, 0.0]];
        assert!(sinkhorn(ok.view(), &uniform(2), &uniform(2), &zero_eps).is_err());
    }
}
