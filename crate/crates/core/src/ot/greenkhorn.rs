use ndarray::{Array2, ArrayView2};

use super::kernel::{
    epsilon_schedule, in_bounds, mat_t_vec, mat_vec, StabilizedKernel, STAGE_PASSES, STAGE_TOL,
};
use super::{marginal_violation, validate, Diagnostics, SolverKind, SolverParams, TransportPlan};
use crate::error::Result;

/// Divergence between target mass `a` and current mass `b`,
/// `b - a + a ln(a / b)`.
fn gain(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        b
    } else {
        b - a + a * (a / b).ln()
    }
}

struct State<'a> {
    kernel: StabilizedKernel<'a>,
    kt: Array2<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    rows: Vec<f64>,
    cols: Vec<f64>,
}

impl State<'_> {
    fn refresh_transpose(&mut self) {
        self.kt = self.kernel.k.t().as_standard_layout().into_owned();
    }

    fn recompute_marginals(&mut self) {
        let mut kv = vec![0.0; self.u.len()];
        mat_vec(&self.kernel.k, &self.v, &mut kv);
        for ((r, &ui), k) in self.rows.iter_mut().zip(&self.u).zip(kv) {
            *r = ui * k;
        }
        let mut ktu = vec![0.0; self.v.len()];
        mat_t_vec(&self.kernel.k, &self.u, &mut ktu);
        for ((c, &vj), k) in self.cols.iter_mut().zip(&self.v).zip(ktu) {
            *c = vj * k;
        }
    }

    fn absorb(&mut self) {
        self.kernel.absorb(&mut self.u, &mut self.v);
        self.refresh_transpose();
        self.recompute_marginals();
    }
}

/// Greedy coordinate variant of Sinkhorn.
///
/// Each step rescales the single row or column whose marginal is furthest
/// from its target under `b - a + a ln(a/b)`, then patches the opposite
/// marginals incrementally. The fixed point, stopping rule and warm-start
/// schedule are those of [`super::sinkhorn`]; `iterations` counts
/// coordinate updates, capped at `max_iter * (n + m)`.
pub fn greenkhorn(
    cost: ArrayView2<'_, f64>,
    p: &[f64],
    q: &[f64],
    params: &SolverParams,
) -> Result<TransportPlan> {
    validate(&cost, p, q, Some(params))?;
    let (n, m) = cost.dim();
    let schedule = epsilon_schedule(&cost, params.epsilon);
    let kernel = StabilizedKernel::new(cost, schedule[0]);
    let mut st = State {
        kt: Array2::zeros((0, 0)),
        u: p.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect(),
        v: q.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect(),
        rows: vec![0.0; n],
        cols: vec![0.0; m],
        kernel,
    };
    st.refresh_transpose();
    st.recompute_marginals();

    let sweep = n + m;
    let total = params.max_iter.saturating_mul(sweep);
    let mut updates = 0usize;
    let mut stopped = false;
    for (stage, &eps) in schedule.iter().enumerate() {
        let last = stage + 1 == schedule.len();
        if stage > 0 {
            st.kernel.restage(&mut st.u, &mut st.v, eps);
            st.refresh_transpose();
            st.recompute_marginals();
        }
        let left = total - updates;
        let (tol, budget) = if last {
            (params.tol, left)
        } else {
            (params.tol.max(STAGE_TOL), (left / 2).min(STAGE_PASSES * sweep))
        };
        let (made, done) = st.run(p, q, tol, budget)?;
        updates += made;
        stopped = last && done;
    }

    let gamma = st.kernel.plan(&st.u, &st.v);
    let violation = marginal_violation(&gamma, p, q);
    Ok(TransportPlan {
        gamma,
        p: p.to_vec(),
        q: q.to_vec(),
        epsilon: params.epsilon,
        diagnostics: Diagnostics {
            solver: SolverKind::Greenkhorn,
            iterations: updates,
            marginal_violation: violation,
            converged: stopped && violation <= params.tol,
            absorptions: st.kernel.absorptions,
        },
    })
}

impl State<'_> {
    /// Greedy updates at the kernel's current regularization. Returns the
    /// updates made and whether the marginal error reached `tol`.
    fn run(&mut self, p: &[f64], q: &[f64], tol: f64, budget: usize) -> Result<(usize, bool)> {
        let sweep = p.len() + q.len();
        let mut updates = 0usize;
        loop {
            if updates > 0 && updates % sweep == 0 {
                self.recompute_marginals();
            }
            let mut violation = 0.0;
            let (mut best_row, mut row_gain) = (0, f64::NEG_INFINITY);
            for (i, (&r, &pi)) in self.rows.iter().zip(p).enumerate() {
                violation += (r - pi).abs();
                let g = gain(pi, r);
                if g > row_gain {
                    best_row = i;
                    row_gain = g;
                }
            }
            let (mut best_col, mut col_gain) = (0, f64::NEG_INFINITY);
            for (j, (&c, &qj)) in self.cols.iter().zip(q).enumerate() {
                violation += (c - qj).abs();
                let g = gain(qj, c);
                if g > col_gain {
                    best_col = j;
                    col_gain = g;
                }
            }
            if violation <= tol {
                return Ok((updates, true));
            }
            if updates == budget {
                return Ok((updates, false));
            }
            updates += 1;

            if row_gain >= col_gain {
                let i = best_row;
                let krow = self.kernel.k.row(i);
                let kv: f64 = krow.iter().zip(&self.v).map(|(a, b)| a * b).sum();
                let new_u = if p[i] > 0.0 { p[i] / kv } else { 0.0 };
                if !(new_u.is_finite() && in_bounds(new_u)) {
                    self.absorb();
                    let kv: f64 = self.kernel.k.row(i).iter().zip(&self.v).map(|(a, b)| a * b).sum();
                    if !(kv > 0.0 && in_bounds(p[i] / kv)) {
                        self.kernel.log_row_update(p, &mut self.u)?;
                        self.refresh_transpose();
                        self.recompute_marginals();
                    }
                    continue;
                }
                let delta = new_u - self.u[i];
                for ((c, &k), &vj) in self.cols.iter_mut().zip(krow.iter()).zip(&self.v) {
                    *c += delta * k * vj;
                }
                self.u[i] = new_u;
                self.rows[i] = new_u * kv;
            } else {
                let j = best_col;
                let kcol = self.kt.row(j);
                let ku: f64 = kcol.iter().zip(&self.u).map(|(a, b)| a * b).sum();
                let new_v = if q[j] > 0.0 { q[j] / ku } else { 0.0 };
                if !(new_v.is_finite() && in_bounds(new_v)) {
                    self.absorb();
                    let ku: f64 = self.kt.row(j).iter().zip(&self.u).map(|(a, b)| a * b).sum();
                    if !(ku > 0.0 && in_bounds(q[j] / ku)) {
                        self.kernel.log_col_update(q, &mut self.v)?;
                        self.refresh_transpose();
                        self.recompute_marginals();
                    }
                    continue;
                }
                let delta = new_v - self.v[j];
                for ((r, &k), &ui) in self.rows.iter_mut().zip(kcol.iter()).zip(&self.u) {
                    *r += delta * k * ui;
                }
                self.v[j] = new_v;
                self.cols[j] = new_v * ku;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::{sinkhorn, transport_cost, uniform};
    use crate::rng::SeededRng;
    use ndarray::array;

    fn random_cost(n: usize, m: usize, seed: u64) -> Array2<f64> {
        let mut rng = SeededRng::new(seed);
        Array2::from_shape_simple_fn((n, m), || rng.next_f64())
    }

    #[test]
    fn single_point() {
        let plan = greenkhorn(array![[0.5]].view(), &[1.0], &[1.0], &SolverParams::default()).unwrap();
        assert_eq!(plan.gamma, array![[1.0]]);
    }

    #[test]
    fn zero_cost_gives_independent_coupling() {
        let plan = greenkhorn(
            Array2::zeros((4, 4)).view(),
            &uniform(4),
            &uniform(4),
            &SolverParams::default(),
        )
        .unwrap();
        assert!(plan.gamma.iter().all(|&g| (g - 1.0 / 16.0).abs() < 1e-9));
    }

    #[test]
    fn agrees_with_sinkhorn_on_cost() {
        let c = random_cost(10, 10, 11);
        let params = SolverParams { epsilon: 0.05, ..SolverParams::default() };
        let (p, q) = (uniform(10), uniform(10));
        let g = greenkhorn(c.view(), &p, &q, &params).unwrap();
        let s = sinkhorn(c.view(), &p, &q, &params).unwrap();
        assert!(g.diagnostics.converged && s.diagnostics.converged);
        let (a, b) = (transport_cost(&g, c.view()).unwrap(), transport_cost(&s, c.view()).unwrap());
        assert!((a - b).abs() <= 1e-4 * b, "{a} vs {b}");
    }

    #[test]
    fn handles_large_costs() {
        let c = random_cost(5, 6, 12).mapv(|x| 500.0 * x);
        let params = SolverParams { epsilon: 0.01, tol: 1e-8, max_iter: 100_000 };
        let plan = greenkhorn(c.view(), &uniform(5), &uniform(6), &params).unwrap();
        assert!(plan.diagnostics.converged, "{:?}", plan.diagnostics);
        let reference = sinkhorn(c.view(), &uniform(5), &uniform(6), &params).unwrap();
        let diff = plan.gamma.iter().zip(&reference.gamma).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-6, "{diff}");
    }

    #[test]
    fn gain_is_zero_on_target() {
        assert_eq!(gain(0.3, 0.3), 0.0);
        assert!(gain(0.3, 0.1) > 0.0);
        assert!(gain(0.1, 0.3) > 0.0);
        assert_eq!(gain(0.0, 0.2), 0.2);
    }
}
