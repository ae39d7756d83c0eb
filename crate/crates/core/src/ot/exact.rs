use ndarray::{Array2, ArrayView2};

use super::{marginal_violation, validate, Diagnostics, SolverKind, TransportPlan};
use crate::error::{Error, Result};

/// Largest square size solved by permutation enumeration.
const MAX_PERMUTATION: usize = 8;
/// Largest `n * m` solved by min-cost flow.
const MAX_CELLS: usize = 64;
/// Residual capacities below this are treated as saturated.
const FLOW_EPS: f64 = 1e-15;

/// Unregularized OT on a tiny instance.
///
/// Uniform square problems with `n <= 8` are solved by enumerating all
/// permutations (Birkhoff: an optimal vertex is `1/n` times a permutation
/// matrix). Any other instance with `n * m <= 64` is solved by successive
/// shortest paths on the bipartite flow network. Larger inputs are rejected.
pub fn exact_ot_small(cost: ArrayView2<'_, f64>, p: &[f64], q: &[f64]) -> Result<TransportPlan> {
    validate(&cost, p, q, None)?;
    let (n, m) = cost.dim();
    let uniform_square = n == m && {
        let u = 1.0 / n as f64;
        p.iter().chain(q).all(|&x| (x - u).abs() <= 1e-12)
    };
    let (gamma, steps) = if uniform_square && n <= MAX_PERMUTATION {
        best_permutation(&cost)
    } else if n * m <= MAX_CELLS {
        min_cost_flow(&cost, p, q)?
    } else {
        return Err(Error::Size(format!(
            "exact solver handles uniform squares up to {MAX_PERMUTATION} or n*m <= {MAX_CELLS}, got {n}x{m}"
        )));
    };
    let violation = marginal_violation(&gamma, p, q);
    Ok(TransportPlan {
        gamma,
        p: p.to_vec(),
        q: q.to_vec(),
        epsilon: 0.0,
        diagnostics: Diagnostics {
            solver: SolverKind::Exact,
            iterations: steps,
            marginal_violation: violation,
            converged: true,
            absorptions: 0,
        },
    })
}

/// Heap's algorithm over all `n!` assignments; the first minimum in
/// enumeration order wins.
fn best_permutation(cost: &ArrayView2<'_, f64>) -> (Array2<f64>, usize) {
    let n = cost.nrows();
    let score = |perm: &[usize]| perm.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum::<f64>();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = score(&perm);
    let mut counters = vec![0usize; n];
    let mut visited = 1;
    let mut i = 1;
    while i < n {
        if counters[i] < i {
            let k = if i % 2 == 0 { 0 } else { counters[i] };
            perm.swap(k, i);
            visited += 1;
            let c = score(&perm);
            if c < best_cost {
                best_cost = c;
                best.copy_from_slice(&perm);
            }
            counters[i] += 1;
            i = 1;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    let mut gamma = Array2::zeros((n, n));
    for (row, &col) in best.iter().enumerate() {
        gamma[[row, col]] = 1.0 / n as f64;
    }
    (gamma, visited)
}

struct Edge {
    to: usize,
    cap: f64,
    cost: f64,
}

/// Successive shortest paths with Bellman–Ford (residual arcs carry
/// negative costs). Every augmentation saturates a supply, a demand or a
/// residual arc, so the loop is finite.
fn min_cost_flow(cost: &ArrayView2<'_, f64>, p: &[f64], q: &[f64]) -> Result<(Array2<f64>, usize)> {
    let (n, m) = cost.dim();
    let (source, sink) = (n + m, n + m + 1);
    let nodes = n + m + 2;
    let mut edges: Vec<Edge> = Vec::new();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let mut add = |edges: &mut Vec<Edge>, from: usize, to: usize, cap: f64, cost: f64| {
        adjacency[from].push(edges.len());
        edges.push(Edge { to, cap, cost });
        adjacency[to].push(edges.len());
        edges.push(Edge { to: from, cap: 0.0, cost: -cost });
    };
    for (i, &pi) in p.iter().enumerate() {
        add(&mut edges, source, i, pi, 0.0);
    }
    let first_transport = edges.len();
    for i in 0..n {
        for j in 0..m {
            add(&mut edges, i, n + j, f64::INFINITY, cost[[i, j]]);
        }
    }
    for (j, &qj) in q.iter().enumerate() {
        add(&mut edges, n + j, sink, qj, 0.0);
    }

    let mut remaining: f64 = p.iter().sum::<f64>().min(q.iter().sum());
    let mut steps = 0;
    while remaining > FLOW_EPS {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via = vec![usize::MAX; nodes];
        dist[source] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if dist[u] == f64::INFINITY {
                    continue;
                }
                for &e in &adjacency[u] {
                    let edge = &edges[e];
                    if edge.cap > FLOW_EPS && dist[u] + edge.cost < dist[edge.to] - 1e-15 {
                        dist[edge.to] = dist[u] + edge.cost;
                        via[edge.to] = e;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[sink] == f64::INFINITY {
            break;
        }
        let mut push = remaining;
        let mut node = sink;
        while node != source {
            let e = via[node];
            push = push.min(edges[e].cap);
            node = edges[e ^ 1].to;
        }
        let mut node = sink;
        while node != source {
            let e = via[node];
            edges[e].cap -= push;
            edges[e ^ 1].cap += push;
            node = edges[e ^ 1].to;
        }
        remaining -= push;
        steps += 1;
    }
    if remaining > 1e-9 {
        return Err(Error::Numerical(format!("flow left {remaining} mass unrouted")));
    }

    let mut gamma = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            // the reverse arc's capacity is the flow on the forward arc
            let e = first_transport + 2 * (i * m + j);
            gamma[[i, j]] = edges[e + 1].cap;
        }
    }
    Ok((gamma, steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::{transport_cost, uniform};
    use crate::rng::SeededRng;
    use ndarray::array;

    fn random_cost(n: usize, m: usize, seed: u64) -> Array2<f64> {
        let mut rng = SeededRng::new(seed);
        Array2::from_shape_simple_fn((n, m), || rng.next_f64())
    }

    /// All permutations of `0..n` by recursion, independent of Heap's order.
    fn all_permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in all_permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn two_by_two_cases() {
        let u = uniform(2);
        let a = exact_ot_small(array![[0.0, 1.0], [1.0, 0.0]].view(), &u, &u).unwrap();
        assert_eq!(a.gamma, array![[0.5, 0.0], [0.0, 0.5]]);
        let b = exact_ot_small(array![[1.0, 0.0], [0.0, 1.0]].view(), &u, &u).unwrap();
        assert_eq!(b.gamma, array![[0.0, 0.5], [0.5, 0.0]]);
    }

    #[test]
    fn matches_brute_force_over_permutations() {
        for seed in 0..5 {
            let c = random_cost(5, 5, 100 + seed);
            let perms = all_permutations(5);
            assert_eq!(perms.len(), 120);
            let best = perms
                .iter()
                .map(|p| p.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum::<f64>() / 5.0)
                .fold(f64::INFINITY, f64::min);
            let plan = exact_ot_small(c.view(), &uniform(5), &uniform(5)).unwrap();
            let got = transport_cost(&plan, c.view()).unwrap();
            assert!((got - best).abs() < 1e-12, "{got} vs {best}");
        }
    }

    #[test]
    fn flow_agrees_with_enumeration() {
        for seed in 0..5 {
            let c = random_cost(6, 6, 200 + seed);
            let u = uniform(6);
            let enumerated = exact_ot_small(c.view(), &u, &u).unwrap();
            let (gamma, _) = min_cost_flow(&c.view(), &u, &u).unwrap();
            let a = transport_cost(&enumerated, c.view()).unwrap();
            let b: f64 = gamma.iter().zip(c.iter()).map(|(g, c)| g * c).sum();
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn general_marginals_are_feasible_and_optimal() {
        // source mass at 0 and 1, target at 0 and 2 on a line
        let c = array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.0]];
        let p = [0.5, 0.5];
        let q = [0.5, 0.0, 0.5];
        let plan = exact_ot_small(c.view(), &p, &q).unwrap();
        assert!(plan.diagnostics.marginal_violation < 1e-12);
        assert!((transport_cost(&plan, c.view()).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_large_instances() {
        let c = Array2::zeros((9, 9));
        assert!(matches!(
            exact_ot_small(c.view(), &uniform(9), &uniform(9)),
            Err(Error::Size(_))
        ));
    }
}
