//! Exact discrete transportation problem by successive shortest paths.
//!
//! Supplies `a` (rows) and demands `b` (columns) are shipped along the
//! complete bipartite graph. Each round runs Dijkstra on reduced costs over the
//! residual graph and augments along the cheapest path to an unsaturated
//! column. Reduced costs stay nonnegative, so the final plan satisfies
//! complementary slackness and is optimal.

/// Amounts below this are treated as exhausted.
const MASS_EPS: f64 = 1e-15;

/// Stop once total unshipped supply falls below this.
const REMAINING_TOL: f64 = 1e-13;

/// Row-major `n × m` optimal plan.
pub(crate) fn solve_transport(cost: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let m = b.len();
    debug_assert_eq!(cost.len(), n * m);
    let mut plan = vec![0.0f64; n * m];
    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    // potentials of row nodes [0, n) and column nodes [n, n+m)
    let mut pot = vec![0.0f64; n + m];
    let mut dist = vec![0.0f64; n + m];
    let mut parent = vec![usize::MAX; n + m];
    let mut done = vec![false; n + m];

    let max_rounds = 4 * (n + m) * (n + m) + 16;
    for _ in 0..max_rounds {
        let remaining: f64 = supply.iter().sum();
        if remaining < REMAINING_TOL || demand.iter().all(|&d| d <= MASS_EPS) {
            break;
        }

        dist.fill(f64::INFINITY);
        parent.fill(usize::MAX);
        done.fill(false);
        for i in 0..n {
            if supply[i] > MASS_EPS {
                dist[i] = 0.0;
            }
        }
        // dense Dijkstra
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for (k, &dk) in dist.iter().enumerate() {
                if !done[k] && dk < best {
                    best = dk;
                    u = k;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u < n {
                let i = u;
                for j in 0..m {
                    let node = n + j;
                    if done[node] {
                        continue;
                    }
                    let reduced = (cost[i * m + j] + pot[i] - pot[node]).max(0.0);
                    if best + reduced < dist[node] {
                        dist[node] = best + reduced;
                        parent[node] = i;
                    }
                }
            } else {
                let j = u - n;
                for i in 0..n {
                    if done[i] || plan[i * m + j] <= MASS_EPS {
                        continue;
                    }
                    let reduced = (pot[u] - cost[i * m + j] - pot[i]).max(0.0);
                    if best + reduced < dist[i] {
                        dist[i] = best + reduced;
                        parent[i] = u;
                    }
                }
            }
        }

        let target = (0..m)
            .filter(|&j| demand[j] > MASS_EPS && dist[n + j].is_finite())
            .min_by(|&x, &y| dist[n + x].total_cmp(&dist[n + y]));
        let Some(jt) = target else { break };
        let horizon = dist[n + jt];

        // bottleneck along the path back to a row with spare supply
        let mut amount = demand[jt];
        let mut node = n + jt;
        loop {
            let prev = parent[node];
            if prev == usize::MAX {
                amount = amount.min(supply[node]);
                break;
            }
            if node < n {
                // reverse arc: column prev -> row node carries plan[node][prev]
                amount = amount.min(plan[node * m + (prev - n)]);
            }
            node = prev;
        }
        if amount <= 0.0 {
            break;
        }

        let mut node = n + jt;
        loop {
            let prev = parent[node];
            if prev == usize::MAX {
                supply[node] -= amount;
                break;
            }
            if node >= n {
                plan[prev * m + (node - n)] += amount;
            } else {
                let cell = &mut plan[node * m + (prev - n)];
                *cell = (*cell - amount).max(0.0);
            }
            node = prev;
        }
        demand[jt] -= amount;

        for k in 0..n + m {
            pot[k] += dist[k].min(horizon);
        }
    }
    plan
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn check_marginals(plan: &[f64], a: &[f64], b: &[f64]) {
        let m = b.len();
        for (i, &ai) in a.iter().enumerate() {
            let row: f64 = plan[i * m..(i + 1) * m].iter().sum();
            assert!((row - ai).abs() <= 1e-10);
        }
        for (j, &bj) in b.iter().enumerate() {
            let col: f64 = (0..a.len()).map(|i| plan[i * m + j]).sum();
            assert!((col - bj).abs() <= 1e-10);
        }
        assert!(plan.iter().all(|&x| x >= 0.0));
    }

    fn cost_of(plan: &[f64], cost: &[f64]) -> f64 {
        plan.iter().zip(cost).map(|(p, c)| p * c).sum()
    }

    #[test]
    fn two_by_two() {
        let cost = [0.0, 1.0, 1.0, 0.0];
        let plan = solve_transport(&cost, &[0.7, 0.3], &[0.4, 0.6]);
        check_marginals(&plan, &[0.7, 0.3], &[0.4, 0.6]);
        assert!((cost_of(&plan, &cost) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn one_to_many() {
        let cost = [3.0, 1.0, 2.0];
        let b = [0.2, 0.5, 0.3];
        let plan = solve_transport(&cost, &[1.0], &b);
        check_marginals(&plan, &[1.0], &b);
        assert!((cost_of(&plan, &cost) - 1.7).abs() < 1e-15);
    }

    /// Optimality certificate: no negative-cost cycle of length four.
    fn no_improving_swap(plan: &[f64], cost: &[f64], n: usize, m: usize) {
        for i in 0..n {
            for k in 0..n {
                for j in 0..m {
                    for l in 0..m {
                        if plan[i * m + j] > 1e-12 && plan[k * m + l] > 1e-12 {
                            let delta = cost[i * m + l] + cost[k * m + j] - cost[i * m + j] - cost[k * m + l];
                            assert!(delta >= -1e-12, "improving swap {delta}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn random_instances_are_feasible_and_locally_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        for _ in 0..100 {
            let n = rng.random_range(1..8);
            let m = rng.random_range(1..8);
            let norm = |v: Vec<f64>| {
                let s: f64 = v.iter().sum();
                v.into_iter().map(|x| x / s).collect::<Vec<_>>()
            };
            let a = norm((0..n).map(|_| rng.random_range(0.01..1.0)).collect());
            let b = norm((0..m).map(|_| rng.random_range(0.01..1.0)).collect());
            let cost: Vec<f64> = (0..n * m).map(|_| rng.random_range(0.0..4.0)).collect();
            let plan = solve_transport(&cost, &a, &b);
            check_marginals(&plan, &a, &b);
            no_improving_swap(&plan, &cost, n, m);
        }
    }
}
