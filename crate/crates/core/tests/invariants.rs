use lhs_core::dynamics::{lhs_rhs, lhs_rhs_pairwise};
use lhs_core::experiments::sampler::{random_frequency, stream, uniform_states};
use lhs_core::integrators::{integrate, split_transform, IntegratorConfig, Stepper};
use lhs_core::observables::{centroid_rate, functional_f, functional_g, lp_distance, r_squared_rate};
use lhs_core::transport::{wasserstein_general, wasserstein_uniform, EmpiricalMeasure};
use lhs_core::{CouplingParams, Ensemble, SkewHermitianMatrix, UnitStateVector};
use proptest::prelude::*;

fn states(seed: u64, n: usize, d: usize) -> Vec<UnitStateVector> {
    uniform_states(&mut stream(seed, "invariants", n as u64), n, d)
}

fn ensemble(seed: u64, n: usize, d: usize, k0: f64, k1: f64, heterogeneous: bool) -> Ensemble {
    let mut rng = stream(seed, "invariants/omega", n as u64);
    let freqs = if heterogeneous {
        (0..n).map(|_| random_frequency(&mut rng, d, 1.0)).collect()
    } else {
        vec![random_frequency(&mut rng, d, 1.0); n]
    };
    Ensemble::new(states(seed, n, d), freqs, CouplingParams::new(k0, k1).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn centroid_form_equals_pairwise(seed in 0u64..10_000, n in 1usize..40, d in 1usize..5,
                                     k0 in -2.0f64..2.0, k1 in -2.0f64..2.0, het in any::<bool>()) {
        let ens = ensemble(seed, n, d, k0, k1, het);
        for (a, b) in lhs_rhs(&ens).iter().zip(&lhs_rhs_pairwise(&ens)) {
            prop_assert!(a.distance(b) <= 1e-12);
        }
    }

    #[test]
    fn vector_field_is_tangent(seed in 0u64..10_000, n in 1usize..20, d in 1usize..5,
                               k0 in -2.0f64..2.0, k1 in -2.0f64..2.0) {
        let ens = ensemble(seed, n, d, k0, k1, true);
        for (z, v) in ens.states().iter().zip(lhs_rhs(&ens)) {
            let re: f64 = z.as_slice().iter().zip(v.as_slice()).map(|(a, b)| (a.conj() * b).re).sum();
            prop_assert!(re.abs() <= 1e-12);
        }
    }

    #[test]
    fn pair_inequality_holds(seed in 0u64..10_000, n in 1usize..30, d in 1usize..5) {
        let s = states(seed, n, d);
        prop_assert!(functional_g(&s) <= 2.0 * functional_f(&s).sqrt() + 1e-12);
        prop_assert!(functional_f(&s) <= 2.0 + 1e-12);
    }

    #[test]
    fn rate_formulas_agree(seed in 0u64..10_000, n in 1usize..30, d in 1usize..5,
                           k0 in -2.0f64..2.0, k1 in -2.0f64..2.0) {
        let s = states(seed, n, d);
        let mu = EmpiricalMeasure::uniform(s.clone()).unwrap();
        let a = r_squared_rate(&mu, k0, k1);
        let b = centroid_rate(&s, k0, k1).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn wasserstein_is_a_metric(seed in 0u64..10_000, n in 1usize..7, d in 1usize..4, p in 1.0f64..4.0) {
        let a = EmpiricalMeasure::uniform(states(seed, n, d)).unwrap();
        let b = EmpiricalMeasure::uniform(states(seed + 1, n, d)).unwrap();
        let c = EmpiricalMeasure::uniform(states(seed + 2, n, d)).unwrap();
        let ab = wasserstein_uniform(&a, &b, p).unwrap();
        let ba = wasserstein_uniform(&b, &a, p).unwrap();
        let bc = wasserstein_uniform(&b, &c, p).unwrap();
        let ac = wasserstein_uniform(&a, &c, p).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert!(wasserstein_uniform(&a, &a, p).unwrap() <= 1e-12);
        // W_p never exceeds the l^p-type average of any fixed matching
        let identity = (lp_distance(a.atoms(), b.atoms(), p).unwrap().powf(p) / n as f64).powf(1.0 / p);
        prop_assert!(ab <= identity + 1e-12);
    }

    #[test]
    fn general_plan_has_the_right_marginals(seed in 0u64..10_000, n in 1usize..9, m in 1usize..9, d in 1usize..4) {
        let mut rng = stream(seed, "invariants/weights", 0);
        let wa: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, 0.1..1.0)).collect();
        let wb: Vec<f64> = (0..m).map(|_| rand::Rng::random_range(&mut rng, 0.1..1.0)).collect();
        let sa: f64 = wa.iter().sum();
        let sb: f64 = wb.iter().sum();
        let wa: Vec<f64> = wa.iter().map(|w| w / sa).collect();
        let wb: Vec<f64> = wb.iter().map(|w| w / sb).collect();
        let a = EmpiricalMeasure::weighted(states(seed, n, d), wa.clone()).unwrap();
        let b = EmpiricalMeasure::weighted(states(seed + 7, m, d), wb.clone()).unwrap();
        let res = wasserstein_general(&a, &b, 2.0).unwrap();
        for (x, y) in res.plan.row_sums().iter().zip(&wa) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        for (x, y) in res.plan.col_sums().iter().zip(&wb) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        let cost: f64 = res
            .plan
            .entries()
            .iter()
            .map(|e| e.mass * a.atoms()[e.row].distance_sqr(&b.atoms()[e.col]))
            .sum();
        prop_assert!((cost.sqrt() - res.distance).abs() <= 1e-10);
    }

    #[test]
    fn flow_stays_on_the_sphere(seed in 0u64..10_000, n in 1usize..10, d in 1usize..4,
                                k0 in -1.0f64..1.0, k1 in -1.0f64..1.0) {
        let ens = ensemble(seed, n, d, k0, k1, true);
        let mut s = Stepper::lhs(&ens);
        for _ in 0..50 {
            s.step(0.01).unwrap();
        }
        for z in s.states() {
            prop_assert!((z.as_vector().norm() - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn split_trajectory_matches_frequency_free_run() {
    let ens = ensemble(3, 8, 3, 1.0, 0.2, false);
    let omega = ens.common_frequency().unwrap().clone();
    let cfg = IntegratorConfig::new(1e-3, 2.0).unwrap().with_record_every(100);
    let rotating = integrate(&ens, &cfg, &mut []).unwrap();
    let free = integrate(&ens.with_frequencies(vec![SkewHermitianMatrix::zeros(3); 8]).unwrap(), &cfg, &mut []).unwrap();
    let split = split_transform(&rotating.trajectory, &omega).unwrap();
    for (a, b) in split.snapshots.iter().zip(&free.trajectory.snapshots) {
        for (x, y) in a.iter().zip(b) {
            assert!(x.distance(y) < 1e-9);
        }
    }
}

#[test]
fn trajectories_are_reproducible() {
    let ens = ensemble(9, 12, 2, 1.0, -0.3, true);
    let cfg = IntegratorConfig::new(1e-3, 1.0).unwrap().with_record_every(50);
    let a = integrate(&ens, &cfg, &mut []).unwrap();
    let b = integrate(&ens, &cfg, &mut []).unwrap();
    assert_eq!(a.series.to_csv(), b.series.to_csv());
    assert_eq!(a.series.len(), 21);
}
