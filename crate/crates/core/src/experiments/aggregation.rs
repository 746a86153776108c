//! E1: exponential decay of `F` and `G` for admissible initial data.

use serde_json::json;

use crate::dynamics::Ensemble;
use crate::error::Result;
use crate::integrators::Stepper;
use crate::observables::{functional_f, functional_g};

use super::report::{PairCheck, Table, Verdict};
use super::sampler::{random_frequency, sample_admissible_states, stream, AdmissibilityCheck};
use super::{fitted_decay_rate, march, new_report, refined_grid, ExperimentConfig, ExperimentReport};

/// Absolute slack on the decay bounds, at roundoff level.
const BOUND_SLACK: f64 = 1e-12;

/// Tolerance of the finite-difference differential inequality for `F`.
const GRONWALL_TOL: f64 = 1e-3;

/// Values of `F` at or below this are roundoff and excluded from the rate fit.
const FIT_FLOOR: f64 = 1e-13;

pub fn run_e1_aggregation(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let params = cfg.params()?;
    let states = sample_admissible_states(&mut stream(cfg.seed, "e1/states", 0), cfg.n, cfg.d, params, cfg.delta)?;
    let omega = random_frequency(&mut stream(cfg.seed, "e1/omega", 0), cfg.d, cfg.omega_spread);
    let ens = Ensemble::with_common_frequency(states, omega, params)?;
    run_e1_with_ensemble(cfg, &ens)
}

/// E1 on caller-supplied initial data; the horizon, grid and `δ` come from
/// `cfg`, couplings and frequencies from `ens`.
pub fn run_e1_with_ensemble(cfg: &ExperimentConfig, ens: &Ensemble) -> Result<ExperimentReport> {
    let params = ens.params();
    let (k0, k1) = (params.kappa0, params.kappa1);
    let f0 = functional_f(ens.states());
    let admissible = AdmissibilityCheck::evaluate(params, cfg.delta, f0);
    let rate = 2.0 * k0 * cfg.delta;
    let h = cfg.fd_step;

    let times = refined_grid(cfg.t_end, cfg.samples);
    let mut pairs = PairCheck::default();
    let mut table = Table::new("series", &["t", "F", "G", "F_bound", "G_bound", "dF_dt", "gronwall_rhs"]);
    let mut coarse_f = Vec::new();
    let mut coarse_t = Vec::new();
    let mut first_f = None;
    let mut first_g = None;
    let mut first_refined = None;
    let mut first_gronwall = None;
    let mut worst_gronwall = f64::NEG_INFINITY;

    let mut stepper = Stepper::lhs(ens);
    march(&mut stepper, &times, cfg.dt, |_| {}, |k, t, s| {
        let states = s.states();
        let f = functional_f(&states);
        let g = functional_g(&states);
        pairs.observe(t, f, g);
        let fb = f0 * (-rate * t).exp();
        let gb = 2.0 * f0.sqrt() * (-0.5 * rate * t).exp();
        let f_bad = f > fb + BOUND_SLACK;
        let g_bad = g > gb + BOUND_SLACK;
        if (f_bad || g_bad) && first_refined.is_none() {
            first_refined = Some(t);
        }
        if k % 2 != 0 {
            return Ok(());
        }
        if f_bad && first_f.is_none() {
            first_f = Some(t);
        }
        if g_bad && first_g.is_none() {
            first_g = Some(t);
        }
        let f_at = |dt: f64| -> Result<f64> {
            let mut probe = s.clone();
            probe.step(dt)?;
            Ok(functional_f(&probe.states()))
        };
        let fdot = (f_at(h)? - f_at(-h)?) / (2.0 * h);
        let rhs = -2.0 * k0 * (1.0 - f - 2.0 * k1.abs() / k0) * f;
        let excess = fdot - rhs - GRONWALL_TOL * (1.0 + fdot.abs());
        worst_gronwall = worst_gronwall.max(excess);
        if excess > 0.0 && first_gronwall.is_none() {
            first_gronwall = Some(t);
        }
        coarse_t.push(t);
        coarse_f.push(f);
        table.push(vec![t, f, g, fb, gb, fdot, rhs]);
        Ok(())
    })?;

    let fitted = fitted_decay_rate(&coarse_t, &coarse_f, FIT_FLOOR);
    let mut report = new_report(cfg);
    report.verdicts.push(Verdict::new(
        "initial_admissibility",
        admissible.verdict,
        0.0,
        format!(
            "F0 = {f0:e} < 1 - 2|k1|/k0 - delta = {:e}",
            AdmissibilityCheck::threshold(params, cfg.delta)
        ),
    ));
    report.verdicts.push(
        Verdict::new(
            "F_exponential_bound",
            first_f.is_none(),
            BOUND_SLACK,
            format!("F(t) <= F0 exp(-{rate} t) at {} sample times", coarse_t.len()),
        )
        .at(first_f),
    );
    report.verdicts.push(
        Verdict::new(
            "G_exponential_bound",
            first_g.is_none(),
            BOUND_SLACK,
            format!("G(t) <= 2 sqrt(F0) exp(-{} t) at {} sample times", rate / 2.0, coarse_t.len()),
        )
        .at(first_g),
    );
    report.verdicts.push(
        Verdict::new(
            "exponential_bounds_refined_grid",
            first_refined.is_none(),
            BOUND_SLACK,
            format!("both bounds at {} times (double density)", times.len()),
        )
        .at(first_refined),
    );
    report.verdicts.push(
        Verdict::new(
            "gronwall_inequality",
            first_gronwall.is_none(),
            GRONWALL_TOL,
            format!(
                "centered dF/dt (h = {h}) <= -2 k0 (1 - F - 2|k1|/k0) F + tol (1 + |dF/dt|); max excess {worst_gronwall:e}"
            ),
        )
        .at(first_gronwall),
    );
    report.verdicts.push(pairs.verdict());
    report.metrics.insert("F0".into(), json!(f0));
    report.metrics.insert("admissibility".into(), json!(admissible));
    report.metrics.insert("guaranteed_rate".into(), json!(rate));
    report.metrics.insert("fitted_rate".into(), json!(fitted));
    report
        .metrics
        .insert("fitted_exceeds_guaranteed".into(), json!(fitted.map(|r| r >= rate)));
    report.tables.push(table);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::CouplingParams;
    use crate::experiments::ExperimentId;
    use crate::geometry::{ComplexVector, SkewHermitianMatrix, UnitStateVector};
    use num_complex::Complex64;

    fn small(cfg: ExperimentConfig) -> ExperimentConfig {
        ExperimentConfig {
            n: 8,
            t_end: 5.0,
            samples: 50,
            ..cfg
        }
    }

    #[test]
    fn small_admissible_run_passes() {
        let cfg = small(ExperimentConfig::defaults(ExperimentId::E1));
        let report = run_e1_aggregation(&cfg).unwrap();
        assert!(report.passed(), "{:#?}", report.verdicts);
        assert_eq!(report.table("series").unwrap().rows.len(), 50);
        let fitted = report.metric("fitted_rate").unwrap().as_f64().unwrap();
        assert!(fitted >= 2.0 * cfg.kappa0 * cfg.delta);
    }

    #[test]
    fn near_identical_pair() {
        let cfg = ExperimentConfig {
            kappa1: 0.0,
            ..small(ExperimentConfig::defaults(ExperimentId::E1))
        };
        let a = UnitStateVector::basis(4, 0);
        let b = UnitStateVector::normalize(
            &a.scale_real(1.0) + &ComplexVector::new(vec![Complex64::new(0.0, 0.0), Complex64::new(0.05, 0.02), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)]).unwrap(),
        )
        .unwrap();
        let ens = Ensemble::with_common_frequency(vec![a, b], SkewHermitianMatrix::zeros(4), CouplingParams::new(1.0, 0.0).unwrap()).unwrap();
        let report = run_e1_with_ensemble(&cfg, &ens).unwrap();
        assert!(report.passed(), "{:#?}", report.verdicts);
        let fitted = report.metric("fitted_rate").unwrap().as_f64().unwrap();
        assert!(fitted >= 0.1 * cfg.kappa0 * cfg.delta);
    }

    #[test]
    fn identical_data_stays_at_zero() {
        let cfg = small(ExperimentConfig::defaults(ExperimentId::E1));
        let z = UnitStateVector::basis(4, 2);
        let ens = Ensemble::with_common_frequency(vec![z; 5], SkewHermitianMatrix::zeros(4), cfg.params().unwrap()).unwrap();
        let report = run_e1_with_ensemble(&cfg, &ens).unwrap();
        assert!(report.passed());
        assert!(report.table("series").unwrap().column("F").unwrap().iter().all(|&f| f == 0.0));
        assert!(report.metric("fitted_rate").unwrap().is_null());
    }
}
