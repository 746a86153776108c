//! E5 (order-parameter calculus and defect decay) and E6 (no bi-polar limit
//! for admissible data; the real model's antipodal exception).

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde_json::json;

use crate::dynamics::{CouplingParams, Ensemble, Model, ParticleField};
use crate::error::{Error, Result};
use crate::geometry::{ComplexVector, SkewHermitianMatrix, UnitStateVector};
use crate::integrators::Stepper;
use crate::observables::{
    aggregation_defect, dj_dt_norm_bound_check, functional_f, functional_g, j_vector, r_squared_rate,
};
use crate::transport::{wasserstein_general, EmpiricalMeasure};

use super::report::{PairCheck, Table, Verdict};
use super::sampler::{random_frequency, sample_admissible_states, stream, uniform_states};
use super::{march, new_report, refined_grid, ExperimentConfig, ExperimentReport};

/// Allowed per-step decrease of `R²`.
const MONOTONE_TOL: f64 = 1e-10;
/// Relative tolerance between the closed-form `dR²/dt` and finite differences.
const FD_REL_TOL: f64 = 1e-5;
/// Slack on `‖dJ/dt‖ ≤ 2(κ₀ + κ₁)`.
const DJ_SLACK: f64 = 1e-8;
/// Required reduction of the aggregation defect over the run.
const DEFECT_RATIO: f64 = 1e-6;
const DEFECT_FLOOR: f64 = 1e-12;
/// Alignment with `J/‖J‖` required at the end of an admissible run.
const ALIGNMENT_TOL: f64 = 1e-4;
const DIRAC_W2_TOL: f64 = 1e-3;
/// Distance of the real-model configuration to its two-point limit.
const BIPOLAR_TOL: f64 = 1e-4;
/// Drift allowed for atoms that should not move.
const STATIONARY_TOL: f64 = 1e-12;

fn measure(states: &[UnitStateVector]) -> EmpiricalMeasure {
    EmpiricalMeasure::uniform(states.to_vec()).expect("nonempty ensemble")
}

fn r_squared(s: &Stepper) -> f64 {
    s.centroid().norm_sqr()
}

/// Per-run results of the order-parameter checks.
#[derive(Clone, Debug, Default)]
pub(crate) struct OrderOutcome {
    pub worst_drop: f64,
    pub first_drop: Option<f64>,
    pub fd_checked: usize,
    pub fd_skipped: usize,
    pub fd_worst: f64,
    pub first_fd: Option<f64>,
    pub dj_worst: f64,
    pub first_dj: Option<f64>,
    pub defect0: f64,
    pub defect_end: f64,
    pub pairs: PairCheck,
    pub rows: Vec<Vec<f64>>,
}

const SERIES_COLUMNS: [&str; 7] = ["t", "R2", "dR2_dt", "dR2_dt_fd", "dJ_dt_norm", "dJ_dt_bound", "defect"];

impl OrderOutcome {
    pub fn defect_ratio(&self) -> f64 {
        self.defect_end / self.defect0.max(DEFECT_FLOOR)
    }
}

/// Integrates `ens` over `times`, checking monotonicity of `R²` after every
/// step and, at sample times, the closed-form rate against a fourth-order
/// centered difference with step `cfg.fd_step` and the `dJ/dt` bound.
pub(crate) fn order_run(cfg: &ExperimentConfig, ens: &Ensemble, times: &[f64], check_fd: bool) -> Result<OrderOutcome> {
    let CouplingParams { kappa0, kappa1 } = ens.params();
    let h = cfg.fd_step;
    let mut out = OrderOutcome {
        defect0: aggregation_defect(&measure(ens.states())),
        dj_worst: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut stepper = Stepper::lhs(ens);
    let mut prev = r_squared(&stepper);
    let mut drops = (0.0f64, None::<f64>);
    march(
        &mut stepper,
        times,
        cfg.dt,
        |s| {
            let r2 = r_squared(s);
            let drop = prev - r2;
            drops.0 = drops.0.max(drop);
            if drop > MONOTONE_TOL && drops.1.is_none() {
                drops.1 = Some(s.time());
            }
            prev = r2;
        },
        |_, t, s| {
            let states = s.states();
            out.pairs.observe(t, functional_f(&states), functional_g(&states));
            let mu = measure(&states);
            let rate = r_squared_rate(&mu, kappa0, kappa1);
            let dj = dj_dt_norm_bound_check(&mu, kappa0, kappa1);
            let excess = dj.value - dj.bound;
            out.dj_worst = out.dj_worst.max(excess);
            if !dj.holds(DJ_SLACK) && out.first_dj.is_none() {
                out.first_dj = Some(t);
            }
            let mut fd = f64::NAN;
            if check_fd {
                let at = |dt: f64| -> Result<f64> {
                    let mut probe = s.clone();
                    probe.step(dt)?;
                    Ok(r_squared(&probe))
                };
                fd = (8.0 * (at(h)? - at(-h)?) - (at(2.0 * h)? - at(-2.0 * h)?)) / (12.0 * h);
                if rate.abs() >= cfg.fd_floor {
                    let rel = (fd - rate).abs() / rate.abs();
                    out.fd_checked += 1;
                    out.fd_worst = out.fd_worst.max(rel);
                    if rel > FD_REL_TOL && out.first_fd.is_none() {
                        out.first_fd = Some(t);
                    }
                } else {
                    out.fd_skipped += 1;
                }
            }
            out.defect_end = aggregation_defect(&mu);
            out.rows.push(vec![t, mu.first_moment().norm_sqr(), rate, fd, dj.value, dj.bound, out.defect_end]);
            Ok(())
        },
    )?;
    out.worst_drop = drops.0;
    out.first_drop = drops.1;
    Ok(out)
}

fn first_of(times: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    times.flatten().min_by(f64::total_cmp)
}

pub fn run_e5_order_parameter(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let params = cfg.params()?;
    let times = refined_grid(cfg.t_end, cfg.samples);
    let runs: Vec<OrderOutcome> = (0..cfg.seeds)
        .into_par_iter()
        .map(|seed| {
            let mut rng = stream(cfg.seed, "e5/states", seed as u64);
            let states = sample_admissible_states(&mut rng, cfg.n, cfg.d, params, cfg.delta)?;
            let omega = random_frequency(&mut stream(cfg.seed, "e5/omega", seed as u64), cfg.d, cfg.omega_spread);
            order_run(cfg, &Ensemble::with_common_frequency(states, omega, params)?, &times, true)
        })
        .collect::<Result<_>>()?;

    // κ₁ = −κ₀/2 with unconstrained data: only the tangential term of the
    // rate survives.
    let boundary_params = CouplingParams::new(params.kappa0, -params.kappa0 / 2.0)?;
    let mut rng = stream(cfg.seed, "e5/boundary", 0);
    let states = uniform_states(&mut rng, cfg.n, cfg.d);
    let omega = random_frequency(&mut rng, cfg.d, cfg.omega_spread);
    let boundary = order_run(cfg, &Ensemble::with_common_frequency(states, omega, boundary_params)?, &times, false)?;

    let mut report = new_report(cfg);
    let mut pairs = PairCheck::default();
    for r in &runs {
        pairs.merge(&r.pairs);
    }
    pairs.merge(&boundary.pairs);
    let worst_drop = runs.iter().map(|r| r.worst_drop).fold(f64::NEG_INFINITY, f64::max);
    report.verdicts.push(
        Verdict::new(
            "r_squared_nondecreasing",
            runs.iter().all(|r| r.first_drop.is_none()),
            MONOTONE_TOL,
            format!("per-step decrease of R^2 over {} runs, worst {worst_drop:e}", runs.len()),
        )
        .at(first_of(runs.iter().map(|r| r.first_drop))),
    );
    let checked: usize = runs.iter().map(|r| r.fd_checked).sum();
    let skipped: usize = runs.iter().map(|r| r.fd_skipped).sum();
    let fd_worst = runs.iter().map(|r| r.fd_worst).fold(0.0, f64::max);
    report.verdicts.push(
        Verdict::new(
            "r_squared_rate_matches_finite_difference",
            checked > 0 && runs.iter().all(|r| r.first_fd.is_none()),
            FD_REL_TOL,
            format!(
                "relative error of closed-form dR2/dt against a 4th-order centered difference (h = {}) at {checked} sample times with |rate| >= {}, {skipped} below; worst {fd_worst:e}",
                cfg.fd_step, cfg.fd_floor
            ),
        )
        .at(first_of(runs.iter().map(|r| r.first_fd))),
    );
    let dj_worst = runs.iter().map(|r| r.dj_worst).fold(f64::NEG_INFINITY, f64::max);
    report.verdicts.push(
        Verdict::new(
            "dj_dt_bound",
            runs.iter().all(|r| r.first_dj.is_none()),
            DJ_SLACK,
            format!(
                "norm of the coupling part of dJ/dt <= 2(k0 + k1) = {}; worst value - bound {dj_worst:e}",
                2.0 * (params.kappa0 + params.kappa1)
            ),
        )
        .at(first_of(runs.iter().map(|r| r.first_dj))),
    );
    let worst_ratio = runs.iter().map(|r| r.defect_ratio()).fold(0.0, f64::max);
    report.verdicts.push(Verdict::new(
        "defect_decay",
        runs.iter().all(|r| r.defect_ratio() <= DEFECT_RATIO),
        DEFECT_RATIO,
        format!(
            "defect({}) / max(defect(0), {DEFECT_FLOOR:e}) <= {DEFECT_RATIO:e}; worst {worst_ratio:e}",
            cfg.t_end
        ),
    ));
    report.verdicts.push(
        Verdict::new(
            "boundary_r_squared_nondecreasing",
            boundary.first_drop.is_none() && boundary.first_dj.is_none(),
            MONOTONE_TOL,
            format!(
                "k1 = -k0/2, uniform random data: worst per-step decrease {:e}, worst dJ/dt excess {:e}",
                boundary.worst_drop, boundary.dj_worst
            ),
        )
        .at(first_of([boundary.first_drop, boundary.first_dj].into_iter())),
    );
    report.verdicts.push(pairs.verdict());

    let mut table = Table::new("run_summary", &["seed", "defect0", "defect_end", "defect_ratio", "fd_worst_rel", "max_R2_drop", "dj_worst_excess"]);
    for (k, r) in runs.iter().enumerate() {
        table.push(vec![k as f64, r.defect0, r.defect_end, r.defect_ratio(), r.fd_worst, r.worst_drop, r.dj_worst]);
    }
    report.tables.push(table);
    if let Some(first) = runs.first() {
        let mut table = Table::new("series_seed0", &SERIES_COLUMNS);
        for row in &first.rows {
            table.push(row.clone());
        }
        report.tables.push(table);
    }
    let mut table = Table::new("series_boundary", &SERIES_COLUMNS);
    for row in &boundary.rows {
        table.push(row.clone());
    }
    report.tables.push(table);
    report.metrics.insert("fd_points_checked".into(), json!(checked));
    report.metrics.insert("fd_points_below_floor".into(), json!(skipped));
    Ok(report)
}

fn real_gaussian<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn real_state(v: &[f64]) -> UnitStateVector {
    UnitStateVector::normalize(ComplexVector::from_real(v).expect("finite")).expect("nonzero")
}

/// Real configuration with `n − 1` atoms clustered around `y = e₁` in mirror
/// pairs `(x₁, x_⊥)`, `(x₁, −x_⊥)` (plus `y` itself when needed) and one atom
/// at `−y`, which is last.
pub(crate) fn antipodal_configuration<R: Rng>(rng: &mut R, n: usize, d: usize) -> Vec<UnitStateVector> {
    let mut y = vec![0.0; d];
    y[0] = 1.0;
    let mut states = Vec::with_capacity(n);
    while states.len() + 2 < n {
        let x = loop {
            let g = real_gaussian(rng, d);
            let v: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a + 0.5 * b).collect();
            let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm > 0.0 && v[0] / norm > 0.5 {
                break v;
            }
        };
        let mirror: Vec<f64> = x.iter().enumerate().map(|(k, &c)| if k == 0 { c } else { -c }).collect();
        states.push(real_state(&x));
        states.push(real_state(&mirror));
    }
    while states.len() + 1 < n {
        states.push(real_state(&y));
    }
    let minus: Vec<f64> = y.iter().map(|c| -c).collect();
    states.push(real_state(&minus));
    states
}

fn unit_direction(v: &ComplexVector) -> Option<UnitStateVector> {
    (v.norm() > 0.0).then(|| UnitStateVector::normalize(v.clone()).expect("nonzero"))
}

pub fn run_e6_bipolar(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let params = cfg.params()?;
    let times = refined_grid(cfg.t_end, cfg.samples);
    let mut report = new_report(cfg);
    let mut pairs = PairCheck::default();

    // (a) admissible complex data
    let states = sample_admissible_states(&mut stream(cfg.seed, "e6/states", 0), cfg.n, cfg.d, params, cfg.delta)?;
    let omega = random_frequency(&mut stream(cfg.seed, "e6/omega", 0), cfg.d, cfg.omega_spread);
    let ens = Ensemble::with_common_frequency(states, omega, params)?;
    let mut stepper = Stepper::lhs(&ens);
    let mut prev_r = f64::NEG_INFINITY;
    let mut first_r_drop = None;
    let mut series = Table::new("admissible_series", &["t", "R", "min_alignment", "w2_to_dirac"]);
    let mut final_alignment = f64::NAN;
    let mut final_w2 = f64::NAN;
    march(&mut stepper, &times, cfg.dt, |_| {}, |_, t, s| {
        let states = s.states();
        pairs.observe(t, functional_f(&states), functional_g(&states));
        let mu = measure(&states);
        let j = j_vector(&mu);
        let r = j.norm();
        if r < prev_r - MONOTONE_TOL && first_r_drop.is_none() {
            first_r_drop = Some(t);
        }
        prev_r = r;
        let (alignment, w2) = match unit_direction(&j) {
            Some(hat) => {
                let alignment = states
                    .iter()
                    .map(|z| crate::geometry::real_dot(z, &hat).expect("same dimension"))
                    .fold(f64::INFINITY, f64::min);
                let dirac = EmpiricalMeasure::uniform(vec![hat])?;
                (alignment, wasserstein_general(&mu, &dirac, 2.0)?.distance)
            }
            None => (f64::NAN, f64::NAN),
        };
        final_alignment = alignment;
        final_w2 = w2;
        series.push(vec![t, r, alignment, w2]);
        Ok(())
    })?;
    let monotone_expected = params.kappa0 + 2.0 * params.kappa1 >= 0.0;
    report.verdicts.push(Verdict::new(
        "complete_alignment",
        final_alignment >= 1.0 - ALIGNMENT_TOL,
        ALIGNMENT_TOL,
        format!("min_j z_j . J/|J| at t = {} is {final_alignment}", cfg.t_end),
    ));
    report.verdicts.push(Verdict::new(
        "w2_to_dirac",
        final_w2 <= DIRAC_W2_TOL,
        DIRAC_W2_TOL,
        format!("W2(mu_t, delta_(J/|J|)) at t = {} is {final_w2:e}", cfg.t_end),
    ));
    if monotone_expected {
        report.verdicts.push(
            Verdict::new(
                "order_parameter_nondecreasing",
                first_r_drop.is_none(),
                MONOTONE_TOL,
                "|J| nondecreasing at sample times".into(),
            )
            .at(first_r_drop),
        );
    }
    report.tables.push(series);

    // (b) real model, one atom antipodal to a mirror-symmetric cluster
    let n_real = cfg.n.clamp(2, 16);
    let d_real = cfg.d.max(2);
    let states = antipodal_configuration(&mut stream(cfg.seed, "e6/real", 0), n_real, d_real);
    let ens = Ensemble::with_common_frequency(states, SkewHermitianMatrix::zeros(d_real), params)?;
    let field = ParticleField::new(&ens, Model::Ls)?;
    let mut stepper = Stepper::new(&ens, field);
    let mut worst_antipodal = 0.0f64;
    let mut first_antipodal = None;
    let mut first_real_drop = None;
    let mut prev_r = f64::NEG_INFINITY;
    let mut series = Table::new("real_series", &["t", "R", "antipodal_gap", "two_point_distance"]);
    let mut final_two_point = f64::NAN;
    let mut final_w2 = f64::NAN;
    march(&mut stepper, &times, cfg.dt, |_| {}, |_, t, s| {
        let states = s.states();
        pairs.observe(t, functional_f(&states), functional_g(&states));
        let (cluster, anti) = states.split_at(n_real - 1);
        let c = measure(cluster).first_moment();
        let hat = unit_direction(&c).ok_or_else(|| Error::InvalidArgument("cluster centroid vanished".into()))?;
        let gap = anti[0].distance(&hat.scale_real(-1.0));
        worst_antipodal = worst_antipodal.max(gap);
        if gap > STATIONARY_TOL && first_antipodal.is_none() {
            first_antipodal = Some(t);
        }
        let r = j_vector(&measure(&states)).norm();
        if r < prev_r - MONOTONE_TOL && first_real_drop.is_none() {
            first_real_drop = Some(t);
        }
        prev_r = r;
        let minus = hat.scale_real(-1.0);
        let two_point = states
            .iter()
            .map(|z| z.distance(&hat).min(z.distance(&minus)))
            .fold(0.0, f64::max);
        let m = 1.0 / n_real as f64;
        let limit = EmpiricalMeasure::weighted(
            vec![hat.clone(), UnitStateVector::normalize(minus).expect("unit")],
            vec![1.0 - m, m],
        )?;
        final_w2 = wasserstein_general(&measure(&states), &limit, 2.0)?.distance;
        final_two_point = two_point;
        series.push(vec![t, r, gap, two_point]);
        Ok(())
    })?;
    report.verdicts.push(
        Verdict::new(
            "antipodal_atom_stays_antipodal",
            first_antipodal.is_none(),
            STATIONARY_TOL,
            format!("N = {n_real}, d = {d_real}: max |z_N + y/|y|| over the run {worst_antipodal:e}, y the cluster mean"),
        )
        .at(first_antipodal),
    );
    report.verdicts.push(Verdict::new(
        "two_point_limit",
        final_two_point <= BIPOLAR_TOL,
        BIPOLAR_TOL,
        format!(
            "max_j dist(z_j, {{y, -y}}) at t = {} is {final_two_point:e}; W2 to (1-m) delta_y + m delta_-y is {final_w2:e}",
            cfg.t_end
        ),
    ));
    report.verdicts.push(
        Verdict::new(
            "real_order_parameter_nondecreasing",
            first_real_drop.is_none(),
            MONOTONE_TOL,
            "|J| nondecreasing at sample times for the real model".into(),
        )
        .at(first_real_drop),
    );
    report.tables.push(series);
    report.metrics.insert("real_final_w2_to_two_point_limit".into(), json!(final_w2));

    // (c) an antipodal complex pair has J = 0 and does not move
    let z = super::sampler::uniform_state(&mut stream(cfg.seed, "e6/pair", 0), cfg.d);
    let minus = UnitStateVector::normalize(z.scale(Complex64::new(-1.0, 0.0))).expect("unit");
    let ens = Ensemble::with_common_frequency(vec![z.clone(), minus.clone()], SkewHermitianMatrix::zeros(cfg.d), params)?;
    let mut stepper = Stepper::lhs(&ens);
    let mut drift = 0.0f64;
    march(&mut stepper, &times, cfg.dt, |_| {}, |_, t, s| {
        let states = s.states();
        pairs.observe(t, functional_f(&states), functional_g(&states));
        drift = drift.max(states[0].distance(&z)).max(states[1].distance(&minus));
        Ok(())
    })?;
    report.verdicts.push(Verdict::new(
        "antipodal_pair_stationary",
        drift <= STATIONARY_TOL,
        STATIONARY_TOL,
        format!("max displacement of a J = 0 pair over t <= {}: {drift:e}", cfg.t_end),
    ));
    report.verdicts.push(pairs.verdict());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ExperimentId;

    fn small(id: ExperimentId) -> ExperimentConfig {
        ExperimentConfig {
            n: 8,
            seeds: 2,
            t_end: 30.0,
            samples: 30,
            dt: 2e-3,
            ..ExperimentConfig::defaults(id)
        }
    }

    #[test]
    fn identical_data_keep_order_parameter() {
        let cfg = small(ExperimentId::E5);
        let z = UnitStateVector::basis(3, 1);
        let ens = Ensemble::with_common_frequency(vec![z; 4], SkewHermitianMatrix::zeros(3), cfg.params().unwrap()).unwrap();
        let out = order_run(&cfg, &ens, &refined_grid(2.0, 10), true).unwrap();
        assert_eq!(out.defect0, 0.0);
        assert!(out.defect_end.abs() < 1e-15);
        assert!(out.rows.iter().all(|r| (r[1] - 1.0).abs() < 1e-14 && r[2].abs() < 1e-14));
        assert_eq!(out.fd_checked, 0);
    }

    #[test]
    fn small_e5_passes() {
        let report = run_e5_order_parameter(&small(ExperimentId::E5)).unwrap();
        assert!(report.passed(), "{:#?}", report.verdicts);
    }

    #[test]
    fn antipodal_configuration_shape() {
        let states = antipodal_configuration(&mut stream(0, "t", 0), 16, 3);
        assert_eq!(states.len(), 16);
        let sum: Vec<f64> = (1..3).map(|k| states[..15].iter().map(|z| z.as_slice()[k].re).sum()).collect();
        assert!(sum.iter().all(|s| s.abs() < 1e-15));
        assert_eq!(states[15].as_slice()[0].re, -1.0);
        assert!(states.iter().all(|z| z.max_abs_imag() == 0.0));
    }

    #[test]
    fn small_e6_passes() {
        let report = run_e6_bipolar(&small(ExperimentId::E6)).unwrap();
        assert!(report.passed(), "{:#?}", report.verdicts);
    }
}
