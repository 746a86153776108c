//! E2 (ℓᵖ stability of the particle flow) and E4 (Wasserstein stability of
//! empirical measures).

use rayon::prelude::*;
use serde_json::json;

use crate::dynamics::{CouplingParams, Ensemble};
use crate::error::Result;
use crate::geometry::UnitStateVector;
use crate::integrators::Stepper;
use crate::observables::{functional_f, functional_g, lp_distance};
use crate::transport::{wasserstein_uniform, EmpiricalMeasure};

use super::report::{PairCheck, Table, Verdict};
use super::sampler::{perturb, random_frequency, sample_admissible_states, stream, uniform_states, AdmissibilityCheck};
use super::{grid_with, march, new_report, refined_grid, ExperimentConfig, ExperimentReport};

/// Relative slack on the stability constants, at roundoff level.
const RATIO_SLACK: f64 = 1e-12;

/// Allowed growth of the admissible-case ratio between the check time and
/// the end of the run.
const UNIFORM_GROWTH: f64 = 1.05;

/// `G_T = exp(2T(|κ₀| + |κ₀ + 2κ₁|))`.
pub fn stability_constant(params: CouplingParams, t: f64) -> f64 {
    (2.0 * t * (params.kappa0.abs() + (params.kappa0 + 2.0 * params.kappa1).abs())).exp()
}

/// States at every grid time, with the pair inequality checked on each.
pub(crate) fn snapshots(ens: &Ensemble, times: &[f64], dt: f64, pairs: &mut PairCheck) -> Result<Vec<Vec<UnitStateVector>>> {
    let mut out = Vec::with_capacity(times.len());
    let mut stepper = Stepper::lhs(ens);
    march(&mut stepper, times, dt, |_| {}, |_, t, s| {
        let states = s.states();
        pairs.observe(t, functional_f(&states), functional_g(&states));
        out.push(states);
        Ok(())
    })?;
    Ok(out)
}

fn frequencies_for(cfg: &ExperimentConfig, name: &str, index: u64, heterogeneous: bool) -> Vec<crate::geometry::SkewHermitianMatrix> {
    let mut rng = stream(cfg.seed, name, index);
    if heterogeneous {
        (0..cfg.n).map(|_| random_frequency(&mut rng, cfg.d, cfg.omega_spread)).collect()
    } else {
        vec![random_frequency(&mut rng, cfg.d, cfg.omega_spread); cfg.n]
    }
}

struct FiniteRow {
    seed: usize,
    horizon: f64,
    p: f64,
    initial: f64,
    sup: f64,
    sup_refined: f64,
    bound: f64,
}

impl FiniteRow {
    fn holds(&self) -> bool {
        self.sup_refined <= self.bound * self.initial * (1.0 + RATIO_SLACK)
    }

    fn row(&self) -> Vec<f64> {
        let ratio = if self.initial > 0.0 { self.sup / self.initial } else { 0.0 };
        vec![self.seed as f64, self.horizon, self.p, self.initial, self.sup, self.sup_refined, self.bound, ratio]
    }
}

const FINITE_COLUMNS: [&str; 8] = ["seed", "T", "p", "initial", "sup", "sup_refined", "bound", "sup_over_initial"];

/// `max` over even grid indices (the `samples` grid) and over all indices.
fn sups(values: &[f64]) -> (f64, f64) {
    let coarse = values.iter().step_by(2).copied().fold(0.0, f64::max);
    let refined = values.iter().copied().fold(0.0, f64::max);
    (coarse, refined)
}

struct UniformRow {
    seed: usize,
    ratio_check: f64,
    ratio_end: f64,
    sup_early: f64,
    sup_all: f64,
    perturbed_admissible: bool,
}

impl UniformRow {
    fn holds(&self) -> bool {
        self.ratio_end <= UNIFORM_GROWTH * self.ratio_check && self.sup_all <= UNIFORM_GROWTH * self.sup_early
    }

    fn row(&self) -> Vec<f64> {
        vec![
            self.seed as f64,
            self.ratio_check,
            self.ratio_end,
            self.sup_early,
            self.sup_all,
            self.perturbed_admissible as u8 as f64,
        ]
    }
}

const UNIFORM_COLUMNS: [&str; 6] = [
    "seed",
    "ratio_at_check_time",
    "ratio_at_t_end",
    "sup_ratio_until_check_time",
    "sup_ratio_until_t_end",
    "perturbed_admissible",
];

/// Ratio series `dist(t)/dist(0)` for one admissible pair of ensembles.
fn uniform_case(
    cfg: &ExperimentConfig,
    name: &str,
    seed: usize,
    distance: impl Fn(&[UnitStateVector], &[UnitStateVector]) -> Result<f64>,
) -> Result<(UniformRow, Vec<(f64, f64)>, PairCheck)> {
    let params = cfg.params()?;
    let mut rng = stream(cfg.seed, name, seed as u64);
    let z0 = sample_admissible_states(&mut rng, cfg.n, cfg.d, params, cfg.delta)?;
    let w0 = perturb(&mut rng, &z0, cfg.perturbation);
    let freqs = frequencies_for(cfg, name, seed as u64 + (1 << 32), false);
    let a = Ensemble::new(z0, freqs.clone(), params)?;
    let b = Ensemble::new(w0, freqs, params)?;
    let times = grid_with(cfg.t_end, cfg.samples, &[cfg.check_time]);
    let mut pairs = PairCheck::default();
    let sa = snapshots(&a, &times, cfg.dt, &mut pairs)?;
    let sb = snapshots(&b, &times, cfg.dt, &mut pairs)?;
    let initial = distance(&sa[0], &sb[0])?;
    let mut series = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        series.push((t, distance(&sa[k], &sb[k])? / initial));
    }
    let at = |target: f64| {
        series
            .iter()
            .min_by(|x, y| (x.0 - target).abs().total_cmp(&(y.0 - target).abs()))
            .map(|p| p.1)
            .unwrap_or(f64::NAN)
    };
    let sup_until = |limit: f64| {
        series
            .iter()
            .filter(|p| p.0 <= limit + 1e-12)
            .map(|p| p.1)
            .fold(0.0, f64::max)
    };
    let row = UniformRow {
        seed,
        ratio_check: at(cfg.check_time),
        ratio_end: at(cfg.t_end),
        sup_early: sup_until(cfg.check_time),
        sup_all: sup_until(cfg.t_end),
        perturbed_admissible: AdmissibilityCheck::evaluate(params, cfg.delta, functional_f(b.states())).verdict,
    };
    Ok((row, series, pairs))
}

pub fn run_e2_lp_stability(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let params = cfg.params()?;

    let finite: Vec<(Vec<FiniteRow>, PairCheck)> = (0..cfg.seeds)
        .into_par_iter()
        .map(|seed| -> Result<_> {
            let mut rng = stream(cfg.seed, "e2/finite", seed as u64);
            let z0 = uniform_states(&mut rng, cfg.n, cfg.d);
            let w0 = perturb(&mut rng, &z0, cfg.perturbation);
            let freqs = frequencies_for(cfg, "e2/finite-omega", seed as u64, true);
            let a = Ensemble::new(z0, freqs.clone(), params)?;
            let b = Ensemble::new(w0, freqs, params)?;
            let mut pairs = PairCheck::default();
            let mut rows = Vec::new();
            for &horizon in &cfg.horizons {
                let times = refined_grid(horizon, cfg.samples);
                let sa = snapshots(&a, &times, cfg.dt, &mut pairs)?;
                let sb = snapshots(&b, &times, cfg.dt, &mut pairs)?;
                for &p in &cfg.p_values {
                    let dist: Vec<f64> = sa.iter().zip(&sb).map(|(x, y)| lp_distance(x, y, p)).collect::<Result<_>>()?;
                    let (sup, sup_refined) = sups(&dist);
                    rows.push(FiniteRow {
                        seed,
                        horizon,
                        p,
                        initial: dist[0],
                        sup,
                        sup_refined,
                        bound: stability_constant(params, horizon),
                    });
                }
            }
            Ok((rows, pairs))
        })
        .collect::<Result<_>>()?;

    let uniform: Vec<(UniformRow, Vec<(f64, f64)>, PairCheck)> = (0..cfg.seeds)
        .into_par_iter()
        .map(|seed| uniform_case(cfg, "e2/admissible", seed, |x, y| lp_distance(x, y, 2.0)))
        .collect::<Result<_>>()?;

    let mut report = new_report(cfg);
    let mut pairs = PairCheck::default();
    let mut table = Table::new("finite_horizon", &FINITE_COLUMNS);
    let mut failures = 0usize;
    let mut worst = 0.0f64;
    for (rows, pc) in &finite {
        pairs.merge(pc);
        for r in rows {
            failures += !r.holds() as usize;
            worst = worst.max(r.sup_refined / (r.bound * r.initial));
            table.push(r.row());
        }
    }
    report.verdicts.push(Verdict::new(
        "lp_stability_finite_horizon",
        failures == 0,
        RATIO_SLACK,
        format!(
            "sup_(t<=T) |Z - Z~|_p <= G_T |Z0 - Z~0|_p for T in {:?}, p in {:?}, {} seeds; max sup/(G_T initial) = {worst:e}",
            cfg.horizons, cfg.p_values, cfg.seeds
        ),
    ));
    report.tables.push(table);

    let mut table = Table::new("admissible", &UNIFORM_COLUMNS);
    let mut failures = 0usize;
    let mut growth = 0.0f64;
    for (row, _, pc) in &uniform {
        pairs.merge(pc);
        failures += !row.holds() as usize;
        growth = growth.max(row.ratio_end / row.ratio_check).max(row.sup_all / row.sup_early);
        table.push(row.row());
    }
    report.verdicts.push(Verdict::new(
        "lp_stability_uniform_in_time",
        failures == 0,
        UNIFORM_GROWTH - 1.0,
        format!(
            "p = 2 ratio at t = {} (and its running sup) within a factor {UNIFORM_GROWTH} of the value at t = {}, {} seeds; max growth {growth}",
            cfg.t_end, cfg.check_time, cfg.seeds
        ),
    ));
    report.tables.push(table);
    if let Some((_, series, _)) = uniform.first() {
        let mut t = Table::new("admissible_series_seed0", &["t", "l2_ratio"]);
        for &(time, r) in series {
            t.push(vec![time, r]);
        }
        report.tables.push(t);
    }
    report.verdicts.push(pairs.verdict());
    report.metrics.insert(
        "stability_constants".into(),
        json!(cfg.horizons.iter().map(|&t| (t, stability_constant(params, t))).collect::<Vec<_>>()),
    );
    report.metrics.insert(
        "perturbed_admissible_fraction".into(),
        json!(uniform.iter().filter(|u| u.0.perturbed_admissible).count() as f64 / uniform.len() as f64),
    );
    Ok(report)
}

fn wasserstein_states(p: f64) -> impl Fn(&[UnitStateVector], &[UnitStateVector]) -> Result<f64> {
    move |x, y| {
        let mu = EmpiricalMeasure::uniform(x.to_vec())?;
        let nu = EmpiricalMeasure::uniform(y.to_vec())?;
        wasserstein_uniform(&mu, &nu, p)
    }
}

pub fn run_e4_finite_time_stability(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let params = cfg.params()?;

    let finite: Vec<(Vec<FiniteRow>, PairCheck)> = (0..cfg.seeds)
        .into_par_iter()
        .map(|seed| -> Result<_> {
            let mut rng = stream(cfg.seed, "e4/finite", seed as u64);
            let z0 = uniform_states(&mut rng, cfg.n, cfg.d);
            let w0 = perturb(&mut rng, &z0, cfg.perturbation);
            let freqs = frequencies_for(cfg, "e4/finite-omega", seed as u64, false);
            let a = Ensemble::new(z0, freqs.clone(), params)?;
            let b = Ensemble::new(w0, freqs, params)?;
            let mut pairs = PairCheck::default();
            let mut rows = Vec::new();
            for &horizon in &cfg.horizons {
                let times = refined_grid(horizon, cfg.samples);
                let sa = snapshots(&a, &times, cfg.dt, &mut pairs)?;
                let sb = snapshots(&b, &times, cfg.dt, &mut pairs)?;
                for &p in &cfg.p_values {
                    let w = wasserstein_states(p);
                    let dist: Vec<f64> = sa.iter().zip(&sb).map(|(x, y)| w(x, y)).collect::<Result<_>>()?;
                    let (sup, sup_refined) = sups(&dist);
                    rows.push(FiniteRow {
                        seed,
                        horizon,
                        p,
                        initial: dist[0],
                        sup,
                        sup_refined,
                        bound: stability_constant(params, horizon).max(1.0),
                    });
                }
            }
            Ok((rows, pairs))
        })
        .collect::<Result<_>>()?;

    let uniform: Vec<(UniformRow, Vec<(f64, f64)>, PairCheck)> = (0..cfg.seeds)
        .into_par_iter()
        .map(|seed| uniform_case(cfg, "e4/admissible", seed, wasserstein_states(2.0)))
        .collect::<Result<_>>()?;

    let mut report = new_report(cfg);
    let mut pairs = PairCheck::default();
    let mut table = Table::new("finite_horizon", &FINITE_COLUMNS);
    let mut failures = 0usize;
    let mut worst = 0.0f64;
    for (rows, pc) in &finite {
        pairs.merge(pc);
        for r in rows {
            failures += !r.holds() as usize;
            worst = worst.max(r.sup_refined / (r.bound * r.initial));
            table.push(r.row());
        }
    }
    report.verdicts.push(Verdict::new(
        "wasserstein_stability_finite_horizon",
        failures == 0,
        RATIO_SLACK,
        format!(
            "W_p(mu_t, nu_t) <= max(G_T, 1) W_p(mu_0, nu_0) for t <= T in {:?}, p in {:?}, {} seeds; max ratio to bound {worst:e}",
            cfg.horizons, cfg.p_values, cfg.seeds
        ),
    ));
    report.tables.push(table);

    let mut table = Table::new("admissible", &UNIFORM_COLUMNS);
    let mut failures = 0usize;
    let mut growth = 0.0f64;
    for (row, _, pc) in &uniform {
        pairs.merge(pc);
        failures += !row.holds() as usize;
        growth = growth.max(row.ratio_end / row.ratio_check).max(row.sup_all / row.sup_early);
        table.push(row.row());
    }
    report.verdicts.push(Verdict::new(
        "wasserstein_stability_uniform_in_time",
        failures == 0,
        UNIFORM_GROWTH - 1.0,
        format!(
            "W_2 ratio at t = {} (and its running sup) within a factor {UNIFORM_GROWTH} of the value at t = {}, {} seeds; max growth {growth}",
            cfg.t_end, cfg.check_time, cfg.seeds
        ),
    ));
    report.tables.push(table);
    if let Some((_, series, _)) = uniform.first() {
        let mut t = Table::new("admissible_series_seed0", &["t", "w2_ratio"]);
        for &(time, r) in series {
            t.push(vec![time, r]);
        }
        report.tables.push(t);
    }
    report.verdicts.push(pairs.verdict());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ExperimentId;

    #[test]
    fn stability_constant_example() {
        let g = stability_constant(CouplingParams::new(1.0, 0.0).unwrap(), 1.0);
        assert!((g - 4f64.exp()).abs() < 1e-12);
        assert!((g - 54.598).abs() < 1e-3);
    }

    #[test]
    fn identical_initial_data_stay_together() {
        let mut rng = stream(0, "t", 0);
        let z0 = uniform_states(&mut rng, 6, 3);
        let freqs = (0..6).map(|_| random_frequency(&mut rng, 3, 1.0)).collect();
        let ens = Ensemble::new(z0, freqs, CouplingParams::new(1.0, 0.3).unwrap()).unwrap();
        let times = refined_grid(1.0, 20);
        let mut pc = PairCheck::default();
        let a = snapshots(&ens, &times, 1e-3, &mut pc).unwrap();
        let b = snapshots(&ens, &times, 1e-3, &mut pc).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(lp_distance(x, y, 2.0).unwrap() <= 1e-9);
            assert!(wasserstein_states(2.0)(x, y).unwrap() <= 1e-9);
        }
        assert!(pc.verdict().passed);
    }

    #[test]
    fn small_e2_passes() {
        let cfg = ExperimentConfig {
            n: 6,
            seeds: 3,
            t_end: 20.0,
            samples: 40,
            dt: 2e-3,
            ..ExperimentConfig::defaults(ExperimentId::E2)
        };
        let report = run_e2_lp_stability(&cfg).unwrap();
        assert!(report.passed(), "{:#?}", report.verdicts);
        assert_eq!(report.table("finite_horizon").unwrap().rows.len(), 3 * 2 * 3);
    }

    #[test]
    fn small_e4_passes() {
        let cfg = ExperimentConfig {
            n: 6,
            seeds: 2,
            t_end: 20.0,
            samples: 40,
            dt: 2e-3,
            ..ExperimentConfig::defaults(ExperimentId::E4)
        };
        let report = run_e4_finite_time_stability(&cfg).unwrap();
        assert!(report.passed(), "{:#?}", report.verdicts);
    }
}
