//! E3: nested empirical measures form a Cauchy sequence in `W₂`, uniformly in
//! time.

use rayon::prelude::*;
use serde_json::json;

use crate::dynamics::Ensemble;
use crate::error::Result;
use crate::geometry::{SkewHermitianMatrix, UnitStateVector};
use crate::transport::{wasserstein_general, EmpiricalMeasure};

use super::report::{PairCheck, Table, Verdict};
use super::sampler::{random_frequency, sample_admissible_states, stream};
use super::stability::{snapshots, stability_constant};
use super::{new_report, refined_grid, ExperimentConfig, ExperimentReport};

/// Additive slack of the linear Cauchy bound.
const CAUCHY_SLACK: f64 = 0.05;

/// Roundoff allowance when comparing consecutive sups.
const MONOTONE_TOL: f64 = 1e-12;

/// `W₂` between the measures of consecutive ensembles at every grid time.
/// Frequencies enter the ground cost when `with_frequencies` is set.
pub(crate) fn consecutive_w2(
    runs: &[(Ensemble, Vec<Vec<UnitStateVector>>)],
    with_frequencies: bool,
) -> Result<Vec<Vec<f64>>> {
    let measure = |ens: &Ensemble, states: &[UnitStateVector]| -> Result<EmpiricalMeasure> {
        let m = EmpiricalMeasure::uniform(states.to_vec())?;
        if with_frequencies {
            m.with_frequencies(ens.frequencies().to_vec())
        } else {
            Ok(m)
        }
    };
    runs.par_windows(2)
        .map(|w| {
            let (a, sa) = &w[0];
            let (b, sb) = &w[1];
            sa.iter()
                .zip(sb)
                .map(|(x, y)| Ok(wasserstein_general(&measure(a, x)?, &measure(b, y)?, 2.0)?.distance))
                .collect()
        })
        .collect()
}

/// Prefix ensembles of `atoms` (and `freqs`) with the sizes in `n_values`.
fn nested(
    cfg: &ExperimentConfig,
    atoms: &[UnitStateVector],
    freqs: &[SkewHermitianMatrix],
) -> Result<Vec<Ensemble>> {
    let params = cfg.params()?;
    cfg.n_values
        .iter()
        .map(|&n| Ensemble::new(atoms[..n].to_vec(), freqs[..n].to_vec(), params))
        .collect()
}

fn simulate_all(ensembles: Vec<Ensemble>, times: &[f64], dt: f64) -> Result<(Vec<(Ensemble, Vec<Vec<UnitStateVector>>)>, PairCheck)> {
    let runs: Vec<(Ensemble, Vec<Vec<UnitStateVector>>, PairCheck)> = ensembles
        .into_par_iter()
        .map(|ens| {
            let mut pc = PairCheck::default();
            let snaps = snapshots(&ens, times, dt, &mut pc)?;
            Ok((ens, snaps, pc))
        })
        .collect::<Result<_>>()?;
    let mut pairs = PairCheck::default();
    let mut out = Vec::with_capacity(runs.len());
    for (e, s, pc) in runs {
        pairs.merge(&pc);
        out.push((e, s));
    }
    Ok((out, pairs))
}

/// Least-squares slope through the origin.
fn fit_constant(initial: &[f64], sups: &[f64]) -> f64 {
    let den: f64 = initial.iter().map(|w| w * w).sum();
    if den == 0.0 {
        return 0.0;
    }
    initial.iter().zip(sups).map(|(w, s)| w * s).sum::<f64>() / den
}

pub fn run_e3_mean_field_cauchy(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let params = cfg.params()?;
    let largest = *cfg.n_values.last().expect("validated n_values");
    let atoms = sample_admissible_states(&mut stream(cfg.seed, "e3/atoms", 0), largest, cfg.d, params, cfg.delta)?;
    let omega = random_frequency(&mut stream(cfg.seed, "e3/omega", 0), cfg.d, cfg.omega_spread);
    let ensembles = nested(cfg, &atoms, &vec![omega; largest])?;
    let times = refined_grid(cfg.t_end, cfg.samples);
    let (runs, mut pairs) = simulate_all(ensembles, &times, cfg.dt)?;
    let w2 = consecutive_w2(&runs, false)?;

    let labels: Vec<(usize, usize)> = cfg.n_values.windows(2).map(|w| (w[0], w[1])).collect();
    let initial: Vec<f64> = w2.iter().map(|s| s[0]).collect();
    let coarse: Vec<f64> = w2.iter().map(|s| s.iter().step_by(2).copied().fold(0.0, f64::max)).collect();
    let refined: Vec<f64> = w2.iter().map(|s| s.iter().copied().fold(0.0, f64::max)).collect();
    let nonincreasing = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0] + MONOTONE_TOL);
    let c = fit_constant(&initial, &coarse);
    let linear_ok = coarse.iter().zip(&initial).all(|(s, w)| *s <= c * w + CAUCHY_SLACK);

    let mut report = new_report(cfg);
    report.verdicts.push(Verdict::new(
        "sup_w2_nonincreasing",
        nonincreasing(&coarse),
        MONOTONE_TOL,
        format!("sup_(t<={}) W2(mu^N, mu^2N) over pairs {labels:?}: {coarse:?}", cfg.t_end),
    ));
    report.verdicts.push(Verdict::new(
        "sup_w2_nonincreasing_refined_grid",
        nonincreasing(&refined),
        MONOTONE_TOL,
        format!("same sups at double grid density: {refined:?}"),
    ));
    report.verdicts.push(Verdict::new(
        "cauchy_linear_bound",
        linear_ok,
        CAUCHY_SLACK,
        format!("sup <= C W2(t=0) + {CAUCHY_SLACK} with fitted C = {c}; initial W2 {initial:?}"),
    ));

    let mut table = Table::new("w2_series", &["t", "pair", "N", "W2"]);
    for (k, series) in w2.iter().enumerate() {
        for (&t, &w) in times.iter().zip(series) {
            table.push(vec![t, k as f64, labels[k].0 as f64, w]);
        }
    }
    report.tables.push(table);
    let mut table = Table::new("sups", &["N", "two_N", "initial_W2", "sup_W2", "sup_W2_refined"]);
    for k in 0..labels.len() {
        table.push(vec![labels[k].0 as f64, labels[k].1 as f64, initial[k], coarse[k], refined[k]]);
    }
    report.tables.push(table);
    report.metrics.insert("sup_w2".into(), json!(coarse));
    report.metrics.insert("sup_w2_refined".into(), json!(refined));
    report.metrics.insert("initial_w2".into(), json!(initial));
    report.metrics.insert("fitted_constant".into(), json!(c));

    // Heterogeneous frequencies on a finite horizon: reported, not asserted.
    if let Some(&horizon) = cfg.horizons.first() {
        let mut rng = stream(cfg.seed, "e3/heterogeneous", 0);
        let freqs: Vec<SkewHermitianMatrix> = (0..largest).map(|_| random_frequency(&mut rng, cfg.d, cfg.omega_spread)).collect();
        let times = refined_grid(horizon, cfg.samples);
        let (runs, pc) = simulate_all(nested(cfg, &atoms, &freqs)?, &times, cfg.dt)?;
        pairs.merge(&pc);
        let w2 = consecutive_w2(&runs, true)?;
        let g = stability_constant(params, horizon);
        let rows: Vec<_> = w2
            .iter()
            .zip(&labels)
            .map(|(s, l)| {
                let sup = s.iter().copied().fold(0.0, f64::max);
                json!({"N": l.0, "initial": s[0], "sup": sup, "bound": g * s[0] + CAUCHY_SLACK, "holds": sup <= g * s[0] + CAUCHY_SLACK})
            })
            .collect();
        report.metrics.insert(
            "heterogeneous_finite_horizon".into(),
            json!({"T": horizon, "G_T": g, "pairs": rows, "asserted": false}),
        );
    }
    report.verdicts.push(pairs.verdict());
    Ok(report)
}
