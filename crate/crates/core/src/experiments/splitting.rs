//! E7: the homogeneous flow factors as the free rotation `e^{Ωt}` composed with
//! the frequency-free flow.

use serde_json::json;

use crate::dynamics::Ensemble;
use crate::error::Result;
use crate::geometry::{matrix_exp, SkewHermitianMatrix, UnitStateVector};
use crate::observables::{functional_f, functional_g, order_parameter};
use crate::transport::EmpiricalMeasure;

use super::report::{PairCheck, Table, Verdict};
use super::sampler::{random_frequency, stream, uniform_states};
use super::stability::snapshots;
use super::{new_report, refined_grid, ExperimentConfig, ExperimentReport};

const STATE_TOL: f64 = 1e-6;
const OBSERVABLE_TOL: f64 = 1e-8;

pub fn run_e7_splitting(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let states = uniform_states(&mut stream(cfg.seed, "e7/states", 0), cfg.n, cfg.d);
    let omega = random_frequency(&mut stream(cfg.seed, "e7/omega", 0), cfg.d, cfg.omega_spread);
    run_e7_with(cfg, states, omega)
}

/// E7 for given initial states and common frequency matrix.
pub fn run_e7_with(cfg: &ExperimentConfig, states: Vec<UnitStateVector>, omega: SkewHermitianMatrix) -> Result<ExperimentReport> {
    let params = cfg.params()?;
    let d = omega.dim();
    let rotating = Ensemble::with_common_frequency(states.clone(), omega.clone(), params)?;
    let free = Ensemble::with_common_frequency(states, SkewHermitianMatrix::zeros(d), params)?;
    let times = refined_grid(cfg.t_end, cfg.samples);
    let mut pairs = PairCheck::default();
    let z = snapshots(&rotating, &times, cfg.dt, &mut pairs)?;
    let w = snapshots(&free, &times, cfg.dt, &mut pairs)?;

    let mut table = Table::new("series", &["t", "state_gap", "F_gap", "G_gap", "R_gap", "F", "R"]);
    let mut worst_state = 0.0f64;
    let mut worst_obs = 0.0f64;
    let mut first_state = None;
    let mut first_obs = None;
    let mut bitwise = true;
    for ((&t, zs), ws) in times.iter().zip(&z).zip(&w) {
        let u = matrix_exp(&omega, t);
        let state_gap = zs
            .iter()
            .zip(ws)
            .map(|(a, b)| a.as_vector().distance(&u.apply(b.as_vector())))
            .fold(0.0, f64::max);
        bitwise &= zs == ws;
        let (fz, fw) = (functional_f(zs), functional_f(ws));
        let (gz, gw) = (functional_g(zs), functional_g(ws));
        let rz = order_parameter(&EmpiricalMeasure::uniform(zs.clone())?);
        let rw = order_parameter(&EmpiricalMeasure::uniform(ws.clone())?);
        let gaps = [(fz - fw).abs(), (gz - gw).abs(), (rz - rw).abs()];
        let obs_gap = gaps.iter().copied().fold(0.0, f64::max);
        worst_state = worst_state.max(state_gap);
        worst_obs = worst_obs.max(obs_gap);
        if state_gap > STATE_TOL && first_state.is_none() {
            first_state = Some(t);
        }
        if obs_gap > OBSERVABLE_TOL && first_obs.is_none() {
            first_obs = Some(t);
        }
        table.push(vec![t, state_gap, gaps[0], gaps[1], gaps[2], fz, rz]);
    }

    let mut report = new_report(cfg);
    report.verdicts.push(
        Verdict::new(
            "state_splitting",
            first_state.is_none(),
            STATE_TOL,
            format!("max_j |z_j(t) - exp(Omega t) w_j(t)| for t <= {}: {worst_state:e}", cfg.t_end),
        )
        .at(first_state),
    );
    report.verdicts.push(
        Verdict::new(
            "observable_invariance",
            first_obs.is_none(),
            OBSERVABLE_TOL,
            format!("max difference of F, G, R between the two runs: {worst_obs:e}"),
        )
        .at(first_obs),
    );
    report.verdicts.push(pairs.verdict());
    report.metrics.insert("bitwise_identical".into(), json!(bitwise));
    report.metrics.insert("max_state_gap".into(), json!(worst_state));
    report.tables.push(table);
    Ok(report)
}
