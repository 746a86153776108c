//! Theorem-level experiments. Each run is deterministic in its configuration
//! and seed; all randomness comes from named [`sampler::stream`]s.

mod aggregation;
mod mean_field;
mod order;
pub mod report;
pub mod sampler;
mod splitting;
mod stability;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dynamics::CouplingParams;
use crate::error::{Error, Result};
use crate::integrators::Stepper;

pub use aggregation::{run_e1_aggregation, run_e1_with_ensemble};
pub use mean_field::run_e3_mean_field_cauchy;
pub use order::{run_e5_order_parameter, run_e6_bipolar};
pub use report::{ExperimentReport, Table, Verdict};
pub use sampler::{sample_admissible, AdmissibilityCheck, CapSampler};
pub use splitting::{run_e7_splitting, run_e7_with};
pub use stability::{run_e2_lp_stability, run_e4_finite_time_stability, stability_constant};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentId {
    E1,
    E2,
    E3,
    E4,
    E5,
    E6,
    E7,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 7] = [Self::E1, Self::E2, Self::E3, Self::E4, Self::E5, Self::E6, Self::E7];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::E1 => "e1",
            Self::E2 => "e2",
            Self::E3 => "e3",
            Self::E4 => "e4",
            Self::E5 => "e5",
            Self::E6 => "e6",
            Self::E7 => "e7",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Self::E1 => "exponential aggregation",
            Self::E2 => "l^p stability",
            Self::E3 => "mean-field Cauchy property",
            Self::E4 => "finite-time Wasserstein stability",
            Self::E5 => "order-parameter calculus",
            Self::E6 => "bi-polar exclusion",
            Self::E7 => "solution splitting",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown experiment id '{s}' (expected e1..e7)")))
    }
}

/// Fully resolved experiment parameters.
///
/// Field meaning per experiment: `t_end` is the simulated horizon (the long
/// admissible horizon for e2/e4), `horizons` the finite horizons `T` of the
/// stability bounds (e2, e4) or of the heterogeneous variant (e3), `seeds` the
/// number of independent repetitions, `n_values` the nested sizes of e3.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub n: usize,
    pub d: usize,
    pub kappa0: f64,
    pub kappa1: f64,
    pub delta: f64,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub omega_spread: f64,
    pub samples: usize,
    pub perturbation: f64,
    pub seeds: usize,
    pub n_values: Vec<usize>,
    pub horizons: Vec<f64>,
    pub p_values: Vec<f64>,
    pub check_time: f64,
    pub fd_step: f64,
    pub fd_floor: f64,
}

/// Optional overrides applied on top of the per-experiment defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub kappa0: Option<f64>,
    pub kappa1: Option<f64>,
    pub delta: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub seed: Option<u64>,
    pub omega_spread: Option<f64>,
    pub samples: Option<usize>,
    pub perturbation: Option<f64>,
    pub seeds: Option<usize>,
    pub n_values: Option<Vec<usize>>,
    pub horizons: Option<Vec<f64>>,
    pub p_values: Option<Vec<f64>>,
    pub check_time: Option<f64>,
    pub fd_step: Option<f64>,
    pub fd_floor: Option<f64>,
}

impl ExperimentConfig {
    pub fn defaults(id: ExperimentId) -> Self {
        let base = Self {
            experiment: id,
            n: 32,
            d: 3,
            kappa0: 1.0,
            kappa1: 0.1,
            delta: 0.05,
            dt: 1e-3,
            t_end: 50.0,
            seed: 1,
            omega_spread: 1.0,
            samples: 200,
            perturbation: 1e-3,
            seeds: 1,
            n_values: Vec::new(),
            horizons: Vec::new(),
            p_values: Vec::new(),
            check_time: 10.0,
            fd_step: 1e-3,
            fd_floor: 1e-6,
        };
        match id {
            ExperimentId::E1 => Self {
                n: 64,
                d: 4,
                kappa1: -0.2,
                t_end: 20.0,
                ..base
            },
            ExperimentId::E2 => Self {
                n: 16,
                kappa1: -0.2,
                t_end: 100.0,
                seeds: 20,
                horizons: vec![1.0, 2.0],
                p_values: vec![1.0, 2.0, 4.0],
                ..base
            },
            ExperimentId::E3 => Self {
                n: 128,
                d: 4,
                kappa1: 0.0,
                n_values: vec![16, 32, 64, 128],
                horizons: vec![2.0],
                ..base
            },
            ExperimentId::E4 => Self {
                t_end: 100.0,
                seeds: 5,
                horizons: vec![2.0],
                p_values: vec![1.0, 2.0, 4.0],
                ..base
            },
            ExperimentId::E5 => Self { seeds: 20, ..base },
            ExperimentId::E6 => base,
            ExperimentId::E7 => Self {
                n: 16,
                d: 4,
                kappa1: 0.2,
                t_end: 10.0,
                ..base
            },
        }
    }

    pub fn resolve(id: ExperimentId, o: &ConfigOverrides) -> Self {
        let mut c = Self::defaults(id);
        macro_rules! apply {
            ($($f:ident),*) => { $( if let Some(v) = o.$f.clone() { c.$f = v; } )* };
        }
        apply!(n, d, kappa0, kappa1, delta, dt, t_end, seed, omega_spread, samples, perturbation, seeds, n_values, horizons, p_values, check_time, fd_step, fd_floor);
        c
    }

    pub fn params(&self) -> Result<CouplingParams> {
        CouplingParams::new(self.kappa0, self.kappa1)
    }

    /// Shape checks shared by all experiments plus the hypotheses each one
    /// needs before any simulation starts.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.d == 0 {
            return bad("d must be at least 1".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be nonnegative, got {}", self.t_end));
        }
        if self.samples < 2 {
            return bad("samples must be at least 2".into());
        }
        if !(self.omega_spread >= 0.0 && self.omega_spread.is_finite()) {
            return bad("omega_spread must be nonnegative".into());
        }
        if !(self.perturbation > 0.0 && self.perturbation < 0.5) {
            return bad("perturbation must lie in (0, 0.5)".into());
        }
        if self.seeds == 0 {
            return bad("seeds must be at least 1".into());
        }
        if self.p_values.iter().any(|&p| !(p >= 1.0 && p.is_finite())) {
            return bad("every p must lie in [1, inf)".into());
        }
        if self.horizons.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return bad("horizons must be positive".into());
        }
        if !(self.fd_step > 0.0 && self.fd_floor >= 0.0) {
            return bad("fd_step must be positive and fd_floor nonnegative".into());
        }
        let params = self.params()?;
        use ExperimentId::*;
        match self.experiment {
            E1 | E3 | E6 => sampler::check_feasible(params, self.delta)?,
            E2 | E4 => {
                sampler::check_feasible(params, self.delta)?;
                if self.p_values.is_empty() || self.horizons.is_empty() {
                    return bad("p_values and horizons must be nonempty".into());
                }
                if !(self.check_time > 0.0 && self.check_time <= self.t_end) {
                    return bad("check_time must lie in (0, t_end]".into());
                }
            }
            E5 => {
                sampler::check_feasible(params, self.delta)?;
                if self.kappa0 + 2.0 * self.kappa1 < 0.0 {
                    return Err(Error::Infeasible("need kappa0 + 2 kappa1 >= 0".into()));
                }
            }
            E7 => {}
        }
        if self.experiment == E3 {
            if self.n_values.len() < 2 {
                return bad("n_values needs at least two sizes".into());
            }
            if self.n_values.windows(2).any(|w| w[1] <= w[0]) {
                return bad("n_values must be strictly increasing".into());
            }
            if *self.n_values.last().unwrap() > crate::transport::MAX_SUPPORT {
                return bad(format!("n_values may not exceed {}", crate::transport::MAX_SUPPORT));
            }
        }
        Ok(())
    }
}

/// Validates and runs the configured experiment.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut report = match cfg.experiment {
        ExperimentId::E1 => run_e1_aggregation(cfg),
        ExperimentId::E2 => run_e2_lp_stability(cfg),
        ExperimentId::E3 => run_e3_mean_field_cauchy(cfg),
        ExperimentId::E4 => run_e4_finite_time_stability(cfg),
        ExperimentId::E5 => run_e5_order_parameter(cfg),
        ExperimentId::E6 => run_e6_bipolar(cfg),
        ExperimentId::E7 => run_e7_splitting(cfg),
    }?;
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

pub(crate) fn new_report(cfg: &ExperimentConfig) -> ExperimentReport {
    ExperimentReport {
        id: cfg.experiment.as_str().to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        verdicts: Vec::new(),
        tables: Vec::new(),
        metrics: Default::default(),
        wall_clock_seconds: 0.0,
    }
}

/// `count` equally spaced times on `[0, t_end]`.
pub(crate) fn linspace(t_end: f64, count: usize) -> Vec<f64> {
    if count < 2 || t_end == 0.0 {
        return vec![0.0];
    }
    let last = (count - 1) as f64;
    (0..count).map(|k| if k + 1 == count { t_end } else { t_end * k as f64 / last }).collect()
}

/// Sample grid at double density: `2·samples − 1` times whose even entries
/// form the `samples`-point grid.
pub(crate) fn refined_grid(t_end: f64, samples: usize) -> Vec<f64> {
    linspace(t_end, 2 * samples - 1)
}

/// Refined grid with extra checkpoint times merged in.
pub(crate) fn grid_with(t_end: f64, samples: usize, extra: &[f64]) -> Vec<f64> {
    let mut g = refined_grid(t_end, samples);
    g.extend(extra.iter().copied().filter(|&t| t > 0.0 && t <= t_end));
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * t_end.max(1.0));
    g
}

/// Advances `stepper` through `times` (starting at 0), splitting each gap into
/// equal steps no longer than `dt`. `on_step` runs after every step,
/// `on_sample` at every grid time including 0.
pub(crate) fn march(
    stepper: &mut Stepper,
    times: &[f64],
    dt: f64,
    mut on_step: impl FnMut(&Stepper),
    mut on_sample: impl FnMut(usize, f64, &Stepper) -> Result<()>,
) -> Result<()> {
    let mut prev = 0.0;
    for (k, &t) in times.iter().enumerate() {
        let gap = t - prev;
        if gap > 0.0 {
            let steps = ((gap / dt) - 1e-9).ceil().max(1.0) as usize;
            let h = gap / steps as f64;
            for _ in 0..steps {
                stepper.step(h)?;
                on_step(stepper);
            }
        }
        prev = t;
        on_sample(k, t, stepper)?;
    }
    Ok(())
}

/// Least-squares slope of `ln y` against `t` over points with `y > floor`.
pub(crate) fn fitted_decay_rate(times: &[f64], values: &[f64], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, &y)| y > floor)
        .map(|(&t, &y)| (t, y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    Some(-sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_parse() {
        assert_eq!("E3".parse::<ExperimentId>().unwrap(), ExperimentId::E3);
        assert!("e8".parse::<ExperimentId>().is_err());
        for id in ExperimentId::ALL {
            assert_eq!(id.to_string().parse::<ExperimentId>().unwrap(), id);
        }
    }

    #[test]
    fn grids() {
        let g = linspace(20.0, 200);
        assert_eq!(g.len(), 200);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[199], 20.0);
        let r = refined_grid(20.0, 200);
        assert_eq!(r.len(), 399);
        for k in 0..200 {
            assert!((r[2 * k] - g[k]).abs() < 1e-12);
        }
        let m = grid_with(100.0, 3, &[10.0, 50.0]);
        assert_eq!(m, vec![0.0, 10.0, 25.0, 50.0, 75.0, 100.0]);
        assert_eq!(linspace(0.0, 200), vec![0.0]);
    }

    #[test]
    fn decay_fit_recovers_rate() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|&t| 3.0 * (-0.7 * t).exp()).collect();
        assert!((fitted_decay_rate(&t, &y, 1e-13).unwrap() - 0.7).abs() < 1e-12);
        assert!(fitted_decay_rate(&t, &vec![0.0; 50], 1e-13).is_none());
    }

    #[test]
    fn overrides_and_validation() {
        let o = ConfigOverrides {
            n: Some(8),
            kappa1: Some(0.3),
            ..Default::default()
        };
        let c = ExperimentConfig::resolve(ExperimentId::E1, &o);
        assert_eq!(c.n, 8);
        assert_eq!(c.d, 4);
        assert_eq!(c.kappa1, 0.3);
        assert!(c.validate().is_ok());
        let bad = ExperimentConfig {
            delta: 0.95,
            ..ExperimentConfig::defaults(ExperimentId::E1)
        };
        assert!(matches!(bad.validate(), Err(Error::Infeasible(_))));
        let bad = ExperimentConfig {
            n_values: vec![16, 8],
            ..ExperimentConfig::defaults(ExperimentId::E3)
        };
        assert!(bad.validate().is_err());
        for id in ExperimentId::ALL {
            ExperimentConfig::defaults(id).validate().unwrap();
        }
    }
}
