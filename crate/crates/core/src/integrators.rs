//! Classical RK4 with per-particle renormalization, trajectory recording and
//! the solution-splitting transform for homogeneous ensembles.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{centroid_flat, CouplingParams, Ensemble, Model, ParticleField, HOMOGENEOUS_TOL};
use crate::error::{Error, Result};
use crate::geometry::{apply_into, matrix_exp, ComplexVector, SkewHermitianMatrix, UnitStateVector};
use crate::observables::ObservableSeries;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    pub renormalize_every: usize,
    pub record_every: usize,
    pub unit_drift_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 1.0,
            renormalize_every: 1,
            record_every: 1,
            unit_drift_tol: 1e-9,
        }
    }
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_end: f64) -> Result<Self> {
        let cfg = Self {
            dt,
            t_end,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_record_every(mut self, record_every: usize) -> Self {
        self.record_every = record_every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, found {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "t_end must be nonnegative, found {}",
                self.t_end
            )));
        }
        if self.renormalize_every == 0 {
            return Err(Error::InvalidArgument("renormalize_every must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be at least 1".into()));
        }
        if !(self.unit_drift_tol > 0.0) {
            return Err(Error::InvalidArgument("unit_drift_tol must be positive".into()));
        }
        Ok(())
    }

    /// Number of steps, the last one possibly shorter than `dt`.
    pub fn steps(&self) -> usize {
        let ratio = self.t_end / self.dt;
        let rounded = ratio.round();
        if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) {
            rounded as usize
        } else {
            ratio.ceil() as usize
        }
    }

    /// Time after `k` steps.
    pub fn time_at(&self, k: usize) -> f64 {
        if k >= self.steps() {
            self.t_end
        } else {
            k as f64 * self.dt
        }
    }
}

/// Reusable RK4 state on a flat particle-major buffer.
///
/// A negative step size integrates the same field backward in time.
#[derive(Clone, Debug)]
pub struct Stepper {
    field: ParticleField,
    state: Vec<Complex64>,
    k1: Vec<Complex64>,
    k2: Vec<Complex64>,
    k3: Vec<Complex64>,
    k4: Vec<Complex64>,
    stage: Vec<Complex64>,
    renormalize_every: usize,
    unit_drift_tol: f64,
    since_renorm: usize,
    time: f64,
}

impl Stepper {
    pub fn new(ens: &Ensemble, field: ParticleField) -> Self {
        let state = ens.flat_states();
        let len = state.len();
        Self {
            field,
            state,
            k1: vec![ZERO; len],
            k2: vec![ZERO; len],
            k3: vec![ZERO; len],
            k4: vec![ZERO; len],
            stage: vec![ZERO; len],
            renormalize_every: 1,
            unit_drift_tol: 1e-9,
            since_renorm: 0,
            time: 0.0,
        }
    }

    /// Stepper for the LHS field of `ens`.
    pub fn lhs(ens: &Ensemble) -> Self {
        let field = ParticleField::new(ens, Model::Lhs).expect("LHS field accepts every valid ensemble");
        Self::new(ens, field)
    }

    pub fn with_renormalization(mut self, every: usize, unit_drift_tol: f64) -> Self {
        self.renormalize_every = every.max(1);
        self.unit_drift_tol = unit_drift_tol;
        self
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn flat(&self) -> &[Complex64] {
        &self.state
    }

    pub fn states(&self) -> Vec<UnitStateVector> {
        self.state
            .chunks_exact(self.field.dim())
            .map(|c| UnitStateVector::new_unchecked(ComplexVector::from_vec_unchecked(c.to_vec())))
            .collect()
    }

    pub fn centroid(&self) -> ComplexVector {
        ComplexVector::from_vec_unchecked(centroid_flat(&self.state, self.field.dim()))
    }

    /// Derivative of the current state.
    pub fn derivative(&self) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.state.len()];
        self.field.eval(&self.state, &mut out);
        out
    }

    /// One RK4 step of signed size `dt`.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        let f = &self.field;
        f.eval(&self.state, &mut self.k1);
        axpy(&mut self.stage, &self.state, &self.k1, 0.5 * dt);
        f.eval(&self.stage, &mut self.k2);
        axpy(&mut self.stage, &self.state, &self.k2, 0.5 * dt);
        f.eval(&self.stage, &mut self.k3);
        axpy(&mut self.stage, &self.state, &self.k3, dt);
        f.eval(&self.stage, &mut self.k4);
        let w = dt / 6.0;
        for i in 0..self.state.len() {
            self.state[i] += (self.k1[i] + (self.k2[i] + self.k3[i]) * 2.0 + self.k4[i]) * w;
        }
        self.time += dt;
        self.since_renorm += 1;
        if self.since_renorm >= self.renormalize_every {
            self.since_renorm = 0;
            self.renormalize()?;
        } else if self.state.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(self.failure("non-finite state".into()));
        }
        Ok(())
    }

    fn renormalize(&mut self) -> Result<()> {
        let d = self.field.dim();
        let mut worst = 0.0f64;
        for z in self.state.chunks_exact_mut(d) {
            let norm = z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if !norm.is_finite() || norm == 0.0 {
                let t = self.time;
                return Err(Error::Integration {
                    time: t,
                    reason: format!("particle norm became {norm}"),
                });
            }
            worst = worst.max((norm - 1.0).abs());
            let inv = 1.0 / norm;
            for c in z.iter_mut() {
                *c *= inv;
            }
        }
        if worst > self.unit_drift_tol {
            return Err(self.failure(format!(
                "unit-norm drift {worst:e} exceeds tolerance {:e}",
                self.unit_drift_tol
            )));
        }
        Ok(())
    }

    fn failure(&self, reason: String) -> Error {
        Error::Integration { time: self.time, reason }
    }
}

fn axpy(out: &mut [Complex64], x: &[Complex64], k: &[Complex64], h: f64) {
    for ((o, &xi), &ki) in out.iter_mut().zip(x).zip(k) {
        *o = xi + ki * h;
    }
}

/// One RK4 step of the LHS field followed by renormalization.
pub fn step_rk4(ens: &Ensemble, dt: f64) -> Result<Ensemble> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, found {dt}")));
    }
    let mut stepper = Stepper::lhs(ens).with_renormalization(1, f64::INFINITY);
    stepper.step(dt)?;
    ens.with_states(stepper.states())
}

/// Recorded snapshots. Frequencies and couplings are constant in time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<UnitStateVector>>,
    pub frequencies: Vec<SkewHermitianMatrix>,
    pub params: CouplingParams,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_states(&self) -> &[UnitStateVector] {
        self.snapshots.last().expect("trajectory holds the initial snapshot")
    }

    /// Snapshot `k` as an ensemble.
    pub fn ensemble_at(&self, k: usize) -> Ensemble {
        let homogeneous = self
            .frequencies
            .iter()
            .all(|f| f.frobenius_distance(&self.frequencies[0]) <= HOMOGENEOUS_TOL);
        Ensemble::from_parts_unchecked(self.snapshots[k].clone(), self.frequencies.clone(), self.params, homogeneous)
    }
}

#[derive(Clone, Debug)]
pub struct Integration {
    pub trajectory: Trajectory,
    pub series: ObservableSeries,
}

/// Callback invoked with `(t, states)` at every recorded time.
pub type Observer<'a> = &'a mut dyn FnMut(f64, &[UnitStateVector]);

/// Integrates the LHS model over `[0, t_end]`, recording every
/// `record_every` steps and at `t_end`.
pub fn integrate(ens: &Ensemble, cfg: &IntegratorConfig, observers: &mut [Observer<'_>]) -> Result<Integration> {
    let field = ParticleField::new(ens, Model::Lhs)?;
    integrate_field(ens, field, cfg, observers)
}

/// As [`integrate`] for an arbitrary field built from `ens`.
pub fn integrate_field(
    ens: &Ensemble,
    field: ParticleField,
    cfg: &IntegratorConfig,
    observers: &mut [Observer<'_>],
) -> Result<Integration> {
    cfg.validate()?;
    let mut stepper = Stepper::new(ens, field).with_renormalization(cfg.renormalize_every, cfg.unit_drift_tol);
    let mut series = ObservableSeries::new(ens.dim());
    let mut times = Vec::new();
    let mut snapshots = Vec::new();

    let mut record = |t: f64, states: Vec<UnitStateVector>, observers: &mut [Observer<'_>]| {
        for obs in observers.iter_mut() {
            obs(t, &states);
        }
        series.push(t, &states);
        times.push(t);
        snapshots.push(states);
    };

    record(0.0, ens.states().to_vec(), observers);
    let steps = cfg.steps();
    for k in 1..=steps {
        let h = cfg.time_at(k) - cfg.time_at(k - 1);
        stepper.step(h)?;
        if k % cfg.record_every == 0 || k == steps {
            record(cfg.time_at(k), stepper.states(), observers);
        }
    }

    Ok(Integration {
        trajectory: Trajectory {
            times,
            snapshots,
            frequencies: ens.frequencies().to_vec(),
            params: ens.params(),
        },
        series,
    })
}

/// Rotates every snapshot back by the free flow: `w_j(t) = exp(−Ωt) z_j(t)`.
///
/// The result carries zero frequencies. For uniformly spaced times the
/// one-interval propagator is computed once and accumulated.
pub fn split_transform(traj: &Trajectory, omega: &SkewHermitianMatrix) -> Result<Trajectory> {
    if traj
        .frequencies
        .iter()
        .any(|f| f.frobenius_distance(omega) > HOMOGENEOUS_TOL)
    {
        return Err(Error::Heterogeneous);
    }
    let d = omega.dim();
    if let Some(s) = traj.snapshots.first().and_then(|s| s.first()) {
        if s.dim() != d {
            return Err(Error::DimensionMismatch { expected: s.dim(), found: d });
        }
    }
    let uniform = traj.times.len() > 2 && {
        let h = traj.times[1] - traj.times[0];
        traj.times.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-12 * h.abs().max(1.0))
    };
    let step = uniform.then(|| matrix_exp(omega, -(traj.times[1] - traj.times[0])));

    let mut propagator = matrix_exp(omega, -traj.times.first().copied().unwrap_or(0.0));
    let mut snapshots = Vec::with_capacity(traj.snapshots.len());
    for (k, (&t, snap)) in traj.times.iter().zip(&traj.snapshots).enumerate() {
        if k > 0 {
            propagator = match &step {
                Some(s) => s.matmul(&propagator),
                None => matrix_exp(omega, -t),
            };
        }
        let rotated = snap
            .iter()
            .map(|z| {
                let mut out = vec![ZERO; d];
                apply_into(propagator.as_slice(), d, z.as_slice(), &mut out);
                UnitStateVector::new_unchecked(ComplexVector::from_vec_unchecked(out))
            })
            .collect();
        snapshots.push(rotated);
    }
    Ok(Trajectory {
        times: traj.times.clone(),
        snapshots,
        frequencies: vec![SkewHermitianMatrix::zeros(d); traj.frequencies.len()],
        params: traj.params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ComplexMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> UnitStateVector {
        let v = (0..d)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        UnitStateVector::normalize(ComplexVector::new(v).unwrap()).unwrap()
    }

    fn random_skew(rng: &mut ChaCha8Rng, d: usize) -> SkewHermitianMatrix {
        let data = (0..d * d)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        SkewHermitianMatrix::skew_part(&ComplexMatrix::new(d, data).unwrap())
    }

    fn random_ensemble(rng: &mut ChaCha8Rng, n: usize, d: usize, k0: f64, k1: f64) -> Ensemble {
        let states = (0..n).map(|_| random_unit(rng, d)).collect();
        Ensemble::with_common_frequency(states, random_skew(rng, d), CouplingParams::new(k0, k1).unwrap()).unwrap()
    }

    fn max_state_dev(a: &[UnitStateVector], b: &[UnitStateVector]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x.distance(y)).fold(0.0, f64::max)
    }

    #[test]
    fn config_validation_and_grid() {
        assert!(IntegratorConfig::new(0.0, 1.0).is_err());
        assert!(IntegratorConfig::new(1e-3, -1.0).is_err());
        let mut cfg = IntegratorConfig::new(1e-3, 1.0).unwrap();
        cfg.renormalize_every = 0;
        assert!(cfg.validate().is_err());
        let cfg = IntegratorConfig::new(1e-3, 1.0).unwrap();
        assert_eq!(cfg.steps(), 1000);
        let cfg = IntegratorConfig::new(0.3, 1.0).unwrap();
        assert_eq!(cfg.steps(), 4);
        assert_eq!(cfg.time_at(4), 1.0);
        assert!((cfg.time_at(3) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_is_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let z = random_unit(&mut rng, 3);
        let ens = Ensemble::with_common_frequency(vec![z; 6], SkewHermitianMatrix::zeros(3), CouplingParams::new(1.0, 0.2).unwrap())
            .unwrap();
        let next = step_rk4(&ens, 1e-2).unwrap();
        assert!(max_state_dev(next.states(), ens.states()) <= 1e-15);
    }

    #[test]
    fn single_particle_follows_exact_rotation() {
        let om = SkewHermitianMatrix::from_imag_diagonal(&[1.0, -1.0]);
        let z = UnitStateVector::normalize(ComplexVector::new(vec![Complex64::new(0.6, 0.1), Complex64::new(0.2, -0.7)]).unwrap())
            .unwrap();
        let ens = Ensemble::with_common_frequency(vec![z.clone()], om.clone(), CouplingParams::new(1.0, 0.0).unwrap()).unwrap();
        for &dt in &[0.1, 0.05] {
            let next = step_rk4(&ens, dt).unwrap();
            let exact = matrix_exp(&om, dt).apply(&z);
            let err = next.states()[0].distance(&exact);
            // local error of RK4 on a linear flow is (dt)^5/120
            assert!(err <= dt.powi(5) / 120.0 * 1.01 + 1e-16, "dt {dt}: {err}");
        }
    }

    #[test]
    fn one_step_error_is_fifth_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let ens = random_ensemble(&mut rng, 5, 3, 1.0, 0.3);
        let reference = |h: f64| {
            let mut s = Stepper::lhs(&ens);
            for _ in 0..16 {
                s.step(h / 16.0).unwrap();
            }
            s.states()
        };
        let err = |h: f64| max_state_dev(step_rk4(&ens, h).unwrap().states(), &reference(h));
        let ratio = err(0.2) / err(0.1);
        assert!(ratio > 16.0 && ratio < 48.0, "ratio {ratio}");
    }

    #[test]
    fn global_error_is_fourth_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let ens = random_ensemble(&mut rng, 6, 2, 1.0, -0.2);
        let run = |dt: f64| {
            let mut cfg = IntegratorConfig::new(dt, 2.0).unwrap();
            cfg.unit_drift_tol = 1e-6;
            integrate(&ens, &cfg, &mut [])
                .unwrap()
                .trajectory
                .final_states()
                .to_vec()
        };
        let reference = run(0.0025);
        let e1 = max_state_dev(&run(0.04), &reference);
        let e2 = max_state_dev(&run(0.02), &reference);
        let ratio = e1 / e2;
        assert!(ratio > 8.0 && ratio < 32.0, "ratio {ratio}");
    }

    #[test]
    fn zero_horizon_records_initial_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let ens = random_ensemble(&mut rng, 4, 2, 1.0, 0.0);
        let out = integrate(&ens, &IntegratorConfig::new(1e-3, 0.0).unwrap(), &mut []).unwrap();
        assert_eq!(out.trajectory.times, vec![0.0]);
        assert_eq!(out.trajectory.snapshots[0], ens.states());
        assert_eq!(out.series.len(), 1);
    }

    #[test]
    fn unit_norm_conserved_and_observers_called() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let ens = random_ensemble(&mut rng, 10, 3, 1.0, 0.4);
        let mut calls = 0usize;
        let mut worst = 0.0f64;
        let mut obs = |_t: f64, s: &[UnitStateVector]| {
            calls += 1;
            for z in s {
                worst = worst.max((z.norm() - 1.0).abs());
            }
        };
        let cfg = IntegratorConfig::new(1e-3, 2.0).unwrap().with_record_every(100);
        let out = integrate(&ens, &cfg, &mut [&mut obs]).unwrap();
        assert_eq!(calls, 21);
        assert_eq!(out.trajectory.len(), 21);
        assert!(worst <= 1e-9);
        assert!(out.trajectory.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn drift_violation_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let ens = random_ensemble(&mut rng, 4, 2, 5.0, 0.0);
        let mut cfg = IntegratorConfig::new(0.3, 3.0).unwrap();
        cfg.unit_drift_tol = 1e-14;
        assert!(matches!(integrate(&ens, &cfg, &mut []), Err(Error::Integration { .. })));
    }

    #[test]
    fn forward_then_backward_returns() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let ens = random_ensemble(&mut rng, 8, 3, 1.0, 0.3);
        let mut s = Stepper::lhs(&ens);
        s.step(1e-3).unwrap();
        s.step(-1e-3).unwrap();
        assert!(max_state_dev(&s.states(), ens.states()) <= 1e-8);
    }

    #[test]
    fn split_of_free_flow_is_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let om = random_skew(&mut rng, 3);
        let states: Vec<_> = (0..4).map(|_| random_unit(&mut rng, 3)).collect();
        let ens = Ensemble::with_common_frequency(states, om.clone(), CouplingParams::new(0.0, 0.0).unwrap()).unwrap();
        let cfg = IntegratorConfig::new(1e-3, 3.0).unwrap().with_record_every(50);
        let traj = integrate(&ens, &cfg, &mut []).unwrap().trajectory;
        let split = split_transform(&traj, &om).unwrap();
        for snap in &split.snapshots {
            assert!(max_state_dev(snap, ens.states()) <= 1e-9);
            for z in snap {
                assert!((z.norm() - 1.0).abs() <= 1e-12);
            }
        }
        assert!(split.frequencies.iter().all(|f| f.is_zero()));
    }

    #[test]
    fn split_with_zero_frequency_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        let ens = random_ensemble(&mut rng, 4, 2, 1.0, 0.0).with_frequencies(vec![SkewHermitianMatrix::zeros(2); 4]).unwrap();
        let traj = integrate(&ens, &IntegratorConfig::new(1e-2, 1.0).unwrap(), &mut []).unwrap().trajectory;
        let split = split_transform(&traj, &SkewHermitianMatrix::zeros(2)).unwrap();
        assert_eq!(split.snapshots, traj.snapshots);
    }

    #[test]
    fn split_trajectory_solves_frequency_free_dynamics() {
        let mut rng = ChaCha8Rng::seed_from_u64(49);
        let ens = random_ensemble(&mut rng, 6, 3, 1.0, 0.3);
        let om = ens.frequencies()[0].clone();
        let cfg = IntegratorConfig::new(1e-3, 1.0).unwrap();
        let traj = integrate(&ens, &cfg, &mut []).unwrap().trajectory;
        let split = split_transform(&traj, &om).unwrap();
        let free = ens.with_frequencies(vec![SkewHermitianMatrix::zeros(3); 6]).unwrap();
        let field = ParticleField::new(&free, Model::Lhs).unwrap();
        let h = cfg.dt;
        for k in [100usize, 500, 900] {
            let flat = |s: &[UnitStateVector]| s.iter().flat_map(|z| z.as_slice().to_vec()).collect::<Vec<_>>();
            let (prev, cur, next) = (flat(&split.snapshots[k - 1]), flat(&split.snapshots[k]), flat(&split.snapshots[k + 1]));
            let mut rhs = vec![ZERO; cur.len()];
            field.eval(&cur, &mut rhs);
            let resid = (0..cur.len())
                .map(|i| ((next[i] - prev[i]) / (2.0 * h) - rhs[i]).norm())
                .fold(0.0, f64::max);
            assert!(resid <= 1e-6, "residual {resid}");
        }
    }

    #[test]
    fn split_rejects_heterogeneous() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let ens = random_ensemble(&mut rng, 3, 2, 1.0, 0.0);
        let mut freqs = ens.frequencies().to_vec();
        freqs[1] = random_skew(&mut rng, 2);
        let het = ens.with_frequencies(freqs).unwrap();
        let traj = integrate(&het, &IntegratorConfig::new(1e-2, 0.1).unwrap(), &mut []).unwrap().trajectory;
        assert!(matches!(split_transform(&traj, &ens.frequencies()[0]), Err(Error::Heterogeneous)));
    }
}
