//! Initial-data samplers and named random streams.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{CouplingParams, Ensemble};
use crate::error::{Error, Result};
use crate::geometry::{ComplexMatrix, ComplexVector, SkewHermitianMatrix, UnitStateVector};
use crate::observables::functional_f;

/// Independent generator for the stream `(seed, name, index)`.
pub fn stream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    // FNV-1a keeps stream ids stable across platforms and releases
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(h ^ index.rotate_left(32));
    rng
}

fn gaussian_vector<R: Rng>(rng: &mut R, d: usize) -> Vec<Complex64> {
    (0..d)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect()
}

/// Uniformly distributed point of the sphere.
pub fn uniform_state<R: Rng>(rng: &mut R, d: usize) -> UnitStateVector {
    loop {
        let v = ComplexVector::from_vec_unchecked(gaussian_vector(rng, d));
        if v.norm() > 1e-8 {
            return UnitStateVector::normalize(v).expect("nonzero vector");
        }
    }
}

pub fn uniform_states<R: Rng>(rng: &mut R, n: usize, d: usize) -> Vec<UnitStateVector> {
    (0..n).map(|_| uniform_state(rng, d)).collect()
}

/// `spread · (G − G^H)/2` with independent standard complex Gaussian entries.
pub fn random_frequency<R: Rng>(rng: &mut R, d: usize, spread: f64) -> SkewHermitianMatrix {
    let g = ComplexMatrix::new(d, gaussian_vector(rng, d * d)).expect("finite entries");
    let s = SkewHermitianMatrix::skew_part(&g);
    SkewHermitianMatrix::new(s.as_matrix().scaled(spread)).expect("scaling keeps skew symmetry")
}

/// Moves every state by a Gaussian kick of size about `eps` and renormalizes.
pub fn perturb<R: Rng>(rng: &mut R, states: &[UnitStateVector], eps: f64) -> Vec<UnitStateVector> {
    states
        .iter()
        .map(|z| {
            let kick = gaussian_vector(rng, z.dim());
            let norm = kick.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
            let moved: Vec<Complex64> = z
                .as_slice()
                .iter()
                .zip(&kick)
                .map(|(&a, &k)| a + k * (eps / norm))
                .collect();
            UnitStateVector::normalize(ComplexVector::from_vec_unchecked(moved)).expect("small kick keeps norm positive")
        })
        .collect()
}

/// Hypotheses of the exponential aggregation estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityCheck {
    pub kappa0: f64,
    pub kappa1: f64,
    pub delta: f64,
    pub f0: f64,
    pub verdict: bool,
}

impl AdmissibilityCheck {
    pub fn evaluate(params: CouplingParams, delta: f64, f0: f64) -> Self {
        let CouplingParams { kappa0, kappa1 } = params;
        let verdict = kappa1.abs() < kappa0 / 2.0 && delta > 0.0 && f0 < 1.0 - 2.0 * kappa1.abs() / kappa0 - delta;
        Self {
            kappa0,
            kappa1,
            delta,
            f0,
            verdict,
        }
    }

    /// Strict upper bound `1 − 2|κ₁|/κ₀ − δ` on the initial `F`.
    pub fn threshold(params: CouplingParams, delta: f64) -> f64 {
        1.0 - 2.0 * params.kappa1.abs() / params.kappa0 - delta
    }
}

/// Errors unless some initial data can satisfy the hypotheses.
pub fn check_feasible(params: CouplingParams, delta: f64) -> Result<()> {
    let CouplingParams { kappa0, kappa1 } = params;
    if !(kappa0 > 0.0 && kappa1.abs() < kappa0 / 2.0) {
        return Err(Error::Infeasible(format!(
            "need |kappa1| < kappa0/2 with kappa0 > 0, got kappa0 = {kappa0}, kappa1 = {kappa1}"
        )));
    }
    let room = 1.0 - 2.0 * kappa1.abs() / kappa0;
    if !(delta > 0.0 && delta < room) {
        return Err(Error::Infeasible(format!(
            "delta must lie in (0, {room}), got {delta}"
        )));
    }
    Ok(())
}

/// Draws points near a reference point of the sphere. Accepted points lie
/// strictly within chordal distance `radius/2` of the reference, so any two
/// of them satisfy `|1 − <z_k, z_l>| ≤ ‖z_k − z_l‖ < radius`.
#[derive(Clone, Debug)]
pub struct CapSampler {
    reference: UnitStateVector,
    radius: f64,
}

impl CapSampler {
    pub fn new(reference: UnitStateVector, radius: f64) -> Self {
        Self { reference, radius }
    }

    pub fn reference(&self) -> &UnitStateVector {
        &self.reference
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn shrink(&mut self, factor: f64) {
        self.radius *= factor;
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> UnitStateVector {
        let d = self.reference.dim();
        let scale = self.radius / (4.0 * ((2 * d) as f64).sqrt());
        loop {
            let g = gaussian_vector(rng, d);
            let moved: Vec<Complex64> = self
                .reference
                .as_slice()
                .iter()
                .zip(&g)
                .map(|(&r, &x)| r + x * scale)
                .collect();
            let z = UnitStateVector::normalize(ComplexVector::from_vec_unchecked(moved)).expect("kick is small");
            if z.distance(&self.reference) < self.radius / 2.0 {
                return z;
            }
        }
    }

    pub fn sample_many<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<UnitStateVector> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// States satisfying `F⁰ < 1 − 2|κ₁|/κ₀ − δ`, drawn from a cap around a
/// random reference point whose radius shrinks by 0.8 until the strict bound
/// holds.
pub fn sample_admissible_states<R: Rng>(
    rng: &mut R,
    n: usize,
    d: usize,
    params: CouplingParams,
    delta: f64,
) -> Result<Vec<UnitStateVector>> {
    check_feasible(params, delta)?;
    if n == 0 || d == 0 {
        return Err(Error::Empty("ensemble size and dimension"));
    }
    let threshold = AdmissibilityCheck::threshold(params, delta);
    let mut cap = CapSampler::new(uniform_state(rng, d), threshold);
    for _ in 0..200 {
        let states = cap.sample_many(rng, n);
        if functional_f(&states) < threshold {
            return Ok(states);
        }
        cap.shrink(0.8);
    }
    Err(Error::Infeasible("cap sampler failed to meet the initial bound".into()))
}

/// Admissible ensemble with zero frequencies, deterministic in `seed`.
pub fn sample_admissible(n: usize, d: usize, kappa0: f64, kappa1: f64, delta: f64, seed: u64) -> Result<Ensemble> {
    let params = CouplingParams::new(kappa0, kappa1)?;
    let mut rng = stream(seed, "admissible", 0);
    let states = sample_admissible_states(&mut rng, n, d, params, delta)?;
    Ensemble::with_common_frequency(states, SkewHermitianMatrix::zeros(d), params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let a: f64 = stream(1, "x", 0).random();
        let b: f64 = stream(1, "x", 0).random();
        let c: f64 = stream(1, "y", 0).random();
        let d: f64 = stream(1, "x", 1).random();
        let e: f64 = stream(2, "x", 0).random();
        assert_eq!(a, b);
        assert!(a != c && a != d && a != e);
    }

    #[test]
    fn admissible_samples_pass_check() {
        for seed in 0..100 {
            let ens = sample_admissible(20, 3, 1.0, 0.2, 0.1, seed).unwrap();
            let f0 = functional_f(ens.states());
            assert!(AdmissibilityCheck::evaluate(ens.params(), 0.1, f0).verdict, "seed {seed}: F0 = {f0}");
        }
    }

    #[test]
    fn tight_delta_gives_small_f() {
        let ens = sample_admissible(30, 2, 1.0, 0.0, 0.9, 5).unwrap();
        assert!(functional_f(ens.states()) < 0.1);
    }

    #[test]
    fn single_particle_is_admissible() {
        let ens = sample_admissible(1, 4, 1.0, -0.3, 0.2, 9).unwrap();
        assert_eq!(functional_f(ens.states()), 0.0);
    }

    #[test]
    fn infeasible_parameters_rejected() {
        assert!(matches!(sample_admissible(4, 2, 1.0, 0.0, 1.0, 0), Err(Error::Infeasible(_))));
        assert!(matches!(sample_admissible(4, 2, 1.0, 0.6, 0.1, 0), Err(Error::Infeasible(_))));
        assert!(matches!(sample_admissible(4, 2, 1.0, 0.2, 0.0, 0), Err(Error::Infeasible(_))));
        assert!(matches!(sample_admissible(4, 2, -1.0, 0.0, 0.1, 0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn random_frequency_is_skew_and_scaled() {
        let mut rng = stream(3, "freq", 0);
        let om = random_frequency(&mut rng, 4, 0.0);
        assert!(om.is_zero());
        let om = random_frequency(&mut rng, 4, 2.0);
        assert!(!om.is_zero());
        let sum = om.as_matrix().sub(&om.as_matrix().adjoint().scaled(-1.0));
        assert!(sum.frobenius_norm() < 1e-14);
    }

    #[test]
    fn perturbation_is_small() {
        let mut rng = stream(4, "p", 0);
        let states = uniform_states(&mut rng, 10, 3);
        let moved = perturb(&mut rng, &states, 1e-3);
        for (a, b) in states.iter().zip(&moved) {
            assert!(a.distance(b) <= 1e-3 + 1e-12);
            assert!(a.distance(b) > 0.0);
        }
    }
}
