//! Right-hand sides of the particle models.
//!
//! The LHS vector field for particle `j` is
//!
//! ```text
//! ż_j = Ω_j z_j + κ₀(<z_j,z_j> z_c − <z_c,z_j> z_j) + κ₁(<z_j,z_c> − <z_c,z_j>) z_j
//! ```
//!
//! with `z_c` the arithmetic mean of the states. Because the interaction is
//! linear in the other particles, the all-to-all sum collapses onto the
//! centroid and one evaluation costs `O(N d)` plus `O(N d²)` for the free flow.
//! [`lhs_rhs_pairwise`] keeps the explicit double sum as a reference.

mod tensor;

pub use tensor::{lt_rhs, CouplingPattern, LtDerivative, TensorEnsemble, MAX_TENSOR_RANK, MAX_TENSOR_SIZE};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_into, inner_slice, ComplexVector, SkewHermitianMatrix, UnitStateVector};
use crate::transport::EmpiricalMeasure;

/// Tolerance (Frobenius) used to decide that all frequencies coincide.
pub const HOMOGENEOUS_TOL: f64 = 1e-12;

/// Imaginary parts below this are treated as zero by the real-sphere model.
pub const REAL_TOL: f64 = 1e-14;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Lohe sphere gain `κ₀` and rotational gain `κ₁`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub kappa0: f64,
    pub kappa1: f64,
}

impl CouplingParams {
    pub fn new(kappa0: f64, kappa1: f64) -> Result<Self> {
        if !kappa0.is_finite() || !kappa1.is_finite() {
            return Err(Error::NonFinite("coupling parameters"));
        }
        Ok(Self { kappa0, kappa1 })
    }
}

/// Phase-space configuration: states, natural frequencies and couplings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    states: Vec<UnitStateVector>,
    frequencies: Vec<SkewHermitianMatrix>,
    params: CouplingParams,
    homogeneous: bool,
}

impl Ensemble {
    pub fn new(
        states: Vec<UnitStateVector>,
        frequencies: Vec<SkewHermitianMatrix>,
        params: CouplingParams,
    ) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Empty("ensemble"));
        }
        if states.len() != frequencies.len() {
            return Err(Error::DimensionMismatch {
                expected: states.len(),
                found: frequencies.len(),
            });
        }
        let d = states[0].dim();
        for s in &states {
            if s.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: s.dim() });
            }
        }
        for f in &frequencies {
            if f.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, found: f.dim() });
            }
        }
        let homogeneous = frequencies
            .iter()
            .all(|f| f.frobenius_distance(&frequencies[0]) <= HOMOGENEOUS_TOL);
        Ok(Self {
            states,
            frequencies,
            params,
            homogeneous,
        })
    }

    /// Ensemble in which every particle carries the same `Ω`.
    pub fn with_common_frequency(
        states: Vec<UnitStateVector>,
        omega: SkewHermitianMatrix,
        params: CouplingParams,
    ) -> Result<Self> {
        let n = states.len();
        Self::new(states, vec![omega; n], params)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn states(&self) -> &[UnitStateVector] {
        &self.states
    }

    pub fn frequencies(&self) -> &[SkewHermitianMatrix] {
        &self.frequencies
    }

    pub fn params(&self) -> CouplingParams {
        self.params
    }

    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }

    /// The shared frequency of a homogeneous ensemble.
    pub fn common_frequency(&self) -> Option<&SkewHermitianMatrix> {
        self.homogeneous.then(|| &self.frequencies[0])
    }

    /// Same frequencies and couplings, new states.
    pub fn with_states(&self, states: Vec<UnitStateVector>) -> Result<Self> {
        if states.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: states.len(),
            });
        }
        if let Some(s) = states.iter().find(|s| s.dim() != self.dim()) {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: s.dim(),
            });
        }
        Ok(Self {
            states,
            frequencies: self.frequencies.clone(),
            params: self.params,
            homogeneous: self.homogeneous,
        })
    }

    pub fn with_params(&self, params: CouplingParams) -> Self {
        Self { params, ..self.clone() }
    }

    pub fn with_frequencies(&self, frequencies: Vec<SkewHermitianMatrix>) -> Result<Self> {
        Self::new(self.states.clone(), frequencies, self.params)
    }

    /// States flattened particle-major into one buffer of length `N·d`.
    pub fn flat_states(&self) -> Vec<Complex64> {
        self.states.iter().flat_map(|s| s.as_slice().iter().copied()).collect()
    }

    pub(crate) fn from_parts_unchecked(
        states: Vec<UnitStateVector>,
        frequencies: Vec<SkewHermitianMatrix>,
        params: CouplingParams,
        homogeneous: bool,
    ) -> Self {
        Self {
            states,
            frequencies,
            params,
            homogeneous,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Frequencies {
    Common(SkewHermitianMatrix),
    PerParticle(Vec<SkewHermitianMatrix>),
}

impl Frequencies {
    pub(crate) fn of(ens: &Ensemble) -> Self {
        match ens.common_frequency() {
            Some(f) => Self::Common(f.clone()),
            None => Self::PerParticle(ens.frequencies.clone()),
        }
    }

    fn get(&self, j: usize) -> &SkewHermitianMatrix {
        match self {
            Self::Common(f) => f,
            Self::PerParticle(v) => &v[j],
        }
    }

    fn all_zero(&self) -> bool {
        match self {
            Self::Common(f) => f.is_zero(),
            Self::PerParticle(v) => v.iter().all(|f| f.is_zero()),
        }
    }
}

/// Which right-hand side a [`ParticleField`] evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    /// LHS model through the centroid, `O(N)`.
    Lhs,
    /// LHS model as the explicit `(1/N) Σ_k` double sum, `O(N²)`.
    LhsPairwise,
    /// Real sphere model: LHS without the rotational term.
    Ls,
}

/// A vector field on flat particle-major state buffers, usable on off-sphere
/// intermediate stages of a Runge-Kutta step.
#[derive(Clone, Debug)]
pub struct ParticleField {
    model: Model,
    freqs: Frequencies,
    free_flow: bool,
    params: CouplingParams,
    n: usize,
    d: usize,
}

impl ParticleField {
    pub fn new(ens: &Ensemble, model: Model) -> Result<Self> {
        if model == Model::Ls {
            check_real(ens)?;
        }
        let freqs = Frequencies::of(ens);
        Ok(Self {
            model,
            free_flow: !freqs.all_zero(),
            freqs,
            params: ens.params(),
            n: ens.len(),
            d: ens.dim(),
        })
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Writes the derivative of every particle into `out` (both of length `N·d`).
    pub fn eval(&self, states: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(states.len(), self.n * self.d);
        debug_assert_eq!(out.len(), self.n * self.d);
        match self.model {
            Model::Lhs => {
                let zc = centroid_flat(states, self.d);
                for (j, (z, o)) in states.chunks_exact(self.d).zip(out.chunks_exact_mut(self.d)).enumerate() {
                    self.particle(j, z, &zc, o);
                }
            }
            Model::Ls => {
                let xc = centroid_flat(states, self.d);
                let k0 = self.params.kappa0;
                for (j, (x, o)) in states.chunks_exact(self.d).zip(out.chunks_exact_mut(self.d)).enumerate() {
                    self.free(j, x, o);
                    let xx = inner_slice(x, x);
                    let cx = inner_slice(&xc, x);
                    for ((oi, &xi), &ci) in o.iter_mut().zip(x).zip(&xc) {
                        *oi += (xx * ci - cx * xi) * k0;
                    }
                }
            }
            Model::LhsPairwise => self.eval_pairwise(states, out),
        }
    }

    /// Particle-parallel evaluation after a sequential centroid reduction.
    pub fn eval_parallel(&self, states: &[Complex64], out: &mut [Complex64]) {
        if self.model != Model::Lhs {
            return self.eval(states, out);
        }
        let zc = centroid_flat(states, self.d);
        out.par_chunks_mut(self.d)
            .zip(states.par_chunks(self.d))
            .enumerate()
            .for_each(|(j, (o, z))| self.particle(j, z, &zc, o));
    }

    #[inline]
    fn free(&self, j: usize, z: &[Complex64], out: &mut [Complex64]) {
        if self.free_flow {
            let om = self.freqs.get(j).as_matrix();
            apply_into(om.as_slice(), self.d, z, out);
        } else {
            out.fill(ZERO);
        }
    }

    #[inline]
    fn particle(&self, j: usize, z: &[Complex64], zc: &[Complex64], out: &mut [Complex64]) {
        self.free(j, z, out);
        let CouplingParams { kappa0, kappa1 } = self.params;
        let zz = inner_slice(z, z);
        let cz = inner_slice(zc, z);
        let zc_ = cz.conj();
        let along = -cz * kappa0 + (zc_ - cz) * kappa1;
        let toward = zz * kappa0;
        for ((o, &zi), &ci) in out.iter_mut().zip(z).zip(zc) {
            *o += toward * ci + along * zi;
        }
    }

    fn eval_pairwise(&self, states: &[Complex64], out: &mut [Complex64]) {
        let d = self.d;
        let inv_n = 1.0 / self.n as f64;
        let CouplingParams { kappa0, kappa1 } = self.params;
        for (j, o) in out.chunks_exact_mut(d).enumerate() {
            let zj = &states[j * d..(j + 1) * d];
            self.free(j, zj, o);
            let jj = inner_slice(zj, zj);
            let mut acc = vec![ZERO; d];
            for zk in states.chunks_exact(d) {
                let kj = inner_slice(zk, zj);
                let jk = inner_slice(zj, zk);
                for i in 0..d {
                    acc[i] += (jj * zk[i] - kj * zj[i]) * kappa0 + (jk - kj) * zj[i] * kappa1;
                }
            }
            for (oi, a) in o.iter_mut().zip(acc) {
                *oi += a * inv_n;
            }
        }
    }
}

pub(crate) fn centroid_flat(states: &[Complex64], d: usize) -> Vec<Complex64> {
    let mut zc = vec![ZERO; d];
    let mut count = 0usize;
    for z in states.chunks_exact(d) {
        for (c, &zi) in zc.iter_mut().zip(z) {
            *c += zi;
        }
        count += 1;
    }
    let inv = 1.0 / count as f64;
    for c in &mut zc {
        *c *= inv;
    }
    zc
}

fn unflatten(flat: Vec<Complex64>, d: usize) -> Vec<ComplexVector> {
    flat.chunks_exact(d)
        .map(|c| ComplexVector::from_vec_unchecked(c.to_vec()))
        .collect()
}

fn eval_model(ens: &Ensemble, model: Model) -> Result<Vec<ComplexVector>> {
    let field = ParticleField::new(ens, model)?;
    let states = ens.flat_states();
    let mut out = vec![ZERO; states.len()];
    field.eval(&states, &mut out);
    Ok(unflatten(out, ens.dim()))
}

/// LHS derivative of every particle, evaluated through the centroid.
pub fn lhs_rhs(ens: &Ensemble) -> Vec<ComplexVector> {
    eval_model(ens, Model::Lhs).expect("LHS field accepts every valid ensemble")
}

/// As [`lhs_rhs`], parallel over particles.
pub fn lhs_rhs_parallel(ens: &Ensemble) -> Vec<ComplexVector> {
    let field = ParticleField::new(ens, Model::Lhs).expect("LHS field accepts every valid ensemble");
    let states = ens.flat_states();
    let mut out = vec![ZERO; states.len()];
    field.eval_parallel(&states, &mut out);
    unflatten(out, ens.dim())
}

/// LHS derivative as the explicit `O(N²)` pair sum.
pub fn lhs_rhs_pairwise(ens: &Ensemble) -> Vec<ComplexVector> {
    eval_model(ens, Model::LhsPairwise).expect("pairwise field accepts every valid ensemble")
}

/// Real sphere model `ẋ_j = Ω_j x_j + κ₀(<x_j,x_j> x_c − <x_c,x_j> x_j)`.
///
/// Rejects ensembles whose states or frequencies have imaginary parts above
/// [`REAL_TOL`].
pub fn ls_rhs(ens: &Ensemble) -> Result<Vec<ComplexVector>> {
    eval_model(ens, Model::Ls)
}

fn check_real(ens: &Ensemble) -> Result<()> {
    let max_state = ens.states().iter().map(|s| s.max_abs_imag()).fold(0.0, f64::max);
    let max_freq = ens
        .frequencies()
        .iter()
        .flat_map(|f| f.as_matrix().as_slice().iter().map(|c| c.im.abs()))
        .fold(0.0, f64::max);
    let max_imag = max_state.max(max_freq);
    if max_imag > REAL_TOL {
        return Err(Error::NotReal { max_imag });
    }
    Ok(())
}

/// Velocity field of the kinetic equation driven by an atomic measure:
/// `Ωz + κ₀(J − <J,z> z) + κ₁(<z,J> − <J,z>) z` with `J` the first moment.
pub fn mean_field_velocity(
    mu: &EmpiricalMeasure,
    z: &UnitStateVector,
    omega: &SkewHermitianMatrix,
    params: CouplingParams,
) -> Result<ComplexVector> {
    if z.dim() != mu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: z.dim(),
        });
    }
    if omega.dim() != z.dim() {
        return Err(Error::DimensionMismatch {
            expected: z.dim(),
            found: omega.dim(),
        });
    }
    let j = mu.first_moment();
    let jz = inner_slice(j.as_slice(), z.as_slice());
    let zj = jz.conj();
    let coeff = -jz * params.kappa0 + (zj - jz) * params.kappa1;
    let coupling = &j.scale_real(params.kappa0) + &z.scale(coeff);
    Ok(&omega.apply(z) + &coupling)
}
