//! Complex-vector arithmetic on the Hermitian sphere `HS^{d-1} ⊂ C^d`.
//!
//! Two pairings are used throughout the crate:
//!
//! * [`hermitian_inner`]: `<w, z> = Σ conj(w_i) z_i`, complex valued;
//! * [`real_dot`]: `w · z = ι(w) · ι(z)`, the Euclidean dot product of the
//!   interleaved real embeddings, real valued.
//!
//! They are related by `<z, w> = z·w − i (z·(i w))`.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `| |z| - 1 |` when a unit state is constructed.
pub const UNIT_TOL: f64 = 1e-12;

/// Relative tolerance on `|A + A^H|_F` for skew-Hermitian matrices.
pub const SKEW_TOL: f64 = 1e-12;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComplexVector(Vec<Complex64>);

impl ComplexVector {
    pub fn new(entries: Vec<Complex64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("complex vector"));
        }
        if entries.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("complex vector"));
        }
        Ok(Self(entries))
    }

    pub(crate) fn from_vec_unchecked(entries: Vec<Complex64>) -> Self {
        Self(entries)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); dim])
    }

    /// `k`-th standard basis vector (0-based).
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[k] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self(self.0.iter().map(|&c| c * factor).collect())
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|&c| c * factor).collect())
    }

    /// Multiplication by the imaginary unit, `z ↦ i z`.
    pub fn mul_i(&self) -> Self {
        Self(self.0.iter().map(|&c| Complex64::new(-c.im, c.re)).collect())
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.0.iter().fold(0.0, |m, c| m.max(c.im.abs()))
    }

    /// `Σ |a_i - b_i|` style distance in the ambient norm.
    pub fn distance(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn distance_sqr(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for ComplexVector {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.0[i]
    }
}

impl Add for &ComplexVector {
    type Output = ComplexVector;
    fn add(self, rhs: &ComplexVector) -> ComplexVector {
        ComplexVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &ComplexVector {
    type Output = ComplexVector;
    fn sub(self, rhs: &ComplexVector) -> ComplexVector {
        ComplexVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &ComplexVector {
    type Output = ComplexVector;
    fn neg(self) -> ComplexVector {
        ComplexVector(self.0.iter().map(|a| -a).collect())
    }
}

impl Mul<Complex64> for &ComplexVector {
    type Output = ComplexVector;
    fn mul(self, rhs: Complex64) -> ComplexVector {
        self.scale(rhs)
    }
}

impl Mul<f64> for &ComplexVector {
    type Output = ComplexVector;
    fn mul(self, rhs: f64) -> ComplexVector {
        self.scale_real(rhs)
    }
}

/// A point of the Hermitian sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexVector", into = "ComplexVector")]
pub struct UnitStateVector(ComplexVector);

impl UnitStateVector {
    pub fn new(v: ComplexVector) -> Result<Self> {
        Self::with_tolerance(v, UNIT_TOL)
    }

    pub fn with_tolerance(v: ComplexVector, tol: f64) -> Result<Self> {
        let deviation = (v.norm() - 1.0).abs();
        if deviation > tol {
            return Err(Error::NotUnit { deviation });
        }
        Ok(Self(v))
    }

    /// Rescales a nonzero vector onto the sphere.
    pub fn normalize(v: ComplexVector) -> Result<Self> {
        let n = v.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "cannot normalize vector of norm {n}"
            )));
        }
        Ok(Self(v.scale_real(1.0 / n)))
    }

    pub fn basis(dim: usize, k: usize) -> Self {
        Self(ComplexVector::basis(dim, k))
    }

    pub(crate) fn new_unchecked(v: ComplexVector) -> Self {
        Self(v)
    }

    pub fn as_vector(&self) -> &ComplexVector {
        &self.0
    }

    pub fn into_vector(self) -> ComplexVector {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        self.0.as_slice()
    }
}

impl std::ops::Deref for UnitStateVector {
    type Target = ComplexVector;
    fn deref(&self) -> &ComplexVector {
        &self.0
    }
}

impl TryFrom<ComplexVector> for UnitStateVector {
    type Error = Error;
    fn try_from(v: ComplexVector) -> Result<Self> {
        Self::new(v)
    }
}

impl From<UnitStateVector> for ComplexVector {
    fn from(u: UnitStateVector) -> ComplexVector {
        u.0
    }
}

/// Dense square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: data.len(),
            });
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("complex matrix"));
        }
        Ok(Self { dim, data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for r in 0..d {
            for c in 0..d {
                out.data[c * d + r] = self.data[r * d + c].conj();
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let d = self.dim;
        let mut out = Self::zeros(d);
        for r in 0..d {
            for k in 0..d {
                let a = self.data[r * d + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..d {
                    out.data[r * d + c] += a * other.data[k * d + c];
                }
            }
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&c| c * factor).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        (0..self.dim)
            .map(|c| (0..self.dim).map(|r| self.data[r * self.dim + c].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn apply(&self, v: &ComplexVector) -> ComplexVector {
        debug_assert_eq!(v.dim(), self.dim);
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
        apply_into(&self.data, self.dim, v.as_slice(), &mut out);
        ComplexVector(out)
    }

    /// `|U^H U - I|_F`.
    pub fn unitarity_defect(&self) -> f64 {
        self.adjoint()
            .matmul(self)
            .sub(&Self::identity(self.dim))
            .frobenius_norm()
    }
}

/// `out = M v` for a row-major `dim × dim` matrix.
#[inline]
pub(crate) fn apply_into(m: &[Complex64], dim: usize, v: &[Complex64], out: &mut [Complex64]) {
    for (r, o) in out.iter_mut().enumerate().take(dim) {
        let row = &m[r * dim..(r + 1) * dim];
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

/// Natural frequency matrix `Ω` with `Ω^H = −Ω`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexMatrix", into = "ComplexMatrix")]
pub struct SkewHermitianMatrix(ComplexMatrix);

impl SkewHermitianMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        let residual = skew_residual(&m);
        if residual > SKEW_TOL * m.frobenius_norm().max(1.0) {
            return Err(Error::NotSkewHermitian { residual });
        }
        Ok(Self(m))
    }

    pub fn from_entries(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        Self::new(ComplexMatrix::new(dim, data)?)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(ComplexMatrix::zeros(dim))
    }

    /// `diag(i λ_1, …, i λ_d)`.
    pub fn from_imag_diagonal(lambdas: &[f64]) -> Self {
        let d = lambdas.len();
        let mut m = ComplexMatrix::zeros(d);
        for (k, &l) in lambdas.iter().enumerate() {
            m.data[k * d + k] = Complex64::new(0.0, l);
        }
        Self(m)
    }

    /// Projects an arbitrary square matrix onto its skew-Hermitian part `(A − A^H)/2`.
    pub fn skew_part(m: &ComplexMatrix) -> Self {
        Self(m.sub(&m.adjoint()).scaled(0.5))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn apply(&self, v: &ComplexVector) -> ComplexVector {
        self.0.apply(v)
    }

    pub fn is_zero(&self) -> bool {
        self.0.data.iter().all(|c| *c == Complex64::new(0.0, 0.0))
    }

    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        self.0.sub(&other.0).frobenius_norm()
    }

    pub fn is_real(&self) -> bool {
        self.0.data.iter().all(|c| c.im == 0.0)
    }
}

impl TryFrom<ComplexMatrix> for SkewHermitianMatrix {
    type Error = Error;
    fn try_from(m: ComplexMatrix) -> Result<Self> {
        Self::new(m)
    }
}

impl From<SkewHermitianMatrix> for ComplexMatrix {
    fn from(s: SkewHermitianMatrix) -> ComplexMatrix {
        s.0
    }
}

fn skew_residual(m: &ComplexMatrix) -> f64 {
    let d = m.dim;
    let mut acc = 0.0;
    for r in 0..d {
        for c in 0..d {
            acc += (m.data[r * d + c] + m.data[c * d + r].conj()).norm_sqr();
        }
    }
    acc.sqrt()
}

/// Interleaved real coordinates `(Re z¹, Im z¹, …, Re z^d, Im z^d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealEmbedding(Vec<f64>);

impl RealEmbedding {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() % 2 != 0 {
            return Err(Error::OddLength(coords.len()));
        }
        Ok(Self(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

pub fn embed(z: &ComplexVector) -> RealEmbedding {
    RealEmbedding(z.as_slice().iter().flat_map(|c| [c.re, c.im]).collect())
}

pub fn unembed(x: &RealEmbedding) -> ComplexVector {
    ComplexVector(
        x.0.chunks_exact(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect(),
    )
}

/// `<w, z> = Σ conj(w_i) z_i`.
pub fn hermitian_inner(w: &ComplexVector, z: &ComplexVector) -> Result<Complex64> {
    w.check_same_dim(z)?;
    Ok(inner_slice(w.as_slice(), z.as_slice()))
}

/// `w · z = Σ (Re w_i Re z_i + Im w_i Im z_i)`.
pub fn real_dot(w: &ComplexVector, z: &ComplexVector) -> Result<f64> {
    w.check_same_dim(z)?;
    Ok(real_dot_slice(w.as_slice(), z.as_slice()))
}

#[inline]
pub(crate) fn inner_slice(w: &[Complex64], z: &[Complex64]) -> Complex64 {
    w.iter().zip(z).map(|(a, b)| a.conj() * b).sum()
}

#[inline]
pub(crate) fn real_dot_slice(w: &[Complex64], z: &[Complex64]) -> f64 {
    w.iter().zip(z).map(|(a, b)| a.re * b.re + a.im * b.im).sum()
}

/// Tangent projection `P_{z⊥} v = v − (z·v) z`.
pub fn project_tangent(z: &UnitStateVector, v: &ComplexVector) -> Result<ComplexVector> {
    let s = real_dot(z, v)?;
    Ok(v - &z.scale_real(s))
}

/// Projection onto the phase direction, `P_{iz} v = ((iz)·v) iz`.
pub fn project_phase(z: &UnitStateVector, v: &ComplexVector) -> Result<ComplexVector> {
    let iz = z.mul_i();
    let s = real_dot(&iz, v)?;
    Ok(iz.scale_real(s))
}

/// `Q_z(v) = κ₀(v − <v,z> z) + κ₁(<z,v> − <v,z>) z`.
pub fn q_map(z: &UnitStateVector, v: &ComplexVector, kappa0: f64, kappa1: f64) -> Result<ComplexVector> {
    let vz = hermitian_inner(v, z)?;
    let zv = vz.conj();
    let coeff = -vz * kappa0 + (zv - vz) * kappa1;
    Ok(&v.scale_real(kappa0) + &z.scale(coeff))
}

/// `exp(t Ω)` by scaling and squaring of a truncated Taylor series.
///
/// The scaled argument has 1-norm at most 1/2, where 18 Taylor terms are
/// below double-precision roundoff.
pub fn matrix_exp(omega: &SkewHermitianMatrix, t: f64) -> ComplexMatrix {
    let a = omega.as_matrix().scaled(t);
    let d = a.dim();
    let norm = a.one_norm();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let b = a.scaled(0.5f64.powi(squarings as i32));

    let mut result = ComplexMatrix::identity(d);
    let mut term = ComplexMatrix::identity(d);
    for k in 1..=30 {
        term = term.matmul(&b).scaled(1.0 / k as f64);
        for (r, t) in result.data.iter_mut().zip(&term.data) {
            *r += t;
        }
        if term.frobenius_norm() <= 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.matmul(&result);
    }
    result
}
