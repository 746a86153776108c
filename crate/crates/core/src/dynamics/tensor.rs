//! Rank-m Lohe tensor model.
//!
//! Tensors are stored flat in row-major order over the shape `(d_1, …, d_m)`,
//! so a multi-index is a single offset `0..P` with `P = Π d_k`. A coupling
//! pattern `i_* ∈ {0,1}^m` is encoded as a bitmask whose bit `k` is `i_k`;
//! couplings are indexed by that mask. For `m = 1`, pattern `0` is the Lohe
//! sphere gain `κ₀` and pattern `1` the rotational gain `κ₁`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_into, SkewHermitianMatrix, UNIT_TOL};

use super::Ensemble;

pub const MAX_TENSOR_RANK: usize = 3;
pub const MAX_TENSOR_SIZE: usize = 10_000;

/// Bitmask encoding of a coupling pattern `i_*`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CouplingPattern(pub u32);

impl CouplingPattern {
    pub fn from_bits(bits: &[bool]) -> Self {
        Self(bits.iter().enumerate().fold(0, |acc, (k, &b)| acc | ((b as u32) << k)))
    }

    pub fn bit(self, k: usize) -> bool {
        self.0 >> k & 1 == 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEnsemble {
    shape: Vec<usize>,
    tensors: Vec<Vec<Complex64>>,
    frequencies: Vec<SkewHermitianMatrix>,
    couplings: Vec<f64>,
}

impl TensorEnsemble {
    /// `couplings[mask]` is `κ_{i_*}` for the pattern encoded by `mask`; its
    /// length must be `2^m`.
    pub fn new(
        shape: Vec<usize>,
        tensors: Vec<Vec<Complex64>>,
        frequencies: Vec<SkewHermitianMatrix>,
        couplings: Vec<f64>,
    ) -> Result<Self> {
        let m = shape.len();
        if m == 0 || m > MAX_TENSOR_RANK {
            return Err(Error::InvalidArgument(format!(
                "tensor rank must be in 1..={MAX_TENSOR_RANK}, found {m}"
            )));
        }
        if shape.contains(&0) {
            return Err(Error::Empty("tensor mode"));
        }
        let size = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).unwrap_or(usize::MAX);
        if size > MAX_TENSOR_SIZE {
            return Err(Error::TooLarge {
                what: "tensor entries",
                size,
                limit: MAX_TENSOR_SIZE,
            });
        }
        if tensors.is_empty() {
            return Err(Error::Empty("tensor ensemble"));
        }
        if frequencies.len() != tensors.len() {
            return Err(Error::DimensionMismatch {
                expected: tensors.len(),
                found: frequencies.len(),
            });
        }
        if couplings.len() != 1 << m {
            return Err(Error::DimensionMismatch {
                expected: 1 << m,
                found: couplings.len(),
            });
        }
        if couplings.iter().any(|k| !k.is_finite()) {
            return Err(Error::NonFinite("tensor couplings"));
        }
        for t in &tensors {
            if t.len() != size {
                return Err(Error::DimensionMismatch { expected: size, found: t.len() });
            }
            if t.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(Error::NonFinite("tensor"));
            }
            let norm = t.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::NotUnit {
                    deviation: (norm - 1.0).abs(),
                });
            }
        }
        for a in &frequencies {
            if a.dim() != size {
                return Err(Error::DimensionMismatch { expected: size, found: a.dim() });
            }
        }
        Ok(Self {
            shape,
            tensors,
            frequencies,
            couplings,
        })
    }

    /// Rank-1 view of an LHS ensemble with couplings `[κ₀, κ₁]`.
    pub fn from_ensemble(ens: &Ensemble) -> Result<Self> {
        let p = ens.params();
        Self::new(
            vec![ens.dim()],
            ens.states().iter().map(|s| s.as_slice().to_vec()).collect(),
            ens.frequencies().to_vec(),
            vec![p.kappa0, p.kappa1],
        )
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn size(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensors(&self) -> &[Vec<Complex64>] {
        &self.tensors
    }

    pub fn frequencies(&self) -> &[SkewHermitianMatrix] {
        &self.frequencies
    }

    pub fn coupling(&self, pattern: CouplingPattern) -> f64 {
        self.couplings[pattern.0 as usize]
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    fn unravel(&self, mut offset: usize, out: &mut [usize]) {
        for k in (0..self.shape.len()).rev() {
            out[k] = offset % self.shape[k];
            offset /= self.shape[k];
        }
    }
}

/// Result of [`lt_rhs`]. Negative couplings are evaluated as given and their
/// patterns listed, since the tensor model is stated for nonnegative gains.
#[derive(Clone, Debug, PartialEq)]
pub struct LtDerivative {
    pub derivatives: Vec<Vec<Complex64>>,
    pub negative_couplings: Vec<CouplingPattern>,
}

/// Component-wise evaluation of the tensor model with `T_c = (1/N) Σ T_k`.
pub fn lt_rhs(tens: &TensorEnsemble) -> LtDerivative {
    let m = tens.rank();
    let size = tens.size();
    let n = tens.len();

    let mut tc = vec![Complex64::new(0.0, 0.0); size];
    for t in &tens.tensors {
        for (c, &x) in tc.iter_mut().zip(t) {
            *c += x;
        }
    }
    for c in &mut tc {
        *c /= n as f64;
    }

    // strides[k] for the row-major offset of mode k
    let mut strides = vec![1usize; m];
    for k in (0..m.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * tens.shape[k + 1];
    }
    let mut multi: Vec<Vec<usize>> = vec![vec![0; m]; size];
    for (a, idx) in multi.iter_mut().enumerate() {
        tens.unravel(a, idx);
    }
    // mix(a, b, mask): mode k from b when bit k is set, otherwise from a
    let mix = |a: usize, b: usize, mask: usize| -> usize {
        (0..m)
            .map(|k| {
                let src = if mask >> k & 1 == 1 { &multi[b] } else { &multi[a] };
                src[k] * strides[k]
            })
            .sum()
    };

    let active: Vec<(usize, f64)> = tens
        .couplings
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, k)| k != 0.0)
        .collect();

    let derivatives = tens
        .tensors
        .iter()
        .zip(&tens.frequencies)
        .map(|(tj, a)| {
            let mut out = vec![Complex64::new(0.0, 0.0); size];
            apply_into(a.as_matrix().as_slice(), size, tj, &mut out);
            for &(mask, kappa) in &active {
                for (a0, o) in out.iter_mut().enumerate() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for a1 in 0..size {
                        let fwd = mix(a0, a1, mask);
                        let back = mix(a1, a0, mask);
                        acc += tc[fwd] * tj[a1].conj() * tj[back] - tj[fwd] * tc[a1].conj() * tj[back];
                    }
                    *o += acc * kappa;
                }
            }
            out
        })
        .collect();

    let negative_couplings = tens
        .couplings
        .iter()
        .enumerate()
        .filter(|(_, &k)| k < 0.0)
        .map(|(mask, _)| CouplingPattern(mask as u32))
        .collect();

    LtDerivative {
        derivatives,
        negative_couplings,
    }
}
