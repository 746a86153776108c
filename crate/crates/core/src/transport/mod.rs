//! Exact Wasserstein distances between atomic measures on the Hermitian
//! sphere, with the chordal ground distance `‖z − w‖`.

mod assignment;
mod flow;

use serde::{Deserialize, Serialize};

use crate::dynamics::Ensemble;
use crate::error::{Error, Result};
use crate::geometry::{ComplexVector, SkewHermitianMatrix, UnitStateVector};

/// Tolerance on the total mass of a probability measure.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Largest support accepted by [`wasserstein_general`].
pub const MAX_SUPPORT: usize = 512;

/// Largest support accepted by [`wasserstein_bruteforce`].
pub const MAX_BRUTEFORCE: usize = 8;

/// Weighted point cloud on the sphere, optionally carrying one frequency per
/// atom for measures on states × frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    atoms: Vec<UnitStateVector>,
    weights: Vec<f64>,
    frequencies: Option<Vec<SkewHermitianMatrix>>,
    uniform: bool,
}

impl EmpiricalMeasure {
    pub fn uniform(atoms: Vec<UnitStateVector>) -> Result<Self> {
        let n = atoms.len();
        if n == 0 {
            return Err(Error::Empty("measure support"));
        }
        check_dims(&atoms)?;
        Ok(Self {
            atoms,
            weights: vec![1.0 / n as f64; n],
            frequencies: None,
            uniform: true,
        })
    }

    pub fn weighted(atoms: Vec<UnitStateVector>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty("measure support"));
        }
        if atoms.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: atoms.len(),
                found: weights.len(),
            });
        }
        check_dims(&atoms)?;
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidWeights(format!("weight {w} is not a nonnegative number")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {total}, not 1")));
        }
        let uniform = weights.iter().all(|&w| w == weights[0]);
        Ok(Self {
            atoms,
            weights,
            frequencies: None,
            uniform,
        })
    }

    /// Uniform measure over the states of an ensemble.
    pub fn from_ensemble(ens: &Ensemble) -> Self {
        Self::uniform(ens.states().to_vec()).expect("ensembles are nonempty and dimension-consistent")
    }

    /// Uniform measure over states paired with their frequencies.
    pub fn from_ensemble_with_frequencies(ens: &Ensemble) -> Self {
        Self::from_ensemble(ens)
            .with_frequencies(ens.frequencies().to_vec())
            .expect("ensemble frequencies match its states")
    }

    pub fn with_frequencies(mut self, frequencies: Vec<SkewHermitianMatrix>) -> Result<Self> {
        if frequencies.len() != self.atoms.len() {
            return Err(Error::DimensionMismatch {
                expected: self.atoms.len(),
                found: frequencies.len(),
            });
        }
        if let Some(f) = frequencies.iter().find(|f| f.dim() != self.dim()) {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: f.dim(),
            });
        }
        self.frequencies = Some(frequencies);
        Ok(self)
    }

    pub fn atoms(&self) -> &[UnitStateVector] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn frequencies(&self) -> Option<&[SkewHermitianMatrix]> {
        self.frequencies.as_deref()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].dim()
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// `J = Σ w_j z_j`.
    pub fn first_moment(&self) -> ComplexVector {
        let mut acc = vec![num_complex::Complex64::new(0.0, 0.0); self.dim()];
        for (z, &w) in self.atoms.iter().zip(&self.weights) {
            for (a, &x) in acc.iter_mut().zip(z.as_slice()) {
                *a += x * w;
            }
        }
        ComplexVector::from_vec_unchecked(acc)
    }
}

fn check_dims(atoms: &[UnitStateVector]) -> Result<()> {
    let d = atoms[0].dim();
    match atoms.iter().find(|a| a.dim() != d) {
        Some(a) => Err(Error::DimensionMismatch { expected: d, found: a.dim() }),
        None => Ok(()),
    }
}

/// Dense coupling between two supports, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    mass: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub row: usize,
    pub col: usize,
    pub mass: f64,
}

impl TransportPlan {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.cols + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.mass.chunks_exact(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j)).sum())
            .collect()
    }

    /// Nonzero cells in row-major order.
    pub fn entries(&self) -> Vec<PlanEntry> {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(k, &mass)| PlanEntry {
                row: k / self.cols,
                col: k % self.cols,
                mass,
            })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "rows": self.rows,
            "cols": self.cols,
            "entries": self.entries(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportResult {
    pub distance: f64,
    pub plan: TransportPlan,
    /// True when atoms were compared with [`xi_distance`], i.e. both
    /// measures carry frequencies.
    pub xi_ground_cost: bool,
}

/// `(‖z − z̃‖² + ‖Ω − Ω̃‖_F²)^{1/2}`.
pub fn xi_distance(
    a: (&UnitStateVector, &SkewHermitianMatrix),
    b: (&UnitStateVector, &SkewHermitianMatrix),
) -> Result<f64> {
    if a.0.dim() != b.0.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.0.dim(),
            found: b.0.dim(),
        });
    }
    if a.1.dim() != b.1.dim() || a.1.dim() != a.0.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.0.dim(),
            found: b.1.dim(),
        });
    }
    let fro = a.1.frobenius_distance(b.1);
    Ok((a.0.distance_sqr(b.0) + fro * fro).sqrt())
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("p must lie in [1, ∞), found {p}")))
    }
}

/// Row-major matrix of `‖x_i − y_j‖^p` (squared norms taken directly for
/// `p = 2`). Returns whether the frequency-aware ground cost was used.
fn cost_matrix(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<(Vec<f64>, bool)> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    let xi = match (mu.frequencies(), nu.frequencies()) {
        (Some(fa), Some(fb)) => Some((fa, fb)),
        _ => None,
    };
    let mut cost = Vec::with_capacity(mu.len() * nu.len());
    for (i, x) in mu.atoms().iter().enumerate() {
        for (j, y) in nu.atoms().iter().enumerate() {
            let sq = match xi {
                Some((fa, fb)) => {
                    let fro = fa[i].frobenius_distance(&fb[j]);
                    x.distance_sqr(y) + fro * fro
                }
                None => x.distance_sqr(y),
            };
            cost.push(if p == 2.0 { sq } else { sq.sqrt().powf(p) });
        }
    }
    Ok((cost, xi.is_some()))
}

fn distance_from_total(total: f64, p: f64) -> f64 {
    total.max(0.0).powf(1.0 / p)
}

/// `W_p` between two uniform measures of equal size by exact min-cost
/// assignment. Unequal sizes are solved by [`wasserstein_general`].
pub fn wasserstein_uniform(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<f64> {
    check_p(p)?;
    if !mu.is_uniform() || !nu.is_uniform() {
        return Err(Error::InvalidWeights("uniform measures required".into()));
    }
    if mu.len() != nu.len() {
        return Ok(wasserstein_general(mu, nu, p)?.distance);
    }
    let n = mu.len();
    let (cost, _) = cost_matrix(mu, nu, p)?;
    let col = assignment::min_cost_assignment(&cost, n);
    let total: f64 = (0..n).map(|i| cost[i * n + col[i]]).sum();
    Ok(distance_from_total(total / n as f64, p))
}

/// Optimal assignment for two uniform measures of equal size, as a plan.
pub fn optimal_matching(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<Vec<usize>> {
    check_p(p)?;
    if mu.len() != nu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            found: nu.len(),
        });
    }
    let (cost, _) = cost_matrix(mu, nu, p)?;
    Ok(assignment::min_cost_assignment(&cost, mu.len()))
}

/// `W_p` between arbitrary atomic measures by solving the transport linear
/// program exactly; supports are limited to [`MAX_SUPPORT`] atoms.
pub fn wasserstein_general(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<TransportResult> {
    check_p(p)?;
    for m in [mu, nu] {
        if m.len() > MAX_SUPPORT {
            return Err(Error::TooLarge {
                what: "support size",
                size: m.len(),
                limit: MAX_SUPPORT,
            });
        }
    }
    let (cost, xi_ground_cost) = cost_matrix(mu, nu, p)?;
    let mass = flow::solve_transport(&cost, mu.weights(), nu.weights());
    let total: f64 = mass.iter().zip(&cost).map(|(m, c)| m * c).sum();
    Ok(TransportResult {
        distance: distance_from_total(total, p),
        plan: TransportPlan {
            rows: mu.len(),
            cols: nu.len(),
            mass,
        },
        xi_ground_cost,
    })
}

/// Exhaustive minimum over all permutations; uniform inputs of equal size at
/// most [`MAX_BRUTEFORCE`].
pub fn wasserstein_bruteforce(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<f64> {
    check_p(p)?;
    let n = mu.len();
    if n > MAX_BRUTEFORCE {
        return Err(Error::TooLarge {
            what: "support size",
            size: n,
            limit: MAX_BRUTEFORCE,
        });
    }
    if nu.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: nu.len() });
    }
    if !mu.is_uniform() || !nu.is_uniform() {
        return Err(Error::InvalidWeights("uniform measures required".into()));
    }
    let (cost, _) = cost_matrix(mu, nu, p)?;
    let mut perm: Vec<usize> = (0..n).collect();
    let total = |perm: &[usize]| (0..n).map(|i| cost[i * n + perm[i]]).sum::<f64>();
    let mut best = total(&perm);
    // Heap's algorithm
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(total(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(distance_from_total(best / n as f64, p))
}
