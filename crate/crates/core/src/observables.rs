//! Diagnostics evaluated on ensembles and atomic measures.
//!
//! Integrals against a state distribution are weighted sums over the atoms of
//! an [`EmpiricalMeasure`].

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{inner_slice, q_map, real_dot_slice, ComplexMatrix, ComplexVector, UnitStateVector};
use crate::transport::EmpiricalMeasure;

/// Largest ensemble on which the pair scans behind `F` and `G` are exact
/// inside an [`ObservableSeries`]; larger ensembles use a strided subset.
pub const EXACT_PAIR_LIMIT: usize = 4096;

/// `F = max_{k,l} |1 − <z_k, z_l>|`.
pub fn functional_f(states: &[UnitStateVector]) -> f64 {
    let mut worst = 0.0f64;
    for (k, zk) in states.iter().enumerate() {
        for zl in &states[k + 1..] {
            let h = inner_slice(zk.as_slice(), zl.as_slice());
            worst = worst.max((Complex64::new(1.0, 0.0) - h).norm());
        }
    }
    worst
}

/// `G = max_{k,l} ‖z_k − z_l‖`.
pub fn functional_g(states: &[UnitStateVector]) -> f64 {
    let mut worst = 0.0f64;
    for (k, zk) in states.iter().enumerate() {
        for zl in &states[k + 1..] {
            worst = worst.max(zk.distance_sqr(zl));
        }
    }
    worst.sqrt()
}

/// Arithmetic mean of the states.
pub fn centroid(states: &[UnitStateVector]) -> Result<ComplexVector> {
    let first = states.first().ok_or(Error::Empty("states"))?;
    let mut acc = vec![Complex64::new(0.0, 0.0); first.dim()];
    for z in states {
        for (a, &x) in acc.iter_mut().zip(z.as_slice()) {
            *a += x;
        }
    }
    let inv = 1.0 / states.len() as f64;
    Ok(ComplexVector::from_vec_unchecked(acc.into_iter().map(|a| a * inv).collect()))
}

/// Weighted first moment `J = Σ w_j z_j`.
pub fn j_vector(mu: &EmpiricalMeasure) -> ComplexVector {
    mu.first_moment()
}

/// `R = ‖J‖`.
pub fn order_parameter(mu: &EmpiricalMeasure) -> f64 {
    mu.first_moment().norm()
}

/// Closed-form `dR²/dt` for the frequency-free flow:
/// `2κ₀ Σ w (‖J‖² − (z·J)²) + 2(κ₀+2κ₁) Σ w ((iz)·J)²`.
pub fn r_squared_rate(mu: &EmpiricalMeasure, kappa0: f64, kappa1: f64) -> f64 {
    let j = mu.first_moment();
    let jj = j.norm_sqr();
    let mut tangent = 0.0;
    let mut phase = 0.0;
    for (z, &w) in mu.atoms().iter().zip(mu.weights()) {
        let zj = real_dot_slice(z.as_slice(), j.as_slice());
        let izj = real_dot_slice(z.mul_i().as_slice(), j.as_slice());
        tangent += w * (jj - zj * zj);
        phase += w * izj * izj;
    }
    2.0 * kappa0 * tangent + 2.0 * (kappa0 + 2.0 * kappa1) * phase
}

/// `d‖z_c‖²/dt` in particle form:
/// `(2κ₀/N) Σ (‖z_c‖² − Re<z_i,z_c>²) + (2(κ₀+2κ₁)/N) Σ Im<z_i,z_c>²`.
pub fn centroid_rate(states: &[UnitStateVector], kappa0: f64, kappa1: f64) -> Result<f64> {
    let zc = centroid(states)?;
    let cc = zc.norm_sqr();
    let mut tangent = 0.0;
    let mut phase = 0.0;
    for z in states {
        let h = inner_slice(z.as_slice(), zc.as_slice());
        tangent += cc - h.re * h.re;
        phase += h.im * h.im;
    }
    let n = states.len() as f64;
    Ok(2.0 * kappa0 / n * tangent + 2.0 * (kappa0 + 2.0 * kappa1) / n * phase)
}

/// `Σ w_j (‖J‖² − (z_j·J)²)`.
pub fn aggregation_defect(mu: &EmpiricalMeasure) -> f64 {
    let j = mu.first_moment();
    let jj = j.norm_sqr();
    mu.atoms()
        .iter()
        .zip(mu.weights())
        .map(|(z, &w)| {
            let zj = real_dot_slice(z.as_slice(), j.as_slice());
            w * (jj - zj * zj)
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub value: f64,
    pub bound: f64,
}

impl BoundCheck {
    pub fn holds(&self, slack: f64) -> bool {
        self.value <= self.bound + slack
    }
}

/// `‖Σ w_j Q_{z_j}(J)‖` against `2(κ₀+κ₁)`.
pub fn dj_dt_norm_bound_check(mu: &EmpiricalMeasure, kappa0: f64, kappa1: f64) -> BoundCheck {
    let j = mu.first_moment();
    let mut acc = ComplexVector::zeros(j.dim());
    for (z, &w) in mu.atoms().iter().zip(mu.weights()) {
        let q = q_map(z, &j, kappa0, kappa1).expect("atoms share the moment dimension");
        acc = &acc + &q.scale_real(w);
    }
    BoundCheck {
        value: acc.norm(),
        bound: 2.0 * (kappa0 + kappa1),
    }
}

/// `(Σ_k ‖z_k − z̃_k‖^p)^{1/p}`.
pub fn lp_distance(a: &[UnitStateVector], b: &[UnitStateVector], p: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("p must lie in [1, ∞), found {p}")));
    }
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        if x.dim() != y.dim() {
            return Err(Error::DimensionMismatch {
                expected: x.dim(),
                found: y.dim(),
            });
        }
        sum += x.distance(y).powf(p);
    }
    Ok(sum.powf(1.0 / p))
}

/// Two-point correlations `h_ij = <z_i, z_j>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationData {
    h: ComplexMatrix,
}

impl CorrelationData {
    pub fn len(&self) -> usize {
        self.h.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.h.dim() == 0
    }

    pub fn h(&self) -> &ComplexMatrix {
        &self.h
    }

    pub fn real(&self, i: usize, j: usize) -> f64 {
        self.h.get(i, j).re
    }

    pub fn imag(&self, i: usize, j: usize) -> f64 {
        self.h.get(i, j).im
    }

    /// `1 − Re h_ij`.
    pub fn gap(&self, i: usize, j: usize) -> f64 {
        1.0 - self.real(i, j)
    }

    /// `max_{k,l} √(I_kl² + J_kl²)`.
    pub fn functional_f(&self) -> f64 {
        let n = self.len();
        let mut worst = 0.0f64;
        for k in 0..n {
            for l in 0..n {
                worst = worst.max(self.imag(k, l).hypot(self.gap(k, l)));
            }
        }
        worst
    }
}

pub fn correlations(states: &[UnitStateVector]) -> Result<CorrelationData> {
    if states.is_empty() {
        return Err(Error::Empty("states"));
    }
    let n = states.len();
    let mut data = Vec::with_capacity(n * n);
    for zi in states {
        for zj in states {
            data.push(inner_slice(zi.as_slice(), zj.as_slice()));
        }
    }
    Ok(CorrelationData {
        h: ComplexMatrix::new(n, data)?,
    })
}

fn pair_subset(states: &[UnitStateVector]) -> (Vec<UnitStateVector>, bool) {
    if states.len() <= EXACT_PAIR_LIMIT {
        return (states.to_vec(), false);
    }
    let n = states.len();
    let picked = (0..EXACT_PAIR_LIMIT).map(|k| states[k * n / EXACT_PAIR_LIMIT].clone()).collect();
    (picked, true)
}

/// Time-indexed record of `F`, `G`, `R²`, `J` and the aggregation defect.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub dim: usize,
    pub times: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub r_squared: Vec<f64>,
    pub j: Vec<ComplexVector>,
    pub defect: Vec<f64>,
    /// Set when `F` and `G` were evaluated on a strided subset of particles.
    pub approximate_pairs: bool,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl ObservableSeries {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, t: f64, states: &[UnitStateVector]) {
        let (subset, approximate) = pair_subset(states);
        self.approximate_pairs |= approximate;
        let mu = EmpiricalMeasure::uniform(states.to_vec()).expect("recorded states are nonempty");
        let j = mu.first_moment();
        self.times.push(t);
        self.f.push(functional_f(&subset));
        self.g.push(functional_g(&subset));
        self.r_squared.push(j.norm_sqr());
        self.defect.push(aggregation_defect(&mu));
        self.j.push(j);
    }

    pub fn insert_metadata(&mut self, key: &str, value: serde_json::Value) {
        self.metadata.insert(key.to_string(), value);
    }

    /// Column order: `t,F,G,R2,defect,J_re_0,J_im_0,…,J_re_{d-1},J_im_{d-1}`.
    pub fn csv_header(&self) -> String {
        let mut header = String::from("t,F,G,R2,defect");
        for k in 0..self.dim {
            let _ = write!(header, ",J_re_{k},J_im_{k}");
        }
        header
    }

    /// CSV with 17 significant digits per value.
    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for i in 0..self.len() {
            let _ = write!(
                out,
                "{},{},{},{},{}",
                fmt_f64(self.times[i]),
                fmt_f64(self.f[i]),
                fmt_f64(self.g[i]),
                fmt_f64(self.r_squared[i]),
                fmt_f64(self.defect[i])
            );
            for c in self.j[i].as_slice() {
                let _ = write!(out, ",{},{}", fmt_f64(c.re), fmt_f64(c.im));
            }
            out.push('\n');
        }
        out
    }

    /// `{"times": [...], "series": {name: [...]}, "metadata": {...}}`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut series = serde_json::Map::new();
        series.insert("F".into(), self.f.clone().into());
        series.insert("G".into(), self.g.clone().into());
        series.insert("R2".into(), self.r_squared.clone().into());
        series.insert("defect".into(), self.defect.clone().into());
        for k in 0..self.dim {
            let re: Vec<f64> = self.j.iter().map(|j| j[k].re).collect();
            let im: Vec<f64> = self.j.iter().map(|j| j[k].im).collect();
            series.insert(format!("J_re_{k}"), re.into());
            series.insert(format!("J_im_{k}"), im.into());
        }
        let mut metadata: serde_json::Map<String, serde_json::Value> =
            self.metadata.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        metadata.insert("approximate_pairs".into(), self.approximate_pairs.into());
        serde_json::json!({
            "times": self.times,
            "series": series,
            "metadata": metadata,
        })
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
