//! Simulation and verification toolkit for the Lohe Hermitian sphere model:
//! particle dynamics on the unit sphere of `C^d`, aggregation diagnostics,
//! exact Wasserstein distances and reproducible theorem-level experiments.

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod integrators;
pub mod observables;
pub mod transport;

pub use dynamics::{CouplingParams, Ensemble};
pub use error::{Error, Result};
pub use geometry::{ComplexMatrix, ComplexVector, SkewHermitianMatrix, UnitStateVector};
pub use integrators::{integrate, IntegratorConfig, Trajectory};
pub use observables::ObservableSeries;
pub use transport::EmpiricalMeasure;
