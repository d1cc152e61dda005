//! Structure-preserving finite differences for the two-species
//! Poisson–Nernst–Planck system.
//!
//! A linear Crank–Nicolson / Adams–Bashforth predictor advances the ion
//! densities; every step is then corrected by a projection (in `L²` or `H¹`)
//! onto `{u >= 0, <u, 1> = M}` so that the discrete densities stay
//! nonnegative and conserve mass exactly. The potential is recovered
//! spectrally in the zero-mean gauge.

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod poisson;
pub mod projection;
pub mod stepper;

pub use diagnostics::{DiagnosticsRecord, ErrorReport, ExactSolution};
pub use error::{PnpError, Result};
pub use grid::{Boundary, Field, Grid, VectorField};
pub use poisson::{PoissonSolution, PoissonSolver};
pub use projection::{ProjectionResult, ProjectionVariant, RootMethod};
pub use stepper::{SchemeConfig, SimulationState, Stepper};
