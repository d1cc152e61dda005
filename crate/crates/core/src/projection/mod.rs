//! Correction of predicted densities onto `{u >= 0, <u, 1> = M}`.
//!
//! Both projections are characterised by their KKT systems. For the `L²`
//! projection
//!
//! ```text
//! u = ũ + λ - ξ,   λ u = 0,   λ >= 0,   <u, 1> = M
//! ```
//!
//! and for the `H¹` projection the first relation becomes
//! `(I - Δ_h) u = (I - Δ_h) ũ + λ - ξ`. Here `ξ` is the mass multiplier and
//! `λ` the pointwise positivity multiplier.

mod h1;
mod l2;

pub use h1::project_h1;
pub use l2::{project_l2, project_l2_oracle};

use crate::error::{PnpError, Result};
use crate::grid::{ops, Field};
use crate::poisson::PoissonSolver;

/// Values with `|v| <= SGN_ZERO` count as zero when classifying the active set.
pub const SGN_ZERO: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RootMethod {
    #[default]
    SemiSmoothNewton,
    Secant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct H1Settings {
    /// Stationarity tolerance, relative to `max(1, ‖(I - Δ_h) ũ‖_∞)`.
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Relative residual target of the inner preconditioned CG solves.
    pub inner_tol: f64,
    pub max_inner: usize,
}

impl Default for H1Settings {
    fn default() -> Self {
        H1Settings {
            newton_tol: 1e-9,
            max_newton: 50,
            inner_tol: 1e-10,
            max_inner: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProjectionVariant {
    L2 { root_method: RootMethod },
    H1(H1Settings),
}

impl Default for ProjectionVariant {
    fn default() -> Self {
        ProjectionVariant::L2 {
            root_method: RootMethod::SemiSmoothNewton,
        }
    }
}

impl ProjectionVariant {
    pub fn l2() -> Self {
        Self::default()
    }

    pub fn l2_secant() -> Self {
        ProjectionVariant::L2 {
            root_method: RootMethod::Secant,
        }
    }

    pub fn h1() -> Self {
        ProjectionVariant::H1(H1Settings::default())
    }

    pub fn is_h1(&self) -> bool {
        matches!(self, ProjectionVariant::H1(_))
    }

    pub fn validate(&self) -> Result<()> {
        if let ProjectionVariant::H1(s) = self {
            let tols_ok = s.newton_tol > 0.0 && s.inner_tol > 0.0;
            if !tols_ok || s.max_newton == 0 || s.max_inner == 0 {
                return Err(PnpError::InvalidParameter(format!(
                    "H1 projection needs positive tolerances and iteration caps, got {s:?}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    /// The projected density `u`.
    pub corrected: Field,
    /// Mass multiplier `ξ`.
    pub multiplier_scalar: f64,
    /// Positivity multiplier `λ >= 0`.
    pub multiplier_field: Field,
    /// Newton (or secant) updates performed.
    pub iterations: usize,
    /// Total inner CG iterations (`H¹` only).
    pub inner_iterations: usize,
    pub kkt_residual: f64,
}

/// Dispatch on the variant. `solver` supplies `(I - Δ_h)⁻¹` for `H¹`.
pub fn project(
    u_tilde: &Field,
    mass: f64,
    variant: &ProjectionVariant,
    solver: &PoissonSolver,
) -> Result<ProjectionResult> {
    match variant {
        ProjectionVariant::L2 { root_method } => project_l2(u_tilde, mass, *root_method),
        ProjectionVariant::H1(settings) => project_h1(u_tilde, mass, settings, solver),
    }
}

pub(crate) fn check_inputs(u_tilde: &Field, mass: f64) -> Result<()> {
    if !(mass.is_finite() && mass > 0.0) {
        return Err(PnpError::InvalidParameter(format!(
            "target mass must be positive, got {mass}"
        )));
    }
    if let Some(i) = u_tilde.values().iter().position(|v| !v.is_finite()) {
        return Err(PnpError::NonFinite(i));
    }
    Ok(())
}

/// Largest violation of the KKT conditions: stationarity, mass, primal and
/// dual feasibility, complementarity. Stationarity is measured pointwise in
/// the norm's own operator (`I` for `L²`, `I - Δ_h` for `H¹`).
pub fn kkt_residual(u_tilde: &Field, mass: f64, result: &ProjectionResult, variant: &ProjectionVariant) -> Result<f64> {
    let u = &result.corrected;
    let lambda = &result.multiplier_field;
    let xi = result.multiplier_scalar;
    let diff = u.zip_map(u_tilde, |a, b| a - b)?;
    let lhs = match variant {
        ProjectionVariant::L2 { .. } => diff,
        ProjectionVariant::H1(_) => ops::helmholtz_apply(1.0, &diff),
    };
    let stationarity = lhs
        .zip_map(lambda, |a, l| a - l + xi)?
        .values()
        .iter()
        .fold(0.0, |m: f64, v| m.max(v.abs()));
    let mass_defect = (u.integral() - mass).abs();
    let primal = (-u.min()).max(0.0);
    let dual = (-lambda.min()).max(0.0);
    let complementarity = u.zip_map(lambda, |a, l| (a * l).abs())?.max();
    Ok(stationarity.max(mass_defect).max(primal).max(dual).max(complementarity))
}
