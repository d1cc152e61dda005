//! `H¹` projection by semi-smooth Newton on the split `U = U⁺ - U⁻`.
//!
//! With `u = U⁺` and `λ = U⁻` the KKT system becomes
//!
//! ```text
//! F₁(U, ξ) = -Δ_h U⁺ + U + ξ - (I - Δ_h) ũ = 0
//! F₂(U, ξ) = h^d Σ U⁺ - M                  = 0
//! ```
//!
//! Each Newton step solves twice with `K = I - Δ_h S`, `S = diag(sgn U⁺)`:
//! `V₁ = K⁻¹(-F₁)` and `V₂ = K⁻¹ 1`, then
//!
//! ```text
//! ξ ← ξ + (F₂ + h^d Σ S V₁) / (h^d Σ S V₂)
//! U ← U + V₁ - δξ V₂
//! ```
//!
//! `K` is not symmetric, but on the active set `A` its rows reduce to the
//! SPD block `(I - Δ_h)_AA`, and the inactive rows are explicit:
//! `V_I = b_I + (Δ_h P_A V)_I`. The block is solved by conjugate gradients
//! preconditioned with `P_A (I - Δ_h)⁻¹ P_A`.

use super::{check_inputs, kkt_residual, H1Settings, ProjectionResult, ProjectionVariant, SGN_ZERO};
use crate::error::{PnpError, Result};
use crate::grid::ops::{dot, helmholtz_apply, laplacian};
use crate::grid::{Field, Grid};
use crate::poisson::PoissonSolver;

/// Mass defect accepted at convergence, relative to `max(1, M)`. A Newton step
/// that keeps the active set reproduces the mass to rounding, whatever the
/// accuracy of the inner solves.
const MASS_TOL: f64 = 1e-12;

pub fn project_h1(
    u_tilde: &Field,
    mass: f64,
    settings: &H1Settings,
    solver: &PoissonSolver,
) -> Result<ProjectionResult> {
    check_inputs(u_tilde, mass)?;
    ProjectionVariant::H1(*settings).validate()?;
    let grid = *u_tilde.grid();
    solver.grid().ensure_same(&grid)?;
    let w = grid.cell_volume();
    let target = helmholtz_apply(1.0, u_tilde);
    let scale = target.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));

    let mut u = u_tilde.values().to_vec();
    let mut xi = 0.0;
    let mut iterations = 0;
    let mut inner_iterations = 0;
    loop {
        let plus: Vec<f64> = u.iter().map(|v| v.max(0.0)).collect();
        let lap_plus = laplacian(&Field::from_raw(&grid, plus.clone()));
        let f1: Vec<f64> = (0..u.len()).map(|i| -lap_plus[i] + u[i] + xi - target[i]).collect();
        let f2 = w * plus.iter().sum::<f64>() - mass;
        let stationarity = f1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if stationarity <= settings.newton_tol * scale && f2.abs() <= MASS_TOL * mass.max(1.0) {
            break;
        }
        if iterations == settings.max_newton {
            return Err(PnpError::ProjectionNotConverged {
                iterations,
                residual: stationarity.max(f2.abs()),
            });
        }

        let active: Vec<bool> = u.iter().map(|&v| v > SGN_ZERO).collect();
        let rhs1: Vec<f64> = f1.iter().map(|v| -v).collect();
        let (v1, it1) = solve_split(&grid, solver, &active, &rhs1, settings)?;
        let (v2, it2) = solve_split(&grid, solver, &active, &vec![1.0; u.len()], settings)?;
        inner_iterations += it1 + it2;

        let masked = |v: &[f64]| -> f64 { v.iter().zip(&active).filter(|(_, &a)| a).map(|(x, _)| x).sum::<f64>() };
        let denominator = w * masked(&v2);
        let step = if denominator > 0.0 {
            (f2 + w * masked(&v1)) / denominator
        } else {
            // Empty active set: K = I and V₂ = 1, so lower ξ by the missing mass per unit volume.
            f2 / grid.measure()
        };
        xi += step;
        for i in 0..u.len() {
            u[i] += v1[i] - step * v2[i];
        }
        iterations += 1;
    }

    let corrected = Field::from_raw(&grid, u.iter().map(|v| v.max(0.0)).collect());
    let multiplier_field = Field::from_raw(&grid, u.iter().map(|v| (-v).max(0.0)).collect());
    let mut result = ProjectionResult {
        corrected,
        multiplier_scalar: xi,
        multiplier_field,
        iterations,
        inner_iterations,
        kkt_residual: 0.0,
    };
    result.kkt_residual = kkt_residual(u_tilde, mass, &result, &ProjectionVariant::H1(*settings))?;
    Ok(result)
}

/// Solve `(I - Δ_h S) V = b` for the active mask `S`.
fn solve_split(
    grid: &Grid,
    solver: &PoissonSolver,
    active: &[bool],
    b: &[f64],
    settings: &H1Settings,
) -> Result<(Vec<f64>, usize)> {
    let restrict = |v: &mut [f64]| {
        for (x, &a) in v.iter_mut().zip(active) {
            if !a {
                *x = 0.0;
            }
        }
    };
    let mut x = vec![0.0; b.len()];
    let mut iterations = 0;
    if active.iter().any(|&a| a) {
        let mut r = b.to_vec();
        restrict(&mut r);
        let b_norm = dot(&r, &r).sqrt();
        if b_norm > 0.0 {
            let precondition = |r: &[f64]| -> Result<Vec<f64>> {
                let mut z = solver
                    .solve_helmholtz(1.0, &Field::from_raw(grid, r.to_vec()))?
                    .into_values();
                restrict(&mut z);
                Ok(z)
            };
            let mut z = precondition(&r)?;
            let mut p = z.clone();
            let mut rz = dot(&r, &z);
            loop {
                let mut ap = helmholtz_apply(1.0, &Field::from_raw(grid, p.clone())).into_values();
                restrict(&mut ap);
                let alpha = rz / dot(&p, &ap);
                for i in 0..x.len() {
                    x[i] += alpha * p[i];
                    r[i] -= alpha * ap[i];
                }
                iterations += 1;
                let rel = dot(&r, &r).sqrt() / b_norm;
                if rel <= settings.inner_tol {
                    break;
                }
                if iterations == settings.max_inner {
                    return Err(PnpError::InnerSolveNotConverged {
                        iterations,
                        residual: rel,
                    });
                }
                z = precondition(&r)?;
                let rz_new = dot(&r, &z);
                let beta = rz_new / rz;
                rz = rz_new;
                for i in 0..p.len() {
                    p[i] = z[i] + beta * p[i];
                }
            }
        }
    }
    // inactive rows: V_I = b_I + (Δ_h P_A V)_I
    let lap = laplacian(&Field::from_raw(grid, x.clone()));
    for i in 0..x.len() {
        if !active[i] {
            x[i] = b[i] + lap[i];
        }
    }
    Ok((x, iterations))
}
