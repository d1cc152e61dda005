//! Averaging, difference and elliptic operators, inner products and norms.
//!
//! Scalar fields take mirror ghosts on Neumann grids. Face fluxes (the
//! components handed to [`divergence_plus`]) take a zero ghost past the
//! upper boundary, which is what makes summation by parts exact there.

use super::{Boundary, Field, VectorField};
use crate::error::{PnpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ghost {
    Mirror,
    ZeroFlux,
}

/// Values of the neighbour one step forward (or backward) along `axis`.
fn neighbour(u: &Field, axis: usize, forward: bool, ghost: Ghost) -> Vec<f64> {
    let g = u.grid();
    let n = g.n(axis);
    let s = g.stride(axis);
    let v = u.values();
    let periodic = g.bc() == Boundary::Periodic;
    v.iter()
        .enumerate()
        .map(|(idx, &here)| {
            let c = (idx / s) % n;
            if forward {
                if c + 1 < n {
                    v[idx + s]
                } else if periodic {
                    v[idx - (n - 1) * s]
                } else {
                    match ghost {
                        Ghost::Mirror => here,
                        Ghost::ZeroFlux => 0.0,
                    }
                }
            } else if c > 0 {
                v[idx - s]
            } else if periodic {
                v[idx + (n - 1) * s]
            } else {
                match ghost {
                    Ghost::Mirror => here,
                    Ghost::ZeroFlux => 0.0,
                }
            }
        })
        .collect()
}

/// `(u_i + u_{i-1}) / 2` along `axis`.
pub fn average(u: &Field, axis: usize) -> Result<Field> {
    u.grid().check_axis(axis)?;
    let back = neighbour(u, axis, false, Ghost::Mirror);
    Ok(Field::from_raw(
        u.grid(),
        u.values().iter().zip(back).map(|(a, b)| 0.5 * (a + b)).collect(),
    ))
}

/// `D⁻u = (u_i - u_{i-1}) / h`
pub fn diff_backward(u: &Field, axis: usize) -> Result<Field> {
    u.grid().check_axis(axis)?;
    let inv_h = 1.0 / u.grid().h(axis);
    let back = neighbour(u, axis, false, Ghost::Mirror);
    Ok(Field::from_raw(
        u.grid(),
        u.values().iter().zip(back).map(|(a, b)| (a - b) * inv_h).collect(),
    ))
}

/// `D⁺u = (u_{i+1} - u_i) / h`
pub fn diff_forward(u: &Field, axis: usize) -> Result<Field> {
    u.grid().check_axis(axis)?;
    Ok(forward_difference(u, axis, Ghost::Mirror))
}

fn forward_difference(u: &Field, axis: usize, ghost: Ghost) -> Field {
    let inv_h = 1.0 / u.grid().h(axis);
    let fwd = neighbour(u, axis, true, ghost);
    Field::from_raw(
        u.grid(),
        fwd.iter().zip(u.values()).map(|(a, b)| (a - b) * inv_h).collect(),
    )
}

/// `∇⁻_h u`
pub fn gradient_minus(u: &Field) -> VectorField {
    let comps = (0..u.grid().dim())
        .map(|a| diff_backward(u, a).expect("axis in range"))
        .collect();
    VectorField::new(comps).expect("components share the grid")
}

/// `∇⁺_h · v`, treating the components as face fluxes.
pub fn divergence_plus(v: &VectorField) -> Field {
    let g = *v.grid();
    let mut out = vec![0.0; g.len()];
    for (a, comp) in v.components().iter().enumerate() {
        let d = forward_difference(comp, a, Ghost::ZeroFlux);
        for (o, x) in out.iter_mut().zip(d.values()) {
            *o += x;
        }
    }
    Field::from_raw(&g, out)
}

/// Standard `(2d+1)`-point Laplacian.
pub fn laplacian(u: &Field) -> Field {
    let g = *u.grid();
    let mut out = vec![0.0; g.len()];
    for a in 0..g.dim() {
        let inv_h2 = 1.0 / (g.h(a) * g.h(a));
        let fwd = neighbour(u, a, true, Ghost::Mirror);
        let back = neighbour(u, a, false, Ghost::Mirror);
        for (i, o) in out.iter_mut().enumerate() {
            *o += (fwd[i] - 2.0 * u[i] + back[i]) * inv_h2;
        }
    }
    Field::from_raw(&g, out)
}

/// `∇⁺_h · ((𝒜w) ∇⁻_h u)`
pub fn div_avg_grad(w: &Field, u: &Field) -> Result<Field> {
    w.grid().ensure_same(u.grid())?;
    let g = *u.grid();
    let mut out = vec![0.0; g.len()];
    for a in 0..g.dim() {
        let flux = average(w, a)?.zip_map(&diff_backward(u, a)?, |x, y| x * y)?;
        let d = forward_difference(&flux, a, Ghost::ZeroFlux);
        for (o, x) in out.iter_mut().zip(d.values()) {
            *o += x;
        }
    }
    Ok(Field::from_raw(&g, out))
}

/// `<u, v> = h^d Σ u v`
pub fn inner(u: &Field, v: &Field) -> Result<f64> {
    u.grid().ensure_same(v.grid())?;
    Ok(u.grid().cell_volume() * dot(u.values(), v.values()))
}

pub fn inner_vector(u: &VectorField, v: &VectorField) -> Result<f64> {
    u.grid().ensure_same(v.grid())?;
    let mut s = 0.0;
    for (a, b) in u.components().iter().zip(v.components()) {
        s += dot(a.values(), b.values());
    }
    Ok(u.grid().cell_volume() * s)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_l2(u: &Field) -> f64 {
    (u.grid().cell_volume() * dot(u.values(), u.values())).sqrt()
}

pub fn norm_lp(u: &Field, p: f64) -> Result<f64> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(PnpError::InvalidParameter(format!(
            "L^p norm needs finite p >= 1, got {p}"
        )));
    }
    let s: f64 = u.values().iter().map(|v| v.abs().powf(p)).sum();
    Ok((u.grid().cell_volume() * s).powf(1.0 / p))
}

pub fn norm_linf(u: &Field) -> f64 {
    u.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `‖∇⁻_h u‖`
pub fn seminorm_h1(u: &Field) -> f64 {
    let grad = gradient_minus(u);
    let s: f64 = grad.components().iter().map(|c| dot(c.values(), c.values())).sum();
    (u.grid().cell_volume() * s).sqrt()
}

/// `‖u‖²_{H¹} = ‖u‖² + ‖∇⁻_h u‖²`
pub fn norm_h1(u: &Field) -> f64 {
    norm_l2(u).hypot(seminorm_h1(u))
}

/// Discrete mean `<u, 1> / |Ω|`, i.e. the arithmetic mean of the nodal values.
pub fn mean(u: &Field) -> f64 {
    u.sum() / u.len() as f64
}

/// Projection onto the zero-mean subspace.
pub fn shift_to_zero_mean(u: &Field) -> Field {
    let m = mean(u);
    u.map(|v| v - m)
}

/// `(αI - Δ_h) u`
pub fn helmholtz_apply(alpha: f64, u: &Field) -> Field {
    let lap = laplacian(u);
    Field::from_raw(
        u.grid(),
        u.values()
            .iter()
            .zip(lap.values())
            .map(|(a, l)| alpha * a - l)
            .collect(),
    )
}
