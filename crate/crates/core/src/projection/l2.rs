//! `L²` projection by a scalar root solve for the mass multiplier.
//!
//! Complementarity gives `u = (ũ - ξ)⁺`, `λ = (ũ - ξ)⁻`, so everything
//! reduces to the root of the convex, nonincreasing, piecewise-linear
//!
//! ```text
//! F(ξ) = h^d Σ (ũ - ξ)⁺ - M.
//! ```
//!
//! The active set `{ũ > ξ}` is nested in `ξ`, so two iterates with the same
//! active-node count lie on the same linear piece of `F`.

use super::{check_inputs, kkt_residual, ProjectionResult, ProjectionVariant, RootMethod, SGN_ZERO};
use crate::error::{PnpError, Result};
use crate::grid::Field;

const MAX_ROOT_ITERATIONS: usize = 200;

struct MassFunction<'a> {
    values: &'a [f64],
    weight: f64,
    mass: f64,
    /// Rounding floor for `F`.
    tiny: f64,
}

#[derive(Debug, Clone, Copy)]
struct Eval {
    xi: f64,
    f: f64,
    active: usize,
}

impl<'a> MassFunction<'a> {
    fn new(u: &'a Field, mass: f64) -> Self {
        let weight = u.grid().cell_volume();
        let abs_mass: f64 = weight * u.values().iter().map(|v| v.abs()).sum::<f64>();
        MassFunction {
            values: u.values(),
            weight,
            mass,
            tiny: 16.0 * f64::EPSILON * (abs_mass + mass),
        }
    }

    fn eval(&self, xi: f64) -> Eval {
        let mut sum = 0.0;
        let mut active = 0;
        for &v in self.values {
            let d = v - xi;
            if d > 0.0 {
                sum += d;
            }
            if d > SGN_ZERO {
                active += 1;
            }
        }
        Eval {
            xi,
            f: self.weight * sum - self.mass,
            active,
        }
    }

    /// Semi-smooth Newton step `ξ - F / V` with `V = -h^d #active`.
    fn newton(&self, e: &Eval) -> f64 {
        e.xi + e.f / (self.weight * e.active as f64)
    }
}

/// Tracks the tightest known bracket `F(lo) > 0 > F(hi)`.
#[derive(Debug, Default)]
struct Bracket {
    lo: Option<f64>,
    hi: Option<f64>,
}

impl Bracket {
    fn update(&mut self, e: &Eval) {
        if e.f > 0.0 {
            self.lo = Some(self.lo.map_or(e.xi, |l| l.max(e.xi)));
        } else if e.f < 0.0 {
            self.hi = Some(self.hi.map_or(e.xi, |h| h.min(e.xi)));
        }
    }

    /// Midpoint of the bracket, growing its lower end geometrically from
    /// `start` until `F` turns positive.
    fn bisect(&mut self, mf: &MassFunction, start: f64) -> f64 {
        let hi = self.hi.unwrap_or(start);
        let lo = match self.lo {
            Some(lo) => lo,
            None => {
                let mut step = start.abs().max(1.0);
                loop {
                    let e = mf.eval(start - step);
                    if e.f > 0.0 {
                        self.lo = Some(e.xi);
                        break e.xi;
                    }
                    self.update(&e);
                    step *= 2.0;
                }
            }
        };
        0.5 * (lo + hi)
    }

    fn contains(&self, xi: f64) -> bool {
        self.lo.is_none_or(|l| xi > l) && self.hi.is_none_or(|h| xi < h)
    }
}

/// Project `u_tilde` onto `{u >= 0, <u, 1> = mass}` in the discrete `L²` norm.
pub fn project_l2(u_tilde: &Field, mass: f64, method: RootMethod) -> Result<ProjectionResult> {
    check_inputs(u_tilde, mass)?;
    let mf = MassFunction::new(u_tilde, mass);
    let (xi, iterations) = match method {
        RootMethod::SemiSmoothNewton => newton_root(&mf)?,
        RootMethod::Secant => secant_root(&mf)?,
    };
    finish(
        u_tilde,
        mass,
        xi,
        iterations,
        ProjectionVariant::L2 { root_method: method },
    )
}

fn newton_root(mf: &MassFunction) -> Result<(f64, usize)> {
    let mut bracket = Bracket::default();
    let mut cur = mf.eval(0.0);
    bracket.update(&cur);
    for iteration in 1..=MAX_ROOT_ITERATIONS {
        let next_xi = if cur.active > 0 {
            mf.newton(&cur)
        } else {
            bracket.bisect(mf, cur.xi)
        };
        let next = mf.eval(next_xi);
        bracket.update(&next);
        let same_piece = next.active > 0 && next.active == cur.active;
        if same_piece || next.f.abs() <= mf.tiny || next.xi == cur.xi {
            return Ok((next.xi, iteration));
        }
        cur = next;
    }
    Err(PnpError::ProjectionNotConverged {
        iterations: MAX_ROOT_ITERATIONS,
        residual: cur.f.abs(),
    })
}

fn secant_root(mf: &MassFunction) -> Result<(f64, usize)> {
    let mut bracket = Bracket::default();
    let mut prev = mf.eval(0.0);
    bracket.update(&prev);
    let first = if prev.active > 0 {
        mf.newton(&prev)
    } else {
        bracket.bisect(mf, prev.xi)
    };
    let mut cur = mf.eval(first);
    bracket.update(&cur);
    if cur.f.abs() <= mf.tiny || (cur.active > 0 && cur.active == prev.active) {
        return Ok((cur.xi, 1));
    }
    for iteration in 2..=MAX_ROOT_ITERATIONS {
        let slope = cur.f - prev.f;
        let mut next_xi = if slope != 0.0 {
            cur.xi - cur.f * (cur.xi - prev.xi) / slope
        } else {
            f64::NAN
        };
        if !next_xi.is_finite() || !bracket.contains(next_xi) {
            next_xi = bracket.bisect(mf, cur.xi);
        }
        let next = mf.eval(next_xi);
        bracket.update(&next);
        let same_piece = next.active > 0 && next.active == cur.active && cur.active == prev.active;
        if same_piece || next.f.abs() <= mf.tiny || next.xi == cur.xi {
            return Ok((next.xi, iteration));
        }
        prev = cur;
        cur = next;
    }
    Err(PnpError::ProjectionNotConverged {
        iterations: MAX_ROOT_ITERATIONS,
        residual: cur.f.abs(),
    })
}

fn finish(
    u_tilde: &Field,
    mass: f64,
    xi: f64,
    iterations: usize,
    variant: ProjectionVariant,
) -> Result<ProjectionResult> {
    let corrected = u_tilde.map(|v| (v - xi).max(0.0));
    let multiplier_field = u_tilde.map(|v| (xi - v).max(0.0));
    let mut result = ProjectionResult {
        corrected,
        multiplier_scalar: xi,
        multiplier_field,
        iterations,
        inner_iterations: 0,
        kkt_residual: 0.0,
    };
    result.kkt_residual = kkt_residual(u_tilde, mass, &result, &variant)?;
    Ok(result)
}

/// Exact `L²` projection by sorting the breakpoints of `F`.
///
/// With the values sorted in decreasing order `v_(1) >= v_(2) >= ...`, the
/// root lies on the piece where exactly the first `k` nodes are active:
/// `ξ = (h^d Σ_{j<=k} v_(j) - M) / (h^d k)` with `v_(k) > ξ >= v_(k+1)`.
pub fn project_l2_oracle(u_tilde: &Field, mass: f64) -> Result<ProjectionResult> {
    check_inputs(u_tilde, mass)?;
    let w = u_tilde.grid().cell_volume();
    let mut sorted = u_tilde.values().to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut prefix = 0.0;
    let mut xi = f64::NAN;
    for k in 0..sorted.len() {
        prefix += sorted[k];
        let candidate = (w * prefix - mass) / (w * (k + 1) as f64);
        let below_next = k + 1 == sorted.len() || candidate >= sorted[k + 1];
        if sorted[k] > candidate && below_next {
            xi = candidate;
            break;
        }
    }
    debug_assert!(xi.is_finite(), "a positive mass always has a breakpoint segment");
    finish(
        u_tilde,
        mass,
        xi,
        0,
        ProjectionVariant::L2 {
            root_method: RootMethod::SemiSmoothNewton,
        },
    )
}
