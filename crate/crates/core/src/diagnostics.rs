//! Per-step observables, errors against exact solutions and observed orders.

use crate::error::{PnpError, Result};
use crate::grid::ops::{gradient_minus, inner_vector, mean, norm_h1, norm_l2, norm_linf, seminorm_h1};
use crate::grid::{Field, MAX_DIM};

/// Values at or below this are treated as zero in `v ln v`.
const ENTROPY_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub mass_p: f64,
    pub mass_n: f64,
    pub min_p: f64,
    pub max_p: f64,
    pub min_n: f64,
    pub max_n: f64,
    pub energy_total: f64,
    pub energy_electric: f64,
    pub xi: f64,
    pub gamma: f64,
    pub newton_iters_p: usize,
    pub newton_iters_n: usize,
    pub rhs_mean_defect: f64,
}

impl DiagnosticsRecord {
    pub const CSV_HEADER: &'static str = "step,t,mass_p,mass_n,min_p,max_p,min_n,max_n,\
energy_total,energy_electric,xi,gamma,newton_iters_p,newton_iters_n,rhs_mean_defect";

    /// One CSV row in [`Self::CSV_HEADER`] order; floats use the shortest
    /// exact representation so reruns are byte-identical.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{:e}",
            self.step,
            self.t,
            self.mass_p,
            self.mass_n,
            self.min_p,
            self.max_p,
            self.min_n,
            self.max_n,
            self.energy_total,
            self.energy_electric,
            self.xi,
            self.gamma,
            self.newton_iters_p,
            self.newton_iters_n,
            self.rhs_mean_defect
        )
    }
}

fn entropy_density(v: f64) -> f64 {
    if v <= ENTROPY_FLOOR {
        0.0
    } else {
        v * v.ln()
    }
}

/// `(total, electric)` with `total = <p ln p + n ln n, 1> + ½‖∇⁻_h φ‖²`
/// and `electric = ½‖∇⁻_h φ‖²`.
pub fn energies(p: &Field, n: &Field, phi: &Field) -> Result<(f64, f64)> {
    p.grid().ensure_same(n.grid())?;
    p.grid().ensure_same(phi.grid())?;
    let grad = gradient_minus(phi);
    let electric = 0.5 * inner_vector(&grad, &grad)?;
    let entropy: f64 = p.values().iter().chain(n.values()).map(|&v| entropy_density(v)).sum();
    Ok((p.grid().cell_volume() * entropy + electric, electric))
}

/// Closed-form solution triple used to measure errors.
pub trait ExactSolution: Send + Sync {
    fn p(&self, x: &[f64; MAX_DIM], t: f64) -> f64;
    fn n(&self, x: &[f64; MAX_DIM], t: f64) -> f64;
    fn phi(&self, x: &[f64; MAX_DIM], t: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorReport {
    pub l2_p: f64,
    pub l2_n: f64,
    pub l2_phi: f64,
    pub h1_p: f64,
    pub h1_n: f64,
    pub h1_phi: f64,
    /// `‖∇⁻_h e_φ‖`, the quantity the potential estimate controls.
    pub grad_phi: f64,
    pub linf_phi: f64,
}

/// Errors of `(p, n, φ)` against `I_h` of the exact triple at time `t`.
/// The interpolated potential is shifted to zero mean first.
pub fn error_vs_exact(p: &Field, n: &Field, phi: &Field, exact: &dyn ExactSolution, t: f64) -> Result<ErrorReport> {
    let g = p.grid();
    let pe = Field::from_fn(g, |x| exact.p(x, t));
    let ne = Field::from_fn(g, |x| exact.n(x, t));
    let phie = Field::from_fn(g, |x| exact.phi(x, t));
    let phie_mean = mean(&phie);
    let ep = p.zip_map(&pe, |a, b| a - b)?;
    let en = n.zip_map(&ne, |a, b| a - b)?;
    let ephi = phi.zip_map(&phie, |a, b| a - (b - phie_mean))?;
    Ok(ErrorReport {
        l2_p: norm_l2(&ep),
        l2_n: norm_l2(&en),
        l2_phi: norm_l2(&ephi),
        h1_p: norm_h1(&ep),
        h1_n: norm_h1(&en),
        h1_phi: norm_h1(&ephi),
        grad_phi: seminorm_h1(&ephi),
        linf_phi: norm_linf(&ephi),
    })
}

/// Observed orders `ln(e_i / e_{i+1}) / ln(r_i)`, where `r_i` is the factor
/// by which the parameter shrank between levels `i` and `i + 1`.
pub fn convergence_rates(errors: &[f64], ratios: &[f64]) -> Result<Vec<f64>> {
    if errors.len() < 2 {
        return Err(PnpError::InvalidParameter("need at least two error levels".into()));
    }
    if ratios.len() != errors.len() - 1 {
        return Err(PnpError::InvalidParameter(format!(
            "{} errors need {} refinement ratios, got {}",
            errors.len(),
            errors.len() - 1,
            ratios.len()
        )));
    }
    if let Some(e) = errors.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(PnpError::InvalidParameter(format!("errors must be positive, got {e}")));
    }
    if let Some(r) = ratios.iter().find(|r| !(r.is_finite() && **r > 1.0)) {
        return Err(PnpError::InvalidParameter(format!(
            "refinement ratio must exceed 1, got {r}"
        )));
    }
    Ok(errors
        .windows(2)
        .zip(ratios)
        .map(|(w, r)| (w[0] / w[1]).ln() / r.ln())
        .collect())
}

/// Rates for a parameter sequence (`h` or `τ` values, coarse to fine).
pub fn rates_from_params(errors: &[f64], params: &[f64]) -> Result<Vec<f64>> {
    if params.len() != errors.len() {
        return Err(PnpError::InvalidParameter(format!(
            "{} errors but {} parameter values",
            errors.len(),
            params.len()
        )));
    }
    let ratios: Vec<f64> = params.windows(2).map(|w| w[0] / w[1]).collect();
    convergence_rates(errors, &ratios)
}
