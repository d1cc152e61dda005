//! Spectral solvers for `-Δ_h φ = r` and `(αI - Δ_h) u = r`.
//!
//! The periodic Laplacian is circulant along every axis, so a tensor-product
//! FFT diagonalises it with eigenvalues
//! `λ_k = Σ_axes (4 / h²) sin²(π k / N)`. The cell-centred Neumann Laplacian
//! with mirror ghosts equals the periodic Laplacian of the even extension of
//! the field to `2N` nodes per axis, so the same machinery handles it on the
//! extended grid (a cosine transform in disguise).

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{PnpError, Result};
use crate::grid::{ops, Boundary, Field, Grid};

/// Potential together with the mean that was removed from the right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolution {
    pub phi: Field,
    /// `mean(r)`: the compatibility defect of the right-hand side.
    pub rhs_mean: f64,
}

pub struct PoissonSolver {
    grid: Grid,
    ext_shape: Vec<usize>,
    eigenvalues: Vec<f64>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for PoissonSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PoissonSolver")
            .field("grid", &self.grid)
            .field("ext_shape", &self.ext_shape)
            .finish_non_exhaustive()
    }
}

impl PoissonSolver {
    pub fn new(grid: &Grid) -> Self {
        let ext_shape: Vec<usize> = grid
            .shape()
            .iter()
            .map(|&n| match grid.bc() {
                Boundary::Periodic => n,
                Boundary::Neumann => 2 * n,
            })
            .collect();
        let mut planner = FftPlanner::new();
        let forward = ext_shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = ext_shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();

        let total: usize = ext_shape.iter().product();
        let per_axis: Vec<Vec<f64>> = ext_shape
            .iter()
            .enumerate()
            .map(|(a, &n)| {
                let h = grid.h(a);
                (0..n)
                    .map(|k| 4.0 / (h * h) * (PI * k as f64 / n as f64).sin().powi(2))
                    .collect()
            })
            .collect();
        let eigenvalues = (0..total)
            .map(|mut idx| {
                let mut lambda = 0.0;
                for (a, &n) in ext_shape.iter().enumerate() {
                    lambda += per_axis[a][idx % n];
                    idx /= n;
                }
                lambda
            })
            .collect();
        PoissonSolver {
            grid: *grid,
            ext_shape,
            eigenvalues,
            forward,
            inverse,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Eigenvalues of `-Δ_h` on the transform grid, index-aligned with it.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Zero-mean `φ` with `-Δ_h φ = r - mean(r)`.
    pub fn solve(&self, r: &Field) -> Result<PoissonSolution> {
        self.grid.ensure_same(r.grid())?;
        let rhs_mean = ops::mean(r);
        let phi = self.apply_inverse(r, |lambda| if lambda > 0.0 { 1.0 / lambda } else { 0.0 });
        Ok(PoissonSolution {
            phi: ops::shift_to_zero_mean(&phi),
            rhs_mean,
        })
    }

    /// `u = (αI - Δ_h)⁻¹ r` for `α > 0`.
    pub fn solve_helmholtz(&self, alpha: f64, r: &Field) -> Result<Field> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(PnpError::InvalidParameter(format!(
                "Helmholtz shift must be positive and finite, got {alpha}"
            )));
        }
        self.grid.ensure_same(r.grid())?;
        Ok(self.apply_inverse(r, |lambda| 1.0 / (alpha + lambda)))
    }

    fn apply_inverse(&self, r: &Field, multiplier: impl Fn(f64) -> f64) -> Field {
        let mut data = self.extend(r);
        let mut scratch = Vec::new();
        let mut line = Vec::new();
        for a in 0..self.ext_shape.len() {
            transform_axis(
                &mut data,
                &self.ext_shape,
                a,
                &*self.forward[a],
                &mut line,
                &mut scratch,
            );
        }
        let scale = 1.0 / data.len() as f64;
        for (z, &lambda) in data.iter_mut().zip(&self.eigenvalues) {
            *z *= multiplier(lambda) * scale;
        }
        for a in 0..self.ext_shape.len() {
            transform_axis(
                &mut data,
                &self.ext_shape,
                a,
                &*self.inverse[a],
                &mut line,
                &mut scratch,
            );
        }
        self.restrict(&data)
    }

    fn extend(&self, r: &Field) -> Vec<Complex64> {
        if self.grid.bc() == Boundary::Periodic {
            return r.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        }
        let total: usize = self.ext_shape.iter().product();
        let mut mi = [0usize; 3];
        (0..total)
            .map(|mut idx| {
                for (a, &n2) in self.ext_shape.iter().enumerate() {
                    let c = idx % n2;
                    idx /= n2;
                    let n = n2 / 2;
                    mi[a] = if c < n { c } else { n2 - 1 - c };
                }
                Complex64::new(r[self.grid.linear_index(&mi)], 0.0)
            })
            .collect()
    }

    fn restrict(&self, data: &[Complex64]) -> Field {
        if self.grid.bc() == Boundary::Periodic {
            return Field::from_raw(&self.grid, data.iter().map(|z| z.re).collect());
        }
        let values = (0..self.grid.len())
            .map(|idx| {
                let mi = self.grid.multi_index(idx);
                let mut ext = 0;
                for a in (0..self.ext_shape.len()).rev() {
                    ext = ext * self.ext_shape[a] + mi[a];
                }
                data[ext].re
            })
            .collect();
        Field::from_raw(&self.grid, values)
    }
}

fn transform_axis(
    data: &mut [Complex64],
    shape: &[usize],
    axis: usize,
    plan: &dyn Fft<f64>,
    line: &mut Vec<Complex64>,
    scratch: &mut Vec<Complex64>,
) {
    let n = shape[axis];
    let stride: usize = shape[..axis].iter().product();
    let zero = Complex64::new(0.0, 0.0);
    scratch.resize(plan.get_inplace_scratch_len(), zero);
    if stride == 1 {
        for chunk in data.chunks_exact_mut(n) {
            plan.process_with_scratch(chunk, scratch);
        }
        return;
    }
    line.resize(n, zero);
    for block in (0..data.len()).step_by(stride * n) {
        for offset in 0..stride {
            let base = block + offset;
            for (j, z) in line.iter_mut().enumerate() {
                *z = data[base + j * stride];
            }
            plan.process_with_scratch(line, scratch);
            for (j, z) in line.iter().enumerate() {
                data[base + j * stride] = *z;
            }
        }
    }
}
