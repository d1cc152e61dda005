use std::ops::{Add, Index, Mul, Neg, Sub};

use super::{Grid, MAX_DIM};
use crate::error::{PnpError, Result};

/// Real grid function, one value per unique node.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Field {
            grid: *grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(PnpError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(PnpError::NonFinite(i));
        }
        Ok(Field { grid: *grid, values })
    }

    /// Nodal interpolant `I_h f`.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64; MAX_DIM]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        Field { grid: *grid, values }
    }

    pub(crate) fn from_raw(grid: &Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid: *grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Field {
        Field::from_raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Field::from_raw(
            &self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    /// `a * self + b * other`
    pub fn lin_comb(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Discrete integral `<u, 1>`.
    pub fn integral(&self) -> f64 {
        self.grid.cell_volume() * self.sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl Index<usize> for Field {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

// Operator overloads panic on a grid mismatch, like slice indexing does on a
// bad index; use `zip_map` / `lin_comb` for the fallible form.
impl Add for &Field {
    type Output = Field;

    fn add(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a + b).expect("grid mismatch in Field + Field")
    }
}

impl Sub for &Field {
    type Output = Field;

    fn sub(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a - b).expect("grid mismatch in Field - Field")
    }
}

impl Mul<f64> for &Field {
    type Output = Field;

    fn mul(self, c: f64) -> Field {
        self.scaled(c)
    }
}

impl Neg for &Field {
    type Output = Field;

    fn neg(self) -> Field {
        self.scaled(-1.0)
    }
}

/// One field per grid axis, e.g. a discrete gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<Field>,
}

impl VectorField {
    pub fn new(components: Vec<Field>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| PnpError::InvalidParameter("vector field without components".into()))?;
        if components.len() != first.grid().dim() {
            return Err(PnpError::InvalidParameter(format!(
                "{} components for a {}-dimensional grid",
                components.len(),
                first.grid().dim()
            )));
        }
        for c in &components[1..] {
            first.grid().ensure_same(c.grid())?;
        }
        Ok(VectorField { components })
    }

    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    pub fn components(&self) -> &[Field] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &Field {
        &self.components[axis]
    }
}
