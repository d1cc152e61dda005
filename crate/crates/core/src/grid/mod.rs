//! Uniform tensor-product grids and the grid functions that live on them.
//!
//! Nodes are stored row-major with axis 0 fastest: the linear index of the
//! node with multi-index `(i, j, k)` is `i + n0 * (j + n1 * k)`.
//!
//! Periodic grids hold the `N` unique nodes `x_i = lower + i h`, the node at
//! `upper` being identified with the one at `lower`. Neumann grids are
//! cell-centred, `x_i = lower + (i + 1/2) h`, with mirror ghosts
//! `u_{-1} = u_0` and `u_N = u_{N-1}` so that the boundary face carries no
//! flux. In both cases `h = (upper - lower) / N` and the discrete inner
//! product is the uniform-cell sum `h^d Σ u v`.

mod field;
pub mod ops;
pub mod snapshot;

pub use field::{Field, VectorField};

use crate::error::{PnpError, Result};

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Boundary {
    Periodic,
    /// Homogeneous Neumann; two-dimensional grids only.
    Neumann,
}

impl Boundary {
    pub fn name(self) -> &'static str {
        match self {
            Boundary::Periodic => "periodic",
            Boundary::Neumann => "neumann",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "periodic" => Some(Boundary::Periodic),
            "neumann" => Some(Boundary::Neumann),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    n: [usize; MAX_DIM],
    lower: [f64; MAX_DIM],
    upper: [f64; MAX_DIM],
    bc: Boundary,
}

impl Grid {
    pub fn new(lower: &[f64], upper: &[f64], n: &[usize], bc: Boundary) -> Result<Self> {
        let dim = n.len();
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(PnpError::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if lower.len() != dim || upper.len() != dim {
            return Err(PnpError::InvalidGrid(format!(
                "bounds have {} / {} entries for dimension {dim}",
                lower.len(),
                upper.len()
            )));
        }
        if bc == Boundary::Neumann && dim != 2 {
            return Err(PnpError::InvalidGrid(
                "Neumann boundaries are only supported in two dimensions".into(),
            ));
        }
        let mut g = Grid {
            dim,
            n: [1; MAX_DIM],
            lower: [0.0; MAX_DIM],
            upper: [1.0; MAX_DIM],
            bc,
        };
        for a in 0..dim {
            if n[a] < 2 {
                return Err(PnpError::InvalidGrid(format!("axis {a} has {} nodes, need >= 2", n[a])));
            }
            if !(lower[a].is_finite() && upper[a].is_finite()) || upper[a] <= lower[a] {
                return Err(PnpError::InvalidGrid(format!(
                    "axis {a} bounds [{}, {}] are not an interval",
                    lower[a], upper[a]
                )));
            }
            g.n[a] = n[a];
            g.lower[a] = lower[a];
            g.upper[a] = upper[a];
        }
        Ok(g)
    }

    /// Cube `[lower, upper]^dim` with `n` nodes per axis.
    pub fn cube(dim: usize, lower: f64, upper: f64, n: usize, bc: Boundary) -> Result<Self> {
        Self::new(&vec![lower; dim], &vec![upper; dim], &vec![n; dim], bc)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bc(&self) -> Boundary {
        self.bc
    }

    pub fn shape(&self) -> &[usize] {
        &self.n[..self.dim]
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower[..self.dim]
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper[..self.dim]
    }

    pub fn n(&self, axis: usize) -> usize {
        self.n[axis]
    }

    pub fn h(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / self.n[axis] as f64
    }

    /// Largest spacing over all axes.
    pub fn h_max(&self) -> f64 {
        (0..self.dim).map(|a| self.h(a)).fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `h^d` (product of per-axis spacings).
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.h(a)).product()
    }

    /// `|Ω|`
    pub fn measure(&self) -> f64 {
        (0..self.dim).map(|a| self.upper[a] - self.lower[a]).product()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.n[..axis].iter().product()
    }

    pub fn check_axis(&self, axis: usize) -> Result<()> {
        if axis < self.dim {
            Ok(())
        } else {
            Err(PnpError::AxisOutOfRange { axis, dim: self.dim })
        }
    }

    pub fn node_coord(&self, axis: usize, i: usize) -> f64 {
        let offset = match self.bc {
            Boundary::Periodic => 0.0,
            Boundary::Neumann => 0.5,
        };
        self.lower[axis] + (i as f64 + offset) * self.h(axis)
    }

    pub fn multi_index(&self, mut index: usize) -> [usize; MAX_DIM] {
        let mut mi = [0; MAX_DIM];
        for (a, slot) in mi.iter_mut().enumerate().take(self.dim) {
            *slot = index % self.n[a];
            index /= self.n[a];
        }
        mi
    }

    pub fn linear_index(&self, mi: &[usize]) -> usize {
        let mut idx = 0;
        for a in (0..self.dim).rev() {
            idx = idx * self.n[a] + mi[a];
        }
        idx
    }

    /// Physical coordinates of a node; unused trailing entries are zero.
    pub fn coords(&self, index: usize) -> [f64; MAX_DIM] {
        let mi = self.multi_index(index);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = self.node_coord(a, mi[a]);
        }
        x
    }

    /// Same grid with every axis refined or coarsened to `n` nodes.
    pub fn with_nodes(&self, n: usize) -> Result<Self> {
        Self::new(self.lower(), self.upper(), &vec![n; self.dim], self.bc)
    }

    pub(crate) fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(PnpError::GridMismatch)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_measure() {
        let g = Grid::new(&[-2.0, -2.0], &[2.0, 2.0], &[128, 128], Boundary::Neumann).unwrap();
        assert_eq!(g.h(0), 4.0 / 128.0);
        assert_eq!(g.len(), 128 * 128);
        assert!((g.measure() - 16.0).abs() < 1e-15);
        assert!((g.cell_volume() * g.len() as f64 - g.measure()).abs() < 1e-12);
        assert_eq!(g.node_coord(0, 0), -2.0 + 2.0 / 128.0);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::cube(1, 0.0, 1.0, 8, Boundary::Neumann).is_err());
        assert!(Grid::cube(3, 0.0, 1.0, 8, Boundary::Neumann).is_err());
        assert!(Grid::cube(2, 0.0, 1.0, 1, Boundary::Periodic).is_err());
        assert!(Grid::cube(2, 1.0, 1.0, 8, Boundary::Periodic).is_err());
        assert!(Grid::cube(4, 0.0, 1.0, 8, Boundary::Periodic).is_err());
        assert!(Grid::new(&[0.0], &[1.0, 1.0], &[4, 4], Boundary::Periodic).is_err());
    }

    #[test]
    fn index_layout_is_axis0_fastest() {
        let g = Grid::new(&[0.0; 3], &[1.0; 3], &[3, 4, 5], Boundary::Periodic).unwrap();
        assert_eq!(g.linear_index(&[1, 0, 0]), 1);
        assert_eq!(g.linear_index(&[0, 1, 0]), 3);
        assert_eq!(g.linear_index(&[0, 0, 1]), 12);
        for idx in 0..g.len() {
            assert_eq!(g.linear_index(&g.multi_index(idx)), idx);
        }
        assert_eq!(g.stride(2), 12);
    }
}
