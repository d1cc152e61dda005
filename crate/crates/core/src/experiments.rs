//! Reference problems: a manufactured periodic solution with sources, two
//! charged disks under Neumann walls, and mobile ions screening a fixed 3D
//! charge. Each comes with a preset and can be refined for convergence studies.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::diagnostics::{error_vs_exact, rates_from_params, ErrorReport, ExactSolution};
use crate::error::{PnpError, Result};
use crate::grid::{Boundary, Field, Grid, MAX_DIM};
use crate::projection::ProjectionVariant;
use crate::stepper::{SchemeConfig, SimulationState, SourceFn, Stepper};
use crate::DiagnosticsRecord;

/// Smooth periodic solution on `[0, 1]²`:
/// `p = cos²(θ)`, `n = cos²(ψ)`, `φ = (cos 2θ - cos 2ψ) / 16π²`
/// with `θ = π(t + x + y)`, `ψ = π(t + x - y)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Manufactured;

impl Manufactured {
    fn angles(x: &[f64; MAX_DIM], t: f64) -> (f64, f64) {
        (PI * (t + x[0] + x[1]), PI * (t + x[0] - x[1]))
    }

    /// Forcing that makes the triple an exact solution for `p`.
    pub fn source_p(x: &[f64; MAX_DIM], t: f64) -> f64 {
        let (th, ps) = Self::angles(x, t);
        let (s2, c2) = (2.0 * th).sin_cos();
        let charge = 0.5 * (c2 - (2.0 * ps).cos());
        -PI * s2 + 4.0 * PI * PI * c2 - 0.25 * s2 * s2 + th.cos().powi(2) * charge
    }

    /// Forcing for `n`.
    pub fn source_n(x: &[f64; MAX_DIM], t: f64) -> f64 {
        let (th, ps) = Self::angles(x, t);
        let (s2, c2) = (2.0 * ps).sin_cos();
        let charge = 0.5 * ((2.0 * th).cos() - c2);
        -PI * s2 + 4.0 * PI * PI * c2 - 0.25 * s2 * s2 - ps.cos().powi(2) * charge
    }

    pub fn sources() -> (SourceFn, SourceFn) {
        (Arc::new(Self::source_p), Arc::new(Self::source_n))
    }
}

impl ExactSolution for Manufactured {
    fn p(&self, x: &[f64; MAX_DIM], t: f64) -> f64 {
        Self::angles(x, t).0.cos().powi(2)
    }

    fn n(&self, x: &[f64; MAX_DIM], t: f64) -> f64 {
        Self::angles(x, t).1.cos().powi(2)
    }

    fn phi(&self, x: &[f64; MAX_DIM], t: f64) -> f64 {
        let (th, ps) = Self::angles(x, t);
        ((2.0 * th).cos() - (2.0 * ps).cos()) / (16.0 * PI * PI)
    }
}

/// Two disks of radius 1/2 centred at `±(1/2, 1/2)`; `p` is heavier in the
/// upper disk and `n` in the lower one.
pub fn two_disks(x: &[f64; MAX_DIM]) -> (f64, f64) {
    let in_disk = |cx: f64, cy: f64| (x[0] - cx).powi(2) + (x[1] - cy).powi(2) <= 0.25;
    if in_disk(0.5, 0.5) {
        (1.0, 0.5)
    } else if in_disk(-0.5, -0.5) {
        (0.5, 1.0)
    } else {
        (0.0, 0.0)
    }
}

/// Offset of the eight Gaussian charges from the origin along each axis.
pub const CHARGE_OFFSET: f64 = 0.5;

/// Alternating-sign Gaussian charges at the octant points `(±c, ±c, ±c)`.
pub fn octant_charge(x: &[f64; MAX_DIM]) -> f64 {
    let mut rho = 0.0;
    for &ex in &[-1.0, 1.0] {
        for &ey in &[-1.0, 1.0] {
            for &ez in &[-1.0, 1.0] {
                let r2 = (x[0] + ex * CHARGE_OFFSET).powi(2)
                    + (x[1] + ey * CHARGE_OFFSET).powi(2)
                    + (x[2] + ez * CHARGE_OFFSET).powi(2);
                rho += ex * ey * ez * (-100.0 * r2).exp();
            }
        }
    }
    200.0 * rho
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Example1Cnfdp,
    Example1Cnfdp2,
    Example2Neumann,
    Example3FixedCharge3d,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Example1Cnfdp,
        Preset::Example1Cnfdp2,
        Preset::Example2Neumann,
        Preset::Example3FixedCharge3d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Example1Cnfdp => "example1_cnfdp",
            Preset::Example1Cnfdp2 => "example1_cnfdp2",
            Preset::Example2Neumann => "example2_neumann",
            Preset::Example3FixedCharge3d => "example3_fixed_charge_3d",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    /// Published parameters: `(nodes per axis, τ, T)`.
    pub fn defaults(self) -> (usize, f64, f64) {
        match self {
            Preset::Example1Cnfdp | Preset::Example1Cnfdp2 => (512, 2.0 / 32.0, 2.0),
            Preset::Example2Neumann => (128, 4.0 / 200.0, 1.0),
            Preset::Example3FixedCharge3d => (64, 2.0 / 100.0, 2.0),
        }
    }

    pub fn default_variant(self) -> ProjectionVariant {
        match self {
            Preset::Example1Cnfdp2 => ProjectionVariant::h1(),
            _ => ProjectionVariant::l2(),
        }
    }

    pub fn snapshot_times(self) -> Vec<f64> {
        match self {
            Preset::Example1Cnfdp | Preset::Example1Cnfdp2 => Vec::new(),
            Preset::Example2Neumann => vec![0.0, 0.04, 0.2, 1.0],
            Preset::Example3FixedCharge3d => vec![0.0, 0.01, 0.05, 2.0],
        }
    }

    /// Domain `[lower, upper]^dim` and boundary condition.
    pub fn domain(self) -> (usize, f64, f64, Boundary) {
        match self {
            Preset::Example1Cnfdp | Preset::Example1Cnfdp2 => (2, 0.0, 1.0, Boundary::Periodic),
            Preset::Example2Neumann => (2, -2.0, 2.0, Boundary::Neumann),
            Preset::Example3FixedCharge3d => (3, -1.0, 1.0, Boundary::Periodic),
        }
    }

    pub fn has_exact_solution(self) -> bool {
        matches!(self, Preset::Example1Cnfdp | Preset::Example1Cnfdp2)
    }

    pub fn experiment(self, nodes: usize, tau: f64, t_final: f64, variant: ProjectionVariant) -> Result<Experiment> {
        let (dim, lo, hi, bc) = self.domain();
        let grid = Grid::cube(dim, lo, hi, nodes, bc)?;
        let config = SchemeConfig::new(tau, t_final, variant);
        match self {
            Preset::Example1Cnfdp | Preset::Example1Cnfdp2 => {
                let (fp, fn_) = Manufactured::sources();
                Ok(Experiment {
                    initial_p: Field::from_fn(&grid, |x| Manufactured.p(x, 0.0)),
                    initial_n: Field::from_fn(&grid, |x| Manufactured.n(x, 0.0)),
                    config: config.with_sources(fp, fn_),
                    exact: Some(Arc::new(Manufactured)),
                    grid,
                })
            }
            Preset::Example2Neumann => Ok(Experiment {
                initial_p: Field::from_fn(&grid, |x| two_disks(x).0),
                initial_n: Field::from_fn(&grid, |x| two_disks(x).1),
                config,
                exact: None,
                grid,
            }),
            Preset::Example3FixedCharge3d => Ok(Experiment {
                initial_p: Field::constant(&grid, 0.1),
                initial_n: Field::constant(&grid, 0.1),
                config: config.with_fixed_charge(Field::from_fn(&grid, octant_charge)),
                exact: None,
                grid,
            }),
        }
    }

    pub fn default_experiment(self) -> Result<Experiment> {
        let (nodes, tau, t_final) = self.defaults();
        self.experiment(nodes, tau, t_final, self.default_variant())
    }
}

/// Grid, scheme and initial data of one simulation.
#[derive(Clone)]
pub struct Experiment {
    pub grid: Grid,
    pub config: SchemeConfig,
    pub initial_p: Field,
    pub initial_n: Field,
    pub exact: Option<Arc<dyn ExactSolution>>,
}

impl std::fmt::Debug for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Experiment")
            .field("grid", &self.grid)
            .field("config", &self.config)
            .field("exact", &self.exact.is_some())
            .finish_non_exhaustive()
    }
}

/// Final state of a run, its diagnostics and, when known, errors at `T`.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: SimulationState,
    /// One record for the initial state, then one per step.
    pub records: Vec<DiagnosticsRecord>,
    pub errors: Option<ErrorReport>,
}

impl Experiment {
    pub fn stepper(&self) -> Result<Stepper> {
        Stepper::new(&self.grid, self.config.clone())
    }

    /// Run to `T`; `observer` sees the initial state and every step.
    pub fn run_with<F>(&self, mut observer: F) -> Result<RunOutcome>
    where
        F: FnMut(&SimulationState, &DiagnosticsRecord) -> Result<()>,
    {
        let stepper = self.stepper()?;
        let init = stepper.initialize(&self.initial_p, &self.initial_n)?;
        let first = init.record()?;
        observer(&init, &first)?;
        let mut records = vec![first];
        let state = stepper.run(init, |s, r| {
            records.push(r.clone());
            observer(s, r)
        })?;
        let errors = match &self.exact {
            Some(exact) => Some(error_vs_exact(&state.p, &state.n, &state.phi, exact.as_ref(), state.t)?),
            None => None,
        };
        Ok(RunOutcome { state, records, errors })
    }

    pub fn run(&self) -> Result<RunOutcome> {
        self.run_with(|_, _| Ok(()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refinement {
    Temporal,
    Spatial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorNorm {
    L2,
    H1,
}

impl ErrorNorm {
    /// `(p, n, φ)` errors in this norm.
    pub fn select(self, e: &ErrorReport) -> [f64; 3] {
        match self {
            ErrorNorm::L2 => [e.l2_p, e.l2_n, e.l2_phi],
            ErrorNorm::H1 => [e.h1_p, e.h1_n, e.h1_phi],
        }
    }
}

/// A refinement study of a preset with a known exact solution.
#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub preset: Preset,
    pub variant: ProjectionVariant,
    pub refine: Refinement,
    /// Refined parameter values, coarse to fine: `τ` (temporal) or `h` (spatial).
    pub levels: Vec<f64>,
    /// The parameter held fixed: nodes per axis (temporal) or `τ` (spatial).
    pub fixed_nodes: usize,
    pub fixed_tau: f64,
    pub t_final: f64,
}

/// One row of a rate table; rates are absent on the first level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub param: f64,
    pub errors: [f64; 3],
    pub rates: Option<[f64; 3]>,
    /// Largest projection iteration count seen during the level's run.
    pub peak_iterations: usize,
}

impl RateRow {
    pub const CSV_HEADER: &'static str = "param,error_p,rate_p,error_n,rate_n,error_phi,rate_phi";

    pub fn csv_row(&self) -> String {
        let rate = |i: usize| self.rates.map(|r| format!("{:.4}", r[i])).unwrap_or_default();
        format!(
            "{:e},{:e},{},{:e},{},{:e},{}",
            self.param,
            self.errors[0],
            rate(0),
            self.errors[1],
            rate(1),
            self.errors[2],
            rate(2)
        )
    }
}

/// Attach rates to per-level errors.
pub fn rate_rows(params: &[f64], errors: &[[f64; 3]], peaks: &[usize]) -> Result<Vec<RateRow>> {
    let mut rows: Vec<RateRow> = params
        .iter()
        .zip(errors)
        .zip(peaks)
        .map(|((&param, &errors), &peak_iterations)| RateRow {
            param,
            errors,
            rates: None,
            peak_iterations,
        })
        .collect();
    if rows.len() >= 2 {
        let mut per_field = Vec::new();
        for c in 0..3 {
            let column: Vec<f64> = errors.iter().map(|e| e[c]).collect();
            per_field.push(rates_from_params(&column, params)?);
        }
        for (i, row) in rows.iter_mut().enumerate().skip(1) {
            row.rates = Some([per_field[0][i - 1], per_field[1][i - 1], per_field[2][i - 1]]);
        }
    }
    Ok(rows)
}

impl StudySpec {
    pub fn norm(&self) -> ErrorNorm {
        if self.variant.is_h1() {
            ErrorNorm::H1
        } else {
            ErrorNorm::L2
        }
    }

    /// The experiment at one refinement level.
    pub fn level(&self, param: f64) -> Result<Experiment> {
        match self.refine {
            Refinement::Temporal => self
                .preset
                .experiment(self.fixed_nodes, param, self.t_final, self.variant),
            Refinement::Spatial => {
                let (_, lo, hi, _) = self.preset.domain();
                let nodes = ((hi - lo) / param).round();
                if nodes < 2.0 || ((hi - lo) / nodes - param).abs() > 1e-9 * param {
                    return Err(PnpError::InvalidParameter(format!(
                        "mesh size {param} does not divide the domain length {}",
                        hi - lo
                    )));
                }
                self.preset
                    .experiment(nodes as usize, self.fixed_tau, self.t_final, self.variant)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.preset.has_exact_solution() {
            return Err(PnpError::InvalidParameter(format!(
                "preset {} has no exact solution to measure errors against",
                self.preset.name()
            )));
        }
        if self.levels.is_empty() {
            return Err(PnpError::InvalidParameter("study needs at least one level".into()));
        }
        for &param in &self.levels {
            self.level(param)?.config.validate()?;
        }
        Ok(())
    }

    /// Run every level (in parallel on the current rayon pool) and tabulate.
    pub fn run(&self) -> Result<Vec<RateRow>> {
        self.validate()?;
        let norm = self.norm();
        let outcomes: Vec<Result<([f64; 3], usize)>> = self
            .levels
            .par_iter()
            .map(|&param| {
                let outcome = self.level(param)?.run()?;
                let errors = outcome.errors.expect("study presets carry an exact solution");
                let peak = outcome
                    .records
                    .iter()
                    .map(|r| r.newton_iters_p.max(r.newton_iters_n))
                    .max()
                    .unwrap_or(0);
                Ok((norm.select(&errors), peak))
            })
            .collect();
        let mut errors = Vec::with_capacity(outcomes.len());
        let mut peaks = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            let (e, p) = o?;
            errors.push(e);
            peaks.push(p);
        }
        rate_rows(&self.levels, &errors, &peaks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Fourth-order central first derivative of `f` along `axis` (3 = time).
    fn d(f: &dyn Fn([f64; 4]) -> f64, at: [f64; 4], axis: usize, h: f64) -> f64 {
        let shift = |s: f64| {
            let mut q = at;
            q[axis] += s * h;
            f(q)
        };
        (shift(-2.0) - 8.0 * shift(-1.0) + 8.0 * shift(1.0) - shift(2.0)) / (12.0 * h)
    }

    #[test]
    fn manufactured_sources_close_the_equations() {
        let ex = Manufactured;
        let xt = |q: [f64; 4]| ([q[0], q[1], 0.0], q[3]);
        let p = |q: [f64; 4]| {
            let (x, t) = xt(q);
            ex.p(&x, t)
        };
        let n = |q: [f64; 4]| {
            let (x, t) = xt(q);
            ex.n(&x, t)
        };
        let phi = |q: [f64; 4]| {
            let (x, t) = xt(q);
            ex.phi(&x, t)
        };
        let h = 1e-3;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let at = [
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                0.0,
                rng.gen_range(0.0..2.0),
            ];
            let (x, t) = xt(at);
            let lap = |u: &dyn Fn([f64; 4]) -> f64| -> f64 { (0..2).map(|a| d(&|q| d(u, q, a, h), at, a, h)).sum() };
            let div_flux = |u: &dyn Fn([f64; 4]) -> f64| -> f64 {
                (0..2).map(|a| d(&|q| u(q) * d(&phi, q, a, h), at, a, h)).sum()
            };
            let res_p = d(&p, at, 3, h) - lap(&p) - div_flux(&p) - Manufactured::source_p(&x, t);
            let res_n = d(&n, at, 3, h) - lap(&n) + div_flux(&n) - Manufactured::source_n(&x, t);
            let res_phi = -lap(&phi) - (p(at) - n(at));
            assert!(res_p.abs() < 1e-6, "p residual {res_p}");
            assert!(res_n.abs() < 1e-6, "n residual {res_n}");
            assert!(res_phi.abs() < 1e-6, "phi residual {res_phi}");
        }
    }

    #[test]
    fn octant_charge_is_odd_in_each_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let r = octant_charge(&x);
            for a in 0..3 {
                let mut y = x;
                y[a] = -y[a];
                assert!((octant_charge(&y) + r).abs() < 1e-12);
            }
        }
        // peak at a centre: one Gaussian dominates, the rest are e^-100 or smaller
        let peak = octant_charge(&[-0.5, -0.5, -0.5]);
        assert!((peak - 200.0).abs() < 1e-12);
        let g = Grid::cube(3, -1.0, 1.0, 16, Boundary::Periodic).unwrap();
        assert!(Field::from_fn(&g, octant_charge).sum().abs() < 1e-10);
    }

    #[test]
    fn two_disk_data() {
        assert_eq!(two_disks(&[0.5, 0.5, 0.0]), (1.0, 0.5));
        assert_eq!(two_disks(&[-0.5, -0.9, 0.0]), (0.5, 1.0));
        assert_eq!(two_disks(&[1.5, -1.5, 0.0]), (0.0, 0.0));
        let e = Preset::Example2Neumann
            .experiment(32, 0.02, 0.04, ProjectionVariant::l2())
            .unwrap();
        assert!((e.initial_p.integral() - e.initial_n.integral()).abs() < 1e-14);
    }

    #[test]
    fn presets_round_trip_names_and_defaults() {
        for p in Preset::ALL {
            assert_eq!(Preset::from_name(p.name()), Some(p));
            let (nodes, tau, t_final) = p.defaults();
            let (_, lo, hi, _) = p.domain();
            assert!(nodes >= 2);
            assert!(SchemeConfig::new(tau, t_final, p.default_variant()).validate().is_ok());
            let h = (hi - lo) / nodes as f64;
            match p {
                Preset::Example2Neumann => assert_eq!(h, 4.0 / 128.0),
                Preset::Example3FixedCharge3d => assert_eq!(h, 1.0 / 32.0),
                _ => assert_eq!(h, 1.0 / 512.0),
            }
        }
        assert_eq!(Preset::from_name("example9"), None);
    }

    #[test]
    fn rate_rows_handle_single_levels() {
        let rows = rate_rows(&[0.1], &[[1.0, 2.0, 3.0]], &[1]).unwrap();
        assert_eq!(rows[0].rates, None);
        assert_eq!(rows[0].csv_row(), "1e-1,1e0,,2e0,,3e0,");
        let rows = rate_rows(&[0.2, 0.1], &[[4.0, 4.0, 4.0], [1.0, 2.0, 4.0]], &[1, 1]).unwrap();
        let r = rows[1].rates.unwrap();
        assert!((r[0] - 2.0).abs() < 1e-14 && (r[1] - 1.0).abs() < 1e-14 && r[2].abs() < 1e-14);
    }

    #[test]
    fn coarse_manufactured_run_is_accurate() {
        let e = Preset::Example1Cnfdp
            .experiment(32, 1.0 / 64.0, 0.25, ProjectionVariant::l2())
            .unwrap();
        let out = e.run().unwrap();
        assert_eq!(out.records.len(), 17);
        let err = out.errors.unwrap();
        assert!(err.l2_p < 1e-2, "{err:?}");
        assert!(err.l2_phi < 1e-3, "{err:?}");
    }
}
