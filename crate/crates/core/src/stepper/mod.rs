//! Time stepping: compatible initialization, a backward-Euler start, then
//! Crank–Nicolson for diffusion with Adams–Bashforth extrapolated drift.
//! Every step is followed by the projection correction and a potential solve.
//!
//! Predictors, for `p` (the `n` species flips the sign of the drift):
//!
//! ```text
//! first:  (I/τ  - Δ_h) p̃ = p⁰/τ + ∇⁺·(𝒜p⁰ ∇⁻φ⁰) + f(t₀)
//! later:  (2I/τ - Δ_h) p̃ = 2pᵏ/τ + Δ_h pᵏ + 2∇⁺·(𝒜p* ∇⁻φ*) + 2f(t_k + τ/2)
//! ```
//!
//! with `u* = 3/2 uᵏ - 1/2 uᵏ⁻¹`.

use std::fmt;
use std::sync::Arc;

use crate::diagnostics::{energies, DiagnosticsRecord};
use crate::error::{PnpError, Result};
use crate::grid::ops::{div_avg_grad, laplacian};
use crate::grid::{Field, Grid, MAX_DIM};
use crate::poisson::{PoissonSolution, PoissonSolver};
use crate::projection::{project, ProjectionResult, ProjectionVariant};

/// Space-time source `f(x, t)`.
pub type SourceFn = Arc<dyn Fn(&[f64; MAX_DIM], f64) -> f64 + Send + Sync>;

/// Sampled initial data may dip this far below zero and is then clamped.
const INITIAL_NEGATIVE_TOL: f64 = 1e-14;

/// `t_final / τ` must be within this (relative) distance of an integer.
const STEP_COUNT_TOL: f64 = 1e-9;

#[derive(Clone)]
pub struct SchemeConfig {
    pub tau: f64,
    pub t_final: f64,
    pub variant: ProjectionVariant,
    pub source_p: Option<SourceFn>,
    pub source_n: Option<SourceFn>,
    /// Background charge added to the right-hand side of the potential equation.
    pub fixed_charge: Option<Field>,
    /// Warn once when `τ > cfl_ratio_warn · h`.
    pub cfl_ratio_warn: f64,
}

impl fmt::Debug for SchemeConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SchemeConfig")
            .field("tau", &self.tau)
            .field("t_final", &self.t_final)
            .field("variant", &self.variant)
            .field("source_p", &self.source_p.is_some())
            .field("source_n", &self.source_n.is_some())
            .field("fixed_charge", &self.fixed_charge.is_some())
            .field("cfl_ratio_warn", &self.cfl_ratio_warn)
            .finish()
    }
}

impl SchemeConfig {
    pub fn new(tau: f64, t_final: f64, variant: ProjectionVariant) -> Self {
        SchemeConfig {
            tau,
            t_final,
            variant,
            source_p: None,
            source_n: None,
            fixed_charge: None,
            cfl_ratio_warn: 1.0,
        }
    }

    pub fn with_sources(mut self, source_p: SourceFn, source_n: SourceFn) -> Self {
        self.source_p = Some(source_p);
        self.source_n = Some(source_n);
        self
    }

    pub fn with_fixed_charge(mut self, rho: Field) -> Self {
        self.fixed_charge = Some(rho);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.steps().map(|_| ())
    }

    /// Number of steps to reach `t_final`; rejects horizons that are not an
    /// integer multiple of `τ`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(PnpError::InvalidParameter(format!(
                "time step must be positive, got {}",
                self.tau
            )));
        }
        if !(self.t_final.is_finite() && self.t_final >= self.tau) {
            return Err(PnpError::InvalidParameter(format!(
                "final time {} must be at least the time step {}",
                self.t_final, self.tau
            )));
        }
        if self.cfl_ratio_warn.is_nan() || self.cfl_ratio_warn <= 0.0 {
            return Err(PnpError::InvalidParameter(format!(
                "cfl_ratio_warn must be positive, got {}",
                self.cfl_ratio_warn
            )));
        }
        self.variant.validate()?;
        let ratio = self.t_final / self.tau;
        let steps = ratio.round();
        if (ratio - steps).abs() > STEP_COUNT_TOL * ratio {
            return Err(PnpError::InvalidParameter(format!(
                "final time {} is not an integer multiple of the time step {}",
                self.t_final, self.tau
            )));
        }
        Ok(steps as usize)
    }
}

/// Summary of one projection call.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProjectionStats {
    /// Mass multiplier (`ξ` for `p`, `γ` for `n`).
    pub multiplier: f64,
    pub iterations: usize,
    pub inner_iterations: usize,
    pub kkt_residual: f64,
}

impl From<&ProjectionResult> for ProjectionStats {
    fn from(r: &ProjectionResult) -> Self {
        ProjectionStats {
            multiplier: r.multiplier_scalar,
            iterations: r.iterations,
            inner_iterations: r.inner_iterations,
            kkt_residual: r.kkt_residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub k: usize,
    pub t: f64,
    pub p: Field,
    pub n: Field,
    /// Zero-mean potential.
    pub phi: Field,
    pub p_prev: Field,
    pub n_prev: Field,
    pub phi_prev: Field,
    /// Conserved mass targets.
    pub mass_p: f64,
    pub mass_n: f64,
    pub projection_p: ProjectionStats,
    pub projection_n: ProjectionStats,
    /// Mean of the last potential right-hand side.
    pub rhs_mean_defect: f64,
}

impl SimulationState {
    pub fn grid(&self) -> &Grid {
        self.p.grid()
    }

    pub fn energies(&self) -> Result<(f64, f64)> {
        energies(&self.p, &self.n, &self.phi)
    }

    pub fn record(&self) -> Result<DiagnosticsRecord> {
        let (energy_total, energy_electric) = self.energies()?;
        Ok(DiagnosticsRecord {
            step: self.k,
            t: self.t,
            mass_p: self.p.integral(),
            mass_n: self.n.integral(),
            min_p: self.p.min(),
            max_p: self.p.max(),
            min_n: self.n.min(),
            max_n: self.n.max(),
            energy_total,
            energy_electric,
            xi: self.projection_p.multiplier,
            gamma: self.projection_n.multiplier,
            newton_iters_p: self.projection_p.iterations,
            newton_iters_n: self.projection_n.iterations,
            rhs_mean_defect: self.rhs_mean_defect,
        })
    }
}

/// Half-step extrapolations `3/2 uᵏ - 1/2 uᵏ⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolants {
    pub p_star: Field,
    pub n_star: Field,
    pub phi_star: Field,
}

impl Extrapolants {
    pub fn from_state(state: &SimulationState) -> Result<Self> {
        let extrapolate = |cur: &Field, prev: &Field| cur.lin_comb(1.5, prev, -0.5);
        Ok(Extrapolants {
            p_star: extrapolate(&state.p, &state.p_prev)?,
            n_star: extrapolate(&state.n, &state.n_prev)?,
            phi_star: extrapolate(&state.phi, &state.phi_prev)?,
        })
    }
}

/// Predicted densities before correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    pub p: Field,
    pub n: Field,
}

pub struct Stepper {
    grid: Grid,
    config: SchemeConfig,
    solver: PoissonSolver,
}

impl fmt::Debug for Stepper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stepper")
            .field("grid", &self.grid)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Stepper {
    pub fn new(grid: &Grid, config: SchemeConfig) -> Result<Self> {
        config.validate()?;
        if let Some(rho) = &config.fixed_charge {
            grid.ensure_same(rho.grid())?;
        }
        Ok(Stepper {
            grid: *grid,
            config,
            solver: PoissonSolver::new(grid),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn solver(&self) -> &PoissonSolver {
        &self.solver
    }

    /// Sample `p₀`, `n₀` at the nodes and build the step-0 state.
    pub fn initialize_with(
        &self,
        p0: impl Fn(&[f64; MAX_DIM]) -> f64,
        n0: impl Fn(&[f64; MAX_DIM]) -> f64,
    ) -> Result<SimulationState> {
        self.initialize(&Field::from_fn(&self.grid, p0), &Field::from_fn(&self.grid, n0))
    }

    /// Rescale both sampled densities to the common mass
    /// `M₀ = max(<p₀, 1>, <n₀, 1>)` and solve for the initial potential.
    pub fn initialize(&self, p0: &Field, n0: &Field) -> Result<SimulationState> {
        self.grid.ensure_same(p0.grid())?;
        self.grid.ensure_same(n0.grid())?;
        let p0 = clean_initial(p0, "p")?;
        let n0 = clean_initial(n0, "n")?;
        let (mp, mn) = (p0.integral(), n0.integral());
        let m0 = mp.max(mn);
        let p = p0.scaled(m0 / mp);
        let n = n0.scaled(m0 / mn);
        let potential = self.update_potential(&p, &n)?;
        Ok(SimulationState {
            k: 0,
            t: 0.0,
            p_prev: p.clone(),
            n_prev: n.clone(),
            phi_prev: potential.phi.clone(),
            p,
            n,
            phi: potential.phi,
            mass_p: m0,
            mass_n: m0,
            projection_p: ProjectionStats::default(),
            projection_n: ProjectionStats::default(),
            rhs_mean_defect: potential.rhs_mean,
        })
    }

    fn sample_source(&self, f: &Option<SourceFn>, t: f64) -> Option<Field> {
        f.as_ref().map(|f| Field::from_fn(&self.grid, |x| f(x, t)))
    }

    /// Backward-Euler predictor used for the first step.
    pub fn predict_first(&self, state: &SimulationState) -> Result<Predictor> {
        let tau = self.config.tau;
        let species = |u: &Field, sign: f64, source: &Option<SourceFn>| -> Result<Field> {
            let drift = div_avg_grad(u, &state.phi)?;
            let mut rhs = u.lin_comb(1.0 / tau, &drift, sign)?;
            if let Some(f) = self.sample_source(source, state.t) {
                rhs = &rhs + &f;
            }
            self.solver.solve_helmholtz(1.0 / tau, &rhs)
        };
        let (p, n) = rayon::join(
            || species(&state.p, 1.0, &self.config.source_p),
            || species(&state.n, -1.0, &self.config.source_n),
        );
        Ok(Predictor { p: p?, n: n? })
    }

    /// Crank–Nicolson / Adams–Bashforth predictor.
    pub fn predict_cn(&self, state: &SimulationState) -> Result<Predictor> {
        let tau = self.config.tau;
        let star = Extrapolants::from_state(state)?;
        let t_half = state.t + 0.5 * tau;
        let species = |u: &Field, u_star: &Field, sign: f64, source: &Option<SourceFn>| -> Result<Field> {
            let drift = div_avg_grad(u_star, &star.phi_star)?;
            let mut rhs = u
                .lin_comb(2.0 / tau, &laplacian(u), 1.0)?
                .lin_comb(1.0, &drift, 2.0 * sign)?;
            if let Some(f) = self.sample_source(source, t_half) {
                rhs = rhs.lin_comb(1.0, &f, 2.0)?;
            }
            self.solver.solve_helmholtz(2.0 / tau, &rhs)
        };
        let (p, n) = rayon::join(
            || species(&state.p, &star.p_star, 1.0, &self.config.source_p),
            || species(&state.n, &star.n_star, -1.0, &self.config.source_n),
        );
        Ok(Predictor { p: p?, n: n? })
    }

    /// Project both predicted densities onto their admissible sets.
    pub fn correct(
        &self,
        predictor: &Predictor,
        mass_p: f64,
        mass_n: f64,
    ) -> Result<(ProjectionResult, ProjectionResult)> {
        let variant = &self.config.variant;
        let (p, n) = rayon::join(
            || project(&predictor.p, mass_p, variant, &self.solver),
            || project(&predictor.n, mass_n, variant, &self.solver),
        );
        Ok((p?, n?))
    }

    /// Zero-mean `φ` with `-Δ_h φ = p - n (+ ρ)`.
    pub fn update_potential(&self, p: &Field, n: &Field) -> Result<PoissonSolution> {
        let mut rhs = p.lin_comb(1.0, n, -1.0)?;
        if let Some(rho) = &self.config.fixed_charge {
            rhs = &rhs + rho;
        }
        self.solver.solve(&rhs)
    }

    pub fn first_step(&self, state: &mut SimulationState) -> Result<()> {
        if state.k != 0 {
            return Err(PnpError::InvalidParameter(format!(
                "first step requested at step index {}",
                state.k
            )));
        }
        let predictor = self.predict_first(state)?;
        self.finish_step(state, &predictor)
    }

    pub fn cn_ab_step(&self, state: &mut SimulationState) -> Result<()> {
        if state.k == 0 {
            return Err(PnpError::InvalidParameter(
                "Crank-Nicolson step needs a previous level; take the first step first".into(),
            ));
        }
        let predictor = self.predict_cn(state)?;
        self.finish_step(state, &predictor)
    }

    /// One step of whichever kind the step index calls for.
    pub fn advance(&self, state: &mut SimulationState) -> Result<()> {
        if state.k == 0 {
            self.first_step(state)
        } else {
            self.cn_ab_step(state)
        }
    }

    fn finish_step(&self, state: &mut SimulationState, predictor: &Predictor) -> Result<()> {
        let (rp, rn) = self.correct(predictor, state.mass_p, state.mass_n)?;
        let potential = self.update_potential(&rp.corrected, &rn.corrected)?;
        state.projection_p = ProjectionStats::from(&rp);
        state.projection_n = ProjectionStats::from(&rn);
        state.p_prev = std::mem::replace(&mut state.p, rp.corrected);
        state.n_prev = std::mem::replace(&mut state.n, rn.corrected);
        state.phi_prev = std::mem::replace(&mut state.phi, potential.phi);
        state.rhs_mean_defect = potential.rhs_mean;
        state.k += 1;
        state.t = state.k as f64 * self.config.tau;
        Ok(())
    }

    /// Advance to `t_final`, calling `observer` after every step. A failing
    /// step aborts the run with its index.
    pub fn run<F>(&self, mut state: SimulationState, mut observer: F) -> Result<SimulationState>
    where
        F: FnMut(&SimulationState, &DiagnosticsRecord) -> Result<()>,
    {
        let steps = self.config.steps()?;
        let h = self.grid.h_max();
        if self.config.tau > self.config.cfl_ratio_warn * h {
            log::warn!(
                "time step {} exceeds {} x mesh size {}",
                self.config.tau,
                self.config.cfl_ratio_warn,
                h
            );
        }
        while state.k < steps {
            let step = state.k + 1;
            self.advance(&mut state).map_err(|e| PnpError::StepFailed {
                step,
                source: Box::new(e),
            })?;
            let record = state.record()?;
            observer(&state, &record)?;
        }
        Ok(state)
    }
}

fn clean_initial(u: &Field, name: &str) -> Result<Field> {
    let lowest = u.min();
    if lowest < -INITIAL_NEGATIVE_TOL {
        return Err(PnpError::InvalidInitialData(format!(
            "initial {name} has negative value {lowest}"
        )));
    }
    let cleaned = u.map(|v| v.max(0.0));
    let mass = cleaned.integral();
    if mass.is_nan() || mass <= 0.0 {
        return Err(PnpError::InvalidInitialData(format!(
            "initial {name} has nonpositive discrete mass {mass}"
        )));
    }
    Ok(cleaned)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ops::{mean, norm_linf};
    use crate::grid::Boundary;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn periodic(n: usize) -> Grid {
        Grid::cube(2, 0.0, 1.0, n, Boundary::Periodic).unwrap()
    }

    #[test]
    fn config_validation() {
        assert_eq!(
            SchemeConfig::new(0.1, 1.0, ProjectionVariant::l2()).steps().unwrap(),
            10
        );
        assert_eq!(
            SchemeConfig::new(1.0 / 16.0, 1.0, ProjectionVariant::l2())
                .steps()
                .unwrap(),
            16
        );
        assert_eq!(
            SchemeConfig::new(0.02, 0.02, ProjectionVariant::l2()).steps().unwrap(),
            1
        );
        assert!(SchemeConfig::new(0.3, 1.0, ProjectionVariant::l2()).validate().is_err());
        assert!(SchemeConfig::new(0.0, 1.0, ProjectionVariant::l2()).validate().is_err());
        assert!(SchemeConfig::new(0.2, 0.1, ProjectionVariant::l2()).validate().is_err());
    }

    #[test]
    fn initialization_rescales_to_the_larger_mass() {
        let g = periodic(8);
        let cfg = SchemeConfig::new(0.1, 1.0, ProjectionVariant::l2());
        let stepper = Stepper::new(&g, cfg).unwrap();
        let s = stepper.initialize_with(|_| 0.9, |_| 1.0).unwrap();
        assert_eq!(s.mass_p, 1.0);
        assert_eq!(s.mass_n, 1.0);
        assert!((s.p.integral() - 1.0).abs() < 1e-15);
        assert!(norm_linf(&s.p.map(|v| v - 1.0)) < 1e-14);
        assert_eq!(s.p_prev, s.p);
        assert_eq!(s.phi_prev, s.phi);

        let equal = stepper.initialize_with(|x| 1.0 + x[0], |x| 1.0 + x[0]).unwrap();
        assert_eq!(norm_linf(&equal.phi), 0.0);
    }

    #[test]
    fn initialization_rejects_bad_data() {
        let g = periodic(8);
        let stepper = Stepper::new(&g, SchemeConfig::new(0.1, 1.0, ProjectionVariant::l2())).unwrap();
        assert!(matches!(
            stepper.initialize_with(|x| x[0] - 0.5, |_| 1.0),
            Err(PnpError::InvalidInitialData(_))
        ));
        assert!(matches!(
            stepper.initialize_with(|_| 1.0, |_| 0.0),
            Err(PnpError::InvalidInitialData(_))
        ));
        let s = stepper.initialize_with(|_| -1e-15, |_| 1.0);
        assert!(matches!(s, Err(PnpError::InvalidInitialData(_))));
        let s = stepper
            .initialize_with(|x| if x[0] < 0.5 { -1e-15 } else { 1.0 }, |_| 1.0)
            .unwrap();
        assert!(s.p.min() >= 0.0);
    }

    #[test]
    fn fixed_charge_alone_sets_the_initial_potential() {
        let g = Grid::cube(3, -1.0, 1.0, 8, Boundary::Periodic).unwrap();
        let rho = Field::from_fn(&g, |x| (std::f64::consts::PI * x[0]).sin() * x[1].cos());
        let cfg = SchemeConfig::new(0.02, 1.0, ProjectionVariant::l2()).with_fixed_charge(rho.clone());
        let stepper = Stepper::new(&g, cfg).unwrap();
        let s = stepper.initialize_with(|_| 0.1, |_| 0.1).unwrap();
        assert_eq!(s.p, Field::constant(&g, 0.1));
        let expected = PoissonSolver::new(&g).solve(&rho).unwrap().phi;
        assert!(norm_linf(&(&s.phi - &expected)) < 1e-15);
    }

    #[test]
    fn neutral_constant_state_is_a_fixed_point() {
        for variant in [ProjectionVariant::l2(), ProjectionVariant::h1()] {
            let g = periodic(8);
            let tau = 0.01;
            let stepper = Stepper::new(&g, SchemeConfig::new(tau, 100.0 * tau, variant)).unwrap();
            let init = stepper.initialize_with(|_| 0.7, |_| 0.7).unwrap();
            let first = init.record().unwrap();
            let mut records = Vec::new();
            let end = stepper
                .run(init.clone(), |_, r| {
                    records.push(r.clone());
                    Ok(())
                })
                .unwrap();
            assert_eq!(records.len(), 100);
            assert_eq!(end.k, 100);
            assert!(norm_linf(&(&end.p - &init.p)) < 1e-13);
            assert!(norm_linf(&(&end.n - &init.n)) < 1e-13);
            assert!(norm_linf(&end.phi) < 1e-13);
            for r in &records {
                assert!((r.mass_p - first.mass_p).abs() < 1e-13);
                assert!((r.energy_total - first.energy_total).abs() < 1e-13);
                assert!(r.xi.abs() < 1e-13 && r.gamma.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn single_step_horizon_takes_only_the_first_step() {
        let g = periodic(8);
        let stepper = Stepper::new(&g, SchemeConfig::new(0.05, 0.05, ProjectionVariant::l2())).unwrap();
        let s = stepper
            .initialize_with(|x| 1.0 + 0.5 * (6.0 * x[0]).sin(), |_| 1.0)
            .unwrap();
        let mut calls = 0;
        let end = stepper
            .run(s.clone(), |_, _| {
                calls += 1;
                Ok(())
            })
            .unwrap();
        assert_eq!(calls, 1);
        let mut manual = s;
        stepper.first_step(&mut manual).unwrap();
        assert_eq!(end, manual);
        assert!(stepper.first_step(&mut manual).is_err());
    }

    #[test]
    fn predictor_conserves_mass_and_steps_keep_invariants() {
        for bc in [Boundary::Periodic, Boundary::Neumann] {
            let g = Grid::cube(2, 0.0, 1.0, 16, bc).unwrap();
            let tau = 0.01;
            let stepper = Stepper::new(&g, SchemeConfig::new(tau, 0.2, ProjectionVariant::l2())).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let p0 = Field::from_fn(&g, |_| rng.gen_range(0.0..1.0));
            let n0 = Field::from_fn(&g, |x| if x[0] < 0.5 { 1.0 } else { 0.0 });
            let mut s = stepper.initialize(&p0, &n0).unwrap();
            for _ in 0..20 {
                let pred = if s.k == 0 {
                    stepper.predict_first(&s)
                } else {
                    stepper.predict_cn(&s)
                }
                .unwrap();
                assert!((pred.p.integral() - s.p.integral()).abs() <= 1e-11 * s.mass_p);
                assert!((pred.n.integral() - s.n.integral()).abs() <= 1e-11 * s.mass_n);
                stepper.advance(&mut s).unwrap();
                assert!(s.p.min() >= 0.0 && s.n.min() >= 0.0);
                assert!((s.p.integral() - s.mass_p).abs() <= 1e-11 * s.mass_p);
                assert!((s.n.integral() - s.mass_n).abs() <= 1e-11 * s.mass_n);
                assert!(mean(&s.phi).abs() <= 1e-12);
                assert!(s.projection_p.multiplier >= -1e-12);
                assert!(s.projection_n.multiplier >= -1e-12);
            }
        }
    }

    #[test]
    fn failures_report_the_step() {
        let variant = ProjectionVariant::H1(crate::projection::H1Settings {
            max_newton: 1,
            max_inner: 1,
            ..Default::default()
        });
        let g = Grid::cube(2, 0.0, 1.0, 16, Boundary::Periodic).unwrap();
        let stepper = Stepper::new(&g, SchemeConfig::new(0.01, 1.0, variant)).unwrap();
        // a lone spike drags its neighbours negative through the explicit drift
        let spike = |x: &[f64; 3]| if x[0] == 0.0 && x[1] == 0.0 { 500.0 } else { 0.0 };
        let s = stepper.initialize_with(spike, |_| 1.0).unwrap();
        assert!(stepper.predict_first(&s).unwrap().p.min() < 0.0);
        match stepper.run(s, |_, _| Ok(())) {
            Err(PnpError::StepFailed { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected a step failure, got {other:?}"),
        }
    }
}
