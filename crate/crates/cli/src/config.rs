//! Experiment configuration documents.
//!
//! A document names a preset and may override any of its parameters:
//!
//! ```json
//! {
//!   "preset": "example2_neumann",
//!   "grid": { "nodes": 64 },
//!   "scheme": { "tau": 0.02, "t_final": 0.2, "projection": "h1" },
//!   "snapshots": [0.0, 0.04, 0.2]
//! }
//! ```
//!
//! Parsing fills every omitted value, so serializing a parsed config gives
//! its canonical form, which parses back to the same config.

use std::path::PathBuf;

use pnp_core::experiments::{Experiment, Preset, Refinement, StudySpec};
use pnp_core::projection::H1Settings;
use pnp_core::{Boundary, Field, Grid, ProjectionVariant, RootMethod, SchemeConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Relative tolerance for "T is an integer multiple of τ" and similar checks.
const DIVISIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config is not valid JSON: {0}")]
    Syntax(String),
    #[error("config does not match the schema: {0}")]
    Schema(String),
    #[error("bad override `{spec}`: {reason}")]
    Override { spec: String, reason: String },
    #[error("{} violation(s): {}", .0.len(), .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PresetName {
    #[serde(rename = "example1_cnfdp")]
    Example1Cnfdp,
    #[serde(rename = "example1_cnfdp2")]
    Example1Cnfdp2,
    #[serde(rename = "example2_neumann")]
    Example2Neumann,
    #[serde(rename = "example3_fixed_charge_3d")]
    Example3FixedCharge3d,
    #[serde(rename = "custom")]
    Custom,
}

impl PresetName {
    pub fn preset(self) -> Option<Preset> {
        match self {
            PresetName::Example1Cnfdp => Some(Preset::Example1Cnfdp),
            PresetName::Example1Cnfdp2 => Some(Preset::Example1Cnfdp2),
            PresetName::Example2Neumann => Some(Preset::Example2Neumann),
            PresetName::Example3FixedCharge3d => Some(Preset::Example3FixedCharge3d),
            PresetName::Custom => None,
        }
    }

    pub fn name(self) -> &'static str {
        self.preset().map_or("custom", Preset::name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryName {
    Periodic,
    Neumann,
}

impl From<BoundaryName> for Boundary {
    fn from(b: BoundaryName) -> Self {
        match b {
            BoundaryName::Periodic => Boundary::Periodic,
            BoundaryName::Neumann => Boundary::Neumann,
        }
    }
}

impl From<Boundary> for BoundaryName {
    fn from(b: Boundary) -> Self {
        match b {
            Boundary::Periodic => BoundaryName::Periodic,
            Boundary::Neumann => BoundaryName::Neumann,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionKind {
    L2,
    H1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RootName {
    Newton,
    Secant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefineKind {
    Temporal,
    Spatial,
}

/// Cube `[lower, upper]^dim` with `nodes` points per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub lower: f64,
    pub upper: f64,
    pub nodes: usize,
    pub boundary: BoundaryName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub tau: f64,
    pub t_final: f64,
    pub projection: ProjectionKind,
    /// Scalar root finder of the `L²` projection.
    pub root_method: RootName,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub inner_tol: f64,
    pub max_inner: usize,
}

/// Constant initial densities of a custom run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub p: f64,
    pub n: f64,
}

/// Temporal studies refine `τ` at the configured grid; spatial studies refine
/// `h` at the configured `τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub refine: RefineKind,
    pub levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: PresetName,
    pub grid: GridSpec,
    pub scheme: SchemeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyConfig>,
    pub snapshots: Vec<f64>,
    pub output_dir: PathBuf,
}

// Input documents: everything but the preset may be omitted.

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    dim: Option<usize>,
    lower: Option<f64>,
    upper: Option<f64>,
    nodes: Option<usize>,
    boundary: Option<BoundaryName>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheme {
    tau: Option<f64>,
    t_final: Option<f64>,
    projection: Option<ProjectionKind>,
    root_method: Option<RootName>,
    newton_tol: Option<f64>,
    max_newton: Option<usize>,
    inner_tol: Option<f64>,
    max_inner: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: PresetName,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    scheme: RawScheme,
    initial: Option<InitialSpec>,
    study: Option<StudyConfig>,
    snapshots: Option<Vec<f64>>,
    output_dir: Option<PathBuf>,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    parse_config_with(text, &[])
}

/// Parse after applying `key.path=value` overrides to the document.
pub fn parse_config_with(text: &str, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    for spec in overrides {
        apply_override(&mut doc, spec)?;
    }
    let raw: RawConfig = serde_json::from_value(doc).map_err(|e| ConfigError::Schema(e.to_string()))?;
    resolve(raw)
}

/// Set `a.b.c` in `doc`. The value is read as JSON when it parses, else as a string.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<(), ConfigError> {
    let fail = |reason: &str| ConfigError::Override {
        spec: spec.to_string(),
        reason: reason.to_string(),
    };
    let (path, raw_value) = spec.split_once('=').ok_or_else(|| fail("expected KEY=VALUE"))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(fail("empty key"));
    }
    let value = serde_json::from_str(raw_value).unwrap_or_else(|_| Value::String(raw_value.to_string()));
    let mut node = doc;
    for (i, key) in keys.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| fail(&format!("`{}` is not an object", keys[..i].join("."))))?;
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("keys is non-empty")
}

fn is_multiple(total: f64, step: f64) -> bool {
    let ratio = total / step;
    ratio.round() >= 1.0 && (ratio - ratio.round()).abs() <= DIVISIBILITY_TOL * ratio.max(1.0)
}

fn resolve(raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
    let mut v = Vec::new();
    let preset = raw.preset.preset();
    let h1 = H1Settings::default();

    let grid = match preset {
        Some(p) => {
            let (dim, lower, upper, bc) = p.domain();
            let fixed = [
                ("grid.dim", raw.grid.dim.map(|d| d as f64), dim as f64),
                ("grid.lower", raw.grid.lower, lower),
                ("grid.upper", raw.grid.upper, upper),
            ];
            for (key, given, expected) in fixed {
                if given.is_some_and(|g| g != expected) {
                    v.push(format!("{key} is fixed to {expected} by preset {}", p.name()));
                }
            }
            if raw.grid.boundary.is_some_and(|b| Boundary::from(b) != bc) {
                v.push(format!(
                    "grid.boundary is fixed to {} by preset {}",
                    bc.name(),
                    p.name()
                ));
            }
            GridSpec {
                dim,
                lower,
                upper,
                nodes: raw.grid.nodes.unwrap_or(p.defaults().0),
                boundary: bc.into(),
            }
        }
        None => {
            let mut need = |key: &str, present: bool| {
                if !present {
                    v.push(format!("{key} is required for a custom run"));
                }
            };
            need("grid.dim", raw.grid.dim.is_some());
            need("grid.lower", raw.grid.lower.is_some());
            need("grid.upper", raw.grid.upper.is_some());
            need("grid.nodes", raw.grid.nodes.is_some());
            need("grid.boundary", raw.grid.boundary.is_some());
            need("scheme.tau", raw.scheme.tau.is_some());
            need("scheme.t_final", raw.scheme.t_final.is_some());
            need("initial", raw.initial.is_some());
            GridSpec {
                dim: raw.grid.dim.unwrap_or(2),
                lower: raw.grid.lower.unwrap_or(0.0),
                upper: raw.grid.upper.unwrap_or(1.0),
                nodes: raw.grid.nodes.unwrap_or(2),
                boundary: raw.grid.boundary.unwrap_or(BoundaryName::Periodic),
            }
        }
    };
    let (tau0, t0) = preset.map_or((1.0, 1.0), |p| (p.defaults().1, p.defaults().2));
    let default_projection = match preset.map(Preset::default_variant) {
        Some(ProjectionVariant::H1(_)) => ProjectionKind::H1,
        _ => ProjectionKind::L2,
    };
    let scheme = SchemeSpec {
        tau: raw.scheme.tau.unwrap_or(tau0),
        t_final: raw.scheme.t_final.unwrap_or(t0),
        projection: raw.scheme.projection.unwrap_or(default_projection),
        root_method: raw.scheme.root_method.unwrap_or(RootName::Newton),
        newton_tol: raw.scheme.newton_tol.unwrap_or(h1.newton_tol),
        max_newton: raw.scheme.max_newton.unwrap_or(h1.max_newton),
        inner_tol: raw.scheme.inner_tol.unwrap_or(h1.inner_tol),
        max_inner: raw.scheme.max_inner.unwrap_or(h1.max_inner),
    };
    let explicit_snapshots = raw.snapshots.is_some();
    let mut snapshots = raw
        .snapshots
        .unwrap_or_else(|| preset.map(Preset::snapshot_times).unwrap_or_default());
    if !explicit_snapshots {
        snapshots.retain(|&t| t <= scheme.t_final);
    }

    if !(1..=3).contains(&grid.dim) {
        v.push(format!("grid.dim must be 1, 2 or 3, got {}", grid.dim));
    }
    if !(grid.lower.is_finite() && grid.upper.is_finite() && grid.lower < grid.upper) {
        v.push(format!(
            "grid.lower ({}) must be below grid.upper ({})",
            grid.lower, grid.upper
        ));
    }
    if grid.nodes < 2 {
        v.push(format!("grid.nodes must be at least 2, got {}", grid.nodes));
    }
    if grid.boundary == BoundaryName::Neumann && grid.dim != 2 {
        v.push(format!("neumann boundaries need grid.dim = 2, got {}", grid.dim));
    }
    let tau_ok = scheme.tau.is_finite() && scheme.tau > 0.0;
    let t_ok = scheme.t_final.is_finite() && scheme.t_final > 0.0;
    if !tau_ok {
        v.push(format!("scheme.tau must be positive, got {}", scheme.tau));
    }
    if !t_ok {
        v.push(format!("scheme.t_final must be positive, got {}", scheme.t_final));
    }
    if tau_ok && t_ok && !is_multiple(scheme.t_final, scheme.tau) {
        v.push(format!(
            "scheme.t_final ({}) is not an integer multiple of scheme.tau ({})",
            scheme.t_final, scheme.tau
        ));
    }
    for (key, tol) in [
        ("scheme.newton_tol", scheme.newton_tol),
        ("scheme.inner_tol", scheme.inner_tol),
    ] {
        if !(tol.is_finite() && tol > 0.0) {
            v.push(format!("{key} must be positive, got {tol}"));
        }
    }
    for (key, cap) in [
        ("scheme.max_newton", scheme.max_newton),
        ("scheme.max_inner", scheme.max_inner),
    ] {
        if cap == 0 {
            v.push(format!("{key} must be at least 1"));
        }
    }
    match (&raw.initial, preset) {
        (Some(_), Some(p)) => v.push(format!("initial is fixed by preset {}", p.name())),
        (Some(init), None) => {
            for (key, c) in [("initial.p", init.p), ("initial.n", init.n)] {
                if !(c.is_finite() && c > 0.0) {
                    v.push(format!("{key} must be positive, got {c}"));
                }
            }
        }
        _ => {}
    }
    for &t in &snapshots {
        if !(t.is_finite() && (0.0..=scheme.t_final).contains(&t)) {
            v.push(format!("snapshot time {t} lies outside [0, {}]", scheme.t_final));
        }
    }
    if let Some(study) = &raw.study {
        if !preset.is_some_and(Preset::has_exact_solution) {
            v.push(format!(
                "study needs a preset with an exact solution, not {}",
                raw.preset.name()
            ));
        }
        if study.levels.is_empty() {
            v.push("study.levels must not be empty".into());
        }
        let length = grid.upper - grid.lower;
        for &level in &study.levels {
            if !(level.is_finite() && level > 0.0) {
                v.push(format!("study level {level} must be positive"));
                continue;
            }
            match study.refine {
                RefineKind::Temporal if t_ok && !is_multiple(scheme.t_final, level) => v.push(format!(
                    "scheme.t_final ({}) is not an integer multiple of study level tau ({level})",
                    scheme.t_final
                )),
                RefineKind::Spatial if !is_multiple(length, level) || length / level < 1.5 => v.push(format!(
                    "study level h ({level}) does not divide the domain length ({length})"
                )),
                _ => {}
            }
        }
    }

    if !v.is_empty() {
        return Err(ConfigError::Invalid(v));
    }
    Ok(ExperimentConfig {
        preset: raw.preset,
        grid,
        scheme,
        initial: raw.initial,
        study: raw.study,
        snapshots,
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
    })
}

impl ExperimentConfig {
    /// Canonical JSON form.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn variant(&self) -> ProjectionVariant {
        match self.scheme.projection {
            ProjectionKind::L2 => ProjectionVariant::L2 {
                root_method: match self.scheme.root_method {
                    RootName::Newton => RootMethod::SemiSmoothNewton,
                    RootName::Secant => RootMethod::Secant,
                },
            },
            ProjectionKind::H1 => ProjectionVariant::H1(H1Settings {
                newton_tol: self.scheme.newton_tol,
                max_newton: self.scheme.max_newton,
                inner_tol: self.scheme.inner_tol,
                max_inner: self.scheme.max_inner,
            }),
        }
    }

    pub fn experiment(&self) -> pnp_core::Result<Experiment> {
        let s = &self.scheme;
        match self.preset.preset() {
            Some(p) => p.experiment(self.grid.nodes, s.tau, s.t_final, self.variant()),
            None => {
                let g = &self.grid;
                let grid = Grid::cube(g.dim, g.lower, g.upper, g.nodes, g.boundary.into())?;
                let init = self.initial.as_ref().expect("validated custom config has initial data");
                Ok(Experiment {
                    initial_p: Field::constant(&grid, init.p),
                    initial_n: Field::constant(&grid, init.n),
                    config: SchemeConfig::new(s.tau, s.t_final, self.variant()),
                    exact: None,
                    grid,
                })
            }
        }
    }

    pub fn study_spec(&self) -> Option<StudySpec> {
        let study = self.study.as_ref()?;
        Some(StudySpec {
            preset: self.preset.preset()?,
            variant: self.variant(),
            refine: match study.refine {
                RefineKind::Temporal => Refinement::Temporal,
                RefineKind::Spatial => Refinement::Spatial,
            },
            levels: study.levels.clone(),
            fixed_nodes: self.grid.nodes,
            fixed_tau: self.scheme.tau,
            t_final: self.scheme.t_final,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_only_document_is_fully_defaulted() {
        let cfg = parse_config(r#"{"preset": "example2_neumann"}"#).unwrap();
        assert_eq!(cfg.grid.nodes, 128);
        assert_eq!(cfg.grid.boundary, BoundaryName::Neumann);
        assert_eq!((cfg.grid.lower, cfg.grid.upper), (-2.0, 2.0));
        assert_eq!(cfg.scheme.tau, 4.0 / 200.0);
        assert_eq!(cfg.scheme.projection, ProjectionKind::L2);
        assert_eq!(cfg.snapshots, vec![0.0, 0.04, 0.2, 1.0]);
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
        let cfg = parse_config(r#"{"preset": "example1_cnfdp2"}"#).unwrap();
        assert_eq!(cfg.scheme.projection, ProjectionKind::H1);
        assert_eq!((cfg.grid.nodes, cfg.scheme.t_final), (512, 2.0));
    }

    #[test]
    fn tau_not_dividing_t_names_both() {
        let err = parse_config(r#"{"preset": "example1_cnfdp", "scheme": {"tau": 0.3, "t_final": 1.0}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("0.3") && msg.contains('1'), "{msg}");
    }

    #[test]
    fn all_violations_are_reported() {
        let err = parse_config(
            r#"{"preset": "custom", "grid": {"dim": 3, "lower": 1, "upper": 0, "nodes": 1, "boundary": "neumann"}}"#,
        )
        .unwrap_err();
        let ConfigError::Invalid(v) = err else { panic!("{err}") };
        assert!(v.len() >= 6, "{v:?}");
        assert!(v.iter().any(|m| m.contains("scheme.tau")));
        assert!(v.iter().any(|m| m.contains("initial")));
        assert!(v.iter().any(|m| m.contains("neumann")));
    }

    #[test]
    fn unknown_keys_and_types_are_rejected() {
        assert!(matches!(
            parse_config(r#"{"preset": "example1_cnfdp", "grid": {"node": 64}}"#),
            Err(ConfigError::Schema(_))
        ));
        assert!(matches!(
            parse_config(r#"{"preset": "example1_cnfdp", "scheme": {"tau": "fast"}}"#),
            Err(ConfigError::Schema(_))
        ));
        assert!(matches!(
            parse_config(r#"{"preset": "example9"}"#),
            Err(ConfigError::Schema(_))
        ));
        assert!(matches!(parse_config("{"), Err(ConfigError::Syntax(_))));
    }

    #[test]
    fn presets_pin_their_domain() {
        let err =
            parse_config(r#"{"preset": "example2_neumann", "grid": {"boundary": "periodic", "dim": 3}}"#).unwrap_err();
        let ConfigError::Invalid(v) = err else { panic!() };
        assert_eq!(v.len(), 2, "{v:?}");
    }

    #[test]
    fn overrides_edit_nested_keys() {
        let cfg = parse_config_with(
            r#"{"preset": "example1_cnfdp"}"#,
            &[
                "grid.nodes=64".into(),
                "scheme.projection=h1".into(),
                "output_dir=runs/a".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.grid.nodes, 64);
        assert_eq!(cfg.scheme.projection, ProjectionKind::H1);
        assert_eq!(cfg.output_dir, PathBuf::from("runs/a"));
        assert!(matches!(
            parse_config_with(r#"{"preset": "example1_cnfdp"}"#, &["grid.nodes".into()]),
            Err(ConfigError::Override { .. })
        ));
        assert!(matches!(
            parse_config_with(
                r#"{"preset": "example1_cnfdp", "output_dir": "x"}"#,
                &["output_dir.a=1".into()]
            ),
            Err(ConfigError::Override { .. })
        ));
    }

    #[test]
    fn default_snapshots_are_clipped_to_the_horizon() {
        let cfg = parse_config(r#"{"preset": "example3_fixed_charge_3d", "scheme": {"t_final": 0.1}}"#).unwrap();
        assert_eq!(cfg.snapshots, vec![0.0, 0.01, 0.05]);
        assert!(parse_config(
            r#"{"preset": "example3_fixed_charge_3d", "scheme": {"t_final": 0.1}, "snapshots": [2.0]}"#
        )
        .is_err());
    }

    #[test]
    fn studies_need_exact_solutions_and_valid_levels() {
        assert!(
            parse_config(r#"{"preset": "example2_neumann", "study": {"refine": "temporal", "levels": [0.1]}}"#)
                .is_err()
        );
        let err =
            parse_config(r#"{"preset": "example1_cnfdp", "study": {"refine": "spatial", "levels": [0.3, 0.0625]}}"#)
                .unwrap_err();
        assert!(err.to_string().contains("0.3"));
        let cfg = parse_config(
            r#"{"preset": "example1_cnfdp", "scheme": {"t_final": 1}, "study": {"refine": "temporal", "levels": [0.25, 0.125]}}"#,
        )
        .unwrap();
        let spec = cfg.study_spec().unwrap();
        assert_eq!(spec.fixed_nodes, 512);
        assert_eq!(spec.refine, Refinement::Temporal);
    }

    #[test]
    fn custom_runs_build_constant_data() {
        let cfg = parse_config(
            r#"{"preset": "custom", "grid": {"dim": 2, "lower": 0, "upper": 1, "nodes": 8, "boundary": "periodic"},
                "scheme": {"tau": 0.1, "t_final": 0.5}, "initial": {"p": 0.3, "n": 0.3}}"#,
        )
        .unwrap();
        let ex = cfg.experiment().unwrap();
        assert_eq!(ex.initial_p.max(), 0.3);
        assert!(ex.exact.is_none());
        assert!(cfg.study_spec().is_none());
    }
}
