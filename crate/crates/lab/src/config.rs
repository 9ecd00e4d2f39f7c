//! Strict TOML experiment configuration. Sections and keys other than
//! `[experiment]` may be omitted and take the built-in value; unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SquareSanity,
    CuspHardy,
    CuspHeatkernel,
    ManifoldBreakdown,
    ManifoldHardy,
    BallVolume,
    InequalitySuite,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::SquareSanity => "square-sanity",
            Self::CuspHardy => "cusp-hardy",
            Self::CuspHeatkernel => "cusp-heatkernel",
            Self::ManifoldBreakdown => "manifold-breakdown",
            Self::ManifoldHardy => "manifold-hardy",
            Self::BallVolume => "ball-volume",
            Self::InequalitySuite => "inequality-suite",
        }
    }
}

/// A scalar or a list of scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::One(x) => vec![*x],
            Self::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    /// Modulus constant of the canonical profile.
    #[serde(rename = "A")]
    pub a: f64,
    pub alpha: f64,
    pub beta: f64,
    pub w_min: OneOrMany,
    pub h0: OneOrMany,
    pub ratio: f64,
    /// Flat ceiling of the cusp domain; `0` disables it.
    pub cap: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self { a: 1.0, alpha: 2.0, beta: 0.75, w_min: OneOrMany::One(1e-3), h0: OneOrMany::One(0.05), ratio: 0.5, cap: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub alpha: OneOrMany,
    pub n_mode: Vec<u32>,
    pub u_max: Vec<f64>,
    /// Radial grid size; absent means 2000 nodes per decade of u.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<usize>,
    /// Ball radii for the ball-volume experiment.
    pub eps: Vec<f64>,
    /// Exponents of the endpoint classification stage of manifold-breakdown.
    pub endpoint_alpha: Vec<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { alpha: OneOrMany::One(1.0), n_mode: vec![0, 1, 2], u_max: vec![1e3, 1e4, 1e5, 1e6], n_grid: None, eps: vec![0.5, 0.1, 0.05], endpoint_alpha: vec![1.0, 2.0, 3.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub k: usize,
    pub tol: f64,
    pub seed: u64,
    pub cache: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { k: 11, tol: 1e-9, seed: 1, cache: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatSection {
    pub t_grid: Vec<f64>,
    /// Node sample stride for the kernel supremum (1 = every node).
    pub node_stride: usize,
}

impl Default for HeatSection {
    fn default() -> Self {
        Self { t_grid: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0], node_stride: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardySection {
    /// Exponent expected to lose the inequality; probed with test functions
    /// supported near the tip.
    pub collapse_exponent: f64,
    pub support_radius: f64,
}

impl Default for HardySection {
    fn default() -> Self {
        Self { collapse_exponent: 10.0, support_radius: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InequalitySection {
    pub eps_grid: Vec<f64>,
    /// Weight of the |log d| correction in the β variant of the deficit.
    pub b0: f64,
    /// Mesh size of the unit-square runs.
    pub square_h0: f64,
    /// Also build deficit curves on the cusp domain of `[geometry]`.
    pub cusp: bool,
}

impl Default for InequalitySection {
    fn default() -> Self {
        Self { eps_grid: (0..13).map(|i| 10f64.powf(1.0 - 0.25 * i as f64)).collect(), b0: 1.0, square_h0: 1.0 / 32.0, cusp: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub heat: HeatSection,
    #[serde(default)]
    pub hardy: HardySection,
    #[serde(default)]
    pub inequality: InequalitySection,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn require(ok: bool, msg: impl FnOnce() -> String) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError(msg()))
    }
}

fn positive(name: &str, v: &[f64]) -> Result<(), ConfigError> {
    require(!v.is_empty() && v.iter().all(|x| *x > 0.0 && x.is_finite()), || {
        format!("{name} must be a nonempty list of positive finite numbers")
    })
}

fn increasing(name: &str, v: &[f64]) -> Result<(), ConfigError> {
    require(v.windows(2).all(|w| w[1] > w[0]), || format!("{name} must be strictly increasing"))
}

impl ExperimentConfig {
    /// Parses and validates. Unknown keys and out-of-range values are errors
    /// naming the offending key.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Built-in configuration for one experiment kind.
    pub fn defaults(kind: ExperimentKind, output_dir: PathBuf) -> Self {
        let mut c = Self {
            experiment: ExperimentSection { kind, output_dir },
            geometry: GeometrySection::default(),
            model: ModelSection::default(),
            solver: SolverSection::default(),
            heat: HeatSection::default(),
            hardy: HardySection::default(),
            inequality: InequalitySection::default(),
        };
        match kind {
            ExperimentKind::SquareSanity => c.geometry.h0 = OneOrMany::One(1.0 / 64.0),
            ExperimentKind::CuspHardy => {
                c.geometry.h0 = OneOrMany::Many(vec![0.1, 0.07, 0.05]);
                c.geometry.w_min = OneOrMany::Many(vec![1e-2, 1e-3, 1e-4]);
                c.solver.tol = 1e-8;
            }
            ExperimentKind::CuspHeatkernel => {
                c.solver.k = 200;
                c.solver.tol = 1e-8;
            }
            ExperimentKind::ManifoldBreakdown => {
                c.model.alpha = OneOrMany::Many(vec![1.0, 2.0]);
                c.solver.k = 5;
                c.solver.tol = 1e-7;
            }
            ExperimentKind::ManifoldHardy => {
                c.model.alpha = OneOrMany::Many(vec![1.0, 1.5, 2.0, 3.0]);
                c.model.u_max = vec![1e3, 1e4, 1e5];
                c.solver.tol = 1e-8;
            }
            ExperimentKind::BallVolume => c.model.alpha = OneOrMany::One(4.0),
            ExperimentKind::InequalitySuite => {
                c.solver.k = 10;
                c.solver.tol = 1e-8;
            }
        }
        c
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.geometry;
        require(g.a > 0.0 && g.a.is_finite(), || "geometry.A must be positive".into())?;
        require(g.alpha > 0.0 && g.alpha.is_finite(), || "geometry.alpha must be positive".into())?;
        require(g.beta > 0.0 && g.beta < 1.0, || "geometry.beta must lie in (0, 1)".into())?;
        positive("geometry.w_min", &g.w_min.values())?;
        positive("geometry.h0", &g.h0.values())?;
        require(g.ratio > 0.0 && g.ratio < 1.0, || "geometry.ratio must lie in (0, 1)".into())?;
        require(g.cap >= 0.0 && g.cap.is_finite(), || "geometry.cap must be ≥ 0".into())?;

        let m = &self.model;
        positive("model.alpha", &m.alpha.values())?;
        positive("model.u_max", &m.u_max)?;
        increasing("model.u_max", &m.u_max)?;
        require(m.u_max.iter().all(|u| *u > cusplab::manifold::U_MIN), || "model.u_max entries must exceed 2π".into())?;
        require(m.n_mode.len() <= 16, || "model.n_mode has too many entries".into())?;
        require(m.n_grid.is_none_or(|n| n >= 10), || "model.n_grid must be ≥ 10".into())?;
        positive("model.eps", &m.eps)?;
        positive("model.endpoint_alpha", &m.endpoint_alpha)?;
        let h = &self.hardy;
        require(h.collapse_exponent > 0.0 && h.collapse_exponent.is_finite(), || "hardy.collapse_exponent must be positive".into())?;
        require(h.support_radius > 0.0 && h.support_radius.is_finite(), || "hardy.support_radius must be positive".into())?;

        let s = &self.solver;
        require(s.k >= 1 && s.k <= 5000, || "solver.k must lie in [1, 5000]".into())?;
        require(s.tol > 0.0 && s.tol < 1e-2, || "solver.tol must lie in (0, 1e-2)".into())?;

        positive("heat.t_grid", &self.heat.t_grid)?;
        require(self.heat.node_stride >= 1, || "heat.node_stride must be ≥ 1".into())?;

        let q = &self.inequality;
        positive("inequality.eps_grid", &q.eps_grid)?;
        require(q.eps_grid.windows(2).all(|w| w[1] < w[0]), || "inequality.eps_grid must be strictly decreasing".into())?;
        require(q.b0 >= 0.0 && q.b0.is_finite(), || "inequality.b0 must be ≥ 0".into())?;
        require(q.square_h0 > 0.0 && q.square_h0 <= 0.5, || "inequality.square_h0 must lie in (0, 1/2]".into())?;

        match self.experiment.kind {
            ExperimentKind::ManifoldBreakdown => {
                let ok = m.alpha.values().iter().all(|&a| a == 1.0 || (a > 1.0 && a <= 2.0));
                require(ok, || "model.alpha must lie in {1} ∪ (1, 2] for manifold-breakdown".into())?;
                require(s.k >= 2, || "solver.k must be ≥ 2 for manifold-breakdown".into())?;
            }
            ExperimentKind::BallVolume => {
                require(m.alpha.values().iter().all(|&a| a > 2.0), || "model.alpha must exceed 2 for ball-volume".into())?;
            }
            ExperimentKind::SquareSanity => require(s.k >= 2, || "solver.k must be ≥ 2 for square-sanity".into())?,
            ExperimentKind::CuspHeatkernel => {
                require(g.alpha * g.beta > 1.0, || "geometry.alpha·beta must exceed 1".into())?;
                require(s.k >= 21, || "solver.k must be ≥ 21 for cusp-heatkernel".into())?;
            }
            ExperimentKind::InequalitySuite => {
                require(g.alpha * g.beta > 1.0, || "geometry.alpha·beta must exceed 1".into())?;
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ExperimentConfig::parse("[experiment]\nkind = \"ball-volume\"\noutput_dir = \"out\"\n[model]\nalpha = 4.0\nn_mode = []\nu_max = [1e3]\neps = [0.1]\n").unwrap();
        assert_eq!(c.experiment.kind, ExperimentKind::BallVolume);
        assert_eq!(c.solver, SolverSection::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let e = ExperimentConfig::parse("[experiment]\nkind = \"square-sanity\"\noutput_dir = \"o\"\ncolour = 3\n").unwrap_err();
        assert!(e.0.contains("colour"), "{e}");
        assert!(e.0.contains("line 4"), "{e}");
    }

    #[test]
    fn out_of_range_value_is_named() {
        let e = ExperimentConfig::parse("[experiment]\nkind = \"square-sanity\"\noutput_dir = \"o\"\n[solver]\nk = 0\ntol = 1e-9\nseed = 1\ncache = false\n").unwrap_err();
        assert!(e.0.contains("solver.k"), "{e}");
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        for kind in [ExperimentKind::SquareSanity, ExperimentKind::CuspHardy, ExperimentKind::InequalitySuite] {
            let c = ExperimentConfig::defaults(kind, "x".into());
            let text = toml::to_string(&c).unwrap();
            assert_eq!(ExperimentConfig::parse(&text).unwrap(), c);
        }
    }
}
