//! JSON analysis configuration.
//!
//! ```json
//! {
//!   "region": { "lo": 0.0, "hi": 3.5553480614894135 },
//!   "transform": "log",
//!   "signal": { "kind": "catalog", "kernel": { "family": "gaussian_signal_logscale", "kappa": 3.5 } },
//!   "mode": "with_background",
//!   "proposal": { "kind": "parametric", "family": "exponential_logscale",
//!                 "lower": [0.01], "upper": [10.0], "initial": [1.0] },
//!   "level": 0.05,
//!   "seed": 1
//! }
//! ```

use serde::{Deserialize, Serialize};

use crate::density::{make_bump_mixture, BumpParams, DensityModel, Kernel, SearchRegion};
use crate::error::{Error, Result};
use crate::parametric::{GradMode, ParametricProposal, ProposalFamily};
use crate::quadrature::QuadratureSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Identity,
    /// Natural log, e.g. energies in `[1, 35]` to `[0, ln 35]`.
    Log,
}

impl Transform {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    WithBackground,
    NoBackground,
    Lrt,
    Simulate,
    Sensitivity,
}

/// A density on the configured region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    Uniform,
    Catalog { kernel: Kernel },
    Mixture { parts: Vec<WeightedDensity> },
    /// `(1-2λ) base + λ φ(μ1, σ0) + λ φ(μ2, σ0)`.
    BumpMixture { base: Box<DensitySpec>, lambda: f64, bump: BumpParams },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDensity {
    pub weight: f64,
    pub density: DensitySpec,
}

impl DensitySpec {
    pub fn build(&self, region: SearchRegion, quad: QuadratureSpec) -> Result<DensityModel> {
        match self {
            DensitySpec::Uniform => Ok(DensityModel::uniform(region)),
            DensitySpec::Catalog { kernel } => DensityModel::catalog(*kernel, region, quad),
            DensitySpec::Mixture { parts } => DensityModel::mixture(
                parts
                    .iter()
                    .map(|p| Ok((p.weight, p.density.build(region, quad)?)))
                    .collect::<Result<Vec<_>>>()?,
            ),
            DensitySpec::BumpMixture { base, lambda, bump } => {
                make_bump_mixture(&base.build(region, quad)?, *lambda, bump.mu1, bump.mu2, bump.sigma0, region)
            }
        }
    }
}

/// A parametric family over a box; equal bounds freeze a coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub family: ProposalFamily,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub initial: Vec<f64>,
    #[serde(default = "analytic")]
    pub grad_mode: GradMode,
    #[serde(default)]
    pub fd_step: Option<f64>,
}

fn analytic() -> GradMode {
    GradMode::Analytic
}

impl FamilySpec {
    pub fn build(&self, region: SearchRegion, quad: QuadratureSpec) -> Result<ParametricProposal> {
        let mut p = ParametricProposal::new(
            self.family,
            region,
            self.lower.clone(),
            self.upper.clone(),
            self.initial.clone(),
        )?
        .with_grad_mode(self.grad_mode);
        p.quad = quad;
        if let Some(h) = self.fd_step {
            p = p.with_fd_step(h)?;
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProposalSpec {
    Fixed { density: DensitySpec },
    Parametric(FamilySpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoBackgroundBlock {
    pub q_family: FamilySpec,
    pub lambda_star: f64,
    pub bump: BumpParams,
    /// When set, the signal region carrying `1 - epsilon` of the signal is reported.
    #[serde(default)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityBlock {
    pub q_family: FamilySpec,
    pub lambdas: Vec<f64>,
    pub bump: BumpParams,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

fn default_grid_points() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method")]
pub enum MethodSpec {
    Z1 { proposal: DensitySpec },
    Z2 { family: FamilySpec },
    Z3 { q_family: FamilySpec, lambda: f64, bump: BumpParams },
    #[serde(rename = "LRT")]
    Lrt { g_tilde: DensitySpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub label: Option<String>,
    pub eta: f64,
    pub n: usize,
    #[serde(default)]
    pub m: Option<usize>,
    pub method: MethodSpec,
    /// Overrides the block-level replicate count.
    #[serde(default)]
    pub replicates: Option<usize>,
    /// Overrides the run seed for this scenario only.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    /// True background `f_b` of the generator.
    pub background: DensitySpec,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub scenarios: Vec<ScenarioSpec>,
    /// Write every replicate statistic to `statistics_<k>.txt`.
    #[serde(default)]
    pub spool_statistics: bool,
}

fn default_replicates() -> usize {
    10_000
}

fn default_level() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub region: SearchRegion,
    #[serde(default)]
    pub transform: Transform,
    pub signal: DensitySpec,
    pub mode: Mode,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub proposal: Option<ProposalSpec>,
    /// Known background used only for diagnostics (`δ̃` in lrt mode).
    #[serde(default)]
    pub reference_background: Option<DensitySpec>,
    #[serde(default)]
    pub no_background: Option<NoBackgroundBlock>,
    #[serde(default)]
    pub sensitivity: Option<SensitivityBlock>,
    #[serde(default)]
    pub simulate: Option<SimulateBlock>,
}

impl AnalysisConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks that the blocks required by the mode are present.
    pub fn validate(&self) -> Result<()> {
        SearchRegion::new(self.region.lo, self.region.hi)?;
        self.quadrature.validate()?;
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::ConfigError(format!("level {} outside (0, 1)", self.level)));
        }
        let missing = |block: &str| Err(Error::ConfigError(format!("mode {:?} needs a `{block}` block", self.mode)));
        match self.mode {
            Mode::WithBackground if self.proposal.is_none() => missing("proposal"),
            Mode::Lrt => match &self.proposal {
                Some(ProposalSpec::Fixed { .. }) => Ok(()),
                _ => Err(Error::ConfigError("mode lrt needs a fixed `proposal` (the working background)".into())),
            },
            Mode::NoBackground if self.no_background.is_none() => missing("no_background"),
            Mode::Sensitivity if self.sensitivity.is_none() => missing("sensitivity"),
            Mode::Simulate if self.simulate.is_none() => missing("simulate"),
            _ => Ok(()),
        }
    }

    pub fn search_region(&self) -> Result<SearchRegion> {
        SearchRegion::new(self.region.lo, self.region.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "region": {"lo": 1.0, "hi": 2.0},
        "signal": {"kind": "catalog", "kernel": {"family": "truncated_gaussian", "mean": 1.28, "sd": 0.02}},
        "mode": "with_background",
        "proposal": {"kind": "parametric", "family": "pareto1", "lower": [0.1], "upper": [12.0], "initial": [3.0]}
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = AnalysisConfig::from_json(BASE).unwrap();
        assert_eq!(cfg.level, 0.05);
        assert_eq!(cfg.transform, Transform::Identity);
        let region = cfg.search_region().unwrap();
        let fs = cfg.signal.build(region, cfg.quadrature).unwrap();
        assert!((fs.cdf(2.0).unwrap() - 1.0).abs() < 1e-15);
        match cfg.proposal.unwrap() {
            ProposalSpec::Parametric(f) => assert_eq!(f.build(region, cfg.quadrature).unwrap().free(), vec![0]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_block_is_config_error() {
        let text = BASE.replace("with_background", "no_background");
        assert!(matches!(AnalysisConfig::from_json(&text), Err(Error::ConfigError(_))));
        assert!(matches!(AnalysisConfig::from_json("{"), Err(Error::ConfigError(_))));
    }

    #[test]
    fn echo_round_trips() {
        let cfg = AnalysisConfig::from_json(BASE).unwrap();
        let again = AnalysisConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn bump_mixture_spec_builds() {
        let spec: DensitySpec = serde_json::from_str(
            r#"{"kind": "bump_mixture", "lambda": 0.02,
                "base": {"kind": "catalog", "kernel": {"family": "pareto1", "index": 3.9}},
                "bump": {"mu1": 1.25, "mu2": 1.31, "sigma0": 0.08}}"#,
        )
        .unwrap();
        let region = SearchRegion::new(1.0, 2.0).unwrap();
        let g = spec.build(region, QuadratureSpec::default()).unwrap();
        assert!((g.cdf(2.0).unwrap() - 1.0).abs() < 1e-15);
    }
}
