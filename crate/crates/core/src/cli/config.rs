//! Experiment configuration documents and named scenarios.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::BenchConfig;
use crate::dataset::LambdaFamilySpec;
use crate::error::{invalid, Result};
use crate::grid::{ReactionProfile, UniformGrid1D};
use crate::kernel::GoursatSolveOptions;
use crate::operator::{OperatorArchitecture, TrainingConfig};
use crate::sim::{InitialCondition, Signal, SimulationConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// A single reaction profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum LambdaSpec {
    /// `amplitude cos(gamma acos x)`.
    Chebyshev { amplitude: f64, gamma: f64 },
    Constant { value: f64 },
    /// Values on their own uniform grid, resampled linearly.
    Values { values: Vec<f64> },
}

impl Default for LambdaSpec {
    fn default() -> Self {
        LambdaSpec::Chebyshev {
            amplitude: 50.0,
            gamma: 5.0,
        }
    }
}

impl LambdaSpec {
    pub fn profile(&self, n_points: usize) -> Result<ReactionProfile> {
        let grid = UniformGrid1D::new(n_points)?;
        match self {
            LambdaSpec::Chebyshev { amplitude, gamma } => ReactionProfile::chebyshev(grid, *amplitude, *gamma),
            LambdaSpec::Constant { value } => ReactionProfile::constant(grid, *value),
            LambdaSpec::Values { values } => {
                ReactionProfile::new(UniformGrid1D::new(values.len())?, values.clone())?.resample(grid)
            }
        }
    }

    /// Named profiles for `solve-kernel --lambda-preset`.
    pub fn preset(name: &str) -> Result<Self> {
        let cheb = |amplitude, gamma| LambdaSpec::Chebyshev { amplitude, gamma };
        Ok(match name {
            "zero" => LambdaSpec::Constant { value: 0.0 },
            "control-gamma5" => cheb(50.0, 5.0),
            "control-gamma8" => cheb(50.0, 8.0),
            "observer-gamma5" => cheb(20.0, 5.0),
            _ => return Err(invalid(format!("unknown lambda preset `{name}`"))),
        })
    }

    /// Whitespace- or comma-separated nodal values.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let values = text
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|e| invalid(format!("lambda file: `{s}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(LambdaSpec::Values { values })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObserverSection {
    /// Observer start, `u_hat(x, 0)`.
    pub initial_condition: InitialCondition,
    /// Plant input while the observer runs.
    pub signal: Signal,
}

impl Default for ObserverSection {
    fn default() -> Self {
        Self {
            initial_condition: InitialCondition::Constant { value: 20.0 },
            signal: Signal::observer_demo(),
        }
    }
}

/// Every field is optional; missing fields take the values of
/// [`ExperimentConfig::default`]. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub family: LambdaFamilySpec,
    /// Dataset size for `gen-data`.
    pub n_samples: usize,
    pub solver: GoursatSolveOptions,
    pub architecture: OperatorArchitecture,
    /// Branch input scaling; `None` means `1 / family.amplitude`.
    pub input_scale: Option<f64>,
    pub model_seed: u64,
    pub training: TrainingConfig,
    /// Plant profile for `simulate`.
    pub lambda: LambdaSpec,
    pub simulation: SimulationConfig,
    pub observer: ObserverSection,
    pub bench: BenchConfig,
    /// Reaction profiles drawn from `family` for `bench`.
    pub bench_lambdas: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            family: LambdaFamilySpec::control(),
            n_samples: 900,
            solver: GoursatSolveOptions::default(),
            architecture: OperatorArchitecture::default(),
            input_scale: None,
            model_seed: 1,
            training: TrainingConfig::default(),
            lambda: LambdaSpec::default(),
            simulation: SimulationConfig::default(),
            observer: ObserverSection::default(),
            bench: BenchConfig::default(),
            bench_lambdas: 20,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "config schema_version {} is not {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        self.family.validate()?;
        self.solver.validate()?;
        self.architecture.validate()?;
        self.training.validate()?;
        self.simulation.validate()?;
        if let Some(s) = self.input_scale {
            if !(s.is_finite() && s != 0.0) {
                return Err(invalid("input_scale must be finite and nonzero"));
            }
        }
        Ok(())
    }

    pub fn resolved_input_scale(&self) -> f64 {
        self.input_scale.unwrap_or_else(|| {
            if self.family.amplitude != 0.0 {
                1.0 / self.family.amplitude.abs()
            } else {
                1.0
            }
        })
    }
}

/// Simulation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum Mode {
    Open,
    Closed,
    Observer,
    OutputFeedback,
}

/// Named scenarios for `simulate --preset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum Preset {
    /// `50 cos(5 acos x)`, zero input, `u0 = 10`.
    OpenloopGamma5,
    /// `50 cos(8 acos x)`, zero input, `u0 = 10`.
    OpenloopGamma8,
    /// `50 cos(5 acos x)` under exact-kernel feedback, `u0 = 10`.
    ClosedloopGamma5,
    /// `20 cos(5 acos x)`, sinusoidal input, `u0 = 10`, `u_hat0 = 20`.
    ObserverFig7,
}

impl Preset {
    pub fn config(self) -> (ExperimentConfig, Mode) {
        let mut cfg = ExperimentConfig::default();
        cfg.simulation.snapshot_stride = Some(100);
        let cheb = |amplitude, gamma| LambdaSpec::Chebyshev { amplitude, gamma };
        let mode = match self {
            Preset::OpenloopGamma5 => {
                cfg.lambda = cheb(50.0, 5.0);
                Mode::Open
            }
            Preset::OpenloopGamma8 => {
                cfg.lambda = cheb(50.0, 8.0);
                Mode::Open
            }
            Preset::ClosedloopGamma5 => {
                cfg.lambda = cheb(50.0, 5.0);
                Mode::Closed
            }
            Preset::ObserverFig7 => {
                cfg.family = LambdaFamilySpec::observer();
                cfg.lambda = cheb(20.0, 5.0);
                Mode::Observer
            }
        };
        (cfg, mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn partial_sections_fill_defaults() {
        let c = ExperimentConfig::from_json(r#"{"training": {"epochs": 3}, "architecture": {"basis": 8}}"#).unwrap();
        assert_eq!(c.training.epochs, 3);
        assert_eq!(c.training.batch_size, TrainingConfig::default().batch_size);
        assert_eq!(c.architecture.basis, 8);
        assert_eq!(c.architecture.sensors, 101);
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        assert!(ExperimentConfig::from_json(r#"{"trainig": {}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"training": {"epoch": 3}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"schema_version": 2}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"simulation": {"dt": -1}}"#).is_err());
    }

    #[test]
    fn lambda_specs() {
        let l = LambdaSpec::preset("zero").unwrap().profile(11).unwrap();
        assert_eq!(l.sup_norm(), 0.0);
        let v = LambdaSpec::Values { values: vec![0.0, 1.0, 2.0] }.profile(5).unwrap();
        assert!((v.values()[1] - 0.5).abs() < 1e-15);
        assert!(LambdaSpec::preset("nope").is_err());
        let c = LambdaSpec::preset("control-gamma5").unwrap().profile(101).unwrap();
        assert_eq!(c.values()[100], 50.0);
    }

    #[test]
    fn presets_are_valid() {
        for p in [
            Preset::OpenloopGamma5,
            Preset::OpenloopGamma8,
            Preset::ClosedloopGamma5,
            Preset::ObserverFig7,
        ] {
            p.config().0.validate().unwrap();
        }
        assert_eq!(Preset::ObserverFig7.config().1, Mode::Observer);
    }
}
