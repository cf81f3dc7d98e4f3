//! JSON run configuration.
//!
//! ```json
//! {
//!   "system": { "preset": "aircraft" },
//!   "period": 0.1,
//!   "input": [[1, -1, 1, -1, 0, 0], [1, -1, 0, 0, 1, -1]],
//!   "filter": { "family": "lowpass", "rho": 1.0, "count": 6 },
//!   "design": { "policy": { "kind": "cycle" }, "branch_b": "eta" },
//!   "numeric": { "rank_rtol": 1e-8, "quad_panels": 8 }
//! }
//! ```
//!
//! `system` may instead hold inline `a`, `b`, `x0` rows or a `path` to a JSON
//! file with those fields. Every field except `system` is optional; the
//! aircraft preset supplies its own period and input.

use std::path::{Path, PathBuf};

use ctexp::aircraft;
use ctexp::design::{BranchBRule, DesignOptions, InputPolicy};
use ctexp::filters::FilterFamily;
use ctexp::lti::{LtiSystem, PiecewiseConstantInput};
use ctexp::numlin::{from_rows, Vector};
use ctexp::NumericConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSource {
    Preset { preset: String },
    Inline { a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, x0: Vec<f64> },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub family: FilterFamily,
    pub rho: f64,
    /// Number of filters `M`; defaults to the number of samples.
    #[serde(default)]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    #[serde(default = "default_policy")]
    pub policy: InputPolicy,
    #[serde(default)]
    pub branch_b: BranchBRule,
}

fn default_policy() -> InputPolicy {
    InputPolicy::Cycle
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            policy: default_policy(),
            branch_b: BranchBRule::Eta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSource,
    #[serde(default)]
    pub period: Option<f64>,
    /// Input levels as `m` rows of `N` entries.
    #[serde(default)]
    pub input: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub filter: Option<FilterConfig>,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default)]
    pub numeric: NumericConfig,
}

/// Flags that override configuration fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub rtol: Option<f64>,
    pub panels: Option<usize>,
}

/// A validated configuration with everything resolved.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub system: LtiSystem,
    pub period: f64,
    pub input: Option<PiecewiseConstantInput>,
    pub filter: Option<FilterConfig>,
    pub design: DesignOptions,
    pub numeric: NumericConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    x0: Vec<f64>,
}

impl RunConfig {
    pub fn aircraft() -> Self {
        Self {
            system: SystemSource::Preset {
                preset: "aircraft".into(),
            },
            period: None,
            input: None,
            filter: None,
            design: DesignConfig::default(),
            numeric: NumericConfig::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("invalid config {}: {e}", path.display())))
    }

    /// Applies overrides and checks every field. Relative system paths are
    /// resolved against `base`.
    pub fn resolve(&self, overrides: &Overrides, base: &Path) -> Result<Resolved, CliError> {
        let mut numeric = self.numeric;
        if let Some(rtol) = overrides.rtol {
            numeric.rank_rtol = rtol;
        }
        if let Some(panels) = overrides.panels {
            numeric.quad_panels = panels;
        }
        numeric.validate()?;

        let (system, preset) = match &self.system {
            SystemSource::Preset { preset } if preset == "aircraft" => (aircraft::system(), true),
            SystemSource::Preset { preset } => {
                return Err(CliError::Validation(format!("unknown system preset '{preset}'")))
            }
            SystemSource::Inline { a, b, x0 } => (build_system(a, b, x0)?, false),
            SystemSource::File { path } => {
                let path = base.join(path);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::Validation(format!("cannot read system {}: {e}", path.display())))?;
                let f: SystemFile = serde_json::from_str(&text)
                    .map_err(|e| CliError::Validation(format!("invalid system {}: {e}", path.display())))?;
                (build_system(&f.a, &f.b, &f.x0)?, false)
            }
        };

        let period = match (self.period, preset) {
            (Some(p), _) => p,
            (None, true) => aircraft::PERIOD,
            (None, false) => return Err(CliError::Validation("missing 'period'".into())),
        };
        if !(period.is_finite() && period > 0.0) {
            return Err(CliError::Validation(format!("period must be positive, got {period}")));
        }

        let input = match (&self.input, preset) {
            (Some(rows), _) => Some(PiecewiseConstantInput::new(period, from_rows(rows)?)?),
            (None, true) => Some(PiecewiseConstantInput::new(period, aircraft::table(&aircraft::MU))?),
            (None, false) => None,
        };
        if let Some(u) = &input {
            if u.dim() != system.m() {
                return Err(CliError::Validation(format!(
                    "input has {} rows but the system has {} inputs",
                    u.dim(),
                    system.m()
                )));
            }
        }

        if let Some(f) = &self.filter {
            if !(f.rho.is_finite() && f.rho > 0.0) {
                return Err(CliError::Validation(format!("filter rho must be positive, got {}", f.rho)));
            }
            if f.count == Some(0) {
                return Err(CliError::Validation("filter count must be at least 1".into()));
            }
        }

        let mut policy = self.design.policy;
        if let Some(seed) = overrides.seed {
            policy = InputPolicy::Seeded { seed };
        }
        Ok(Resolved {
            system,
            period,
            input,
            filter: self.filter.clone(),
            design: DesignOptions {
                policy,
                branch_b: self.design.branch_b,
                rtol: numeric.rank_rtol,
            },
            numeric,
        })
    }
}

fn build_system(a: &[Vec<f64>], b: &[Vec<f64>], x0: &[f64]) -> Result<LtiSystem, CliError> {
    Ok(LtiSystem::new(from_rows(a)?, from_rows(b)?, Vector::from_row_slice(x0))?)
}
