//! Settings file shared by all subcommands. Flags override file values.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use tsocs_core::harness::{BenchSpec, SamplerSpec};
use tsocs_core::simulator::SimConfig;
use tsocs_core::{ControllerConfig, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Time penalty and velocity discount enabled.
    #[default]
    Regularized,
    /// No time penalty and `β = 1`.
    Simulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TradeoffSettings {
    pub beta_mins: Vec<f64>,
    pub noise_level: f64,
}

impl Default for TradeoffSettings {
    fn default() -> Self {
        Self {
            beta_mins: vec![0.01, 0.1, 0.5, 1.0],
            noise_level: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LandscapeSettings {
    /// Half-width of the `α₁` and `α₄` axes around the solution.
    pub half_width: f64,
    /// Points per axis.
    pub count: usize,
}

impl Default for LandscapeSettings {
    fn default() -> Self {
        Self {
            half_width: 3.0,
            count: 41,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub preset: Preset,
    pub sampler: SamplerSpec,
    pub solver: Option<SolverConfig>,
    pub controller: Option<ControllerConfig>,
    pub sim: SimConfig,
    pub bench: BenchSpec,
    pub tradeoff: TradeoffSettings,
    pub landscape: LandscapeSettings,
    pub workers: Option<usize>,
}

impl Settings {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(anyhow::Error::from)
        } else {
            toml::from_str(&text).map_err(anyhow::Error::from)
        };
        parsed.with_context(|| format!("parsing {}", path.display()))
    }

    /// Controller settings: the explicit table if given, else the preset.
    /// An explicit `solver` table replaces the controller's solver.
    pub fn controller(&self) -> ControllerConfig {
        let mut c = self.controller.unwrap_or(match self.preset {
            Preset::Regularized => ControllerConfig::default(),
            Preset::Simulation => ControllerConfig::simulation(),
        });
        if let Some(s) = self.solver {
            c.solver = s;
        }
        c
    }

    pub fn solver(&self) -> SolverConfig {
        self.solver.unwrap_or_else(|| self.controller().solver)
    }
}
