//! Run configuration: one JSON document per experiment.

use std::path::{Path, PathBuf};

use broadbeam::array::{AngleGrid, RisGeometry};
use broadbeam::channel::{Backhaul, BackhaulModel, BsGeometry, LinkGains, ScenarioAngles};
use broadbeam::eval::{LinkBudget, Scenario, Scheme};
use broadbeam::optimizer::OptimizerSettings;
use broadbeam::quadrature::QuadratureSpec;
use serde::{Deserialize, Serialize};

use crate::error::{usage, CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainModel {
    #[default]
    Element,
    Isotropic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub geometry: RisGeometry,
    pub bs: BsGeometry,
    pub angles: ScenarioAngles,
    pub backhaul: BackhaulModel,
    #[serde(default)]
    pub gains: GainModel,
    #[serde(default)]
    pub budget: LinkBudget,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default = "default_maxmin_grid")]
    pub maxmin_grid: usize,
}

fn default_maxmin_grid() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    /// Designs to build; the first one is the reference for comparisons.
    pub designs: Vec<Scheme>,
    #[serde(default = "default_users")]
    pub users: usize,
    /// Backhaul draws per run; SE statistics pool the users of every draw.
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    /// Transmit powers for `sweep`.
    #[serde(default)]
    pub p_t_dbm: Vec<f64>,
}

fn default_users() -> usize {
    1000
}

fn default_realizations() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub grid: AngleGrid,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir(), grid: AngleGrid::default() }
    }
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> CliResult<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| CliError::Parse { path: origin.to_path_buf(), source: e })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.scheme.designs.is_empty() {
            return usage("scheme.designs must list at least one design");
        }
        if self.scheme.users == 0 {
            return usage("scheme.users must be positive");
        }
        if self.scheme.realizations == 0 {
            return usage("scheme.realizations must be positive");
        }
        if self.scenario.maxmin_grid == 0 {
            return usage("scenario.maxmin_grid must be positive");
        }
        if self.scheme.p_t_dbm.iter().any(|p| !p.is_finite()) {
            return usage("scheme.p_t_dbm entries must be finite");
        }
        self.optimizer.validate()?;
        self.scenario.budget.validate()?;
        self.scenario.quadrature.validate()?;
        self.output.grid.validate()?;
        Ok(())
    }

    /// Whether any output depends on a random draw.
    pub fn is_stochastic(&self) -> bool {
        matches!(self.scenario.backhaul, BackhaulModel::Rician { .. })
            || self.scheme.designs.iter().any(|s| {
                matches!(s, Scheme::ProposedEpsComp | Scheme::DpMaxSum | Scheme::DpMaxMin | Scheme::UpMaxMin)
            })
    }

    pub fn scenario(&self, channel_seed: u64) -> Scenario {
        let s = &self.scenario;
        let gains = match s.gains {
            GainModel::Element => LinkGains::element_model(&s.angles),
            GainModel::Isotropic => LinkGains::isotropic(),
        };
        Scenario {
            backhaul: Backhaul {
                geometry: s.geometry,
                bs: s.bs,
                angles: s.angles,
                gains,
                model: s.backhaul,
                quadrature: s.quadrature,
            },
            budget: s.budget,
            channel_seed,
            maxmin_grid: s.maxmin_grid,
        }
    }

    /// Channel seed of backhaul draw `r`; draw 0 uses the run seed itself.
    pub fn realization_seed(seed: u64, r: usize) -> u64 {
        seed ^ (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }

    pub fn settings(&self, seed: u64) -> OptimizerSettings {
        OptimizerSettings { rng_seed: seed, ..self.optimizer }
    }
}
