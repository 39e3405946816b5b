//! Environment files (TOML).
//!
//! ```toml
//! kind = "rooms"            # rooms | grid | mdp
//!
//! [rooms]                   # any RoomsWorldConfig field; omitted fields keep defaults
//! n_rooms = 10
//! goal_room = 4
//!
//! [grid]                    # kind = "grid"
//! layout = """
//! #####
//! #A.K#
//! ###D#
//! #G..#
//! #####
//! """
//! view_radius = 1
//! decay = 0.0
//!
//! [mdp]                     # kind = "mdp"; path is relative to this file
//! path = "three_state.mdp"
//! start = 0
//! horizon = 50
//!
//! [policies]
//! deep_epsilon = 0.05
//! ratio = 0.5               # QUICK calibrated to this fraction of DEEPTHINK's value
//! # quick_epsilon = 1.0     # fixes QUICK's noise instead of calibrating
//! quick_cost = 1.0
//! deep_cost = 5.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::{GridTaskConfig, RoomsWorldConfig};
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::policies::{calibrated_pair, make_skilled_policy, SkillSpec, TablePolicy, Tier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Rooms,
    Grid,
    Mdp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub layout: String,
    #[serde(default = "one")]
    pub view_radius: usize,
    #[serde(default = "unit")]
    pub goal_reward: f64,
    #[serde(default)]
    pub decay: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_grid_horizon")]
    pub horizon: usize,
    #[serde(default = "default_export_cap")]
    pub export_cap: usize,
}

impl GridSection {
    pub fn config(&self) -> Result<GridTaskConfig> {
        let mut c = GridTaskConfig::from_layout(&self.layout)?;
        c.view_radius = self.view_radius;
        c.goal_reward = self.goal_reward;
        c.decay = self.decay;
        c.gamma = self.gamma;
        c.horizon = self.horizon;
        c.export_cap = self.export_cap;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpSection {
    pub path: PathBuf,
    #[serde(default)]
    pub start: usize,
    #[serde(default = "default_mdp_horizon")]
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    pub deep_epsilon: f64,
    pub quick_epsilon: Option<f64>,
    pub ratio: f64,
    pub quick_cost: f64,
    pub deep_cost: f64,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection { deep_epsilon: 0.05, quick_epsilon: None, ratio: 0.5, quick_cost: 1.0, deep_cost: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvFile {
    pub kind: EnvKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rooms: Option<RoomsWorldConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mdp: Option<MdpSection>,
    #[serde(default)]
    pub policies: PolicySection,
}

impl Default for EnvFile {
    fn default() -> Self {
        EnvFile { kind: EnvKind::Rooms, rooms: None, grid: None, mdp: None, policies: PolicySection::default() }
    }
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

fn default_gamma() -> f64 {
    0.95
}

fn default_grid_horizon() -> usize {
    100
}

fn default_export_cap() -> usize {
    100_000
}

fn default_mdp_horizon() -> usize {
    100
}

impl EnvFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: EnvFile = toml::from_str(text).map_err(|e| Error::invalid(format!("environment file: {e}")))?;
        file.check_sections()?;
        Ok(file)
    }

    /// Reads `path` and resolves a relative MDP path against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::invalid(format!("environment file {} does not exist", path.display())));
        }
        let mut file = Self::parse(&std::fs::read_to_string(path)?)?;
        if let Some(m) = file.mdp.as_mut() {
            if m.path.is_relative() {
                m.path = path.parent().unwrap_or(Path::new(".")).join(&m.path);
            }
        }
        Ok(file)
    }

    fn check_sections(&self) -> Result<()> {
        let present = [
            (EnvKind::Rooms, self.rooms.is_some()),
            (EnvKind::Grid, self.grid.is_some()),
            (EnvKind::Mdp, self.mdp.is_some()),
        ];
        for (kind, there) in present {
            if there && kind != self.kind {
                return Err(Error::invalid(format!("section [{kind:?}] given for kind {:?}", self.kind)));
            }
        }
        match self.kind {
            EnvKind::Grid if self.grid.is_none() => Err(Error::invalid("kind grid needs a [grid] section")),
            EnvKind::Mdp if self.mdp.is_none() => Err(Error::invalid("kind mdp needs an [mdp] section")),
            _ => Ok(()),
        }
    }

    /// MDP file contents for `kind = "mdp"`.
    pub fn mdp_text(&self) -> Result<Option<String>> {
        match &self.mdp {
            Some(m) => {
                if !m.path.is_file() {
                    return Err(Error::invalid(format!("MDP file {} does not exist", m.path.display())));
                }
                Ok(Some(std::fs::read_to_string(&m.path)?))
            }
            None => Ok(None),
        }
    }
}

/// QUICK and DEEPTHINK for an exported MDP.
pub fn build_policies(mdp: &TabularMdp, start: usize, p: &PolicySection) -> Result<(TablePolicy, TablePolicy)> {
    match p.quick_epsilon {
        Some(eps) => {
            let deep = make_skilled_policy(mdp, SkillSpec::new(p.deep_epsilon)?, Tier::Deep, p.deep_cost)?;
            let quick = make_skilled_policy(mdp, SkillSpec::new(eps)?, Tier::Quick, p.quick_cost)?;
            Ok((quick, deep))
        }
        None => {
            let pair = calibrated_pair(mdp, start, p.deep_epsilon, p.ratio, p.quick_cost, p.deep_cost)?;
            Ok((pair.quick, pair.deep))
        }
    }
}
