use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{build_dynamics, DynamicsModel, Region, RegionTable, WorldError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxBounds {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub p: Vec<f64>,
    pub v: Vec<f64>,
}

/// Planning problem instance: workspace, limits, initial state and regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub workspace: BoxBounds,
    pub dt: f64,
    pub horizon: usize,
    pub vmax: f64,
    pub amax: f64,
    pub x0: InitialState,
    pub regions: Vec<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nl_instruction: Option<String>,
}

impl Scenario {
    pub fn dims(&self) -> usize {
        self.workspace.min.len()
    }

    pub fn dynamics(&self) -> Result<DynamicsModel, WorldError> {
        build_dynamics(self.dt, self.dims())
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.x0.p.iter().chain(&self.x0.v).copied().collect()
    }

    pub fn region_table(&self) -> RegionTable {
        RegionTable::new(self.dims(), self.regions.iter().cloned())
    }

    pub fn region(&self, name: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.name == name)
    }

    /// Convert a duration in seconds to whole steps; the duration must be a
    /// multiple of `dt`.
    pub fn seconds_to_steps(&self, seconds: f64) -> Result<usize, WorldError> {
        let steps = seconds / self.dt;
        let rounded = steps.round();
        if seconds < 0.0 || (steps - rounded).abs() > 1e-9 * rounded.max(1.0) {
            return Err(WorldError::InvariantViolation(format!(
                "{seconds} s is not a whole number of {} s steps",
                self.dt
            )));
        }
        Ok(rounded as usize)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let dims = self.dims();
        if !(1..=3).contains(&dims) {
            return Err(WorldError::BadDims(dims));
        }
        let ws = Region {
            name: "workspace".into(),
            role: super::Role::Search,
            min: self.workspace.min.clone(),
            max: self.workspace.max.clone(),
        };
        ws.validate()?;
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(WorldError::InvariantViolation(format!("{name} must be positive, got {v}")))
            }
        };
        positive("dt", self.dt)?;
        positive("vmax", self.vmax)?;
        positive("amax", self.amax)?;
        if self.horizon < 1 {
            return Err(WorldError::InvariantViolation("horizon must be at least 1".into()));
        }
        if self.x0.p.len() != dims || self.x0.v.len() != dims {
            return Err(WorldError::InvariantViolation(format!(
                "x0 must have {dims} position and {dims} velocity entries"
            )));
        }
        if !ws.contains(&self.x0.p) {
            return Err(WorldError::InvariantViolation("x0 position lies outside the workspace".into()));
        }
        if self.x0.v.iter().any(|v| !v.is_finite() || v.abs() > self.vmax) {
            return Err(WorldError::InvariantViolation("x0 velocity exceeds vmax".into()));
        }
        let mut names = BTreeSet::new();
        for r in &self.regions {
            r.validate()?;
            if r.dims() != dims {
                return Err(WorldError::InvariantViolation(format!(
                    "region `{}` has {} axes, workspace has {dims}",
                    r.name,
                    r.dims()
                )));
            }
            if !names.insert(r.name.as_str()) {
                return Err(WorldError::InvariantViolation(format!("duplicate region `{}`", r.name)));
            }
            let inside = (0..dims).all(|i| r.min[i] >= ws.min[i] && r.max[i] <= ws.max[i]);
            if !inside {
                return Err(WorldError::InvariantViolation(format!(
                    "region `{}` extends outside the workspace",
                    r.name
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Scenario, WorldError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let sc: Scenario = serde_path_to_error::deserialize(de).map_err(|e| WorldError::SchemaError {
            field: e.path().to_string(),
            reason: e.inner().to_string(),
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, WorldError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| WorldError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    Scenario::from_json(&text)
}

pub fn save_scenario(sc: &Scenario, path: impl AsRef<Path>) -> Result<(), WorldError> {
    let path = path.as_ref();
    std::fs::write(path, sc.to_json()).map_err(|e| WorldError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}
