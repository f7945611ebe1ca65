use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::WorldError;
use crate::stl::{AtomicPredicate, Formula, EPS_STRICT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Goal,
    Target,
    Obstacle,
    Nofly,
    Gate,
    Auth,
    Search,
}

impl Role {
    /// Obstacles and no-fly zones are hard constraints and never relaxed.
    pub fn is_safety(self) -> bool {
        matches!(self, Role::Obstacle | Role::Nofly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Goal => "goal",
            Role::Target => "target",
            Role::Obstacle => "obstacle",
            Role::Nofly => "nofly",
            Role::Gate => "gate",
            Role::Auth => "auth",
            Role::Search => "search",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Axis-aligned box over the position coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub role: Role,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Region {
    pub fn dims(&self) -> usize {
        self.min.len()
    }

    pub fn num_faces(&self) -> usize {
        2 * self.dims()
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if self.min.len() != self.max.len() || self.min.is_empty() {
            return Err(WorldError::InvariantViolation(format!(
                "region `{}` has mismatched corner lengths",
                self.name
            )));
        }
        for (i, (lo, hi)) in self.min.iter().zip(&self.max).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                return Err(WorldError::InvariantViolation(format!(
                    "region `{}` axis {i}: min {lo} must be below max {hi}",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Signed distance of `state` from face `face` measured inwards.
    /// Face `2i` is the lower face of axis `i`, face `2i + 1` the upper one.
    pub fn face_margin(&self, face: usize, state: &[f64]) -> f64 {
        let axis = face / 2;
        if face % 2 == 0 {
            state[axis] - self.min[axis]
        } else {
            self.max[axis] - state[axis]
        }
    }

    /// Inward face predicate over the full state vector of length `2 * dims`.
    pub fn face_predicate(&self, face: usize) -> AtomicPredicate {
        let dims = self.dims();
        let axis = face / 2;
        let mut coefficients = vec![0.0; 2 * dims];
        if face % 2 == 0 {
            coefficients[axis] = 1.0;
            AtomicPredicate::new(coefficients, -self.min[axis])
        } else {
            coefficients[axis] = -1.0;
            AtomicPredicate::new(coefficients, self.max[axis])
        }
    }

    pub fn contains(&self, position: &[f64]) -> bool {
        (0..self.num_faces()).all(|f| self.face_margin(f, position) >= 0.0)
    }
}

/// `2 * dims` affine atoms whose conjunction is box membership.
pub fn membership_atoms(r: &Region) -> Vec<AtomicPredicate> {
    (0..r.num_faces()).map(|f| r.face_predicate(f)).collect()
}

/// Outside at least one face by the strictness margin.
pub fn avoidance_formula(r: &Region) -> Formula {
    let atoms = membership_atoms(r)
        .into_iter()
        .map(|p| Formula::predicate(p.strict_negation(EPS_STRICT)))
        .collect();
    Formula::or(atoms)
}

/// Region lookup used when resolving identifiers in formula text.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegionTable {
    pub dims: usize,
    pub regions: BTreeMap<String, Region>,
}

impl RegionTable {
    pub fn new(dims: usize, regions: impl IntoIterator<Item = Region>) -> Self {
        RegionTable {
            dims,
            regions: regions.into_iter().map(|r| (r.name.clone(), r)).collect(),
        }
    }

    /// Table with placeholder unit boxes for text-only work such as scoring
    /// translations, where geometry is irrelevant.
    pub fn symbolic<S: AsRef<str>>(dims: usize, names: impl IntoIterator<Item = S>) -> Self {
        Self::new(
            dims,
            names.into_iter().map(|n| Region {
                name: n.as_ref().to_string(),
                role: Role::Target,
                min: vec![0.0; dims],
                max: vec![1.0; dims],
            }),
        )
    }

    pub fn get(&self, name: &str) -> Option<&Region> {
        self.regions.get(name)
    }
}
