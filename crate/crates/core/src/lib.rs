//! STL-constrained trajectory planning for a double-integrator UAV, with
//! IIS-based infeasibility diagnosis and specification repair.

pub mod encode;
pub mod milp;
pub mod repair;
pub mod rewards;
pub mod solver;
pub mod stl;
pub mod world;
