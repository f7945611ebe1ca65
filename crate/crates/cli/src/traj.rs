//! Trajectory CSV: one row per step with fixed 3-D columns. Missing axes are
//! zero-filled; the final row has no control and leaves the `u` cells empty.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use stlnav_core::world::{Scenario, Trajectory};

pub const HEADER: [&str; 10] = ["k", "px", "py", "pz", "vx", "vy", "vz", "ux", "uy", "uz"];

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    k: usize,
    px: f64,
    py: f64,
    pz: f64,
    vx: f64,
    vy: f64,
    vz: f64,
    ux: Option<f64>,
    uy: Option<f64>,
    uz: Option<f64>,
}

fn padded(v: &[f64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    out[..v.len()].copy_from_slice(v);
    out
}

pub fn to_csv(tr: &Trajectory) -> Result<String> {
    let dims = tr.states[0].len() / 2;
    let mut w = csv::Writer::from_writer(Vec::new());
    for (k, s) in tr.states.iter().enumerate() {
        let p = padded(&s[..dims]);
        let v = padded(&s[dims..]);
        let u = tr.controls.get(k).map(|u| padded(u));
        w.serialize(Row {
            k,
            px: p[0],
            py: p[1],
            pz: p[2],
            vx: v[0],
            vy: v[1],
            vz: v[2],
            ux: u.map(|u| u[0]),
            uy: u.map(|u| u[1]),
            uz: u.map(|u| u[2]),
        })?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Read a trajectory for `sc`; it must cover exactly the steps `0..=H`.
pub fn read_csv(path: &Path, sc: &Scenario) -> Result<Trajectory> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        bail!("unexpected CSV header {header:?}, expected {HEADER:?}");
    }
    let dims = sc.dims();
    let mut states = Vec::new();
    let mut controls = Vec::new();
    for (i, row) in r.deserialize::<Row>().enumerate() {
        let row = row.with_context(|| format!("bad CSV row {}", i + 1))?;
        if row.k != i {
            bail!("row {} has k = {}, expected {i}", i + 1, row.k);
        }
        let p = [row.px, row.py, row.pz];
        let v = [row.vx, row.vy, row.vz];
        states.push(p[..dims].iter().chain(&v[..dims]).copied().collect());
        if let (Some(ux), Some(uy), Some(uz)) = (row.ux, row.uy, row.uz) {
            controls.push([ux, uy, uz][..dims].to_vec());
        } else if i < sc.horizon {
            bail!("row {} lacks a control", i + 1);
        }
    }
    if states.len() != sc.horizon + 1 {
        bail!(LengthMismatch { expected: sc.horizon + 1, found: states.len() });
    }
    controls.truncate(sc.horizon);
    Ok(Trajectory { states, controls, dt: sc.dt })
}

#[derive(Debug, thiserror::Error)]
#[error("LengthMismatch: trajectory has {found} states, scenario horizon needs {expected}")]
pub struct LengthMismatch {
    pub expected: usize,
    pub found: usize,
}
