//! Built-in example models.
//!
//! * `dim2`: `[[0, 1 - alpha], [alpha, 0]]` for `alpha` in `[a, 1 - a]`.
//! * `pmca`: three-compartment polymerization/fragmentation model with
//!   growth rates `tau1, tau2` and fragmentation rates `beta2, beta3`.
//! * `limit-cycle`: a 3x3 segment whose optimal switching strictly beats
//!   every constant control.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrices::{ControlSet, Segment};

pub const PRESET_NAMES: [&str; 3] = ["dim2", "pmca", "limit-cycle"];

pub const LIMIT_CYCLE_G: [[f64; 3]; 3] = [[0.0, 0.245, 0.007], [0.0, 0.0, 0.141], [0.0, 0.0, 0.0]];
pub const LIMIT_CYCLE_F: [[f64; 3]; 3] = [[-0.245, 0.0, 0.0], [0.272, -0.499, 0.0], [0.645, 0.026, -0.035]];

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: String,
    pub control_set: ControlSet,
    pub parameters: BTreeMap<String, f64>,
    pub notes: String,
}

impl Preset {
    pub fn segment(&self) -> Result<&Segment> {
        self.control_set.as_segment()
    }
}

fn defaults(name: &str) -> Result<Vec<(&'static str, f64)>> {
    Ok(match name {
        "dim2" => vec![("a", 0.2)],
        "pmca" => vec![
            ("tau1", 0.02),
            ("tau2", 1.0),
            ("beta", 0.04),
            ("beta2", 0.04),
            ("beta3", 0.04),
            ("a", 2.0),
            ("A", 8.0),
        ],
        "limit-cycle" => vec![("a", 0.05), ("A", 1.0)],
        other => return Err(Error::UnknownPreset(other.to_string())),
    })
}

fn rows(m: &[[f64; 3]; 3]) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |i, j| m[i][j])
}

pub fn pmca_matrices(tau1: f64, tau2: f64, beta2: f64, beta3: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let g = rows(&[[-tau1, 0.0, 0.0], [tau1, -tau2, 0.0], [0.0, tau2, 0.0]]);
    let f = rows(&[[0.0, 2.0 * beta2, beta3], [0.0, -beta2, beta3], [0.0, 0.0, -beta3]]);
    (g, f)
}

/// Builds a preset, applying `overrides` to its named parameters.
///
/// For `pmca`, `beta` sets both fragmentation rates; `beta2`/`beta3`
/// override them individually afterwards.
pub fn preset(name: &str, overrides: &BTreeMap<String, f64>) -> Result<Preset> {
    let mut params: BTreeMap<String, f64> = defaults(name)?
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    for (key, value) in overrides {
        if !params.contains_key(key) {
            return Err(Error::InvalidOverride(format!("{name} has no parameter `{key}`")));
        }
        if !value.is_finite() {
            return Err(Error::InvalidOverride(format!("{key} = {value}")));
        }
    }
    if name == "pmca" {
        if let Some(&b) = overrides.get("beta") {
            params.insert("beta2".into(), b);
            params.insert("beta3".into(), b);
        }
    }
    for (key, value) in overrides {
        if key != "beta" {
            params.insert(key.clone(), *value);
        }
    }
    let p = |k: &str| params[k];
    let invalid = |e: Error| Error::InvalidOverride(e.to_string());
    let (control_set, notes) = match name {
        "dim2" => {
            let a = p("a");
            if !(a > 0.0 && a <= 0.5) {
                return Err(Error::InvalidOverride(format!("a must lie in (0, 0.5], got {a}")));
            }
            let g = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
            let f = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
            let seg = Segment::new(g, f, a, 1.0 - a).map_err(invalid)?;
            (seg, "two-dimensional family [[0, 1 - alpha], [alpha, 0]] on [a, 1 - a]")
        }
        "pmca" => {
            for k in ["tau1", "tau2", "beta2", "beta3"] {
                if !(p(k) > 0.0) {
                    return Err(Error::InvalidOverride(format!("{k} must be positive, got {}", p(k))));
                }
            }
            let (g, f) = pmca_matrices(p("tau1"), p("tau2"), p("beta2"), p("beta3"));
            let seg = Segment::new(g, f, p("a"), p("A")).map_err(invalid)?;
            (seg, "growth/fragmentation compartments; 1^T G = 0 and q^T F = 0 with q = (1, 2, 3)")
        }
        _ => {
            let seg = Segment::new(rows(&LIMIT_CYCLE_G), rows(&LIMIT_CYCLE_F), p("a"), p("A")).map_err(invalid)?;
            (seg, "3x3 segment with a periodic optimal regime; default range [0.05, 1]")
        }
    };
    Ok(Preset {
        name: name.to_string(),
        control_set: ControlSet::Segment(control_set),
        parameters: params,
        notes: notes.to_string(),
    })
}

pub fn default_preset(name: &str) -> Result<Preset> {
    preset(name, &BTreeMap::new())
}

/// Shape of `alpha -> lambda(G + alpha F)` on `(0, inf)` for the PMCA model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PmcaRegime {
    /// Increasing towards `tau1`.
    Monotone,
    /// Rises to a maximum, then decreases towards `tau1`.
    InteriorMax,
}

pub fn classify_pmca(tau1: f64, tau2: f64) -> PmcaRegime {
    if tau2 > 2.0 * tau1 {
        PmcaRegime::InteriorMax
    } else {
        PmcaRegime::Monotone
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    /// `|1^T G|_inf`
    pub growth: f64,
    /// `|q^T F|_inf`
    pub fragmentation: f64,
}

pub const CONSERVATION_TOL: f64 = 1e-14;

pub fn pmca_conservation_check(p: &Preset) -> Result<ConservationReport> {
    if p.name != "pmca" {
        return Err(Error::InvalidArgument(format!("conservation check applies to pmca, not {}", p.name)));
    }
    let seg = p.segment()?;
    let q = [1.0, 2.0, 3.0];
    let mut growth = 0.0f64;
    let mut fragmentation = 0.0f64;
    for j in 0..3 {
        let col_g: f64 = (0..3).map(|i| seg.g()[(i, j)]).sum();
        let col_f: f64 = (0..3).map(|i| q[i] * seg.f()[(i, j)]).sum();
        growth = growth.max(col_g.abs());
        fragmentation = fragmentation.max(col_f.abs());
    }
    let report = ConservationReport { growth, fragmentation };
    let worst = growth.max(fragmentation);
    if worst > CONSERVATION_TOL {
        return Err(Error::ConservationViolated { residual: worst });
    }
    Ok(report)
}
