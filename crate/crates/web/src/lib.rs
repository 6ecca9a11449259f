//! Browser bindings: the `lambda(alpha)` curve of a segment, an open-loop
//! projected trajectory, and a small-grid optimal feedback run.
//!
//! Every export takes plain values and returns a JSON string. The `*_json`
//! functions carry the logic and are what the native tests exercise.

use std::collections::BTreeMap;

use serde_json::json;
use wasm_bindgen::prelude::*;

use switched_growth::dynamics::{integrate_projected, Control, ControlSignal, SimplexPoint};
use switched_growth::hj::{classify_attractor, feedback_trajectory, solve_ergodic, Attractor, SimplexGrid, SolverOptions};
use switched_growth::matrices::ControlSet;
use switched_growth::models::preset;
use switched_growth::spectral_derivatives::{find_alpha_star, high_frequency_criterion, perron_derivative};

const MAX_POINTS: usize = 2000;
const MAX_GRID: usize = 120;
const MAX_SAMPLES: usize = 1500;

fn load(name: &str, a: f64, hi: f64) -> Result<ControlSet, String> {
    let mut overrides = BTreeMap::new();
    if a.is_finite() {
        overrides.insert("a".to_string(), a);
    }
    if hi.is_finite() && name != "dim2" {
        overrides.insert("A".to_string(), hi);
    }
    preset(name, &overrides).map(|p| p.control_set).map_err(|e| e.to_string())
}

fn thin(states: &[Vec<f64>], times: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let stride = (states.len() / MAX_SAMPLES).max(1);
    let mut t = Vec::new();
    let mut y = Vec::new();
    for k in (0..states.len()).step_by(stride) {
        t.push(times[k]);
        y.push(states[k].clone());
    }
    (t, y)
}

/// `lambda(alpha)` and its derivative on `points` values spanning the
/// preset's range (NaN keeps the default bound).
pub fn lambda_curve_json(name: &str, a: f64, hi: f64, points: usize) -> Result<String, String> {
    let cs = load(name, a, hi)?;
    let seg = cs.as_segment().map_err(|e| e.to_string())?;
    let points = points.clamp(2, MAX_POINTS);
    let mut alpha = Vec::with_capacity(points);
    let mut lambda = Vec::with_capacity(points);
    let mut slope = Vec::with_capacity(points);
    for k in 0..points {
        let x = seg.lo() + (seg.hi() - seg.lo()) * k as f64 / (points - 1) as f64;
        alpha.push(x);
        lambda.push(seg.lambda(x).map_err(|e| e.to_string())?);
        slope.push(perron_derivative(seg, x).map_err(|e| e.to_string())?);
    }
    let star = find_alpha_star(seg).map_err(|e| e.to_string())?;
    let hf = high_frequency_criterion(seg, star.alpha).map_err(|e| e.to_string())?;
    Ok(json!({
        "alpha": alpha,
        "lambda": lambda,
        "dlambda": slope,
        "alphaStar": star.alpha,
        "lambdaStar": star.lambda,
        "boundary": star.boundary,
        "highFreq": hf,
    })
    .to_string())
}

/// Projected trajectory from `start` under the constant control `alpha`,
/// or, when `dwell > 0`, alternating the two endpoints every `dwell`.
pub fn trajectory_json(
    name: &str,
    start: &[f64],
    alpha: f64,
    dwell: f64,
    horizon: f64,
) -> Result<String, String> {
    let cs = load(name, f64::NAN, f64::NAN)?;
    if !(horizon > 0.0 && horizon <= 5000.0) {
        return Err(format!("horizon must lie in (0, 5000], got {horizon}"));
    }
    let y0 = SimplexPoint::from_positive(start).map_err(|e| e.to_string())?;
    let periodic = dwell > 0.0;
    let sig = if periodic {
        let cycles = (horizon / (2.0 * dwell)).ceil().max(1.0) as usize;
        let controls: Vec<Control> = (0..2 * cycles).map(|k| Control::Vertex(k % 2)).collect();
        ControlSignal::periodic(&controls, dwell)
    } else {
        ControlSignal::constant(Control::Alpha(alpha), horizon)
    }
    .map_err(|e| e.to_string())?;
    let dt = 0.01f64.min(sig.min_duration());
    let traj = integrate_projected(&y0, &cs, &sig, dt).map_err(|e| e.to_string())?;
    let end = traj.times.last().copied().unwrap_or(0.0);
    let rate = traj.logmass.last().copied().unwrap_or(0.0) / end.max(f64::MIN_POSITIVE);
    let (t, y) = thin(&traj.states, &traj.times);
    Ok(json!({ "t": t, "y": y, "rate": rate }).to_string())
}

/// Solves the HJ equation on a small grid and follows its feedback.
pub fn feedback_json(name: &str, grid: usize, start: &[f64], horizon: f64) -> Result<String, String> {
    let cs = load(name, f64::NAN, f64::NAN)?;
    let grid = SimplexGrid::new(cs.dim(), grid.clamp(4, MAX_GRID)).map_err(|e| e.to_string())?;
    let sol = solve_ergodic(&cs, grid, &SolverOptions::default()).map_err(|e| e.to_string())?;
    if !(horizon > 0.0 && horizon <= 2000.0) {
        return Err(format!("horizon must lie in (0, 2000], got {horizon}"));
    }
    let y0 = SimplexPoint::from_positive(start).map_err(|e| e.to_string())?;
    let traj = feedback_trajectory(&sol, &y0, horizon, 0.01).map_err(|e| e.to_string())?;
    let attractor = match classify_attractor(&traj, horizon / 2.0, 1e-4, 1e-2) {
        Attractor::FixedPoint(_) => "fixed point".to_string(),
        Attractor::LimitCycle { period } => format!("limit cycle, period {period:.2}"),
        Attractor::Undetermined => "undetermined".to_string(),
    };
    let controls: Vec<usize> = traj.states.iter().map(|y| sol.control_at(y)).collect();
    let (t, y) = thin(&traj.states, &traj.times);
    let stride = (traj.states.len() / MAX_SAMPLES).max(1);
    let controls: Vec<usize> = controls.into_iter().step_by(stride).collect();
    Ok(json!({
        "lambda": sol.lambda,
        "iterations": sol.iterations,
        "attractor": attractor,
        "t": t,
        "y": y,
        "control": controls,
        "rate": traj.logmass.last().copied().unwrap_or(0.0) / horizon,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn lambda_curve(name: &str, a: f64, hi: f64, points: usize) -> Result<String, JsValue> {
    lambda_curve_json(name, a, hi, points).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn trajectory(name: &str, start: &[f64], alpha: f64, dwell: f64, horizon: f64) -> Result<String, JsValue> {
    trajectory_json(name, start, alpha, dwell, horizon).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn feedback(name: &str, grid: usize, start: &[f64], horizon: f64) -> Result<String, JsValue> {
    feedback_json(name, grid, start, horizon).map_err(|e| JsValue::from_str(&e))
}
