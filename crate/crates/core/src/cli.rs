//! Command-line front end.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::dynamics::{integrate_projected, Control, ControlSignal, SimplexPoint};
use crate::ergodic_set::{invariance_check, trace_boundary};
use crate::error::{Error, Result};
use crate::hilbert::verify_contraction;
use crate::hj::{classify_attractor, feedback_trajectory, lambda_vs_constant, solve_pair, SolverOptions};
use crate::matrices::{ControlSet, ModelFile};
use crate::models::{preset, PRESET_NAMES};
use crate::sampling::trial_rng;
use crate::spectral_derivatives::{
    build_report, find_alpha_star, log_omegas, perron_derivative, write_omega_sweep,
};

pub const DEFAULT_SEED: u64 = 20_240_601;
/// Window displacement (l1) below which a trajectory counts as settled.
pub const FIX_TOL: f64 = 1e-4;
pub const CYCLE_TOL: f64 = 1e-2;

#[derive(Debug, Parser)]
#[command(name = "switched-growth", version, about = "Maximal growth rates of switched positive linear systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Built-in model: dim2, pmca or limit-cycle.
    #[arg(long, conflicts_with = "model")]
    pub preset: Option<String>,
    /// JSON model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Preset parameter override, `key=value`; repeatable.
    #[arg(long = "param", value_parser = parse_param)]
    pub params: Vec<(String, f64)>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

fn parse_param(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("{k}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Perron eigenvalue and eigenvectors of the model's matrices.
    Perron {
        #[command(flatten)]
        model: ModelArgs,
        /// Evaluate a segment at this parameter only.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// lambda(alpha) and its derivative on a uniform grid of the segment.
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 201)]
        points: usize,
    },
    /// Solve the ergodic HJ equation and follow the optimal feedback.
    Growth {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 200)]
        grid: usize,
        /// Solver time step (defaults to the CFL limit).
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 2_000_000)]
        max_iter: usize,
        /// Length of the closed-loop trajectory.
        #[arg(long, default_value_t = 400.0)]
        horizon: f64,
        /// Trajectory integration step.
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        /// Trajectory start (defaults to the barycenter).
        #[arg(long, value_delimiter = ',')]
        start: Option<Vec<f64>>,
        /// Keep every k-th trajectory row.
        #[arg(long, default_value_t = 10)]
        stride: usize,
        /// Recurrence radius (l1) used to detect a limit cycle.
        #[arg(long, default_value_t = CYCLE_TOL)]
        cycle_tol: f64,
    },
    /// Projected trajectory under an open-loop control.
    Trajectory {
        #[command(flatten)]
        model: ModelArgs,
        /// Constant segment parameter.
        #[arg(long, conflicts_with_all = ["vertex", "cycle"])]
        alpha: Option<f64>,
        /// Constant vertex.
        #[arg(long, conflicts_with = "cycle")]
        vertex: Option<usize>,
        /// Periodic vertex sequence, each held for `--dwell`.
        #[arg(long, value_delimiter = ',')]
        cycle: Option<Vec<usize>>,
        #[arg(long, default_value_t = 1.0)]
        dwell: f64,
        #[arg(long, default_value_t = 100.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, value_delimiter = ',')]
        start: Option<Vec<f64>>,
        /// Seed of the random bang-bang signal used when no control is given.
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        stride: usize,
    },
    /// Second-order optimality criteria at the best constant control.
    Criteria {
        #[command(flatten)]
        model: ModelArgs,
        /// Frequencies for the cosine perturbation (default: 41 log-spaced in [1e-2, 1e2]).
        #[arg(long, value_delimiter = ',')]
        omega: Option<Vec<f64>>,
    },
    /// Trace the region enclosed by the extremal trajectories and test it.
    ErgodicSet {
        #[command(flatten)]
        model: ModelArgs,
        /// Integration horizon of the two boundary curves.
        #[arg(long, default_value_t = 2000.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0.02)]
        dt: f64,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Horizon of each invariance/attraction run.
        #[arg(long, default_value_t = 200.0)]
        check_horizon: f64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Empirical Hilbert-metric contraction check.
    Contraction {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 5.0])]
        time: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Preset utilities.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum PresetAction {
    /// Print the JSON model file of a preset.
    Export {
        name: String,
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, f64)>,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List preset names.
    List,
}

struct Loaded {
    label: String,
    cs: ControlSet,
}

fn overrides(params: &[(String, f64)]) -> BTreeMap<String, f64> {
    params.iter().cloned().collect()
}

fn load(m: &ModelArgs) -> Result<Loaded> {
    match (&m.preset, &m.model) {
        (Some(name), None) => Ok(Loaded {
            label: name.clone(),
            cs: preset(name, &overrides(&m.params))?.control_set,
        }),
        (None, Some(path)) => {
            if !m.params.is_empty() {
                return Err(Error::InvalidOverride("--param applies to presets only".into()));
            }
            let text = fs::read_to_string(path)?;
            Ok(Loaded {
                label: path.display().to_string(),
                cs: ModelFile::parse(&text)?.to_control_set()?,
            })
        }
        _ => Err(Error::InvalidArgument("exactly one of --preset or --model is required".into())),
    }
}

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, dir.join(name))?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

fn start_point(start: &Option<Vec<f64>>, n: usize) -> Result<SimplexPoint> {
    match start {
        Some(v) => {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: v.len() });
            }
            SimplexPoint::new(v.clone())
        }
        None => Ok(SimplexPoint::barycenter(n)),
    }
}

fn vec_of(v: &nalgebra::DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Runs one command and returns the one-line summary.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Perron { model, alpha } => perron(&model, alpha),
        Command::Sweep { model, points } => sweep(&model, points),
        Command::Growth {
            model,
            grid,
            dt,
            tol,
            max_iter,
            horizon,
            step,
            start,
            stride,
            cycle_tol,
        } => growth(
            &model,
            grid,
            SolverOptions { dt, tol, max_iter },
            Closed { horizon, step, start, stride, cycle_tol },
        ),
        Command::Trajectory {
            model,
            alpha,
            vertex,
            cycle,
            dwell,
            horizon,
            dt,
            start,
            seed,
            stride,
        } => {
            let loaded = load(&model)?;
            let mut rng = trial_rng(seed, 0);
            let sig = if let Some(a) = alpha {
                ControlSignal::constant(Control::Alpha(a), horizon)?
            } else if let Some(v) = vertex {
                ControlSignal::constant(Control::Vertex(v), horizon)?
            } else if let Some(c) = cycle {
                let controls: Vec<Control> = c.into_iter().map(Control::Vertex).collect();
                ControlSignal::periodic(&controls, dwell)?
            } else {
                ControlSignal::random_bang_bang(&mut rng, loaded.cs.vertex_count(), horizon, dwell, dwell.min(0.1))?
            };
            trajectory(&model, loaded, sig, horizon, dt, &start, stride)
        }
        Command::Criteria { model, omega } => criteria(&model, omega),
        Command::ErgodicSet {
            model,
            horizon,
            dt,
            trials,
            check_horizon,
            seed,
        } => ergodic(&model, horizon, dt, trials, check_horizon, seed),
        Command::Contraction {
            model,
            time,
            trials,
            seed,
        } => contraction(&model, &time, trials, seed),
        Command::Preset { action } => match action {
            PresetAction::List => Ok(PRESET_NAMES.join("\n")),
            PresetAction::Export { name, params, out } => {
                let p = preset(&name, &overrides(&params))?;
                let text = ModelFile::from_control_set(&p.control_set).to_json();
                match out {
                    Some(path) => {
                        let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
                        let file = path
                            .file_name()
                            .ok_or_else(|| Error::InvalidArgument("--out needs a file name".into()))?;
                        write_atomic(dir, &file.to_string_lossy(), format!("{text}\n").as_bytes())?;
                        Ok(format!("wrote {}", path.display()))
                    }
                    None => Ok(text),
                }
            }
        },
    }
}

fn perron(m: &ModelArgs, alpha: Option<f64>) -> Result<String> {
    let loaded = load(m)?;
    let mut targets = Vec::new();
    match (&loaded.cs, alpha) {
        (cs, Some(a)) => targets.push((format!("alpha={a}"), cs.at(a)?)),
        (ControlSet::Segment(s), None) => {
            let star = find_alpha_star(s)?;
            targets.push((format!("alpha={}", s.lo()), s.at(s.lo())?));
            targets.push((format!("alpha={}", s.hi()), s.at(s.hi())?));
            targets.push((format!("alpha*={}", star.alpha), s.at(star.alpha)?));
        }
        (cs, None) => {
            for (i, v) in cs.vertices().into_iter().enumerate() {
                targets.push((format!("vertex {i}"), v));
            }
        }
    }
    let mut entries = Vec::new();
    let mut line = Vec::new();
    for (label, matrix) in targets {
        let sd = matrix.spectral()?;
        line.push(format!("{label}: lambda={:.10}", sd.perron.lambda));
        entries.push(json!({
            "label": label,
            "lambda": sd.perron.lambda,
            "e": vec_of(&sd.perron.e),
            "phi": vec_of(&sd.perron.phi),
            "spectralGap": sd.spectral_gap(),
        }));
    }
    write_json(&m.out, "summary.json", &json!({
        "command": "perron",
        "model": loaded.label,
        "entries": entries,
    }))?;
    Ok(line.join("; "))
}

fn sweep(m: &ModelArgs, points: usize) -> Result<String> {
    let loaded = load(m)?;
    let seg = loaded.cs.as_segment()?;
    if points == 0 {
        return Err(Error::InvalidArgument("--points must be positive".into()));
    }
    let count = if seg.lo() == seg.hi() { 1 } else { points };
    let mut csv = String::from("alpha,lambda,dlambda\n");
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for k in 0..count {
        let alpha = if count == 1 {
            seg.lo()
        } else {
            seg.lo() + (seg.hi() - seg.lo()) * k as f64 / (count - 1) as f64
        };
        let lambda = seg.lambda(alpha)?;
        let d = perron_derivative(seg, alpha)?;
        csv.push_str(&format!("{alpha},{lambda},{d}\n"));
        if lambda > best.1 {
            best = (alpha, lambda);
        }
    }
    write_atomic(&m.out, "lambda_sweep.csv", csv.as_bytes())?;
    let star = find_alpha_star(seg)?;
    write_json(&m.out, "summary.json", &json!({
        "command": "sweep",
        "model": loaded.label,
        "rows": count,
        "gridArgmax": best.0,
        "gridMax": best.1,
        "alphaStar": star.alpha,
        "lambdaStar": star.lambda,
        "boundary": star.boundary,
    }))?;
    Ok(format!("{count} rows; alpha*={:.8} lambda*={:.10}", star.alpha, star.lambda))
}

struct Closed {
    horizon: f64,
    step: f64,
    start: Option<Vec<f64>>,
    stride: usize,
    cycle_tol: f64,
}

fn growth(m: &ModelArgs, grid: usize, opts: SolverOptions, c: Closed) -> Result<String> {
    let Closed { horizon, step, ref start, stride, cycle_tol } = c;
    let loaded = load(m)?;
    let cs = &loaded.cs;
    let (fine, coarse) = solve_pair(cs, grid, &opts)?;
    let slack = lambda_vs_constant(&fine, &coarse, cs)?;
    let mut csv = Vec::new();
    fine.write_csv(&mut csv)?;
    write_atomic(&m.out, "hj_solution.csv", &csv)?;
    write_json(&m.out, "hj_solution.json", &fine.header())?;

    let y0 = start_point(start, cs.dim())?;
    let traj = feedback_trajectory(&fine, &y0, horizon, step)?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv, stride)?;
    write_atomic(&m.out, "trajectory.csv", &csv)?;
    let attractor = classify_attractor(&traj, horizon / 2.0, FIX_TOL, cycle_tol);
    let realized = traj.logmass.last().copied().unwrap_or(0.0) / horizon;

    let star = match cs {
        ControlSet::Segment(s) => Some(find_alpha_star(s)?),
        ControlSet::Vertices(_) => None,
    };
    write_json(&m.out, "summary.json", &json!({
        "command": "growth",
        "model": loaded.label,
        "n": cs.dim(),
        "grid": grid,
        "lambda": fine.lambda,
        "lambdaCoarse": coarse.lambda,
        "gridError": slack.grid_error,
        "bestConstant": slack.best_constant,
        "slack": slack.slack,
        "certified": slack.certified,
        "alphaStar": star.map(|s| s.alpha),
        "iterations": fine.iterations,
        "residual": fine.residual,
        "dt": fine.dt(),
        "horizon": horizon,
        "realizedRate": realized,
        "attractor": attractor,
    }))?;
    let class = match &attractor {
        crate::hj::Attractor::FixedPoint(_) => "FixedPoint".to_string(),
        crate::hj::Attractor::LimitCycle { period } => format!("LimitCycle(period={period:.3})"),
        crate::hj::Attractor::Undetermined => "Undetermined".to_string(),
    };
    Ok(format!(
        "lambda={:.8} (N={grid}, gridError={:.2e}) bestConstant={:.8} attractor={class}",
        fine.lambda, slack.grid_error, slack.best_constant
    ))
}

fn trajectory(
    m: &ModelArgs,
    loaded: Loaded,
    sig: ControlSignal,
    horizon: f64,
    dt: f64,
    start: &Option<Vec<f64>>,
    stride: usize,
) -> Result<String> {
    let y0 = start_point(start, loaded.cs.dim())?;
    // Clip a cyclic signal to the horizon by repeating it.
    let mut pieces = Vec::new();
    let mut elapsed = 0.0;
    'fill: loop {
        for p in sig.pieces() {
            let d = p.duration.min(horizon - elapsed);
            if d <= horizon * 1e-12 {
                break 'fill;
            }
            pieces.push(crate::dynamics::Piece { duration: d, control: p.control });
            elapsed += d;
        }
    }
    let full = ControlSignal::new(pieces)?;
    let dt = dt.min(full.min_duration());
    let traj = integrate_projected(&y0, &loaded.cs, &full, dt)?;
    let mut csv = Vec::new();
    traj.write_csv(&mut csv, stride)?;
    write_atomic(&m.out, "trajectory.csv", &csv)?;
    let rate = traj.logmass.last().copied().unwrap_or(0.0) / horizon;
    write_json(&m.out, "summary.json", &json!({
        "command": "trajectory",
        "model": loaded.label,
        "horizon": horizon,
        "pieces": full.pieces().len(),
        "rate": rate,
        "final": traj.last_state(),
    }))?;
    Ok(format!("rate={rate:.8} over {horizon}"))
}

fn criteria(m: &ModelArgs, omega: Option<Vec<f64>>) -> Result<String> {
    let loaded = load(m)?;
    let seg = loaded.cs.as_segment()?;
    let omegas = omega.unwrap_or_else(|| log_omegas(-2.0, 2.0, 41));
    if omegas.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument("frequencies must be finite and nonnegative".into()));
    }
    let report = build_report(seg, &omegas)?;
    write_json(&m.out, "criteria.json", &report)?;
    let mut csv = Vec::new();
    write_omega_sweep(&mut csv, &report.floquet_second_at)?;
    write_atomic(&m.out, "omega_sweep.csv", &csv)?;
    let verdict = if report.high_freq > 0.0 { "periodic beats constant" } else { "no high-frequency gain" };
    let mut summary = serde_json::to_value(&report)?;
    if let Value::Object(map) = &mut summary {
        map.insert("command".into(), json!("criteria"));
        map.insert("model".into(), json!(loaded.label));
        map.insert("verdict".into(), json!(verdict));
    }
    write_json(&m.out, "summary.json", &summary)?;
    Ok(format!(
        "alpha*={:.8} lambda*={:.10} highFreq={:+.6e} legendre={:+.6e} identityResidual={:.1e}: {verdict}",
        report.alpha_star, report.lambda_star, report.high_freq, report.legendre, report.identity_residual
    ))
}

fn ergodic(m: &ModelArgs, horizon: f64, dt: f64, trials: usize, check_horizon: f64, seed: u64) -> Result<String> {
    let loaded = load(m)?;
    let seg = loaded.cs.as_segment()?;
    let b = trace_boundary(seg, horizon, dt)?;
    let mut csv = Vec::new();
    b.write_csv(&mut csv)?;
    write_atomic(&m.out, "ergodic_boundary.csv", &csv)?;
    let report = invariance_check(&b, &loaded.cs, trials, check_horizon, seed)?;
    write_json(&m.out, "summary.json", &json!({
        "command": "ergodic-set",
        "model": loaded.label,
        "points": b.polyline.len(),
        "zLow": b.z_low,
        "zHigh": b.z_high,
        "invariance": report,
    }))?;
    Ok(format!(
        "{} boundary points; inside {}/{} attract {}/{} delta={:.3e}",
        b.polyline.len(),
        report.inside_pass,
        trials,
        report.attract_pass,
        trials,
        report.delta_boundary
    ))
}

fn contraction(m: &ModelArgs, times: &[f64], trials: usize, seed: u64) -> Result<String> {
    let loaded = load(m)?;
    let mut reports = Vec::new();
    for &t in times {
        reports.push(verify_contraction(&loaded.cs, t, trials, seed)?);
    }
    let line: Vec<String> = reports.iter().map(|r| format!("t={}: {}/{}", r.t, r.passes, r.trials)).collect();
    let mu = reports.first().map(|r| r.mu);
    write_json(&m.out, "summary.json", &json!({
        "command": "contraction",
        "model": loaded.label,
        "mu": mu,
        "reports": reports,
    }))?;
    Ok(format!("mu={:.8}; {}", mu.unwrap_or(f64::NAN), line.join(", ")))
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NoConvergence { .. } => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

pub fn error_json(kind: &str, message: &str) -> String {
    json!({ "error": kind, "message": message }).to_string()
}

/// Parses `args`, runs the command and reports on stdout/stderr. Returns
/// the exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{}", error_json("Usage", e.to_string().trim()));
            return 2;
        }
    };
    match run(cli) {
        Ok(line) => {
            println!("{line}");
            0
        }
        Err(e) => {
            eprintln!("{}", error_json(e.kind(), &e.to_string()));
            exit_code(&e)
        }
    }
}
