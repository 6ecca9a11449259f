//! Grid solver for the ergodic Hamilton-Jacobi equation
//! `-lambda + max_m (l(y, m) + <D u, b(y, m)>) = 0` on the simplex.
//!
//! The scheme is a semi-Lagrangian relative value iteration:
//!
//! ```text
//! w <- max_m [ dt l(y, m) + Interp(w, y + dt b(y, m)) ]
//! ```
//!
//! followed by subtracting the value at an anchor node. At the fixed point
//! the subtracted shift equals `lambda dt`. Controls range over the vertices
//! of the control set; ties go to the lowest vertex index.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{SimplexPoint, Stepper, Trajectory};
use crate::error::{Error, Result};
use crate::matrices::ControlSet;
use crate::spectral_derivatives::find_alpha_star;

/// Uniform grid on the simplex for `n` in `{2, 3}`.
///
/// For `n = 2` node `k` is `(1 - k/N, k/N)`. For `n = 3` nodes are
/// `(i, j, N - i - j) / N`, numbered with `i` major and `j` minor.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexGrid {
    n: usize,
    resolution: usize,
    nodes: Vec<Vec<f64>>,
}

impl SimplexGrid {
    pub fn new(n: usize, resolution: usize) -> Result<Self> {
        if !(n == 2 || n == 3) {
            return Err(Error::UnsupportedDimension(n));
        }
        if resolution < 2 {
            return Err(Error::InvalidArgument(format!("grid resolution must be at least 2, got {resolution}")));
        }
        let r = resolution as f64;
        let nodes = if n == 2 {
            (0..=resolution)
                .map(|k| {
                    let t = k as f64 / r;
                    vec![1.0 - t, t]
                })
                .collect()
        } else {
            let mut nodes = Vec::with_capacity((resolution + 1) * (resolution + 2) / 2);
            for i in 0..=resolution {
                for j in 0..=(resolution - i) {
                    let k = resolution - i - j;
                    nodes.push(vec![i as f64 / r, j as f64 / r, k as f64 / r]);
                }
            }
            nodes
        };
        Ok(Self { n, resolution, nodes })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.resolution as f64
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &[f64] {
        &self.nodes[index]
    }

    /// Index of node `(i, j, N - i - j)`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        let n = self.resolution;
        i * (n + 1) - i * i.saturating_sub(1) / 2 + j
    }

    /// Node closest to the barycenter (lowest index on ties).
    pub fn barycenter_node(&self) -> usize {
        let c = 1.0 / self.n as f64;
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, y) in self.nodes.iter().enumerate() {
            let d: f64 = y.iter().map(|v| (v - c) * (v - c)).sum();
            if d < best_d - 1e-15 {
                best_d = d;
                best = k;
            }
        }
        best
    }

    /// Interpolation cell containing `y` with barycentric weights.
    ///
    /// Points on a shared edge resolve to the cell with the smaller
    /// lexicographic corner.
    pub fn locate(&self, y: &[f64]) -> ([usize; 3], [f64; 3]) {
        let big_n = self.resolution;
        let r = big_n as f64;
        if self.n == 2 {
            let s = (y[1] * r).clamp(0.0, r);
            let k = (s.floor() as usize).min(big_n - 1);
            let f = s - k as f64;
            return ([k, k + 1, k], [1.0 - f, f, 0.0]);
        }
        let s1 = (y[0] * r).clamp(0.0, r);
        let s2 = (y[1] * r).clamp(0.0, r);
        let mut i0 = (s1.floor() as usize).min(big_n - 1);
        let mut j0 = (s2.floor() as usize).min(big_n - 1);
        // On the far edge i + j = N the floors can overshoot by one.
        if i0 + j0 > big_n - 1 {
            let excess = i0 + j0 - (big_n - 1);
            if j0 >= excess {
                j0 -= excess;
            } else {
                i0 -= excess - j0;
                j0 = 0;
            }
        }
        let f1 = s1 - i0 as f64;
        let f2 = s2 - j0 as f64;
        if f1 + f2 > 1.0 && i0 + j0 + 2 <= big_n {
            (
                [
                    self.index(i0 + 1, j0 + 1),
                    self.index(i0 + 1, j0),
                    self.index(i0, j0 + 1),
                ],
                [f1 + f2 - 1.0, 1.0 - f2, 1.0 - f1],
            )
        } else {
            (
                [self.index(i0, j0), self.index(i0 + 1, j0), self.index(i0, j0 + 1)],
                [1.0 - f1 - f2, f1, f2],
            )
        }
    }

    /// Piecewise-linear interpolant of nodal `values` at `y`.
    pub fn interpolate(&self, values: &[f64], y: &[f64]) -> f64 {
        let (idx, w) = self.locate(y);
        w[0] * values[idx[0]] + w[1] * values[idx[1]] + w[2] * values[idx[2]]
    }
}

/// Euler predictor `y + dt b` renormalized onto the simplex.
fn predict(m: &DMatrix<f64>, y: &[f64], dt: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    let mut my = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            my[i] += m[(i, j)] * y[j];
        }
    }
    let l: f64 = my.iter().sum();
    let mut z: Vec<f64> = (0..n).map(|i| (y[i] + dt * (my[i] - l * y[i])).max(0.0)).collect();
    let s: f64 = z.iter().sum();
    z.iter_mut().for_each(|v| *v /= s);
    (z, l)
}

/// Largest `|b(y, m)|_1` over grid nodes and vertices.
fn max_field_norm(grid: &SimplexGrid, vertices: &[DMatrix<f64>]) -> f64 {
    let mut best = 0.0f64;
    for m in vertices {
        for y in grid.nodes() {
            let n = y.len();
            let mut my = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    my[i] += m[(i, j)] * y[j];
                }
            }
            let l: f64 = my.iter().sum();
            let norm: f64 = (0..n).map(|i| (my[i] - l * y[i]).abs()).sum();
            best = best.max(norm);
        }
    }
    best
}

/// Precomputed value-iteration operator on one grid.
pub struct Scheme {
    grid: SimplexGrid,
    vertices: Vec<DMatrix<f64>>,
    dt: f64,
    /// Per vertex, per node: `dt * l(y, m)`.
    gains: Vec<Vec<f64>>,
    stencils: Vec<Vec<([u32; 3], [f64; 3])>>,
}

impl Scheme {
    /// Builds the operator; `dt` defaults to the CFL limit
    /// `h / max |b|_1` and larger values are rejected.
    pub fn new(cs: &ControlSet, grid: SimplexGrid, dt: Option<f64>) -> Result<Self> {
        if cs.dim() != grid.n() {
            return Err(Error::DimensionMismatch {
                expected: grid.n(),
                found: cs.dim(),
            });
        }
        let vertices: Vec<DMatrix<f64>> = cs.vertices().iter().map(|m| m.entries().clone()).collect();
        if vertices.len() > u8::MAX as usize {
            return Err(Error::InvalidArgument(format!("at most 255 vertices supported, got {}", vertices.len())));
        }
        let bmax = max_field_norm(&grid, &vertices);
        let limit = if bmax > 0.0 { grid.spacing() / bmax } else { grid.spacing() };
        let dt = match dt {
            None => limit,
            Some(d) if !(d > 0.0 && d.is_finite()) => {
                return Err(Error::InvalidArgument(format!("dt must be positive, got {d}")));
            }
            Some(d) if d > limit * (1.0 + 1e-12) => return Err(Error::CflViolation { dt: d, limit }),
            Some(d) => d,
        };
        let mut gains = Vec::with_capacity(vertices.len());
        let mut stencils = Vec::with_capacity(vertices.len());
        for m in &vertices {
            let mut g = Vec::with_capacity(grid.len());
            let mut s = Vec::with_capacity(grid.len());
            for y in grid.nodes() {
                let (z, l) = predict(m, y, dt);
                let (idx, w) = grid.locate(&z);
                g.push(dt * l);
                s.push(([idx[0] as u32, idx[1] as u32, idx[2] as u32], w));
            }
            gains.push(g);
            stencils.push(s);
        }
        Ok(Self {
            grid,
            vertices,
            dt,
            gains,
            stencils,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &SimplexGrid {
        &self.grid
    }

    fn update_range(&self, w: &[f64], start: usize, out: &mut [f64], policy: &mut [u8]) {
        for (offset, (o, p)) in out.iter_mut().zip(policy.iter_mut()).enumerate() {
            let node = start + offset;
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0u8;
            for (v, (gain, stencil)) in self.gains.iter().zip(&self.stencils).enumerate() {
                let (idx, wt) = &stencil[node];
                let val = gain[node]
                    + wt[0] * w[idx[0] as usize]
                    + wt[1] * w[idx[1] as usize]
                    + wt[2] * w[idx[2] as usize];
                if val > best {
                    best = val;
                    arg = v as u8;
                }
            }
            *o = best;
            *p = arg;
        }
    }

    /// One application of the (unanchored) operator.
    pub fn apply(&self, w: &[f64], out: &mut [f64], policy: &mut [u8]) {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            const CHUNK: usize = 4096;
            out.par_chunks_mut(CHUNK)
                .zip(policy.par_chunks_mut(CHUNK))
                .enumerate()
                .for_each(|(c, (o, p))| self.update_range(w, c * CHUNK, o, p));
        }
        #[cfg(not(feature = "parallel"))]
        self.update_range(w, 0, out, policy);
    }

    /// Greedy vertex at an arbitrary point, using the solver's lookahead.
    pub fn control_at(&self, u: &[f64], y: &[f64]) -> usize {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for (v, m) in self.vertices.iter().enumerate() {
            let (z, l) = predict(m, y, self.dt);
            let val = self.dt * l + self.grid.interpolate(u, &z);
            if val > best {
                best = val;
                arg = v;
            }
        }
        arg
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Time step; `None` selects the CFL limit.
    pub dt: Option<f64>,
    /// Stop when the sup-norm change of the anchored iterate is below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            dt: None,
            tol: 1e-10,
            max_iter: 2_000_000,
        }
    }
}

pub struct HJSolution {
    pub scheme: Scheme,
    /// Eigenfunction values, zero at `anchor`.
    pub u: Vec<f64>,
    pub lambda: f64,
    /// Maximizing vertex per node.
    pub feedback: Vec<usize>,
    pub iterations: usize,
    pub residual: f64,
    pub anchor: usize,
}

impl std::fmt::Debug for HJSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HJSolution")
            .field("n", &self.grid().n())
            .field("N", &self.grid().resolution())
            .field("lambda", &self.lambda)
            .field("iterations", &self.iterations)
            .field("residual", &self.residual)
            .finish()
    }
}

impl HJSolution {
    pub fn grid(&self) -> &SimplexGrid {
        &self.scheme.grid
    }

    pub fn dt(&self) -> f64 {
        self.scheme.dt
    }

    pub fn vertices(&self) -> &[DMatrix<f64>] {
        &self.scheme.vertices
    }

    /// Feedback control at an arbitrary simplex point.
    pub fn control_at(&self, y: &[f64]) -> usize {
        self.scheme.control_at(&self.u, y)
    }

    pub fn header(&self) -> SolutionHeader {
        SolutionHeader {
            n: self.grid().n(),
            grid: self.grid().resolution(),
            lambda: self.lambda,
            iterations: self.iterations,
            residual: self.residual,
            dt: self.dt(),
        }
    }

    /// Writes `y1,...,yn,u,feedback_vertex`, one row per node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.grid().n();
        let cols: Vec<String> = (1..=n).map(|i| format!("y{i}")).collect();
        writeln!(w, "{},u,feedback_vertex", cols.join(","))?;
        for (k, y) in self.grid().nodes().iter().enumerate() {
            let coords: Vec<String> = y.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{},{}", coords.join(","), self.u[k], self.feedback[k])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionHeader {
    pub n: usize,
    #[serde(rename = "N")]
    pub grid: usize,
    pub lambda: f64,
    pub iterations: usize,
    pub residual: f64,
    pub dt: f64,
}

/// Relative value iteration from an initial guess.
pub fn solve_from(scheme: Scheme, initial: Vec<f64>, opts: &SolverOptions) -> Result<HJSolution> {
    let len = scheme.grid.len();
    if initial.len() != len {
        return Err(Error::DimensionMismatch {
            expected: len,
            found: initial.len(),
        });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {}", opts.tol)));
    }
    let anchor = scheme.grid.barycenter_node();
    let mut w = initial;
    let a0 = w[anchor];
    w.iter_mut().for_each(|v| *v -= a0);
    let mut next = vec![0.0; len];
    let mut policy = vec![0u8; len];
    let mut residual = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        scheme.apply(&w, &mut next, &mut policy);
        let shift = next[anchor];
        residual = 0.0;
        for (nv, ov) in next.iter_mut().zip(&w) {
            *nv -= shift;
            residual = residual.max((*nv - ov).abs());
        }
        std::mem::swap(&mut w, &mut next);
        if !residual.is_finite() {
            break;
        }
        if residual <= opts.tol {
            let lambda = shift / scheme.dt;
            return Ok(HJSolution {
                u: w,
                lambda,
                feedback: policy.iter().map(|&p| p as usize).collect(),
                iterations: iter,
                residual,
                anchor,
                scheme,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

pub fn solve_ergodic(cs: &ControlSet, grid: SimplexGrid, opts: &SolverOptions) -> Result<HJSolution> {
    let len = grid.len();
    let scheme = Scheme::new(cs, grid, opts.dt)?;
    solve_from(scheme, vec![0.0; len], opts)
}

/// Interpolates a coarse solution onto another grid.
pub fn prolongate(coarse: &HJSolution, fine: &SimplexGrid) -> Vec<f64> {
    fine.nodes()
        .iter()
        .map(|y| coarse.grid().interpolate(&coarse.u, y))
        .collect()
}

/// Solves on `N / 2` and then on `N`, warm-started from the coarse
/// solution. Returns `(fine, coarse)`.
pub fn solve_pair(cs: &ControlSet, resolution: usize, opts: &SolverOptions) -> Result<(HJSolution, HJSolution)> {
    let n = cs.dim();
    let coarse_grid = SimplexGrid::new(n, (resolution / 2).max(2))?;
    let coarse_opts = SolverOptions { dt: None, ..*opts };
    let coarse = solve_ergodic(cs, coarse_grid, &coarse_opts)?;
    let fine_grid = SimplexGrid::new(n, resolution)?;
    let initial = prolongate(&coarse, &fine_grid);
    let scheme = Scheme::new(cs, fine_grid, opts.dt)?;
    let fine = solve_from(scheme, initial, opts)?;
    Ok((fine, coarse))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountedResult {
    pub epsilon: f64,
    /// `epsilon * u_epsilon(anchor)`.
    pub lambda_estimate: f64,
    pub iterations: usize,
}

/// Discounted fixed point `u = max_m [dt l + (1 - eps dt) Interp(u, .)]`,
/// reported as `eps u(anchor)`.
///
/// The constant mode contracts only at rate `1 - eps dt`; once the
/// non-constant part of an update is negligible, the remaining uniform
/// offset is summed in closed form.
pub fn solve_discounted(scheme: &Scheme, epsilon: f64, initial: Option<&[f64]>, opts: &SolverOptions) -> Result<DiscountedResult> {
    if !(epsilon > 0.0) || epsilon * scheme.dt >= 1.0 {
        return Err(Error::InvalidArgument(format!("invalid discount rate {epsilon}")));
    }
    let len = scheme.grid.len();
    let anchor = scheme.grid.barycenter_node();
    let rho = 1.0 - epsilon * scheme.dt;
    let mut u = match initial {
        Some(v) => v.to_vec(),
        None => vec![0.0; len],
    };
    let mut next = vec![0.0; len];
    let mut policy = vec![0u8; len];
    let mut residual = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let scaled: Vec<f64> = u.iter().map(|v| v * rho).collect();
        scheme.apply(&scaled, &mut next, &mut policy);
        let shift = next[anchor] - u[anchor];
        let mut spread = 0.0f64;
        residual = 0.0;
        for (nv, ov) in next.iter().zip(&u) {
            spread = spread.max((nv - ov - shift).abs());
            residual = residual.max((nv - ov).abs());
        }
        std::mem::swap(&mut u, &mut next);
        if residual <= opts.tol * (1.0 + u[anchor].abs()) {
            return Ok(DiscountedResult {
                epsilon,
                lambda_estimate: epsilon * u[anchor],
                iterations: iter,
            });
        }
        if spread <= 1e-3 * shift.abs() {
            // Geometric tail of a uniform offset: shift * (rho + rho^2 + ...).
            let tail = shift * rho / (1.0 - rho);
            u.iter_mut().for_each(|v| *v += tail);
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

/// Closed-loop trajectory under the solution's feedback, re-evaluated at
/// every step. `logmass` accumulates the payoff integral.
pub fn feedback_trajectory(sol: &HJSolution, y0: &SimplexPoint, horizon: f64, dt: f64) -> Result<Trajectory> {
    let mut traj = Trajectory::default();
    feedback_run(sol, y0, horizon, dt, 1, |t, y, r| {
        traj.times.push(t);
        traj.states.push(y.to_vec());
        traj.logmass.push(r);
    })?;
    Ok(traj)
}

/// Same as [`feedback_trajectory`] but only reports every `stride`-th step
/// (and the last) to `visit`. Returns the final point and payoff integral.
pub fn feedback_run<V: FnMut(f64, &[f64], f64)>(
    sol: &HJSolution,
    y0: &SimplexPoint,
    horizon: f64,
    dt: f64,
    stride: usize,
    mut visit: V,
) -> Result<(Vec<f64>, f64)> {
    if y0.dim() != sol.grid().n() {
        return Err(Error::DimensionMismatch {
            expected: sol.grid().n(),
            found: y0.dim(),
        });
    }
    if !(dt > 0.0 && horizon > 0.0) {
        return Err(Error::InvalidArgument("horizon and dt must be positive".into()));
    }
    let steps = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
    let h = horizon / steps as f64;
    let stride = stride.max(1);
    let mut y = y0.coords().to_vec();
    let mut stepper = Stepper::new(y.len());
    let mut r = 0.0;
    visit(0.0, &y, r);
    for s in 1..=steps {
        let v = sol.control_at(&y);
        let t = s as f64 * h;
        r += stepper
            .projected(&sol.vertices()[v], &mut y, h)
            .map_err(|_| Error::NonPositiveState { t })?;
        if s % stride == 0 || s == steps {
            visit(t, &y, r);
        }
    }
    Ok((y, r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Attractor {
    FixedPoint(Vec<f64>),
    LimitCycle { period: f64 },
    Undetermined,
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Recurrences faster than this many samples count as chattering.
pub const CHATTER_SAMPLES: f64 = 20.0;

/// Classifies the long-time behavior of a trajectory after `transient`.
///
/// Chattering between vertices with a period below [`CHATTER_SAMPLES`]
/// samples is reported as a fixed point at the time average.
pub fn classify_attractor(traj: &Trajectory, transient: f64, tol_fix: f64, tol_cycle: f64) -> Attractor {
    let Some(&end) = traj.times.last() else {
        return Attractor::Undetermined;
    };
    if !(transient > 0.0) || end < 2.0 * transient {
        return Attractor::Undetermined;
    }
    let start = traj.times.partition_point(|&t| t < transient);
    let times = &traj.times[start..];
    let states = &traj.states[start..];
    let window = transient / 4.0;

    let mut fixed = true;
    let mut min_speed = f64::INFINITY;
    let mut j = 0;
    let mut path = vec![0.0; times.len()];
    for k in 1..times.len() {
        path[k] = path[k - 1] + l1(&states[k], &states[k - 1]);
    }
    for i in 0..times.len() {
        while j < times.len() && times[j] < times[i] + window {
            j += 1;
        }
        if j == times.len() {
            break;
        }
        if l1(&states[j], &states[i]) > tol_fix {
            fixed = false;
        }
        min_speed = min_speed.min((path[j] - path[i]) / (times[j] - times[i]));
    }
    if fixed {
        return Attractor::FixedPoint(states.last().unwrap().clone());
    }

    let reference = &states[0];
    // A recurrence episode starts when the path re-enters the tol_cycle
    // ball after leaving twice that radius; its time is the closest pass.
    let mut recurrences = Vec::new();
    let mut armed = false;
    let mut episode: Option<(f64, f64)> = None;
    for (t, y) in times.iter().zip(states) {
        let d = l1(y, reference);
        if d <= tol_cycle {
            if armed && episode.map_or(true, |(_, best)| d < best) {
                episode = Some((*t, d));
            }
        } else {
            if let Some((tc, _)) = episode.take() {
                recurrences.push(tc);
                armed = false;
            }
            if d > 2.0 * tol_cycle {
                armed = true;
            }
        }
    }
    if let Some((tc, _)) = episode {
        recurrences.push(tc);
    }
    let mut marks = vec![times[0]];
    marks.extend(recurrences);
    if marks.len() < 4 {
        return Attractor::Undetermined;
    }
    let intervals: Vec<f64> = marks.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = intervals.iter().sum::<f64>() / intervals.len() as f64;
    let var = intervals.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / intervals.len() as f64;
    let cv = var.sqrt() / mean;
    let sample = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if cv <= 0.05 && mean < CHATTER_SAMPLES * sample {
        // Switching every few steps around a relaxed optimum.
        let mut centroid = vec![0.0; states[0].len()];
        for s in states {
            centroid.iter_mut().zip(s).for_each(|(c, v)| *c += v);
        }
        centroid.iter_mut().for_each(|c| *c /= states.len() as f64);
        return Attractor::FixedPoint(centroid);
    }
    if cv <= 0.05 && min_speed > tol_fix / transient {
        Attractor::LimitCycle { period: mean }
    } else {
        Attractor::Undetermined
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlackReport {
    pub lambda: f64,
    pub best_constant: f64,
    /// `lambda - best_constant`.
    pub slack: f64,
    /// `|lambda(N) - lambda(N/2)|`.
    pub grid_error: f64,
    /// Slack exceeds three grid errors.
    pub certified: bool,
}

/// Best growth rate of a constant control: `max lambda(alpha)` for a
/// segment, the best vertex otherwise.
pub fn best_constant_rate(cs: &ControlSet) -> Result<f64> {
    match cs {
        ControlSet::Segment(s) => Ok(find_alpha_star(s)?.lambda),
        ControlSet::Vertices(_) => cs.max_vertex_lambda(),
    }
}

pub fn lambda_vs_constant(fine: &HJSolution, coarse: &HJSolution, cs: &ControlSet) -> Result<SlackReport> {
    let best_constant = best_constant_rate(cs)?;
    let slack = fine.lambda - best_constant;
    let grid_error = (fine.lambda - coarse.lambda).abs();
    Ok(SlackReport {
        lambda: fine.lambda,
        best_constant,
        slack,
        grid_error,
        certified: slack > 3.0 * grid_error,
    })
}
