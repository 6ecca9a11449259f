//! Hilbert's projective metric on the open positive cone.
//!
//! `d(x, y) = log max_{i,j} (x_i y_j) / (x_j y_i)` vanishes exactly on
//! proportional pairs. Linear flows generated by Metzler matrices are
//! nonexpansive for `d`, and strictly contracting with the explicit rate
//! `mu = inf_m min_{i != j} 2 sqrt(m_ij m_ji)` when every off-diagonal entry
//! of every admissible matrix is positive.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrices::{ControlSet, MetzlerMatrix};
use crate::sampling::{map_trials, positive_vector, trial_rng, uniform_simplex};

/// Coordinates below this are treated as lying on the cone boundary.
pub const MIN_COORDINATE: f64 = 1e-300;

/// A point of the open positive orthant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeVector(Vec<f64>);

impl ConeVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|&x| !x.is_finite() || x < MIN_COORDINATE) {
            return Err(Error::Domain);
        }
        Ok(Self(coords))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

pub fn hilbert_distance(x: &ConeVector, y: &ConeVector) -> Result<f64> {
    check_dims(x.dim(), y.dim())?;
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for (a, b) in x.0.iter().zip(&y.0) {
        let r = a.ln() - b.ln();
        hi = hi.max(r);
        lo = lo.min(r);
    }
    Ok((hi - lo).max(0.0))
}

/// Tangent seminorm `max_i h_i/x_i - min_j h_j/x_j`.
pub fn finsler_seminorm(h: &[f64], x: &ConeVector) -> Result<f64> {
    check_dims(x.dim(), h.len())?;
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for (hv, xv) in h.iter().zip(&x.0) {
        let r = hv / xv;
        hi = hi.max(r);
        lo = lo.min(r);
    }
    Ok(hi - lo)
}

/// `inf_a <q, |m - a I| x> / <q, x>` at a single point `x`.
///
/// The objective is convex piecewise linear in `a` with breakpoints at the
/// diagonal entries; its minimizer is the weighted median of `m_jj` with
/// weights `q_j x_j`.
pub fn lipschitz_ratio_at(q: &[f64], m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let n = x.len();
    let qx: f64 = q.iter().zip(x).map(|(a, b)| a * b).sum();
    let mut off = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                off += q[i] * m[(i, j)].abs() * x[j];
            }
        }
    }
    let mut diag: Vec<(f64, f64)> = (0..n).map(|j| (m[(j, j)], q[j] * x[j])).collect();
    diag.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = diag.iter().map(|d| d.1).sum();
    let mut acc = 0.0;
    let mut median = diag[n - 1].0;
    for &(value, weight) in &diag {
        acc += weight;
        if acc >= 0.5 * total {
            median = value;
            break;
        }
    }
    let spread: f64 = diag.iter().map(|&(v, w)| w * (v - median).abs()).sum();
    (off + spread) / qx
}

/// Sampled estimate of the Lipschitz bound of `l(x) = <q, m x> / <q, x>`
/// in the Hilbert metric.
///
/// The supremum over the cone is approximated from below by the simplex
/// vertices plus `samples` deterministic pseudo-random simplex points.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzEstimate {
    pub bound: f64,
    pub argmax: Vec<f64>,
}

pub fn payoff_lipschitz_bound(
    q: &ConeVector,
    m: &MetzlerMatrix,
    samples: usize,
) -> Result<LipschitzEstimate> {
    let n = m.dim();
    check_dims(n, q.dim())?;
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let mut best = LipschitzEstimate {
        bound: f64::NEG_INFINITY,
        argmax: Vec::new(),
    };
    let mut consider = |x: Vec<f64>| {
        let r = lipschitz_ratio_at(q.as_slice(), m.entries(), &x);
        if r > best.bound {
            best = LipschitzEstimate { bound: r, argmax: x };
        }
    };
    for k in 0..n {
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        consider(v);
    }
    let mut rng = trial_rng(0x11B5_0D, 0);
    for _ in 0..samples {
        consider(uniform_simplex(&mut rng, n));
    }
    Ok(best)
}

/// Minimum of `(g_ij + a f_ij)(g_ji + a f_ji)` over `a` in `[lo, hi]`.
fn min_pair_product(p: (f64, f64), q: (f64, f64), lo: f64, hi: f64) -> f64 {
    let eval = |a: f64| (p.0 + a * p.1) * (q.0 + a * q.1);
    let mut best = eval(lo).min(eval(hi));
    // Quadratic with leading coefficient p.1 * q.1; interior minimum only
    // when convex.
    let lead = p.1 * q.1;
    if lead > 0.0 {
        let vertex = -(p.0 * q.1 + q.0 * p.1) / (2.0 * lead);
        if vertex > lo && vertex < hi {
            best = best.min(eval(vertex));
        }
    }
    best
}

/// Explicit contraction rate, or `None` when some admissible matrix has a
/// vanishing off-diagonal entry.
pub fn contraction_rate_bound(cs: &ControlSet) -> Option<f64> {
    let mut mu = f64::INFINITY;
    match cs {
        ControlSet::Vertices(list) => {
            for m in list {
                let a = m.entries();
                let n = a.nrows();
                for i in 0..n {
                    for j in 0..n {
                        if i == j {
                            continue;
                        }
                        if a[(i, j)] <= 0.0 {
                            return None;
                        }
                        mu = mu.min(2.0 * (a[(i, j)] * a[(j, i)]).sqrt());
                    }
                }
            }
        }
        ControlSet::Segment(s) => {
            let (g, f) = (s.g(), s.f());
            let n = s.dim();
            for m in s.endpoints() {
                let a = m.entries();
                for i in 0..n {
                    for j in 0..n {
                        if i != j && a[(i, j)] <= 0.0 {
                            return None;
                        }
                    }
                }
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    let prod = min_pair_product(
                        (g[(i, j)], f[(i, j)]),
                        (g[(j, i)], f[(j, i)]),
                        s.lo(),
                        s.hi(),
                    );
                    mu = mu.min(2.0 * prod.max(0.0).sqrt());
                }
            }
        }
    }
    Some(mu)
}

/// One piece of a bang-bang signal: hold vertex `vertex` for `duration`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hold {
    pub vertex: usize,
    pub duration: f64,
}

/// Exact resolvent `R(t, M) x` for a piecewise-constant vertex signal.
pub fn propagate(vertices: &[MetzlerMatrix], pieces: &[Hold], x: &[f64]) -> DVector<f64> {
    let mut state = DVector::from_column_slice(x);
    for piece in pieces {
        let step = (vertices[piece.vertex].entries() * piece.duration).exp();
        state = step * state;
        let s = state.sum();
        state /= s;
    }
    state
}

/// Random bang-bang signal on `[0, t]` with exponential dwell times.
pub fn random_holds<R: rand::Rng + ?Sized>(
    rng: &mut R,
    vertex_count: usize,
    t: f64,
    mean_dwell: f64,
) -> Vec<Hold> {
    let mut pieces = Vec::new();
    let mut elapsed = 0.0;
    while elapsed < t {
        let dwell = -mean_dwell * (1.0 - rng.gen::<f64>()).ln();
        let duration = dwell.min(t - elapsed).max(0.0);
        pieces.push(Hold {
            vertex: rng.gen_range(0..vertex_count),
            duration,
        });
        elapsed += duration;
        if duration == 0.0 {
            break;
        }
    }
    pieces
}

/// Outcome of one contraction trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionTrial {
    pub before: f64,
    pub after: f64,
}

pub fn contraction_trial(
    vertices: &[MetzlerMatrix],
    pieces: &[Hold],
    x: &ConeVector,
    y: &ConeVector,
) -> Result<ContractionTrial> {
    let before = hilbert_distance(x, y)?;
    let rx = ConeVector::new(propagate(vertices, pieces, x.as_slice()).as_slice().to_vec())?;
    let ry = ConeVector::new(propagate(vertices, pieces, y.as_slice()).as_slice().to_vec())?;
    Ok(ContractionTrial {
        before,
        after: hilbert_distance(&rx, &ry)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub mu: f64,
    pub t: f64,
    pub trials: usize,
    pub passes: usize,
    /// Largest observed `d(R x, R y) / d(x, y)`.
    pub worst_ratio: f64,
}

/// Checks `d(R(t)x, R(t)y) <= exp(-mu t) d(x, y) + 1e-8` on random pairs
/// and random bang-bang signals.
pub fn verify_contraction(cs: &ControlSet, t: f64, trials: usize, seed: u64) -> Result<ContractionReport> {
    let mu = contraction_rate_bound(cs).ok_or(Error::MissingRate)?;
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t must be nonnegative, got {t}")));
    }
    let vertices = cs.vertices();
    let n = cs.dim();
    let factor = (-mu * t).exp();
    let outcomes = map_trials(trials, |k| {
        let mut rng = trial_rng(seed, k as u64);
        let x = ConeVector::new(positive_vector(&mut rng, n, 3.0))?;
        let y = ConeVector::new(positive_vector(&mut rng, n, 3.0))?;
        let pieces = random_holds(&mut rng, vertices.len(), t, (t / 4.0).max(1e-3));
        contraction_trial(&vertices, &pieces, &x, &y)
    });
    let mut passes = 0;
    let mut worst_ratio = 0.0f64;
    for outcome in outcomes {
        let trial = outcome?;
        if trial.after <= factor * trial.before + 1e-8 {
            passes += 1;
        }
        if trial.before > 0.0 {
            worst_ratio = worst_ratio.max(trial.after / trial.before);
        }
    }
    Ok(ContractionReport {
        mu,
        t,
        trials,
        passes,
        worst_ratio,
    })
}
