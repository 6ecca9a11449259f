//! Region enclosed by the two extremal constant-control trajectories of a
//! segment, with membership, distance and invariance checks.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{drive_projected, ControlSignal, SimplexPoint, Stepper, Trajectory};
use crate::error::{Error, Result};
use crate::matrices::{ControlSet, Segment};
use crate::sampling::{map_trials, trial_rng, uniform_simplex};

/// A curve is considered settled once one step moves it less than this.
pub const SETTLE_STEP: f64 = 1e-9;
/// Largest admissible distance between a settled curve and its limit point.
pub const LIMIT_TOL: f64 = 1e-6;
/// Trajectories may leave the region by this much (l1) in invariance checks.
pub const INSIDE_TOL: f64 = 1e-3;
/// Terminal distance required by the attraction check.
pub const ATTRACT_TOL: f64 = 1e-2;

const POLYLINE_POINTS: f64 = 400.0;
const DEGENERATE_TOL: f64 = 1e-8;
const EDGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ErgodicBoundary {
    /// From `e(lo)` under the constant control `hi`.
    pub curve_from_low: Trajectory,
    /// From `e(hi)` under the constant control `lo`.
    pub curve_from_high: Trajectory,
    /// Closed polyline for `n = 3` (first point not repeated), interval
    /// endpoints for `n = 2`, a single point when `lo == hi`.
    pub polyline: Vec<Vec<f64>>,
    /// Set when crossings between the two curves were cut away.
    pub pruned: bool,
    pub z_low: Vec<f64>,
    pub z_high: Vec<f64>,
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn trace(start: &[f64], m: &DMatrix<f64>, target: &[f64], horizon: f64, dt: f64) -> Result<Trajectory> {
    let steps = (horizon / dt).ceil().max(1.0) as usize;
    let h = horizon / steps as f64;
    let mut y = start.to_vec();
    let mut prev = y.clone();
    let mut stepper = Stepper::new(y.len());
    let mut traj = Trajectory::default();
    let mut r = 0.0;
    traj.push(0.0, &y, r);
    for k in 1..=steps {
        prev.copy_from_slice(&y);
        let t = k as f64 * h;
        r += stepper
            .projected(m, &mut y, h)
            .map_err(|_| Error::NonPositiveState { t })?;
        traj.push(t, &y, r);
        if l1(&prev, &y) < SETTLE_STEP {
            break;
        }
    }
    let distance = l1(&y, target);
    if distance > LIMIT_TOL {
        return Err(Error::HorizonTooShort { distance });
    }
    Ok(traj)
}

/// Keeps points at least `spacing` apart in l1, plus both ends.
fn decimate(states: &[Vec<f64>], spacing: f64) -> Vec<Vec<f64>> {
    let mut out = vec![states[0].clone()];
    for s in &states[1..states.len() - 1] {
        if l1(s, out.last().unwrap()) >= spacing {
            out.push(s.clone());
        }
    }
    if states.len() > 1 {
        out.push(states[states.len() - 1].clone());
    }
    out
}

fn length(points: &[Vec<f64>]) -> f64 {
    points.windows(2).map(|w| l1(&w[0], &w[1])).sum()
}

/// Proper crossing of `p0p1` and `q0q1` in the `(y1, y2)` chart.
fn crossing(p0: &[f64], p1: &[f64], q0: &[f64], q1: &[f64]) -> Option<(f64, f64)> {
    let (rx, ry) = (p1[0] - p0[0], p1[1] - p0[1]);
    let (sx, sy) = (q1[0] - q0[0], q1[1] - q0[1]);
    let den = rx * sy - ry * sx;
    if den == 0.0 {
        return None;
    }
    let (dx, dy) = (q0[0] - p0[0], q0[1] - p0[1]);
    let t = (dx * sy - dy * sx) / den;
    let u = (dx * ry - dy * rx) / den;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some((t, u))
    } else {
        None
    }
}

fn lerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

struct Crossing {
    i: usize,
    j: usize,
    point: Vec<f64>,
}

/// Joins the two curves into a closed polyline, cutting the parts that wind
/// inside the region near either limit point.
fn close_region(low: &[Vec<f64>], high: &[Vec<f64>], z_low: &[f64], z_high: &[f64]) -> (Vec<Vec<f64>>, bool) {
    let (nl, nh) = (low.len() - 1, high.len() - 1);
    let mut near_high: Vec<Crossing> = Vec::new();
    let mut near_low: Vec<Crossing> = Vec::new();
    for i in 0..nl {
        for j in 0..nh {
            if (i == 0 && j == nh - 1) || (i == nl - 1 && j == 0) {
                continue;
            }
            if let Some((t, _)) = crossing(&low[i], &low[i + 1], &high[j], &high[j + 1]) {
                let point = lerp(&low[i], &low[i + 1], t);
                let c = Crossing { i, j, point };
                if l1(&c.point, z_high) < l1(&c.point, z_low) {
                    near_high.push(c);
                } else {
                    near_low.push(c);
                }
            }
        }
    }
    let p = near_high.into_iter().min_by_key(|c| (c.i, c.j));
    let q = near_low.into_iter().min_by_key(|c| (c.j, c.i));
    let unpruned = || {
        let mut poly: Vec<Vec<f64>> = low.to_vec();
        poly.extend(high[..nh].iter().cloned());
        poly
    };
    if p.is_none() && q.is_none() {
        return (unpruned(), false);
    }
    let (low_from, high_to, mut poly) = match &q {
        Some(q) => (q.i + 1, q.j, vec![q.point.clone()]),
        None => (0, nh - 1, Vec::new()),
    };
    let (low_to, high_from) = match &p {
        Some(p) => (p.i, p.j + 1),
        None => (nl, 0),
    };
    if low_from > low_to + 1 || high_from > high_to + 1 {
        return (unpruned(), false);
    }
    poly.extend(low[low_from..=low_to].iter().cloned());
    if let Some(p) = &p {
        poly.push(p.point.clone());
    }
    poly.extend(high[high_from..=high_to].iter().cloned());
    (poly, true)
}

/// Integrates the two extremal curves and encloses the region between them.
pub fn trace_boundary(seg: &Segment, horizon: f64, dt: f64) -> Result<ErgodicBoundary> {
    let n = seg.dim();
    if n > 3 {
        return Err(Error::UnsupportedDimension(n));
    }
    if !(dt > 0.0 && horizon > 0.0 && dt.is_finite() && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("need positive horizon and dt, got {horizon}, {dt}")));
    }
    let [low_m, high_m] = seg.endpoints();
    let z_low: Vec<f64> = low_m.spectral()?.perron.e.iter().copied().collect();
    let z_high: Vec<f64> = high_m.spectral()?.perron.e.iter().copied().collect();
    let curve_from_low = trace(&z_low, high_m.entries(), &z_high, horizon, dt)?;
    let curve_from_high = trace(&z_high, low_m.entries(), &z_low, horizon, dt)?;

    let (polyline, pruned) = if seg.lo() == seg.hi() {
        (vec![z_low.clone()], false)
    } else if n == 2 {
        (vec![z_low.clone(), z_high.clone()], false)
    } else {
        let total = length(&curve_from_low.states) + length(&curve_from_high.states);
        let spacing = (total / POLYLINE_POINTS).max(1e-7);
        let low = decimate(&curve_from_low.states, spacing);
        let high = decimate(&curve_from_high.states, spacing);
        close_region(&low, &high, &z_low, &z_high)
    };
    Ok(ErgodicBoundary {
        curve_from_low,
        curve_from_high,
        polyline,
        pruned,
        z_low,
        z_high,
    })
}

/// Smallest l1 distance from `y` to the segment `[a, b]`.
///
/// The objective is convex and piecewise linear in the segment parameter,
/// so its minimum sits at a kink or an end.
fn l1_to_segment(y: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut best = l1(y, a).min(l1(y, b));
    for k in 0..y.len() {
        let d = b[k] - a[k];
        if d != 0.0 {
            let t = (y[k] - a[k]) / d;
            if t > 0.0 && t < 1.0 {
                best = best.min(l1(y, &lerp(a, b, t)));
            }
        }
    }
    best
}

impl ErgodicBoundary {
    pub fn dim(&self) -> usize {
        self.z_low.len()
    }

    pub fn is_degenerate(&self) -> bool {
        self.polyline.len() == 1
    }

    /// Smallest coordinate met along either curve.
    pub fn delta(&self) -> f64 {
        self.curve_from_low
            .states
            .iter()
            .chain(&self.curve_from_high.states)
            .flat_map(|s| s.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    fn edges(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        let p = &self.polyline;
        let closed = p.len() > 2;
        let count = if closed { p.len() } else { p.len().saturating_sub(1) };
        (0..count).map(move |k| (p[k].as_slice(), p[(k + 1) % p.len()].as_slice()))
    }

    /// Distance from `y` to the polyline itself.
    pub fn distance_to_boundary(&self, y: &[f64]) -> f64 {
        if self.is_degenerate() {
            return l1(y, &self.polyline[0]);
        }
        self.edges().map(|(a, b)| l1_to_segment(y, a, b)).fold(f64::INFINITY, f64::min)
    }

    fn parity(&self, y: &[f64]) -> bool {
        let (x0, y0) = (y[0], y[1]);
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a[1] > y0) != (b[1] > y0) {
                let x = a[0] + (y0 - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if x0 < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn contains(&self, y: &SimplexPoint) -> bool {
        self.contains_raw(y.coords())
    }

    fn contains_raw(&self, y: &[f64]) -> bool {
        if self.is_degenerate() {
            return l1(y, &self.polyline[0]) <= DEGENERATE_TOL;
        }
        if self.dim() == 2 {
            let (lo, hi) = {
                let (a, b) = (self.polyline[0][0], self.polyline[1][0]);
                (a.min(b), a.max(b))
            };
            return y[0] >= lo - EDGE_TOL && y[0] <= hi + EDGE_TOL;
        }
        self.parity(y) || self.distance_to_boundary(y) <= EDGE_TOL
    }

    /// l1 distance from `y` to the region.
    pub fn distance(&self, y: &SimplexPoint) -> f64 {
        self.distance_raw(y.coords())
    }

    fn distance_raw(&self, y: &[f64]) -> f64 {
        if !self.is_degenerate() && self.contains_raw(y) {
            return 0.0;
        }
        self.distance_to_boundary(y)
    }

    /// True when no two non-adjacent edges of the closed polyline cross.
    pub fn is_simple(&self) -> bool {
        let p = &self.polyline;
        let m = p.len();
        if m < 4 {
            return true;
        }
        for i in 0..m {
            for j in i + 2..m {
                if i == 0 && j == m - 1 {
                    continue;
                }
                let t = crossing(&p[i], &p[(i + 1) % m], &p[j], &p[(j + 1) % m]);
                if t.is_some() {
                    return false;
                }
            }
        }
        true
    }

    /// Rows `y1,...,yn` of the polyline.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.dim()).map(|i| format!("y{i}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for p in &self.polyline {
            let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub trials: usize,
    pub inside_pass: usize,
    pub attract_pass: usize,
    pub delta_boundary: f64,
    pub pruned: bool,
    /// Largest l1 excursion outside the region over the invariance trials.
    pub worst_excursion: f64,
    /// Largest terminal distance over the attraction trials.
    pub worst_terminal_distance: f64,
}

const MAX_REJECTIONS: usize = 1_000_000;
const MEAN_DWELL: f64 = 1.0;
const MIN_DWELL: f64 = 0.1;
const CHECK_DT: f64 = 0.05;

fn sample_start(b: &ErgodicBoundary, rng: &mut crate::sampling::TrialRng, inside: bool) -> Result<Vec<f64>> {
    if inside && b.is_degenerate() {
        return Ok(b.z_low.clone());
    }
    for _ in 0..MAX_REJECTIONS {
        let y = uniform_simplex(rng, b.dim());
        if b.contains_raw(&y) == inside {
            return Ok(y);
        }
    }
    Err(Error::InvalidArgument("could not sample a start point".into()))
}

/// Random bang-bang runs from inside (must stay within [`INSIDE_TOL`]) and
/// from outside (must end within [`ATTRACT_TOL`]).
pub fn invariance_check(
    b: &ErgodicBoundary,
    cs: &ControlSet,
    trials: usize,
    horizon: f64,
    seed: u64,
) -> Result<InvarianceReport> {
    if cs.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: b.dim(),
            found: cs.dim(),
        });
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let run = |index: usize| -> Result<(f64, f64)> {
        let mut rng = trial_rng(seed, index as u64);
        let inside = index < trials;
        let y0 = sample_start(b, &mut rng, inside)?;
        let sig = ControlSignal::random_bang_bang(&mut rng, cs.vertex_count(), horizon, MEAN_DWELL, MIN_DWELL)?;
        let mats = sig.resolve(cs)?;
        let mut excursion = 0.0f64;
        let (end, _) = drive_projected(&SimplexPoint::new(y0)?, &mats, &sig, horizon, CHECK_DT, |_, y, _| {
            if inside && excursion <= INSIDE_TOL {
                excursion = excursion.max(b.distance_raw(y));
            }
        })?;
        Ok((excursion, b.distance_raw(&end)))
    };
    let results = map_trials(2 * trials, run);
    let mut report = InvarianceReport {
        trials,
        inside_pass: 0,
        attract_pass: 0,
        delta_boundary: b.delta(),
        pruned: b.pruned,
        worst_excursion: 0.0,
        worst_terminal_distance: 0.0,
    };
    for (index, r) in results.into_iter().enumerate() {
        let (excursion, terminal) = r?;
        if index < trials {
            report.worst_excursion = report.worst_excursion.max(excursion);
            if excursion <= INSIDE_TOL {
                report.inside_pass += 1;
            }
        } else {
            report.worst_terminal_distance = report.worst_terminal_distance.max(terminal);
            if terminal <= ATTRACT_TOL {
                report.attract_pass += 1;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{default_preset, preset};
    use crate::sampling::trial_rng;
    use crate::spectral_derivatives::find_alpha_star;
    use std::collections::BTreeMap;

    fn dim2(a: f64) -> Segment {
        let p = preset("dim2", &[("a".to_string(), a)].into_iter().collect()).unwrap();
        p.segment().unwrap().clone()
    }

    fn pmca() -> (ControlSet, ErgodicBoundary) {
        let p = default_preset("pmca").unwrap();
        let b = trace_boundary(p.segment().unwrap(), 2000.0, 0.02).unwrap();
        (p.control_set, b)
    }

    #[test]
    fn dim2_interval() {
        for &a in &[0.1, 0.2, 0.35] {
            let b = trace_boundary(&dim2(a), 200.0, 0.01).unwrap();
            // z_alpha = (sqrt(1 - alpha), sqrt(alpha)) normalized.
            let z = |al: f64| {
                let (u, v) = ((1.0 - al).sqrt(), al.sqrt());
                vec![u / (u + v), v / (u + v)]
            };
            assert_eq!(b.polyline.len(), 2);
            assert!(l1(&b.polyline[0], &z(a)) < 1e-6);
            assert!(l1(&b.polyline[1], &z(1.0 - a)) < 1e-6);
            assert!(l1(b.curve_from_low.last_state().unwrap(), &z(1.0 - a)) < 1e-6);
            assert!(l1(b.curve_from_high.last_state().unwrap(), &z(a)) < 1e-6);
            // Swapping coordinates maps the set onto itself.
            let swapped: Vec<f64> = vec![b.polyline[1][1], b.polyline[1][0]];
            assert!(l1(&swapped, &b.polyline[0]) < 1e-9);
            assert!(b.contains(&SimplexPoint::barycenter(2)));
            assert!(!b.contains(&SimplexPoint::new(vec![0.99, 0.01]).unwrap()));
        }
    }

    #[test]
    fn curves_start_at_perron_points() {
        let (_, b) = pmca();
        assert!(l1(&b.curve_from_low.states[0], &b.z_low) < 1e-8);
        assert!(l1(&b.curve_from_high.states[0], &b.z_high) < 1e-8);
        assert!(b.delta() > 0.0);
        assert!(b.is_simple());
    }

    #[test]
    fn short_horizon_is_rejected() {
        let p = default_preset("pmca").unwrap();
        assert!(matches!(
            trace_boundary(p.segment().unwrap(), 1.0, 0.01),
            Err(Error::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn pmca_membership() {
        let (_, b) = pmca();
        let seg = default_preset("pmca").unwrap();
        let seg = seg.segment().unwrap();
        let star = find_alpha_star(seg).unwrap();
        let z: Vec<f64> = seg.spectral_at(star.alpha).unwrap().perron.e.iter().copied().collect();
        assert!(b.contains(&SimplexPoint::new(z).unwrap()));
        // Interior Perron vectors lie in the region.
        let mid: Vec<f64> = seg.spectral_at(5.0).unwrap().perron.e.iter().copied().collect();
        assert!(b.contains(&SimplexPoint::new(mid).unwrap()));
        for k in 0..3 {
            let mut v = vec![0.0; 3];
            v[k] = 1.0;
            let v = SimplexPoint::new(v).unwrap();
            assert!(!b.contains(&v));
            assert!(b.distance(&v) > 0.0);
        }
    }

    fn winding(b: &ErgodicBoundary, y: &[f64]) -> f64 {
        let mut total = 0.0;
        for (a, c) in b.edges() {
            let u = (a[0] - y[0], a[1] - y[1]);
            let v = (c[0] - y[0], c[1] - y[1]);
            total += (u.0 * v.1 - u.1 * v.0).atan2(u.0 * v.0 + u.1 * v.1);
        }
        total / std::f64::consts::TAU
    }

    #[test]
    fn parity_agrees_with_winding_number() {
        for b in [pmca().1, {
            let p = default_preset("limit-cycle").unwrap();
            trace_boundary(p.segment().unwrap(), 4000.0, 0.02).unwrap()
        }] {
            let mut rng = trial_rng(7, 0);
            let (x_lo, x_hi, y_lo, y_hi) = b.polyline.iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
                |(a, bb, c, d), p| (a.min(p[0]), bb.max(p[0]), c.min(p[1]), d.max(p[1])),
            );
            let mut inside = 0;
            for _ in 0..100 {
                // Sample the bounding box so both outcomes occur.
                use rand::Rng;
                let u = rng.gen_range(x_lo..x_hi);
                let v = rng.gen_range(y_lo..y_hi);
                let y = [u, v, 1.0 - u - v];
                let w = winding(&b, &y);
                assert!((w.round() - w).abs() < 1e-9);
                assert_eq!(b.parity(&y), w.round() != 0.0, "at {y:?}");
                inside += b.parity(&y) as usize;
            }
            assert!(inside > 0 && inside < 100);
        }
    }

    #[test]
    fn distance_to_segment_is_exact() {
        let a = [0.2, 0.3, 0.5];
        let c = [0.6, 0.1, 0.3];
        let y = [0.1, 0.6, 0.3];
        let d = l1_to_segment(&y, &a, &c);
        let brute = (0..=100_000)
            .map(|k| l1(&y, &lerp(&a, &c, k as f64 / 100_000.0)))
            .fold(f64::INFINITY, f64::min);
        assert!((d - brute).abs() < 1e-9);
        assert!(d <= brute);
    }

    #[test]
    fn degenerate_range_is_a_point() {
        let p = preset(
            "pmca",
            &[("a".to_string(), 4.0), ("A".to_string(), 4.0)].into_iter().collect::<BTreeMap<_, _>>(),
        )
        .unwrap();
        let b = trace_boundary(p.segment().unwrap(), 10.0, 0.01).unwrap();
        assert!(b.is_degenerate());
        let z = SimplexPoint::new(b.z_low.clone()).unwrap();
        assert!(b.contains(&z));
        assert!(!b.contains(&SimplexPoint::barycenter(3)));
        let r = invariance_check(&b, &p.control_set, 10, 300.0, 3).unwrap();
        assert_eq!(r.inside_pass, 10);
        assert_eq!(r.attract_pass, 10);
    }

    #[test]
    fn dim2_trajectories_end_in_interval() {
        let seg = dim2(0.2);
        let b = trace_boundary(&seg, 200.0, 0.01).unwrap();
        let cs = ControlSet::Segment(seg);
        let r = invariance_check(&b, &cs, 50, 100.0, 11).unwrap();
        assert_eq!(r.inside_pass, 50);
        assert_eq!(r.attract_pass, 50);
        assert!(r.worst_terminal_distance <= 1e-3);
    }

    #[test]
    fn pmca_invariance_sample() {
        let (cs, b) = pmca();
        let r = invariance_check(&b, &cs, 20, 200.0, 5).unwrap();
        assert_eq!(r.inside_pass, 20, "{r:?}");
        assert_eq!(r.attract_pass, 20, "{r:?}");
        let again = invariance_check(&b, &cs, 20, 200.0, 5).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn csv_rows() {
        let b = trace_boundary(&dim2(0.2), 200.0, 0.01).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "y1,y2");
        assert_eq!(lines.len(), 3);
    }
}
