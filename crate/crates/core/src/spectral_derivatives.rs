//! Perron and Floquet eigenvalue derivatives along a segment of controls
//! `G + alpha F`, and the second-order criteria built from them.
//!
//! With `kappa_i = lambda_1 - lambda_i` and `P_i = (phi_1 F e_i)(phi_i F e_1)`:
//!
//! * `d lambda / d alpha = phi_1 F e_1`
//! * `d2 lambda / d alpha2 = 2 sum_i P_i / kappa_i`
//! * `d2 lambda_F / d eps2` along `eps cos(omega t)` is `sum_i kappa_i P_i / (omega^2 + kappa_i^2)`
//! * high-frequency criterion `sum_i kappa_i P_i`
//! * Legendre value `phi_1 F (G + alpha F - lambda_1 I) F e_1`, equal to minus
//!   the high-frequency criterion.
//!
//! Sums run over `i >= 2` in complex arithmetic; complex-conjugate pairs
//! cancel and the real part is returned after checking the residue.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrices::{Segment, C64};

pub const GRID_POINTS: usize = 200;
pub const ALPHA_TOL: f64 = 1e-10;
pub const IDENTITY_TOL: f64 = 1e-8;
pub const MIN_GAMMA_SAMPLES: usize = 512;

fn real_part(z: C64) -> Result<f64> {
    if z.im.abs() > 1e-9 * z.re.abs().max(1.0) {
        return Err(Error::ImaginaryResidue { residue: z.im.abs() });
    }
    Ok(z.re)
}

/// Per-mode data at one control value.
struct Modes {
    kappa: Vec<C64>,
    /// `(phi_1 F e_i)(phi_i F e_1)`
    products: Vec<C64>,
}

fn modes(seg: &Segment, alpha: f64) -> Result<Modes> {
    let spec = seg.spectral_at(alpha)?;
    let f = seg.f();
    let l1 = spec.eigenvalues[0];
    let mut kappa = Vec::new();
    let mut products = Vec::new();
    for i in 1..spec.dim() {
        kappa.push(l1 - spec.eigenvalues[i]);
        products.push(spec.pair(0, f, i) * spec.pair(i, f, 0));
    }
    Ok(Modes { kappa, products })
}

pub fn perron_derivative(seg: &Segment, alpha: f64) -> Result<f64> {
    let spec = seg.spectral_at(alpha)?;
    let p = &spec.perron;
    Ok(p.phi.dot(&(seg.f() * &p.e)))
}

/// Maximizer of `lambda(alpha)` over the segment range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaStar {
    pub alpha: f64,
    pub lambda: f64,
    /// True when the maximum sits at `a` or `A`.
    pub boundary: bool,
}

fn golden_section<F: Fn(f64) -> Result<f64>>(f: F, mut lo: f64, mut hi: f64) -> Result<f64> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > ALPHA_TOL {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1)?;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Coarse grid of 200 points, golden-section refinement of the best basin
/// to width 1e-10, then a bisection polish on the sign of the exact
/// derivative (the objective is too flat near a maximum for comparisons of
/// `lambda` alone to reach that width).
pub fn find_alpha_star(seg: &Segment) -> Result<AlphaStar> {
    let (lo, hi) = (seg.lo(), seg.hi());
    if hi - lo <= ALPHA_TOL {
        return Ok(AlphaStar {
            alpha: lo,
            lambda: seg.lambda(lo)?,
            boundary: true,
        });
    }
    let node = |k: usize| {
        if k == GRID_POINTS - 1 {
            hi
        } else {
            lo + (hi - lo) * k as f64 / (GRID_POINTS - 1) as f64
        }
    };
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for k in 0..GRID_POINTS {
        let v = seg.lambda(node(k))?;
        if v > best_val {
            best_val = v;
            best = k;
        }
    }
    let left = node(best.saturating_sub(1));
    let right = node((best + 1).min(GRID_POINTS - 1));

    let mut alpha = golden_section(|a| seg.lambda(a), left, right)?;
    let (dl, dr) = (perron_derivative(seg, left)?, perron_derivative(seg, right)?);
    if dl > 0.0 && dr < 0.0 {
        let (mut a, mut b) = (left, right);
        while b - a > ALPHA_TOL * 1e-2 {
            let mid = 0.5 * (a + b);
            if perron_derivative(seg, mid)? > 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        alpha = 0.5 * (a + b);
    }
    let mut candidates = vec![alpha];
    if best == 0 {
        candidates.push(lo);
    }
    if best == GRID_POINTS - 1 {
        candidates.push(hi);
    }
    let mut result = AlphaStar {
        alpha,
        lambda: f64::NEG_INFINITY,
        boundary: false,
    };
    for c in candidates {
        let v = seg.lambda(c)?;
        if v > result.lambda {
            result.alpha = c;
            result.lambda = v;
        }
    }
    let near = |x: f64| (result.alpha - x).abs() <= 1e-9 * (1.0 + x.abs());
    if near(lo) {
        result.alpha = lo;
        result.lambda = seg.lambda(lo)?;
        result.boundary = true;
    } else if near(hi) {
        result.alpha = hi;
        result.lambda = seg.lambda(hi)?;
        result.boundary = true;
    }
    Ok(result)
}

pub fn perron_second_derivative(seg: &Segment, alpha: f64) -> Result<f64> {
    let m = modes(seg, alpha)?;
    let sum: C64 = m
        .kappa
        .iter()
        .zip(&m.products)
        .map(|(k, p)| p / k)
        .sum();
    real_part(sum * 2.0)
}

pub fn floquet_second_derivative_cos(seg: &Segment, alpha: f64, omega: f64) -> Result<f64> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidArgument(format!("omega must be positive, got {omega}")));
    }
    let m = modes(seg, alpha)?;
    let w2 = omega * omega;
    let sum: C64 = m
        .kappa
        .iter()
        .zip(&m.products)
        .map(|(k, p)| k / (k * k + w2) * p)
        .sum();
    real_part(sum)
}

/// `(1 - e^{-z}) / z`, accurate near zero.
fn phi1(z: C64) -> C64 {
    if z.norm() < 1e-3 {
        C64::new(1.0, 0.0) - z / 2.0 + z * z / 6.0 - z * z * z / 24.0 + z * z * z * z / 120.0
    } else {
        (C64::new(1.0, 0.0) - (-z).exp()) / z
    }
}

/// Periodic solution of `y' / kappa + y = g` with `g` the cyclic
/// piecewise-linear interpolant of `samples` over `period`. Returns the
/// solution at the sample times.
pub fn periodic_relaxation(samples: &[f64], period: f64, kappa: C64) -> Vec<C64> {
    let m = samples.len();
    let h = period / m as f64;
    let z = kappa * h;
    let p = phi1(z);
    let decay = (-z).exp();
    let one_minus = z * p;
    let ramp = C64::new(1.0, 0.0) - p;
    let forcing = |k: usize| {
        let g0 = samples[k];
        let g1 = samples[(k + 1) % m];
        one_minus * g0 + ramp * (g1 - g0)
    };
    // Closure over one period: y_M = E^M y_0 + sum_k E^{M-1-k} c_k = y_0.
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..m {
        acc = decay * acc + forcing(k);
    }
    let full = (-kappa * period).exp();
    let mut y = acc / (C64::new(1.0, 0.0) - full);
    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        out.push(y);
        y = decay * y + forcing(k);
    }
    out
}

/// Second directional derivative of the Floquet exponent along a general
/// periodic direction `gamma`, given as `>= 512` cyclic uniform samples.
pub fn floquet_second_derivative_general(
    seg: &Segment,
    alpha: f64,
    gamma: &[f64],
    period: f64,
) -> Result<f64> {
    if gamma.len() < MIN_GAMMA_SAMPLES {
        return Err(Error::NonPeriodicSamples(format!(
            "need at least {MIN_GAMMA_SAMPLES} samples, got {}",
            gamma.len()
        )));
    }
    if gamma.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonPeriodicSamples("non-finite sample".into()));
    }
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::NonPeriodicSamples(format!("period must be positive, got {period}")));
    }
    let m = modes(seg, alpha)?;
    let count = gamma.len() as f64;
    let mut sum = C64::new(0.0, 0.0);
    for (k, p) in m.kappa.iter().zip(&m.products) {
        let y = periodic_relaxation(gamma, period, *k);
        let mean_sq: C64 = y.iter().map(|v| v * v).sum::<C64>() / count;
        sum += mean_sq * p / k;
    }
    real_part(sum * 2.0)
}

pub fn high_frequency_criterion(seg: &Segment, alpha: f64) -> Result<f64> {
    let m = modes(seg, alpha)?;
    let sum: C64 = m.kappa.iter().zip(&m.products).map(|(k, p)| k * p).sum();
    real_part(sum)
}

pub fn legendre_value(seg: &Segment, alpha: f64) -> Result<f64> {
    let spec = seg.spectral_at(alpha)?;
    let p = &spec.perron;
    let n = seg.dim();
    let shifted = seg.matrix(alpha) - DMatrix::identity(n, n) * p.lambda;
    let f = seg.f();
    Ok(p.phi.dot(&(f * (shifted * (f * &p.e)))))
}

/// Cyclic piecewise-linear interpolant of uniform samples over `period`.
pub fn sampled_signal(samples: Vec<f64>, period: f64) -> impl Fn(f64) -> f64 {
    move |t: f64| {
        let m = samples.len();
        let s = (t / period).rem_euclid(1.0) * m as f64;
        let k = (s.floor() as usize).min(m - 1);
        let frac = s - k as f64;
        samples[k] * (1.0 - frac) + samples[(k + 1) % m] * frac
    }
}

/// Floquet exponent of `x' = (G + alpha(t) F) x` with `alpha` of period
/// `period`, from the spectral radius of the RK4 monodromy matrix.
///
/// Stage times at step ends are nudged inside the step, so a control that
/// jumps at step boundaries is integrated exactly piecewise.
pub fn floquet_exponent_monodromy<A: Fn(f64) -> f64>(
    seg: &Segment,
    alpha: A,
    period: f64,
    dt: f64,
) -> Result<f64> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::InvalidArgument(format!("period must be positive, got {period}")));
    }
    if !(dt > 0.0) || dt > period / 1000.0 * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge {
            dt,
            limit: period / 1000.0,
        });
    }
    let steps = ((period / dt) - 1e-9).ceil() as usize;
    let h = period / steps as f64;
    let nudge = 1e-9 * h;
    let n = seg.dim();
    let mut phi = DMatrix::<f64>::identity(n, n);
    let mut log_scale = 0.0;
    for s in 0..steps {
        let t = s as f64 * h;
        let a1 = seg.matrix(alpha(t + nudge));
        let a2 = seg.matrix(alpha(t + 0.5 * h));
        let a4 = seg.matrix(alpha(t + h - nudge));
        let k1 = &a1 * &phi;
        let k2 = &a2 * (&phi + &k1 * (0.5 * h));
        let k3 = &a2 * (&phi + &k2 * (0.5 * h));
        let k4 = &a4 * (&phi + &k3 * h);
        phi += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let scale = phi.amax();
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::NonPositiveState { t: t + h });
        }
        phi /= scale;
        log_scale += scale.ln();
    }
    let rho = phi
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    Ok((rho.ln() + log_scale) / period)
}

/// Serializes `(omega, value)` pairs as a JSON object in input order.
mod omega_map {
    use serde::de::{MapAccess, Visitor};
    use serde::ser::SerializeMap;
    use serde::{Deserializer, Serializer};
    use std::fmt;

    pub fn serialize<S: Serializer>(pairs: &[(f64, f64)], s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(pairs.len()))?;
        for (omega, value) in pairs {
            map.serialize_entry(&omega.to_string(), value)?;
        }
        map.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(f64, f64)>, D::Error> {
        struct PairVisitor;
        impl<'de> Visitor<'de> for PairVisitor {
            type Value = Vec<(f64, f64)>;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from frequency to value")
            }
            fn visit_map<M: MapAccess<'de>>(self, mut access: M) -> Result<Self::Value, M::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, f64>()? {
                    let omega = k.parse::<f64>().map_err(serde::de::Error::custom)?;
                    out.push((omega, v));
                }
                Ok(out)
            }
        }
        d.deserialize_map(PairVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CriteriaReport {
    pub alpha_star: f64,
    pub lambda_star: f64,
    /// False when the maximizer sits on the boundary of the range; the
    /// second-order quantities are then reported but carry no optimality
    /// meaning.
    pub interior: bool,
    pub perron_derivative: f64,
    pub perron_second: f64,
    pub high_freq: f64,
    pub legendre: f64,
    pub identity_residual: f64,
    #[serde(with = "omega_map")]
    pub floquet_second_at: Vec<(f64, f64)>,
}

pub fn build_report(seg: &Segment, omegas: &[f64]) -> Result<CriteriaReport> {
    let star = find_alpha_star(seg)?;
    let a = star.alpha;
    let high_freq = high_frequency_criterion(seg, a)?;
    let legendre = legendre_value(seg, a)?;
    let identity_residual = (legendre + high_freq).abs();
    if identity_residual > IDENTITY_TOL {
        return Err(Error::IdentityViolated {
            residual: identity_residual,
        });
    }
    let mut sorted: Vec<f64> = omegas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let floquet_second_at = sorted
        .iter()
        .map(|&w| Ok((w, floquet_second_derivative_cos(seg, a, w)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CriteriaReport {
        alpha_star: a,
        lambda_star: star.lambda,
        interior: !star.boundary,
        perron_derivative: perron_derivative(seg, a)?,
        perron_second: perron_second_derivative(seg, a)?,
        high_freq,
        legendre,
        identity_residual,
        floquet_second_at,
    })
}

/// Writes `omega,d2lambdaF`.
pub fn write_omega_sweep<W: Write>(mut w: W, pairs: &[(f64, f64)]) -> Result<()> {
    writeln!(w, "omega,d2lambdaF")?;
    for (omega, value) in pairs {
        writeln!(w, "{omega},{value}")?;
    }
    Ok(())
}

/// Log-spaced frequencies `10^lo ..= 10^hi`.
pub fn log_omegas(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![10f64.powf(lo)];
    }
    (0..count)
        .map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / (count - 1) as f64))
        .collect()
}
