//! Metzler matrices, compact control sets and dense spectral data.
//!
//! A Metzler matrix has nonnegative off-diagonal entries, so `exp(t m)` is
//! entrywise nonnegative and the linear flow preserves the positive cone.
//! Irreducibility (strong connectivity of the off-diagonal support graph)
//! makes the dominant eigenvalue real and simple, with strictly positive
//! left and right eigenvectors.

use std::collections::VecDeque;

use nalgebra::linalg::Schur;
use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Eigenvalues closer than this are treated as a defective spectrum.
pub const MIN_EIGEN_GAP: f64 = 1e-9;

/// A validated square matrix with nonnegative off-diagonal entries.
#[derive(Debug, Clone, PartialEq)]
pub struct MetzlerMatrix {
    entries: DMatrix<f64>,
    irreducible: bool,
}

impl MetzlerMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        validate_metzler(entries)
    }

    /// Builds a matrix from row-major nested vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        validate_metzler(dense_from_rows(rows)?)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn is_irreducible(&self) -> bool {
        self.irreducible
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        norm_inf(&self.entries)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        rows_of(&self.entries)
    }

    pub fn spectral(&self) -> Result<SpectralData> {
        spectral(self)
    }

    /// Perron eigenvalue only.
    pub fn perron_value(&self) -> Result<f64> {
        Ok(spectral(self)?.perron.lambda)
    }
}

pub(crate) fn dense_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    for row in rows {
        if row.len() != n {
            return Err(Error::NotSquare {
                rows: n,
                cols: row.len(),
            });
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub(crate) fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub(crate) fn norm_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Checks the Metzler sign pattern and computes the irreducibility flag.
pub fn validate_metzler(entries: DMatrix<f64>) -> Result<MetzlerMatrix> {
    let (rows, cols) = entries.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    if rows < 2 {
        return Err(Error::DimensionTooSmall(rows));
    }
    for i in 0..rows {
        for j in 0..cols {
            let v = entries[(i, j)];
            if !v.is_finite() {
                return Err(Error::NonFinite { i: i + 1, j: j + 1 });
            }
            if i != j && v < 0.0 {
                return Err(Error::NegativeOffDiagonal {
                    i: i + 1,
                    j: j + 1,
                    value: v,
                });
            }
        }
    }
    let irreducible = support_strongly_connected(&entries);
    Ok(MetzlerMatrix {
        entries,
        irreducible,
    })
}

pub fn is_irreducible(m: &MetzlerMatrix) -> bool {
    m.irreducible
}

/// Strong connectivity of the digraph with an edge j -> i whenever
/// `m[i][j] > 0`, i != j. Forward and backward reachability from node 0.
fn support_strongly_connected(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if v == u || seen[v] {
                    continue;
                }
                let w = if forward { m[(v, u)] } else { m[(u, v)] };
                if w > 0.0 {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Normalized Perron triple: `<1, e> = 1` and `<phi, e> = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerronPair {
    pub lambda: f64,
    pub e: DVector<f64>,
    pub phi: DVector<f64>,
}

/// Full eigen-decomposition of one irreducible Metzler matrix.
///
/// Eigenvalues are sorted by descending real part (ties by descending
/// imaginary part). `left[i]` and `right[j]` are biorthonormal under the
/// bilinear pairing `sum_k left[i][k] * right[j][k]`. Index 0 is the Perron
/// pair, stored with the normalization of [`PerronPair`].
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub eigenvalues: Vec<C64>,
    pub right: Vec<DVector<C64>>,
    pub left: Vec<DVector<C64>>,
    pub perron: PerronPair,
}

impl SpectralData {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `lambda_1 - Re(lambda_2)`.
    pub fn spectral_gap(&self) -> f64 {
        self.perron.lambda - self.eigenvalues[1].re
    }

    /// Bilinear pairing `left_i^T B right_j` for a real matrix `B`.
    pub fn pair(&self, i: usize, b: &DMatrix<f64>, j: usize) -> C64 {
        let n = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..n {
            let mut row = C64::new(0.0, 0.0);
            for c in 0..n {
                row += self.right[j][c] * b[(r, c)];
            }
            acc += self.left[i][r] * row;
        }
        acc
    }

    /// Largest deviation of `left_i . right_j` from the identity.
    pub fn biorthogonality_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let p: C64 = (0..n).map(|k| self.left[i][k] * self.right[j][k]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

fn sort_eigenvalues(eig: &mut [C64]) {
    eig.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.im.partial_cmp(&a.im).unwrap_or(std::cmp::Ordering::Equal))
    });
}

/// Dense complex eigen-decomposition with a positivity-preserving Perron
/// refinement (power iteration on `exp(h m)`).
pub fn spectral(m: &MetzlerMatrix) -> Result<SpectralData> {
    if !m.irreducible {
        return Err(Error::NotIrreducible);
    }
    let a = m.entries();
    let n = a.nrows();
    let scale = m.norm_inf();

    let schur = Schur::try_new(a.clone(), f64::EPSILON, 100_000)
        .ok_or(Error::DefectiveSpectrum { gap: f64::NAN })?;
    let mut eig: Vec<C64> = schur.complex_eigenvalues().iter().copied().collect();
    sort_eigenvalues(&mut eig);

    let mut gap = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            gap = gap.min((eig[i] - eig[j]).norm());
        }
    }
    if gap < MIN_EIGEN_GAP {
        return Err(Error::DefectiveSpectrum { gap });
    }

    let ac: DMatrix<C64> = a.map(|x| C64::new(x, 0.0));
    let mut v = DMatrix::<C64>::zeros(n, n);
    for (k, lam) in eig.iter().enumerate() {
        let col = inverse_iteration(&ac, *lam, scale).ok_or(Error::DefectiveSpectrum { gap })?;
        v.set_column(k, &col);
    }
    let phi_mat = v
        .clone()
        .try_inverse()
        .ok_or(Error::DefectiveSpectrum { gap })?;

    // Perron refinement in real arithmetic.
    let h = 1.0 / (1.0 + (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max));
    let p = (a * h).exp();
    let e0 = DVector::from_fn(n, |i, _| v[(i, 0)].re);
    let e0 = if e0.sum() < 0.0 { -e0 } else { e0 };
    let e = power_refine(&p, e0);
    let pt = p.transpose();
    let f0 = DVector::from_fn(n, |i, _| phi_mat[(0, i)].re);
    let f0 = if f0.sum() < 0.0 { -f0 } else { f0 };
    let phi = power_refine(&pt, f0);

    let pe = phi.dot(&e);
    let lambda = phi.dot(&(a * &e)) / pe;
    let e = &e / e.sum();
    let phi = &phi / phi.dot(&e);

    let res_right = (a * &e - &e * lambda).amax();
    let res_left = (a.transpose() * &phi - &phi * lambda).amax();
    let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    if res_right > tol * e.amax() || res_left > tol * phi.amax() {
        return Err(Error::DefectiveSpectrum { gap });
    }
    if e.iter().chain(phi.iter()).any(|&x| x <= 0.0) {
        return Err(Error::DefectiveSpectrum { gap });
    }

    let mut right: Vec<DVector<C64>> = (0..n).map(|k| v.column(k).into_owned()).collect();
    let mut left: Vec<DVector<C64>> = (0..n)
        .map(|k| phi_mat.row(k).transpose().into_owned())
        .collect();
    right[0] = e.map(|x| C64::new(x, 0.0));
    left[0] = phi.map(|x| C64::new(x, 0.0));
    eig[0] = C64::new(lambda, 0.0);

    let data = SpectralData {
        eigenvalues: eig,
        right,
        left,
        perron: PerronPair { lambda, e, phi },
    };
    if data.biorthogonality_defect() > 1e-8 {
        return Err(Error::DefectiveSpectrum { gap });
    }
    Ok(data)
}

fn inverse_iteration(a: &DMatrix<C64>, lam: C64, scale: f64) -> Option<DVector<C64>> {
    let n = a.nrows();
    let shift = lam + C64::new(1e-13 * (1.0 + lam.norm() + scale), 0.0);
    let shifted = a - DMatrix::<C64>::identity(n, n) * shift;
    let lu = shifted.lu();
    let mut x = DVector::from_fn(n, |i, _| C64::new(1.0 + 0.1 * i as f64, 0.05 * i as f64));
    for _ in 0..3 {
        x = lu.solve(&x)?;
        let nrm = x.norm();
        if !nrm.is_finite() || nrm == 0.0 {
            return None;
        }
        x /= C64::new(nrm, 0.0);
    }
    Some(x)
}

fn power_refine(p: &DMatrix<f64>, start: DVector<f64>) -> DVector<f64> {
    let mut x = start.map(|v| v.max(0.0));
    if x.sum() <= 0.0 {
        x = DVector::from_element(x.len(), 1.0);
    }
    x /= x.sum();
    for _ in 0..10_000 {
        let mut y = p * &x;
        y /= y.sum();
        let delta = (&y - &x).amax();
        x = y;
        if delta <= 1e-15 {
            break;
        }
    }
    x
}

/// Affine matrix family `{G + alpha F : alpha in [lo, hi]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    g: DMatrix<f64>,
    f: DMatrix<f64>,
    lo: f64,
    hi: f64,
    low: MetzlerMatrix,
    high: MetzlerMatrix,
}

impl Segment {
    pub fn new(g: DMatrix<f64>, f: DMatrix<f64>, lo: f64, hi: f64) -> Result<Self> {
        if g.shape() != f.shape() {
            return Err(Error::DimensionMismatch {
                expected: g.nrows(),
                found: f.nrows(),
            });
        }
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::InvalidRange { lo, hi });
        }
        let low = validate_metzler(&g + &f * lo)?;
        let high = validate_metzler(&g + &f * hi)?;
        if !low.irreducible || !high.irreducible {
            return Err(Error::NotIrreducible);
        }
        Ok(Self {
            g,
            f,
            lo,
            hi,
            low,
            high,
        })
    }

    pub fn from_rows(g: &[Vec<f64>], f: &[Vec<f64>], lo: f64, hi: f64) -> Result<Self> {
        Self::new(dense_from_rows(g)?, dense_from_rows(f)?, lo, hi)
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    /// `G + alpha F` without range or sign checks.
    pub fn matrix(&self, alpha: f64) -> DMatrix<f64> {
        &self.g + &self.f * alpha
    }

    pub fn at(&self, alpha: f64) -> Result<MetzlerMatrix> {
        if !(alpha >= self.lo && alpha <= self.hi) {
            return Err(Error::OutOfRange {
                alpha,
                lo: self.lo,
                hi: self.hi,
            });
        }
        if alpha == self.lo {
            return Ok(self.low.clone());
        }
        if alpha == self.hi {
            return Ok(self.high.clone());
        }
        validate_metzler(self.matrix(alpha))
    }

    pub fn spectral_at(&self, alpha: f64) -> Result<SpectralData> {
        self.at(alpha)?.spectral()
    }

    /// Perron eigenvalue `lambda(alpha)`.
    pub fn lambda(&self, alpha: f64) -> Result<f64> {
        Ok(self.spectral_at(alpha)?.perron.lambda)
    }

    pub fn endpoints(&self) -> [&MetzlerMatrix; 2] {
        [&self.low, &self.high]
    }
}

/// Compact family of admissible generators.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlSet {
    Vertices(Vec<MetzlerMatrix>),
    Segment(Segment),
}

impl ControlSet {
    /// Validated vertex list: nonempty, equal dimensions, all irreducible.
    pub fn from_vertices(matrices: Vec<MetzlerMatrix>) -> Result<Self> {
        let first = matrices.first().ok_or(Error::EmptyControlSet)?;
        let n = first.dim();
        for m in &matrices {
            if m.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: m.dim(),
                });
            }
            if !m.irreducible {
                return Err(Error::NotIrreducible);
            }
        }
        Ok(ControlSet::Vertices(matrices))
    }

    pub fn dim(&self) -> usize {
        match self {
            ControlSet::Vertices(v) => v[0].dim(),
            ControlSet::Segment(s) => s.dim(),
        }
    }

    /// Extreme points of the convex hull used for bang-bang controls.
    pub fn vertices(&self) -> Vec<MetzlerMatrix> {
        vertices(self)
    }

    pub fn vertex_count(&self) -> usize {
        match self {
            ControlSet::Vertices(v) => v.len(),
            ControlSet::Segment(_) => 2,
        }
    }

    pub fn at(&self, alpha: f64) -> Result<MetzlerMatrix> {
        at(self, alpha)
    }

    pub fn as_segment(&self) -> Result<&Segment> {
        match self {
            ControlSet::Segment(s) => Ok(s),
            ControlSet::Vertices(_) => Err(Error::WrongVariant),
        }
    }

    /// Largest Perron eigenvalue over the vertices.
    pub fn max_vertex_lambda(&self) -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        for m in self.vertices() {
            best = best.max(m.perron_value()?);
        }
        Ok(best)
    }
}

pub fn vertices(cs: &ControlSet) -> Vec<MetzlerMatrix> {
    match cs {
        ControlSet::Vertices(v) => v.clone(),
        ControlSet::Segment(s) => vec![s.low.clone(), s.high.clone()],
    }
}

pub fn at(cs: &ControlSet, alpha: f64) -> Result<MetzlerMatrix> {
    cs.as_segment()?.at(alpha)
}

/// JSON model file.
///
/// Segment: `{"n", "kind": "segment", "G", "F", "range": [a, A]}`;
/// vertices: `{"n", "kind": "vertices", "matrices": [...]}`. Row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub kind: String,
    #[serde(rename = "G", default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<Vec<f64>>>,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<Vec<Vec<Vec<f64>>>>,
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model file serializes")
    }

    pub fn from_control_set(cs: &ControlSet) -> Self {
        match cs {
            ControlSet::Segment(s) => ModelFile {
                n: Some(s.dim()),
                kind: "segment".into(),
                g: Some(rows_of(&s.g)),
                f: Some(rows_of(&s.f)),
                range: Some([s.lo, s.hi]),
                matrices: None,
            },
            ControlSet::Vertices(v) => ModelFile {
                n: Some(v[0].dim()),
                kind: "vertices".into(),
                g: None,
                f: None,
                range: None,
                matrices: Some(v.iter().map(|m| m.rows()).collect()),
            },
        }
    }

    pub fn to_control_set(&self) -> Result<ControlSet> {
        let cs = match self.kind.as_str() {
            "segment" => {
                let missing = |what: &str| Error::Model(format!("segment model lacks `{what}`"));
                let g = self.g.as_ref().ok_or_else(|| missing("G"))?;
                let f = self.f.as_ref().ok_or_else(|| missing("F"))?;
                let [lo, hi] = self.range.ok_or_else(|| missing("range"))?;
                ControlSet::Segment(Segment::from_rows(g, f, lo, hi)?)
            }
            "vertices" => {
                let mats = self
                    .matrices
                    .as_ref()
                    .ok_or_else(|| Error::Model("vertices model lacks `matrices`".into()))?;
                let list = mats
                    .iter()
                    .map(|rows| MetzlerMatrix::from_rows(rows))
                    .collect::<Result<Vec<_>>>()?;
                ControlSet::from_vertices(list)?
            }
            other => return Err(Error::Model(format!("unknown kind `{other}`"))),
        };
        if let Some(n) = self.n {
            if n != cs.dim() {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: cs.dim(),
                });
            }
        }
        Ok(cs)
    }
}
