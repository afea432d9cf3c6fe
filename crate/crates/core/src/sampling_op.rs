//! Sampling sets, the truncated sampling operator `U` and its stability
//! constants.
//!
//! Rows of `U` are indexed by `(l, j)` (measure component, sample) in the
//! flat layout `l * J + j`; columns by `(i, k)` (generator component,
//! lattice point) in the flat layout `i * |K| + k`.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amalgam::{Complex64, Field, GeneratorVector, Interval};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, DENSE_LIMIT};
use crate::measure::{ConvolutionMatrix, Convolved, VecMeasure};
use crate::norm::PNorm;
use crate::shift_space::{CoeffVector, CoeffWindow, RieszBounds, Synthesized};

/// Points `x_j` with optional jitter `δ_j`, sorted lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSet {
    dim: usize,
    points: Vec<Vec<f64>>,
    jitter: Option<Vec<Vec<f64>>>,
    region: f64,
}

fn lex(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

impl SamplingSet {
    pub fn new(dim: usize, mut points: Vec<Vec<f64>>, region: f64) -> Result<Self> {
        if points
            .iter()
            .any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::DimensionMismatch(format!(
                "sampling points must be finite and {dim}-dimensional"
            )));
        }
        points.sort_by(|a, b| lex(a, b));
        Ok(SamplingSet {
            dim,
            points,
            jitter: None,
            region,
        })
    }

    /// Attaches jitter, given in the sorted point order.
    pub fn with_jitter(mut self, jitter: Vec<Vec<f64>>) -> Result<Self> {
        if jitter.len() != self.points.len() || jitter.iter().any(|d| d.len() != self.dim) {
            return Err(Error::DimensionMismatch(format!(
                "jitter has {} entries for {} points",
                jitter.len(),
                self.points.len()
            )));
        }
        self.jitter = Some(jitter);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn region(&self) -> f64 {
        self.region
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn jitter(&self) -> Option<&[Vec<f64>]> {
        self.jitter.as_deref()
    }

    /// `x_j + δ_j`.
    pub fn positions(&self) -> Vec<Vec<f64>> {
        match &self.jitter {
            None => self.points.clone(),
            Some(d) => self
                .points
                .iter()
                .zip(d)
                .map(|(x, dx)| x.iter().zip(dx).map(|(a, b)| a + b).collect())
                .collect(),
        }
    }

    /// `‖Δ‖∞`, Euclidean per point.
    pub fn delta_inf(&self) -> f64 {
        self.jitter.as_ref().map_or(0.0, |d| {
            d.iter()
                .map(|v| crate::amalgam::euclid(v))
                .fold(0.0, f64::max)
        })
    }

    /// Separation constant of the (jittered) positions.
    pub fn separation(&self) -> Result<f64> {
        separation_of(self.positions())
    }

    /// Separation constant of the unjittered points.
    pub fn base_separation(&self) -> Result<f64> {
        separation_of(self.points.clone())
    }
}

/// Exact minimum pairwise Euclidean distance by a sorted sweep.
fn separation_of(mut pts: Vec<Vec<f64>>) -> Result<f64> {
    if pts.len() < 2 {
        return Err(Error::TooFewPoints(pts.len()));
    }
    pts.sort_by(|a, b| lex(a, b));
    let mut best = f64::INFINITY;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if pts[j][0] - pts[i][0] >= best {
                break;
            }
            let d = crate::amalgam::euclid(
                &pts[i]
                    .iter()
                    .zip(&pts[j])
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            );
            if d == 0.0 {
                return Err(Error::NotSeparated(i, j));
            }
            best = best.min(d);
        }
    }
    Ok(best)
}

/// `N(δ, p, d) = (√d/δ + 1)^{d/p}`.
pub fn mesh_constant(delta: f64, p: PNorm, d: usize) -> f64 {
    let d = d as f64;
    (d.sqrt() / delta + 1.0).powf(d * p.reciprocal())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum PointPattern {
    /// `offset + step * n`, `n ∈ ℤ^d`.
    Lattice {
        step: f64,
        offset: Vec<f64>,
    },
    Points {
        points: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Jitter {
    None,
    /// The same displacement for every point.
    Constant(Vec<f64>),
    /// Independent uniform displacements in the ball of radius `gamma`,
    /// derived from the seed and the point itself so that enlarging the
    /// window does not change existing displacements.
    Uniform {
        gamma: f64,
        seed: u64,
    },
    /// Per-point displacements in sorted point order.
    Explicit(Vec<Vec<f64>>),
}

impl Jitter {
    /// Largest possible `|δ_j|`.
    pub fn allowance(&self) -> f64 {
        match self {
            Jitter::None => 0.0,
            Jitter::Constant(v) => crate::amalgam::euclid(v),
            Jitter::Uniform { gamma, .. } => *gamma,
            Jitter::Explicit(v) => v
                .iter()
                .map(|d| crate::amalgam::euclid(d))
                .fold(0.0, f64::max),
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn uniform_displacement(gamma: f64, seed: u64, x: &[f64]) -> Vec<f64> {
    let mut h = splitmix(seed);
    for v in x {
        h = splitmix(h ^ v.to_bits());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    if gamma == 0.0 {
        return vec![0.0; x.len()];
    }
    loop {
        let d: Vec<f64> = x.iter().map(|_| rng.random_range(-gamma..gamma)).collect();
        if x.len() == 1 || crate::amalgam::euclid(&d) < gamma {
            return d;
        }
    }
}

/// A sampling model `(Φ, μ⃗, X + Δ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingModel {
    pub phi: GeneratorVector,
    pub mu: VecMeasure,
    pub pattern: PointPattern,
    pub jitter: Jitter,
    /// Sample region `[-L, L]^d`; defaults to the coefficient half-width.
    pub region: Option<f64>,
}

impl SamplingModel {
    pub fn new(phi: GeneratorVector, mu: VecMeasure, pattern: PointPattern) -> Result<Self> {
        if phi.dim() != mu.dim() {
            return Err(Error::DimensionMismatch(format!(
                "generators have dimension {}, measures {}",
                phi.dim(),
                mu.dim()
            )));
        }
        match &pattern {
            PointPattern::Lattice { step, offset } => {
                if !(*step > 0.0) || offset.len() != phi.dim() {
                    return Err(Error::DimensionMismatch(
                        "lattice needs positive step and a d-dimensional offset".into(),
                    ));
                }
            }
            PointPattern::Points { points } => {
                if points.iter().any(|p| p.len() != phi.dim()) {
                    return Err(Error::DimensionMismatch(
                        "sampling points must match the model dimension".into(),
                    ));
                }
            }
        }
        Ok(SamplingModel {
            phi,
            mu,
            pattern,
            jitter: Jitter::None,
            region: None,
        })
    }

    /// The integer lattice `ℤ^d + offset`.
    pub fn lattice(phi: GeneratorVector, mu: VecMeasure, offset: f64) -> Result<Self> {
        let d = phi.dim();
        Self::new(
            phi,
            mu,
            PointPattern::Lattice {
                step: 1.0,
                offset: vec![offset; d],
            },
        )
    }

    pub fn with_jitter(mut self, jitter: Jitter) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn with_region(mut self, region: f64) -> Self {
        self.region = Some(region);
        self
    }

    pub fn dim(&self) -> usize {
        self.phi.dim()
    }

    /// The sampling set on `[-L, L]^d`, jitter realized.
    pub fn sampling_set(&self, region: f64) -> Result<SamplingSet> {
        let d = self.dim();
        let points: Vec<Vec<f64>> = match &self.pattern {
            PointPattern::Lattice { step, offset } => {
                let ranges: Vec<(i64, i64)> = offset
                    .iter()
                    .map(|o| {
                        (
                            ((-region - o) / step).ceil() as i64,
                            ((region - o) / step).floor() as i64,
                        )
                    })
                    .collect();
                match d {
                    1 => (ranges[0].0..=ranges[0].1)
                        .map(|n| vec![offset[0] + step * n as f64])
                        .collect(),
                    _ => (ranges[0].0..=ranges[0].1)
                        .flat_map(|a| {
                            (ranges[1].0..=ranges[1].1).map(move |b| {
                                vec![offset[0] + step * a as f64, offset[1] + step * b as f64]
                            })
                        })
                        .collect(),
                }
            }
            PointPattern::Points { points } => points
                .iter()
                .filter(|p| p.iter().all(|v| v.abs() <= region))
                .cloned()
                .collect(),
        };
        let set = SamplingSet::new(d, points, region)?;
        let jitter = match &self.jitter {
            Jitter::None => return Ok(set),
            Jitter::Constant(v) => {
                if v.len() != d {
                    return Err(Error::DimensionMismatch(
                        "constant jitter must be d-dimensional".into(),
                    ));
                }
                vec![v.clone(); set.len()]
            }
            Jitter::Uniform { gamma, seed } => set
                .points()
                .iter()
                .map(|x| uniform_displacement(*gamma, *seed, x))
                .collect(),
            Jitter::Explicit(v) => v.clone(),
        };
        set.with_jitter(jitter)
    }

    /// Hull of the supports of all `φⁱ ∗ μˡ`, or `[-tail_radius, tail_radius]`
    /// when some entry is not compactly supported (flag `false`).
    pub fn stencil(&self, tail_radius: f64) -> Result<(Interval, bool)> {
        let cm = ConvolutionMatrix::new(&self.phi, &self.mu)?;
        Ok(match cm.support() {
            Some(s) => (s, true),
            None => (Interval::new(-tail_radius, tail_radius), false),
        })
    }

    pub fn window(&self, half_width: i64, tail_radius: f64) -> Result<TruncationWindow> {
        shared_window(&[self], half_width, tail_radius)
    }

    /// Assembles `U` on the given truncation window.
    pub fn operator(&self, window: &TruncationWindow) -> Result<SamplingOperator> {
        let set = self.sampling_set(window.region)?;
        SamplingOperator::assemble(&self.phi, &self.mu, &set, window)
    }
}

/// Row/column truncation shared by every operator that is compared.
///
/// A sample is retained only when all of its nonzero entries fall inside
/// the coefficient window for every admissible jitter; a column is interior
/// when every sample touching it is retained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationWindow {
    pub coeffs: CoeffWindow,
    pub region: f64,
    pub stencil: Interval,
    pub compact: bool,
    pub jitter_allowance: f64,
}

/// One window for several models: stencil hull, largest jitter allowance
/// and the first model's region.
pub fn shared_window(
    models: &[&SamplingModel],
    half_width: i64,
    tail_radius: f64,
) -> Result<TruncationWindow> {
    let first = models
        .first()
        .ok_or_else(|| Error::InvalidWindow("no models given".into()))?;
    let mut stencil: Option<Interval> = None;
    let mut compact = true;
    let mut rho = 0.0f64;
    for m in models {
        if m.dim() != first.dim() {
            return Err(Error::DimensionMismatch(
                "models differ in dimension".into(),
            ));
        }
        let (s, c) = m.stencil(tail_radius)?;
        compact &= c;
        stencil = Some(stencil.map_or(s, |a| a.hull(s)));
        rho = rho.max(m.jitter.allowance());
    }
    let window = TruncationWindow {
        coeffs: CoeffWindow::new(first.dim(), half_width)?,
        region: first.region.unwrap_or(half_width as f64),
        stencil: stencil.expect("at least one model"),
        compact,
        jitter_allowance: rho,
    };
    if window.interior_points().is_empty() {
        return Err(Error::InvalidWindow(format!(
            "half-width {half_width} leaves no interior columns for stencil [{}, {}]",
            window.stencil.lo, window.stencil.hi
        )));
    }
    Ok(window)
}

impl TruncationWindow {
    /// Per-axis box of retained base points.
    pub fn row_box(&self) -> Interval {
        let k = self.coeffs.half_width as f64;
        let rho = self.jitter_allowance;
        Interval::new(
            (-k + self.stencil.hi + rho).max(-self.region),
            (k + self.stencil.lo - rho).min(self.region),
        )
    }

    pub fn retains(&self, x: &[f64]) -> bool {
        let b = self.row_box();
        x.iter().all(|&v| v >= b.lo - 1e-12 && v <= b.hi + 1e-12)
    }

    /// Lattice indices `k` (window order) of interior columns.
    pub fn interior_points(&self) -> Vec<usize> {
        let b = self.row_box();
        let rho = self.jitter_allowance;
        (0..self.coeffs.len())
            .filter(|&idx| {
                self.coeffs.point(idx).iter().all(|&k| {
                    let k = k as f64;
                    k + self.stencil.lo - rho >= b.lo - 1e-12
                        && k + self.stencil.hi + rho <= b.hi + 1e-12
                })
            })
            .collect()
    }

    pub fn with_half_width(&self, half_width: i64) -> Result<Self> {
        Ok(TruncationWindow {
            coeffs: CoeffWindow::new(self.coeffs.dim, half_width)?,
            region: half_width as f64 * self.region / self.coeffs.half_width.max(1) as f64,
            ..*self
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OpNorm {
    pub p: PNorm,
    /// Norm of the stacked matrix under the component-summed vector norms.
    pub value: f64,
    /// `Σ_{i,l} ‖U^{i,l}‖_p`.
    pub block_sum: f64,
    /// Power iteration hit its cap (p = 2 beyond the dense limit).
    pub stalled: bool,
}

/// Sparse (CSR) truncated sampling operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingOperator {
    window: TruncationWindow,
    r: usize,
    t: usize,
    base_points: Vec<Vec<f64>>,
    positions: Vec<Vec<f64>>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
}

fn k_range(y: f64, stencil: Interval, compact: bool, k: i64) -> (i64, i64) {
    if compact {
        (
            ((y - stencil.hi).ceil() as i64).max(-k),
            ((y - stencil.lo).floor() as i64).min(k),
        )
    } else {
        (-k, k)
    }
}

impl SamplingOperator {
    pub fn assemble(
        phi: &GeneratorVector,
        mu: &VecMeasure,
        set: &SamplingSet,
        window: &TruncationWindow,
    ) -> Result<SamplingOperator> {
        if set.dim() != phi.dim() || window.coeffs.dim != phi.dim() {
            return Err(Error::DimensionMismatch(
                "sampling set, window and generators differ in dimension".into(),
            ));
        }
        let cm = ConvolutionMatrix::new(phi, mu)?;
        let (r, t) = (cm.r(), cm.t());
        let positions_all = set.positions();
        let keep: Vec<usize> = (0..set.len())
            .filter(|&j| window.retains(&set.points()[j]))
            .collect();
        let base_points: Vec<Vec<f64>> = keep.iter().map(|&j| set.points()[j].clone()).collect();
        let positions: Vec<Vec<f64>> = keep.iter().map(|&j| positions_all[j].clone()).collect();
        let n = window.coeffs.len();
        let kw = window.coeffs.half_width;
        let rows: Vec<(usize, usize)> = (0..t)
            .flat_map(|l| (0..positions.len()).map(move |j| (l, j)))
            .collect();
        let built: Vec<Vec<(usize, Complex64)>> = rows
            .par_iter()
            .map(|&(l, j)| {
                let y = &positions[j];
                let ranges: Vec<(i64, i64)> = y
                    .iter()
                    .map(|&v| k_range(v, window.stencil, window.compact, kw))
                    .collect();
                let ks: Vec<Vec<i64>> = match y.len() {
                    1 => (ranges[0].0..=ranges[0].1).map(|k| vec![k]).collect(),
                    _ => (ranges[0].0..=ranges[0].1)
                        .flat_map(|a| (ranges[1].0..=ranges[1].1).map(move |b| vec![a, b]))
                        .collect(),
                };
                let mut row = Vec::new();
                let mut arg = vec![0.0; y.len()];
                for i in 0..r {
                    let entry = cm.entry(i, l);
                    for k in &ks {
                        for (a, (yv, kv)) in arg.iter_mut().zip(y.iter().zip(k)) {
                            *a = yv - *kv as f64;
                        }
                        let v = entry.value(&arg);
                        if v != Complex64::new(0.0, 0.0) {
                            let idx = window.coeffs.index_of(k).expect("k within window");
                            row.push((i * n + idx, v));
                        }
                    }
                }
                row.sort_by_key(|e| e.0);
                row
            })
            .collect();
        let mut row_ptr = Vec::with_capacity(built.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in built {
            for (c, v) in row {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        log::debug!(
            "assembled {}x{} sampling operator with {} entries",
            row_ptr.len() - 1,
            r * n,
            values.len()
        );
        Ok(SamplingOperator {
            window: *window,
            r,
            t,
            base_points,
            positions,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn window(&self) -> &TruncationWindow {
        &self.window
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Retained samples per measure component.
    pub fn samples(&self) -> usize {
        self.base_points.len()
    }

    pub fn base_points(&self) -> &[Vec<f64>] {
        &self.base_points
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.r * self.window.coeffs.len()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn row(&self, row: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let (a, b) = (self.row_ptr[row], self.row_ptr[row + 1]);
        self.col_idx[a..b]
            .iter()
            .copied()
            .zip(self.values[a..b].iter().copied())
    }

    /// Stored entries `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.nrows()).flat_map(move |row| self.row(row).map(move |(c, v)| (row, c, v)))
    }

    pub fn apply_flat(&self, c: &[Complex64]) -> Result<Vec<Complex64>> {
        if c.len() != self.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} coefficients, got {}",
                self.ncols(),
                c.len()
            )));
        }
        Ok((0..self.nrows())
            .map(|row| self.row(row).map(|(k, v)| v * c[k]).sum())
            .collect())
    }

    pub fn apply_adjoint_flat(&self, d: &[Complex64]) -> Result<Vec<Complex64>> {
        if d.len() != self.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} samples, got {}",
                self.nrows(),
                d.len()
            )));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.ncols()];
        for (row, dv) in d.iter().enumerate() {
            for (k, v) in self.row(row) {
                out[k] += v.conj() * dv;
            }
        }
        Ok(out)
    }

    /// `UC`, flat in `l * J + j`.
    pub fn apply(&self, c: &CoeffVector) -> Result<Vec<Complex64>> {
        if c.window() != self.window.coeffs || c.r() != self.r {
            return Err(Error::DimensionMismatch(
                "coefficient vector does not match the operator window".into(),
            ));
        }
        self.apply_flat(&c.flat())
    }

    /// `U* D`.
    pub fn apply_adjoint(&self, d: &[Complex64]) -> Result<CoeffVector> {
        let flat = self.apply_adjoint_flat(d)?;
        CoeffVector::from_flat(self.window.coeffs, self.r, &flat)
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.nrows(), self.ncols());
        for (row, col, v) in self.triplets() {
            m[(row, col)] = v;
        }
        m
    }

    /// Flat column indices `i * |K| + k` of the interior columns.
    pub fn interior_columns(&self) -> Vec<usize> {
        let inner = self.window.interior_points();
        let n = self.window.coeffs.len();
        (0..self.r)
            .flat_map(|i| inner.iter().map(move |&k| i * n + k))
            .collect()
    }

    /// Dense restriction to the interior columns.
    pub fn interior_dense(&self) -> CMatrix {
        let cols = self.interior_columns();
        let mut pos = vec![usize::MAX; self.ncols()];
        for (a, &c) in cols.iter().enumerate() {
            pos[c] = a;
        }
        let mut m = CMatrix::zeros(self.nrows(), cols.len());
        for (row, col, v) in self.triplets() {
            if pos[col] != usize::MAX {
                m[(row, pos[col])] = v;
            }
        }
        m
    }

    pub fn scaled(&self, factor: f64) -> SamplingOperator {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= factor;
        }
        out
    }

    pub(crate) fn check_aligned(&self, other: &SamplingOperator) -> Result<()> {
        if self.window.coeffs != other.window.coeffs
            || self.r != other.r
            || self.t != other.t
            || self.base_points != other.base_points
        {
            return Err(Error::DimensionMismatch(
                "operators are not assembled on the same rows and columns".into(),
            ));
        }
        Ok(())
    }

    /// Entrywise `self - other`.
    pub fn difference(&self, other: &SamplingOperator) -> Result<SamplingOperator> {
        self.check_aligned(other)?;
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for row in 0..self.nrows() {
            let mut merged: Vec<(usize, Complex64)> = self.row(row).collect();
            merged.extend(other.row(row).map(|(c, v)| (c, -v)));
            merged.sort_by_key(|e| e.0);
            let mut acc: Vec<(usize, Complex64)> = Vec::new();
            for (c, v) in merged {
                match acc.last_mut() {
                    Some(last) if last.0 == c => last.1 += v,
                    _ => acc.push((c, v)),
                }
            }
            for (c, v) in acc {
                if v != Complex64::new(0.0, 0.0) {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SamplingOperator {
            row_ptr,
            col_idx,
            values,
            ..self.clone()
        })
    }

    /// The block `U^{i,l}` as a single-component operator.
    pub fn block(&self, i: usize, l: usize) -> SamplingOperator {
        let n = self.window.coeffs.len();
        let j = self.samples();
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for row in l * j..(l + 1) * j {
            for (c, v) in self.row(row) {
                if c / n == i {
                    col_idx.push(c - i * n);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SamplingOperator {
            r: 1,
            t: 1,
            row_ptr,
            col_idx,
            values,
            ..self.clone()
        }
    }

    fn spectral(&self) -> (f64, bool) {
        if self.ncols() <= DENSE_LIMIT {
            (linalg::spectral_norm(&self.to_dense()), false)
        } else {
            let res = linalg::power_iteration(
                self.ncols(),
                |v| {
                    let uv = self.apply_flat(v.as_slice()).expect("sized");
                    CVector::from_vec(self.apply_adjoint_flat(&uv).expect("sized"))
                },
                1e-10,
                10_000,
            );
            (res.value.max(0.0).sqrt(), res.stalled)
        }
    }

    fn direct_norm(&self, p: PNorm) -> (f64, bool) {
        match p {
            PNorm::One => {
                let mut sums = vec![0.0; self.ncols()];
                for (_, c, v) in self.triplets() {
                    sums[c] += v.norm();
                }
                (sums.into_iter().fold(0.0, f64::max), false)
            }
            PNorm::Inf => {
                // sup over the extreme points of the summed-∞ ball, which
                // load one component at a time
                let n = self.window.coeffs.len();
                let j = self.samples();
                let mut best = 0.0f64;
                for i in 0..self.r {
                    let mut total = 0.0;
                    for l in 0..self.t {
                        let mut m = 0.0f64;
                        for row in l * j..(l + 1) * j {
                            let s: f64 = self
                                .row(row)
                                .filter(|(c, _)| c / n == i)
                                .map(|(_, v)| v.norm())
                                .sum();
                            m = m.max(s);
                        }
                        total += m;
                    }
                    best = best.max(total);
                }
                (best, false)
            }
            PNorm::Two => self.spectral(),
        }
    }

    /// Operator norm `β̂_p`.
    pub fn op_norm(&self, p: PNorm) -> OpNorm {
        let (value, stalled) = self.direct_norm(p);
        let mut block_sum = 0.0;
        let mut any_stalled = stalled;
        if self.r == 1 && self.t == 1 {
            block_sum = value;
        } else {
            for i in 0..self.r {
                for l in 0..self.t {
                    let (v, s) = self.block(i, l).direct_norm(p);
                    block_sum += v;
                    any_stalled |= s;
                }
            }
        }
        OpNorm {
            p,
            value,
            block_sum,
            stalled: any_stalled,
        }
    }

    /// Lower sampling bound `η̂_p` on the interior columns.
    ///
    /// For `p = 2` this is the smallest singular value. For `p ∈ {1, ∞}` it
    /// is `1 / ‖(U*U)⁻¹U*‖_p`, a certified lower estimate because the left
    /// inverse recovers every interior coefficient vector.
    pub fn lower_bound(&self, p: PNorm) -> Result<f64> {
        let beta = self.op_norm(p).value;
        let cols = self.interior_columns();
        let eta = match p {
            PNorm::Two if cols.len() <= DENSE_LIMIT => {
                linalg::singular_extremes(&self.interior_dense()).0
            }
            PNorm::Two => {
                let mut pos = vec![usize::MAX; self.ncols()];
                for (a, &c) in cols.iter().enumerate() {
                    pos[c] = a;
                }
                let apply = |v: &CVector| {
                    let mut full = vec![Complex64::new(0.0, 0.0); self.ncols()];
                    for (a, &c) in cols.iter().enumerate() {
                        full[c] = v[a];
                    }
                    let uv = self.apply_flat(&full).expect("sized");
                    let back = self.apply_adjoint_flat(&uv).expect("sized");
                    CVector::from_iterator(cols.len(), cols.iter().map(|&c| back[c]))
                };
                match linalg::inverse_iteration(cols.len(), apply, 1e-10, 500) {
                    Ok(res) => res.value.max(0.0).sqrt(),
                    Err(_) => 0.0,
                }
            }
            PNorm::One | PNorm::Inf => {
                if cols.len() > DENSE_LIMIT {
                    return Err(Error::InvalidWindow(format!(
                        "p = {p} lower bounds need a dense left inverse; {} columns exceed {DENSE_LIMIT}",
                        cols.len()
                    )));
                }
                match linalg::left_inverse(&self.interior_dense()) {
                    Ok(l) => {
                        let norm = if p == PNorm::One {
                            linalg::max_column_sum(&l)
                        } else {
                            self.left_inverse_inf_norm(&l, cols.len() / self.r)
                        };
                        if norm > 0.0 {
                            1.0 / norm
                        } else {
                            0.0
                        }
                    }
                    Err(_) => 0.0,
                }
            }
        };
        if !(beta > 0.0) || eta < 1e-12 * beta {
            return Err(Error::DegenerateOperator { eta, beta });
        }
        Ok(eta)
    }

    /// `max_l Σ_i ‖L^{i,l}‖_∞` for the left inverse `L` (interior layout).
    fn left_inverse_inf_norm(&self, l: &CMatrix, per_component: usize) -> f64 {
        let j = self.samples();
        let mut best = 0.0f64;
        for lb in 0..self.t {
            let mut total = 0.0;
            for i in 0..self.r {
                let block = l.view((i * per_component, lb * j), (per_component, j));
                total += block
                    .row_iter()
                    .map(|r| r.iter().map(|v| v.norm()).sum::<f64>())
                    .fold(0.0, f64::max);
            }
            best = best.max(total);
        }
        best
    }

    /// Writes stored entries as CSV
    /// `row, col, block_i, block_l, value_re, value_im`.
    pub fn write_triplets<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "col", "block_i", "block_l", "value_re", "value_im"])?;
        let n = self.window.coeffs.len();
        let j = self.samples().max(1);
        for (row, col, v) in self.triplets() {
            w.write_record([
                row.to_string(),
                col.to_string(),
                (col / n).to_string(),
                (row / j).to_string(),
                format!("{:.16e}", v.re),
                format!("{:.16e}", v.im),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `‖U − V‖_p` for operators on the same rows and columns.
pub fn operator_distance(u: &SamplingOperator, v: &SamplingOperator, p: PNorm) -> Result<f64> {
    Ok(u.difference(v)?.op_norm(p).value)
}

/// `(f ∗ μ⃗)(y_j)` computed directly from synthesis and convolution, flat in
/// `l * J + j`.
pub fn sample_signal(
    c: &CoeffVector,
    phi: &GeneratorVector,
    mu: &VecMeasure,
    positions: &[Vec<f64>],
) -> Result<Vec<Complex64>> {
    let f = Synthesized::new(c, phi)?;
    let mut out = Vec::with_capacity(mu.t() * positions.len());
    for m in mu.components() {
        let conv = Convolved::new(&f, m)?;
        out.extend(positions.iter().map(|y| conv.value(y)));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityVerdict {
    Stable,
    Unstable,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub half_width: i64,
    pub eta: f64,
    pub beta: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub p: PNorm,
    /// Values at the largest window.
    pub eta: f64,
    pub beta: f64,
    pub trace: Vec<TracePoint>,
    pub verdict: StabilityVerdict,
}

pub const STABLE_RATIO: f64 = 0.9;
pub const UNSTABLE_RATIO: f64 = 0.7;

/// Classifies an `η̂` trace over successive window doublings.
pub fn classify_trace(trace: &[TracePoint]) -> StabilityVerdict {
    if trace.iter().any(|t| t.degenerate) {
        return StabilityVerdict::Unstable;
    }
    let ratios: Vec<f64> = trace.windows(2).map(|w| w[1].eta / w[0].eta).collect();
    if ratios.is_empty() {
        return StabilityVerdict::Inconclusive;
    }
    if ratios.iter().all(|&q| q >= STABLE_RATIO) {
        StabilityVerdict::Stable
    } else if ratios.iter().all(|&q| q <= UNSTABLE_RATIO) {
        StabilityVerdict::Unstable
    } else {
        StabilityVerdict::Inconclusive
    }
}

/// Builds `U` at `K, 2K, …, 2^doublings K` and classifies the `η̂_p` trace.
pub fn stability_check(
    model: &SamplingModel,
    p: PNorm,
    half_width: i64,
    doublings: usize,
    tail_radius: f64,
) -> Result<StabilityReport> {
    let mut trace = Vec::with_capacity(doublings + 1);
    for step in 0..=doublings {
        let k = half_width << step;
        let window = model.window(k, tail_radius)?;
        let u = model.operator(&window)?;
        let beta = u.op_norm(p).value;
        let (eta, degenerate) = match u.lower_bound(p) {
            Ok(eta) => (eta, false),
            Err(Error::DegenerateOperator { eta, .. }) => (eta, true),
            Err(e) => return Err(e),
        };
        log::debug!("p = {p}, K = {k}: eta = {eta:e}, beta = {beta:e}");
        trace.push(TracePoint {
            half_width: k,
            eta,
            beta,
            degenerate,
        });
    }
    let last = *trace.last().expect("nonempty trace");
    Ok(StabilityReport {
        p,
        eta: last.eta,
        beta: last.beta,
        verdict: classify_trace(&trace),
        trace,
    })
}

/// Function-side sampling bounds `(A_p, B_p) = (η_p / M_p, β_p / m_p)`.
pub fn function_side_bounds(eta: f64, beta: f64, riesz: &RieszBounds) -> (f64, f64) {
    let b = if riesz.lower > 0.0 {
        beta / riesz.lower
    } else {
        f64::INFINITY
    };
    (eta / riesz.upper, b)
}

/// Dense real-part copy, used by tests and diagnostics.
pub fn real_part(m: &CMatrix) -> DMatrix<f64> {
    m.map(|v| v.re)
}
