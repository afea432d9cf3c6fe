//! Generator functions and Wiener-amalgam norms.
//!
//! A function `f` belongs to `W^p` when the sequence of its suprema over the
//! unit cells `[0,1]^d + k` is `p`-summable. Every function the library
//! analyses (generators, their convolutions with measures, oscillation
//! moduli, synthesized signals) implements [`Field`], and the norm routines
//! here work on that trait.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localization::DecayFit;
use crate::norm::PNorm;

pub type Complex64 = Complex<f64>;

/// Closed interval used as a per-axis support hull.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn hull(self, other: Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    /// Minkowski sum.
    pub fn plus(self, other: Interval) -> Interval {
        Interval::new(self.lo + other.lo, self.hi + other.hi)
    }

    pub fn widen(self, by: f64) -> Interval {
        Interval::new(self.lo - by, self.hi + by)
    }

    pub fn length(self) -> f64 {
        self.hi - self.lo
    }
}

/// Polynomial envelope `|f(x)| <= scale * (1 + |x|)^(-s)` for functions
/// without compact support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tail {
    pub scale: f64,
    pub s: f64,
}

/// A complex-valued function on `R^d` (d = 1 or 2) with the metadata the
/// norm routines need.
pub trait Field: Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> Complex64;

    /// Per-axis support hull, `None` when not compactly supported.
    fn support(&self) -> Option<Interval>;

    /// Coordinates (per axis) where the function may fail to be smooth.
    fn breakpoints(&self) -> Vec<f64>;

    /// Decay envelope for functions without compact support.
    fn tail(&self) -> Option<Tail> {
        None
    }
}

impl<T: Field + ?Sized> Field for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> Complex64 {
        (**self).value(x)
    }
    fn support(&self) -> Option<Interval> {
        (**self).support()
    }
    fn breakpoints(&self) -> Vec<f64> {
        (**self).breakpoints()
    }
    fn tail(&self) -> Option<Tail> {
        (**self).tail()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum GeneratorKind {
    /// Cardinal B-spline of order `n` (degree `n`), supported on `[0, n+1]`.
    /// Tensor product in `d = 2`.
    #[serde(rename = "bspline")]
    BSpline { order: u32 },
    /// `exp(-|x|^2 / 2 sigma^2) - exp(-radius^2 / 2 sigma^2)` inside the
    /// ball of the given radius, zero outside. Continuous.
    TruncatedGaussian { sigma: f64, radius: f64 },
    /// `scale * (1 + |x|)^(-s)`.
    PolyDecay { s: f64, scale: f64 },
    /// Piecewise-linear interpolation of `values` on the nodes
    /// `origin + i * step`, zero outside the table.
    Tabulated {
        step: f64,
        values: Vec<f64>,
        origin: f64,
    },
    /// Finite linear combination `sum w_i g_i`.
    Combination {
        terms: Vec<(f64, GeneratorComponent)>,
    },
}

/// One generator function `phi^i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorComponent {
    pub kind: GeneratorKind,
    pub dim: usize,
}

impl GeneratorComponent {
    pub fn bspline(order: u32) -> Self {
        GeneratorComponent {
            kind: GeneratorKind::BSpline { order },
            dim: 1,
        }
    }

    /// Tensor-product B-spline in `dim` dimensions.
    pub fn bspline_nd(order: u32, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(GeneratorComponent {
            kind: GeneratorKind::BSpline { order },
            dim,
        })
    }

    pub fn truncated_gaussian(sigma: f64, radius: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidGenerator(format!(
                "truncated gaussian needs positive sigma and radius, got {sigma}, {radius}"
            )));
        }
        Ok(GeneratorComponent {
            kind: GeneratorKind::TruncatedGaussian { sigma, radius },
            dim: 1,
        })
    }

    pub fn poly_decay(s: f64, scale: f64) -> Result<Self> {
        Self::poly_decay_nd(s, scale, 1)
    }

    pub fn poly_decay_nd(s: f64, scale: f64, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        if !(s > dim as f64) || !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidGenerator(format!(
                "poly decay needs s > d = {dim} and positive scale, got s = {s}, scale = {scale}"
            )));
        }
        Ok(GeneratorComponent {
            kind: GeneratorKind::PolyDecay { s, scale },
            dim,
        })
    }

    pub fn tabulated(step: f64, values: Vec<f64>, origin: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidGenerator(format!(
                "tabulated step must be positive, got {step}"
            )));
        }
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) || !origin.is_finite() {
            return Err(Error::InvalidGenerator(
                "tabulated values must be finite and nonempty".into(),
            ));
        }
        Ok(GeneratorComponent {
            kind: GeneratorKind::Tabulated {
                step,
                values,
                origin,
            },
            dim: 1,
        })
    }

    pub fn combination(terms: Vec<(f64, GeneratorComponent)>) -> Result<Self> {
        let Some(first) = terms.first() else {
            return Err(Error::InvalidGenerator("empty combination".into()));
        };
        let dim = first.1.dim;
        if terms.iter().any(|(w, g)| g.dim != dim || !w.is_finite()) {
            return Err(Error::InvalidGenerator(
                "combination terms must share dimension and have finite weights".into(),
            ));
        }
        Ok(GeneratorComponent {
            kind: GeneratorKind::Combination { terms },
            dim,
        })
    }

    /// `factor * self`.
    pub fn scaled(&self, factor: f64) -> Self {
        GeneratorComponent {
            kind: GeneratorKind::Combination {
                terms: vec![(factor, self.clone())],
            },
            dim: self.dim,
        }
    }

    /// `self + weight * other`.
    pub fn plus(&self, weight: f64, other: &GeneratorComponent) -> Result<Self> {
        Self::combination(vec![(1.0, self.clone()), (weight, other.clone())])
    }

    /// Real value at `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            GeneratorKind::BSpline { order } => {
                x.iter().map(|&xi| bspline_1d(*order, xi)).product()
            }
            GeneratorKind::TruncatedGaussian { sigma, radius } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                if r2 >= radius * radius {
                    0.0
                } else {
                    let two_s2 = 2.0 * sigma * sigma;
                    ((-r2 / two_s2).exp() - (-radius * radius / two_s2).exp()).max(0.0)
                }
            }
            GeneratorKind::PolyDecay { s, scale } => scale * (1.0 + euclid(x)).powf(-s),
            GeneratorKind::Tabulated {
                step,
                values,
                origin,
            } => tabulated_1d(*step, values, *origin, x[0]),
            GeneratorKind::Combination { terms } => terms.iter().map(|(w, g)| w * g.eval(x)).sum(),
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(Error::InvalidGenerator(format!(
            "dimension must be 1 or 2, got {dim}"
        )))
    }
}

pub(crate) fn euclid(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Cardinal B-spline of order `n` on `[0, n+1]` via the uniform-knot
/// Cox–de Boor triangle.
fn bspline_1d(n: u32, x: f64) -> f64 {
    let n = n as usize;
    if !(x >= 0.0 && x < (n + 1) as f64) {
        return 0.0;
    }
    let mut b: Vec<f64> = (0..=n)
        .map(|j| {
            let y = x - j as f64;
            if (0.0..1.0).contains(&y) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    for m in 1..=n {
        let mf = m as f64;
        for j in 0..=(n - m) {
            let y = x - j as f64;
            b[j] = (y * b[j] + (mf + 1.0 - y) * b[j + 1]) / mf;
        }
    }
    b[0]
}

fn tabulated_1d(step: f64, values: &[f64], origin: f64, x: f64) -> f64 {
    let t = (x - origin) / step;
    let last = (values.len() - 1) as f64;
    if !(t >= 0.0 && t <= last) {
        return 0.0;
    }
    let i = t.floor() as usize;
    if i >= values.len() - 1 {
        return values[values.len() - 1];
    }
    let frac = t - i as f64;
    values[i] * (1.0 - frac) + values[i + 1] * frac
}

impl Field for GeneratorComponent {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> Complex64 {
        Complex64::new(self.eval(x), 0.0)
    }

    fn support(&self) -> Option<Interval> {
        match &self.kind {
            GeneratorKind::BSpline { order } => Some(Interval::new(0.0, *order as f64 + 1.0)),
            GeneratorKind::TruncatedGaussian { radius, .. } => {
                Some(Interval::new(-radius, *radius))
            }
            GeneratorKind::PolyDecay { .. } => None,
            GeneratorKind::Tabulated {
                step,
                values,
                origin,
            } => Some(Interval::new(
                *origin,
                origin + step * (values.len() - 1) as f64,
            )),
            GeneratorKind::Combination { terms } => terms
                .iter()
                .map(|(_, g)| g.support())
                .try_fold(None::<Interval>, |acc, s| {
                    s.map(|s| Some(acc.map_or(s, |a| a.hull(s))))
                })
                .flatten(),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            GeneratorKind::BSpline { order } => (0..=*order + 1).map(f64::from).collect(),
            GeneratorKind::TruncatedGaussian { radius, .. } => vec![-radius, 0.0, *radius],
            GeneratorKind::PolyDecay { .. } => vec![0.0],
            GeneratorKind::Tabulated {
                step,
                values,
                origin,
            } => (0..values.len())
                .map(|i| origin + step * i as f64)
                .collect(),
            GeneratorKind::Combination { terms } => {
                let mut bp: Vec<f64> = terms.iter().flat_map(|(_, g)| g.breakpoints()).collect();
                bp.sort_by(f64::total_cmp);
                bp.dedup();
                bp
            }
        }
    }

    fn tail(&self) -> Option<Tail> {
        match &self.kind {
            GeneratorKind::PolyDecay { s, scale } => Some(Tail {
                scale: *scale,
                s: *s,
            }),
            GeneratorKind::Combination { terms } => {
                let tails: Vec<(f64, Tail)> = terms
                    .iter()
                    .filter_map(|(w, g)| g.tail().map(|t| (*w, t)))
                    .collect();
                if tails.is_empty() {
                    return None;
                }
                let s = tails.iter().map(|(_, t)| t.s).fold(f64::INFINITY, f64::min);
                let scale = tails.iter().map(|(w, t)| w.abs() * t.scale).sum();
                Some(Tail { scale, s })
            }
            _ => None,
        }
    }
}

/// The generator vector `Phi = (phi^1, ..., phi^r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorVector {
    components: Vec<GeneratorComponent>,
}

impl GeneratorVector {
    pub fn new(components: Vec<GeneratorComponent>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::InvalidGenerator(
                "generator vector needs at least one component".into(),
            ));
        };
        if components.iter().any(|c| c.dim != first.dim) {
            return Err(Error::InvalidGenerator(
                "generator components must share dimension".into(),
            ));
        }
        Ok(GeneratorVector { components })
    }

    pub fn single(component: GeneratorComponent) -> Self {
        GeneratorVector {
            components: vec![component],
        }
    }

    pub fn components(&self) -> &[GeneratorComponent] {
        &self.components
    }

    pub fn r(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim
    }

    /// Hull of all component supports, `None` if any component is not
    /// compactly supported.
    pub fn support(&self) -> Option<Interval> {
        self.components
            .iter()
            .map(Field::support)
            .try_fold(None::<Interval>, |acc, s| {
                s.map(|s| Some(acc.map_or(s, |a| a.hull(s))))
            })
            .flatten()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        GeneratorVector {
            components: self.components.iter().map(|c| c.scaled(factor)).collect(),
        }
    }

    /// Adds `weight * bump` to the component at `index`.
    pub fn perturbed(&self, index: usize, weight: f64, bump: &GeneratorComponent) -> Result<Self> {
        let mut components = self.components.clone();
        let target = components
            .get(index)
            .ok_or_else(|| Error::InvalidGenerator(format!("no component {index}")))?;
        components[index] = target.plus(weight, bump)?;
        Self::new(components)
    }
}

/// Numerical esssup contract: cell grids start at `base_subdivisions`
/// points per axis and are refined by `refinement` until the relative change
/// drops below `rel_tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsssupSpec {
    pub base_subdivisions: usize,
    pub refinement: usize,
    pub rel_tol: f64,
    pub max_rounds: usize,
}

impl Default for EsssupSpec {
    fn default() -> Self {
        EsssupSpec {
            base_subdivisions: 16,
            refinement: 2,
            rel_tol: 1e-6,
            max_rounds: 10,
        }
    }
}

impl EsssupSpec {
    pub fn validate(&self) -> Result<()> {
        if self.base_subdivisions == 0
            || self.refinement < 2
            || !(self.rel_tol > 0.0)
            || self.max_rounds == 0
        {
            return Err(Error::InvalidGenerator(format!(
                "invalid esssup spec {self:?}"
            )));
        }
        Ok(())
    }
}

/// A norm value with the last refinement change (plus truncated tail) as
/// its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub error: f64,
}

const MAX_SHELLS_1D: usize = 200_000;
const MAX_SHELLS_2D: usize = 1_000;

fn axis_nodes(lo: f64, hi: f64, n: usize, breakpoints: &[f64]) -> Vec<f64> {
    let mut nodes: Vec<f64> = (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect();
    nodes.extend(breakpoints.iter().copied().filter(|&b| b > lo && b < hi));
    nodes
}

fn grid_sup<F: Field + ?Sized>(f: &F, cell: &[i64], n: usize, breakpoints: &[f64]) -> f64 {
    match cell.len() {
        1 => {
            let lo = cell[0] as f64;
            axis_nodes(lo, lo + 1.0, n, breakpoints)
                .into_iter()
                .map(|x| f.value(&[x]).norm())
                .fold(0.0, f64::max)
        }
        2 => {
            let xs = axis_nodes(cell[0] as f64, cell[0] as f64 + 1.0, n, breakpoints);
            let ys = axis_nodes(cell[1] as f64, cell[1] as f64 + 1.0, n, breakpoints);
            let mut best = 0.0f64;
            for &x in &xs {
                for &y in &ys {
                    best = best.max(f.value(&[x, y]).norm());
                }
            }
            best
        }
        d => panic!("unsupported dimension {d}"),
    }
}

/// Supremum of `|f|` over the cell `[0,1]^d + k`, refined per `spec`.
/// Returns `(sup, last change)`.
pub fn cell_sup<F: Field + ?Sized>(f: &F, cell: &[i64], spec: &EsssupSpec) -> Result<(f64, f64)> {
    let breakpoints = f.breakpoints();
    let mut n = spec.base_subdivisions;
    let mut prev = grid_sup(f, cell, n, &breakpoints);
    let mut delta = f64::INFINITY;
    for _ in 0..spec.max_rounds {
        n *= spec.refinement;
        let cur = grid_sup(f, cell, n, &breakpoints);
        delta = (cur - prev).abs();
        if delta <= spec.rel_tol * cur.abs() + 1e-15 {
            return Ok((cur, delta));
        }
        prev = cur;
    }
    Err(Error::NonConvergence {
        rounds: spec.max_rounds,
        cell: cell.to_vec(),
        delta,
    })
}

fn cells_covering(dim: usize, support: Interval) -> Vec<Vec<i64>> {
    let lo = support.lo.floor() as i64;
    let hi = (support.hi.ceil() as i64 - 1).max(lo);
    match dim {
        1 => (lo..=hi).map(|k| vec![k]).collect(),
        2 => (lo..=hi)
            .flat_map(|a| (lo..=hi).map(move |b| vec![a, b]))
            .collect(),
        d => panic!("unsupported dimension {d}"),
    }
}

/// Cells at Chebyshev cell-distance `m` from the origin. The cell `k` has
/// distance `max_i dist(k_i)` with `dist(k) = k` for `k >= 0`, `-k-1` otherwise.
fn shell(dim: usize, m: i64) -> Vec<Vec<i64>> {
    let ks = [m, -m - 1];
    match dim {
        1 => ks.iter().map(|&k| vec![k]).collect(),
        2 => {
            let mut out = Vec::new();
            for a in -m - 1..=m {
                for b in -m - 1..=m {
                    let da = if a >= 0 { a } else { -a - 1 };
                    let db = if b >= 0 { b } else { -b - 1 };
                    if da.max(db) == m {
                        out.push(vec![a, b]);
                    }
                }
            }
            out
        }
        d => panic!("unsupported dimension {d}"),
    }
}

/// `W^p` norm of an arbitrary field.
pub fn w_norm_field<F: Field + ?Sized>(f: &F, p: PNorm, spec: &EsssupSpec) -> Result<NormEstimate> {
    spec.validate()?;
    let dim = f.dim();
    if let Some(support) = f.support() {
        let mut sups = Vec::new();
        let mut err = 0.0;
        for cell in cells_covering(dim, support) {
            let (s, d) = cell_sup(f, &cell, spec)?;
            sups.push(s);
            err += d;
        }
        return Ok(NormEstimate {
            value: p.combine(sups),
            error: err,
        });
    }

    let tail = f.tail().ok_or_else(|| {
        Error::InvalidGenerator("function has neither compact support nor a decay envelope".into())
    })?;
    let max_shells = if dim == 1 {
        MAX_SHELLS_1D
    } else {
        MAX_SHELLS_2D
    };
    let d = dim as f64;
    let mut acc = 0.0f64;
    let mut err = 0.0f64;
    let mut tail_bound = 0.0;
    for m in 0..max_shells as i64 {
        for cell in shell(dim, m) {
            let (s, delta) = cell_sup(f, &cell, spec)?;
            err += delta;
            acc = match p {
                PNorm::One => acc + s,
                PNorm::Two => acc + s * s,
                PNorm::Inf => acc.max(s),
            };
        }
        // Cells beyond shell m are at distance >= m + 1 from the origin.
        let mf = m as f64 + 1.0;
        match p {
            PNorm::Inf => {
                tail_bound = tail.scale * (1.0 + mf).powf(-tail.s);
                if tail_bound <= acc {
                    tail_bound = 0.0;
                    break;
                }
            }
            PNorm::One | PNorm::Two => {
                let pe = if p == PNorm::One { 1.0 } else { 2.0 };
                let sp = tail.s * pe;
                tail_bound =
                    d * 2f64.powf(d) * tail.scale.powf(pe) * (mf + 1.0).powf(d - sp) / (sp - d);
                if tail_bound <= spec.rel_tol * acc {
                    break;
                }
            }
        }
    }
    let (value, tail_err) = match p {
        PNorm::One => (acc, tail_bound),
        PNorm::Two => (acc.sqrt(), (acc + tail_bound).sqrt() - acc.sqrt()),
        PNorm::Inf => (acc, tail_bound),
    };
    Ok(NormEstimate {
        value,
        error: err + tail_err,
    })
}

/// `||g||_{W^p}`.
pub fn w_norm(g: &GeneratorComponent, p: PNorm, spec: &EsssupSpec) -> Result<NormEstimate> {
    w_norm_field(g, p, spec)
}

/// `||Phi||_{(W^p)^(r)} = sum_i ||phi^i||_{W^p}`.
pub fn w_norm_vector(phi: &GeneratorVector, p: PNorm, spec: &EsssupSpec) -> Result<NormEstimate> {
    let mut total = NormEstimate {
        value: 0.0,
        error: 0.0,
    };
    for g in phi.components() {
        let n = w_norm(g, p, spec)?;
        total.value += n.value;
        total.error += n.error;
    }
    Ok(total)
}

fn ball_offsets(dim: usize, gamma: f64, n: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => (0..=n)
            .map(|i| vec![-gamma + 2.0 * gamma * i as f64 / n as f64])
            .collect(),
        2 => {
            let mut out = Vec::new();
            for i in 0..=n {
                for j in 0..=n {
                    let a = -gamma + 2.0 * gamma * i as f64 / n as f64;
                    let b = -gamma + 2.0 * gamma * j as f64 / n as f64;
                    if a * a + b * b <= gamma * gamma {
                        out.push(vec![a, b]);
                    }
                }
            }
            for i in 0..4 * n {
                let t = std::f64::consts::TAU * i as f64 / (4 * n) as f64;
                out.push(vec![gamma * t.cos(), gamma * t.sin()]);
            }
            out
        }
        d => panic!("unsupported dimension {d}"),
    }
}

fn osc_on_grid<F: Field + ?Sized>(
    f: &F,
    gamma: f64,
    x: &[f64],
    n: usize,
    breakpoints: &[f64],
) -> f64 {
    let center = f.value(x);
    let mut offsets = ball_offsets(x.len(), gamma, n);
    if x.len() == 1 {
        offsets.extend(
            breakpoints
                .iter()
                .map(|b| b - x[0])
                .filter(|d| d.abs() < gamma)
                .map(|d| vec![d]),
        );
    }
    let mut shifted = vec![0.0; x.len()];
    offsets
        .iter()
        .map(|off| {
            for (s, (xi, oi)) in shifted.iter_mut().zip(x.iter().zip(off)) {
                *s = xi + oi;
            }
            (f.value(&shifted) - center).norm()
        })
        .fold(0.0, f64::max)
}

/// Oscillation modulus `osc_gamma f(x) = sup_{|dx| < gamma} |f(x + dx) - f(x)|`
/// over the Euclidean ball, sampled on a refined grid.
pub fn osc_field<F: Field + ?Sized>(f: &F, gamma: f64, x: &[f64], spec: &EsssupSpec) -> f64 {
    let breakpoints = f.breakpoints();
    let mut n = spec.base_subdivisions.max(2);
    let mut prev = osc_on_grid(f, gamma, x, n, &breakpoints);
    for _ in 0..spec.max_rounds {
        n *= spec.refinement;
        let cur = osc_on_grid(f, gamma, x, n, &breakpoints);
        if (cur - prev).abs() <= spec.rel_tol * cur + 1e-15 {
            return cur;
        }
        prev = cur;
    }
    prev
}

pub fn osc(g: &GeneratorComponent, gamma: f64, x: &[f64], spec: &EsssupSpec) -> f64 {
    osc_field(g, gamma, x, spec)
}

/// The function `x -> osc_gamma f(x)` as a [`Field`].
pub struct Oscillation<'a, F: ?Sized> {
    pub f: &'a F,
    pub gamma: f64,
    pub spec: EsssupSpec,
}

impl<F: Field + ?Sized> Field for Oscillation<'_, F> {
    fn dim(&self) -> usize {
        self.f.dim()
    }

    fn value(&self, x: &[f64]) -> Complex64 {
        Complex64::new(osc_field(self.f, self.gamma, x, &self.spec), 0.0)
    }

    fn support(&self) -> Option<Interval> {
        self.f.support().map(|s| s.widen(self.gamma))
    }

    fn breakpoints(&self) -> Vec<f64> {
        let base = self.f.breakpoints();
        let mut out = Vec::with_capacity(base.len() * 3);
        for b in base {
            out.extend([b - self.gamma, b, b + self.gamma]);
        }
        out.sort_by(f64::total_cmp);
        out
    }

    fn tail(&self) -> Option<Tail> {
        // |f(x+dx) - f(x)| <= 2 sup_{|dx|<gamma} |f(x+dx)|, then Peetre.
        self.f.tail().map(|t| Tail {
            scale: 2.0 * t.scale * (1.0 + self.gamma).powf(t.s),
            s: t.s,
        })
    }
}

/// `||osc_gamma f||_{W^1}`.
pub fn osc_w1_norm_field<F: Field + ?Sized>(
    f: &F,
    gamma: f64,
    spec: &EsssupSpec,
) -> Result<NormEstimate> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidGenerator(format!(
            "oscillation radius must be positive, got {gamma}"
        )));
    }
    let o = Oscillation {
        f,
        gamma,
        spec: *spec,
    };
    w_norm_field(&o, PNorm::One, spec)
}

pub fn osc_w1_norm(g: &GeneratorComponent, gamma: f64, spec: &EsssupSpec) -> Result<NormEstimate> {
    osc_w1_norm_field(g, gamma, spec)
}

/// The translate `x -> f(x - shift)`.
pub struct Shifted<'a, F: ?Sized> {
    pub f: &'a F,
    pub shift: Vec<f64>,
}

impl<F: Field + ?Sized> Field for Shifted<'_, F> {
    fn dim(&self) -> usize {
        self.f.dim()
    }

    fn value(&self, x: &[f64]) -> Complex64 {
        let y: Vec<f64> = x.iter().zip(&self.shift).map(|(a, b)| a - b).collect();
        self.f.value(&y)
    }

    fn support(&self) -> Option<Interval> {
        // per-axis hull over all shift coordinates
        let lo = self.shift.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.shift.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.f
            .support()
            .map(|s| Interval::new(s.lo + lo, s.hi + hi))
    }

    fn breakpoints(&self) -> Vec<f64> {
        let base = self.f.breakpoints();
        let mut out: Vec<f64> = self
            .shift
            .iter()
            .flat_map(|s| base.iter().map(move |b| b + s))
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn tail(&self) -> Option<Tail> {
        let m = euclid(&self.shift);
        self.f.tail().map(|t| Tail {
            scale: t.scale * (1.0 + m).powf(t.s),
            s: t.s,
        })
    }
}

/// Offsets used to probe pointwise decay: a fine grid near the origin and a
/// geometric sequence out to 1024.
pub(crate) fn decay_probe_offsets() -> Vec<f64> {
    let mut out: Vec<f64> = (0..=64).map(|i| i as f64 / 8.0).collect();
    out.extend((13..=40).map(|k| 2f64.powf(k as f64 / 4.0)));
    out
}

/// Checks `|f(x)| <= C (1 + |x|)^(-s)` on probe points along the axes (and
/// the diagonal when `d = 2`).
pub fn verify_decay_field<F: Field + ?Sized>(f: &F, s: f64) -> DecayFit {
    let dim = f.dim();
    let mut samples = Vec::new();
    for r in decay_probe_offsets() {
        let probes: Vec<Vec<f64>> = match dim {
            1 => vec![vec![r], vec![-r]],
            _ => {
                let d = r / std::f64::consts::SQRT_2;
                vec![
                    vec![r, 0.0],
                    vec![-r, 0.0],
                    vec![0.0, r],
                    vec![0.0, -r],
                    vec![d, d],
                    vec![-d, -d],
                ]
            }
        };
        for x in probes {
            samples.push((r, f.value(&x).norm()));
        }
    }
    DecayFit::fit(samples, s)
}

pub fn verify_decay(g: &GeneratorComponent, s: f64) -> DecayFit {
    verify_decay_field(g, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> EsssupSpec {
        EsssupSpec::default()
    }

    fn hat() -> GeneratorComponent {
        GeneratorComponent::bspline(1)
    }

    #[test]
    fn bspline_values() {
        assert_eq!(hat().eval(&[0.5]), 0.5);
        assert_eq!(hat().eval(&[5.0]), 0.0);
        assert_eq!(hat().eval(&[1.0]), 1.0);
        assert_eq!(hat().eval(&[1.5]), 0.5);
        // cubic B-spline peak 2/3 at x = 2
        let cubic = GeneratorComponent::bspline(3);
        assert!((cubic.eval(&[2.0]) - 2.0 / 3.0).abs() < 1e-15);
        assert!((cubic.eval(&[1.0]) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn bspline_partition_of_unity() {
        let g = GeneratorComponent::bspline(3);
        for i in 0..50 {
            let x = 0.37 + i as f64 * 0.11;
            let sum: f64 = (-6..=12).map(|k| g.eval(&[x - k as f64])).sum();
            assert!((sum - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn poly_decay_value() {
        let g = GeneratorComponent::poly_decay(2.0, 1.0).unwrap();
        assert_eq!(g.eval(&[1.0]), 0.25);
        assert!(GeneratorComponent::poly_decay(1.0, 1.0).is_err());
    }

    #[test]
    fn tabulated_interpolates_and_vanishes_outside() {
        let g = GeneratorComponent::tabulated(0.5, vec![0.0, 1.0, 0.0], 1.0).unwrap();
        assert_eq!(g.eval(&[1.5]), 1.0);
        assert_eq!(g.eval(&[1.25]), 0.5);
        assert_eq!(g.eval(&[0.9]), 0.0);
        assert_eq!(g.eval(&[2.1]), 0.0);
        assert!(GeneratorComponent::tabulated(0.0, vec![1.0], 0.0).is_err());
        assert!(GeneratorComponent::tabulated(1.0, vec![f64::NAN], 0.0).is_err());
    }

    #[test]
    fn truncated_gaussian_is_continuous_at_radius() {
        let g = GeneratorComponent::truncated_gaussian(1.0, 2.0).unwrap();
        assert!(g.eval(&[1.999999]).abs() < 1e-5);
        assert_eq!(g.eval(&[2.5]), 0.0);
        assert!(g.eval(&[0.0]) > 0.8);
    }

    #[test]
    fn hat_w_norms() {
        assert!((w_norm(&hat(), PNorm::One, &spec()).unwrap().value - 2.0).abs() < 1e-12);
        assert!((w_norm(&hat(), PNorm::Inf, &spec()).unwrap().value - 1.0).abs() < 1e-12);
        assert!((w_norm(&hat(), PNorm::Two, &spec()).unwrap().value - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_function_has_zero_norm() {
        let z = GeneratorComponent::tabulated(0.1, vec![0.0; 20], -1.0).unwrap();
        for p in PNorm::ALL {
            assert_eq!(w_norm(&z, p, &spec()).unwrap().value, 0.0);
        }
    }

    #[test]
    fn vector_norm_sums_components() {
        let two = GeneratorVector::new(vec![hat(), hat()]).unwrap();
        assert!((w_norm_vector(&two, PNorm::One, &spec()).unwrap().value - 4.0).abs() < 1e-12);
        let one = GeneratorVector::single(hat());
        assert!((w_norm_vector(&one, PNorm::One, &spec()).unwrap().value - 2.0).abs() < 1e-12);
        let z = GeneratorComponent::tabulated(0.5, vec![0.0, 0.0], 0.0).unwrap();
        let with_zero = GeneratorVector::new(vec![z, hat()]).unwrap();
        assert!(
            (w_norm_vector(&with_zero, PNorm::One, &spec())
                .unwrap()
                .value
                - 2.0)
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let g2 = GeneratorComponent::bspline_nd(1, 2).unwrap();
        assert!(GeneratorVector::new(vec![hat(), g2]).is_err());
    }

    #[test]
    fn poly_decay_w1_matches_series() {
        // cell sups are (1 + m)^-3 twice per shell: 2 * zeta(3)
        let g = GeneratorComponent::poly_decay(3.0, 1.0).unwrap();
        let n = w_norm(&g, PNorm::One, &spec()).unwrap();
        let zeta3 = 1.202_056_903_159_594;
        assert!((n.value - 2.0 * zeta3).abs() < 1e-5, "{n:?}");
        assert!(n.error < 1e-4);
        let inf = w_norm(&g, PNorm::Inf, &spec()).unwrap();
        assert!((inf.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tensor_bspline_w1_in_two_dimensions() {
        let g = GeneratorComponent::bspline_nd(1, 2).unwrap();
        // four cells, sup 1 each
        assert!((w_norm(&g, PNorm::One, &spec()).unwrap().value - 4.0).abs() < 1e-12);
    }

    #[test]
    fn osc_of_hat() {
        assert!((osc(&hat(), 0.1, &[1.0], &spec()) - 0.1).abs() < 1e-12);
        assert!((osc(&hat(), 0.5, &[1.0], &spec()) - 0.5).abs() < 1e-12);
        assert_eq!(osc(&hat(), 0.1, &[10.0], &spec()), 0.0);
    }

    #[test]
    fn osc_w1_of_hat_scales_with_gamma() {
        let a = osc_w1_norm(&hat(), 0.1, &spec()).unwrap().value;
        let b = osc_w1_norm(&hat(), 0.05, &spec()).unwrap().value;
        let c = osc_w1_norm(&hat(), 0.01, &spec()).unwrap().value;
        assert!((a - 0.4).abs() < 1e-6, "{a}");
        assert!((c - 0.04).abs() < 1e-6, "{c}");
        assert!(b <= a);
        assert!((b / a - 0.5).abs() < 0.1);
    }

    #[test]
    fn osc_rejects_nonpositive_gamma() {
        assert!(osc_w1_norm(&hat(), 0.0, &spec()).is_err());
    }

    #[test]
    fn shifted_norm_within_two_to_the_d() {
        let g = hat();
        let base = w_norm(&g, PNorm::One, &spec()).unwrap().value;
        for y in [0.0, 0.3, 0.5, 1.0, -2.7] {
            let s = Shifted {
                f: &g,
                shift: vec![y],
            };
            let n = w_norm_field(&s, PNorm::One, &spec()).unwrap().value;
            assert!(n <= 2.0 * base + 1e-9, "shift {y}: {n}");
        }
    }

    #[test]
    fn decay_checks() {
        let g = GeneratorComponent::poly_decay(2.0, 1.0).unwrap();
        let fit = verify_decay(&g, 2.0);
        assert!(fit.pass);
        assert!((fit.c_hat - 1.0).abs() < 1e-9);
        assert!(verify_decay(&hat(), 5.0).pass);
        let slow = GeneratorComponent::poly_decay(1.5, 1.0).unwrap();
        assert!(!verify_decay(&slow, 2.0).pass);
    }

    struct Cusp;

    impl Field for Cusp {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, x: &[f64]) -> Complex64 {
            // peak at 1/3 sharp enough that no dyadic grid settles on it
            Complex64::new(1.0 - (x[0] - 1.0 / 3.0).abs().powf(0.01), 0.0)
        }
        fn support(&self) -> Option<Interval> {
            Some(Interval::new(0.0, 1.0))
        }
        fn breakpoints(&self) -> Vec<f64> {
            Vec::new()
        }
    }

    #[test]
    fn cusp_fails_to_converge() {
        let err = w_norm_field(&Cusp, PNorm::One, &spec()).unwrap_err();
        assert!(
            matches!(err, Error::NonConvergence { ref cell, .. } if cell == &vec![0]),
            "{err}"
        );
    }
}
