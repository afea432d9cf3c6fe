//! Synthesis in `V^p(Φ)`, Gram matrices, Riesz bounds and the dual generator.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::amalgam::{self, Complex64, EsssupSpec, Field, GeneratorVector, Interval, Tail};
use crate::error::{Error, Result};
use crate::norm::PNorm;
use crate::quadrature::{integrate_box, Rule};

/// The lattice window `[-K, K]^d`, enumerated lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CoeffWindow {
    pub dim: usize,
    pub half_width: i64,
}

impl CoeffWindow {
    pub fn new(dim: usize, half_width: i64) -> Result<Self> {
        if !(dim == 1 || dim == 2) || half_width < 0 {
            return Err(Error::InvalidWindow(format!(
                "window needs d in {{1,2}} and K >= 0, got d = {dim}, K = {half_width}"
            )));
        }
        Ok(CoeffWindow { dim, half_width })
    }

    pub fn side(&self) -> usize {
        (2 * self.half_width + 1) as usize
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, idx: usize) -> Vec<i64> {
        let side = self.side();
        let k = self.half_width;
        match self.dim {
            1 => vec![idx as i64 - k],
            _ => vec![(idx / side) as i64 - k, (idx % side) as i64 - k],
        }
    }

    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        let side = self.side() as i64;
        let mut idx = 0i64;
        for &c in k {
            if c.abs() > self.half_width {
                return None;
            }
            idx = idx * side + c + self.half_width;
        }
        Some(idx as usize)
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// Indices whose lattice points lie in `[-K + margin, K - margin]^d`.
    pub fn interior(&self, margin: i64) -> Vec<usize> {
        let bound = self.half_width - margin;
        (0..self.len())
            .filter(|&i| self.point(i).iter().all(|c| c.abs() <= bound))
            .collect()
    }
}

/// `r` coefficient sequences on a common window.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffVector {
    window: CoeffWindow,
    data: Vec<Vec<Complex64>>,
}

impl CoeffVector {
    pub fn new(window: CoeffWindow, data: Vec<Vec<Complex64>>) -> Result<Self> {
        if data.is_empty() || data.iter().any(|c| c.len() != window.len()) {
            return Err(Error::DimensionMismatch(format!(
                "coefficient sequences must have {} entries each",
                window.len()
            )));
        }
        if data
            .iter()
            .flatten()
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::DimensionMismatch(
                "coefficients must be finite".into(),
            ));
        }
        Ok(CoeffVector { window, data })
    }

    pub fn zeros(window: CoeffWindow, r: usize) -> Self {
        CoeffVector {
            window,
            data: vec![vec![Complex64::new(0.0, 0.0); window.len()]; r],
        }
    }

    /// Unit coefficient for component `i` at lattice point `k`.
    pub fn unit(window: CoeffWindow, r: usize, i: usize, k: &[i64]) -> Result<Self> {
        let mut c = Self::zeros(window, r);
        let idx = window
            .index_of(k)
            .ok_or_else(|| Error::DimensionMismatch(format!("{k:?} outside the window")))?;
        c.data[i][idx] = Complex64::new(1.0, 0.0);
        Ok(c)
    }

    /// Builds from the flat layout `i * |K| + k`.
    pub fn from_flat(window: CoeffWindow, r: usize, flat: &[Complex64]) -> Result<Self> {
        if flat.len() != r * window.len() {
            return Err(Error::DimensionMismatch(format!(
                "flat vector has {} entries, expected {}",
                flat.len(),
                r * window.len()
            )));
        }
        Self::new(
            window,
            flat.chunks(window.len()).map(<[_]>::to_vec).collect(),
        )
    }

    pub fn flat(&self) -> Vec<Complex64> {
        self.data.iter().flatten().copied().collect()
    }

    pub fn window(&self) -> CoeffWindow {
        self.window
    }

    pub fn r(&self) -> usize {
        self.data.len()
    }

    pub fn component(&self, i: usize) -> &[Complex64] {
        &self.data[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.data[i]
    }

    pub fn sub(&self, other: &CoeffVector) -> Result<CoeffVector> {
        if self.window != other.window || self.r() != other.r() {
            return Err(Error::DimensionMismatch(
                "coefficient vectors differ in shape".into(),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        Ok(CoeffVector {
            window: self.window,
            data,
        })
    }
}

/// `‖C‖ = Σ_i ‖cⁱ‖_{ℓ^p}`.
pub fn coeff_norm(c: &CoeffVector, p: PNorm) -> f64 {
    c.data
        .iter()
        .map(|ci| p.combine(ci.iter().map(|v| v.norm())))
        .sum()
}

/// `f = Σ_k Σ_i cⁱ_k φⁱ(· − k)` as a [`Field`].
pub struct Synthesized<'a> {
    pub coeffs: &'a CoeffVector,
    pub phi: &'a GeneratorVector,
    support: Option<Interval>,
}

impl<'a> Synthesized<'a> {
    pub fn new(coeffs: &'a CoeffVector, phi: &'a GeneratorVector) -> Result<Self> {
        if coeffs.window.dim != phi.dim() || coeffs.r() != phi.r() {
            return Err(Error::DimensionMismatch(format!(
                "coefficients (d = {}, r = {}) do not match generators (d = {}, r = {})",
                coeffs.window.dim,
                coeffs.r(),
                phi.dim(),
                phi.r()
            )));
        }
        let support = phi.support();
        Ok(Synthesized {
            coeffs,
            phi,
            support,
        })
    }

    fn k_range(&self, x: f64) -> (i64, i64) {
        let k = self.coeffs.window.half_width;
        match self.support {
            // φ(x - k) ≠ 0 needs x - k in [a, b]
            Some(s) => (
                ((x - s.hi).ceil() as i64).max(-k),
                ((x - s.lo).floor() as i64).min(k),
            ),
            None => (-k, k),
        }
    }
}

impl Field for Synthesized<'_> {
    fn dim(&self) -> usize {
        self.phi.dim()
    }

    fn value(&self, x: &[f64]) -> Complex64 {
        let w = self.coeffs.window;
        let mut total = Complex64::new(0.0, 0.0);
        let mut y = vec![0.0; x.len()];
        match x.len() {
            1 => {
                let (lo, hi) = self.k_range(x[0]);
                for k in lo..=hi {
                    let idx = w.index_of(&[k]).expect("k within window");
                    y[0] = x[0] - k as f64;
                    for (i, g) in self.phi.components().iter().enumerate() {
                        let c = self.coeffs.data[i][idx];
                        if c != Complex64::new(0.0, 0.0) {
                            total += c * g.eval(&y);
                        }
                    }
                }
            }
            _ => {
                let (lo0, hi0) = self.k_range(x[0]);
                let (lo1, hi1) = self.k_range(x[1]);
                for k0 in lo0..=hi0 {
                    for k1 in lo1..=hi1 {
                        let idx = w.index_of(&[k0, k1]).expect("k within window");
                        y[0] = x[0] - k0 as f64;
                        y[1] = x[1] - k1 as f64;
                        for (i, g) in self.phi.components().iter().enumerate() {
                            let c = self.coeffs.data[i][idx];
                            if c != Complex64::new(0.0, 0.0) {
                                total += c * g.eval(&y);
                            }
                        }
                    }
                }
            }
        }
        total
    }

    fn support(&self) -> Option<Interval> {
        let k = self.coeffs.window.half_width as f64;
        self.support.map(|s| s.plus(Interval::new(-k, k)))
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut bp: Vec<f64> = self
            .phi
            .components()
            .iter()
            .flat_map(|g| g.breakpoints())
            .map(|b| b - b.floor())
            .collect();
        bp.sort_by(f64::total_cmp);
        bp.dedup();
        let Some(s) = self.support() else {
            return bp;
        };
        let (lo, hi) = (s.lo.floor() as i64, s.hi.ceil() as i64);
        (lo..=hi)
            .flat_map(|n| bp.iter().map(move |b| n as f64 + b))
            .collect()
    }

    fn tail(&self) -> Option<Tail> {
        let total: f64 = self.coeffs.data.iter().flatten().map(|v| v.norm()).sum();
        let k = self.coeffs.window.half_width as f64 * (self.dim() as f64).sqrt();
        let mut out: Option<Tail> = None;
        for g in self.phi.components() {
            if let Some(t) = g.tail() {
                let scaled = Tail {
                    scale: t.scale * total * (1.0 + k).powf(t.s),
                    s: t.s,
                };
                out = Some(match out {
                    None => scaled,
                    Some(o) => Tail {
                        scale: o.scale + scaled.scale,
                        s: o.s.min(scaled.s),
                    },
                });
            }
        }
        out
    }
}

pub fn synthesize(c: &CoeffVector, phi: &GeneratorVector, x: &[f64]) -> Result<Complex64> {
    Ok(Synthesized::new(c, phi)?.value(x))
}

/// Radius used when a function without compact support must be integrated
/// over a bounded region.
pub const DEFAULT_TAIL_RADIUS: f64 = 32.0;

/// `‖f‖_{L^p}` by composite Gauss–Legendre quadrature over the support hull
/// (or `[-radius, radius]^d` without compact support); `p = ∞` uses the
/// refined cell suprema.
pub fn lp_norm<F: Field + ?Sized>(f: &F, p: PNorm, order: usize, radius: f64) -> Result<f64> {
    if p == PNorm::Inf {
        return Ok(amalgam::w_norm_field(f, PNorm::Inf, &EsssupSpec::default())?.value);
    }
    let hull = f.support().unwrap_or(Interval::new(-radius, radius));
    let rule = Rule::new(order);
    let bp = f.breakpoints();
    let integrand = |x: &[f64]| {
        let v = f.value(x).norm();
        if p == PNorm::One {
            v
        } else {
            v * v
        }
    };
    let integral = integrate_box(integrand, f.dim(), hull.lo, hull.hi, &bp, &rule);
    Ok(if p == PNorm::One {
        integral
    } else {
        integral.sqrt()
    })
}

const GRAM_ORDER: usize = 8;
const GRAM_REL_TOL: f64 = 1e-8;

/// Inner products `a_ij(m) = ∫ φⁱ(x) φʲ(x − m) dx` for all lattice offsets
/// within reach, keyed by `(i, j, m)`.
struct GramSymbol {
    dim: usize,
    reach: i64,
    values: Vec<f64>,
    r: usize,
}

impl GramSymbol {
    fn side(&self) -> usize {
        (2 * self.reach + 1) as usize
    }

    fn slot(&self, i: usize, j: usize, m: &[i64]) -> Option<usize> {
        let side = self.side() as i64;
        let mut idx = 0i64;
        for &c in m {
            if c.abs() > self.reach {
                return None;
            }
            idx = idx * side + c + self.reach;
        }
        let per = self.side().pow(self.dim as u32);
        Some((i * self.r + j) * per + idx as usize)
    }

    fn get(&self, i: usize, j: usize, m: &[i64]) -> f64 {
        self.slot(i, j, m).map_or(0.0, |s| self.values[s])
    }
}

fn gram_symbol(phi: &GeneratorVector, max_offset: i64, order: usize) -> Result<GramSymbol> {
    let dim = phi.dim();
    let r = phi.r();
    let (hull, reach) = match phi.support() {
        Some(s) => (s, (s.length().ceil() as i64).min(max_offset)),
        None => {
            let t = max_offset as f64 + DEFAULT_TAIL_RADIUS;
            (Interval::new(-t, t), max_offset)
        }
    };
    let side = (2 * reach + 1) as usize;
    let per = side.pow(dim as u32);
    let offsets: Vec<Vec<i64>> = (0..per)
        .map(|idx| match dim {
            1 => vec![idx as i64 - reach],
            _ => vec![(idx / side) as i64 - reach, (idx % side) as i64 - reach],
        })
        .collect();
    let rule = Rule::new(order);
    let comps = phi.components();
    let jobs: Vec<(usize, usize, usize)> = (0..r)
        .flat_map(|i| (0..r).flat_map(move |j| (0..per).map(move |o| (i, j, o))))
        .collect();
    let values: Vec<f64> = jobs
        .par_iter()
        .map(|&(i, j, o)| {
            let m = &offsets[o];
            let gi = &comps[i];
            let gj = &comps[j];
            let mut bp = gi.breakpoints();
            if dim == 1 {
                bp.extend(gj.breakpoints().iter().map(|b| b + m[0] as f64));
            }
            let f = |x: &[f64]| {
                let shifted: Vec<f64> = x.iter().zip(m).map(|(xi, mi)| xi - *mi as f64).collect();
                gi.eval(x) * gj.eval(&shifted)
            };
            integrate_box(f, dim, hull.lo, hull.hi, &bp, &rule)
        })
        .collect();
    Ok(GramSymbol {
        dim,
        reach,
        values,
        r,
    })
}

/// Real symmetric Gram matrix `⟨φⁱ(· − k), φʲ(· − l)⟩` on the window, in the
/// flat layout `i * |K| + k`.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub window: CoeffWindow,
    pub r: usize,
    pub matrix: DMatrix<f64>,
    /// Largest entry change when the quadrature order was doubled.
    pub quadrature_change: f64,
}

pub fn gram_matrix(phi: &GeneratorVector, window: CoeffWindow, order: usize) -> Result<GramMatrix> {
    if window.dim != phi.dim() {
        return Err(Error::DimensionMismatch(
            "window and generator dimensions differ".into(),
        ));
    }
    let order = order.max(1);
    let max_offset = 2 * window.half_width;
    let base = gram_symbol(phi, max_offset, order)?;
    let check = gram_symbol(phi, max_offset, 2 * order)?;
    let scale = check.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let change = base
        .values
        .iter()
        .zip(&check.values)
        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    if change > GRAM_REL_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::QuadratureFailure {
            change,
            tolerance: GRAM_REL_TOL * scale,
        });
    }
    let n = window.len();
    let r = phi.r();
    let points: Vec<Vec<i64>> = window.points().collect();
    let mut g = DMatrix::<f64>::zeros(r * n, r * n);
    for i in 0..r {
        for j in 0..r {
            for (a, k) in points.iter().enumerate() {
                for (b, l) in points.iter().enumerate() {
                    let m: Vec<i64> = l.iter().zip(k).map(|(x, y)| x - y).collect();
                    g[(i * n + a, j * n + b)] = check.get(i, j, &m);
                }
            }
        }
    }
    let sym = (&g + g.transpose()) * 0.5;
    Ok(GramMatrix {
        window,
        r,
        matrix: sym,
        quadrature_change: change,
    })
}

/// Coefficient margin for a generator vector: support length rounded up
/// (zero for non-compact generators, whose Gram has no boundary effect).
pub fn generator_margin(phi: &GeneratorVector) -> i64 {
    phi.support().map_or(0, |s| s.length().ceil() as i64)
}

/// Indices of `window` (all components) within the interior.
pub fn interior_indices(window: CoeffWindow, r: usize, margin: i64) -> Vec<usize> {
    let inner = window.interior(margin);
    let n = window.len();
    (0..r)
        .flat_map(|i| inner.iter().map(move |&k| i * n + k))
        .collect()
}

fn principal(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RieszMethod {
    GramEigen,
    HeuristicSearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RieszBounds {
    pub p: PNorm,
    pub lower: f64,
    pub upper: f64,
    pub method: RieszMethod,
}

/// Extreme eigenvalues of the interior Gram matrix.
pub fn gram_extremes(phi: &GeneratorVector, window: CoeffWindow) -> Result<(f64, f64)> {
    let g = gram_matrix(phi, window, GRAM_ORDER)?;
    let margin = generator_margin(phi).min(window.half_width);
    let idx = interior_indices(window, phi.r(), margin);
    let sub = principal(&g.matrix, &idx);
    let eig = SymmetricEigen::new(sub);
    let lmin = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let lmax = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !(lmax > 0.0) || lmin < 1e-12 * lmax {
        return Err(Error::DegenerateGram {
            lambda_min: lmin,
            lambda_max: lmax,
        });
    }
    Ok((lmin, lmax))
}

const SEARCH_HALF_WIDTH: i64 = 8;
const SEARCH_CANDIDATES: usize = 48;

/// Riesz bounds `m_p ‖C‖ <= ‖Σ C_k Φ_k‖_{L^p} <= M_p ‖C‖`.
///
/// For `p = 2` these are the square roots of the extreme interior Gram
/// eigenvalues. For `p ∈ {1, ∞}` the upper bound is `‖Φ‖_{(W¹)}` and the
/// lower bound is the smallest ratio found over canonical, alternating and
/// seeded random coefficient vectors, so it over-estimates the true `m_p`.
pub fn riesz_bounds(phi: &GeneratorVector, window: CoeffWindow, p: PNorm) -> Result<RieszBounds> {
    match p {
        PNorm::Two => {
            let (lmin, lmax) = gram_extremes(phi, window)?;
            Ok(RieszBounds {
                p,
                lower: lmin.sqrt(),
                upper: lmax.sqrt(),
                method: RieszMethod::GramEigen,
            })
        }
        PNorm::One | PNorm::Inf => {
            // nondegeneracy is still certified through the Gram matrix
            gram_extremes(phi, window)?;
            let upper = amalgam::w_norm_vector(phi, PNorm::One, &EsssupSpec::default())?.value;
            let lower = heuristic_lower(phi, window, p)?;
            Ok(RieszBounds {
                p,
                lower: lower.min(upper),
                upper,
                method: RieszMethod::HeuristicSearch,
            })
        }
    }
}

fn heuristic_lower(phi: &GeneratorVector, window: CoeffWindow, p: PNorm) -> Result<f64> {
    let w = CoeffWindow::new(window.dim, window.half_width.min(SEARCH_HALF_WIDTH))?;
    let r = phi.r();
    let n = w.len();
    let one = Complex64::new(1.0, 0.0);
    let mut candidates: Vec<Vec<Complex64>> = Vec::new();
    for i in 0..r {
        let mut c = vec![Complex64::new(0.0, 0.0); r * n];
        c[i * n + w.index_of(&vec![0; w.dim]).expect("origin")] = one;
        candidates.push(c);
        for len in [2i64, 3, 5, w.half_width + 1] {
            let mut c = vec![Complex64::new(0.0, 0.0); r * n];
            for (idx, k) in w.points().enumerate() {
                if k.iter().all(|v| v.abs() < len) {
                    let sign = if k.iter().sum::<i64>() % 2 == 0 {
                        1.0
                    } else {
                        -1.0
                    };
                    c[i * n + idx] = one * sign;
                }
            }
            candidates.push(c);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..SEARCH_CANDIDATES {
        let mut c = vec![Complex64::new(0.0, 0.0); r * n];
        let nnz = rng.random_range(1..=4.min(r * n));
        for _ in 0..nnz {
            let slot = rng.random_range(0..r * n);
            c[slot] = Complex64::new(rng.random_range(-1.0..1.0), 0.0);
        }
        candidates.push(c);
    }
    let mut best = f64::INFINITY;
    for flat in candidates {
        let c = CoeffVector::from_flat(w, r, &flat)?;
        let cn = coeff_norm(&c, p);
        if cn == 0.0 {
            continue;
        }
        let f = Synthesized::new(&c, phi)?;
        let fn_ = lp_norm(&f, p, GRAM_ORDER, DEFAULT_TAIL_RADIUS)?;
        best = best.min(fn_ / cn);
    }
    Ok(best)
}

/// Coefficients of the dual generator: `A = G⁻¹` on the window, so that
/// `Φ̃_k = Σ_l A_{lk} Φ_l`.
#[derive(Debug, Clone)]
pub struct DualGenerator {
    pub window: CoeffWindow,
    pub r: usize,
    pub coefficients: DMatrix<f64>,
    /// Flat indices of the interior columns.
    pub interior: Vec<usize>,
    /// Max `|(G A - I)_{kl}|` over interior columns.
    pub biorthogonality_residual: f64,
}

impl DualGenerator {
    /// `A_{0,0}` for component `i`.
    pub fn center_coefficient(&self, i: usize) -> f64 {
        let o = self
            .window
            .index_of(&vec![0; self.window.dim])
            .expect("origin");
        let n = self.window.len();
        self.coefficients[(i * n + o, i * n + o)]
    }

    /// `(offset, |A_{k,0}|)` along the first axis for component `i`.
    pub fn decay_profile(&self, i: usize) -> Vec<(f64, f64)> {
        let n = self.window.len();
        let o = self
            .window
            .index_of(&vec![0; self.window.dim])
            .expect("origin");
        (0..=self.window.half_width)
            .filter_map(|m| {
                let mut k = vec![0; self.window.dim];
                k[0] = m;
                self.window
                    .index_of(&k)
                    .map(|idx| (m as f64, self.coefficients[(i * n + idx, i * n + o)].abs()))
            })
            .collect()
    }
}

pub fn dual_generator(phi: &GeneratorVector, window: CoeffWindow) -> Result<DualGenerator> {
    gram_extremes(phi, window)?;
    let g = gram_matrix(phi, window, GRAM_ORDER)?;
    let chol = g.matrix.clone().cholesky().ok_or(Error::DegenerateGram {
        lambda_min: 0.0,
        lambda_max: g.matrix.norm(),
    })?;
    let a = chol.inverse();
    let margin = generator_margin(phi).min(window.half_width);
    let interior = interior_indices(window, phi.r(), margin);
    let prod = &g.matrix * &a;
    let mut residual = 0.0f64;
    for &col in &interior {
        for row in 0..prod.nrows() {
            let target = if row == col { 1.0 } else { 0.0 };
            residual = residual.max((prod[(row, col)] - target).abs());
        }
    }
    Ok(DualGenerator {
        window,
        r: phi.r(),
        coefficients: a,
        interior,
        biorthogonality_residual: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amalgam::GeneratorComponent;
    use proptest::prelude::*;

    fn hat() -> GeneratorVector {
        GeneratorVector::single(GeneratorComponent::bspline(1))
    }

    fn w(k: i64) -> CoeffWindow {
        CoeffWindow::new(1, k).unwrap()
    }

    fn real(w: CoeffWindow, vals: &[(i64, f64)]) -> CoeffVector {
        let mut c = CoeffVector::zeros(w, 1);
        for &(k, v) in vals {
            c.component_mut(0)[w.index_of(&[k]).unwrap()] = Complex64::new(v, 0.0);
        }
        c
    }

    #[test]
    fn window_indexing_roundtrips() {
        let w2 = CoeffWindow::new(2, 3).unwrap();
        for i in 0..w2.len() {
            assert_eq!(w2.index_of(&w2.point(i)), Some(i));
        }
        assert_eq!(w2.len(), 49);
        assert_eq!(w(4).interior(1).len(), 7);
    }

    #[test]
    fn synthesize_examples() {
        let c = real(w(3), &[(0, 1.0)]);
        assert_eq!(synthesize(&c, &hat(), &[1.0]).unwrap().re, 1.0);
        let c = real(w(3), &[(0, 1.0), (1, 1.0)]);
        assert_eq!(synthesize(&c, &hat(), &[1.0]).unwrap().re, 1.0);
        let z = CoeffVector::zeros(w(3), 1);
        assert_eq!(synthesize(&z, &hat(), &[0.3]).unwrap().norm(), 0.0);
    }

    #[test]
    fn coeff_norm_examples() {
        let win = w(2);
        let mut c = CoeffVector::zeros(win, 2);
        c.component_mut(0)[2] = Complex64::new(1.0, 0.0);
        c.component_mut(1)[2] = Complex64::new(1.0, 0.0);
        assert_eq!(coeff_norm(&c, PNorm::Two), 2.0);
        let c = real(win, &[(0, 3.0), (1, 4.0)]);
        assert_eq!(coeff_norm(&c, PNorm::Two), 5.0);
        let c = real(win, &[(0, 1.0), (1, -2.0)]);
        assert_eq!(coeff_norm(&c, PNorm::Inf), 2.0);
    }

    #[test]
    fn hat_gram_entries() {
        let g = gram_matrix(&hat(), w(4), 8).unwrap();
        let m = &g.matrix;
        for a in 0..9 {
            assert!((m[(a, a)] - 2.0 / 3.0).abs() < 1e-14);
            if a + 1 < 9 {
                assert!((m[(a, a + 1)] - 1.0 / 6.0).abs() < 1e-14);
            }
            if a + 2 < 9 {
                assert_eq!(m[(a, a + 2)], 0.0);
            }
        }
        assert_eq!(m, &m.transpose());
    }

    #[test]
    fn indicator_gram_is_identity() {
        let ind = GeneratorVector::single(GeneratorComponent::bspline(0));
        let g = gram_matrix(&ind, w(3), 8).unwrap();
        assert!((g.matrix - DMatrix::identity(7, 7)).abs().max() < 1e-14);
        let rb = riesz_bounds(&ind, w(8), PNorm::Two).unwrap();
        assert!((rb.lower - 1.0).abs() < 1e-12 && (rb.upper - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hat_riesz_bounds_converge() {
        let rb = riesz_bounds(&hat(), w(32), PNorm::Two).unwrap();
        assert!((rb.lower - 1.0 / 3f64.sqrt()).abs() < 2e-3, "{rb:?}");
        assert!((rb.upper - 1.0).abs() < 2e-3);
        assert_eq!(rb.method, RieszMethod::GramEigen);
        let doubled = riesz_bounds(&hat().scaled(2.0), w(32), PNorm::Two).unwrap();
        assert!((doubled.lower - 2.0 * rb.lower).abs() < 1e-12);
        assert!((doubled.upper - 2.0 * rb.upper).abs() < 1e-12);
    }

    #[test]
    fn heuristic_bounds_are_ordered() {
        for p in [PNorm::One, PNorm::Inf] {
            let rb = riesz_bounds(&hat(), w(16), p).unwrap();
            assert_eq!(rb.method, RieszMethod::HeuristicSearch);
            assert!(rb.lower > 0.0 && rb.lower <= rb.upper);
            assert!((rb.upper - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_generator_is_degenerate() {
        let z = GeneratorVector::single(
            GeneratorComponent::tabulated(0.5, vec![0.0, 0.0, 0.0], 0.0).unwrap(),
        );
        assert!(matches!(
            riesz_bounds(&z, w(4), PNorm::Two),
            Err(Error::DegenerateGram { .. })
        ));
    }

    #[test]
    fn hat_dual_generator() {
        let d = dual_generator(&hat(), w(64)).unwrap();
        assert!((d.center_coefficient(0) - 3f64.sqrt()).abs() < 1e-6);
        assert!(d.biorthogonality_residual < 1e-8);
        let ind = GeneratorVector::single(GeneratorComponent::bspline(0));
        let d = dual_generator(&ind, w(4)).unwrap();
        assert!((d.coefficients - DMatrix::identity(9, 9)).abs().max() < 1e-12);
    }

    #[test]
    fn lp_norms_of_hat() {
        let c = real(w(2), &[(0, 1.0)]);
        let phi = hat();
        let f = Synthesized::new(&c, &phi).unwrap();
        assert!((lp_norm(&f, PNorm::One, 8, 0.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((lp_norm(&f, PNorm::Two, 8, 0.0).unwrap() - (2.0f64 / 3.0).sqrt()).abs() < 1e-14);
        assert!((lp_norm(&f, PNorm::Inf, 8, 0.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_dimensional_gram() {
        let phi = GeneratorVector::single(GeneratorComponent::bspline_nd(1, 2).unwrap());
        let g = gram_matrix(&phi, CoeffWindow::new(2, 2).unwrap(), 8).unwrap();
        assert!((g.matrix[(12, 12)] - 4.0 / 9.0).abs() < 1e-14);
        assert!((g.matrix[(12, 13)] - 1.0 / 9.0).abs() < 1e-14);
        assert!((g.matrix[(12, 18)] - 1.0 / 36.0).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn riesz_sandwich_and_w_norm_bound(vals in prop::collection::vec(-1.0f64..1.0, 9)) {
            let win = w(12);
            let entries: Vec<(i64, f64)> = vals.iter().enumerate().map(|(i, v)| (i as i64 - 4, *v)).collect();
            let c = real(win, &entries);
            let cn = coeff_norm(&c, PNorm::Two);
            prop_assume!(cn > 1e-6);
            let rb = riesz_bounds(&hat(), win, PNorm::Two).unwrap();
            let phi = hat();
            let f = Synthesized::new(&c, &phi).unwrap();
            let l2 = lp_norm(&f, PNorm::Two, 8, 0.0).unwrap();
            prop_assert!(rb.lower * cn <= l2 + 1e-9);
            prop_assert!(l2 <= rb.upper * cn + 1e-9);
            for p in PNorm::ALL {
                let wn = amalgam::w_norm_field(&f, p, &EsssupSpec::default()).unwrap().value;
                prop_assert!(wn <= coeff_norm(&c, p) * 2.0 + 1e-9);
            }
        }
    }
}
