//! Decay fits for generators, cross-Gram matrices and inverses, and the
//! multi-`p` stability check for localized models.

use serde::Serialize;

use crate::amalgam::{verify_decay, Complex64, Field, GeneratorVector};
use crate::error::Result;
use crate::linalg::CMatrix;
use crate::measure::{Convolved, VecMeasure};
use crate::norm::PNorm;
use crate::reconstruction::FrameSystem;
use crate::sampling_op::{
    stability_check, SamplingModel, SamplingOperator, StabilityReport, StabilityVerdict,
};
use crate::shift_space::{
    dual_generator, riesz_bounds, CoeffVector, CoeffWindow, RieszBounds, Synthesized,
};

/// Result of checking `|f(x)| <= C (1 + |x|)^(-s)` on sampled offsets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub s: f64,
    /// Smallest constant consistent with every sample.
    pub c_hat: f64,
    /// Largest `|f| (1 + |x|)^s` among the inner half of the far samples.
    pub inner_ratio: f64,
    /// Largest `|f| (1 + |x|)^s` among the outer half of the far samples.
    pub tail_ratio: f64,
    /// Least-squares log-log slope (negated) over nonzero far samples.
    pub fitted_exponent: Option<f64>,
    pub pass: bool,
}

/// Ratios are compared only at offsets at least this far out.
const FAR: f64 = 2.0;
const GROWTH_SLACK: f64 = 1.05;

impl DecayFit {
    /// Fits `(offset, magnitude)` samples. The fit passes when the weighted
    /// ratio does not grow from the inner to the outer half of the far
    /// samples, i.e. the envelope constant is not being driven by the tail.
    pub fn fit(mut samples: Vec<(f64, f64)>, s: f64) -> DecayFit {
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let ratio = |(r, v): (f64, f64)| v * (1.0 + r).powf(s);
        let c_hat = samples.iter().copied().map(ratio).fold(0.0, f64::max);
        let far: Vec<(f64, f64)> = if samples.iter().filter(|x| x.0 >= FAR).count() >= 4 {
            samples.iter().copied().filter(|x| x.0 >= FAR).collect()
        } else {
            samples.clone()
        };
        let half = far.len() / 2;
        let inner_ratio = far[..half].iter().copied().map(ratio).fold(0.0, f64::max);
        let tail_ratio = far[half..].iter().copied().map(ratio).fold(0.0, f64::max);
        let pass =
            c_hat.is_finite() && tail_ratio <= GROWTH_SLACK * inner_ratio + f64::MIN_POSITIVE;
        DecayFit {
            s,
            c_hat,
            inner_ratio,
            tail_ratio,
            fitted_exponent: fitted_exponent(&far, 0.0, f64::INFINITY),
            pass,
        }
    }
}

/// Negated least-squares slope of `log v` against `log(1 + r)` over the
/// nonzero samples with `lo <= r <= hi`.
pub fn fitted_exponent(samples: &[(f64, f64)], lo: f64, hi: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(r, v)| *r >= lo && *r <= hi && *v > 0.0)
        .map(|(r, v)| ((1.0 + r).ln(), v.ln()))
        .collect();
    slope(&pts).map(|b| -b)
}

/// Geometric decay rate `q` in `v ≈ C q^n`, from a log-linear least-squares
/// fit over the nonzero samples `(n, v)`.
pub fn fitted_rate(samples: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|(n, v)| (*n, v.ln()))
        .collect();
    slope(&pts).map(f64::exp)
}

fn slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

/// Localization checks for a model `(Φ, μ⃗)` at exponent `s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizationReport {
    pub s: f64,
    /// Pointwise decay of each generator component.
    pub generator_fits: Vec<DecayFit>,
    pub riesz: RieszBounds,
    pub cross_gram: Option<DecayFit>,
    pub dual_cross_gram: Option<DecayFit>,
    /// `Σ_l ∫ (1 + |x|)^s d|μˡ|`.
    pub moment: Option<f64>,
    pub pass: bool,
}

impl LocalizationReport {
    fn refresh(&mut self) {
        self.pass = self.generator_fits.iter().all(|f| f.pass)
            && self.cross_gram.as_ref().is_none_or(|f| f.pass)
            && self.dual_cross_gram.as_ref().is_none_or(|f| f.pass)
            && self.moment.is_none_or(f64::is_finite);
    }
}

/// Generator part of the localization check: nondegenerate `ℓ²` Riesz
/// bounds on the window and `|φⁱ(x)| ≤ C (1 + |x|)^{-s}` for every component.
pub fn check_ws(phi: &GeneratorVector, s: f64, half_width: i64) -> Result<LocalizationReport> {
    let window = CoeffWindow::new(phi.dim(), half_width)?;
    let riesz = riesz_bounds(phi, window, PNorm::Two)?;
    let generator_fits = phi
        .components()
        .iter()
        .map(|g| verify_decay(g, s))
        .collect();
    let mut report = LocalizationReport {
        s,
        generator_fits,
        riesz,
        cross_gram: None,
        dual_cross_gram: None,
        moment: None,
        pass: false,
    };
    report.refresh();
    Ok(report)
}

/// Fits `Σ_{i,l} |U^{i,l}_{j,k}|` against `|x_j + δ_j − k|`.
pub fn cross_gram_decay(u: &SamplingOperator, s: f64) -> DecayFit {
    let n = u.window().coeffs.len();
    let j_len = u.samples();
    let mut sums: std::collections::BTreeMap<(usize, usize), f64> =
        std::collections::BTreeMap::new();
    for (row, col, v) in u.triplets() {
        *sums.entry((row % j_len, col % n)).or_insert(0.0) += v.norm();
    }
    let samples = sums
        .into_iter()
        .map(|((j, k), v)| (offset(&u.positions()[j], &u.window().coeffs.point(k)), v))
        .collect();
    DecayFit::fit(samples, s)
}

fn offset(y: &[f64], k: &[i64]) -> f64 {
    y.iter()
        .zip(k)
        .map(|(a, b)| (a - *b as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Fits the dual cross-Gram entries `Σ_{i,l} |(φ̃ⁱ ∗ μˡ)(x_j + δ_j − k)|`,
/// with `φ̃` synthesized from the dual coefficients on the operator window.
/// Only offsets up to half the window are used, where the truncated dual is
/// accurate.
pub fn dual_cross_gram_decay(
    phi: &GeneratorVector,
    mu: &VecMeasure,
    u: &SamplingOperator,
    s: f64,
) -> Result<DecayFit> {
    let window = u.window().coeffs;
    let dual = dual_generator(phi, window)?;
    let n = window.len();
    let origin = window.index_of(&vec![0; window.dim]).expect("origin");
    let columns: Vec<CoeffVector> = (0..phi.r())
        .map(|i| {
            let flat: Vec<Complex64> = (0..phi.r() * n)
                .map(|row| Complex64::new(dual.coefficients[(row, i * n + origin)], 0.0))
                .collect();
            CoeffVector::from_flat(window, phi.r(), &flat)
        })
        .collect::<Result<_>>()?;
    let duals: Vec<Synthesized> = columns
        .iter()
        .map(|c| Synthesized::new(c, phi))
        .collect::<Result<_>>()?;
    let convolved: Vec<Convolved<Synthesized>> = duals
        .iter()
        .flat_map(|d| mu.components().iter().map(move |m| Convolved::new(d, m)))
        .collect::<Result<_>>()?;
    let reach = window.half_width as f64 / 2.0;
    let interior = u.window().interior_points();
    let mut samples = Vec::new();
    for y in u.positions() {
        for &k in &interior {
            let kp = window.point(k);
            let r = offset(y, &kp);
            if r > reach {
                continue;
            }
            let arg: Vec<f64> = y.iter().zip(&kp).map(|(a, b)| a - *b as f64).collect();
            samples.push((r, convolved.iter().map(|c| c.value(&arg).norm()).sum()));
        }
    }
    Ok(DecayFit::fit(samples, s))
}

/// Full localization report for a model on a window of half-width `half_width`.
pub fn localize(
    model: &SamplingModel,
    s: f64,
    half_width: i64,
    tail_radius: f64,
) -> Result<LocalizationReport> {
    let mut report = check_ws(&model.phi, s, half_width)?;
    let window = model.window(half_width, tail_radius)?;
    let u = model.operator(&window)?;
    report.cross_gram = Some(cross_gram_decay(&u, s));
    report.dual_cross_gram = Some(dual_cross_gram_decay(&model.phi, &model.mu, &u, s)?);
    report.moment = Some(model.mu.moment(s));
    report.refresh();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InverseDecay {
    pub fit: DecayFit,
    /// Geometric rate of the largest entry at each integer offset.
    pub rate: Option<f64>,
}

/// Entry decay of `M⁻¹` against `|k_a − k_b|`, where `points[a]` is the
/// lattice point of index `a`. The geometric rate uses offsets `n ≥ 1` whose
/// largest entry stays above `1e-13` of the overall largest.
pub fn inverse_decay(m: &CMatrix, points: &[Vec<i64>], s: f64) -> Result<InverseDecay> {
    let inv = m
        .clone()
        .try_inverse()
        .ok_or(crate::error::Error::SingularNormalEquations)?;
    let mut samples = Vec::with_capacity(inv.len());
    let mut per_offset: std::collections::BTreeMap<i64, f64> = std::collections::BTreeMap::new();
    let mut top = 0.0f64;
    for a in 0..inv.nrows() {
        for b in 0..inv.ncols() {
            let r2: i64 = points[a]
                .iter()
                .zip(&points[b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            let r = (r2 as f64).sqrt();
            let v = inv[(a, b)].norm();
            samples.push((r, v));
            top = top.max(v);
            let e = per_offset.entry(r.round() as i64).or_insert(0.0);
            *e = e.max(v);
        }
    }
    let rate_samples: Vec<(f64, f64)> = per_offset
        .into_iter()
        .filter(|&(n, v)| n >= 1 && v > 1e-13 * top)
        .map(|(n, v)| (n as f64, v))
        .collect();
    Ok(InverseDecay {
        fit: DecayFit::fit(samples, s),
        rate: fitted_rate(&rate_samples),
    })
}

/// Decay of `(U*U)⁻¹` on the interior columns of a frame system.
pub fn frame_inverse_decay(system: &FrameSystem, s: f64) -> Result<InverseDecay> {
    let window = system.operator().window().coeffs;
    let n = window.len();
    let points: Vec<Vec<i64>> = system
        .interior_columns()
        .iter()
        .map(|&c| window.point(c % n))
        .collect();
    let gram = system.dense().adjoint() * system.dense();
    inverse_decay(&gram, &points, s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiPStability {
    pub reports: Vec<StabilityReport>,
    /// Set when the model is stable for `p = 2` but unstable for `p = 1` or
    /// `p = ∞`, which a localized model must not be.
    pub alert: bool,
}

pub fn multi_p_stability(
    model: &SamplingModel,
    half_width: i64,
    doublings: usize,
    tail_radius: f64,
) -> Result<MultiPStability> {
    let reports: Vec<StabilityReport> = PNorm::ALL
        .iter()
        .map(|&p| stability_check(model, p, half_width, doublings, tail_radius))
        .collect::<Result<_>>()?;
    let verdict = |p: PNorm| reports.iter().find(|r| r.p == p).map(|r| r.verdict);
    let alert = verdict(PNorm::Two) == Some(StabilityVerdict::Stable)
        && [PNorm::One, PNorm::Inf]
            .iter()
            .any(|&p| verdict(p) == Some(StabilityVerdict::Unstable));
    if alert {
        log::warn!("model is 2-stable but not stable for every p");
    }
    Ok(MultiPStability { reports, alert })
}
