//! Finite complex Borel measures with an atomic part and a piecewise-constant
//! density, and their convolutions with generators.

use crate::amalgam::{
    self, Complex64, EsssupSpec, Field, GeneratorComponent, GeneratorVector, Interval, Tail,
};
use crate::error::{Error, Result};
use crate::norm::PNorm;
use crate::quadrature::{split_points, Rule};

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub location: Vec<f64>,
    pub weight: Complex64,
}

/// Piecewise-constant density: `values[i]` on `[origin + i h, origin + (i+1) h)`.
/// One-dimensional only.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub h: f64,
    pub origin: f64,
    pub values: Vec<Complex64>,
}

impl Density {
    fn cell(&self, i: usize) -> (f64, f64) {
        let a = self.origin + self.h * i as f64;
        (a, a + self.h)
    }

    fn extent(&self) -> Interval {
        Interval::new(self.origin, self.origin + self.h * self.values.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureComponent {
    dim: usize,
    atoms: Vec<Atom>,
    density: Option<Density>,
}

impl MeasureComponent {
    pub fn new(dim: usize, atoms: Vec<Atom>, density: Option<Density>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidMeasure(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        for a in &atoms {
            if a.location.len() != dim {
                return Err(Error::InvalidMeasure(format!(
                    "atom at {:?} does not have dimension {dim}",
                    a.location
                )));
            }
            if a.location.iter().any(|v| !v.is_finite())
                || !a.weight.re.is_finite()
                || !a.weight.im.is_finite()
            {
                return Err(Error::InvalidMeasure(
                    "atom location and weight must be finite".into(),
                ));
            }
        }
        if let Some(d) = &density {
            if dim != 1 {
                return Err(Error::InvalidMeasure(
                    "densities are supported in dimension 1 only".into(),
                ));
            }
            if !(d.h > 0.0 && d.h.is_finite()) || !d.origin.is_finite() {
                return Err(Error::InvalidMeasure(format!(
                    "density step must be positive, got {}",
                    d.h
                )));
            }
            if d.values
                .iter()
                .any(|v| !v.re.is_finite() || !v.im.is_finite())
            {
                return Err(Error::InvalidMeasure(
                    "density values must be finite".into(),
                ));
            }
        }
        Ok(MeasureComponent {
            dim,
            atoms,
            density,
        })
    }

    /// Unit point mass at `location`.
    pub fn dirac(location: &[f64]) -> Self {
        Self::atomic(location.len(), &[(location.to_vec(), 1.0)]).expect("finite dirac")
    }

    /// Real-weighted atoms.
    pub fn atomic(dim: usize, atoms: &[(Vec<f64>, f64)]) -> Result<Self> {
        Self::new(
            dim,
            atoms
                .iter()
                .map(|(y, w)| Atom {
                    location: y.clone(),
                    weight: Complex64::new(*w, 0.0),
                })
                .collect(),
            None,
        )
    }

    pub fn zero(dim: usize) -> Self {
        MeasureComponent {
            dim,
            atoms: Vec::new(),
            density: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn density(&self) -> Option<&Density> {
        self.density.as_ref()
    }

    /// `‖m‖`: sum of atom weights in modulus plus the exact integral of the
    /// density modulus.
    pub fn total_variation(&self) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|a| a.weight.norm()).sum();
        let dens = self.density.as_ref().map_or(0.0, |d| {
            d.h * d.values.iter().map(|v| v.norm()).sum::<f64>()
        });
        atoms + dens
    }

    /// `∫ (1 + |y|)^s d|m|(y)`.
    pub fn moment(&self, s: f64) -> f64 {
        if s == 0.0 {
            return self.total_variation();
        }
        let atoms: f64 = self
            .atoms
            .iter()
            .map(|a| a.weight.norm() * (1.0 + amalgam::euclid(&a.location)).powf(s))
            .sum();
        let dens = self.density.as_ref().map_or(0.0, |d| {
            (0..d.values.len())
                .map(|i| {
                    let (a, b) = d.cell(i);
                    d.values[i].norm() * weighted_length(a, b, s)
                })
                .sum()
        });
        atoms + dens
    }

    /// Per-axis support hull, `None` for the zero measure.
    pub fn support(&self) -> Option<Interval> {
        let mut hull: Option<Interval> = None;
        for a in &self.atoms {
            for &c in &a.location {
                let iv = Interval::new(c, c);
                hull = Some(hull.map_or(iv, |h| h.hull(iv)));
            }
        }
        if let Some(d) = &self.density {
            let iv = d.extent();
            hull = Some(hull.map_or(iv, |h| h.hull(iv)));
        }
        hull
    }

    /// Replaces the atomic measure `m` by `(1 - w) m + w B`, where `B` spreads
    /// each atom uniformly over a box of the given width, discretized on
    /// `cells` density cells per box. The weight `w` is chosen so that the
    /// total variation of the difference equals `distance`. Returns the blurred
    /// measure and the achieved distance.
    pub fn blurred(
        &self,
        distance: f64,
        width: f64,
        cells: usize,
    ) -> Result<(MeasureComponent, f64)> {
        if self.density.is_some() || self.dim != 1 {
            return Err(Error::InvalidMeasure(
                "blurring is defined for one-dimensional atomic measures".into(),
            ));
        }
        if !(width > 0.0) || cells == 0 || !(distance >= 0.0) {
            return Err(Error::InvalidMeasure(
                "blur needs positive width, cells and nonnegative distance".into(),
            ));
        }
        let Some(support) = self.support() else {
            return Ok((self.clone(), 0.0));
        };
        let h = width / cells as f64;
        let origin = support.lo - width / 2.0;
        let n = (((support.hi + width / 2.0) - origin) / h).ceil() as usize;
        let mut values = vec![Complex64::new(0.0, 0.0); n.max(1)];
        for atom in &self.atoms {
            let (lo, hi) = (
                atom.location[0] - width / 2.0,
                atom.location[0] + width / 2.0,
            );
            for (i, v) in values.iter_mut().enumerate() {
                let (a, b) = (origin + h * i as f64, origin + h * (i + 1) as f64);
                let overlap = (b.min(hi) - a.max(lo)).max(0.0);
                if overlap > 0.0 {
                    *v += atom.weight * (overlap / width / h);
                }
            }
        }
        let spread = Density { h, origin, values };
        let spread_tv = h * spread.values.iter().map(|v| v.norm()).sum::<f64>();
        let atom_tv: f64 = self.atoms.iter().map(|a| a.weight.norm()).sum();
        // atoms and density are mutually singular, so the difference splits
        let unit = atom_tv + spread_tv;
        if unit == 0.0 {
            return Ok((self.clone(), 0.0));
        }
        let w = distance / unit;
        if w > 1.0 {
            return Err(Error::InvalidMeasure(format!(
                "blur distance {distance} exceeds the attainable {unit}"
            )));
        }
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                location: a.location.clone(),
                weight: a.weight * (1.0 - w),
            })
            .collect();
        let density = Density {
            h,
            origin,
            values: spread.values.iter().map(|v| v * w).collect(),
        };
        Ok((MeasureComponent::new(1, atoms, Some(density))?, w * unit))
    }
}

/// `∫_a^b (1 + |y|)^s dy`.
fn weighted_length(a: f64, b: f64, s: f64) -> f64 {
    let prim = |y: f64| {
        let v = ((1.0 + y.abs()).powf(s + 1.0) - 1.0) / (s + 1.0);
        if y < 0.0 {
            -v
        } else {
            v
        }
    };
    prim(b) - prim(a)
}

/// The vector `μ⃗ = (μ¹, …, μᵗ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VecMeasure {
    components: Vec<MeasureComponent>,
}

impl VecMeasure {
    pub fn new(components: Vec<MeasureComponent>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::InvalidMeasure(
                "measure vector needs at least one component".into(),
            ));
        };
        if components.iter().any(|c| c.dim != first.dim) {
            return Err(Error::InvalidMeasure(
                "measure components must share dimension".into(),
            ));
        }
        Ok(VecMeasure { components })
    }

    pub fn single(m: MeasureComponent) -> Self {
        VecMeasure {
            components: vec![m],
        }
    }

    pub fn components(&self) -> &[MeasureComponent] {
        &self.components
    }

    pub fn t(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim
    }

    /// `‖μ⃗‖ = Σ_l ‖μˡ‖`.
    pub fn total_variation(&self) -> f64 {
        self.components
            .iter()
            .map(MeasureComponent::total_variation)
            .sum()
    }

    pub fn moment(&self, s: f64) -> f64 {
        self.components.iter().map(|c| c.moment(s)).sum()
    }

    pub fn support(&self) -> Option<Interval> {
        self.components
            .iter()
            .filter_map(MeasureComponent::support)
            .reduce(Interval::hull)
    }
}

const CONVOLUTION_ORDER: usize = 6;

/// `x ↦ (g ∗ m)(x) = ∫ g(x − y) dm(y)`, evaluated lazily.
pub struct Convolved<'a, F: ?Sized = GeneratorComponent> {
    g: &'a F,
    m: &'a MeasureComponent,
    rule: Rule,
    g_breaks: Vec<f64>,
    g_support: Option<Interval>,
}

impl<'a, F: Field + ?Sized> Convolved<'a, F> {
    pub fn new(g: &'a F, m: &'a MeasureComponent) -> Result<Self> {
        if g.dim() != m.dim {
            return Err(Error::DimensionMismatch(format!(
                "function has dimension {}, measure {}",
                g.dim(),
                m.dim
            )));
        }
        Ok(Convolved {
            g,
            m,
            rule: Rule::new(CONVOLUTION_ORDER),
            g_breaks: g.breakpoints(),
            g_support: g.support(),
        })
    }

    fn density_part(&self, d: &Density, x: f64) -> Complex64 {
        let gsup = self.g_support;
        let mut total = Complex64::new(0.0, 0.0);
        for (i, v) in d.values.iter().enumerate() {
            if *v == Complex64::new(0.0, 0.0) {
                continue;
            }
            let (a, b) = d.cell(i);
            // ∫_a^b g(x - y) dy = ∫_{x-b}^{x-a} g(u) du
            let (mut lo, mut hi) = (x - b, x - a);
            if let Some(s) = gsup {
                lo = lo.max(s.lo);
                hi = hi.min(s.hi);
            }
            if hi <= lo {
                continue;
            }
            let pts = split_points(lo, hi, &self.g_breaks);
            let integral: Complex64 = pts
                .windows(2)
                .flat_map(|w| self.rule.on(w[0], w[1]))
                .map(|(u, wt)| self.g.value(&[u]) * wt)
                .sum();
            total += v * integral;
        }
        total
    }
}

impl<F: Field + ?Sized> Field for Convolved<'_, F> {
    fn dim(&self) -> usize {
        self.g.dim()
    }

    fn value(&self, x: &[f64]) -> Complex64 {
        let mut y = vec![0.0; x.len()];
        let mut total = Complex64::new(0.0, 0.0);
        for atom in &self.m.atoms {
            for (yi, (xi, ai)) in y.iter_mut().zip(x.iter().zip(&atom.location)) {
                *yi = xi - ai;
            }
            total += atom.weight * self.g.value(&y);
        }
        if let Some(d) = &self.m.density {
            total += self.density_part(d, x[0]);
        }
        total
    }

    fn support(&self) -> Option<Interval> {
        let gs = self.g_support?;
        match self.m.support() {
            Some(ms) => Some(gs.plus(ms)),
            None => Some(Interval::new(0.0, 0.0)),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut shifts: Vec<f64> = self
            .m
            .atoms
            .iter()
            .flat_map(|a| a.location.iter().copied())
            .collect();
        if let Some(d) = &self.m.density {
            shifts.extend((0..=d.values.len()).map(|i| d.origin + d.h * i as f64));
        }
        let mut out: Vec<f64> = shifts
            .iter()
            .flat_map(|s| self.g_breaks.iter().map(move |b| b + s))
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn tail(&self) -> Option<Tail> {
        // Peetre: (1 + |x - y|)^-s <= (1 + |y|)^s (1 + |x|)^-s
        self.g.tail().map(|t| Tail {
            scale: t.scale * self.m.moment(t.s),
            s: t.s,
        })
    }
}

/// `(g ∗ m)(x)`.
pub fn convolve(g: &GeneratorComponent, m: &MeasureComponent, x: &[f64]) -> Result<Complex64> {
    Ok(Convolved::new(g, m)?.value(x))
}

/// The `r × t` matrix of functions `Φ ∗ μ⃗`, entry `(i, l)` being `φⁱ ∗ μˡ`.
pub struct ConvolutionMatrix<'a> {
    entries: Vec<Vec<Convolved<'a>>>,
}

impl<'a> ConvolutionMatrix<'a> {
    pub fn new(phi: &'a GeneratorVector, mu: &'a VecMeasure) -> Result<Self> {
        let entries = phi
            .components()
            .iter()
            .map(|g| {
                mu.components()
                    .iter()
                    .map(|m| Convolved::new(g, m))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ConvolutionMatrix { entries })
    }

    pub fn r(&self) -> usize {
        self.entries.len()
    }

    pub fn t(&self) -> usize {
        self.entries[0].len()
    }

    pub fn entry(&self, i: usize, l: usize) -> &Convolved<'a> {
        &self.entries[i][l]
    }

    /// All entries at `x`, row-major in `(i, l)`.
    pub fn eval(&self, x: &[f64]) -> Vec<Vec<Complex64>> {
        self.entries
            .iter()
            .map(|row| row.iter().map(|e| e.value(x)).collect())
            .collect()
    }

    /// Per-axis hull of every entry's support, `None` if some entry is not
    /// compactly supported.
    pub fn support(&self) -> Option<Interval> {
        self.entries
            .iter()
            .flatten()
            .map(Field::support)
            .try_fold(None::<Interval>, |acc, s| {
                s.map(|s| Some(acc.map_or(s, |a| a.hull(s))))
            })
            .flatten()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoungCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Compares `‖g ∗ m‖_{W¹}` with `2^d ‖g‖_{W¹} ‖m‖`.
pub fn check_young_bound(
    g: &GeneratorComponent,
    m: &MeasureComponent,
    spec: &EsssupSpec,
) -> Result<YoungCheck> {
    let conv = Convolved::new(g, m)?;
    let lhs = amalgam::w_norm_field(&conv, PNorm::One, spec)?;
    let gn = amalgam::w_norm(g, PNorm::One, spec)?;
    let rhs = 2f64.powi(g.dim as i32) * gn.value * m.total_variation();
    Ok(YoungCheck {
        lhs: lhs.value,
        rhs,
        pass: lhs.value <= rhs * (1.0 + spec.rel_tol) + lhs.error,
    })
}
