//! JSON scenario files describing a model and the pipeline to run on it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::amalgam::{Complex64, GeneratorComponent, GeneratorKind, GeneratorVector};
use crate::error::{Error, Result};
use crate::measure::{Atom, Density, MeasureComponent, VecMeasure};
use crate::norm::PNorm;
use crate::perturbation::PerturbationKind;
use crate::reconstruction::Method;
use crate::sampling_op::{Jitter, PointPattern, SamplingModel, StabilityVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Bounds,
    Perturb,
    Reconstruct,
    Localize,
    Sweep,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Bounds => "bounds",
            Pipeline::Perturb => "perturb",
            Pipeline::Reconstruct => "reconstruct",
            Pipeline::Localize => "localize",
            Pipeline::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub pipeline: Pipeline,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    /// Exponents for the bounds pipeline.
    #[serde(default = "default_norms")]
    pub norms: Vec<PNorm>,
    #[serde(default)]
    pub perturbation: Option<PerturbationSpec>,
    #[serde(default)]
    pub reconstruction: ReconstructionSpec,
    #[serde(default)]
    pub localization: LocalizationSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Expected stability verdict; a matching verdict passes.
    #[serde(default)]
    pub expect: Option<StabilityVerdict>,
}

fn default_norms() -> Vec<PNorm> {
    vec![PNorm::Two]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default = "one")]
    pub dimension: usize,
    pub generators: Vec<GeneratorKind>,
    pub measures: Vec<MeasureSpec>,
    pub sampling: SamplingSpec,
    #[serde(default)]
    pub window: WindowSpec,
}

fn one() -> usize {
    1
}

/// Atoms are rows `[y_1, …, y_d, weight]` or `[y_1, …, y_d, re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    #[serde(default)]
    pub atoms: Vec<Vec<f64>>,
    #[serde(default)]
    pub density: Option<DensitySpec>,
}

/// Real piecewise-constant density on cells `[origin + i h, origin + (i+1) h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub h: f64,
    pub origin: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSpec {
    pub pattern: PointPattern,
    #[serde(default)]
    pub jitter: JitterSpec,
    /// Sample region `[-L, L]^d`; defaults to the window half-width.
    #[serde(default)]
    pub region: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum JitterSpec {
    #[default]
    None,
    Constant {
        shift: Vec<f64>,
    },
    /// Uniform in the ball of radius `gamma`; the seed defaults to the
    /// scenario seed.
    Uniform {
        gamma: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    Explicit {
        displacements: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    #[serde(default = "default_half_width")]
    pub half_width: i64,
    #[serde(default = "default_doublings")]
    pub doublings: usize,
    /// Stencil radius used when `Φ ∗ μ⃗` is not compactly supported.
    #[serde(default = "default_tail_radius")]
    pub tail_radius: f64,
}

fn default_half_width() -> i64 {
    64
}

fn default_doublings() -> usize {
    3
}

fn default_tail_radius() -> f64 {
    4.0
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            half_width: default_half_width(),
            doublings: default_doublings(),
            tail_radius: default_tail_radius(),
        }
    }
}

/// `magnitude` (or each `sweep` entry) is `‖Δ‖∞` for jitter, `‖Φ − Θ‖_{W¹}`
/// for generator and total variation for measure perturbations. For
/// `combined` it is the fraction of each individual budget used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    #[serde(default)]
    pub magnitude: Option<f64>,
    #[serde(default)]
    pub sweep: Option<Vec<f64>>,
    /// Random jitter patterns per magnitude.
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Share of the generator budget granted to the generator in combined
    /// perturbations.
    #[serde(default = "default_share")]
    pub generator_share: f64,
    #[serde(default = "default_blur_width")]
    pub blur_width: f64,
    #[serde(default = "default_blur_cells")]
    pub blur_cells: usize,
    /// Use Riesz bounds measured for the perturbed generator instead of the
    /// worst case `m_p − ε`.
    #[serde(default)]
    pub measured_riesz: bool,
}

fn default_share() -> f64 {
    0.5
}

fn default_blur_width() -> f64 {
    0.2
}

fn default_blur_cells() -> usize {
    8
}

impl PerturbationSpec {
    /// Grid points in file order.
    pub fn magnitudes(&self) -> Vec<f64> {
        match (&self.sweep, self.magnitude) {
            (Some(grid), _) => grid.clone(),
            (None, Some(m)) => vec![m],
            (None, None) => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionSpec {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_solver_tol")]
    pub tolerance: f64,
    #[serde(default = "default_cap")]
    pub max_iterations: usize,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Richardson, Method::Cg, Method::Normal]
}

fn default_trials() -> usize {
    20
}

fn default_solver_tol() -> f64 {
    1e-13
}

fn default_cap() -> usize {
    10_000
}

impl Default for ReconstructionSpec {
    fn default() -> Self {
        ReconstructionSpec {
            methods: default_methods(),
            trials: default_trials(),
            tolerance: default_solver_tol(),
            max_iterations: default_cap(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationSpec {
    #[serde(default = "default_s")]
    pub s: f64,
}

fn default_s() -> f64 {
    2.0
}

impl Default for LocalizationSpec {
    fn default() -> Self {
        LocalizationSpec { s: default_s() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Relative slack for measured-vs-predicted comparisons.
    #[serde(default = "default_relative")]
    pub relative: f64,
    /// Agreement between reconstruction methods.
    #[serde(default = "default_agreement")]
    pub agreement: f64,
    /// Recovery of the true coefficients from exact samples.
    #[serde(default = "default_recovery")]
    pub recovery: f64,
    /// Absolute slack for quadrature-based errors.
    #[serde(default = "default_quadrature")]
    pub quadrature: f64,
    /// Slack on the frame-algorithm contraction factor.
    #[serde(default = "default_contraction")]
    pub contraction: f64,
}

fn default_relative() -> f64 {
    0.02
}

fn default_agreement() -> f64 {
    1e-8
}

fn default_recovery() -> f64 {
    1e-7
}

fn default_quadrature() -> f64 {
    1e-6
}

fn default_contraction() -> f64 {
    0.01
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            relative: default_relative(),
            agreement: default_agreement(),
            recovery: default_recovery(),
            quadrature: default_quadrature(),
            contraction: default_contraction(),
        }
    }
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        message: message.into(),
    }
}

/// Parses and validates a scenario; schema errors carry the field path.
pub fn parse_scenario_str(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(path, e.into_inner().to_string())
    })?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario_str(&text)
}

/// Builds a generator component of dimension `dim` from its description.
pub fn generator_component(kind: &GeneratorKind, dim: usize) -> Result<GeneratorComponent> {
    let one_d = |what: &str| -> Result<()> {
        if dim == 1 {
            Ok(())
        } else {
            Err(Error::InvalidGenerator(format!(
                "{what} generators are one-dimensional"
            )))
        }
    };
    match kind {
        GeneratorKind::BSpline { order } => GeneratorComponent::bspline_nd(*order, dim),
        GeneratorKind::TruncatedGaussian { sigma, radius } => {
            one_d("truncated gaussian")?;
            GeneratorComponent::truncated_gaussian(*sigma, *radius)
        }
        GeneratorKind::PolyDecay { s, scale } => GeneratorComponent::poly_decay_nd(*s, *scale, dim),
        GeneratorKind::Tabulated {
            step,
            values,
            origin,
        } => {
            one_d("tabulated")?;
            GeneratorComponent::tabulated(*step, values.clone(), *origin)
        }
        GeneratorKind::Combination { terms } => {
            let built = terms
                .iter()
                .map(|(w, g)| Ok((*w, generator_component(&g.kind, dim)?)))
                .collect::<Result<Vec<_>>>()?;
            GeneratorComponent::combination(built)
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.id.contains(['\n', ',', '"']) {
            return Err(schema(
                "id",
                "must be nonempty without commas, quotes or newlines",
            ));
        }
        let m = &self.model;
        if m.dimension != 1 && m.dimension != 2 {
            return Err(schema("model.dimension", "must be 1 or 2"));
        }
        if m.generators.is_empty() {
            return Err(schema(
                "model.generators",
                "at least one generator is required",
            ));
        }
        if m.measures.is_empty() {
            return Err(schema("model.measures", "at least one measure is required"));
        }
        for (i, g) in m.generators.iter().enumerate() {
            generator_component(g, m.dimension)
                .map_err(|e| schema(format!("model.generators[{i}]"), e.to_string()))?;
        }
        for (i, ms) in m.measures.iter().enumerate() {
            measure_component(ms, m.dimension)
                .map_err(|e| schema(format!("model.measures[{i}]"), e.to_string()))?;
        }
        if m.window.half_width < 1 {
            return Err(schema("model.window.half_width", "must be at least 1"));
        }
        if !(m.window.tail_radius > 0.0) {
            return Err(schema("model.window.tail_radius", "must be positive"));
        }
        if self.norms.is_empty() {
            return Err(schema("norms", "at least one exponent is required"));
        }
        if let Some(p) = &self.perturbation {
            if p.magnitudes().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(schema(
                    "perturbation",
                    "magnitudes must be finite and nonnegative",
                ));
            }
            if p.trials == 0 {
                return Err(schema("perturbation.trials", "must be at least 1"));
            }
            if !(0.0..1.0).contains(&p.generator_share) {
                return Err(schema("perturbation.generator_share", "must lie in [0, 1)"));
            }
            if p.kind == PerturbationKind::Combined && p.magnitudes().iter().any(|&t| t >= 1.0) {
                return Err(schema(
                    "perturbation",
                    "combined magnitudes are budget fractions below 1",
                ));
            }
        }
        if matches!(self.pipeline, Pipeline::Perturb | Pipeline::Sweep)
            && self
                .perturbation
                .as_ref()
                .is_none_or(|p| p.magnitudes().is_empty())
        {
            return Err(schema(
                "perturbation",
                "this pipeline needs a magnitude or sweep grid",
            ));
        }
        if self.pipeline == Pipeline::Sweep
            && self
                .perturbation
                .as_ref()
                .is_some_and(|p| p.sweep.is_none())
        {
            return Err(schema(
                "perturbation.sweep",
                "the sweep pipeline needs a grid",
            ));
        }
        if self.reconstruction.methods.is_empty() || self.reconstruction.trials == 0 {
            return Err(schema(
                "reconstruction",
                "needs at least one method and one trial",
            ));
        }
        if !(self.localization.s > m.dimension as f64) {
            return Err(schema("localization.s", "must exceed the dimension"));
        }
        self.model
            .build(self.seed)
            .map_err(|e| schema("model", e.to_string()))?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn measure_component(spec: &MeasureSpec, dim: usize) -> Result<MeasureComponent> {
    let atoms = spec
        .atoms
        .iter()
        .map(|row| {
            let weight = match row.len() - dim.min(row.len()) {
                1 => Complex64::new(row[dim], 0.0),
                2 => Complex64::new(row[dim], row[dim + 1]),
                _ => {
                    return Err(Error::InvalidMeasure(format!(
                        "atom rows need {dim} coordinates and a real or complex weight, got {row:?}"
                    )))
                }
            };
            Ok(Atom {
                location: row[..dim].to_vec(),
                weight,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let density = spec.density.as_ref().map(|d| Density {
        h: d.h,
        origin: d.origin,
        values: d.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    });
    MeasureComponent::new(dim, atoms, density)
}

impl ModelSpec {
    /// The sampling model; uniform jitter without its own seed uses `seed`.
    pub fn build(&self, seed: u64) -> Result<SamplingModel> {
        let d = self.dimension;
        let phi = GeneratorVector::new(
            self.generators
                .iter()
                .map(|g| generator_component(g, d))
                .collect::<Result<_>>()?,
        )?;
        let mu = VecMeasure::new(
            self.measures
                .iter()
                .map(|m| measure_component(m, d))
                .collect::<Result<_>>()?,
        )?;
        let jitter = match &self.sampling.jitter {
            JitterSpec::None => Jitter::None,
            JitterSpec::Constant { shift } => Jitter::Constant(shift.clone()),
            JitterSpec::Uniform { gamma, seed: s } => {
                if !(*gamma >= 0.0 && gamma.is_finite()) {
                    return Err(Error::DimensionMismatch(format!(
                        "jitter radius must be nonnegative, got {gamma}"
                    )));
                }
                Jitter::Uniform {
                    gamma: *gamma,
                    seed: s.unwrap_or(seed),
                }
            }
            JitterSpec::Explicit { displacements } => Jitter::Explicit(displacements.clone()),
        };
        let mut model =
            SamplingModel::new(phi, mu, self.sampling.pattern.clone())?.with_jitter(jitter);
        if let Some(l) = self.sampling.region {
            model = model.with_region(l);
        }
        Ok(model)
    }
}
