//! Runs scenario pipelines and writes their reports as JSON lines and CSV.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amalgam::{w_norm_vector, Complex64, EsssupSpec};
use crate::error::{Error, Result};
use crate::linalg::CVector;
use crate::localization::{inverse_decay, localize, multi_p_stability, DecayFit};
use crate::measure::{ConvolutionMatrix, VecMeasure};
use crate::norm::PNorm;
use crate::perturbation::{
    bumped_generator, combined_perturbed_bounds, epsilon0_combined, epsilon0_generator,
    epsilon0_measure, generator_perturbed_bounds, jitter_bound, jitter_budget,
    measure_perturbed_bounds, nutshell_transfer, BudgetInputs, PerturbationKind, PerturbedBounds,
    PerturbedRiesz, Transfer,
};
use crate::reconstruction::{
    end_to_end_error, measure_pair, reconstruct, ErrorBudget, FrameSystem, Method,
    ReconstructionResult,
};
use crate::sampling_op::{
    mesh_constant, operator_distance, sample_signal, shared_window, stability_check, Jitter,
    SamplingModel, StabilityReport, StabilityVerdict, TracePoint, TruncationWindow, STABLE_RATIO,
};
use crate::scenario::{PerturbationSpec, Pipeline, Scenario};
use crate::shift_space::{dual_generator, gram_matrix, riesz_bounds, CoeffWindow, RieszBounds};

mod finite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// A named number with the norm convention it was measured in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub key: String,
    #[serde(with = "finite")]
    pub value: f64,
    pub norm: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Inconclusive,
    Fail,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Pass => "pass",
            Outcome::Inconclusive => "inconclusive",
            Outcome::Fail => "fail",
        }
    }
}

/// A comparison `lhs relation rhs` with its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    #[serde(with = "finite")]
    pub lhs: f64,
    #[serde(with = "finite")]
    pub rhs: f64,
    pub relation: String,
    pub outcome: Outcome,
}

impl Verdict {
    fn le(name: &str, lhs: f64, rhs: f64) -> Self {
        Verdict::with(name, lhs, rhs, "<=", lhs <= rhs)
    }

    fn ge(name: &str, lhs: f64, rhs: f64) -> Self {
        Verdict::with(name, lhs, rhs, ">=", lhs >= rhs)
    }

    fn with(name: &str, lhs: f64, rhs: f64, relation: &str, pass: bool) -> Self {
        Verdict {
            name: name.to_string(),
            lhs,
            rhs,
            relation: relation.to_string(),
            outcome: if pass { Outcome::Pass } else { Outcome::Fail },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub scenario_id: String,
    pub pipeline: Pipeline,
    /// Which sub-run produced the record, e.g. `p=2` or `jitter=0.05`.
    pub label: String,
    pub values: Vec<Quantity>,
    pub verdicts: Vec<Verdict>,
    pub window_trace: Vec<TracePoint>,
    pub error: Option<String>,
}

impl ReportRecord {
    fn new(scenario: &Scenario, pipeline: Pipeline, label: impl Into<String>) -> Self {
        ReportRecord {
            scenario_id: scenario.id.clone(),
            pipeline,
            label: label.into(),
            values: Vec::new(),
            verdicts: Vec::new(),
            window_trace: Vec::new(),
            error: None,
        }
    }

    fn value(&mut self, key: &str, value: f64, norm: &str) {
        self.values.push(Quantity {
            key: key.to_string(),
            value,
            norm: norm.to_string(),
        });
    }

    fn failed(mut self, e: &Error) -> Self {
        self.error = Some(e.to_string());
        self
    }

    /// Worst verdict outcome; an error counts as a failure.
    pub fn outcome(&self) -> Outcome {
        if self.error.is_some() {
            return Outcome::Fail;
        }
        self.verdicts
            .iter()
            .map(|v| v.outcome)
            .max()
            .unwrap_or(Outcome::Pass)
    }
}

/// Exit status for a run: 0 when every verdict passes, 2 on any failure,
/// 3 when something is inconclusive but nothing failed.
pub fn exit_code(records: &[ReportRecord]) -> i32 {
    match records.iter().map(ReportRecord::outcome).max() {
        Some(Outcome::Fail) => 2,
        Some(Outcome::Inconclusive) => 3,
        _ => 0,
    }
}

/// Derives an independent seed for a named sub-task.
pub fn sub_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = seed ^ h ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs the scenario's pipeline.
pub fn run(scenario: &Scenario) -> Vec<ReportRecord> {
    run_pipeline(scenario, scenario.pipeline)
}

/// Runs `pipeline` on the scenario's model, whatever pipeline the file names.
pub fn run_pipeline(scenario: &Scenario, pipeline: Pipeline) -> Vec<ReportRecord> {
    log::info!("running {} on scenario {}", pipeline.name(), scenario.id);
    let model = match scenario.model.build(scenario.seed) {
        Ok(m) => m,
        Err(e) => return vec![ReportRecord::new(scenario, pipeline, "model").failed(&e)],
    };
    match pipeline {
        Pipeline::Bounds => run_bounds(scenario, &model),
        Pipeline::Perturb | Pipeline::Sweep => run_perturb(scenario, &model, pipeline),
        Pipeline::Reconstruct => run_reconstruct(scenario, &model),
        Pipeline::Localize => vec![run_localize(scenario, &model)],
    }
}

fn stability_verdict(report: &StabilityReport, expect: Option<StabilityVerdict>) -> Verdict {
    let min_ratio = report
        .trace
        .windows(2)
        .map(|w| w[1].eta / w[0].eta)
        .fold(f64::INFINITY, f64::min);
    let outcome = match (report.verdict, expect) {
        (v, Some(e)) if v == e => Outcome::Pass,
        (StabilityVerdict::Inconclusive, _) => Outcome::Inconclusive,
        (StabilityVerdict::Stable, None) => Outcome::Pass,
        _ => Outcome::Fail,
    };
    Verdict {
        name: format!("stability_{}", verdict_name(report.verdict)),
        lhs: min_ratio,
        rhs: STABLE_RATIO,
        relation: ">=".into(),
        outcome,
    }
}

fn verdict_name(v: StabilityVerdict) -> &'static str {
    match v {
        StabilityVerdict::Stable => "stable",
        StabilityVerdict::Unstable => "unstable",
        StabilityVerdict::Inconclusive => "inconclusive",
    }
}

/// Unperturbed constants that budgets are computed from.
struct Baseline {
    window: TruncationWindow,
    eta: f64,
    beta: f64,
    riesz: RieszBounds,
    separation: f64,
    mu_tv: f64,
    phi_w1: f64,
}

impl Baseline {
    fn new(scenario: &Scenario, model: &SamplingModel, p: PNorm) -> Result<Self> {
        let w = scenario.model.window;
        let window = model.window(w.half_width, w.tail_radius)?;
        let op = model.operator(&window)?;
        let eta = op.lower_bound(p)?;
        let beta = op.op_norm(p).value;
        let riesz = riesz_bounds(&model.phi, window.coeffs, p)?;
        let separation = model.sampling_set(window.region)?.base_separation()?;
        Ok(Baseline {
            window,
            eta,
            beta,
            riesz,
            separation,
            mu_tv: model.mu.total_variation(),
            phi_w1: w_norm_vector(&model.phi, PNorm::One, &EsssupSpec::default())?.value,
        })
    }

    fn inputs(&self, p: PNorm, d: usize) -> BudgetInputs {
        BudgetInputs::from_estimates(
            p,
            d,
            self.eta,
            self.beta,
            &self.riesz,
            self.separation,
            self.mu_tv,
            self.phi_w1,
        )
    }
}

fn run_bounds(scenario: &Scenario, model: &SamplingModel) -> Vec<ReportRecord> {
    scenario
        .norms
        .par_iter()
        .map(|&p| {
            let rec = ReportRecord::new(scenario, Pipeline::Bounds, p.label());
            bounds_record(scenario, model, p, rec.clone()).unwrap_or_else(|e| rec.failed(&e))
        })
        .collect()
}

fn bounds_record(
    scenario: &Scenario,
    model: &SamplingModel,
    p: PNorm,
    mut rec: ReportRecord,
) -> Result<ReportRecord> {
    let w = scenario.model.window;
    let d = model.dim();
    let report = stability_check(model, p, w.half_width, w.doublings, w.tail_radius)?;
    let label = p.label();
    let first = report.trace[0];
    rec.value("eta", first.eta, label);
    rec.value("beta", first.beta, label);
    rec.value("eta_last", report.eta, label);
    rec.value("beta_last", report.beta, label);
    let window = model.window(w.half_width, w.tail_radius)?;
    let op = model.operator(&window)?;
    let norms = op.op_norm(p);
    rec.value("beta_block_sum", norms.block_sum, label);
    let set = model.sampling_set(window.region)?;
    let separation = set.base_separation()?;
    let n_mesh = mesh_constant(separation, p, d);
    let phi_w1 = w_norm_vector(&model.phi, PNorm::One, &EsssupSpec::default())?.value;
    let mu_tv = model.mu.total_variation();
    rec.value("separation", separation, "euclidean");
    rec.value("jittered_separation", set.separation()?, "euclidean");
    rec.value("mesh_constant", n_mesh, label);
    rec.value("phi_w1", phi_w1, "W1");
    rec.value("mu_tv", mu_tv, "TV");
    match riesz_bounds(&model.phi, window.coeffs, p) {
        Ok(riesz) => {
            rec.value("riesz_lower", riesz.lower, label);
            rec.value("riesz_upper", riesz.upper, label);
            rec.value("a_function", first.eta / riesz.upper, label);
            rec.value("b_function", first.beta / riesz.lower, label);
        }
        Err(e) => log::warn!("no Riesz bounds for {label}: {e}"),
    }
    let chain = n_mesh * 2f64.powi(d as i32) * phi_w1 * mu_tv;
    rec.verdicts
        .push(stability_verdict(&report, scenario.expect));
    rec.verdicts.push(Verdict::le(
        "upper_bound_chain",
        first.beta,
        chain * (1.0 + scenario.tolerances.relative),
    ));
    rec.window_trace = report.trace;
    Ok(rec)
}

/// A model perturbed as described by `spec` at one grid point, with the
/// size of each ingredient.
struct Perturbed {
    model: SamplingModel,
    generator_eps: f64,
    measure_eps: f64,
    gamma: f64,
    bounds: Option<PerturbedBounds>,
    budget: f64,
}

fn blurred_measure(
    mu: &VecMeasure,
    eps: f64,
    spec: &PerturbationSpec,
) -> Result<(VecMeasure, f64)> {
    let mut comps = mu.components().to_vec();
    let (blurred, achieved) = comps[0].blurred(eps, spec.blur_width, spec.blur_cells)?;
    comps[0] = blurred;
    Ok((VecMeasure::new(comps)?, achieved))
}

fn perturbed_riesz(
    spec: &PerturbationSpec,
    model: &SamplingModel,
    window: CoeffWindow,
) -> Result<Option<PerturbedRiesz>> {
    if !spec.measured_riesz {
        return Ok(None);
    }
    let r = riesz_bounds(&model.phi, window, PNorm::Two)?;
    Ok(Some(PerturbedRiesz {
        upper: r.upper,
        lower: r.lower,
    }))
}

fn perturbed_model(
    model: &SamplingModel,
    base: &Baseline,
    spec: &PerturbationSpec,
    magnitude: f64,
    p: PNorm,
    jitter_seed: u64,
) -> Result<Perturbed> {
    let inputs = base.inputs(p, model.dim());
    match spec.kind {
        PerturbationKind::Jitter => Ok(Perturbed {
            model: model.clone().with_jitter(Jitter::Uniform {
                gamma: magnitude,
                seed: jitter_seed,
            }),
            generator_eps: 0.0,
            measure_eps: 0.0,
            gamma: magnitude,
            bounds: None,
            budget: f64::NAN,
        }),
        PerturbationKind::Generator => {
            let mut m = model.clone();
            m.phi = bumped_generator(&model.phi, magnitude)?;
            let budget = epsilon0_generator(&inputs)?.epsilon0;
            let measured = perturbed_riesz(spec, &m, base.window.coeffs)?;
            Ok(Perturbed {
                bounds: generator_perturbed_bounds(magnitude, &inputs, measured).ok(),
                model: m,
                generator_eps: magnitude,
                measure_eps: 0.0,
                gamma: 0.0,
                budget,
            })
        }
        PerturbationKind::Measure => {
            let mut m = model.clone();
            let (mu, achieved) = blurred_measure(&model.mu, magnitude, spec)?;
            m.mu = mu;
            Ok(Perturbed {
                model: m,
                generator_eps: 0.0,
                measure_eps: achieved,
                gamma: 0.0,
                bounds: measure_perturbed_bounds(achieved, &inputs).ok(),
                budget: epsilon0_measure(&inputs)?,
            })
        }
        PerturbationKind::Combined => {
            let gen = epsilon0_generator(&inputs)?;
            let budget = epsilon0_combined(&inputs, spec.generator_share * gen.epsilon0)?;
            let mut m = model.clone();
            let eps_g = magnitude * budget.epsilon1;
            m.phi = bumped_generator(&model.phi, eps_g)?;
            let (mu, achieved) = blurred_measure(&model.mu, magnitude * budget.epsilon2, spec)?;
            m.mu = mu;
            Ok(Perturbed {
                model: m,
                generator_eps: eps_g,
                measure_eps: achieved,
                gamma: 0.0,
                bounds: combined_perturbed_bounds(&inputs, &budget, achieved).ok(),
                budget: budget.epsilon0,
            })
        }
    }
}

fn transfer_values(rec: &mut ReportRecord, t: Transfer, label: &str) {
    match t {
        Transfer::Stable { eta, beta } => {
            rec.value("transferred_eta", eta, label);
            rec.value("transferred_beta", beta, label);
        }
        Transfer::Rejected { .. } => rec.value("transferred_eta", 0.0, label),
    }
}

fn run_perturb(
    scenario: &Scenario,
    model: &SamplingModel,
    pipeline: Pipeline,
) -> Vec<ReportRecord> {
    let spec = scenario
        .perturbation
        .as_ref()
        .expect("validated perturbation");
    let p = scenario.norms[0];
    let base = match Baseline::new(scenario, model, p) {
        Ok(b) => b,
        Err(e) => return vec![ReportRecord::new(scenario, pipeline, "baseline").failed(&e)],
    };
    let kind = serde_json::to_value(spec.kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    spec.magnitudes()
        .par_iter()
        .enumerate()
        .map(|(idx, &mag)| {
            let rec = ReportRecord::new(scenario, pipeline, format!("{kind}={mag}"));
            let seed = sub_seed(spec.seed.unwrap_or(scenario.seed), &kind, idx as u64);
            let out = match spec.kind {
                PerturbationKind::Jitter => {
                    jitter_record(scenario, model, &base, spec, mag, p, seed, rec.clone())
                }
                _ => budget_record(scenario, model, &base, spec, mag, p, rec.clone()),
            };
            out.unwrap_or_else(|e| rec.failed(&e))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn jitter_record(
    scenario: &Scenario,
    model: &SamplingModel,
    base: &Baseline,
    spec: &PerturbationSpec,
    gamma: f64,
    p: PNorm,
    seed: u64,
    mut rec: ReportRecord,
) -> Result<ReportRecord> {
    let label = p.label();
    let tol = scenario.tolerances.relative;
    let w = scenario.model.window;
    let cm = ConvolutionMatrix::new(&model.phi, &model.mu)?;
    let esssup = EsssupSpec::default();
    let bound = jitter_bound(&cm, gamma, base.separation, p, model.dim(), &esssup)?;
    let budget = jitter_budget(&cm, base.eta, base.separation, p, model.dim(), &esssup)?;
    let mut worst = 0.0f64;
    let mut worst_eta_gap = f64::INFINITY;
    for trial in 0..spec.trials {
        let jittered = model.clone().with_jitter(Jitter::Uniform {
            gamma,
            seed: sub_seed(seed, "trial", trial as u64),
        });
        let window = shared_window(&[model, &jittered], w.half_width, w.tail_radius)?;
        let u = model.operator(&window)?;
        let v = jittered.operator(&window)?;
        let dist = operator_distance(&u, &v, p)?;
        worst = worst.max(dist);
        if let Transfer::Stable { eta, .. } = nutshell_transfer(u.lower_bound(p)?, base.beta, dist)
        {
            let measured = match v.lower_bound(p) {
                Ok(e) => e,
                Err(Error::DegenerateOperator { eta, .. }) => eta,
                Err(e) => return Err(e),
            };
            worst_eta_gap = worst_eta_gap.min(measured - eta);
        }
    }
    rec.value("gamma", gamma, "euclidean");
    rec.value("trials", spec.trials as f64, "count");
    rec.value("measured_distance_max", worst, label);
    rec.value("jitter_bound", bound.bound, label);
    rec.value("osc_w1", bound.osc_w1, "W1");
    rec.value("mesh_constant", bound.n_mesh, label);
    rec.value("eta", base.eta, label);
    rec.value("beta", base.beta, label);
    rec.value("jitter_budget", budget.unwrap_or(0.0), "euclidean");
    transfer_values(
        &mut rec,
        nutshell_transfer(base.eta, base.beta, worst),
        label,
    );
    rec.verdicts.push(Verdict::le(
        "jitter_bound",
        worst,
        bound.bound * (1.0 + tol),
    ));
    if worst_eta_gap.is_finite() {
        rec.verdicts.push(Verdict::ge(
            "transferred_lower_bound",
            worst_eta_gap,
            -1e-12,
        ));
    }
    Ok(rec)
}

fn budget_record(
    scenario: &Scenario,
    model: &SamplingModel,
    base: &Baseline,
    spec: &PerturbationSpec,
    magnitude: f64,
    p: PNorm,
    mut rec: ReportRecord,
) -> Result<ReportRecord> {
    let label = p.label();
    let tol = scenario.tolerances.relative;
    let w = scenario.model.window;
    let pert = perturbed_model(model, base, spec, magnitude, p, 0)?;
    rec.value("generator_distance", pert.generator_eps, "W1");
    rec.value("measure_distance", pert.measure_eps, "TV");
    rec.value("budget", pert.budget, "-");
    rec.value("eta", base.eta, label);
    rec.value("beta", base.beta, label);
    let window = shared_window(&[model, &pert.model], w.half_width, w.tail_radius)?;
    let u = model.operator(&window)?;
    let v = pert.model.operator(&window)?;
    let dist = operator_distance(&u, &v, p)?;
    rec.value("operator_distance", dist, label);
    transfer_values(
        &mut rec,
        nutshell_transfer(base.eta, base.beta, dist),
        label,
    );
    let measured_eta = match v.lower_bound(p) {
        Ok(e) => e,
        Err(Error::DegenerateOperator { eta, .. }) => eta,
        Err(e) => return Err(e),
    };
    rec.value("perturbed_eta", measured_eta, label);
    rec.value("perturbed_beta", v.op_norm(p).value, label);
    let size = pert.generator_eps + pert.measure_eps;
    match pert.bounds {
        Some(b) => {
            rec.value("a_perturbed", b.a, label);
            rec.value("b_perturbed", b.b, label);
            rec.value("eta_floor", b.eta_floor, label);
            rec.verdicts
                .push(Verdict::with("within_budget", size, pert.budget, "<", true));
            rec.verdicts.push(Verdict::ge(
                "perturbed_lower_bound",
                measured_eta,
                b.eta_floor * (1.0 - tol),
            ));
            let report = stability_check(&pert.model, p, w.half_width, w.doublings, w.tail_radius)?;
            rec.verdicts.push(stability_verdict(&report, None));
            rec.window_trace = report.trace;
        }
        None => {
            // outside the budget the theorems make no claim
            let mut v = Verdict::with("within_budget", size, pert.budget, "<", false);
            v.outcome = Outcome::Inconclusive;
            rec.verdicts.push(v);
        }
    }
    Ok(rec)
}

fn random_interior(
    system: &FrameSystem,
    rng: &mut ChaCha8Rng,
) -> Result<crate::shift_space::CoeffVector> {
    let v = CVector::from_fn(system.interior_columns().len(), |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    system.extend(&v)
}

fn max_abs_diff(
    a: &crate::shift_space::CoeffVector,
    b: &crate::shift_space::CoeffVector,
) -> Result<f64> {
    Ok(a.sub(b)?
        .flat()
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max))
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Richardson => "richardson",
        Method::Cg => "cg",
        Method::Normal => "normal",
    }
}

fn run_reconstruct(scenario: &Scenario, model: &SamplingModel) -> Vec<ReportRecord> {
    let exact = ReportRecord::new(scenario, Pipeline::Reconstruct, "exact");
    let mut out =
        vec![exact_record(scenario, model, exact.clone()).unwrap_or_else(|e| exact.failed(&e))];
    if let Some(spec) = &scenario.perturbation {
        out.extend(perturbed_reconstruct(scenario, model, spec));
    }
    out
}

fn exact_record(
    scenario: &Scenario,
    model: &SamplingModel,
    mut rec: ReportRecord,
) -> Result<ReportRecord> {
    let w = scenario.model.window;
    let tol = &scenario.tolerances;
    let spec = &scenario.reconstruction;
    let window = model.window(w.half_width, w.tail_radius)?;
    let op = model.operator(&window)?;
    let system = FrameSystem::new(&op)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(scenario.seed, "reconstruct", 0));
    let mut recovery = vec![0.0f64; spec.methods.len()];
    let mut agreement = 0.0f64;
    let mut two_path = 0.0f64;
    let mut contraction = 0.0f64;
    let mut iterations = vec![0usize; spec.methods.len()];
    let mut residual = 0.0f64;
    for _ in 0..spec.trials {
        let c = random_interior(&system, &mut rng)?;
        let b = sample_signal(&c, &model.phi, &model.mu, op.positions())?;
        let direct = op.apply(&c)?;
        two_path = two_path.max(
            b.iter()
                .zip(&direct)
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max),
        );
        let results: Vec<ReconstructionResult> = spec
            .methods
            .iter()
            .map(|&m| reconstruct(&system, &b, m, spec.tolerance, spec.max_iterations))
            .collect::<Result<_>>()?;
        for (k, r) in results.iter().enumerate() {
            recovery[k] = recovery[k].max(max_abs_diff(&r.coefficients, &c)?);
            iterations[k] = iterations[k].max(r.iterations);
            residual = residual.max(r.residual);
            for h in r.history.windows(2) {
                if h[0] > 0.0 {
                    contraction = contraction.max(h[1] / h[0]);
                }
            }
        }
        for r in &results[1..] {
            agreement = agreement.max(max_abs_diff(&r.coefficients, &results[0].coefficients)?);
        }
    }
    rec.value("eta", system.eta(), "p=2");
    rec.value("beta", system.beta(), "p=2");
    rec.value("lambda", system.lambda(), "-");
    rec.value("residual_max", residual, "p=2");
    for (k, &m) in spec.methods.iter().enumerate() {
        rec.value(
            &format!("iterations_{}", method_name(m)),
            iterations[k] as f64,
            "count",
        );
        rec.verdicts.push(Verdict::le(
            &format!("recovery_{}", method_name(m)),
            recovery[k],
            tol.recovery,
        ));
    }
    if spec.methods.len() > 1 {
        rec.verdicts
            .push(Verdict::le("method_agreement", agreement, tol.agreement));
    }
    rec.verdicts
        .push(Verdict::le("two_path_samples", two_path, 1e-10));
    if spec.methods.contains(&Method::Richardson) {
        rec.verdicts.push(Verdict::le(
            "contraction",
            contraction,
            system.contraction() + tol.contraction,
        ));
    }
    Ok(rec)
}

fn perturbed_reconstruct(
    scenario: &Scenario,
    model: &SamplingModel,
    spec: &PerturbationSpec,
) -> Vec<ReportRecord> {
    let w = scenario.model.window;
    let p = PNorm::Two;
    let fail = |label: &str, e: &Error| {
        ReportRecord::new(scenario, Pipeline::Reconstruct, label).failed(e)
    };
    let base = match Baseline::new(scenario, model, p) {
        Ok(b) => b,
        Err(e) => return vec![fail("baseline", &e)],
    };
    let seed = sub_seed(spec.seed.unwrap_or(scenario.seed), "end_to_end", 0);
    let gamma_star = if spec.kind == PerturbationKind::Combined {
        let cm = ConvolutionMatrix::new(&model.phi, &model.mu);
        match cm.and_then(|cm| {
            jitter_budget(
                &cm,
                base.eta,
                base.separation,
                p,
                model.dim(),
                &EsssupSpec::default(),
            )
        }) {
            Ok(g) => g.unwrap_or(0.0),
            Err(e) => return vec![fail("jitter_budget", &e)],
        }
    } else {
        0.0
    };
    let mags = spec.magnitudes();
    let built: Result<Vec<Perturbed>> = mags
        .iter()
        .map(|&m| {
            let mut pert = perturbed_model(model, &base, spec, m, p, seed)?;
            if spec.kind == PerturbationKind::Combined {
                pert.gamma = m * gamma_star;
                pert.model = pert.model.with_jitter(Jitter::Uniform {
                    gamma: pert.gamma,
                    seed,
                });
            }
            Ok(pert)
        })
        .collect();
    let built = match built {
        Ok(b) => b,
        Err(e) => return vec![fail("perturbed_models", &e)],
    };
    let mut all: Vec<&SamplingModel> = vec![model];
    all.extend(built.iter().map(|b| &b.model));
    let setup = shared_window(&all, w.half_width, w.tail_radius).and_then(|window| {
        let op = model.operator(&window)?;
        let system = FrameSystem::new(&op)?;
        let riesz = riesz_bounds(&model.phi, window.coeffs, p)?;
        let mut rng =
            ChaCha8Rng::seed_from_u64(sub_seed(scenario.seed, "end_to_end_coefficients", 0));
        let c = random_interior(&system, &mut rng)?;
        Ok((window, system, riesz, c))
    });
    let (window, system, riesz, c) = match setup {
        Ok(s) => s,
        Err(e) => return vec![fail("window", &e)],
    };
    let mut records: Vec<ReportRecord> = built
        .par_iter()
        .zip(mags.par_iter())
        .map(|(pert, &mag)| {
            let rec =
                ReportRecord::new(scenario, Pipeline::Reconstruct, format!("end_to_end={mag}"));
            end_to_end_record(
                scenario,
                model,
                pert,
                &window,
                &system,
                &riesz,
                &c,
                rec.clone(),
            )
            .unwrap_or_else(|e| rec.failed(&e))
        })
        .collect();
    // the bound chain should shrink with the perturbation
    let mut order: Vec<(f64, f64)> = mags
        .iter()
        .zip(&records)
        .filter_map(|(&m, r)| {
            r.values
                .iter()
                .find(|q| q.key == "bound_chain")
                .map(|q| (m, q.value))
        })
        .collect();
    if order.len() == mags.len() && order.len() > 1 {
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let violations = order.windows(2).filter(|w| w[1].1 < w[0].1).count();
        let mut summary = ReportRecord::new(scenario, Pipeline::Reconstruct, "end_to_end_sweep");
        summary
            .verdicts
            .push(Verdict::le("bound_chain_monotone", violations as f64, 0.0));
        records.push(summary);
    }
    records
}

#[allow(clippy::too_many_arguments)]
fn end_to_end_record(
    scenario: &Scenario,
    model: &SamplingModel,
    pert: &Perturbed,
    window: &TruncationWindow,
    system: &FrameSystem,
    riesz: &RieszBounds,
    c: &crate::shift_space::CoeffVector,
    mut rec: ReportRecord,
) -> Result<ReportRecord> {
    let v = pert.model.operator(window)?;
    let e2e = end_to_end_error(system, &v, &model.phi, c, riesz.upper, 6)?;
    rec.value("generator_distance", pert.generator_eps, "W1");
    rec.value("measure_distance", pert.measure_eps, "TV");
    rec.value("gamma", pert.gamma, "euclidean");
    rec.value("error_l2", e2e.error_l2, "L2");
    rec.value("coefficient_error", e2e.coefficient_error, "p=2");
    rec.value("bound_chain", e2e.chain, "L2");
    rec.verdicts.push(Verdict::le(
        "end_to_end",
        e2e.error_l2,
        e2e.chain + scenario.tolerances.quadrature,
    ));
    let pair = measure_pair(system.operator(), &v, PNorm::Two)?;
    let budget = ErrorBudget::new(pair.epsilon, pair.eta, pair.beta);
    rec.value("epsilon", pair.epsilon, "p=2");
    rec.value("nu", budget.nu, "-");
    rec.value("gram_distance", pair.gram_distance, "p=2");
    rec.value("gram_bound", budget.gram_bound, "p=2");
    rec.verdicts.push(Verdict::le(
        "gram_distance",
        pair.gram_distance,
        budget.gram_bound * (1.0 + 1e-12),
    ));
    if budget.admissible {
        if let (Some(m), Some(b)) = (pair.inverse_distance, budget.inverse_bound) {
            rec.value("inverse_distance", m, "p=2");
            rec.value("inverse_bound", b, "p=2");
            rec.verdicts
                .push(Verdict::le("inverse_distance", m, b * (1.0 + 1e-12)));
        }
        if let (Some(m), Some(b)) = (pair.pseudoinverse_distance, budget.pseudoinverse_bound) {
            rec.value("pseudoinverse_distance", m, "p=2");
            rec.value("pseudoinverse_bound", b, "p=2");
            rec.verdicts
                .push(Verdict::le("pseudoinverse_distance", m, b * (1.0 + 1e-12)));
        }
    }
    Ok(rec)
}

fn fit_values(rec: &mut ReportRecord, name: &str, fit: &DecayFit) {
    rec.value(&format!("{name}_c_hat"), fit.c_hat, "-");
    if let Some(e) = fit.fitted_exponent {
        rec.value(&format!("{name}_fitted_exponent"), e, "-");
    }
    rec.verdicts.push(Verdict::le(
        &format!("{name}_decay"),
        fit.tail_ratio,
        1.05 * fit.inner_ratio,
    ));
    if !fit.pass {
        rec.verdicts.last_mut().expect("just pushed").outcome = Outcome::Fail;
    }
}

fn run_localize(scenario: &Scenario, model: &SamplingModel) -> ReportRecord {
    let rec = ReportRecord::new(
        scenario,
        Pipeline::Localize,
        format!("s={}", scenario.localization.s),
    );
    localize_record(scenario, model, rec.clone()).unwrap_or_else(|e| rec.failed(&e))
}

fn localize_record(
    scenario: &Scenario,
    model: &SamplingModel,
    mut rec: ReportRecord,
) -> Result<ReportRecord> {
    let w = scenario.model.window;
    let s = scenario.localization.s;
    let report = localize(model, s, w.half_width, w.tail_radius)?;
    for (i, fit) in report.generator_fits.iter().enumerate() {
        fit_values(&mut rec, &format!("generator{i}"), fit);
    }
    if let Some(f) = &report.cross_gram {
        fit_values(&mut rec, "cross_gram", f);
    }
    if let Some(f) = &report.dual_cross_gram {
        fit_values(&mut rec, "dual_cross_gram", f);
    }
    if let Some(m) = report.moment {
        rec.value("moment", m, "TV");
    }
    rec.value("riesz_lower", report.riesz.lower, "p=2");
    rec.value("riesz_upper", report.riesz.upper, "p=2");
    let coeffs = CoeffWindow::new(model.dim(), w.half_width)?;
    let dual = dual_generator(&model.phi, coeffs)?;
    rec.value("dual_center", dual.center_coefficient(0), "-");
    if let Some(rate) = crate::localization::fitted_rate(
        &dual
            .decay_profile(0)
            .into_iter()
            .filter(|&(n, v)| n >= 1.0 && v > 1e-13)
            .collect::<Vec<_>>(),
    ) {
        rec.value("dual_rate", rate, "-");
    }
    let gram = gram_matrix(&model.phi, coeffs, 8)?;
    let points: Vec<Vec<i64>> = (0..model.phi.r()).flat_map(|_| coeffs.points()).collect();
    let inv = inverse_decay(&gram.matrix.map(|v| Complex64::new(v, 0.0)), &points, s)?;
    fit_values(&mut rec, "gram_inverse", &inv.fit);
    let multi = multi_p_stability(model, w.half_width, w.doublings, w.tail_radius)?;
    for r in &multi.reports {
        rec.value(&format!("eta_{}", r.p), r.eta, r.p.label());
        if r.p == PNorm::Two {
            rec.verdicts.push(stability_verdict(r, scenario.expect));
            rec.window_trace = r.trace.clone();
        }
    }
    rec.verdicts
        .push(Verdict::le("multi_p_alert", multi.alert as u8 as f64, 0.0));
    Ok(rec)
}

/// One JSON object per line.
pub fn emit_jsonl<W: Write>(records: &[ReportRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<ReportRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Column order of the CSV report.
pub const CSV_HEADER: [&str; 5] = ["scenario_id", "pipeline", "key", "value", "verdict"];

fn csv_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        String::new()
    }
}

/// Long-format CSV: one row per quantity (`label/key`, empty verdict) and
/// two rows per verdict (`label/name.lhs`, `label/name.rhs`, both carrying
/// the outcome). Records that failed with an error add a `label/error` row.
pub fn emit_csv<W: Write>(records: &[ReportRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        let pipeline = r.pipeline.name();
        for q in &r.values {
            w.write_record([
                r.scenario_id.as_str(),
                pipeline,
                &format!("{}/{}", r.label, q.key),
                &csv_number(q.value),
                "",
            ])?;
        }
        for v in &r.verdicts {
            for (side, value) in [("lhs", v.lhs), ("rhs", v.rhs)] {
                w.write_record([
                    r.scenario_id.as_str(),
                    pipeline,
                    &format!("{}/{}.{side}", r.label, v.name),
                    &csv_number(value),
                    v.outcome.name(),
                ])?;
            }
        }
        if r.error.is_some() {
            w.write_record([
                r.scenario_id.as_str(),
                pipeline,
                &format!("{}/error", r.label),
                "",
                "fail",
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `report.jsonl`, `report.csv` and `scenario.resolved.json` under `dir`.
pub fn write_outputs(dir: &Path, scenario: &Scenario, records: &[ReportRecord]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    emit_jsonl(
        records,
        std::io::BufWriter::new(std::fs::File::create(dir.join("report.jsonl"))?),
    )?;
    emit_csv(
        records,
        std::io::BufWriter::new(std::fs::File::create(dir.join("report.csv"))?),
    )?;
    std::fs::write(
        dir.join("scenario.resolved.json"),
        scenario.to_json()? + "\n",
    )?;
    Ok(())
}
