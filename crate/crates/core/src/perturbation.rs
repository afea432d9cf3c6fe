//! Perturbation budgets for generator, measure and jitter perturbations,
//! and the transfer of sampling bounds to a perturbed operator.

use serde::{Deserialize, Serialize};

use crate::amalgam::{osc_w1_norm_field, EsssupSpec, GeneratorComponent, GeneratorVector};
use crate::error::{Error, Result};
use crate::measure::ConvolutionMatrix;
use crate::norm::PNorm;
use crate::sampling_op::{mesh_constant, SamplingOperator};
use crate::shift_space::RieszBounds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Generator,
    Measure,
    Combined,
    Jitter,
}

/// Constants of the unperturbed model that enter every budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetInputs {
    pub p: PNorm,
    pub d: usize,
    /// Function-side lower sampling bound `A_p`.
    pub a_p: f64,
    /// Function-side upper sampling bound `B_p`.
    pub b_p: f64,
    /// Lower Riesz bound `m_p`.
    pub m_p: f64,
    /// Mesh constant `N`.
    pub n_mesh: f64,
    /// `‖μ⃗‖`, summed total variation.
    pub mu_tv: f64,
    /// `‖Φ‖_{W¹}`.
    pub phi_w1: f64,
}

impl BudgetInputs {
    /// Inputs from coefficient-side estimates: `A_p = η/M_p`, `B_p = β/m_p`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_estimates(
        p: PNorm,
        d: usize,
        eta: f64,
        beta: f64,
        riesz: &RieszBounds,
        separation: f64,
        mu_tv: f64,
        phi_w1: f64,
    ) -> Self {
        BudgetInputs {
            p,
            d,
            a_p: eta / riesz.upper,
            b_p: beta / riesz.lower,
            m_p: riesz.lower,
            n_mesh: mesh_constant(separation, p, d),
            mu_tv,
            phi_w1,
        }
    }

    /// `2^d N`.
    fn cell_factor(&self) -> f64 {
        2f64.powi(self.d as i32) * self.n_mesh
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.a_p,
            self.b_p,
            self.m_p,
            self.n_mesh,
            self.mu_tv,
            self.phi_w1,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::DimensionMismatch(format!(
                "budget inputs must be finite and nonnegative: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Sampling bounds for the perturbed model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbedBounds {
    pub epsilon: f64,
    /// Function-side `A′_p`.
    pub a: f64,
    /// Function-side `B′_p`.
    pub b: f64,
    /// Coefficient-side floor for the perturbed `η′`, `A′_p` times the
    /// lower Riesz bound still guaranteed after the perturbation.
    pub eta_floor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorBudget {
    /// Linear coefficient of the defining quadratic.
    pub c_p: f64,
    pub epsilon0: f64,
}

/// Positive root of `ε² + C_p ε − A_p m_p² / (2^d N ‖μ⃗‖) = 0`, capped
/// below `m_p`.
pub fn epsilon0_generator(inputs: &BudgetInputs) -> Result<GeneratorBudget> {
    inputs.validate()?;
    let k = inputs.cell_factor() * inputs.mu_tv;
    let c_p = inputs.phi_w1 + inputs.a_p * inputs.m_p / k;
    let q = inputs.a_p * inputs.m_p * inputs.m_p / k;
    // 2q / (√(C² + 4q) + C) is the same root without cancellation
    let root = 2.0 * q / ((c_p * c_p + 4.0 * q).sqrt() + c_p);
    Ok(GeneratorBudget {
        c_p,
        epsilon0: root.min(inputs.m_p),
    })
}

/// Residual of the defining quadratic at `eps`.
pub fn generator_quadratic_residual(
    inputs: &BudgetInputs,
    budget: &GeneratorBudget,
    eps: f64,
) -> f64 {
    let k = inputs.cell_factor() * inputs.mu_tv;
    eps * eps + budget.c_p * eps - inputs.a_p * inputs.m_p * inputs.m_p / k
}

/// Riesz bounds `(M′_p, m′_p)` measured for the perturbed generator, used in
/// place of the worst-case `m_p − ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbedRiesz {
    pub upper: f64,
    pub lower: f64,
}

/// `A′_p`, `B′_p` for `‖Φ − Θ‖_{W¹} = ε`.
pub fn generator_perturbed_bounds(
    eps: f64,
    inputs: &BudgetInputs,
    measured: Option<PerturbedRiesz>,
) -> Result<PerturbedBounds> {
    let budget = epsilon0_generator(inputs)?;
    if !(eps >= 0.0) || eps >= budget.epsilon0 || eps >= inputs.m_p {
        return Err(Error::BudgetExceeded {
            epsilon: eps,
            budget: budget.epsilon0,
        });
    }
    let k = inputs.cell_factor() * inputs.mu_tv;
    Ok(match measured {
        None => {
            let lower = inputs.m_p - eps;
            let a = inputs.a_p * inputs.m_p / (inputs.phi_w1 + eps) - k * eps / lower;
            PerturbedBounds {
                epsilon: eps,
                a,
                b: k * (inputs.phi_w1 + eps) / lower,
                eta_floor: a * lower,
            }
        }
        Some(r) => {
            let a = inputs.a_p * inputs.m_p / r.upper - k * eps / r.lower;
            PerturbedBounds {
                epsilon: eps,
                a,
                b: k * (inputs.phi_w1 + eps) / r.lower,
                eta_floor: a * r.lower,
            }
        }
    })
}

/// `A_p m_p / (2^d N ‖Φ‖_{W¹})`.
pub fn epsilon0_measure(inputs: &BudgetInputs) -> Result<f64> {
    inputs.validate()?;
    Ok(inputs.a_p * inputs.m_p / (inputs.cell_factor() * inputs.phi_w1))
}

/// `A′_p`, `B′_p` for `‖μ⃗ − α⃗‖ = ε`.
pub fn measure_perturbed_bounds(eps: f64, inputs: &BudgetInputs) -> Result<PerturbedBounds> {
    let budget = epsilon0_measure(inputs)?;
    if !(eps >= 0.0) || eps >= budget {
        return Err(Error::BudgetExceeded {
            epsilon: eps,
            budget,
        });
    }
    let shift = inputs.cell_factor() * inputs.phi_w1 * eps / inputs.m_p;
    Ok(PerturbedBounds {
        epsilon: eps,
        a: inputs.a_p - shift,
        b: inputs.b_p + shift,
        eta_floor: (inputs.a_p - shift) * inputs.m_p,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CombinedBudget {
    /// Generator allowance actually used.
    pub epsilon1: f64,
    /// Measure allowance left over at that generator allowance.
    pub epsilon2: f64,
    pub epsilon0: f64,
    /// Intermediate bounds for `(Θ, μ⃗)`.
    pub a_mid: f64,
    pub b_mid: f64,
}

/// Splits the budget for simultaneous generator and measure perturbations.
/// `epsilon1` is the generator allowance; it must lie in `[0, ε₀_gen)`.
/// With `epsilon1 = 0` the generator is unperturbed and the measure budget
/// is the plain measure budget.
pub fn epsilon0_combined(inputs: &BudgetInputs, epsilon1: f64) -> Result<CombinedBudget> {
    let gen = epsilon0_generator(inputs)?;
    if !(epsilon1 >= 0.0) || epsilon1 > gen.epsilon0 {
        return Err(Error::BudgetExceeded {
            epsilon: epsilon1,
            budget: gen.epsilon0,
        });
    }
    if epsilon1 == 0.0 {
        let e2 = epsilon0_measure(inputs)?;
        return Ok(CombinedBudget {
            epsilon1: 0.0,
            epsilon2: e2,
            epsilon0: 0.0,
            a_mid: inputs.a_p,
            b_mid: inputs.b_p,
        });
    }
    let k = inputs.cell_factor() * inputs.mu_tv;
    let lower = inputs.m_p - epsilon1;
    let a_mid =
        (inputs.a_p * inputs.m_p / (inputs.phi_w1 + epsilon1) - k * epsilon1 / lower).max(0.0);
    let b_mid = k * (inputs.phi_w1 + epsilon1) / lower;
    let epsilon2 = a_mid * lower / (inputs.cell_factor() * (inputs.phi_w1 + epsilon1));
    Ok(CombinedBudget {
        epsilon1,
        epsilon2,
        epsilon0: epsilon1.min(epsilon2),
        a_mid,
        b_mid,
    })
}

/// Bounds for `‖Φ − Θ‖ ≤ ε₁`, `‖μ⃗ − α⃗‖ = eps2`.
pub fn combined_perturbed_bounds(
    inputs: &BudgetInputs,
    budget: &CombinedBudget,
    eps2: f64,
) -> Result<PerturbedBounds> {
    if !(eps2 >= 0.0) || eps2 > budget.epsilon2 {
        return Err(Error::BudgetExceeded {
            epsilon: eps2,
            budget: budget.epsilon2,
        });
    }
    let lower = inputs.m_p - budget.epsilon1;
    let shift = inputs.cell_factor() * (inputs.phi_w1 + budget.epsilon1) * eps2 / lower;
    let a = budget.a_mid - shift;
    Ok(PerturbedBounds {
        epsilon: budget.epsilon1 + eps2,
        a,
        b: budget.b_mid + shift,
        eta_floor: a * lower,
    })
}

/// Tabulated hat of height one on `[0.25, 0.75]`; its `W¹` norm is exactly 1,
/// so `Φ + ε·bump` sits at `W¹` distance `ε`.
pub fn unit_bump() -> GeneratorComponent {
    GeneratorComponent::tabulated(0.25, vec![0.0, 1.0, 0.0], 0.25).expect("valid table")
}

/// `Φ` with `ε·bump` added to the first component.
pub fn bumped_generator(phi: &GeneratorVector, eps: f64) -> Result<GeneratorVector> {
    phi.perturbed(0, eps, &unit_bump())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JitterBound {
    pub gamma: f64,
    /// Mesh constant from the unperturbed separation.
    pub n_mesh: f64,
    /// `Σ_{i,l} ‖osc_γ(φⁱ ∗ μˡ)‖_{W¹}`.
    pub osc_w1: f64,
    /// Reported numerical error of the oscillation norms.
    pub osc_error: f64,
    pub bound: f64,
}

/// Upper bound on `‖U − U_Δ‖_p` for jitter with `‖Δ‖∞ ≤ gamma`.
pub fn jitter_bound(
    cm: &ConvolutionMatrix<'_>,
    gamma: f64,
    separation: f64,
    p: PNorm,
    d: usize,
    spec: &EsssupSpec,
) -> Result<JitterBound> {
    let n_mesh = mesh_constant(separation, p, d);
    if gamma == 0.0 {
        return Ok(JitterBound {
            gamma,
            n_mesh,
            osc_w1: 0.0,
            osc_error: 0.0,
            bound: 0.0,
        });
    }
    let mut osc_w1 = 0.0;
    let mut osc_error = 0.0;
    for i in 0..cm.r() {
        for l in 0..cm.t() {
            let est = osc_w1_norm_field(cm.entry(i, l), gamma, spec)?;
            osc_w1 += est.value;
            osc_error += est.error;
        }
    }
    Ok(JitterBound {
        gamma,
        n_mesh,
        osc_w1,
        osc_error,
        bound: n_mesh * osc_w1,
    })
}

/// Largest jitter radius whose bound stays below `eta` (found by bisection to
/// relative precision `1e-4`), or `None` when even tiny radii exceed it.
pub fn jitter_budget(
    cm: &ConvolutionMatrix<'_>,
    eta: f64,
    separation: f64,
    p: PNorm,
    d: usize,
    spec: &EsssupSpec,
) -> Result<Option<f64>> {
    let below =
        |g: f64| -> Result<bool> { Ok(jitter_bound(cm, g, separation, p, d, spec)?.bound < eta) };
    let mut lo = 1e-6;
    if !below(lo)? {
        return Ok(None);
    }
    let mut hi = lo;
    loop {
        hi *= 2.0;
        if hi > separation {
            // the bound saturates once points may swap; stop at the separation
            if below(separation)? {
                return Ok(Some(separation));
            }
            hi = separation;
            break;
        }
        if !below(hi)? {
            break;
        }
        lo = hi;
    }
    while hi - lo > 1e-4 * hi {
        let mid = 0.5 * (lo + hi);
        if below(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// Bounds carried over to a perturbed operator at distance `dist`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Transfer {
    Stable { eta: f64, beta: f64 },
    Rejected { dist: f64, eta: f64 },
}

/// `η′ = η − dist` and `β′ = η + β` when `dist < η`.
pub fn nutshell_transfer(eta: f64, beta: f64, dist: f64) -> Transfer {
    if dist < eta {
        Transfer::Stable {
            eta: eta - dist,
            beta: eta + beta,
        }
    } else {
        Transfer::Rejected { dist, eta }
    }
}

/// Measured distance against a predicted bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationReport {
    pub kind: PerturbationKind,
    pub p: PNorm,
    /// Perturbation size in its own norm (`‖Δ‖∞`, `W¹` or total variation).
    pub magnitude: f64,
    pub measured: f64,
    pub predicted: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub transfer: Transfer,
}

impl PerturbationReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: PerturbationKind,
        p: PNorm,
        magnitude: f64,
        measured: f64,
        predicted: f64,
        tolerance: f64,
        eta: f64,
        beta: f64,
    ) -> Self {
        PerturbationReport {
            kind,
            p,
            magnitude,
            measured,
            predicted,
            tolerance,
            pass: measured <= predicted * (1.0 + tolerance),
            transfer: nutshell_transfer(eta, beta, measured),
        }
    }
}

/// Jitter report for aligned operators `u` (unperturbed) and `v` (jittered).
pub fn jitter_report(
    u: &SamplingOperator,
    v: &SamplingOperator,
    bound: &JitterBound,
    magnitude: f64,
    eta: f64,
    beta: f64,
    tolerance: f64,
) -> Result<PerturbationReport> {
    let p = PNorm::Two;
    let measured = crate::sampling_op::operator_distance(u, v, p)?;
    Ok(PerturbationReport::new(
        PerturbationKind::Jitter,
        p,
        magnitude,
        measured,
        bound.bound,
        tolerance,
        eta,
        beta,
    ))
}
