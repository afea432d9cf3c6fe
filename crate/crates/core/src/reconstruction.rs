//! Frame-operator reconstruction `R = (U*U)⁻¹U*` and perturbation bounds on
//! the reconstruction operator.

use serde::{Deserialize, Serialize};

use crate::amalgam::{Complex64, GeneratorVector};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::norm::PNorm;
use crate::sampling_op::SamplingOperator;
use crate::shift_space::{lp_norm, CoeffVector, Synthesized, DEFAULT_TAIL_RADIUS};

/// Interior restriction of `U` with its extreme singular values and cached
/// left inverse.
#[derive(Debug, Clone)]
pub struct FrameSystem {
    op: SamplingOperator,
    columns: Vec<usize>,
    dense: CMatrix,
    eta: f64,
    beta: f64,
    lambda: f64,
    left_inverse: CMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Richardson,
    Cg,
    Normal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    /// Full-window coefficients, zero off the interior.
    pub coefficients: CoeffVector,
    pub iterations: usize,
    /// `‖Uc − b‖₂`.
    pub residual: f64,
    pub method: Method,
    pub converged: bool,
    /// `‖U*(b − Uc)‖₂` before each iteration (Richardson only).
    pub history: Vec<f64>,
}

impl FrameSystem {
    pub fn new(op: &SamplingOperator) -> Result<Self> {
        let columns = op.interior_columns();
        if columns.len() > linalg::DENSE_LIMIT {
            return Err(Error::InvalidWindow(format!(
                "{} interior columns exceed the dense limit {}",
                columns.len(),
                linalg::DENSE_LIMIT
            )));
        }
        let dense = op.interior_dense();
        let (eta, beta) = linalg::singular_extremes(&dense);
        if !(beta > 0.0) || eta < 1e-12 * beta {
            return Err(Error::DegenerateOperator { eta, beta });
        }
        let left_inverse = linalg::left_inverse(&dense)?;
        Ok(FrameSystem {
            op: op.clone(),
            columns,
            dense,
            eta,
            beta,
            lambda: 2.0 / (eta * eta + beta * beta),
            left_inverse,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Relaxation `2 / (η² + β²)`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Guaranteed per-iteration contraction `(β² − η²)/(β² + η²)`.
    pub fn contraction(&self) -> f64 {
        let (a, b) = (self.eta * self.eta, self.beta * self.beta);
        (b - a) / (b + a)
    }

    pub fn operator(&self) -> &SamplingOperator {
        &self.op
    }

    pub fn interior_columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn dense(&self) -> &CMatrix {
        &self.dense
    }

    /// `(U*U)⁻¹U*`; its rows are the dual frame vectors in coefficient form.
    pub fn left_inverse(&self) -> &CMatrix {
        &self.left_inverse
    }

    pub fn samples_len(&self) -> usize {
        self.dense.nrows()
    }

    /// Interior entries of a full coefficient vector.
    pub fn restrict(&self, c: &CoeffVector) -> Result<CVector> {
        let flat = c.flat();
        if flat.len() != self.op.ncols() {
            return Err(Error::DimensionMismatch(
                "coefficient vector does not match the frame window".into(),
            ));
        }
        Ok(CVector::from_iterator(
            self.columns.len(),
            self.columns.iter().map(|&k| flat[k]),
        ))
    }

    /// Full-window coefficient vector from interior entries.
    pub fn extend(&self, v: &CVector) -> Result<CoeffVector> {
        let mut flat = vec![Complex64::new(0.0, 0.0); self.op.ncols()];
        for (&k, x) in self.columns.iter().zip(v.iter()) {
            flat[k] = *x;
        }
        CoeffVector::from_flat(self.op.window().coeffs, self.op.r(), &flat)
    }

    fn samples(&self, b: &[Complex64]) -> Result<CVector> {
        if b.len() != self.samples_len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} samples, got {}",
                self.samples_len(),
                b.len()
            )));
        }
        Ok(CVector::from_column_slice(b))
    }

    fn result(
        &self,
        c: &CVector,
        b: &CVector,
        method: Method,
        iterations: usize,
        converged: bool,
        history: Vec<f64>,
    ) -> Result<ReconstructionResult> {
        Ok(ReconstructionResult {
            coefficients: self.extend(c)?,
            iterations,
            residual: (&self.dense * c - b).norm(),
            method,
            converged,
            history,
        })
    }
}

/// `S C = U*(U C)` on the interior.
pub fn frame_apply(system: &FrameSystem, c: &CoeffVector) -> Result<CoeffVector> {
    let v = system.restrict(c)?;
    let s = system.dense.adjoint() * (&system.dense * v);
    system.extend(&s)
}

/// Frame algorithm `c ← c + λ U*(b − Uc)` from `c = 0`, stopping once
/// `‖U*(b − Uc)‖ ≤ tol ‖U*b‖`.
pub fn reconstruct_richardson(
    system: &FrameSystem,
    b: &[Complex64],
    tol: f64,
    cap: usize,
) -> Result<ReconstructionResult> {
    let b = system.samples(b)?;
    let uh = system.dense.adjoint();
    let target = tol * (&uh * &b).norm();
    let lambda = Complex64::new(system.lambda, 0.0);
    let mut c = CVector::zeros(system.columns.len());
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let g = &uh * (&b - &system.dense * &c);
        let gn = g.norm();
        history.push(gn);
        if gn <= target {
            converged = true;
            break;
        }
        if iterations == cap {
            break;
        }
        c += g * lambda;
        iterations += 1;
    }
    if !converged {
        log::warn!("frame algorithm stopped at the iteration cap {cap}");
    }
    system.result(&c, &b, Method::Richardson, iterations, converged, history)
}

/// Conjugate gradients on the normal equations.
pub fn reconstruct_cg(
    system: &FrameSystem,
    b: &[Complex64],
    tol: f64,
    cap: usize,
) -> Result<ReconstructionResult> {
    let b = system.samples(b)?;
    let rhs = system.dense.adjoint() * &b;
    let u = &system.dense;
    let sol = linalg::conjugate_gradient(|v| u.adjoint() * (u * v), &rhs, tol, cap);
    system.result(
        &sol.x,
        &b,
        Method::Cg,
        sol.iterations,
        sol.converged,
        Vec::new(),
    )
}

/// `Σ_j b_j ψ̃_j` with the dual vectors `ψ̃_j` taken as the columns of
/// `(U*U)⁻¹U*`, summed in the given order.
pub fn dual_frame_expansion(
    system: &FrameSystem,
    b: &[Complex64],
    order: &[usize],
) -> Result<CVector> {
    let bv = system.samples(b)?;
    let mut c = CVector::zeros(system.columns.len());
    for &j in order {
        c.axpy(
            bv[j],
            &system.left_inverse.column(j),
            Complex64::new(1.0, 0.0),
        );
    }
    Ok(c)
}

/// `c = (U*U)⁻¹U* b`.
pub fn reconstruct_normal(system: &FrameSystem, b: &[Complex64]) -> Result<ReconstructionResult> {
    let order: Vec<usize> = (0..system.samples_len()).collect();
    let c = dual_frame_expansion(system, b, &order)?;
    let bv = system.samples(b)?;
    system.result(&c, &bv, Method::Normal, 1, true, Vec::new())
}

pub fn reconstruct(
    system: &FrameSystem,
    b: &[Complex64],
    method: Method,
    tol: f64,
    cap: usize,
) -> Result<ReconstructionResult> {
    match method {
        Method::Richardson => reconstruct_richardson(system, b, tol, cap),
        Method::Cg => reconstruct_cg(system, b, tol, cap),
        Method::Normal => reconstruct_normal(system, b),
    }
}

/// `ν(ε) = η⁻² ε (ε + 2β)`.
pub fn nu(eps: f64, eta: f64, beta: f64) -> f64 {
    eps * (eps + 2.0 * beta) / (eta * eta)
}

/// Supremum of admissible operator distances, `−β + √(β² + η²)`.
pub fn admissible_sup(eta: f64, beta: f64) -> f64 {
    // η² / (β + √(β² + η²)) avoids cancellation for small η
    eta * eta / (beta + (beta * beta + eta * eta).sqrt())
}

/// `‖U*U − V*V‖ < ε(2β + ε)`.
pub fn gram_distance_bound(eps: f64, beta: f64) -> f64 {
    eps * (2.0 * beta + eps)
}

/// `‖(U*U)⁻¹ − (V*V)⁻¹‖ < ν / (η² (1 − ν))`.
pub fn inverse_distance_bound(nu: f64, eta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&nu) {
        return Err(Error::InadmissibleNu(nu));
    }
    Ok(nu / (eta * eta * (1.0 - nu)))
}

/// `‖(U*U)⁻¹U* − (V*V)⁻¹V*‖ < η⁻² (ε + ν (β + ε)/(1 − ν))`.
pub fn pseudoinverse_bound(eps: f64, eta: f64, beta: f64) -> Result<f64> {
    let sup = admissible_sup(eta, beta);
    if !(eps >= 0.0) || eps >= sup {
        return Err(Error::InadmissibleEpsilon { epsilon: eps, sup });
    }
    let v = nu(eps, eta, beta);
    Ok((eps + v * (beta + eps) / (1.0 - v)) / (eta * eta))
}

/// The three bounds at a given operator distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBudget {
    pub epsilon: f64,
    pub eta: f64,
    pub beta: f64,
    pub nu: f64,
    pub admissible: bool,
    pub gram_bound: f64,
    pub inverse_bound: Option<f64>,
    pub pseudoinverse_bound: Option<f64>,
}

impl ErrorBudget {
    pub fn new(eps: f64, eta: f64, beta: f64) -> Self {
        let v = nu(eps, eta, beta);
        ErrorBudget {
            epsilon: eps,
            eta,
            beta,
            nu: v,
            admissible: eps < admissible_sup(eta, beta),
            gram_bound: gram_distance_bound(eps, beta),
            inverse_bound: inverse_distance_bound(v, eta).ok(),
            pseudoinverse_bound: pseudoinverse_bound(eps, eta, beta).ok(),
        }
    }
}

/// Measured counterparts of the [`ErrorBudget`] quantities for two operators
/// on the same rows and columns, restricted to the interior columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairMeasurement {
    pub p: PNorm,
    pub epsilon: f64,
    pub eta: f64,
    pub beta: f64,
    pub gram_distance: f64,
    pub inverse_distance: Option<f64>,
    pub pseudoinverse_distance: Option<f64>,
}

fn induced_norm(m: &CMatrix, p: PNorm) -> f64 {
    match p {
        PNorm::One => linalg::max_column_sum(m),
        PNorm::Two => linalg::spectral_norm(m),
        PNorm::Inf => linalg::max_row_sum(m),
    }
}

/// Measures `ε`, the Gram, inverse and pseudoinverse distances between `u`
/// and `v`. For `p ∈ {1, ∞}` the plain induced matrix norms are used, and
/// `η` is taken as `1/‖(U*U)⁻¹U*‖_p`.
pub fn measure_pair(
    u: &SamplingOperator,
    v: &SamplingOperator,
    p: PNorm,
) -> Result<PairMeasurement> {
    u.check_aligned(v)?;
    let a = u.interior_dense();
    let b = v.interior_dense();
    let epsilon = induced_norm(&(&a - &b), p);
    let beta = induced_norm(&a, p);
    let ga = a.adjoint() * &a;
    let gb = b.adjoint() * &b;
    let gram_distance = induced_norm(&(&ga - &gb), p);
    let la = linalg::left_inverse(&a)?;
    let eta = match p {
        PNorm::Two => linalg::singular_extremes(&a).0,
        _ => 1.0 / induced_norm(&la, p),
    };
    let (inverse_distance, pseudoinverse_distance) =
        match (ga.clone().try_inverse(), gb.clone().try_inverse()) {
            (Some(ia), Some(ib)) => {
                let lb = linalg::left_inverse(&b)?;
                (
                    Some(induced_norm(&(ia - ib), p)),
                    Some(induced_norm(&(&la - &lb), p)),
                )
            }
            _ => (None, None),
        };
    Ok(PairMeasurement {
        p,
        epsilon,
        eta,
        beta,
        gram_distance,
        inverse_distance,
        pseudoinverse_distance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EndToEnd {
    /// `‖R(U_Δ C) ∘ Φ − f‖_{L²}` by quadrature.
    pub error_l2: f64,
    /// `‖(U*U)⁻¹U*U_Δ C − C‖₂`.
    pub coefficient_error: f64,
    /// `M₂ ‖(U*U)⁻¹U*U_Δ C − C‖₂`.
    pub chain: f64,
}

/// Samples the perturbed model's signal with the perturbed operator,
/// reconstructs with the unperturbed `R`, and compares to `f = Σ C_k φ_k`.
///
/// `c` must vanish off the interior; `riesz_upper` is `M₂` of `Φ`.
pub fn end_to_end_error(
    system: &FrameSystem,
    perturbed: &SamplingOperator,
    phi: &GeneratorVector,
    c: &CoeffVector,
    riesz_upper: f64,
    quadrature_order: usize,
) -> Result<EndToEnd> {
    let samples = perturbed.apply(c)?;
    let rec = reconstruct_normal(system, &samples)?;
    let diff = rec.coefficients.sub(c)?;
    let coefficient_error = {
        let flat = diff.flat();
        flat.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    };
    let f = Synthesized::new(&diff, phi)?;
    let radius = system.op.window().coeffs.half_width as f64 + DEFAULT_TAIL_RADIUS;
    let error_l2 = lp_norm(&f, PNorm::Two, quadrature_order, radius)?;
    Ok(EndToEnd {
        error_l2,
        coefficient_error,
        chain: riesz_upper * coefficient_error,
    })
}
