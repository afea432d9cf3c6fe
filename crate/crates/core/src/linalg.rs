//! Dense and iterative helpers shared by the operator, reconstruction and
//! localization code.

use nalgebra::{DMatrix, DVector};

use crate::amalgam::Complex64;
use crate::error::{Error, Result};

/// Matrices up to this many columns are handled with dense factorizations.
pub const DENSE_LIMIT: usize = 4096;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Extreme singular values `(σ_min, σ_max)` via a dense SVD. For a wide
/// matrix the minimum is taken as zero.
pub fn singular_extremes(m: &CMatrix) -> (f64, f64) {
    if m.ncols() == 0 || m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = if m.nrows() < m.ncols() {
        0.0
    } else {
        sv.iter().copied().fold(f64::INFINITY, f64::min)
    };
    (min, max)
}

/// Spectral norm via a dense SVD.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    singular_extremes(m).1
}

/// Deterministic, non-degenerate starting vector for iterations.
pub fn start_vector(n: usize) -> CVector {
    CVector::from_fn(n, |i, _| {
        Complex64::new(1.0 + 0.37 * ((i * 7919) % 101) as f64 / 101.0, 0.0)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerResult {
    pub value: f64,
    pub iterations: usize,
    pub stalled: bool,
}

/// Largest eigenvalue of the Hermitian positive semidefinite operator `apply`
/// by power iteration on the Rayleigh quotient.
pub fn power_iteration<F>(n: usize, apply: F, tol: f64, cap: usize) -> PowerResult
where
    F: Fn(&CVector) -> CVector,
{
    if n == 0 {
        return PowerResult {
            value: 0.0,
            iterations: 0,
            stalled: false,
        };
    }
    let mut v = start_vector(n);
    v /= Complex64::new(v.norm(), 0.0);
    let mut lambda = 0.0;
    for it in 1..=cap {
        let w = apply(&v);
        let next = v.dotc(&w).re;
        let wn = w.norm();
        if wn == 0.0 {
            return PowerResult {
                value: 0.0,
                iterations: it,
                stalled: false,
            };
        }
        v = w / Complex64::new(wn, 0.0);
        if (next - lambda).abs() <= tol * next.abs() {
            return PowerResult {
                value: next,
                iterations: it,
                stalled: false,
            };
        }
        lambda = next;
    }
    PowerResult {
        value: lambda,
        iterations: cap,
        stalled: true,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub x: CVector,
    pub iterations: usize,
    pub converged: bool,
}

/// Conjugate gradients for a Hermitian positive definite operator.
pub fn conjugate_gradient<F>(apply: F, b: &CVector, tol: f64, cap: usize) -> CgResult
where
    F: Fn(&CVector) -> CVector,
{
    let mut x = CVector::zeros(b.len());
    let bn = b.norm();
    if bn == 0.0 {
        return CgResult {
            x,
            iterations: 0,
            converged: true,
        };
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.dotc(&r).re;
    for it in 1..=cap {
        let ap = apply(&p);
        let pap = p.dotc(&ap).re;
        if pap <= 0.0 {
            return CgResult {
                x,
                iterations: it,
                converged: false,
            };
        }
        let alpha = Complex64::new(rr / pap, 0.0);
        x.axpy(alpha, &p, Complex64::new(1.0, 0.0));
        r.axpy(-alpha, &ap, Complex64::new(1.0, 0.0));
        let next = r.dotc(&r).re;
        if next.sqrt() <= tol * bn {
            return CgResult {
                x,
                iterations: it,
                converged: true,
            };
        }
        let beta = Complex64::new(next / rr, 0.0);
        p = &r + &p * beta;
        rr = next;
    }
    CgResult {
        x,
        iterations: cap,
        converged: false,
    }
}

/// Smallest eigenvalue of a Hermitian positive definite operator by inverse
/// iteration, with each solve done by conjugate gradients.
pub fn inverse_iteration<F>(n: usize, apply: F, tol: f64, cap: usize) -> Result<PowerResult>
where
    F: Fn(&CVector) -> CVector,
{
    let mut v = start_vector(n);
    v /= Complex64::new(v.norm(), 0.0);
    let mut mu = f64::INFINITY;
    for it in 1..=cap {
        let solve = conjugate_gradient(&apply, &v, 1e-13, 20 * n.max(10));
        if !solve.converged {
            return Err(Error::SingularNormalEquations);
        }
        let w = solve.x;
        // Rayleigh quotient of the inverse
        let inv = v.dotc(&w).re;
        if inv <= 0.0 {
            return Err(Error::SingularNormalEquations);
        }
        let next = 1.0 / inv;
        v = &w / Complex64::new(w.norm(), 0.0);
        if (next - mu).abs() <= tol * next {
            return Ok(PowerResult {
                value: next,
                iterations: it,
                stalled: false,
            });
        }
        mu = next;
    }
    Ok(PowerResult {
        value: mu,
        iterations: cap,
        stalled: true,
    })
}

/// `(M^H M)^{-1} M^H` for a full-column-rank `M`.
pub fn left_inverse(m: &CMatrix) -> Result<CMatrix> {
    let mh = m.adjoint();
    let gram = &mh * m;
    let chol = gram.cholesky().ok_or(Error::SingularNormalEquations)?;
    Ok(chol.solve(&mh))
}

/// Induced norm for `ℓ¹ → ℓ¹`: largest column sum.
pub fn max_column_sum(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Induced norm for `ℓ^∞ → ℓ^∞`: largest row sum.
pub fn max_row_sum(m: &CMatrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}
