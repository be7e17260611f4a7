//! Complete elliptic integrals and the reversal-averaging integral.
//!
//! K and E are computed with the arithmetic-geometric-mean iteration, which
//! converges quadratically and keeps quadrature out of the production path.
//! The averaging integral
//!
//! ```text
//! I(p) = integral over a full period of cos^2(psi) / sqrt(p^2 + cos^2(psi))
//! ```
//!
//! appears in the slow-flow phase equation with p = epsilon / (a chi); its
//! closed form is `4 [ E(k)/k - p^2 k K(k) ]` with `k = 1/sqrt(1+p^2)`.

use std::f64::consts::PI;

/// Errors from elliptic-integral evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EllipticError {
    /// Modulus outside [0, 1).
    ModulusOutOfRange(f64),
    /// Argument p of the averaging integral is negative.
    NegativeP(f64),
    /// Small-p expansion requested outside its validity range p < 1.
    SmallPOutOfRange(f64),
}

impl std::fmt::Display for EllipticError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EllipticError::ModulusOutOfRange(k) => {
                write!(f, "elliptic modulus k = {k} outside [0, 1)")
            }
            EllipticError::NegativeP(p) => write!(f, "averaging integral needs p >= 0, got {p}"),
            EllipticError::SmallPOutOfRange(p) => {
                write!(f, "small-p expansion valid only for p < 1, got {p}")
            }
        }
    }
}

impl std::error::Error for EllipticError {}

/// K(k) and E(k) at a common modulus k (not the parameter m = k^2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticPair {
    /// Modulus in [0, 1).
    pub k: f64,
    /// Complete elliptic integral of the first kind.
    pub big_k: f64,
    /// Complete elliptic integral of the second kind.
    pub big_e: f64,
}

const AGM_MAX_ITER: usize = 40;

/// Complete elliptic integrals of the first and second kind by the AGM
/// iteration, accurate to close to machine precision for k in [0, 1).
pub fn complete_elliptic(k: f64) -> Result<EllipticPair, EllipticError> {
    if !(0.0..1.0).contains(&k) {
        return Err(EllipticError::ModulusOutOfRange(k));
    }
    let kp = (1.0 - k * k).sqrt(); // complementary modulus

    let mut a = 1.0_f64;
    let mut b = kp;
    let mut c = k;
    let mut sum = 0.5 * c * c;
    let mut pow2 = 0.5;

    for _ in 0..AGM_MAX_ITER {
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        c = 0.5 * (a - b);
        pow2 *= 2.0;
        sum += pow2 * c * c;
        a = an;
        b = bn;
        if c.abs() <= f64::EPSILON * a {
            break;
        }
    }

    let big_k = PI / (2.0 * a);
    let big_e = big_k * (1.0 - sum);
    Ok(EllipticPair { k, big_k, big_e })
}

/// Full-period reversal-averaging integral I(p), exact elliptic form.
///
/// The removable p = 0 endpoint returns the limit value 4 exactly.
pub fn averaging_integral(p: f64) -> Result<f64, EllipticError> {
    if p < 0.0 || p.is_nan() {
        return Err(EllipticError::NegativeP(p));
    }
    if p == 0.0 {
        return Ok(4.0);
    }
    // For very large p the modulus k -> 0 and cancellation in
    // E/k - p^2 k K grows; switch to the asymptotic series.
    if p > 1e6 {
        // I(p) = pi/p * (1 - 1/(8 p^2) + ...)
        return Ok(PI / p * (1.0 - 0.125 / (p * p)));
    }
    let k = 1.0 / (1.0 + p * p).sqrt();
    let pair = complete_elliptic(k)?;
    Ok(4.0 * (pair.big_e / k - p * p * k * pair.big_k))
}

/// Small-p expansion of the averaging integral:
/// `4 [ 1 - p^2/4 (2 ln(4/p) - 1) ]`, valid for p << 1.
pub fn averaging_integral_smallp(p: f64) -> Result<f64, EllipticError> {
    if p <= 0.0 || p.is_nan() {
        return Err(EllipticError::NegativeP(p));
    }
    if p >= 1.0 {
        return Err(EllipticError::SmallPOutOfRange(p));
    }
    Ok(4.0 * (1.0 - 0.25 * p * p * (2.0 * (4.0 / p).ln() - 1.0)))
}
