//! Adiabatic (quasi-static) magnetization manifold and the reduced
//! cantilever-only equation of motion.
//!
//! When the effective field rotates slowly compared with the precession rate,
//! the moment stays locked to the field direction. The manifold is two-valued:
//! the moment either follows the field or its opposite, and the branch is an
//! explicit argument everywhere rather than being inferred from history.

use crate::params::{DimensionlessParams, ParamsError};

/// Which quasi-static branch the moment occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Moment parallel to the effective field.
    Aligned,
    /// Moment antiparallel to the effective field.
    Inverted,
}

impl Branch {
    /// +1 for aligned, -1 for inverted.
    pub fn sign(self) -> f64 {
        match self {
            Branch::Aligned => 1.0,
            Branch::Inverted => -1.0,
        }
    }
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Branch::Aligned => write!(f, "aligned"),
            Branch::Inverted => write!(f, "inverted"),
        }
    }
}

/// Moment components on the quasi-static manifold at coordinate Z.
///
/// Aligned branch: `M = (eps, 0, delta - chi Z) / |B_eff|`; the inverted
/// branch negates both nonzero components. The result is a unit vector for
/// every Z.
pub fn quasistatic_moment(z: f64, params: &DimensionlessParams, branch: Branch) -> [f64; 3] {
    let bz = params.delta - params.chi * z;
    let norm = (params.epsilon * params.epsilon + bz * bz).sqrt();
    let s = branch.sign();
    [s * params.epsilon / norm, 0.0, s * bz / norm]
}

/// Acceleration of the reduced cantilever equation obtained by substituting
/// the aligned-branch quasi-static moment into the exact dynamics and
/// dropping the alpha Z proximity correction.
///
/// Only the delta = 0 reduction is implemented; a nonzero offset is rejected.
pub fn reduced_acceleration(
    z: f64,
    v: f64,
    tau: f64,
    params: &DimensionlessParams,
) -> Result<f64, ParamsError> {
    if params.delta != 0.0 {
        return Err(ParamsError::OutOfRange {
            name: "delta",
            value: params.delta,
            expected: "0 (the reduced equation drops the field offset)",
        });
    }
    let inv_q = params.inverse_q();
    let drive = if params.drive_on {
        inv_q * ((1.0 + params.rho) * tau + params.theta0).cos()
    } else {
        0.0
    };
    Ok(-z + magnetic_force(z, params) - inv_q * v + drive)
}

/// The spin back-action force term `lambda chi Z / sqrt(eps^2 + (chi Z)^2)`
/// of the reduced equation (aligned branch, delta = 0).
pub fn magnetic_force(z: f64, params: &DimensionlessParams) -> f64 {
    let cz = params.chi * z;
    params.lambda * cz / (params.epsilon * params.epsilon + cz * cz).sqrt()
}

/// Potential-energy modification whose negative gradient is
/// [`magnetic_force`]: `delta U(Z) = -(lambda/chi) sqrt(eps^2 + (chi Z)^2)`.
pub fn potential_correction(z: f64, params: &DimensionlessParams) -> f64 {
    let cz = params.chi * z;
    -params.lambda / params.chi * (params.epsilon * params.epsilon + cz * cz).sqrt()
}

/// Semi-quantitative estimate of the driven-resonance peak displacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemiQuantShift {
    /// Peak position without the spin, rho_0 = -1/(4 Q^2).
    pub rho0: f64,
    /// Peak displacement `-lambda chi / (2 sqrt(eps^2 + chi^2/2))`.
    pub shift: f64,
    /// Its chi >> eps limit, `-lambda / sqrt(2)`.
    pub shift_limit: f64,
}

/// Peak-shift estimate from the effective-linear replacement of the reduced
/// equation (the mean of Z^2 over a unit-amplitude cycle stands in for Z^2).
pub fn semiquantitative_shift(params: &DimensionlessParams) -> SemiQuantShift {
    let q = params.quality_factor;
    let rho0 = if q.is_infinite() { 0.0 } else { -1.0 / (4.0 * q * q) };
    let chi2 = params.chi * params.chi;
    SemiQuantShift {
        rho0,
        shift: -params.lambda * params.chi
            / (2.0 * (params.epsilon * params.epsilon + 0.5 * chi2).sqrt()),
        shift_limit: -params.lambda / std::f64::consts::SQRT_2,
    }
}
