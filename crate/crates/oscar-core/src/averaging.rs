//! First-order averaged (slow-flow) equations for the oscillation envelope.
//!
//! The driven response is written as a slowly modulated harmonic,
//! `Z = a(tau) cos[(1+rho) tau + theta0 + theta(tau)]`, and averaging over
//! one cycle leaves coupled equations for the amplitude `a` and the phase
//! `theta` (measured relative to the drive). The spin enters only the phase
//! equation, through the reversal-averaging integral `I(p)` with
//! `p = epsilon/(a chi)`; its averaged in-phase component vanishes.
//!
//! All operations take the spin term in the exact elliptic form by default;
//! the truncated small-p expansion and the leading constant are selectable
//! so their error can be measured instead of assumed.

use crate::elliptic::{self, EllipticError};
use crate::numerics::{bisect, parabolic_vertex};
use crate::params::DimensionlessParams;
use crate::quasistatic::Branch;

/// Envelope amplitude and relative phase at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlowState {
    pub tau: f64,
    /// Envelope amplitude, > 0.
    pub a: f64,
    /// Phase of the response relative to the drive, radians.
    pub theta: f64,
}

/// The starting slow state equivalent to the standard initial conditions
/// (cantilever at Z = -1 at rest, drive phase 3 pi / 2): unit amplitude,
/// response lagging the drive by a quarter period.
pub fn initial_slow_state() -> SlowState {
    SlowState { tau: 0.0, a: 1.0, theta: -std::f64::consts::FRAC_PI_2 }
}

/// Which form of the reversal-averaging integral the spin term uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpinTermMode {
    /// Exact elliptic form I(p).
    #[default]
    Exact,
    /// Small-p expansion `4[1 - p^2/4 (2 ln(4/p) - 1)]`; refuses p >= 1.
    SmallP,
    /// Leading constant I = 4 (all p-dependence neglected).
    Leading,
}

/// Errors from the slow-flow operations.
#[derive(Debug, Clone, PartialEq)]
pub enum AveragingError {
    /// Envelope amplitude must be positive.
    NonPositiveAmplitude(f64),
    /// The averaged equations assume a zero static field offset.
    NonzeroDelta(f64),
    /// The damped flow describes free decay; the drive must be off.
    DriveIsOn,
    /// Elliptic-integral failure (small-p validity, bad modulus).
    Elliptic(EllipticError),
}

impl std::fmt::Display for AveragingError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AveragingError::NonPositiveAmplitude(a) => {
                write!(f, "slow-flow amplitude must be positive, got {a}")
            }
            AveragingError::NonzeroDelta(d) => {
                write!(f, "averaged equations require delta = 0, got {d}")
            }
            AveragingError::DriveIsOn => write!(f, "damped slow flow requires the drive off"),
            AveragingError::Elliptic(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for AveragingError {}

impl From<EllipticError> for AveragingError {
    fn from(e: EllipticError) -> Self {
        AveragingError::Elliptic(e)
    }
}

/// Signed spin contribution to d(theta)/d(tau):
/// `-s (lambda / 2 pi a) I(p)` with `p = epsilon/(a chi)` and s the branch
/// sign. Negative on the aligned branch, positive on the inverted one.
pub fn spin_phase_term(
    a: f64,
    params: &DimensionlessParams,
    branch: Branch,
    mode: SpinTermMode,
) -> Result<f64, AveragingError> {
    if !(a > 0.0) {
        return Err(AveragingError::NonPositiveAmplitude(a));
    }
    if params.lambda == 0.0 {
        return Ok(0.0);
    }
    let p = params.epsilon / (a * params.chi);
    let integral = match mode {
        SpinTermMode::Exact => elliptic::averaging_integral(p)?,
        SpinTermMode::SmallP => elliptic::averaging_integral_smallp(p)?,
        SpinTermMode::Leading => 4.0,
    };
    Ok(-branch.sign() * params.lambda / (2.0 * std::f64::consts::PI * a) * integral)
}

/// Driven slow flow: returns (da/dtau, dtheta/dtau).
pub fn slow_flow_driven(
    state: &SlowState,
    params: &DimensionlessParams,
    branch: Branch,
    mode: SpinTermMode,
) -> Result<(f64, f64), AveragingError> {
    if params.delta != 0.0 {
        return Err(AveragingError::NonzeroDelta(params.delta));
    }
    if !(state.a > 0.0) {
        return Err(AveragingError::NonPositiveAmplitude(state.a));
    }
    let inv_q = params.inverse_q();
    let two_rho = 2.0 + params.rho;
    let spin = spin_phase_term(state.a, params, branch, mode)?;
    let da = -0.5 * state.a * inv_q - inv_q / two_rho * state.theta.sin();
    let dtheta = -0.125 * inv_q * inv_q - params.rho + spin
        - inv_q / (state.a * two_rho) * state.theta.cos();
    Ok((da, dtheta))
}

/// Free-decay slow flow (drive off): the amplitude decays as
/// `a(tau) = a(0) exp(-tau/2Q)` and the spin only shifts the phase rate.
pub fn slow_flow_damped(
    state: &SlowState,
    params: &DimensionlessParams,
    branch: Branch,
    mode: SpinTermMode,
) -> Result<(f64, f64), AveragingError> {
    if params.drive_on {
        return Err(AveragingError::DriveIsOn);
    }
    if !(state.a > 0.0) {
        return Err(AveragingError::NonPositiveAmplitude(state.a));
    }
    let inv_q = params.inverse_q();
    let spin = spin_phase_term(state.a, params, branch, mode)?;
    Ok((-0.5 * state.a * inv_q, -0.125 * inv_q * inv_q + spin))
}

/// Instantaneous oscillation frequency of the damped flow, `1 + dtheta/dtau`.
pub fn damped_instantaneous_frequency(
    a: f64,
    params: &DimensionlessParams,
    branch: Branch,
    mode: SpinTermMode,
) -> Result<f64, AveragingError> {
    let inv_q = params.inverse_q();
    Ok(1.0 - 0.125 * inv_q * inv_q + spin_phase_term(a, params, branch, mode)?)
}

/// One damped-prediction sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampedPoint {
    pub tau: f64,
    pub a: f64,
    pub omega_inst: f64,
}

/// Closed-form damped prediction on a time grid: exponential envelope plus
/// the instantaneous frequency from the phase equation.
pub fn damped_prediction(
    params: &DimensionlessParams,
    a0: f64,
    taus: &[f64],
    branch: Branch,
    mode: SpinTermMode,
) -> Result<Vec<DampedPoint>, AveragingError> {
    if params.drive_on {
        return Err(AveragingError::DriveIsOn);
    }
    if !(a0 > 0.0) {
        return Err(AveragingError::NonPositiveAmplitude(a0));
    }
    let half_inv_q = 0.5 * params.inverse_q();
    taus.iter()
        .map(|&tau| {
            let a = a0 * (-tau * half_inv_q).exp();
            Ok(DampedPoint {
                tau,
                a,
                omega_inst: damped_instantaneous_frequency(a, params, branch, mode)?,
            })
        })
        .collect()
}

/// Fixed-step RK4 integration of the slow flow (driven or damped according
/// to the drive switch), sampled every `dt`.
pub fn integrate_slow_flow(
    start: SlowState,
    params: &DimensionlessParams,
    tau_end: f64,
    dt: f64,
    branch: Branch,
    mode: SpinTermMode,
) -> Result<Vec<SlowState>, AveragingError> {
    let rhs = |s: &SlowState| -> Result<(f64, f64), AveragingError> {
        if params.drive_on {
            slow_flow_driven(s, params, branch, mode)
        } else {
            slow_flow_damped(s, params, branch, mode)
        }
    };
    let n = ((tau_end - start.tau) / dt).ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(n + 1);
    out.push(start);
    let mut s = start;
    for i in 0..n {
        let (k1a, k1t) = rhs(&s)?;
        let mid1 = SlowState { tau: s.tau + 0.5 * dt, a: s.a + 0.5 * dt * k1a, theta: s.theta + 0.5 * dt * k1t };
        let (k2a, k2t) = rhs(&mid1)?;
        let mid2 = SlowState { tau: s.tau + 0.5 * dt, a: s.a + 0.5 * dt * k2a, theta: s.theta + 0.5 * dt * k2t };
        let (k3a, k3t) = rhs(&mid2)?;
        let end = SlowState { tau: s.tau + dt, a: s.a + dt * k3a, theta: s.theta + dt * k3t };
        let (k4a, k4t) = rhs(&end)?;
        s = SlowState {
            tau: start.tau + (i + 1) as f64 * dt,
            a: s.a + dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a),
            theta: s.theta + dt / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t),
        };
        out.push(s);
    }
    Ok(out)
}

/// Per-point outcome of the stationary-response solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointFlag {
    Ok,
    /// No stationary amplitude found in the search bracket.
    NoRoot,
    /// Several stationary amplitudes; the one nearest 1 was kept.
    MultipleRoots(u8),
}

impl std::fmt::Display for PointFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PointFlag::Ok => write!(f, "ok"),
            PointFlag::NoRoot => write!(f, "no-root"),
            PointFlag::MultipleRoots(n) => write!(f, "multi({n})"),
        }
    }
}

/// Analytic stationary response curve with its quadratic approximation.
#[derive(Debug, Clone)]
pub struct StationaryCurve {
    pub rho: Vec<f64>,
    /// Stationary amplitude from the full averaged balance, where solvable.
    pub amplitude: Vec<Option<f64>>,
    /// Quadratic (weak-response) approximation a = 1 + beta(rho).
    pub quadratic: Vec<f64>,
    pub flags: Vec<PointFlag>,
    /// Located peak (rho_1, a_max) of the solved branch, if interior.
    pub peak: Option<(f64, f64)>,
    /// max |a - 1| over the grid; the quadratic form assumes this is small.
    pub beta_max: f64,
    pub branch: Branch,
    pub mode: SpinTermMode,
}

impl StationaryCurve {
    /// Export as CSV (`rho,a_analytic,a_quadratic_approx,flags`).
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "rho,a_analytic,a_quadratic_approx,flags")?;
        for i in 0..self.rho.len() {
            match self.amplitude[i] {
                Some(a) => writeln!(
                    w,
                    "{:.11e},{:.11e},{:.11e},{}",
                    self.rho[i], a, self.quadratic[i], self.flags[i]
                )?,
                None => writeln!(
                    w,
                    "{:.11e},,{:.11e},{}",
                    self.rho[i], self.quadratic[i], self.flags[i]
                )?,
            }
        }
        Ok(())
    }
}

/// Amplitude balance of the stationary averaged flow at one detuning:
/// roots in `a` of
/// `1/(a^2 (2+rho)^2) = 1/4 + Q^2 (1/8Q^2 + rho - spin(a))^2`
/// where spin(a) is the signed phase term. The bracket is a in [0.01, 2];
/// of several roots, the one nearest 1 is kept and the point is flagged.
pub fn stationary_response(
    params: &DimensionlessParams,
    rho_grid: &[f64],
    branch: Branch,
    mode: SpinTermMode,
) -> Result<StationaryCurve, AveragingError> {
    if params.delta != 0.0 {
        return Err(AveragingError::NonzeroDelta(params.delta));
    }
    let q = params.quality_factor;
    let inv_q = params.inverse_q();
    let q2 = if inv_q == 0.0 { f64::INFINITY } else { q * q };
    // Leading-order peak shift used by the quadratic approximation.
    let spin0 = -branch.sign() * 2.0 * params.lambda / std::f64::consts::PI;

    let mut amplitude = Vec::with_capacity(rho_grid.len());
    let mut quadratic = Vec::with_capacity(rho_grid.len());
    let mut flags = Vec::with_capacity(rho_grid.len());
    let mut beta_max: f64 = 0.0;

    for &rho in rho_grid {
        let balance = |a: f64| -> f64 {
            let spin = spin_phase_term(a, params, branch, mode).unwrap_or(f64::NAN);
            let det = 0.125 * inv_q * inv_q + rho - spin;
            1.0 / (a * a * (2.0 + rho) * (2.0 + rho)) - 0.25 - q2 * det * det
        };

        // Bracket scan: the balance is +inf at a -> 0 and negative past the
        // response peak; interior sign changes mark stationary amplitudes.
        const N_SCAN: usize = 256;
        let (a_lo, a_hi) = (0.01_f64, 2.0_f64);
        let mut roots: Vec<f64> = Vec::new();
        let mut prev_a = a_lo;
        let mut prev_f = balance(prev_a);
        for i in 1..=N_SCAN {
            let a = a_lo + (a_hi - a_lo) * i as f64 / N_SCAN as f64;
            let f = balance(a);
            if prev_f == 0.0 {
                roots.push(prev_a);
            } else if prev_f * f < 0.0 {
                roots.push(bisect(balance, prev_a, a, 1e-13));
            }
            prev_a = a;
            prev_f = f;
        }

        let beta = -0.5 * rho - 2.0 * q2 * (0.125 * inv_q * inv_q + rho - spin0).powi(2);
        quadratic.push(1.0 + beta);

        match roots.len() {
            0 => {
                amplitude.push(None);
                flags.push(PointFlag::NoRoot);
            }
            n => {
                let a = roots
                    .iter()
                    .copied()
                    .min_by(|x, y| {
                        (x - 1.0).abs().partial_cmp(&(y - 1.0).abs()).unwrap()
                    })
                    .unwrap();
                beta_max = beta_max.max((a - 1.0).abs());
                amplitude.push(Some(a));
                flags.push(if n == 1 { PointFlag::Ok } else { PointFlag::MultipleRoots(n as u8) });
            }
        }
    }

    // Peak of the solved curve by a parabola through the best grid triple.
    let peak = (|| {
        let (i_max, _) = amplitude
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.map(|v| (i, v)))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())?;
        if i_max == 0 || i_max + 1 >= rho_grid.len() {
            return None;
        }
        let (al, ac, ar) = (amplitude[i_max - 1]?, amplitude[i_max]?, amplitude[i_max + 1]?);
        parabolic_vertex(
            [rho_grid[i_max - 1], rho_grid[i_max], rho_grid[i_max + 1]],
            [al, ac, ar],
        )
    })();

    Ok(StationaryCurve {
        rho: rho_grid.to_vec(),
        amplitude,
        quadratic,
        flags,
        peak,
        beta_max,
        branch,
        mode,
    })
}

/// Closed-form peak location of the driven response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbativeShift {
    /// Peak without the spin, -1/(4 Q^2).
    pub rho0: f64,
    /// Spin-reversal displacement, -(branch sign) 2 lambda / pi.
    pub spin_shift: f64,
    /// Total peak position rho_1 = rho0 + spin_shift.
    pub rho1: f64,
}

/// Leading-order peak location `rho_1 = -1/(4Q^2) - s 2 lambda/pi`.
pub fn perturbative_shift(params: &DimensionlessParams, branch: Branch) -> PerturbativeShift {
    let inv_q = params.inverse_q();
    let rho0 = -0.25 * inv_q * inv_q;
    let spin_shift = -branch.sign() * 2.0 * params.lambda / std::f64::consts::PI;
    PerturbativeShift { rho0, spin_shift, rho1: rho0 + spin_shift }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn reference() -> DimensionlessParams {
        DimensionlessParams::new(8.5e-5, 2500.0, 280.0, 0.0, 100.0, 0.05).unwrap()
    }

    // Adaptive Simpson quadrature, used only as an independent oracle.
    fn simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
        fn rec<F: Fn(f64) -> f64 + Copy>(
            f: F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let err = left + right - whole;
            if depth == 0 || err.abs() <= 15.0 * tol {
                return left + right + err / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 40)
    }

    #[test]
    fn in_phase_averaging_integral_vanishes() {
        // The amplitude-equation spin integrand cos sin / sqrt(p^2 + cos^2)
        // averages to zero over a period.
        for p in [0.03, 0.112, 0.7, 2.5] {
            let f = move |x: f64| x.cos() * x.sin() / (p * p + x.cos() * x.cos()).sqrt();
            let v = simpson(f, 0.0, 2.0 * PI, 1e-14);
            assert!(v.abs() <= 1e-12, "residual {v} at p={p}");
        }
    }

    #[test]
    fn spin_term_spot_value_vs_quadrature() {
        // At a = 1 the reference set has p = 0.112.
        let p = reference();
        let term = spin_phase_term(1.0, &p, Branch::Aligned, SpinTermMode::Exact).unwrap();
        let pp = p.epsilon / p.chi;
        let integral = simpson(
            move |x: f64| x.cos() * x.cos() / (pp * pp + x.cos() * x.cos()).sqrt(),
            0.0,
            2.0 * PI,
            1e-14,
        );
        let want = -p.lambda / (2.0 * PI) * integral;
        assert!((term - want).abs() <= 1e-12 * want.abs(), "{term} vs {want}");
    }

    #[test]
    fn spin_term_is_bounded_and_signed() {
        let p = reference();
        for a in [0.5, 1.0, 10.0, 1e4] {
            let t = spin_phase_term(a, &p, Branch::Aligned, SpinTermMode::Exact).unwrap();
            assert!(t < 0.0, "aligned branch must lower the phase rate");
            assert!(t.abs() <= 2.0 * p.lambda / (PI * a) * 1.0001, "bound at a={a}");
            let ti = spin_phase_term(a, &p, Branch::Inverted, SpinTermMode::Exact).unwrap();
            assert_eq!(ti, -t);
        }
    }

    #[test]
    fn spin_term_modes_agree_for_small_p() {
        let mut p = reference();
        // p = eps/(a chi) = 0.05 at a = 1.
        p.epsilon = 0.05 * p.chi;
        for mode in [SpinTermMode::SmallP, SpinTermMode::Leading] {
            let exact = spin_phase_term(1.0, &p, Branch::Aligned, SpinTermMode::Exact).unwrap();
            let other = spin_phase_term(1.0, &p, Branch::Aligned, mode).unwrap();
            let rel = ((other - exact) / exact).abs();
            match mode {
                SpinTermMode::SmallP => assert!(rel <= 1e-4, "small-p rel {rel}"),
                _ => assert!(rel <= 5e-3, "leading rel {rel}"),
            }
        }
    }

    #[test]
    fn small_p_mode_refuses_large_p() {
        let p = reference();
        // a small enough that p = eps/(a chi) >= 1
        let a = p.epsilon / p.chi * 0.9;
        assert!(matches!(
            spin_phase_term(a, &p, Branch::Aligned, SpinTermMode::SmallP),
            Err(AveragingError::Elliptic(EllipticError::SmallPOutOfRange(_)))
        ));
    }

    #[test]
    fn driven_flow_rejects_bad_state() {
        let p = reference();
        let s = SlowState { tau: 0.0, a: 0.0, theta: 0.0 };
        assert!(matches!(
            slow_flow_driven(&s, &p, Branch::Aligned, SpinTermMode::Exact),
            Err(AveragingError::NonPositiveAmplitude(_))
        ));
        let mut pd = reference();
        pd.delta = 0.3;
        let s = SlowState { tau: 0.0, a: 1.0, theta: 0.0 };
        assert!(matches!(
            slow_flow_driven(&s, &pd, Branch::Aligned, SpinTermMode::Exact),
            Err(AveragingError::NonzeroDelta(_))
        ));
    }

    #[test]
    fn stationary_balance_without_spin_matches_closed_form() {
        // Independent closed form of the averaged linear response.
        let mut p = reference();
        p.lambda = 0.0;
        let q = p.quality_factor;
        let rho_grid: Vec<f64> = (0..81).map(|i| -2e-4 + 5e-6 * i as f64).collect();
        let curve = stationary_response(&p, &rho_grid, Branch::Aligned, SpinTermMode::Exact)
            .unwrap();
        for (i, &rho) in rho_grid.iter().enumerate() {
            let d = 1.0 / (8.0 * q * q) + rho;
            let want = 1.0 / ((2.0 + rho) * (0.25 + q * q * d * d).sqrt());
            let got = curve.amplitude[i].unwrap();
            assert!(
                (got - want).abs() <= 1e-10 * want,
                "rho={rho}: {got} vs {want}"
            );
            assert_eq!(curve.flags[i], PointFlag::Ok);
        }
        // Peak of the spinless curve sits at -1/(4 Q^2).
        let (rho1, a_max) = curve.peak.unwrap();
        assert!((rho1 + 2.5e-5).abs() < 1e-9, "rho1 = {rho1}");
        assert!((a_max - 1.0).abs() < 1e-3);
    }

    #[test]
    fn stationary_peak_shift_reference_set() {
        let p = reference();
        let rho_grid: Vec<f64> = (0..141).map(|i| -2.0e-4 + 2.0e-6 * i as f64).collect();
        let aligned = stationary_response(&p, &rho_grid, Branch::Aligned, SpinTermMode::Exact)
            .unwrap();
        let (rho1, _) = aligned.peak.unwrap();
        let shift = rho1 - (-2.5e-5);
        // The leading estimate is -2 lambda/pi; the exact elliptic form is
        // ~2% weaker at p = 0.112.
        let leading = -2.0 * p.lambda / PI;
        assert!(
            (shift - leading).abs() <= 0.05 * leading.abs(),
            "shift {shift} vs leading {leading}"
        );
        assert!(shift > leading, "exact form is weaker than the leading term");

        // Mirror image on the inverted branch.
        let inverted =
            stationary_response(&p, &rho_grid, Branch::Inverted, SpinTermMode::Exact).unwrap();
        let (rho1_inv, _) = inverted.peak.unwrap();
        assert!(
            (rho1_inv - (-2.5e-5) + shift).abs() <= 0.02 * shift.abs(),
            "inverted peak {rho1_inv} not mirrored"
        );
        assert!(aligned.beta_max < 0.01);
    }

    #[test]
    fn quadratic_approximation_tracks_full_solve() {
        let p = reference();
        let shift = perturbative_shift(&p, Branch::Aligned);
        let rho_grid: Vec<f64> = (0..41).map(|i| shift.rho1 - 4e-5 + 2e-6 * i as f64).collect();
        let curve =
            stationary_response(&p, &rho_grid, Branch::Aligned, SpinTermMode::Leading).unwrap();
        for (i, &rho) in rho_grid.iter().enumerate() {
            let full = curve.amplitude[i].unwrap();
            let quad = curve.quadratic[i];
            // Both are 1 + O(beta); their beta parts agree to a few percent.
            let (bf, bq) = (full - 1.0, quad - 1.0);
            assert!(
                (bf - bq).abs() <= 0.05 * bf.abs().max(1e-5),
                "rho={rho}: beta {bf} vs {bq}"
            );
        }
    }

    #[test]
    fn perturbative_shift_values() {
        let p = reference();
        let s = perturbative_shift(&p, Branch::Aligned);
        assert_eq!(s.rho0, -2.5e-5);
        assert!((s.spin_shift - (-5.411268065124441e-5)).abs() < 1e-18);
        assert!((s.rho1 - (-7.911268065124441e-5)).abs() < 1e-18);

        let mut p0 = reference();
        p0.lambda = 0.0;
        let s0 = perturbative_shift(&p0, Branch::Aligned);
        assert_eq!(s0.rho1, s0.rho0);

        // The two closed-form estimates differ by about ten percent; record
        // the ratio rather than pretending they coincide.
        let semi = crate::quasistatic::semiquantitative_shift(&p);
        let ratio = s.spin_shift / semi.shift_limit;
        assert!((ratio - 0.9003163161571061).abs() < 1e-12);
    }

    #[test]
    fn damped_flow_constant_frequency_without_spin() {
        let mut p = reference().with_drive(false);
        p.lambda = 0.0;
        let q = p.quality_factor;
        let s = SlowState { tau: 0.0, a: 1.0, theta: 0.0 };
        let (da, dtheta) = slow_flow_damped(&s, &p, Branch::Aligned, SpinTermMode::Exact).unwrap();
        assert_eq!(da, -0.5 / q);
        assert_eq!(dtheta, -1.0 / (8.0 * q * q));
        // 1 - 1/8Q^2 equals sqrt(1 - 1/4Q^2) to fourth order in 1/Q.
        let w = damped_instantaneous_frequency(1.0, &p, Branch::Aligned, SpinTermMode::Exact)
            .unwrap();
        assert!((w - (1.0 - 0.25 / (q * q)).sqrt()).abs() < 1e-8);
    }

    #[test]
    fn damped_frequency_decreases_with_time_on_aligned_branch() {
        let p = reference().with_drive(false);
        let taus: Vec<f64> = (0..=20).map(|i| i as f64 * 10.0).collect();
        let pred =
            damped_prediction(&p, 1.0, &taus, Branch::Aligned, SpinTermMode::Exact).unwrap();
        for w in pred.windows(2) {
            assert!(
                w[1].omega_inst < w[0].omega_inst,
                "frequency should drift down: {} -> {}",
                w[0].omega_inst,
                w[1].omega_inst
            );
        }
        // a(2Q) = 1/e.
        let at = damped_prediction(&p, 1.0, &[200.0], Branch::Aligned, SpinTermMode::Exact)
            .unwrap();
        assert!((at[0].a - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn damped_flow_demands_drive_off() {
        let p = reference();
        let s = SlowState { tau: 0.0, a: 1.0, theta: 0.0 };
        assert!(matches!(
            slow_flow_damped(&s, &p, Branch::Aligned, SpinTermMode::Exact),
            Err(AveragingError::DriveIsOn)
        ));
    }

    #[test]
    fn slow_flow_stationary_point_stays_put() {
        // Starting from the stationary amplitude and phase at the peak
        // detuning, the integrated envelope barely moves.
        let p = reference();
        let shift = perturbative_shift(&p, Branch::Aligned);
        let pp = p.with_rho(shift.rho1);
        let run = integrate_slow_flow(
            initial_slow_state(),
            &pp,
            10.0 * p.quality_factor,
            0.05,
            Branch::Aligned,
            SpinTermMode::Exact,
        )
        .unwrap();
        for s in &run {
            assert!((s.a - 1.0).abs() < 5e-3, "a wandered to {} at tau {}", s.a, s.tau);
        }
    }
}
