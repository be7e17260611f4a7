//! Extraction of stationary amplitudes, resonance curves, and instantaneous
//! frequencies from exact trajectories.
//!
//! The drive detuning shifts the resonance peak by parts in 10^5, so the
//! extractors here are built for small systematic error: extrema are refined
//! by local parabolic interpolation, zero crossings by linear interpolation,
//! and stationary amplitudes are averaged over many cycles after the
//! transient has been discarded.

use rayon::prelude::*;

use crate::dynamics::{
    initial_conditions, integrate, IntegratorSettings, Trajectory,
};
use crate::numerics::parabolic_vertex;
use crate::params::DimensionlessParams;
use crate::quasistatic::{quasistatic_moment, Branch};

/// Errors from trajectory analysis.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisError {
    /// Run shorter than the settling window plus a measurement window.
    TooShort { needed: f64, got: f64 },
    /// Not enough oscillation cycles after settling.
    TooFewCycles { cycles: usize },
    /// Cycle-to-cycle amplitude spread exceeds the stationarity bound.
    NonStationary { spread: f64 },
    /// Fewer than three upward zero crossings.
    TooFewCrossings { found: usize },
    /// Resonance sweeps need at least five grid points.
    GridTooSmall { points: usize },
}

impl std::fmt::Display for AnalysisError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AnalysisError::TooShort { needed, got } => {
                write!(f, "trajectory too short: needs tau span {needed}, got {got}")
            }
            AnalysisError::TooFewCycles { cycles } => {
                write!(f, "only {cycles} cycles in the measurement window, need 10")
            }
            AnalysisError::NonStationary { spread } => {
                write!(f, "amplitude not stationary: cycle spread {spread:.3e} > 1e-2")
            }
            AnalysisError::TooFewCrossings { found } => {
                write!(f, "needs at least 3 upward zero crossings, found {found}")
            }
            AnalysisError::GridTooSmall { points } => {
                write!(f, "sweep grid needs at least 5 points, got {points}")
            }
        }
    }
}

impl std::error::Error for AnalysisError {}

/// Stationary amplitude measurement with its quality diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryAmplitude {
    /// Mean refined extremum magnitude over the measurement window.
    pub amplitude: f64,
    /// (max - min) / mean of the per-extremum magnitudes.
    pub spread: f64,
    /// Number of full cycles that entered the average.
    pub cycles: usize,
    /// Set when the signal is indistinguishable from zero.
    pub degenerate: bool,
}

const STATIONARITY_BOUND: f64 = 1e-2;
const DEGENERATE_LEVEL: f64 = 1e-12;

/// Default settling: discard tau < 8 Q, by which the transient has decayed
/// by e^-4.
pub const DEFAULT_SETTLE_MULTIPLIER: f64 = 8.0;

/// Stationary amplitude of a driven run: discards `tau < settle * Q`,
/// refines every extremum of Z by a three-point parabola and averages the
/// magnitudes over at least ten cycles.
pub fn stationary_amplitude(
    traj: &Trajectory,
    settle_multiplier: f64,
) -> Result<StationaryAmplitude, AnalysisError> {
    let q = effective_settling_q(&traj.params);
    let t0 = traj.samples[0].tau;
    let span = traj.last().tau - t0;
    let needed = (settle_multiplier + 2.0) * q;
    if span < needed {
        return Err(AnalysisError::TooShort { needed, got: span });
    }
    let window_start = t0 + settle_multiplier * q;

    let zs: Vec<(f64, f64)> = traj
        .samples
        .iter()
        .filter(|s| s.tau >= window_start)
        .map(|s| (s.tau, s.z))
        .collect();

    let extrema = refined_extrema(&zs);
    if extrema.is_empty() {
        let peak = zs.iter().map(|&(_, z)| z.abs()).fold(0.0, f64::max);
        if peak < DEGENERATE_LEVEL {
            return Ok(StationaryAmplitude { amplitude: 0.0, spread: 0.0, cycles: 0, degenerate: true });
        }
        return Err(AnalysisError::TooFewCycles { cycles: 0 });
    }

    let mags: Vec<f64> = extrema.iter().map(|&(_, v)| v.abs()).collect();
    let mean = mags.iter().sum::<f64>() / mags.len() as f64;
    if mean < DEGENERATE_LEVEL {
        return Ok(StationaryAmplitude { amplitude: 0.0, spread: 0.0, cycles: 0, degenerate: true });
    }
    let cycles = extrema.len() / 2;
    if cycles < 10 {
        return Err(AnalysisError::TooFewCycles { cycles });
    }
    let max = mags.iter().cloned().fold(f64::MIN, f64::max);
    let min = mags.iter().cloned().fold(f64::MAX, f64::min);
    let spread = (max - min) / mean;
    if spread > STATIONARITY_BOUND {
        return Err(AnalysisError::NonStationary { spread });
    }
    Ok(StationaryAmplitude { amplitude: mean, spread, cycles, degenerate: false })
}

/// RMS-based amplitude (sqrt(2 <Z^2>)) over the same window; a cross-check
/// for the extremum-based measurement.
pub fn rms_amplitude(traj: &Trajectory, settle_multiplier: f64) -> f64 {
    let q = effective_settling_q(&traj.params);
    let window_start = traj.samples[0].tau + settle_multiplier * q;
    let (mut sum, mut n) = (0.0, 0usize);
    for s in traj.samples.iter().filter(|s| s.tau >= window_start) {
        sum += s.z * s.z;
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    (2.0 * sum / n as f64).sqrt()
}

// An infinite Q has no transient decay scale; fall back to a window that is
// long in cantilever periods.
fn effective_settling_q(params: &DimensionlessParams) -> f64 {
    if params.quality_factor.is_finite() {
        params.quality_factor
    } else {
        100.0
    }
}

/// All parabola-refined local extrema (tau, value) of a sampled signal.
fn refined_extrema(samples: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 1..samples.len().saturating_sub(1) {
        let (tl, yl) = samples[i - 1];
        let (tc, yc) = samples[i];
        let (tr, yr) = samples[i + 1];
        let is_max = yc >= yl && yc > yr;
        let is_min = yc <= yl && yc < yr;
        if !is_max && !is_min {
            continue;
        }
        let sign = if is_max { 1.0 } else { -1.0 };
        match parabolic_vertex([tl, tc, tr], [sign * yl, sign * yc, sign * yr]) {
            Some((tv, yv)) => out.push((tv, sign * yv)),
            None => out.push((tc, yc)), // flat triple; keep the sample
        }
    }
    out
}

/// Where the measured amplitudes came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveSource {
    ExactSimulation,
    Analytic,
    Quadratic,
}

/// Sampled stationary amplitude a(rho) with the located peak.
#[derive(Debug, Clone)]
pub struct ResonanceCurve {
    pub rho: Vec<f64>,
    /// Stationary amplitude per point; `None` marks a failed point.
    pub amplitude: Vec<Option<f64>>,
    /// Stationarity spread per point.
    pub spread: Vec<Option<f64>>,
    /// Failure description for gap points.
    pub failures: Vec<Option<String>>,
    /// Located peak (rho_1, a_max).
    pub peak: Option<(f64, f64)>,
    /// Set when the raw maximum sat on the grid edge ("peak-outside-grid").
    pub peak_at_edge: bool,
    pub source: CurveSource,
    pub branch: Branch,
}

impl ResonanceCurve {
    /// Export as CSV (`rho,amplitude,stationarity_spread`); failed points
    /// keep their row with empty fields.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "rho,amplitude,stationarity_spread")?;
        for i in 0..self.rho.len() {
            match (self.amplitude[i], self.spread[i]) {
                (Some(a), Some(s)) => {
                    writeln!(w, "{:.11e},{:.11e},{:.11e}", self.rho[i], a, s)?
                }
                _ => writeln!(w, "{:.11e},,", self.rho[i])?,
            }
        }
        Ok(())
    }
}

/// Sweep protocol knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    /// Integrate each point to tau = tau_end_multiplier * Q.
    pub tau_end_multiplier: f64,
    /// Discard tau < settle_multiplier * Q.
    pub settle_multiplier: f64,
    /// Integrator step override.
    pub step: Option<f64>,
    /// Output sampling of the underlying integrations. Finer than the
    /// trace default so extremum interpolation does not limit the peak fit.
    pub output_spacing: f64,
    /// Golden-section peak refinement on fresh simulations.
    pub refine: bool,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            tau_end_multiplier: 10.0,
            settle_multiplier: DEFAULT_SETTLE_MULTIPLIER,
            step: None,
            output_spacing: std::f64::consts::TAU / 128.0,
            refine: false,
        }
    }
}

fn measure_point(
    params: &DimensionlessParams,
    rho: f64,
    branch: Branch,
    settings: &SweepSettings,
) -> Result<StationaryAmplitude, String> {
    let p = params.with_rho(rho);
    let q = effective_settling_q(&p);
    let start = initial_conditions(&p, branch);
    let traj = integrate(
        &start,
        &p,
        settings.tau_end_multiplier * q,
        settings.output_spacing,
        &IntegratorSettings { step: settings.step },
    )
    .map_err(|e| e.to_string())?;
    stationary_amplitude(&traj, settings.settle_multiplier).map_err(|e| e.to_string())
}

/// Stationary resonance curve from exact simulations: one integration per
/// grid point, starting from the standard initial conditions of the given
/// branch. Points run in parallel; results are ordered by rho.
pub fn sweep_resonance(
    params: &DimensionlessParams,
    rho_min: f64,
    rho_max: f64,
    n_points: usize,
    branch: Branch,
    settings: &SweepSettings,
) -> Result<ResonanceCurve, AnalysisError> {
    if n_points < 5 {
        return Err(AnalysisError::GridTooSmall { points: n_points });
    }
    let rho: Vec<f64> = (0..n_points)
        .map(|i| rho_min + (rho_max - rho_min) * i as f64 / (n_points - 1) as f64)
        .collect();

    let results: Vec<Result<StationaryAmplitude, String>> = rho
        .par_iter()
        .map(|&r| measure_point(params, r, branch, settings))
        .collect();

    let mut amplitude = Vec::with_capacity(n_points);
    let mut spread = Vec::with_capacity(n_points);
    let mut failures = Vec::with_capacity(n_points);
    for r in results {
        match r {
            Ok(m) => {
                amplitude.push(Some(m.amplitude));
                spread.push(Some(m.spread));
                failures.push(None);
            }
            Err(e) => {
                amplitude.push(None);
                spread.push(None);
                failures.push(Some(e));
            }
        }
    }

    let (mut peak, mut peak_at_edge) = (None, false);
    if let Some((i_max, _)) = amplitude
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.map(|v| (i, v)))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
    {
        if i_max == 0 || i_max + 1 >= n_points {
            peak_at_edge = true;
        } else if let (Some(al), Some(ac), Some(ar)) =
            (amplitude[i_max - 1], amplitude[i_max], amplitude[i_max + 1])
        {
            peak = parabolic_vertex([rho[i_max - 1], rho[i_max], rho[i_max + 1]], [al, ac, ar]);
            if settings.refine {
                if let Some((r0, _)) = peak {
                    peak = golden_section_peak(
                        params,
                        branch,
                        settings,
                        (rho[i_max - 1]).max(r0 - (rho[1] - rho[0])),
                        (rho[i_max + 1]).min(r0 + (rho[1] - rho[0])),
                    )
                    .or(peak);
                }
            }
        }
    }

    Ok(ResonanceCurve {
        rho,
        amplitude,
        spread,
        failures,
        peak,
        peak_at_edge,
        source: CurveSource::ExactSimulation,
        branch,
    })
}

/// Golden-section maximization of the measured amplitude on fresh
/// simulations. Each probe costs a full integration.
fn golden_section_peak(
    params: &DimensionlessParams,
    branch: Branch,
    settings: &SweepSettings,
    mut lo: f64,
    mut hi: f64,
) -> Option<(f64, f64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let eval = |r: f64| measure_point(params, r, branch, settings).ok().map(|m| m.amplitude);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = eval(x1)?;
    let mut f2 = eval(x2)?;
    for _ in 0..16 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = eval(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = eval(x1)?;
        }
    }
    let r = 0.5 * (lo + hi);
    Some((r, f1.max(f2)))
}

/// Instantaneous frequency from upward zero crossings, one estimate per
/// full cycle, assigned to the interval midpoint.
#[derive(Debug, Clone)]
pub struct FrequencyTrack {
    /// Midpoints of consecutive upward-crossing pairs.
    pub times: Vec<f64>,
    /// 2 pi / period per pair.
    pub omega_inst: Vec<f64>,
    /// Per-cycle amplitude from refined extrema.
    pub amplitude: Vec<f64>,
}

impl FrequencyTrack {
    /// Export as CSV (`tau_mid,omega_inst,amplitude`).
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "tau_mid,omega_inst,amplitude")?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{:.11e},{:.11e},{:.11e}",
                self.times[i], self.omega_inst[i], self.amplitude[i]
            )?;
        }
        Ok(())
    }
}

/// Locate upward zero crossings of Z by linear interpolation and convert
/// each crossing pair into an instantaneous frequency sample.
pub fn instantaneous_frequency(traj: &Trajectory) -> Result<FrequencyTrack, AnalysisError> {
    let s = &traj.samples;
    let mut crossings = Vec::new();
    for i in 0..s.len().saturating_sub(1) {
        if s[i].z < 0.0 && s[i + 1].z >= 0.0 {
            let frac = s[i].z / (s[i].z - s[i + 1].z);
            crossings.push(s[i].tau + frac * (s[i + 1].tau - s[i].tau));
        }
    }
    if crossings.len() < 3 {
        return Err(AnalysisError::TooFewCrossings { found: crossings.len() });
    }

    let pairs: Vec<(f64, f64)> = s.iter().map(|x| (x.tau, x.z)).collect();
    let extrema = refined_extrema(&pairs);

    let mut times = Vec::with_capacity(crossings.len() - 1);
    let mut omega = Vec::with_capacity(crossings.len() - 1);
    let mut amplitude = Vec::with_capacity(crossings.len() - 1);
    let mut e_idx = 0;
    for w in crossings.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        times.push(0.5 * (t0 + t1));
        omega.push(std::f64::consts::TAU / (t1 - t0));
        // max and min refined extrema inside the cycle
        let (mut hi, mut lo) = (f64::NAN, f64::NAN);
        while e_idx < extrema.len() && extrema[e_idx].0 < t0 {
            e_idx += 1;
        }
        let mut j = e_idx;
        while j < extrema.len() && extrema[j].0 < t1 {
            let v = extrema[j].1;
            if !(v <= hi) {
                hi = v.max(if hi.is_nan() { v } else { hi });
            }
            if !(v >= lo) {
                lo = v.min(if lo.is_nan() { v } else { lo });
            }
            j += 1;
        }
        if hi.is_nan() || lo.is_nan() {
            // no interior extremum resolved; fall back to the raw samples
            let m = s
                .iter()
                .filter(|x| x.tau >= t0 && x.tau < t1)
                .map(|x| x.z.abs())
                .fold(0.0, f64::max);
            amplitude.push(m);
        } else {
            amplitude.push(0.5 * (hi - lo));
        }
    }
    Ok(FrequencyTrack { times, omega_inst: omega, amplitude })
}

/// One adiabaticity sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdiabaticityRow {
    pub tau: f64,
    /// Moment projection on the branch-signed unit effective field.
    pub alignment: f64,
    pub mz_exact: f64,
    pub mz_quasistatic: f64,
}

/// Summary of how faithfully the moment followed the effective field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdiabaticityReport {
    /// min over samples of the branch-signed M . b_hat.
    pub min_alignment: f64,
    /// RMS of Mz - Mz(quasi-static) over the run.
    pub rms_mz_deviation: f64,
    /// Branch detected from the initial sample.
    pub branch: Branch,
}

/// Per-sample adiabaticity trace. The branch is taken from the sign of the
/// initial projection so inverted runs are measured against their own
/// manifold.
pub fn adiabaticity_trace(traj: &Trajectory, params: &DimensionlessParams) -> Vec<AdiabaticityRow> {
    let branch = detect_branch(traj, params);
    let s = branch.sign();
    traj.samples
        .iter()
        .map(|st| {
            let b = [params.epsilon, 0.0, params.delta - params.chi * st.z];
            let norm = (b[0] * b[0] + b[2] * b[2]).sqrt();
            let align = s * (st.m[0] * b[0] + st.m[1] * b[1] + st.m[2] * b[2]) / norm;
            let mqs = quasistatic_moment(st.z, params, branch);
            AdiabaticityRow {
                tau: st.tau,
                alignment: align,
                mz_exact: st.m[2],
                mz_quasistatic: mqs[2],
            }
        })
        .collect()
}

fn detect_branch(traj: &Trajectory, params: &DimensionlessParams) -> Branch {
    let st = &traj.samples[0];
    let b = [params.epsilon, 0.0, params.delta - params.chi * st.z];
    let proj = st.m[0] * b[0] + st.m[1] * b[1] + st.m[2] * b[2];
    if proj >= 0.0 {
        Branch::Aligned
    } else {
        Branch::Inverted
    }
}

/// Minimum alignment and RMS moment deviation for a run.
pub fn adiabaticity_report(traj: &Trajectory, params: &DimensionlessParams) -> AdiabaticityReport {
    let rows = adiabaticity_trace(traj, params);
    let min_alignment = rows.iter().map(|r| r.alignment).fold(f64::MAX, f64::min);
    let ss: f64 = rows
        .iter()
        .map(|r| (r.mz_exact - r.mz_quasistatic).powi(2))
        .sum();
    AdiabaticityReport {
        min_alignment,
        rms_mz_deviation: (ss / rows.len() as f64).sqrt(),
        branch: detect_branch(traj, params),
    }
}

/// CSV export of an adiabaticity trace
/// (`tau,alignment,Mz_exact,Mz_quasistatic`).
pub fn write_adiabaticity_csv<W: std::io::Write>(
    rows: &[AdiabaticityRow],
    w: &mut W,
) -> std::io::Result<()> {
    writeln!(w, "tau,alignment,Mz_exact,Mz_quasistatic")?;
    for r in rows {
        writeln!(
            w,
            "{:.11e},{:.11e},{:.11e},{:.11e}",
            r.tau, r.alignment, r.mz_exact, r.mz_quasistatic
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SystemState;

    fn reference() -> DimensionlessParams {
        DimensionlessParams::new(8.5e-5, 2500.0, 280.0, 0.0, 100.0, 0.05).unwrap()
    }

    fn synthetic_trajectory(
        params: &DimensionlessParams,
        tau_end: f64,
        dt: f64,
        f: impl Fn(f64) -> f64,
    ) -> Trajectory {
        let n = (tau_end / dt).ceil() as usize;
        let samples = (0..=n)
            .map(|i| {
                let tau = i as f64 * dt;
                SystemState { tau, z: f(tau), v: 0.0, m: [1.0, 0.0, 0.0] }
            })
            .collect();
        Trajectory {
            params: params.clone(),
            samples,
            output_spacing: dt,
            step: dt,
            wall_time: 0.0,
        }
    }

    #[test]
    fn amplitude_of_pure_tone() {
        let p = reference();
        let traj = synthetic_trajectory(&p, 1100.0, std::f64::consts::TAU / 64.0, |t| {
            0.73 * (1.0003 * t).sin()
        });
        let m = stationary_amplitude(&traj, 8.0).unwrap();
        assert!((m.amplitude - 0.73).abs() < 1e-4, "amplitude {}", m.amplitude);
        assert!(m.spread < 1e-3);
        assert!(m.cycles >= 10);
        assert!(!m.degenerate);

        let rms = rms_amplitude(&traj, 8.0);
        assert!((rms - 0.73).abs() < 2e-3, "rms {rms}");
    }

    #[test]
    fn amplitude_rejects_short_and_nonstationary_runs() {
        let p = reference();
        let short = synthetic_trajectory(&p, 500.0, 0.1, |t| t.sin());
        assert!(matches!(
            stationary_amplitude(&short, 8.0),
            Err(AnalysisError::TooShort { .. })
        ));

        let decaying = synthetic_trajectory(&p, 1100.0, 0.1, |t| {
            (1.0 + 0.3 * (-t / 300.0).exp()) * t.sin()
        });
        assert!(matches!(
            stationary_amplitude(&decaying, 8.0),
            Err(AnalysisError::NonStationary { .. })
        ));
    }

    #[test]
    fn amplitude_flags_degenerate_silence() {
        let p = reference();
        let silent = synthetic_trajectory(&p, 1100.0, 0.1, |_| 0.0);
        let m = stationary_amplitude(&silent, 8.0).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.amplitude, 0.0);
    }

    #[test]
    fn amplitude_stable_under_longer_settling() {
        // Doubling the settle window beyond 8 changes nothing measurable.
        let p = reference();
        let traj = synthetic_trajectory(&p, 2000.0, std::f64::consts::TAU / 64.0, |t| {
            0.5 * (0.99 * t).cos()
        });
        let a8 = stationary_amplitude(&traj, 8.0).unwrap().amplitude;
        let a16 = stationary_amplitude(&traj, 16.0).unwrap().amplitude;
        assert!((a8 - a16).abs() <= 1e-3 * a8);
    }

    #[test]
    fn frequency_of_pure_tone() {
        let p = reference();
        let traj = synthetic_trajectory(&p, 400.0, std::f64::consts::TAU / 32.0, |t| {
            (0.97 * t).cos()
        });
        let track = instantaneous_frequency(&traj).unwrap();
        assert!(track.times.len() > 50);
        for (&t, &w) in track.times.iter().zip(&track.omega_inst) {
            assert!((w - 0.97).abs() < 1e-4, "omega {w} at {t}");
        }
        for &a in &track.amplitude {
            assert!((a - 1.0).abs() < 1e-3, "cycle amplitude {a}");
        }
    }

    #[test]
    fn frequency_of_slow_chirp() {
        // omega(t) = 0.9 + 1e-6 t: chirp rate ~ 7e-6 per cycle.
        let p = reference();
        let c = 1e-6;
        let traj = synthetic_trajectory(&p, 600.0, std::f64::consts::TAU / 64.0, |t| {
            (0.9 * t + 0.5 * c * t * t).sin()
        });
        let track = instantaneous_frequency(&traj).unwrap();
        for (&t, &w) in track.times.iter().zip(&track.omega_inst) {
            let want = 0.9 + c * t;
            assert!((w - want).abs() <= 1e-3 * want, "omega {w} vs {want} at {t}");
        }
    }

    #[test]
    fn frequency_needs_three_crossings() {
        let p = reference();
        let traj = synthetic_trajectory(&p, 8.0, 0.1, |t| t.cos());
        assert!(matches!(
            instantaneous_frequency(&traj),
            Err(AnalysisError::TooFewCrossings { .. })
        ));
    }

    #[test]
    fn sweep_matches_linear_resonator_without_spin() {
        let mut p = reference();
        p.lambda = 0.0;
        // Far off the peak the starting state is well away from the
        // stationary orbit; settle long enough that the transient is below
        // the comparison tolerance.
        let settings = SweepSettings {
            tau_end_multiplier: 16.0,
            settle_multiplier: 14.0,
            ..SweepSettings::default()
        };
        let curve = sweep_resonance(&p, -4e-3, 4e-3, 9, Branch::Aligned, &settings).unwrap();
        for (i, &rho) in curve.rho.iter().enumerate() {
            let w = 1.0 + rho;
            let q = p.quality_factor;
            let want = (1.0 / q) / (((1.0 - w * w).powi(2) + (w / q).powi(2)).sqrt());
            let got = curve.amplitude[i].unwrap();
            assert!(
                (got - want).abs() <= 1e-3 * want,
                "rho={rho}: {got} vs {want}"
            );
        }
        assert!(curve.peak.is_some());
    }

    #[test]
    fn amplitude_far_off_resonance() {
        // At rho = 0.1 the stationary amplitude is ~5e-4 while the start
        // state has amplitude 1; settle until the transient is below the
        // comparison tolerance.
        let mut p = reference();
        p.lambda = 0.0;
        let p = p.with_rho(0.1);
        let q = p.quality_factor;
        let start = initial_conditions(&p, Branch::Aligned);
        let traj = integrate(
            &start,
            &p,
            32.0 * q,
            std::f64::consts::TAU / 128.0,
            &IntegratorSettings::default(),
        )
        .unwrap();
        let m = stationary_amplitude(&traj, 30.0).unwrap();
        let w = 1.1f64;
        let want = (1.0 / q) / (((1.0 - w * w).powi(2) + (w / q).powi(2)).sqrt());
        assert!(
            (m.amplitude - want).abs() <= 3e-3 * want,
            "amplitude {} vs closed form {want}",
            m.amplitude
        );
    }

    #[test]
    fn golden_section_refinement_smoke() {
        // Cheap protocol; only exercises the refinement path.
        let mut p = reference();
        p.lambda = 0.0;
        let settings = SweepSettings {
            tau_end_multiplier: 3.0,
            settle_multiplier: 1.0,
            refine: true,
            ..SweepSettings::default()
        };
        let curve = sweep_resonance(&p, -3e-3, 3e-3, 7, Branch::Aligned, &settings).unwrap();
        let (rho1, a_max) = curve.peak.unwrap();
        assert!(rho1.abs() < 1e-3, "refined peak {rho1}");
        assert!(a_max > 0.5);
    }

    #[test]
    fn sweep_rejects_tiny_grids() {
        let p = reference();
        assert!(matches!(
            sweep_resonance(&p, 0.0, 1e-4, 4, Branch::Aligned, &SweepSettings::default()),
            Err(AnalysisError::GridTooSmall { .. })
        ));
    }

    #[test]
    fn adiabaticity_reference_vs_weak_field() {
        let settings = SweepSettings::default();
        let run = |p: &DimensionlessParams| {
            let start = initial_conditions(p, Branch::Aligned);
            integrate(
                &start,
                &p.with_rho(-7.9e-5),
                150.0,
                settings.output_spacing,
                &IntegratorSettings::default(),
            )
            .unwrap()
        };
        let p_ref = reference();
        let strong = adiabaticity_report(&run(&p_ref), &p_ref);
        assert!(strong.min_alignment >= 0.99, "alignment {}", strong.min_alignment);
        assert!(strong.rms_mz_deviation <= 0.02);
        assert_eq!(strong.branch, Branch::Aligned);

        let mut p_weak = reference();
        p_weak.epsilon = 28.0;
        let weak = adiabaticity_report(&run(&p_weak), &p_weak);
        assert!(weak.min_alignment < 0.99, "alignment {}", weak.min_alignment);
        assert!(weak.rms_mz_deviation >= 5.0 * strong.rms_mz_deviation);
    }

    #[test]
    fn adiabaticity_of_static_spin() {
        // Nearly static field (tiny chi), moment exactly on it: alignment
        // stays at one.
        let p = DimensionlessParams::new(0.0, 1e-9, 50.0, 0.0, 100.0, 0.0)
            .unwrap()
            .with_drive(false);
        let start = SystemState { tau: 0.0, z: -1.0, v: 0.0, m: [1.0, 0.0, 0.0] };
        let traj = integrate(&start, &p, 50.0, 0.5, &IntegratorSettings::default()).unwrap();
        let rep = adiabaticity_report(&traj, &p);
        assert!((rep.min_alignment - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverted_run_reports_against_its_own_branch() {
        let p = reference();
        let start = initial_conditions(&p, Branch::Inverted);
        let traj = integrate(
            &start,
            &p.with_rho(-2.5e-5),
            150.0,
            std::f64::consts::TAU / 128.0,
            &IntegratorSettings::default(),
        )
        .unwrap();
        let rep = adiabaticity_report(&traj, &p);
        assert_eq!(rep.branch, Branch::Inverted);
        assert!(rep.min_alignment >= 0.99, "alignment {}", rep.min_alignment);
    }
}
