//! Command-line driver: config ingestion, experiment orchestration and CSV
//! emission for the OSCAR MRFM simulator.
//!
//! Subcommands: `trace` (one exact trajectory plus its adiabaticity trace),
//! `sweep` (stationary resonance curve versus detuning, exact and analytic),
//! `damped` (ring-down frequency drift with the drive off), and `estimate`
//! (closed-form frequency-shift numbers from a physical setup).
//!
//! Exit codes: 0 success, 1 numerical failure, 2 usage or config error.

mod output;

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use oscar_core::analysis::{
    adiabaticity_report, adiabaticity_trace, instantaneous_frequency, sweep_resonance,
    write_adiabaticity_csv, SweepSettings,
};
use oscar_core::averaging::{
    damped_prediction, perturbative_shift, stationary_response, DampedPoint, SpinTermMode,
};
use oscar_core::config::{config_hash, parse_config, Config};
use oscar_core::dynamics::{initial_conditions, integrate, IntegratorSettings};
use oscar_core::quasistatic::{semiquantitative_shift, Branch};
use oscar_core::DimensionlessParams;

use output::{stamped, write_atomic, Provenance};

#[derive(Parser)]
#[command(
    name = "oscar",
    version,
    about = "Cantilever-driven adiabatic spin reversal simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one exact trajectory and write it with its adiabaticity trace
    Trace(TraceArgs),
    /// Map the stationary amplitude against drive detuning
    Sweep(SweepArgs),
    /// Ring-down: instantaneous frequency of free damped oscillations
    Damped(DampedArgs),
    /// Closed-form frequency-shift estimates from a physical setup
    Estimate(EstimateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file ([physical] or [dimensionless] block)
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override a config key, e.g. --set Q=50 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Integrator step size override
    #[arg(long)]
    step: Option<f64>,
    /// Settling window in units of Q: discard tau < N*Q in amplitude fits
    #[arg(long, value_name = "N", default_value_t = 8.0)]
    settle: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BranchArg {
    Aligned,
    Inverted,
}

impl From<BranchArg> for Branch {
    fn from(b: BranchArg) -> Branch {
        match b {
            BranchArg::Aligned => Branch::Aligned,
            BranchArg::Inverted => Branch::Inverted,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BranchSelect {
    Aligned,
    Inverted,
    Both,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Integration end time (default 10 Q)
    #[arg(long)]
    tau_end: Option<f64>,
    /// Output sample spacing (default 2 pi / 32)
    #[arg(long)]
    spacing: Option<f64>,
    /// Initial moment branch
    #[arg(long, value_enum, default_value_t = BranchArg::Aligned)]
    branch: BranchArg,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Lower end of the detuning grid
    #[arg(long, allow_hyphen_values = true)]
    rho_min: f64,
    /// Upper end of the detuning grid
    #[arg(long, allow_hyphen_values = true)]
    rho_max: f64,
    /// Number of grid points
    #[arg(long, default_value_t = 41)]
    points: usize,
    /// Branch(es) to sweep
    #[arg(long, value_enum, default_value_t = BranchSelect::Aligned)]
    branch: BranchSelect,
    /// Per-point integration end time (default 10 Q)
    #[arg(long)]
    tau_end: Option<f64>,
    /// Golden-section peak refinement on fresh simulations
    #[arg(long)]
    refine: bool,
}

#[derive(Args)]
struct DampedArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Integration end time (default 4 Q)
    #[arg(long)]
    tau_end: Option<f64>,
    /// Quality factors to run, e.g. --q-list 50,100,200 (default: config Q)
    #[arg(long, value_delimiter = ',')]
    q_list: Vec<f64>,
    /// Initial moment branch
    #[arg(long, value_enum, default_value_t = BranchArg::Aligned)]
    branch: BranchArg,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: CommonArgs,
}

enum RunError {
    /// Usage/config problems: exit 2.
    Config(String),
    /// Numerical or I/O failure during the run: exit 1.
    Runtime(String),
}

impl RunError {
    fn io(e: std::io::Error) -> Self {
        RunError::Runtime(format!("i/o error: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Trace(args) => run_trace(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Damped(args) => run_damped(args),
        Command::Estimate(args) => run_estimate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(RunError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(common: &CommonArgs, command: &'static str) -> Result<(Config, Provenance), RunError> {
    let text = std::fs::read_to_string(&common.config).map_err(|e| {
        RunError::Config(format!("cannot read config {}: {e}", common.config.display()))
    })?;
    let config = parse_config(&text, &common.set)
        .map_err(|e| RunError::Config(format!("{}: {e}", common.config.display())))?;
    let prov = Provenance { command, config_hash: config_hash(&text, &common.set) };
    Ok((config, prov))
}

fn settling_scale(params: &DimensionlessParams) -> f64 {
    if params.quality_factor.is_finite() {
        params.quality_factor
    } else {
        100.0
    }
}

fn run_trace(args: TraceArgs) -> Result<(), RunError> {
    let (config, prov) = load(&args.common, "trace")?;
    let params = config.dimensionless().map_err(|e| RunError::Config(e.to_string()))?;
    let branch: Branch = args.branch.into();
    let tau_end = args.tau_end.unwrap_or(10.0 * settling_scale(&params));
    let spacing = args.spacing.unwrap_or(TAU / 32.0);
    let settings = IntegratorSettings { step: args.common.step };
    let start = initial_conditions(&params, branch);

    let traj = match integrate(&start, &params, tau_end, spacing, &settings) {
        Ok(t) => t,
        Err(failure) => {
            // Keep what was produced, flagged in a footer row.
            let body = stamped(&prov, |buf| {
                failure.partial.write_csv(buf)?;
                writeln!(buf, "# INCOMPLETE: {}", failure.error)
            })
            .map_err(RunError::io)?;
            write_atomic(&args.common.out.join("trajectory.csv"), &body)
                .map_err(RunError::io)?;
            return Err(RunError::Runtime(format!(
                "integration aborted: {} (partial trajectory.csv written)",
                failure.error
            )));
        }
    };

    let body = stamped(&prov, |buf| traj.write_csv(buf)).map_err(RunError::io)?;
    write_atomic(&args.common.out.join("trajectory.csv"), &body).map_err(RunError::io)?;

    let rows = adiabaticity_trace(&traj, &params);
    let body = stamped(&prov, |buf| write_adiabaticity_csv(&rows, buf)).map_err(RunError::io)?;
    write_atomic(&args.common.out.join("adiabaticity.csv"), &body).map_err(RunError::io)?;

    let report = adiabaticity_report(&traj, &params);
    println!(
        "trace: {} samples to tau = {:.11e} ({} branch)",
        traj.samples.len(),
        traj.last().tau,
        report.branch
    );
    println!(
        "adiabaticity: min alignment = {:.11e}, rms Mz deviation = {:.11e}",
        report.min_alignment, report.rms_mz_deviation
    );
    Ok(())
}

fn branch_list(sel: BranchSelect) -> Vec<Branch> {
    match sel {
        BranchSelect::Aligned => vec![Branch::Aligned],
        BranchSelect::Inverted => vec![Branch::Inverted],
        BranchSelect::Both => vec![Branch::Aligned, Branch::Inverted],
    }
}

fn run_sweep(args: SweepArgs) -> Result<(), RunError> {
    let (config, prov) = load(&args.common, "sweep")?;
    let params = config.dimensionless().map_err(|e| RunError::Config(e.to_string()))?;
    let q_scale = settling_scale(&params);
    let tau_end = args.tau_end.unwrap_or(10.0 * q_scale);
    let sweep_settings = SweepSettings {
        tau_end_multiplier: tau_end / q_scale,
        settle_multiplier: args.common.settle,
        step: args.common.step,
        refine: args.refine,
        ..SweepSettings::default()
    };
    let rho_grid: Vec<f64> = (0..args.points)
        .map(|i| {
            args.rho_min
                + (args.rho_max - args.rho_min) * i as f64 / (args.points - 1).max(1) as f64
        })
        .collect();

    let mut summary = String::new();
    let semi = semiquantitative_shift(&params);

    for branch in branch_list(args.branch) {
        let curve = sweep_resonance(
            &params,
            args.rho_min,
            args.rho_max,
            args.points,
            branch,
            &sweep_settings,
        )
        .map_err(|e| RunError::Runtime(e.to_string()))?;

        let body = stamped(&prov, |buf| curve.write_csv(buf)).map_err(RunError::io)?;
        write_atomic(&args.common.out.join(format!("resonance_exact_{branch}.csv")), &body)
            .map_err(RunError::io)?;

        let analytic = stationary_response(&params, &rho_grid, branch, SpinTermMode::Exact)
            .map_err(|e| RunError::Runtime(e.to_string()))?;
        let body = stamped(&prov, |buf| analytic.write_csv(buf)).map_err(RunError::io)?;
        write_atomic(
            &args.common.out.join(format!("resonance_analytic_{branch}.csv")),
            &body,
        )
        .map_err(RunError::io)?;

        let pert = perturbative_shift(&params, branch);
        let rho1_semi = semi.rho0 + branch.sign() * semi.shift;
        writeln!(summary, "[{branch}]").unwrap();
        match curve.peak {
            Some((rho1, a_max)) => {
                writeln!(summary, "rho1_exact        = {rho1:.11e}").unwrap();
                writeln!(summary, "a_max_exact       = {a_max:.11e}").unwrap();
                writeln!(summary, "rho1_perturbative = {:.11e}", pert.rho1).unwrap();
                writeln!(summary, "rho1_semiquant    = {rho1_semi:.11e}").unwrap();
                if let Some((rho1_an, _)) = analytic.peak {
                    writeln!(summary, "rho1_analytic     = {rho1_an:.11e}").unwrap();
                }
                writeln!(summary, "exact_vs_perturbative = {:.11e}", (rho1 - pert.rho1).abs())
                    .unwrap();
                writeln!(summary, "exact_vs_semiquant    = {:.11e}", (rho1 - rho1_semi).abs())
                    .unwrap();
                writeln!(
                    summary,
                    "perturbative_vs_semiquant = {:.11e}",
                    (pert.rho1 - rho1_semi).abs()
                )
                .unwrap();
            }
            None => {
                let why =
                    if curve.peak_at_edge { "peak-outside-grid" } else { "peak-not-located" };
                writeln!(summary, "rho1_exact        = {why}").unwrap();
                writeln!(summary, "rho1_perturbative = {:.11e}", pert.rho1).unwrap();
                writeln!(summary, "rho1_semiquant    = {rho1_semi:.11e}").unwrap();
            }
        }
        let gaps = curve.failures.iter().flatten().count();
        if gaps > 0 {
            writeln!(summary, "failed_points     = {gaps}").unwrap();
            for (i, f) in curve.failures.iter().enumerate() {
                if let Some(reason) = f {
                    writeln!(summary, "#   rho = {:.11e}: {reason}", curve.rho[i]).unwrap();
                }
            }
        }
        writeln!(summary).unwrap();
    }

    print!("{summary}");
    let body = stamped(&prov, |buf| buf.write_all(summary.as_bytes())).map_err(RunError::io)?;
    write_atomic(&args.common.out.join("summary.txt"), &body).map_err(RunError::io)?;
    Ok(())
}

fn format_q(q: f64) -> String {
    if q.fract() == 0.0 && q.abs() < 1e9 {
        format!("{q:.0}")
    } else {
        format!("{q}")
    }
}

fn run_damped(args: DampedArgs) -> Result<(), RunError> {
    let (config, prov) = load(&args.common, "damped")?;
    let base = config
        .dimensionless()
        .map_err(|e| RunError::Config(e.to_string()))?
        .with_drive(false);
    let branch: Branch = args.branch.into();
    let qs = if args.q_list.is_empty() { vec![base.quality_factor] } else { args.q_list.clone() };

    let mut summary = String::new();
    for &q in &qs {
        if !(q > 0.0) {
            return Err(RunError::Config(format!("quality factor must be positive, got {q}")));
        }
        let mut params = base.clone();
        params.quality_factor = q;
        let tau_end = args.tau_end.unwrap_or(4.0 * settling_scale(&params));
        let label = format_q(q);

        let start = initial_conditions(&params, branch);
        let traj = integrate(
            &start,
            &params,
            tau_end,
            TAU / 128.0,
            &IntegratorSettings { step: args.common.step },
        )
        .map_err(|e| RunError::Runtime(format!("Q = {label}: {e}")))?;
        let track = instantaneous_frequency(&traj)
            .map_err(|e| RunError::Runtime(format!("Q = {label}: {e}")))?;

        let body = stamped(&prov, |buf| track.write_csv(buf)).map_err(RunError::io)?;
        write_atomic(&args.common.out.join(format!("freq_exact_Q{label}.csv")), &body)
            .map_err(RunError::io)?;

        // Prediction on the same time grid. The exact elliptic form is the
        // default; the truncated small-p form refuses once p reaches 1 and
        // the refusal is recorded in the summary.
        let exact_pred =
            damped_prediction(&params, 1.0, &track.times, branch, SpinTermMode::Exact)
                .map_err(|e| RunError::Runtime(format!("Q = {label}: {e}")))?;
        let body =
            stamped(&prov, |buf| write_damped_csv(&exact_pred, buf)).map_err(RunError::io)?;
        write_atomic(&args.common.out.join(format!("freq_predicted_Q{label}.csv")), &body)
            .map_err(RunError::io)?;

        let dev_exact = max_rel_deviation(&track.omega_inst, &exact_pred);
        writeln!(summary, "[Q = {label}]").unwrap();
        writeln!(summary, "points               = {}", track.times.len()).unwrap();
        writeln!(summary, "max_rel_dev_exact    = {dev_exact:.11e}").unwrap();
        match damped_prediction(&params, 1.0, &track.times, branch, SpinTermMode::SmallP) {
            Ok(small) => {
                let dev = max_rel_deviation(&track.omega_inst, &small);
                writeln!(summary, "max_rel_dev_smallp   = {dev:.11e}").unwrap();
            }
            Err(e) => {
                writeln!(summary, "max_rel_dev_smallp   = refused ({e})").unwrap();
            }
        }
        writeln!(summary).unwrap();
    }

    print!("{summary}");
    let body = stamped(&prov, |buf| buf.write_all(summary.as_bytes())).map_err(RunError::io)?;
    write_atomic(&args.common.out.join("summary.txt"), &body).map_err(RunError::io)?;
    Ok(())
}

fn write_damped_csv(points: &[DampedPoint], w: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "tau,a,omega_inst")?;
    for p in points {
        writeln!(w, "{:.11e},{:.11e},{:.11e}", p.tau, p.a, p.omega_inst)?;
    }
    Ok(())
}

fn max_rel_deviation(measured: &[f64], predicted: &[DampedPoint]) -> f64 {
    measured
        .iter()
        .zip(predicted)
        .map(|(m, p)| ((m - p.omega_inst) / p.omega_inst).abs())
        .fold(0.0, f64::max)
}

fn run_estimate(args: EstimateArgs) -> Result<(), RunError> {
    let (config, prov) = load(&args.common, "estimate")?;
    let Some(phys) = config.physical() else {
        return Err(RunError::Config(
            "estimate needs a [physical] config: the Hz conversion requires omega_c".into(),
        ));
    };
    let params = phys.to_dimensionless().map_err(|e| RunError::Config(e.to_string()))?;
    let hz_per_rho = phys.cantilever_frequency / (2.0 * PI);

    let linear = phys.linear_oscar_shift().map_err(|e| RunError::Config(e.to_string()))?;
    let semi = semiquantitative_shift(&params);
    let pert = perturbative_shift(&params, Branch::Aligned);

    let mut report = String::new();
    writeln!(report, "dimensionless parameters").unwrap();
    writeln!(report, "  lambda  = {:.11e}", params.lambda).unwrap();
    writeln!(report, "  chi     = {:.11e}", params.chi).unwrap();
    writeln!(report, "  epsilon = {:.11e}", params.epsilon).unwrap();
    writeln!(report, "  delta   = {:.11e}", params.delta).unwrap();
    writeln!(report, "  Q       = {:.11e}", params.quality_factor).unwrap();
    writeln!(report, "  alpha   = {:.11e}", params.alpha).unwrap();
    writeln!(report, "linear regime (small moment oscillations)").unwrap();
    writeln!(report, "  delta_omega_c = {:.11e} rad/s", linear.frequency_shift).unwrap();
    writeln!(report, "  delta_f       = {:.11e} Hz", linear.frequency_shift / (2.0 * PI)).unwrap();
    writeln!(report, "  omega_c_star  = {:.11e} rad/s", linear.effective_frequency).unwrap();
    writeln!(report, "  Q_star        = {:.11e}", linear.effective_q).unwrap();
    writeln!(report, "semi-quantitative peak shift (adiabatic reversals)").unwrap();
    writeln!(report, "  rho_shift       = {:.11e}", semi.shift).unwrap();
    writeln!(report, "  rho_shift_limit = {:.11e}  # chi >> epsilon limit", semi.shift_limit)
        .unwrap();
    writeln!(report, "  delta_f         = {:.11e} Hz", semi.shift * hz_per_rho).unwrap();
    writeln!(report, "perturbative peak shift (first-order averaging)").unwrap();
    writeln!(report, "  rho0       = {:.11e}", pert.rho0).unwrap();
    writeln!(report, "  spin_shift = {:.11e}", pert.spin_shift).unwrap();
    writeln!(report, "  rho1       = {:.11e}", pert.rho1).unwrap();
    writeln!(report, "  delta_f    = {:.11e} Hz", pert.spin_shift * hz_per_rho).unwrap();

    print!("{report}");
    let body = stamped(&prov, |buf| buf.write_all(report.as_bytes())).map_err(RunError::io)?;
    write_atomic(&args.common.out.join("estimate.txt"), &body).map_err(RunError::io)?;
    Ok(())
}
