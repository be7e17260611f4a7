//! Simulation and analysis of OSCAR-mode magnetic resonance force
//! microscopy: a driven cantilever whose tip magnet periodically reverses a
//! sample spin, and the spin's back-action on the cantilever resonance.
//!
//! The crate integrates the exact coupled cantilever-moment equations with a
//! norm-preserving splitting scheme ([`dynamics`]), carries the adiabatic
//! reduction of the moment ([`quasistatic`]), the first-order averaged
//! envelope flow and its stationary response ([`averaging`]) backed by
//! complete elliptic integrals ([`elliptic`]), and extracts resonance curves
//! and instantaneous frequencies from trajectories ([`analysis`]).
//! Laboratory-unit setups reduce to the dimensionless control set in
//! [`params`]; [`config`] reads both from flat key-value files.

pub mod analysis;
pub mod averaging;
pub mod config;
pub mod dynamics;
pub mod elliptic;
mod numerics;
pub mod params;
pub mod quasistatic;

pub use analysis::{
    adiabaticity_report, instantaneous_frequency, stationary_amplitude, sweep_resonance,
    FrequencyTrack, ResonanceCurve, SweepSettings,
};
pub use averaging::{
    damped_prediction, perturbative_shift, slow_flow_damped, slow_flow_driven,
    stationary_response, SlowState, SpinTermMode, StationaryCurve,
};
pub use config::{parse_config, Config, ConfigError};
pub use dynamics::{
    initial_conditions, integrate, IntegratorSettings, SystemState, Trajectory,
};
pub use elliptic::{averaging_integral, complete_elliptic, EllipticPair};
pub use params::{DimensionlessParams, Drive, ParamsError, PhysicalParams};
pub use quasistatic::{quasistatic_moment, semiquantitative_shift, Branch};
