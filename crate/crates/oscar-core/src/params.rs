//! Physical and dimensionless parameter sets and the conversion between them.
//!
//! A laboratory description of the cantilever / tip-magnet / spin system
//! ([`PhysicalParams`], SI units) reduces to a small dimensionless control
//! set ([`DimensionlessParams`]) that fully determines the coupled dynamics.
//! Both kinds of parameter object are immutable after construction and may be
//! shared freely across sweep workers.

use std::f64::consts::PI;

/// Electron gyromagnetic ratio magnitude, rad/(s·T).
pub const GAMMA_ELECTRON: f64 = 1.760_859_630_23e11;

/// Bohr magneton, J/T.
pub const MU_BOHR: f64 = 9.274_010_078_3e-24;

/// Errors from parameter validation and conversion.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamsError {
    /// A quantity that must be strictly positive was not.
    NonPositive { name: &'static str, value: f64 },
    /// The drive target amplitude reaches or exceeds the tip-sample distance.
    AmplitudeTooLarge { amplitude: f64, distance: f64 },
    /// A quantity must lie in a stated range.
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
}

impl std::fmt::Display for ParamsError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamsError::NonPositive { name, value } => {
                write!(f, "{name} must be strictly positive, got {value}")
            }
            ParamsError::AmplitudeTooLarge {
                amplitude,
                distance,
            } => write!(
                f,
                "drive amplitude {amplitude} m must be smaller than the tip-sample distance {distance} m"
            ),
            ParamsError::OutOfRange {
                name,
                value,
                expected,
            } => write!(f, "{name} = {value} out of range, expected {expected}"),
        }
    }
}

impl std::error::Error for ParamsError {}

/// How the external drive is specified: by force amplitude or by the
/// unperturbed stationary vibration amplitude it would produce at resonance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Drive {
    /// Peak force F0 in newtons.
    Force(f64),
    /// Target unperturbed amplitude A in meters.
    Amplitude(f64),
}

/// Laboratory-units description of the cantilever, tip magnet, spin and fields.
///
/// The tip moment is stored as the product mu0*m_F (T·m^3) since only that
/// product ever enters the dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    /// Cantilever spring constant k_s, N/m.
    pub spring_constant: f64,
    /// Unperturbed cantilever angular frequency omega_c, rad/s.
    pub cantilever_frequency: f64,
    /// Cantilever quality factor Q.
    pub quality_factor: f64,
    /// Tip magnetic moment as mu0*m_F, T·m^3.
    pub tip_moment: f64,
    /// Equilibrium tip-sample distance d, m.
    pub tip_sample_distance: f64,
    /// Spin magnetic moment in units of the Bohr magneton.
    pub spin_moment: f64,
    /// Gyromagnetic ratio of the spin, rad/(s·T).
    pub gyromagnetic_ratio: f64,
    /// Rotating rf field amplitude B1, T.
    pub rf_field: f64,
    /// Static field offset from exact resonance, T.
    pub field_offset: f64,
    /// External drive specification.
    pub drive: Drive,
    /// Uniform permanent field B0, T. Only used to report the rf carrier.
    pub b0: Option<f64>,
}

impl PhysicalParams {
    /// Validate positivity and the amplitude < distance requirement.
    pub fn validate(&self) -> Result<(), ParamsError> {
        let positive = [
            ("spring_constant", self.spring_constant),
            ("cantilever_frequency", self.cantilever_frequency),
            ("quality_factor", self.quality_factor),
            ("tip_sample_distance", self.tip_sample_distance),
            ("rf_field", self.rf_field),
            ("tip_moment", self.tip_moment),
            ("gyromagnetic_ratio", self.gyromagnetic_ratio),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return Err(ParamsError::NonPositive { name, value });
            }
        }
        if self.spin_moment < 0.0 {
            return Err(ParamsError::OutOfRange {
                name: "spin_moment",
                value: self.spin_moment,
                expected: ">= 0",
            });
        }
        match self.drive {
            Drive::Force(f0) if !(f0 > 0.0) => {
                return Err(ParamsError::NonPositive {
                    name: "drive force",
                    value: f0,
                })
            }
            Drive::Amplitude(a) if !(a > 0.0) => {
                return Err(ParamsError::NonPositive {
                    name: "drive amplitude",
                    value: a,
                })
            }
            _ => {}
        }
        let a = self.amplitude();
        if a >= self.tip_sample_distance {
            return Err(ParamsError::AmplitudeTooLarge {
                amplitude: a,
                distance: self.tip_sample_distance,
            });
        }
        Ok(())
    }

    /// Effective mass m* = k_s / omega_c^2, kg.
    pub fn effective_mass(&self) -> f64 {
        self.spring_constant / (self.cantilever_frequency * self.cantilever_frequency)
    }

    /// Spin moment in J/T.
    pub fn spin_moment_si(&self) -> f64 {
        self.spin_moment * MU_BOHR
    }

    /// Dipole coupling q = 3 mu0 m_F / (2 pi m*), T·m^3/kg.
    pub fn dipole_coupling(&self) -> f64 {
        3.0 * self.tip_moment / (2.0 * PI * self.effective_mass())
    }

    /// Dipole field of the tip magnet at the spin site for tip displacement z,
    /// B_d(z) = mu0 m_F / (2 pi (d+z)^3), tesla.
    pub fn dipole_field(&self, z: f64) -> f64 {
        let r = self.tip_sample_distance + z;
        self.tip_moment / (2.0 * PI * r * r * r)
    }

    /// Resonant rf carrier omega_0 = gamma [B0 + B_d(0)], rad/s.
    /// `None` when B0 was not supplied.
    pub fn rf_carrier(&self) -> Option<f64> {
        self.b0
            .map(|b0| self.gyromagnetic_ratio * (b0 + self.dipole_field(0.0)))
    }

    /// Canonical unperturbed stationary amplitude A, m.
    ///
    /// A force drive is converted through Q F0 = k_s A.
    pub fn amplitude(&self) -> f64 {
        match self.drive {
            Drive::Amplitude(a) => a,
            Drive::Force(f0) => self.quality_factor * f0 / self.spring_constant,
        }
    }

    /// Drive force F0, N (inverse of [`Self::amplitude`]).
    pub fn force(&self) -> f64 {
        match self.drive {
            Drive::Force(f0) => f0,
            Drive::Amplitude(a) => self.spring_constant * a / self.quality_factor,
        }
    }

    /// Reduce to the dimensionless control set.
    ///
    /// Detuning and drive phase are not physical properties of the setup;
    /// they default to rho = 0 and theta0 = 3 pi / 2 and can be adjusted on
    /// the returned value.
    pub fn to_dimensionless(&self) -> Result<DimensionlessParams, ParamsError> {
        self.validate()?;
        let d4 = self.tip_sample_distance.powi(4);
        let a = self.amplitude();
        let mu = self.spin_moment_si();
        let lambda = 3.0 * self.tip_moment * mu
            / (2.0 * PI * d4 * self.quality_factor * self.force());
        let chi = 3.0 * self.gyromagnetic_ratio * self.tip_moment * a
            / (2.0 * PI * self.cantilever_frequency * d4);
        DimensionlessParams::new(
            lambda,
            chi,
            self.gyromagnetic_ratio * self.rf_field / self.cantilever_frequency,
            self.gyromagnetic_ratio * self.field_offset / self.cantilever_frequency,
            self.quality_factor,
            a / self.tip_sample_distance,
        )
    }

    /// Linear-regime effective oscillator: frequency shift and quality factor
    /// change produced by a spin undergoing small oscillations about the
    /// transverse direction.
    pub fn linear_oscar_shift(&self) -> Result<LinearOscarShift, ParamsError> {
        self.validate()?;
        let d = self.tip_sample_distance;
        let mu = self.spin_moment_si();
        let bracket = self.field_offset + 3.0 * self.tip_moment / (8.0 * PI * d.powi(3));
        let frequency_shift = -(3.0 * self.tip_moment * mu
            / (PI * self.effective_mass() * self.cantilever_frequency * self.rf_field * d.powi(5)))
            * bracket;
        Ok(LinearOscarShift {
            effective_frequency: self.cantilever_frequency + frequency_shift,
            frequency_shift,
            effective_q: self.quality_factor * (1.0 + frequency_shift / self.cantilever_frequency),
        })
    }
}

/// Tip moment mu0*m_F from particle volume and volume magnetization mu0*m_F/V.
pub fn tip_moment_from_volume(volume: f64, mu0_m_per_volume: f64) -> f64 {
    volume * mu0_m_per_volume
}

/// Result of the linear-regime estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearOscarShift {
    /// Shifted cantilever frequency omega_c*, rad/s.
    pub effective_frequency: f64,
    /// Frequency shift delta omega_c, rad/s.
    pub frequency_shift: f64,
    /// Effective quality factor Q*.
    pub effective_q: f64,
}

/// The dimensionless control set (lambda, chi, epsilon, delta, Q, alpha)
/// plus the per-run drive detuning rho, drive phase theta0 and drive switch.
///
/// An infinite `quality_factor` is accepted and yields an undamped, undriven
/// cantilever (both the damping and the drive amplitude scale as 1/Q).
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionlessParams {
    /// Spin back-action strength.
    pub lambda: f64,
    /// Cantilever-motion modulation of the effective field z-component.
    pub chi: f64,
    /// Transverse (rf) component of the effective field.
    pub epsilon: f64,
    /// Static field offset.
    pub delta: f64,
    /// Cantilever quality factor.
    pub quality_factor: f64,
    /// Amplitude-to-distance ratio A/d.
    pub alpha: f64,
    /// Drive frequency detuning rho = nu/omega_c - 1.
    pub rho: f64,
    /// Drive phase at tau = 0, radians.
    pub theta0: f64,
    /// Whether the external drive is applied.
    pub drive_on: bool,
}

/// Default drive phase: the cantilever starts displaced in the -z direction.
pub const DEFAULT_THETA0: f64 = 3.0 * PI / 2.0;

impl DimensionlessParams {
    /// Construct with rho = 0, theta0 = 3 pi / 2 and the drive on.
    ///
    /// The adiabaticity condition epsilon >> 1 is deliberately not enforced;
    /// runs that violate it are physically meaningful.
    pub fn new(
        lambda: f64,
        chi: f64,
        epsilon: f64,
        delta: f64,
        quality_factor: f64,
        alpha: f64,
    ) -> Result<Self, ParamsError> {
        if !(quality_factor > 0.0) {
            return Err(ParamsError::NonPositive {
                name: "quality_factor",
                value: quality_factor,
            });
        }
        if !(epsilon > 0.0) {
            return Err(ParamsError::NonPositive {
                name: "epsilon",
                value: epsilon,
            });
        }
        if !(chi > 0.0) {
            return Err(ParamsError::NonPositive { name: "chi", value: chi });
        }
        if !(lambda >= 0.0) {
            return Err(ParamsError::OutOfRange {
                name: "lambda",
                value: lambda,
                expected: ">= 0",
            });
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(ParamsError::OutOfRange {
                name: "alpha",
                value: alpha,
                expected: "0 <= alpha < 1",
            });
        }
        if !delta.is_finite() {
            return Err(ParamsError::OutOfRange {
                name: "delta",
                value: delta,
                expected: "finite",
            });
        }
        Ok(Self {
            lambda,
            chi,
            epsilon,
            delta,
            quality_factor,
            alpha,
            rho: 0.0,
            theta0: DEFAULT_THETA0,
            drive_on: true,
        })
    }

    /// Copy with a different detuning.
    pub fn with_rho(&self, rho: f64) -> Self {
        Self { rho, ..self.clone() }
    }

    /// Copy with a different drive phase.
    pub fn with_theta0(&self, theta0: f64) -> Self {
        Self { theta0, ..self.clone() }
    }

    /// Copy with the drive switched on or off.
    pub fn with_drive(&self, drive_on: bool) -> Self {
        Self { drive_on, ..self.clone() }
    }

    /// 1/Q, zero for an infinite quality factor.
    pub fn inverse_q(&self) -> f64 {
        if self.quality_factor.is_infinite() {
            0.0
        } else {
            1.0 / self.quality_factor
        }
    }

    /// Precession rate of the effective field at coordinate Z,
    /// sqrt(epsilon^2 + (delta - chi Z)^2).
    pub fn effective_field_magnitude(&self, z: f64) -> f64 {
        let bz = self.delta - self.chi * z;
        (self.epsilon * self.epsilon + bz * bz).sqrt()
    }
}
