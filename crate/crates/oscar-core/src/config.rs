//! Flat key-value configuration files.
//!
//! A config file holds exactly one of two blocks, `[physical]` (SI units)
//! or `[dimensionless]`, with one `key = value` per line and `#` comments:
//!
//! ```text
//! [physical]
//! k_s        = 1e-3      # N/m
//! omega_c_hz = 1e5       # Hz
//! Q          = 100
//! mu0_mF     = 1.98e-21  # T m^3
//! d          = 1e-7      # m
//! B1         = 1e-3      # T
//! amplitude_A = 1e-9     # m (or force_F0 in N)
//! ```
//!
//! Optional physical keys: `mu_bohr` (spin moment in Bohr magnetons,
//! default 1), `gamma` (default: electron value), `delta_B` (default 0).
//! Dimensionless keys: `lambda`, `chi`, `epsilon`, `Q`, `alpha` (required),
//! `delta`, `rho`, `theta0` (optional). Diagnostics carry line numbers.

use std::collections::BTreeMap;

use crate::params::{
    DimensionlessParams, Drive, ParamsError, PhysicalParams, DEFAULT_THETA0, GAMMA_ELECTRON,
};

/// Parsed configuration: one of the two mutually exclusive blocks.
#[derive(Debug, Clone)]
pub enum Config {
    Physical(PhysicalParams),
    Dimensionless(DimensionlessParams),
}

impl Config {
    /// The dimensionless control set, converting a physical block if needed.
    pub fn dimensionless(&self) -> Result<DimensionlessParams, ParamsError> {
        match self {
            Config::Physical(p) => p.to_dimensionless(),
            Config::Dimensionless(p) => Ok(p.clone()),
        }
    }

    /// The physical block, when the config has one.
    pub fn physical(&self) -> Option<&PhysicalParams> {
        match self {
            Config::Physical(p) => Some(p),
            Config::Dimensionless(_) => None,
        }
    }
}

/// Configuration errors, with 1-based line numbers where applicable.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Syntax { line: usize, message: String },
    UnknownKey { line: usize, key: String },
    DuplicateKey { line: usize, key: String },
    BadNumber { line: usize, key: String, value: String },
    MissingSection,
    MissingKey { key: &'static str },
    ConflictingDrive,
    UnknownOverrideKey { key: String },
    BadOverride { entry: String },
    Invalid(ParamsError),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Syntax { line, message } => write!(f, "line {line}: {message}"),
            ConfigError::UnknownKey { line, key } => write!(f, "line {line}: unknown key `{key}`"),
            ConfigError::DuplicateKey { line, key } => {
                write!(f, "line {line}: key `{key}` given twice")
            }
            ConfigError::BadNumber { line, key, value } => {
                write!(f, "line {line}: key `{key}`: `{value}` is not a number")
            }
            ConfigError::MissingSection => {
                write!(f, "config must start with a [physical] or [dimensionless] section")
            }
            ConfigError::MissingKey { key } => write!(f, "missing required key `{key}`"),
            ConfigError::ConflictingDrive => {
                write!(f, "give exactly one of `amplitude_A` and `force_F0`")
            }
            ConfigError::UnknownOverrideKey { key } => {
                write!(f, "--set references unknown key `{key}`")
            }
            ConfigError::BadOverride { entry } => {
                write!(f, "override `{entry}` is not of the form KEY=VALUE")
            }
            ConfigError::Invalid(e) => write!(f, "invalid parameters: {e}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<ParamsError> for ConfigError {
    fn from(e: ParamsError) -> Self {
        ConfigError::Invalid(e)
    }
}

const PHYSICAL_KEYS: &[&str] = &[
    "k_s", "omega_c_hz", "Q", "mu0_mF", "d", "mu_bohr", "gamma", "B1", "delta_B", "amplitude_A",
    "force_F0",
];
const DIMENSIONLESS_KEYS: &[&str] =
    &["lambda", "chi", "epsilon", "delta", "Q", "alpha", "rho", "theta0"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Physical,
    Dimensionless,
}

/// Parse a config file and apply `--set KEY=VALUE` overrides on top.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<Config, ConfigError> {
    let mut section: Option<Section> = None;
    let mut values: BTreeMap<String, f64> = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let new = match name.trim() {
                "physical" => Section::Physical,
                "dimensionless" => Section::Dimensionless,
                other => {
                    return Err(ConfigError::Syntax {
                        line: line_no,
                        message: format!("unknown section `[{other}]`"),
                    })
                }
            };
            if let Some(old) = section {
                if old != new {
                    return Err(ConfigError::Syntax {
                        line: line_no,
                        message: "the [physical] and [dimensionless] blocks are mutually exclusive"
                            .into(),
                    });
                }
            }
            section = Some(new);
            continue;
        }
        let Some(section) = section else {
            return Err(ConfigError::MissingSection);
        };
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            });
        };
        let key = key.trim();
        let value = value.trim();
        let known = match section {
            Section::Physical => PHYSICAL_KEYS,
            Section::Dimensionless => DIMENSIONLESS_KEYS,
        };
        if !known.contains(&key) {
            return Err(ConfigError::UnknownKey { line: line_no, key: key.into() });
        }
        let parsed: f64 = value.parse().map_err(|_| ConfigError::BadNumber {
            line: line_no,
            key: key.into(),
            value: value.into(),
        })?;
        if values.insert(key.to_string(), parsed).is_some() {
            return Err(ConfigError::DuplicateKey { line: line_no, key: key.into() });
        }
    }

    let Some(section) = section else {
        return Err(ConfigError::MissingSection);
    };

    // Overrides replace or add keys of the active section.
    let known = match section {
        Section::Physical => PHYSICAL_KEYS,
        Section::Dimensionless => DIMENSIONLESS_KEYS,
    };
    for entry in overrides {
        let Some((key, value)) = entry.split_once('=') else {
            return Err(ConfigError::BadOverride { entry: entry.clone() });
        };
        let key = key.trim();
        if !known.contains(&key) {
            return Err(ConfigError::UnknownOverrideKey { key: key.into() });
        }
        let parsed: f64 = value.trim().parse().map_err(|_| ConfigError::BadNumber {
            line: 0,
            key: key.into(),
            value: value.trim().into(),
        })?;
        values.insert(key.to_string(), parsed);
    }

    match section {
        Section::Physical => build_physical(&values),
        Section::Dimensionless => build_dimensionless(&values),
    }
}

fn require(values: &BTreeMap<String, f64>, key: &'static str) -> Result<f64, ConfigError> {
    values.get(key).copied().ok_or(ConfigError::MissingKey { key })
}

fn build_physical(values: &BTreeMap<String, f64>) -> Result<Config, ConfigError> {
    let drive = match (values.get("amplitude_A"), values.get("force_F0")) {
        (Some(&a), None) => Drive::Amplitude(a),
        (None, Some(&f)) => Drive::Force(f),
        (Some(_), Some(_)) => return Err(ConfigError::ConflictingDrive),
        (None, None) => return Err(ConfigError::MissingKey { key: "amplitude_A or force_F0" }),
    };
    let params = PhysicalParams {
        spring_constant: require(values, "k_s")?,
        cantilever_frequency: 2.0 * std::f64::consts::PI * require(values, "omega_c_hz")?,
        quality_factor: require(values, "Q")?,
        tip_moment: require(values, "mu0_mF")?,
        tip_sample_distance: require(values, "d")?,
        spin_moment: values.get("mu_bohr").copied().unwrap_or(1.0),
        gyromagnetic_ratio: values.get("gamma").copied().unwrap_or(GAMMA_ELECTRON),
        rf_field: require(values, "B1")?,
        field_offset: values.get("delta_B").copied().unwrap_or(0.0),
        drive,
        b0: None,
    };
    params.validate()?;
    Ok(Config::Physical(params))
}

fn build_dimensionless(values: &BTreeMap<String, f64>) -> Result<Config, ConfigError> {
    let params = DimensionlessParams::new(
        require(values, "lambda")?,
        require(values, "chi")?,
        require(values, "epsilon")?,
        values.get("delta").copied().unwrap_or(0.0),
        require(values, "Q")?,
        require(values, "alpha")?,
    )?
    .with_rho(values.get("rho").copied().unwrap_or(0.0))
    .with_theta0(values.get("theta0").copied().unwrap_or(DEFAULT_THETA0));
    Ok(Config::Dimensionless(params))
}

/// FNV-1a hash of the config text and overrides; identifies a run's inputs
/// in output-file provenance headers.
pub fn config_hash(text: &str, overrides: &[String]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    eat(text.as_bytes());
    for o in overrides {
        eat(b"\x1f");
        eat(o.as_bytes());
    }
    h
}
