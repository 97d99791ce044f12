//! Run configuration: JSON file with `_hz`/`_s`/`_us` suffixed keys, flag
//! overrides, and resolution to the library's rad/s and seconds.

use std::f64::consts::TAU;
use std::path::Path;

use ion_cnot::coupling::CNOT_RATIO;
use ion_cnot::readout::{
    DEFAULT_LAMBDA_BRIGHT, DEFAULT_LAMBDA_DARK, DEFAULT_SHOTS, DEFAULT_WINDOW,
};
use ion_cnot::state::DEFAULT_N_MAX;
use ion_cnot::{CouplingModel, DetectorModel, Error, NoiseConfig, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_OMEGA_Z_HZ: f64 = 3.4e6;
pub const DEFAULT_OMEGA_00_HZ: f64 = 92e3;
pub const DEFAULT_TAU_S: f64 = 170e-6;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trap {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_z_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_ratio: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Laser {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_00_hz: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Noise {
    /// Decay time in seconds; `null` in a resolved config means no decay.
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        deserialize_with = "nullable"
    )]
    pub tau_s: Option<Option<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prep_error: Option<f64>,
}

fn nullable<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<Option<Option<f64>>, D::Error> {
    Ok(Some(Option::deserialize(d)?))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detector {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_bright: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_dark: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub json: Option<String>,
}

/// File form of the configuration. Every field is optional; missing values
/// take the built-in defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub trap: Trap,
    #[serde(default)]
    pub laser: Laser,
    #[serde(default)]
    pub noise: Noise,
    #[serde(default)]
    pub detector: Detector,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shots: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ideal: Option<bool>,
    #[serde(default, skip_serializing_if = "is_default_output")]
    pub output: Output,
}

fn is_default_output(o: &Output) -> bool {
    *o == Output::default()
}

impl RunConfig {
    /// Reads a config file, or the `config` member of a run summary.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
        let body = match value.get("config") {
            Some(inner) if value.get("command").is_some() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(body).map_err(|e| Error::Config(format!("bad config: {e}")))
    }

    /// Fills every unset value with its default and checks consistency.
    pub fn resolve(&self) -> Result<Resolved> {
        let positive = |name: &str, v: f64| -> Result<f64> {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        let coupling = match (self.trap.eta, self.trap.target_ratio) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give only one of trap.eta and trap.target_ratio".into(),
                ))
            }
            (Some(eta), None) => CouplingSpec::Eta(eta),
            (None, Some(r)) => CouplingSpec::TargetRatio(positive("trap.target_ratio", r)?),
            (None, None) => CouplingSpec::TargetRatio(CNOT_RATIO),
        };
        let tau_s = match (self.noise.tau_s, self.noise.tau_us) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give only one of noise.tau_s and noise.tau_us".into(),
                ))
            }
            (Some(None), None) => None,
            (Some(Some(s)), None) => Some(positive("noise.tau_s", s)?),
            (None, Some(us)) => Some(positive("noise.tau_us", us)? / 1e6),
            (None, None) => Some(DEFAULT_TAU_S),
        };
        let prep_error = self.noise.prep_error.unwrap_or(0.0);
        if !(0.0..=1.0).contains(&prep_error) {
            return Err(Error::Config(format!(
                "noise.prep_error must be in [0, 1], got {prep_error}"
            )));
        }
        let shots = self.shots.unwrap_or(DEFAULT_SHOTS);
        if shots == 0 {
            return Err(Error::Config("shots must be ≥ 1".into()));
        }
        let resolved = Resolved {
            omega_z_hz: positive(
                "trap.omega_z_hz",
                self.trap.omega_z_hz.unwrap_or(DEFAULT_OMEGA_Z_HZ),
            )?,
            coupling,
            omega_00_hz: positive(
                "laser.omega_00_hz",
                self.laser.omega_00_hz.unwrap_or(DEFAULT_OMEGA_00_HZ),
            )?,
            tau_s,
            prep_error,
            lambda_bright: self.detector.lambda_bright.unwrap_or(DEFAULT_LAMBDA_BRIGHT),
            lambda_dark: self.detector.lambda_dark.unwrap_or(DEFAULT_LAMBDA_DARK),
            shots,
            seed: self.seed,
            n_max: self.n_max.unwrap_or(DEFAULT_N_MAX),
            ideal: self.ideal.unwrap_or(false),
            output: self.output.clone(),
        };
        resolved.model()?;
        resolved.detector()?;
        Ok(resolved)
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub enum CouplingSpec {
    Eta(f64),
    TargetRatio(f64),
}

/// Fully specified configuration, still in file units (Hz, s).
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub omega_z_hz: f64,
    pub coupling: CouplingSpec,
    pub omega_00_hz: f64,
    pub tau_s: Option<f64>,
    pub prep_error: f64,
    pub lambda_bright: f64,
    pub lambda_dark: f64,
    pub shots: usize,
    pub seed: Option<u64>,
    pub n_max: usize,
    pub ideal: bool,
    pub output: Output,
}

impl Resolved {
    /// Coupling model in rad/s; the only place Hz become angular rates.
    pub fn model(&self) -> Result<CouplingModel> {
        let (omega_z, omega_00) = (TAU * self.omega_z_hz, TAU * self.omega_00_hz);
        match self.coupling {
            CouplingSpec::Eta(eta) => {
                CouplingModel::from_carrier_rate(omega_z, eta, omega_00, self.n_max)
            }
            CouplingSpec::TargetRatio(r) => {
                CouplingModel::from_ratio(r, omega_z, omega_00, self.n_max)
            }
        }
    }

    /// Noise as configured, or none at all under `ideal`.
    pub fn noise(&self) -> Result<NoiseConfig> {
        if self.ideal {
            return Ok(NoiseConfig::ideal());
        }
        NoiseConfig::new(self.tau_s.unwrap_or(f64::INFINITY), self.prep_error)
    }

    pub fn detector(&self) -> Result<DetectorModel> {
        let det = DetectorModel {
            lambda_bright: self.lambda_bright,
            lambda_dark: self.lambda_dark,
            window: DEFAULT_WINDOW,
        };
        det.validate()?;
        Ok(det)
    }

    /// The file form with every value present; loading it resolves to `self`.
    pub fn to_config(&self) -> RunConfig {
        let (eta, target_ratio) = match self.coupling {
            CouplingSpec::Eta(e) => (Some(e), None),
            CouplingSpec::TargetRatio(r) => (None, Some(r)),
        };
        RunConfig {
            trap: Trap {
                omega_z_hz: Some(self.omega_z_hz),
                eta,
                target_ratio,
            },
            laser: Laser {
                omega_00_hz: Some(self.omega_00_hz),
            },
            noise: Noise {
                tau_s: Some(self.tau_s),
                tau_us: None,
                prep_error: Some(self.prep_error),
            },
            detector: Detector {
                lambda_bright: Some(self.lambda_bright),
                lambda_dark: Some(self.lambda_dark),
            },
            shots: Some(self.shots),
            seed: self.seed,
            n_max: Some(self.n_max),
            ideal: Some(self.ideal),
            output: Output::default(),
        }
    }
}

/// Parses a duration such as `150us`, `1.5 µs`, `2e-3ms` or `0.0001s`; a bare
/// number is seconds.
pub fn parse_duration(text: &str) -> std::result::Result<f64, String> {
    let t = text.trim();
    let split = t
        .find(|c: char| c.is_alphabetic() || c == 'µ')
        .unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("bad duration '{text}'"))?;
    let per_second = match unit.trim() {
        "" | "s" => 1.0,
        "ms" => 1e3,
        "us" | "µs" => 1e6,
        "ns" => 1e9,
        other => return Err(format!("unknown time unit '{other}' in '{text}'")),
    };
    // division by an exact power of ten keeps e.g. 120us == 120e-6
    let seconds = value / per_second;
    if seconds.is_finite() && seconds >= 0.0 {
        Ok(seconds)
    } else {
        Err(format!("duration must be non-negative, got '{text}'"))
    }
}
