//! Experiment configuration: a TOML file whose keys carry their units.
//! Conversion to SI happens once, in [`ExperimentConfig::resolve`].

use std::path::{Path, PathBuf};

use noon_ocm::fringe::{ArrayGeometry, Envelope, FringeConfig, SourceKind, SourceModel};
use noon_ocm::sim::{DetectorModel, Exposure, DEFAULT_EVENT_PROBABILITY};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub fringe: FringeSection,
    pub array: ArraySection,
    pub source: SourceSection,
    #[serde(default)]
    pub detector: DetectorSection,
    pub run: RunSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FringeSection {
    pub wavelength_nm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_mrad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period_um: Option<f64>,
    #[serde(default)]
    pub phase_rad: f64,
    #[serde(default = "one")]
    pub singles_visibility: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<EnvelopeSection>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSection {
    pub center_um: f64,
    pub sigma_um: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    pub pixel_count: usize,
    pub pitch_um: f64,
    pub core_width_um: f64,
    #[serde(default)]
    pub origin_um: f64,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKindName {
    Classical,
    Noon,
    Mixed,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub kind: SourceKindName,
    pub photon_numbers: Vec<usize>,
    #[serde(default)]
    pub background_fraction: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    #[serde(default = "one")]
    pub efficiency: f64,
    #[serde(default = "yes")]
    pub number_resolving: bool,
    #[serde(default)]
    pub dark_rate: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection {
            efficiency: 1.0,
            number_resolving: true,
            dark_rate: 0.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulses: Option<u64>,
    pub seed: u64,
    #[serde(default = "default_event_probability")]
    pub event_probability: f64,
    #[serde(default)]
    pub emit_partial: bool,
    #[serde(default = "yes")]
    pub write_events: bool,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum KConstraint {
    /// Fit the singles fringe and pin `k_N = N·k_1`.
    SinglesFit,
    /// Use `k_rad_per_mm` times N.
    Explicit,
    /// Leave the frequency free in every fit.
    Free,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default)]
    pub accidental_subtraction: bool,
    #[serde(default = "default_calibration_photons")]
    pub calibration_photons: f64,
    #[serde(default = "default_k_constraint")]
    pub k_constraint: KConstraint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_rad_per_mm: Option<f64>,
    #[serde(default = "default_singles_events")]
    pub singles_events: u64,
    #[serde(default)]
    pub joint_maps: bool,
    #[serde(default = "yes")]
    pub plots: bool,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            accidental_subtraction: false,
            calibration_photons: default_calibration_photons(),
            k_constraint: default_k_constraint(),
            k_rad_per_mm: None,
            singles_events: default_singles_events(),
            joint_maps: false,
            plots: true,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_event_probability() -> f64 {
    DEFAULT_EVENT_PROBABILITY
}

fn default_calibration_photons() -> f64 {
    1e7
}

fn default_k_constraint() -> KConstraint {
    KConstraint::SinglesFit
}

fn default_singles_events() -> u64 {
    1_000_000
}

/// Validated configuration in SI units.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub fringe: FringeConfig,
    pub geometry: ArrayGeometry,
    pub sources: Vec<SourceModel>,
    pub detector: DetectorModel,
    pub exposure: Exposure,
    pub seed: u64,
    pub event_probability: f64,
    pub emit_partial: bool,
    pub write_events: bool,
    pub analysis: AnalysisSection,
    /// Explicit singles frequency in rad/m.
    pub k1: Option<f64>,
}

fn positive(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(key, format!("must be positive, got {v}")))
    }
}

fn finite(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(key, "must be finite"))
    }
}

fn unit_interval(key: &str, v: f64) -> Result<f64, ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(invalid(key, format!("must lie in [0, 1], got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let f = &self.fringe;
        let wavelength = positive("fringe.wavelength_nm", f.wavelength_nm)? * 1e-9;
        let mut fringe = match (f.angle_mrad, f.period_um) {
            (Some(a), None) => {
                let angle = positive("fringe.angle_mrad", a)? * 1e-3;
                if angle >= std::f64::consts::PI {
                    return Err(invalid("fringe.angle_mrad", "must be below π rad"));
                }
                FringeConfig::new(wavelength, angle)
                    .map_err(|e| invalid("fringe.angle_mrad", e.to_string()))?
            }
            (None, Some(p)) => {
                let period = positive("fringe.period_um", p)? * 1e-6;
                FringeConfig::with_period(wavelength, period)
                    .map_err(|e| invalid("fringe.period_um", e.to_string()))?
            }
            _ => {
                return Err(invalid(
                    "fringe.angle_mrad",
                    "give exactly one of `angle_mrad` and `period_um`",
                ))
            }
        };
        fringe = fringe
            .phase(finite("fringe.phase_rad", f.phase_rad)?)
            .visibility(unit_interval(
                "fringe.singles_visibility",
                f.singles_visibility,
            )?);
        if let Some(env) = &f.envelope {
            fringe = fringe.envelope(Envelope::Gaussian {
                center: finite("fringe.envelope.center_um", env.center_um)? * 1e-6,
                sigma: positive("fringe.envelope.sigma_um", env.sigma_um)? * 1e-6,
            });
        }

        let a = &self.array;
        if a.pixel_count < 2 || a.pixel_count > u16::MAX as usize {
            return Err(invalid("array.pixel_count", "must lie in 2..=65535"));
        }
        let pitch = positive("array.pitch_um", a.pitch_um)? * 1e-6;
        let core = positive("array.core_width_um", a.core_width_um)? * 1e-6;
        if a.core_width_um > a.pitch_um {
            return Err(invalid("array.core_width_um", "must not exceed pitch_um"));
        }
        let geometry = ArrayGeometry::new(a.pixel_count, pitch, core)
            .map_err(|e| invalid("array", e.to_string()))?
            .with_origin(finite("array.origin_um", a.origin_um)? * 1e-6);

        let s = &self.source;
        if s.photon_numbers.is_empty() {
            return Err(invalid(
                "source.photon_numbers",
                "list at least one photon number",
            ));
        }
        let eps = unit_interval("source.background_fraction", s.background_fraction)?;
        let mut sources = Vec::new();
        for &n in &s.photon_numbers {
            let src = match s.kind {
                SourceKindName::Classical => SourceModel::classical(n),
                SourceKindName::Noon => SourceModel::ideal_noon(n),
                SourceKindName::Mixed => SourceModel::mixed(n, eps),
            }
            .map_err(|e| invalid("source.photon_numbers", e.to_string()))?;
            sources.push(src);
        }
        if s.kind != SourceKindName::Mixed && eps != 0.0 {
            return Err(invalid(
                "source.background_fraction",
                "only a mixed source has a background",
            ));
        }

        let d = &self.detector;
        let detector = DetectorModel {
            efficiency: unit_interval("detector.efficiency", d.efficiency)?,
            number_resolving: d.number_resolving,
            dark_rate: unit_interval("detector.dark_rate", d.dark_rate)?,
        };

        let r = &self.run;
        let exposure = match (r.events, r.pulses) {
            (Some(e), None) => Exposure::Events(e),
            (None, Some(p)) => Exposure::Pulses(p),
            _ => {
                return Err(invalid(
                    "run.events",
                    "give exactly one of `events` and `pulses`",
                ))
            }
        };
        let event_probability = r.event_probability;
        if !(event_probability > 0.0 && event_probability <= 1.0) {
            return Err(invalid("run.event_probability", "must lie in (0, 1]"));
        }

        let an = &self.analysis;
        positive("analysis.calibration_photons", an.calibration_photons)?;
        if an.singles_events == 0 {
            return Err(invalid("analysis.singles_events", "must be positive"));
        }
        let k1 = match (an.k_constraint, an.k_rad_per_mm) {
            (KConstraint::Explicit, Some(k)) => Some(positive("analysis.k_rad_per_mm", k)? * 1e3),
            (KConstraint::Explicit, None) => {
                return Err(invalid(
                    "analysis.k_rad_per_mm",
                    "required when k_constraint = \"explicit\"",
                ))
            }
            (_, Some(_)) => {
                return Err(invalid(
                    "analysis.k_rad_per_mm",
                    "only used with k_constraint = \"explicit\"",
                ))
            }
            (_, None) => None,
        };
        if an.joint_maps && !s.photon_numbers.contains(&2) {
            return Err(invalid(
                "analysis.joint_maps",
                "joint maps need photon number 2",
            ));
        }
        if an.accidental_subtraction && s.kind == SourceKindName::Classical {
            return Err(invalid(
                "analysis.accidental_subtraction",
                "a classical source has no separable background constituent",
            ));
        }

        Ok(Resolved {
            fringe,
            geometry,
            sources,
            detector,
            exposure,
            seed: r.seed,
            event_probability,
            emit_partial: r.emit_partial,
            write_events: r.write_events,
            analysis: an.clone(),
            k1,
        })
    }
}

impl Resolved {
    pub fn source_kind(&self) -> SourceKind {
        self.sources[0].kind
    }
}
