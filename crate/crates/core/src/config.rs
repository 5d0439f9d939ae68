//! Model files and run configuration.
//!
//! A model file is a small TOML document:
//!
//! ```toml
//! kind = "cylinder"      # sphere | plane | cylinder | clifford_torus
//! k = 1
//! n = 2
//! p = 1
//! # radius = 1.0         # round-factor radius (non-shrinker controls)
//! # scale = 1.0          # dilation about the origin
//! # derivative_mode = "analytic"   # or "finite-difference"
//!
//! [resolution]
//! compact = 64
//! euclidean = 64
//! truncation = 10.0
//!
//! [tolerances]
//! shrinker = 1e-10
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{DerivativeMode, ShrinkerModel};
use crate::quadrature::{Resolution, DEFAULT_TRUNCATION, MIN_RESOLUTION, MIN_TRUNCATION};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("malformed model file {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindName {
    Sphere,
    Plane,
    Cylinder,
    CliffordTorus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeName {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionSection {
    pub compact: Option<usize>,
    pub euclidean: Option<usize>,
    pub truncation: Option<f64>,
}

/// Pass/fail thresholds of the `verify` checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub shrinker: f64,
    pub identities: f64,
    pub eigenfields: f64,
    pub criticality: f64,
    pub f_value: f64,
    pub fd_first: f64,
    pub fd_second: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            shrinker: 1e-10,
            identities: 1e-8,
            eigenfields: 1e-6,
            criticality: 1e-8,
            f_value: 1e-6,
            fd_first: 1e-6,
            fd_second: 1e-4,
        }
    }
}

impl Tolerances {
    fn validate(&self) -> Result<(), ConfigError> {
        let all = [
            self.shrinker,
            self.identities,
            self.eigenfields,
            self.criticality,
            self.f_value,
            self.fd_first,
            self.fd_second,
        ];
        if all.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(ConfigError::Invalid("tolerances must be finite and positive".into()));
        }
        Ok(())
    }
}

/// Contents of a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub kind: KindName,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub k: Option<usize>,
    pub radius: Option<f64>,
    pub scale: Option<f64>,
    pub derivative_mode: Option<DerivativeName>,
    #[serde(default)]
    pub resolution: ResolutionSection,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl ModelFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, path)
    }

    fn require(&self, v: Option<usize>, name: &str) -> Result<usize, ConfigError> {
        v.ok_or_else(|| ConfigError::Invalid(format!("{:?} model needs `{name}`", self.kind)))
    }

    /// The catalog model the file describes.
    pub fn model(&self) -> Result<ShrinkerModel, ConfigError> {
        let reject = |field: &str| ConfigError::Invalid(format!("`{field}` is not used by {:?}", self.kind));
        let model = match self.kind {
            KindName::Sphere | KindName::Plane => {
                if self.k.is_some() {
                    return Err(reject("k"));
                }
                let (n, p) = (self.require(self.n, "n")?, self.p.unwrap_or(1));
                if self.kind == KindName::Sphere {
                    ShrinkerModel::sphere(n, p)
                } else {
                    ShrinkerModel::plane(n, p)
                }
            }
            KindName::Cylinder => ShrinkerModel::cylinder(
                self.require(self.k, "k")?,
                self.require(self.n, "n")?,
                self.p.unwrap_or(1),
            ),
            KindName::CliffordTorus => {
                if self.k.is_some() || self.n.is_some_and(|n| n != 2) || self.p.is_some_and(|p| p != 2) {
                    return Err(ConfigError::Invalid("clifford_torus is fixed at n = 2, p = 2".into()));
                }
                ShrinkerModel::clifford_torus()
            }
        };
        let mut model = model.map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(r) = self.radius {
            model = model.with_radius(r).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if let Some(a) = self.scale {
            model = model.scaled(a).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if self.derivative_mode == Some(DerivativeName::FiniteDifference) {
            model = model.with_derivative_mode(DerivativeMode::default_finite_difference());
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
    Table,
}

impl std::str::FromStr for Format {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "table" => Ok(Self::Table),
            _ => Err(ConfigError::Invalid(format!("unknown format {s:?} (json | csv | table)"))),
        }
    }
}

/// Command-line overrides applied on top of a model file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub resolution: Option<usize>,
    pub truncation: Option<f64>,
}

/// Everything a command needs besides its own arguments; echoed in reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub model_file: Option<String>,
    pub model: Option<ModelFile>,
    pub resolution: Resolution,
    pub truncation: f64,
    pub tolerances: Tolerances,
    pub format: Format,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn new(
        command: &str,
        model_file: Option<&Path>,
        overrides: Overrides,
        format: Format,
        seed: Option<u64>,
    ) -> Result<Self, ConfigError> {
        let model = model_file.map(ModelFile::load).transpose()?;
        let section = model.as_ref().map(|m| m.resolution).unwrap_or_default();
        let resolution = match overrides.resolution {
            Some(r) => Resolution::uniform(r),
            None => Resolution { compact: section.compact, euclidean: section.euclidean },
        };
        let truncation = overrides.truncation.or(section.truncation).unwrap_or(DEFAULT_TRUNCATION);
        let cfg = Self {
            command: command.to_string(),
            model_file: model_file.map(|p| p.display().to_string()),
            tolerances: model.as_ref().map(|m| m.tolerances).unwrap_or_default(),
            model,
            resolution,
            truncation,
            format,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for r in [self.resolution.compact, self.resolution.euclidean].into_iter().flatten() {
            if r < MIN_RESOLUTION {
                return Err(ConfigError::Invalid(format!("resolution {r} is below the minimum {MIN_RESOLUTION}")));
            }
            if r > 4096 {
                return Err(ConfigError::Invalid(format!("resolution {r} is above the maximum 4096")));
            }
        }
        if !(self.truncation >= MIN_TRUNCATION && self.truncation.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "truncation {} is below the minimum {MIN_TRUNCATION}",
                self.truncation
            )));
        }
        self.tolerances.validate()?;
        if let Some(m) = &self.model {
            m.model()?;
        }
        Ok(())
    }

    pub fn shrinker_model(&self) -> Result<ShrinkerModel, ConfigError> {
        self.model
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid(format!("`{}` needs a model file", self.command)))?
            .model()
    }
}
