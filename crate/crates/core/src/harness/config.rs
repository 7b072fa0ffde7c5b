use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{DiagonalConvention, KernelFamily, KernelFn, KernelSpec, DEFAULT_ETA};
use crate::randsrc::{NoiseModel, RadiusModel, SignalModel};
use crate::spectral::SeparationPolicy;

/// Default ceiling on `n` without `allow_large`.
pub const MAX_DESK_N: usize = 500;
/// Default ceiling on `p` without `allow_large`.
pub const MAX_DESK_P: usize = 8000;

/// Properties a run enforces and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    FrobeniusGap,
    OperatorGap,
    Weyl,
    Interpoint,
    Dotproduct,
    GaussianRescale,
    Laplacian,
    Centering,
    SubspaceAngles,
}

impl Check {
    pub const ALL: [Check; 9] = [
        Check::FrobeniusGap,
        Check::OperatorGap,
        Check::Weyl,
        Check::Interpoint,
        Check::Dotproduct,
        Check::GaussianRescale,
        Check::Laplacian,
        Check::Centering,
        Check::SubspaceAngles,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::FrobeniusGap => "frobenius_gap",
            Check::OperatorGap => "operator_gap",
            Check::Weyl => "weyl",
            Check::Interpoint => "interpoint",
            Check::Dotproduct => "dotproduct",
            Check::GaussianRescale => "gaussian_rescale",
            Check::Laplacian => "laplacian",
            Check::Centering => "centering",
            Check::SubspaceAngles => "subspace_angles",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: PathBuf,
    pub format: OutputFormat,
}

impl OutputSpec {
    /// Relative paths are taken under `base` when one is given.
    pub fn resolve(&self, base: Option<&Path>) -> PathBuf {
        match base {
            Some(dir) if self.path.is_relative() => dir.join(&self.path),
            _ => self.path.clone(),
        }
    }
}

fn default_checks() -> Vec<Check> {
    vec![Check::FrobeniusGap, Check::OperatorGap, Check::Weyl]
}

fn default_eta() -> f64 {
    DEFAULT_ETA
}

fn default_radii() -> RadiusModel {
    RadiusModel::ConstantOne {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub signal: SignalModel,
    pub noise: NoiseModel,
    #[serde(default = "default_radii")]
    pub radii: RadiusModel,
    pub kernel: KernelSpec,
    /// `(n, p)` pairs, written as `[[n, p], ...]`.
    pub grid: Vec<(usize, usize)>,
    pub replications: usize,
    pub base_seed: u64,
    #[serde(default = "default_checks")]
    pub checks: Vec<Check>,
    pub output: OutputSpec,
    /// Padding of the argument interval used when the kernel declares no domain.
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub diagonal: DiagonalConvention,
    #[serde(default)]
    pub separation: SeparationPolicy,
    /// Lifts the `n <= 500`, `p <= 8000` guardrail.
    #[serde(default)]
    pub allow_large: bool,
    /// Worker threads; the rayon default when absent.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Fill `wall_time_ms`; off by default so output is reproducible.
    #[serde(default)]
    pub record_timing: bool,
}

impl ExperimentConfig {
    /// Parses JSON and validates; errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let field = if path == "." { "<root>".to_string() } else { path };
            Error::config(field, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn has(&self, check: Check) -> bool {
        self.checks.contains(&check)
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, e: Error| Error::config(name, e.to_string());
        if self.name.trim().is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        if self.grid.is_empty() {
            return Err(Error::config("grid", "must contain at least one (n, p) pair"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "must be at least 1"));
        }
        for (idx, &(n, p)) in self.grid.iter().enumerate() {
            let at = format!("grid[{idx}]");
            if n < 2 {
                return Err(Error::config(at, format!("n = {n}: need at least two points")));
            }
            if p == 0 {
                return Err(Error::config(at, "p must be positive"));
            }
            if !self.allow_large && (n > MAX_DESK_N || p > MAX_DESK_P) {
                return Err(Error::config(
                    at,
                    format!("(n, p) = ({n}, {p}) exceeds n <= {MAX_DESK_N}, p <= {MAX_DESK_P}; set allow_large to run it"),
                ));
            }
            self.signal.validate(p).map_err(|e| field("signal", e))?;
            self.noise.validate(p).map_err(|e| field("noise", e))?;
        }
        self.radii.validate().map_err(|e| field("radii", e))?;
        self.kernel.validate().map_err(|e| field("kernel", e))?;
        let mut seen = Vec::new();
        for (idx, c) in self.checks.iter().enumerate() {
            if seen.contains(c) {
                return Err(Error::config(format!("checks[{idx}]"), format!("`{}` listed twice", c.name())));
            }
            seen.push(*c);
        }
        if self.has(Check::GaussianRescale) {
            let gaussian = matches!(self.kernel.func, KernelFn::Gaussian { s } if s > 0.0);
            if !(gaussian && self.kernel.family == KernelFamily::EuclideanDistance) {
                return Err(Error::config(
                    "checks",
                    "gaussian_rescale needs a euclidean_distance kernel of kind gaussian with s > 0",
                ));
            }
            if !self.radii.is_spherical() {
                return Err(Error::config("checks", "gaussian_rescale needs constant_one radii"));
            }
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::config("eta", "must be finite and nonnegative"));
        }
        if !(self.separation.relative_gap.is_finite() && self.separation.relative_gap >= 0.0) {
            return Err(Error::config("separation.relative_gap", "must be finite and nonnegative"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads", "must be at least 1"));
        }
        if self.output.path.as_os_str().is_empty() {
            return Err(Error::config("output.path", "must not be empty"));
        }
        Ok(())
    }
}
