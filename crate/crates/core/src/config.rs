//! Run configuration: a flat JSON object with dotted keys, overridden by flags.
//!
//! ```json
//! { "L": 1.0, "v": 0.3, "eta": 0.5, "preset": "cos",
//!   "numerics.n_modes": 512, "numerics.grid": 2048, "output.dir": "out" }
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{Map, Value};

use crate::model::{Preset, StringParams};
use crate::verify::{linspace, Numerics};

/// Default output directory when neither `--out`, `output.dir` nor this
/// variable is set.
pub const OUT_DIR_ENV: &str = "TRAVELLING_STRING_OUT";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Unreadable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("unknown config key {key:?}; known keys: {known}")]
    UnknownKey { key: String, known: String },
    #[error("out-of-domain value: {0}")]
    OutOfDomain(String),
    #[error("missing required setting {0} (set it in the config file or with --{0})")]
    Missing(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    /// Series solution, or characteristics when `eta = 1`.
    #[default]
    Auto,
    Spectral,
    Characteristics,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Preset(Preset),
    File(PathBuf),
}

/// Every key the configuration file accepts.
pub const KNOWN_KEYS: &[&str] = &[
    "L",
    "v",
    "eta",
    "preset",
    "data",
    "solver",
    "workers",
    "output.dir",
    "numerics.n_modes",
    "numerics.grid",
    "numerics.time_samples",
    "numerics.t_final",
    "numerics.slack",
    "numerics.fit_start",
    "numerics.rate_tolerance",
    "numerics.parseval_tolerance",
    "numerics.residue_tolerance",
    "numerics.seed",
    "simulate.slice_times",
    "sweep.v_values",
    "sweep.eta_values",
];

/// Contents of a config file; every key optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(rename = "L")]
    pub length: Option<f64>,
    pub v: Option<f64>,
    pub eta: Option<f64>,
    pub preset: Option<Preset>,
    pub data: Option<PathBuf>,
    pub solver: Option<SolverChoice>,
    pub workers: Option<usize>,
    #[serde(rename = "output.dir")]
    pub out_dir: Option<PathBuf>,
    #[serde(rename = "numerics.n_modes")]
    pub n_modes: Option<usize>,
    #[serde(rename = "numerics.grid")]
    pub grid: Option<usize>,
    #[serde(rename = "numerics.time_samples")]
    pub time_samples: Option<usize>,
    #[serde(rename = "numerics.t_final")]
    pub t_final: Option<f64>,
    #[serde(rename = "numerics.slack")]
    pub slack: Option<f64>,
    #[serde(rename = "numerics.fit_start")]
    pub fit_start: Option<f64>,
    #[serde(rename = "numerics.rate_tolerance")]
    pub rate_tolerance: Option<f64>,
    #[serde(rename = "numerics.parseval_tolerance")]
    pub parseval_tolerance: Option<f64>,
    #[serde(rename = "numerics.residue_tolerance")]
    pub residue_tolerance: Option<f64>,
    #[serde(rename = "numerics.seed")]
    pub seed: Option<u64>,
    #[serde(rename = "simulate.slice_times")]
    pub slice_times: Option<Vec<f64>>,
    #[serde(rename = "sweep.v_values")]
    pub sweep_v: Option<Vec<f64>>,
    #[serde(rename = "sweep.eta_values")]
    pub sweep_eta: Option<Vec<f64>>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
        let Value::Object(map) = value else {
            return Err(ConfigError::Malformed(
                "top level must be a JSON object".into(),
            ));
        };
        check_keys(&map)?;
        serde_json::from_value(Value::Object(map))
            .map_err(|e| ConfigError::Malformed(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Fills every unset field of `self` from `base`.
    pub fn or(self, base: FileConfig) -> FileConfig {
        FileConfig {
            length: self.length.or(base.length),
            v: self.v.or(base.v),
            eta: self.eta.or(base.eta),
            preset: self.preset.or(base.preset),
            data: self.data.or(base.data),
            solver: self.solver.or(base.solver),
            workers: self.workers.or(base.workers),
            out_dir: self.out_dir.or(base.out_dir),
            n_modes: self.n_modes.or(base.n_modes),
            grid: self.grid.or(base.grid),
            time_samples: self.time_samples.or(base.time_samples),
            t_final: self.t_final.or(base.t_final),
            slack: self.slack.or(base.slack),
            fit_start: self.fit_start.or(base.fit_start),
            rate_tolerance: self.rate_tolerance.or(base.rate_tolerance),
            parseval_tolerance: self.parseval_tolerance.or(base.parseval_tolerance),
            residue_tolerance: self.residue_tolerance.or(base.residue_tolerance),
            seed: self.seed.or(base.seed),
            slice_times: self.slice_times.or(base.slice_times),
            sweep_v: self.sweep_v.or(base.sweep_v),
            sweep_eta: self.sweep_eta.or(base.sweep_eta),
        }
    }
}

fn check_keys(map: &Map<String, Value>) -> Result<(), ConfigError> {
    match map.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        Some(key) => Err(ConfigError::UnknownKey {
            key: key.clone(),
            known: KNOWN_KEYS.join(", "),
        }),
        None => Ok(()),
    }
}

/// A fully defaulted and validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub length: f64,
    /// `None` for sweeps, which take their speeds from `sweep_v`.
    pub params: Option<StringParams>,
    pub source: DataSource,
    pub solver: SolverChoice,
    pub numerics: Numerics,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
    /// Field slice times for `simulate`; `None` means `{0, T/2, T, 2T}`.
    pub slice_times: Option<Vec<f64>>,
    pub sweep_v: Vec<f64>,
    pub sweep_eta: Vec<f64>,
}

fn domain<E: std::fmt::Display>(e: E) -> ConfigError {
    ConfigError::OutOfDomain(e.to_string())
}

impl RunConfig {
    /// Resolves `cfg` with defaults. `needs_params` requires `v` and `eta`.
    pub fn resolve(cfg: FileConfig, needs_params: bool) -> Result<Self, ConfigError> {
        let length = cfg.length.ok_or(ConfigError::Missing("L"))?;
        let params = if needs_params {
            let v = cfg.v.ok_or(ConfigError::Missing("v"))?;
            let eta = cfg.eta.ok_or(ConfigError::Missing("eta"))?;
            Some(StringParams::new(length, v, eta).map_err(domain)?)
        } else {
            if !(length > 0.0 && length.is_finite()) {
                return Err(ConfigError::OutOfDomain(format!(
                    "string length must be positive, got L = {length}"
                )));
            }
            None
        };
        let source = match (cfg.data, cfg.preset) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::OutOfDomain(
                    "give either preset or data, not both".into(),
                ))
            }
            (Some(path), None) => DataSource::File(path),
            (None, preset) => DataSource::Preset(preset.unwrap_or(Preset::Cos)),
        };
        let d = Numerics::default();
        let numerics = Numerics {
            n_modes: cfg.n_modes.unwrap_or(d.n_modes),
            grid: cfg.grid.unwrap_or(d.grid),
            time_samples: cfg.time_samples.unwrap_or(d.time_samples),
            t_final: cfg.t_final.or(d.t_final),
            slack: cfg.slack.unwrap_or(d.slack),
            fit_start: cfg.fit_start.unwrap_or(d.fit_start),
            rate_tolerance: cfg.rate_tolerance.unwrap_or(d.rate_tolerance),
            parseval_tolerance: cfg.parseval_tolerance.unwrap_or(d.parseval_tolerance),
            residue_tolerance: cfg.residue_tolerance.unwrap_or(d.residue_tolerance),
            seed: cfg.seed.unwrap_or(d.seed),
        };
        numerics.validate().map_err(domain)?;
        if cfg.workers == Some(0) {
            return Err(ConfigError::OutOfDomain("workers must be >= 1".into()));
        }
        if let Some(times) = &cfg.slice_times {
            if times.is_empty() || times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(ConfigError::OutOfDomain(
                    "slice times must be a non-empty list of times >= 0".into(),
                ));
            }
        }
        let sweep_v = cfg.sweep_v.unwrap_or_else(|| linspace(0.0, 0.6, 5));
        let sweep_eta = cfg.sweep_eta.unwrap_or_else(|| linspace(0.2, 0.8, 5));
        if sweep_v.is_empty() || sweep_eta.is_empty() {
            return Err(ConfigError::OutOfDomain(
                "sweep grids must be non-empty".into(),
            ));
        }
        for &v in &sweep_v {
            for &eta in &sweep_eta {
                StringParams::new(length, v, eta).map_err(domain)?;
            }
        }
        let out_dir = cfg
            .out_dir
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self {
            length,
            params,
            source,
            solver: cfg.solver.unwrap_or_default(),
            numerics,
            out_dir,
            workers: cfg.workers,
            slice_times: cfg.slice_times,
            sweep_v,
            sweep_eta,
        })
    }
}
