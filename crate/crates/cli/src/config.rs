//! Run configuration: defaults, flat key=value config files, and flag
//! overrides (flags win; overrides are logged to stderr).

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use dilstar::canm::{CanmConfig, FarField};
use dilstar::model::ModelParams;
use dilstar::sweep::SweepParam;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Emit {
    Csv,
    Json,
    Svg,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Everything a run needs; assembled from defaults, an optional config
/// file, and command-line flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: ModelParams<f64>,
    pub solver: CanmConfig<f64>,
    pub sweep_param: Option<SweepParam>,
    pub sweep_range: Option<(f64, f64)>,
    pub sweep_count: usize,
    pub warm_start: bool,
    pub verify: bool,
    pub out_dir: PathBuf,
    pub emit: Vec<Emit>,
}

pub const KNOWN_KEYS: &[&str] = &[
    "gamma",
    "lambda-self",
    "b",
    "sigma-c",
    "mu-c",
    "x-inf",
    "cells-inner",
    "cells-outer",
    "eps",
    "max-iter",
    "farfield",
    "sweep-param",
    "sweep-range",
    "sweep-count",
    "warm-start",
    "verify",
    "out-dir",
    "emit",
];

/// Raw option set prior to validation; `None` means "not given".
#[derive(Debug, Default, Clone)]
pub struct RawConfig {
    pub values: BTreeMap<String, (String, &'static str)>,
}

impl RawConfig {
    fn set(&mut self, key: &str, value: String, source: &'static str) -> Result<(), ConfigError> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(ConfigError(format!(
                "unknown configuration key `{key}` (known keys: {})",
                KNOWN_KEYS.join(", ")
            )));
        }
        if let Some((old, old_src)) = self.values.get(key) {
            if *old_src != source {
                eprintln!("config: {key} = {value} ({source}, overrides {old_src} value {old})");
            }
        } else {
            eprintln!("config: {key} = {value} ({source})");
        }
        self.values.insert(key.to_string(), (value, source));
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config file {}: {e}", path.display())))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError(format!(
                    "{}:{}: expected `key = value`, got `{line}`",
                    path.display(),
                    lineno + 1
                )));
            };
            self.set(key.trim(), value.trim().to_string(), "file")
                .map_err(|e| ConfigError(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        }
        Ok(())
    }

    pub fn set_flag(&mut self, key: &str, value: String) -> Result<(), ConfigError> {
        self.set(key, value, "flag")
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    fn parse_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| ConfigError(format!("{key}: `{v}` is not a number"))),
        }
    }

    fn parse_usize(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<usize>()
                .map(Some)
                .map_err(|_| ConfigError(format!("{key}: `{v}` is not a nonnegative integer"))),
        }
    }

    fn parse_bool(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some("true") | Some("1") | Some("on") => Ok(Some(true)),
            Some("false") | Some("0") | Some("off") => Ok(Some(false)),
            Some(v) => Err(ConfigError(format!("{key}: `{v}` is not a boolean"))),
        }
    }

    /// Validate and assemble the run configuration.
    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let sigma_c = self
            .parse_f64("sigma-c")?
            .ok_or_else(|| ConfigError("sigma-c is required (flag or config file)".into()))?;
        let mu_c = self
            .parse_f64("mu-c")?
            .ok_or_else(|| ConfigError("mu-c is required (flag or config file)".into()))?;
        let params = ModelParams {
            gamma: self.parse_f64("gamma")?.unwrap_or(0.1),
            lambda_self: self.parse_f64("lambda-self")?.unwrap_or(0.0),
            b: self.parse_f64("b")?.unwrap_or(1.0),
            sigma_c,
            mu_c,
        };
        params.validate().map_err(|e| ConfigError(e.to_string()))?;

        let mut solver = CanmConfig::<f64>::default();
        if let Some(eps) = self.parse_f64("eps")? {
            if !(1e-12..=1e-8).contains(&eps) {
                return Err(ConfigError(format!(
                    "eps = {eps:e} outside the accepted range [1e-12, 1e-8]"
                )));
            }
            solver.epsilon = eps;
        }
        if let Some(v) = self.parse_usize("max-iter")? {
            solver.max_iter = v;
        }
        if let Some(v) = self.parse_usize("cells-inner")? {
            solver.cells_inner = v;
        }
        if let Some(v) = self.parse_usize("cells-outer")? {
            solver.cells_outer = v;
        }
        if let Some(v) = self.parse_f64("x-inf")? {
            solver.x_inf = Some(v);
        }
        if let Some(v) = self.get("farfield") {
            solver.far_field = match v {
                "dirichlet" => FarField::Dirichlet,
                "robin" => FarField::Robin,
                other => {
                    return Err(ConfigError(format!(
                        "farfield: `{other}` is neither `dirichlet` nor `robin`"
                    )))
                }
            };
        }
        solver.validate().map_err(|e| ConfigError(e.to_string()))?;

        let sweep_param = match self.get("sweep-param") {
            None => None,
            Some("mu_c") => Some(SweepParam::MuC),
            Some("sigma_c") => Some(SweepParam::SigmaC),
            Some(other) => {
                return Err(ConfigError(format!(
                    "sweep-param: `{other}` is neither `mu_c` nor `sigma_c`"
                )))
            }
        };
        let sweep_range = match self.get("sweep-range") {
            None => None,
            Some(v) => {
                let Some((lo, hi)) = v.split_once(':') else {
                    return Err(ConfigError(format!("sweep-range: expected `lo:hi`, got `{v}`")));
                };
                let lo: f64 = lo
                    .trim()
                    .parse()
                    .map_err(|_| ConfigError(format!("sweep-range: bad number `{lo}`")))?;
                let hi: f64 = hi
                    .trim()
                    .parse()
                    .map_err(|_| ConfigError(format!("sweep-range: bad number `{hi}`")))?;
                Some((lo, hi))
            }
        };
        let sweep_count = self.parse_usize("sweep-count")?.unwrap_or(20);
        if sweep_count < 1 {
            return Err(ConfigError("sweep-count must be at least 1".into()));
        }
        if let (Some(p), Some((lo, hi))) = (sweep_param, sweep_range) {
            let floor = match p {
                SweepParam::MuC => 0.0,     // exclusive
                SweepParam::SigmaC => -0.0, // sigma_c = 0 allowed (pure fermion)
            };
            let ok = match p {
                SweepParam::MuC => lo > floor && hi > floor,
                SweepParam::SigmaC => lo >= 0.0 && hi >= 0.0,
            };
            if !ok {
                return Err(ConfigError(format!(
                    "sweep-range {lo}:{hi} outside the validity range of {}",
                    p.name()
                )));
            }
        }

        let emit = match self.get("emit") {
            None => vec![Emit::Csv, Emit::Json],
            Some(list) => {
                let mut out = Vec::new();
                for item in list.split(',') {
                    match item.trim() {
                        "csv" => out.push(Emit::Csv),
                        "json" => out.push(Emit::Json),
                        "svg" => out.push(Emit::Svg),
                        other => {
                            return Err(ConfigError(format!(
                                "emit: `{other}` is not one of csv, json, svg"
                            )))
                        }
                    }
                }
                out
            }
        };

        Ok(RunConfig {
            params,
            solver,
            sweep_param,
            sweep_range,
            sweep_count,
            warm_start: self.parse_bool("warm-start")?.unwrap_or(true),
            verify: self.parse_bool("verify")?.unwrap_or(false),
            out_dir: PathBuf::from(self.get("out-dir").unwrap_or("out")),
            emit,
        })
    }
}
