//! TOML run configuration with line-precise diagnostics.
//!
//! ```toml
//! experiment = "e1"
//! n = 64
//! kappa1 = -0.2
//!
//! [output]
//! dir = "runs/e1"
//!
//! [sweep]
//! parameter = "kappa1"
//! linspace = [-0.6, 0.6, 13]
//!
//! [simulate]
//! init = "admissible"
//! homogeneous = true
//! record_every = 10
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use lhs_core::experiments::{ConfigOverrides, ExperimentConfig, ExperimentId};
use serde::Deserialize;
use toml::Spanned;

/// A configuration problem located in the source file.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path.display())?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
            if let Some(col) = self.column {
                write!(f, ":{col}")?;
            }
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: Option<Spanned<String>>,
    pub values: Option<Spanned<Vec<f64>>>,
    pub linspace: Option<Spanned<(f64, f64, usize)>>,
    /// Shorthand for `parameter = "seed"` over `seeds` consecutive seeds.
    pub seeds: Option<Spanned<u64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Admissible,
    Uniform,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub init: Option<InitKind>,
    pub homogeneous: Option<bool>,
    pub record_every: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: Option<Spanned<String>>,
    n: Option<usize>,
    d: Option<usize>,
    kappa0: Option<f64>,
    kappa1: Option<f64>,
    delta: Option<f64>,
    dt: Option<f64>,
    t_end: Option<f64>,
    seed: Option<u64>,
    omega_spread: Option<f64>,
    samples: Option<usize>,
    perturbation: Option<f64>,
    seeds: Option<usize>,
    n_values: Option<Vec<usize>>,
    horizons: Option<Vec<f64>>,
    p_values: Option<Vec<f64>>,
    check_time: Option<f64>,
    fd_step: Option<f64>,
    fd_floor: Option<f64>,
    output: Option<OutputSection>,
    sweep: Option<SweepSection>,
    simulate: Option<SimulateSection>,
}

/// Parsed file: parameter overrides plus the command-specific sections.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    pub path: PathBuf,
    pub text: String,
    pub experiment: Option<Spanned<String>>,
    pub overrides: ConfigOverrides,
    pub output: OutputSection,
    pub sweep: Option<SweepSection>,
    pub simulate: SimulateSection,
}

/// 1-based line and column of a byte offset.
pub fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(offset, |k| offset - k - 1) + 1;
    (line, col)
}

/// Line of the first `key = ...` assignment, ignoring comments.
pub fn line_of_key(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key)
            .map(|rest| rest.trim_start().starts_with('='))
            .unwrap_or(false)
    })
    .map(|k| k + 1)
}

const PARAMETER_KEYS: [&str; 18] = [
    "n", "d", "kappa0", "kappa1", "delta", "dt", "t_end", "seed", "omega_spread", "samples", "perturbation",
    "seeds", "n_values", "horizons", "p_values", "check_time", "fd_step", "fd_floor",
];

impl ConfigFile {
    pub fn parse(path: &Path, text: &str) -> Result<Self, Diagnostic> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = match e.span() {
                Some(span) => {
                    let (l, c) = line_col(text, span.start);
                    (Some(l), Some(c))
                }
                None => (None, None),
            };
            Diagnostic {
                path: path.to_path_buf(),
                line,
                column,
                message: e.message().trim().to_string(),
            }
        })?;
        let overrides = ConfigOverrides {
            n: raw.n,
            d: raw.d,
            kappa0: raw.kappa0,
            kappa1: raw.kappa1,
            delta: raw.delta,
            dt: raw.dt,
            t_end: raw.t_end,
            seed: raw.seed,
            omega_spread: raw.omega_spread,
            samples: raw.samples,
            perturbation: raw.perturbation,
            seeds: raw.seeds,
            n_values: raw.n_values,
            horizons: raw.horizons,
            p_values: raw.p_values,
            check_time: raw.check_time,
            fd_step: raw.fd_step,
            fd_floor: raw.fd_floor,
        };
        Ok(Self {
            path: path.to_path_buf(),
            text: text.to_string(),
            experiment: raw.experiment,
            overrides,
            output: raw.output.unwrap_or_default(),
            sweep: raw.sweep,
            simulate: raw.simulate.unwrap_or_default(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, Diagnostic> {
        let text = std::fs::read_to_string(path).map_err(|e| Diagnostic {
            path: path.to_path_buf(),
            line: None,
            column: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(path, &text)
    }

    /// Diagnostic attached to the span of a parsed value.
    pub fn at_span(&self, span: std::ops::Range<usize>, message: impl Into<String>) -> Diagnostic {
        let (l, c) = line_col(&self.text, span.start);
        Diagnostic {
            path: self.path.clone(),
            line: Some(l),
            column: Some(c),
            message: message.into(),
        }
    }

    /// Diagnostic at the line of the key a message names, when it names one.
    pub fn blame(&self, message: impl Into<String>) -> Diagnostic {
        let message = message.into();
        let line = PARAMETER_KEYS
            .iter()
            .filter(|k| mentions(&message, k))
            .filter_map(|k| line_of_key(&self.text, k))
            .min();
        Diagnostic {
            path: self.path.clone(),
            line,
            column: None,
            message,
        }
    }

    /// Experiment id from the file, overridden by `cli` when given.
    pub fn experiment_id(&self, cli: Option<&str>) -> Result<ExperimentId, Diagnostic> {
        match (cli, &self.experiment) {
            (Some(id), _) => id.parse().map_err(|e: lhs_core::Error| Diagnostic {
                path: PathBuf::from("--experiment"),
                line: None,
                column: None,
                message: e.to_string(),
            }),
            (None, Some(id)) => id
                .get_ref()
                .parse()
                .map_err(|e: lhs_core::Error| self.at_span(id.span(), e.to_string())),
            (None, None) => Err(Diagnostic {
                path: self.path.clone(),
                line: None,
                column: None,
                message: "no experiment id: set `experiment = \"e1\"` or pass --experiment".into(),
            }),
        }
    }

    /// Resolved and validated experiment configuration.
    pub fn experiment_config(&self, id: ExperimentId, seed: Option<u64>) -> Result<ExperimentConfig, Diagnostic> {
        let mut cfg = ExperimentConfig::resolve(id, &self.overrides);
        if let Some(seed) = seed {
            cfg.seed = seed;
        }
        cfg.validate().map_err(|e| self.blame(e.to_string()))?;
        Ok(cfg)
    }
}

fn mentions(message: &str, key: &str) -> bool {
    message
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .any(|w| w == key)
}

/// Values of a sweep axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub parameter: String,
    pub values: Vec<f64>,
}

const SWEEPABLE: [&str; 13] = [
    "n", "d", "kappa0", "kappa1", "delta", "dt", "t_end", "seed", "omega_spread", "samples", "perturbation", "seeds",
    "check_time",
];

impl SweepAxis {
    pub fn from_config(file: &ConfigFile, base_seed: u64) -> Result<Self, Diagnostic> {
        let whole = |msg: &str| Diagnostic {
            path: file.path.clone(),
            line: file.text.lines().position(|l| l.trim() == "[sweep]").map(|k| k + 1),
            column: None,
            message: msg.to_string(),
        };
        let sweep = file.sweep.as_ref().ok_or_else(|| whole("missing [sweep] section"))?;
        if let Some(count) = &sweep.seeds {
            if sweep.values.is_some() || sweep.linspace.is_some() {
                return Err(file.at_span(count.span(), "`seeds` cannot be combined with `values` or `linspace`"));
            }
            if *count.get_ref() == 0 {
                return Err(file.at_span(count.span(), "sweep axis is empty"));
            }
            let values = (0..*count.get_ref()).map(|k| (base_seed + k) as f64).collect();
            return Ok(Self {
                parameter: "seed".into(),
                values,
            });
        }
        let parameter = sweep.parameter.as_ref().ok_or_else(|| whole("[sweep] needs `parameter` (or `seeds`)"))?;
        if !SWEEPABLE.contains(&parameter.get_ref().as_str()) {
            return Err(file.at_span(
                parameter.span(),
                format!("cannot sweep over '{}' (allowed: {})", parameter.get_ref(), SWEEPABLE.join(", ")),
            ));
        }
        let values = match (&sweep.values, &sweep.linspace) {
            (Some(v), None) => {
                if v.get_ref().is_empty() {
                    return Err(file.at_span(v.span(), "sweep axis is empty"));
                }
                v.get_ref().clone()
            }
            (None, Some(l)) => {
                let &(a, b, count) = l.get_ref();
                if count == 0 {
                    return Err(file.at_span(l.span(), "sweep axis is empty"));
                }
                if count == 1 {
                    vec![a]
                } else {
                    (0..count).map(|k| a + (b - a) * k as f64 / (count - 1) as f64).collect()
                }
            }
            (Some(v), Some(_)) => return Err(file.at_span(v.span(), "give either `values` or `linspace`, not both")),
            (None, None) => return Err(file.at_span(parameter.span(), "[sweep] needs `values` or `linspace`")),
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(file.at_span(parameter.span(), "sweep values must be finite"));
        }
        let integral = ["n", "d", "seed", "samples", "seeds"].contains(&parameter.get_ref().as_str());
        if integral && values.iter().any(|v| v.fract() != 0.0 || *v < 0.0) {
            return Err(file.at_span(
                parameter.span(),
                format!("'{}' takes nonnegative integer values", parameter.get_ref()),
            ));
        }
        Ok(Self {
            parameter: parameter.get_ref().clone(),
            values,
        })
    }

    /// `cfg` with the swept parameter set to `value`.
    pub fn apply(&self, cfg: &ExperimentConfig, value: f64) -> ExperimentConfig {
        let mut c = cfg.clone();
        match self.parameter.as_str() {
            "n" => c.n = value as usize,
            "d" => c.d = value as usize,
            "kappa0" => c.kappa0 = value,
            "kappa1" => c.kappa1 = value,
            "delta" => c.delta = value,
            "dt" => c.dt = value,
            "t_end" => c.t_end = value,
            "seed" => c.seed = value as u64,
            "omega_spread" => c.omega_spread = value,
            "samples" => c.samples = value as usize,
            "perturbation" => c.perturbation = value,
            "seeds" => c.seeds = value as usize,
            "check_time" => c.check_time = value,
            other => unreachable!("unchecked sweep parameter {other}"),
        }
        c
    }
}
