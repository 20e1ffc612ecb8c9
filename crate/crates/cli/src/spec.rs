//! Run specification: parsed flags merged over an optional config file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use pulseopt::model::DEFAULT_DELTA;
use pulseopt::{SolverConfig, Start, StopRule};

use crate::CliError;

pub const DELTA_ENV: &str = "PULSEOPT_DEFAULT_DELTA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    SweepEnergy,
    SweepWidth,
    Trace,
    Verify,
    ApproxCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::SweepEnergy => "sweep-energy",
            Command::SweepWidth => "sweep-width",
            Command::Trace => "trace",
            Command::Verify => "verify",
            Command::ApproxCheck => "approx-check",
        }
    }
}

/// `min:max:count[:log]`, at least two points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    pub log: bool,
}

impl Range {
    pub fn points(&self) -> Vec<f64> {
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|k| {
                let s = k as f64 / last;
                if self.log {
                    (self.min.ln() + s * (self.max.ln() - self.min.ln())).exp()
                } else {
                    self.min + s * (self.max - self.min)
                }
            })
            .collect()
    }
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(format!("expected min:max:count[:log], got `{s}`"));
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("bad number `{p}`: {e}"));
        let (min, max) = (num(parts[0])?, num(parts[1])?);
        let count: usize = parts[2]
            .trim()
            .parse()
            .map_err(|e| format!("bad count `{}`: {e}", parts[2]))?;
        let log = match parts.get(3).map(|p| p.trim()) {
            None | Some("lin") => false,
            Some("log") => true,
            Some(other) => return Err(format!("spacing must be `log` or `lin`, got `{other}`")),
        };
        if count < 2 {
            return Err(format!("a range needs at least 2 points, got {count}"));
        }
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(format!("range needs finite min < max, got {min}:{max}"));
        }
        if log && min <= 0.0 {
            return Err("log spacing needs a positive minimum".into());
        }
        Ok(Range { min, max, count, log })
    }
}

/// `min:max` over word widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WidthRange {
    pub min: usize,
    pub max: usize,
}

impl FromStr for WidthRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| format!("expected min:max, got `{s}`"))?;
        let min: usize = a.trim().parse().map_err(|e| format!("bad width `{a}`: {e}"))?;
        let max: usize = b.trim().parse().map_err(|e| format!("bad width `{b}`: {e}"))?;
        if min == 0 || min > max {
            return Err(format!("width range needs 1 <= min <= max, got {min}:{max}"));
        }
        Ok(WidthRange { min, max })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartSpec {
    AllTwos,
    AllOnes,
    Custom(Vec<f64>),
}

impl StartSpec {
    pub fn to_start(&self) -> Start {
        match self {
            StartSpec::AllTwos => Start::AllTwos,
            StartSpec::AllOnes => Start::AllOnesPlusEps,
            StartSpec::Custom(v) => Start::Custom(v.clone()),
        }
    }
}

impl FromStr for StartSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "all-twos" => Ok(StartSpec::AllTwos),
            "all-ones" => Ok(StartSpec::AllOnes),
            other => {
                let list = other
                    .strip_prefix("custom:")
                    .ok_or_else(|| format!("start must be all-twos, all-ones or custom:<csv>, got `{other}`"))?;
                list.split(',')
                    .map(|v| v.trim().parse::<f64>().map_err(|e| format!("bad current `{v}`: {e}")))
                    .collect::<Result<Vec<_>, _>>()
                    .map(StartSpec::Custom)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopSpec {
    Mse(f64),
    Iterate(f64),
    Iters(usize),
}

impl StopSpec {
    pub fn to_rule(self) -> StopRule {
        match self {
            StopSpec::Mse(x) => StopRule::MseDelta(x),
            StopSpec::Iterate(x) => StopRule::IterateDelta(x),
            StopSpec::Iters(n) => StopRule::MaxIters(n),
        }
    }
}

impl FromStr for StopSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, value) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| format!("stop rule must be mse:<tol>, iterate:<tol> or iters:<n>, got `{s}`"))?;
        let tol = || {
            value
                .parse::<f64>()
                .ok()
                .filter(|x| *x > 0.0)
                .ok_or_else(|| format!("stop tolerance must be a positive number, got `{value}`"))
        };
        match kind {
            "mse" => Ok(StopSpec::Mse(tol()?)),
            "iterate" => Ok(StopSpec::Iterate(tol()?)),
            "iters" => match value.parse::<usize>() {
                Ok(n) if n > 0 => Ok(StopSpec::Iters(n)),
                _ => Err(format!("iteration count must be a positive integer, got `{value}`")),
            },
            _ => Err(format!("unknown stop rule `{kind}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Table,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Format as clap::ValueEnum>::from_str(s.trim(), false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Energy {
    Single(f64),
    Range(Range),
}

/// Everything a command needs, after merging flags, config file,
/// environment and defaults.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSpec {
    pub command: Command,
    pub bits: usize,
    pub energy: Option<Energy>,
    pub delta: f64,
    pub epsilon: f64,
    pub start: StartSpec,
    pub stop: Vec<StopSpec>,
    pub max_iters: usize,
    pub format: Format,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub trials: u64,
    pub bits_range: WidthRange,
    pub currents: Range,
    pub durations: Range,
    pub low_p: f64,
    pub psnr_target: f64,
    pub scale_durations: Option<f64>,
}

impl RunSpec {
    pub fn solver_config(&self) -> SolverConfig {
        let mut config = SolverConfig::default().with_start(self.start.to_start());
        if !self.stop.is_empty() {
            config.stop = self.stop.iter().map(|s| s.to_rule()).collect();
        }
        config.max_outer_iters = self.max_iters;
        config
    }

    pub fn single_energy(&self) -> Result<f64, CliError> {
        match self.energy {
            Some(Energy::Single(e)) => Ok(e),
            Some(Energy::Range(_)) => Err(CliError::Usage(format!(
                "{} takes a single --energy, not a range",
                self.command.name()
            ))),
            None => Err(CliError::Usage(format!("{} needs --energy", self.command.name()))),
        }
    }

    pub fn energy_range(&self) -> Result<Range, CliError> {
        match self.energy {
            Some(Energy::Range(r)) => Ok(r),
            _ => Err(CliError::Usage(format!("{} needs --energy-range", self.command.name()))),
        }
    }
}

/// `key = value` lines keyed by long flag names; `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

pub const CONFIG_KEYS: &[&str] = &[
    "bits",
    "energy",
    "energy-range",
    "delta",
    "epsilon",
    "start",
    "stop",
    "max-iters",
    "format",
    "out",
    "seed",
    "trials",
    "bits-range",
    "currents",
    "durations",
    "low-p",
    "psnr-target",
];

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
            let key = k.trim().trim_start_matches("--").replace('_', "-");
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(format!("line {}: unknown key `{key}`", n + 1));
            }
            entries.insert(key, v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        self.entries
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}")))
            })
            .transpose()
    }

    /// Comma-separated list, used for `stop`.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(|item| {
                    item.parse::<T>()
                        .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}")))
                })
                .collect(),
        }
    }
}

/// Δ when neither flag nor config sets it.
pub fn default_delta() -> Result<f64, CliError> {
    match std::env::var(DELTA_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|e| CliError::Usage(format!("{DELTA_ENV}=`{v}`: {e}"))),
        Err(_) => Ok(DEFAULT_DELTA),
    }
}
