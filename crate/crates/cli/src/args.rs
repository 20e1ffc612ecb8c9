//! Command-line flags and their resolution into a [`RunSpec`].

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::spec::{
    default_delta, Command, ConfigFile, Energy, Format, Range, RunSpec, StartSpec, StopSpec, WidthRange,
};
use crate::CliError;
use pulseopt::acs::DEFAULT_MAX_OUTER_ITERS;
use pulseopt::model::DEFAULT_EPSILON;

#[derive(Debug, Parser)]
#[command(
    name = "pulseopt",
    version,
    about = "Per-bit MRAM write-pulse allocation under an energy budget"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArg,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum CommandArg {
    /// Optimize one word and print the allocation.
    Solve,
    /// Uniform vs. optimized MSE and PSNR over a range of budgets.
    SweepEnergy,
    /// MSE reduction ratio over a range of word widths.
    SweepWidth,
    /// Per-iteration currents, durations and MSE of the alternate search.
    Trace,
    /// Cross-check the solver against the closed forms and the oracles.
    Verify,
    /// Exact vs. approximate failure probability over a grid.
    ApproxCheck,
}

impl From<CommandArg> for Command {
    fn from(c: CommandArg) -> Self {
        match c {
            CommandArg::Solve => Command::Solve,
            CommandArg::SweepEnergy => Command::SweepEnergy,
            CommandArg::SweepWidth => Command::SweepWidth,
            CommandArg::Trace => Command::Trace,
            CommandArg::Verify => Command::Verify,
            CommandArg::ApproxCheck => Command::ApproxCheck,
        }
    }
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Flags {
    /// Key-value file with defaults for any long flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Word width B.
    #[arg(long, global = true)]
    pub bits: Option<usize>,
    /// Energy budget.
    #[arg(long, global = true, conflicts_with = "energy_range")]
    pub energy: Option<f64>,
    /// Budgets as min:max:count[:log].
    #[arg(long, global = true)]
    pub energy_range: Option<Range>,
    /// Thermal stability factor.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Current floor offset; currents stay at or above 1 + epsilon.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// all-twos, all-ones or custom:<i0,i1,...>.
    #[arg(long, global = true)]
    pub start: Option<StartSpec>,
    /// mse:<tol>, iterate:<tol> or iters:<n>; repeat or comma-separate.
    #[arg(long, global = true, value_delimiter = ',')]
    pub stop: Vec<StopSpec>,
    /// Hard cap on outer iterations.
    #[arg(long, global = true)]
    pub max_iters: Option<usize>,
    #[arg(long, global = true)]
    pub format: Option<Format>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Monte Carlo seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo trials.
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    /// Word widths for sweep-width, as min:max.
    #[arg(long, global = true)]
    pub bits_range: Option<WidthRange>,
    /// Current grid for approx-check, as min:max:count[:log].
    #[arg(long, global = true)]
    pub currents: Option<Range>,
    /// Duration grid for approx-check, as min:max:count[:log].
    #[arg(long, global = true)]
    pub durations: Option<Range>,
    /// approx-check reports the worst error where the exact probability is at most this.
    #[arg(long, global = true)]
    pub low_p: Option<f64>,
    /// PSNR in dB at which sweep-energy compares the two allocations.
    #[arg(long, global = true)]
    pub psnr_target: Option<f64>,
    /// Scale the solved durations before verify runs its checks.
    #[arg(long, global = true, hide = true)]
    pub debug_scale_durations: Option<f64>,
}

const DEFAULT_BITS: usize = 8;
const DEFAULT_ENERGY: f64 = 300.0;
const DEFAULT_ENERGY_RANGE: &str = "100:500:801";
const DEFAULT_TRIALS: u64 = 10_000_000;
const DEFAULT_BITS_RANGE: &str = "1:32";
const DEFAULT_CURRENTS: &str = "1.2:4:57";
const DEFAULT_DURATIONS: &str = "1:100:100:log";
const DEFAULT_LOW_P: f64 = 1e-2;
const DEFAULT_PSNR_TARGET: f64 = 40.0;

impl Cli {
    /// Flags win over the config file, which wins over the environment and
    /// built-in defaults.
    pub fn resolve(&self) -> Result<RunSpec, CliError> {
        let f = &self.flags;
        let cfg = match &f.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let command = Command::from(self.command);

        let energy = match (f.energy, f.energy_range) {
            (Some(e), _) => Some(Energy::Single(e)),
            (None, Some(r)) => Some(Energy::Range(r)),
            (None, None) => match (cfg.get::<f64>("energy")?, cfg.get::<Range>("energy-range")?) {
                (Some(_), Some(_)) => return Err(CliError::Usage("config sets both energy and energy-range".into())),
                (Some(e), None) => Some(Energy::Single(e)),
                (None, Some(r)) => Some(Energy::Range(r)),
                (None, None) => match command {
                    Command::Solve | Command::Trace | Command::Verify => Some(Energy::Single(DEFAULT_ENERGY)),
                    Command::SweepEnergy => Some(Energy::Range(DEFAULT_ENERGY_RANGE.parse().expect("valid default"))),
                    Command::SweepWidth | Command::ApproxCheck => None,
                },
            },
        };
        let delta = match f.delta.or(cfg.get("delta")?) {
            Some(d) => d,
            None => default_delta()?,
        };
        let stop = if f.stop.is_empty() {
            cfg.get_list("stop")?
        } else {
            f.stop.clone()
        };
        let bits = f.bits.or(cfg.get("bits")?).unwrap_or(DEFAULT_BITS);
        if bits == 0 {
            return Err(CliError::Usage("--bits must be at least 1".into()));
        }
        let low_p = f.low_p.or(cfg.get("low-p")?).unwrap_or(DEFAULT_LOW_P);
        if !(low_p > 0.0) {
            return Err(CliError::Usage("--low-p must be positive".into()));
        }
        let trials = f.trials.or(cfg.get("trials")?).unwrap_or(DEFAULT_TRIALS);
        if trials == 0 {
            return Err(CliError::Usage("--trials must be at least 1".into()));
        }
        let max_iters = f.max_iters.or(cfg.get("max-iters")?).unwrap_or(DEFAULT_MAX_OUTER_ITERS);
        if max_iters == 0 {
            return Err(CliError::Usage("--max-iters must be at least 1".into()));
        }

        Ok(RunSpec {
            command,
            bits,
            energy,
            delta,
            epsilon: f.epsilon.or(cfg.get("epsilon")?).unwrap_or(DEFAULT_EPSILON),
            start: f.start.clone().or(cfg.get("start")?).unwrap_or(StartSpec::AllTwos),
            stop,
            max_iters,
            format: f.format.or(cfg.get("format")?).unwrap_or_default(),
            out: f.out.clone().or(cfg.get("out")?),
            seed: f.seed.or(cfg.get("seed")?).unwrap_or(0),
            trials,
            bits_range: f
                .bits_range
                .or(cfg.get("bits-range")?)
                .unwrap_or_else(|| DEFAULT_BITS_RANGE.parse().expect("valid default")),
            currents: f
                .currents
                .or(cfg.get("currents")?)
                .unwrap_or_else(|| DEFAULT_CURRENTS.parse().expect("valid default")),
            durations: f
                .durations
                .or(cfg.get("durations")?)
                .unwrap_or_else(|| DEFAULT_DURATIONS.parse().expect("valid default")),
            low_p,
            psnr_target: f.psnr_target.or(cfg.get("psnr-target")?).unwrap_or(DEFAULT_PSNR_TARGET),
            scale_durations: f.debug_scale_durations,
        })
    }
}
