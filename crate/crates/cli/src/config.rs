//! Run configuration: built-in defaults, an optional flat TOML file, the
//! `DYNKIN_SEED` environment variable and command-line flags, in increasing
//! order of precedence.

use std::path::{Path, PathBuf};

use clap::Args;
use dynkin_core::{MarketParams, OptionKind, TimeGrid};
use serde::Deserialize;

use crate::CliError;

pub const SEED_ENV: &str = "DYNKIN_SEED";

pub const DEFAULT_PATHS: usize = 10_000;
pub const DEFAULT_RUNS: usize = 100;
pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_DEGREE: usize = 2;
pub const DEFAULT_HORIZON: f64 = 0.5;
pub const DEFAULT_Q_MAX: usize = 8;
pub const DEFAULT_SEED: u64 = 20_240_601;

/// Largest sweep exponent accepted; `T = horizon * 2^q`.
pub const MAX_Q: usize = 16;

/// Keys accepted in a configuration file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub kind: Option<String>,
    pub s0: Option<f64>,
    pub strike: Option<f64>,
    pub rate: Option<f64>,
    pub vol: Option<f64>,
    pub penalty: Option<f64>,
    pub horizon: Option<f64>,
    pub steps: Option<usize>,
    pub paths: Option<usize>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub degree: Option<usize>,
    pub antithetic: Option<bool>,
    pub q_max: Option<usize>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("bad config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

/// Flags shared by all subcommands.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Option type: call or put.
    #[arg(long)]
    pub kind: Option<String>,
    /// Initial stock price.
    #[arg(long)]
    pub s0: Option<f64>,
    #[arg(long)]
    pub strike: Option<f64>,
    /// Risk-free rate.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Volatility.
    #[arg(long)]
    pub vol: Option<f64>,
    /// Cancellation penalty delta.
    #[arg(long)]
    pub penalty: Option<f64>,
    /// Maturity T (base horizon for `sweep`).
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Number of time steps M.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Paths per run.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Independent runs to average.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Master seed (falls back to DYNKIN_SEED).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; does not change results.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Polynomial degree of the regression basis.
    #[arg(long)]
    pub degree: Option<usize>,
    /// Disable antithetic sampling.
    #[arg(long)]
    pub no_antithetic: bool,
    /// Largest sweep exponent q.
    #[arg(long)]
    pub q_max: Option<usize>,
    /// Flat TOML file with the same keys as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub market: MarketParams,
    pub grid: TimeGrid,
    pub n_paths: usize,
    pub n_runs: usize,
    pub basis_degree: usize,
    pub seed: u64,
    pub antithetic: bool,
    pub sweep_q_max: usize,
    /// `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            market: MarketParams::reference(OptionKind::Call, 140.0),
            grid: TimeGrid::new(DEFAULT_HORIZON, DEFAULT_STEPS).expect("valid default grid"),
            n_paths: DEFAULT_PATHS,
            n_runs: DEFAULT_RUNS,
            basis_degree: DEFAULT_DEGREE,
            seed: DEFAULT_SEED,
            antithetic: true,
            sweep_q_max: DEFAULT_Q_MAX,
            threads: None,
        }
    }
}

impl RunConfig {
    /// Merges file, environment seed and flags over the defaults and validates.
    pub fn resolve(
        file: Option<&FileConfig>,
        env_seed: Option<&str>,
        flags: &Overrides,
    ) -> Result<Self, CliError> {
        let empty = FileConfig::default();
        let file = file.unwrap_or(&empty);
        let base = Self::default();
        let pick = |flag: Option<f64>, from_file: Option<f64>, default: f64| {
            flag.or(from_file).unwrap_or(default)
        };

        let kind = match flags.kind.as_deref().or(file.kind.as_deref()) {
            Some(k) => k.parse::<OptionKind>().map_err(CliError::Config)?,
            None => base.market.kind,
        };
        let market = MarketParams {
            rate: pick(flags.rate, file.rate, base.market.rate),
            vol: pick(flags.vol, file.vol, base.market.vol),
            s0: pick(flags.s0, file.s0, base.market.s0),
            strike: pick(flags.strike, file.strike, base.market.strike),
            penalty: pick(flags.penalty, file.penalty, base.market.penalty),
            kind,
        };
        let horizon = pick(flags.horizon, file.horizon, DEFAULT_HORIZON);
        let steps = flags.steps.or(file.steps).unwrap_or(DEFAULT_STEPS);
        let grid = TimeGrid::new(horizon, steps).map_err(|e| CliError::Config(e.to_string()))?;

        let seed = match (flags.seed, file.seed, env_seed) {
            (Some(s), _, _) | (None, Some(s), _) => s,
            (None, None, Some(text)) => text.trim().parse::<u64>().map_err(|_| {
                CliError::Config(format!("{SEED_ENV} must be an unsigned integer, got `{text}`"))
            })?,
            (None, None, None) => DEFAULT_SEED,
        };

        let config = Self {
            market,
            grid,
            n_paths: flags.paths.or(file.paths).unwrap_or(DEFAULT_PATHS),
            n_runs: flags.runs.or(file.runs).unwrap_or(DEFAULT_RUNS),
            basis_degree: flags.degree.or(file.degree).unwrap_or(DEFAULT_DEGREE),
            seed,
            antithetic: !flags.no_antithetic && file.antithetic.unwrap_or(true),
            sweep_q_max: flags.q_max.or(file.q_max).unwrap_or(DEFAULT_Q_MAX),
            threads: flags.threads.or(file.threads),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.market.validate_for_pricing()?;
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.n_runs == 0 {
            return fail("runs must be at least 1".into());
        }
        if self.n_paths <= self.basis_degree {
            return fail(format!(
                "need more paths ({}) than regression coefficients ({})",
                self.n_paths,
                self.basis_degree + 1
            ));
        }
        if self.antithetic && !self.n_paths.is_multiple_of(2) {
            return fail(format!("antithetic sampling needs an even path count, got {}", self.n_paths));
        }
        if self.sweep_q_max > MAX_Q {
            return fail(format!("q_max must be at most {MAX_Q}, got {}", self.sweep_q_max));
        }
        if self.threads == Some(0) {
            return fail("threads must be at least 1".into());
        }
        Ok(())
    }

    pub fn with_market(mut self, market: MarketParams) -> Self {
        self.market = market;
        self
    }

    pub fn with_grid(mut self, horizon: f64, steps: usize) -> Result<Self, CliError> {
        self.grid = TimeGrid::new(horizon, steps)?;
        Ok(self)
    }

    pub fn with_sampling(mut self, n_paths: usize, n_runs: usize) -> Self {
        self.n_paths = n_paths;
        self.n_runs = n_runs;
        self
    }
}
