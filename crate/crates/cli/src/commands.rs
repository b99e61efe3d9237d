use dynkin_core::closedform::{
    perpetual_cancellable_call, perpetual_cancellable_put, PerpetualParams,
};
use dynkin_core::lattice::{tree_game_value, tree_switching_values, LatticeModel};
use dynkin_core::lsmc::game_value_estimate;
use dynkin_core::regress::RegressionBasis;
use dynkin_core::{simulate_paths, GameSpec, MarketParams, OptionKind};
use rayon::prelude::*;

use crate::{with_threads, CliError, RunConfig};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replica `index` under `master`.
pub fn run_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub mean: f64,
    pub per_run: Vec<f64>,
    /// Sample standard deviation across runs.
    pub std_dev: f64,
    /// Standard error of `mean`. With a single run this is the within-run
    /// Monte Carlo error of the time-0 average.
    pub std_error: f64,
}

fn summarize(per_run: Vec<f64>, single_run_stderr: f64) -> SolveReport {
    let n = per_run.len() as f64;
    let mean = per_run.iter().sum::<f64>() / n;
    let (std_dev, std_error) = if per_run.len() > 1 {
        let var = per_run.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var.sqrt(), (var / n).sqrt())
    } else {
        (0.0, single_run_stderr)
    };
    SolveReport { mean, per_run, std_dev, std_error }
}

fn price_runs(config: &RunConfig, cancellable: bool) -> Result<SolveReport, CliError> {
    config.validate()?;
    let spec = if cancellable {
        GameSpec::cancellable_option(&config.market, &config.grid)?
    } else {
        GameSpec::american_option(&config.market, &config.grid)?
    };
    let basis = RegressionBasis::new(config.basis_degree, config.market.strike)?;
    let runs = with_threads(config.threads, || {
        (0..config.n_runs as u64)
            .into_par_iter()
            .map(|i| {
                let paths = simulate_paths(
                    &config.market,
                    &config.grid,
                    config.n_paths,
                    run_seed(config.seed, i),
                    config.antithetic,
                )?;
                game_value_estimate(&paths, &spec, basis, cancellable)
            })
            .collect::<dynkin_core::Result<Vec<_>>>()
    })??;
    let stderr0 = runs[0].stderr;
    Ok(summarize(runs.into_iter().map(|r| r.v0).collect(), stderr0))
}

/// Monte Carlo value of the cancellable option averaged over `n_runs`
/// independent replicas.
pub fn cmd_price(config: &RunConfig) -> Result<SolveReport, CliError> {
    price_runs(config, true)
}

/// Same as [`cmd_price`] without the cancellation right.
pub fn cmd_price_american(config: &RunConfig) -> Result<SolveReport, CliError> {
    price_runs(config, false)
}

/// Perpetual cancellable value at the configured spot.
pub fn perpetual_reference(market: &MarketParams) -> Result<f64, CliError> {
    Ok(match market.kind {
        OptionKind::Call => perpetual_cancellable_call(market),
        OptionKind::Put => perpetual_cancellable_put(market)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub horizon: f64,
    pub value: f64,
    pub std_error: f64,
    pub perpetual: f64,
}

/// Prices horizons `T = horizon * 2^q` for `q = 0..=sweep_q_max` with the
/// step count held fixed. Row `q` uses master seed `run_seed(seed, q)`.
pub fn cmd_sweep(config: &RunConfig) -> Result<Vec<SweepRow>, CliError> {
    config.validate()?;
    let perpetual = perpetual_reference(&config.market)?;
    let base = config.grid.horizon();
    (0..=config.sweep_q_max)
        .map(|q| {
            let horizon = base * 2f64.powi(q as i32);
            let mut row_config = config.clone().with_grid(horizon, config.grid.steps())?;
            row_config.seed = run_seed(config.seed, q as u64);
            let report = cmd_price(&row_config)?;
            Ok(SweepRow { horizon, value: report.mean, std_error: report.std_error, perpetual })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeReport {
    pub v0: f64,
    pub american_v0: f64,
    pub y0: f64,
    pub y1: f64,
    /// Largest node-wise `|(Y1 - Y0) - V|`.
    pub identity_error: f64,
    /// Largest violation of `G <= Y1 - Y0 <= G + delta`; zero or negative
    /// when the band holds everywhere.
    pub band_violation: f64,
    /// The two errors above divided node-wise by `max(1, |V|)`; far-out nodes
    /// of long trees carry values where absolute rounding exceeds 1.
    pub identity_error_scaled: f64,
    pub band_violation_scaled: f64,
    /// Nodes where switching out of both modes is strictly optimal.
    pub double_switch_nodes: usize,
}

/// Exact binomial values of the game, the American option and the
/// switching pair, with the node-wise identity and band checks.
pub fn cmd_tree(config: &RunConfig) -> Result<TreeReport, CliError> {
    config.validate()?;
    let model = LatticeModel::new(&config.market, &config.grid)?;
    let spec = GameSpec::cancellable_option(&config.market, &config.grid)?;
    let american = GameSpec::american_option(&config.market, &config.grid)?;
    let game = tree_game_value(&model, &spec)?;
    let american_v0 = tree_game_value(&model, &american)?.v0;
    let sw = tree_switching_values(&model, &spec)?;
    let diff = sw.difference();

    let mut identity_error = 0.0_f64;
    let mut band_violation = f64::NEG_INFINITY;
    let mut identity_error_scaled = 0.0_f64;
    let mut band_violation_scaled = f64::NEG_INFINITY;
    let mut double_switch_nodes = 0;
    for m in 0..=model.steps() {
        for j in 0..=m {
            let g = config.market.payoff(model.node_price(m, j));
            let d = diff[m][j];
            let v = game.values[m][j];
            let scale = v.abs().max(1.0);
            let identity = (d - v).abs();
            let band = (g - d).max(d - g - config.market.penalty);
            identity_error = identity_error.max(identity);
            band_violation = band_violation.max(band);
            identity_error_scaled = identity_error_scaled.max(identity / scale);
            band_violation_scaled = band_violation_scaled.max(band / scale);
            if sw.switch_from0[m][j] && sw.switch_from1[m][j] {
                double_switch_nodes += 1;
            }
        }
    }
    Ok(TreeReport {
        v0: game.v0,
        american_v0,
        y0: sw.y0[0][0],
        y1: sw.y1[0][0],
        identity_error,
        band_violation,
        identity_error_scaled,
        band_violation_scaled,
        double_switch_nodes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerpetualReport {
    pub kind: OptionKind,
    pub value: f64,
    /// Put constants; `None` for calls.
    pub put: Option<PerpetualParams>,
}

pub fn cmd_perpetual(config: &RunConfig) -> Result<PerpetualReport, CliError> {
    config.validate()?;
    let put = match config.market.kind {
        OptionKind::Put => Some(PerpetualParams::new(&config.market)?),
        OptionKind::Call => None,
    };
    Ok(PerpetualReport {
        kind: config.market.kind,
        value: perpetual_reference(&config.market)?,
        put,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_seeds_are_distinct_and_stable() {
        let seeds: Vec<u64> = (0..1000).map(|i| run_seed(7, i)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
        assert_eq!(run_seed(7, 3), seeds[3]);
        assert_ne!(run_seed(8, 3), seeds[3]);
    }

    #[test]
    fn summary_statistics() {
        let r = summarize(vec![1.0, 2.0, 3.0, 4.0], 9.0);
        assert_eq!(r.mean, 2.5);
        assert!((r.std_dev - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((r.std_error - r.std_dev / 2.0).abs() < 1e-15);
        assert_eq!(summarize(vec![1.5], 0.25).std_error, 0.25);
    }

    #[test]
    fn single_step_price_matches_formula() {
        // one step, one run: max(G, min(G + delta, e^{-rh} mean G(S_h)))
        let market = MarketParams::reference(OptionKind::Put, 100.0);
        let config = RunConfig::default()
            .with_market(market)
            .with_grid(0.01, 1)
            .unwrap()
            .with_sampling(2000, 1);
        let report = cmd_price(&config).unwrap();
        let paths = simulate_paths(&market, &config.grid, 2000, run_seed(config.seed, 0), true).unwrap();
        let mean = paths.at_step(1).iter().map(|&s| market.payoff(s)).sum::<f64>() / 2000.0;
        let cont = (-market.rate * 0.01).exp() * mean;
        let want = (market.payoff(100.0) + market.penalty).min(market.payoff(100.0).max(cont));
        assert!((report.mean - want).abs() < 1e-12);
    }
}
