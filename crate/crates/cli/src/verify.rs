//! Invariant suite run by `dynkin verify`.

use std::fmt;

use dynkin_core::closedform::PerpetualParams;
use dynkin_core::lattice::{tree_saddle_check, LatticeModel};
use dynkin_core::lsmc::{game_backward_induction, switching_backward_induction, StepExpectation};
use dynkin_core::regress::RegressionBasis;
use dynkin_core::{simulate_paths, GameSpec, MarketParams, OptionKind};

use crate::commands::{cmd_tree, run_seed};
use crate::{with_threads, CliError, RunConfig};

pub const ANCHOR_DELTA_STAR: f64 = 30.3;
pub const ANCHOR_K_STAR: f64 = 69.9;
pub const ANCHOR_TOLERANCE: f64 = 0.05;
/// Node-wise, relative to `max(1, |V|)`.
pub const TREE_TOLERANCE: f64 = 1e-12;
pub const SADDLE_TOLERANCE: f64 = 1e-10;
pub const CLAMP_TOLERANCE: f64 = 1e-10;
pub const SADDLE_STEPS: usize = 8;
pub const SADDLE_RANDOM_DEVIATIONS: usize = 200;
/// The Monte Carlo identities are structural, so a small sample suffices.
pub const LSMC_MAX_PATHS: usize = 4000;
pub const LSMC_MAX_STEPS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    /// Observed error; the check passes when `margin <= tolerance`.
    pub margin: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(name: impl Into<String>, margin: f64, tolerance: f64) -> Self {
        Self { name: name.into(), margin, tolerance }
    }

    pub fn passed(&self) -> bool {
        self.margin <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed())
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {:<36} margin {:.3e} (tolerance {:.1e})",
                if c.passed() { "PASS" } else { "FAIL" },
                c.name,
                c.margin,
                c.tolerance
            )?;
        }
        let failed = self.failures().count();
        write!(f, "{} of {} checks passed", self.checks.len() - failed, self.checks.len())
    }
}

/// Runs every check for the configured market. Invalid configurations are
/// errors, not failed checks.
pub fn cmd_verify(config: &RunConfig) -> Result<VerifyReport, CliError> {
    config.validate()?;
    let mut checks = Vec::new();

    // the anchors belong to the reference put, whatever market is configured
    let reference = PerpetualParams::new(&MarketParams::reference(OptionKind::Put, 100.0))?;
    checks.push(Check::new(
        "anchor delta*",
        (reference.delta_star - ANCHOR_DELTA_STAR).abs(),
        ANCHOR_TOLERANCE,
    ));
    let k_star = reference.k_star.unwrap_or(f64::NAN);
    checks.push(Check::new(
        "anchor k*",
        if k_star.is_nan() { f64::INFINITY } else { (k_star - ANCHOR_K_STAR).abs() },
        ANCHOR_TOLERANCE,
    ));

    let tree = cmd_tree(config)?;
    checks.push(Check::new("tree V = Y1 - Y0", tree.identity_error_scaled, TREE_TOLERANCE));
    checks.push(Check::new("tree band G <= Y1 - Y0 <= G + delta", tree.band_violation_scaled.max(0.0), TREE_TOLERANCE));
    checks.push(Check::new("tree no double switch", tree.double_switch_nodes as f64, 0.0));

    let small = config.clone().with_grid(config.grid.horizon(), SADDLE_STEPS)?;
    let model = LatticeModel::new(&small.market, &small.grid)?;
    let spec = GameSpec::cancellable_option(&small.market, &small.grid)?;
    let audit = tree_saddle_check(&model, &spec, SADDLE_RANDOM_DEVIATIONS, config.seed, true)?;
    checks.push(Check::new("saddle audit (8-step tree)", audit.worst_margin().max(0.0), SADDLE_TOLERANCE));

    checks.extend(with_threads(config.threads, || lsmc_checks(config))??);
    Ok(VerifyReport { checks })
}

fn lsmc_checks(config: &RunConfig) -> Result<Vec<Check>, CliError> {
    let mut n = config.n_paths.min(LSMC_MAX_PATHS);
    if config.antithetic {
        n -= n % 2;
    }
    let small = config
        .clone()
        .with_grid(config.grid.horizon(), config.grid.steps().min(LSMC_MAX_STEPS))?;
    let steps = small.grid.steps();
    let paths = simulate_paths(&small.market, &small.grid, n, run_seed(config.seed, 0), config.antithetic)?;
    let spec = GameSpec::cancellable_option(&small.market, &small.grid)?;
    let basis = RegressionBasis::new(config.basis_degree, config.market.strike)?;
    let game = game_backward_induction(&paths, &spec, basis)?;
    let sw = switching_backward_induction(&paths, &spec, basis)?;
    let disc = spec.step_discount();

    let mut sandwich = 0.0_f64;
    let mut clamp = 0.0_f64;
    for m in 0..=steps {
        let (y0, y1) = (sw.surface.y0(m).expect("y0"), sw.surface.y1(m).expect("y1"));
        let values = game.surface.game_values(m);
        let cont = if m < steps {
            let y0n = sw.surface.y0(m + 1).expect("y0");
            let y1n = sw.surface.y1(m + 1).expect("y1");
            let next: Vec<f64> = y1n.iter().zip(y0n).map(|(a, b)| disc * (a - b)).collect();
            Some(StepExpectation::new(&paths, m, basis)?.apply(&next)?)
        } else {
            None
        };
        for (k, &s) in paths.at_step(m).iter().enumerate() {
            let (lo, hi) = (spec.lower(m, s), spec.upper(m, s));
            sandwich = sandwich.max(lo - values[k]).max(values[k] - hi);
            let target = match &cont {
                Some(c) => hi.min(lo.max(c[k])),
                None => spec.terminal(s),
            };
            clamp = clamp.max(((y1[k] - y0[k]) - target).abs());
        }
    }
    Ok(vec![
        Check::new("lsmc sandwich L <= V <= U", sandwich.max(0.0), 0.0),
        Check::new("lsmc clamp identity", clamp, CLAMP_TOLERANCE),
        Check::new("lsmc V = Y1 - Y0 at time 0", ((sw.y1_0 - sw.y0_0) - game.v0).abs(), CLAMP_TOLERANCE),
    ])
}
