//! Least-squares Monte Carlo backward inductions.
//!
//! Two recursions run on the same simulated paths:
//!
//! * the game value `V_m = min(U_m, max(L_m, E[e^{-rh} V_{m+1} | S_m]))`,
//! * the switching pair `Y^i_m = max_j { -cost_{i,j} + E[e^{-rh} Y^j_{m+1} | S_m] }`
//!   with `Y^1_M = Gamma`, `Y^0_M = 0`.
//!
//! Both use the same [`StepExpectation`] at every step, so by linearity of the
//! regression `Y^1 - Y^0` reproduces `V` up to rounding. At step 0 the
//! filtration is trivial and the conditional expectation is the sample mean.

use crate::error::{validation, Result};
use crate::game::{GameSpec, TieRule};
use crate::regress::{Projector, RegressionBasis};
use crate::sim::PathSet;

/// Absolute tolerance for deciding that a value touches a barrier.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

/// Conditional expectation operator for one time step.
#[derive(Debug, Clone)]
pub struct StepExpectation {
    projector: Option<Projector>,
    n_paths: usize,
}

impl StepExpectation {
    /// Regression on the cross-section at step `m`, or the sample mean at `m = 0`.
    pub fn new(paths: &PathSet, m: usize, basis: RegressionBasis) -> Result<Self> {
        let projector = if m == 0 {
            None
        } else {
            Some(Projector::new(paths.at_step(m), basis)?)
        };
        Ok(Self {
            projector,
            n_paths: paths.n_paths(),
        })
    }

    pub fn apply(&self, targets: &[f64]) -> Result<Vec<f64>> {
        match &self.projector {
            Some(p) => p.fitted(targets),
            None => {
                if targets.len() != self.n_paths {
                    return Err(validation("length mismatch in step expectation"));
                }
                let mean = targets.iter().sum::<f64>() / targets.len() as f64;
                Ok(vec![mean; targets.len()])
            }
        }
    }
}

/// Per-path, per-step values of a backward induction. All matrices are
/// stored step-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    n_paths: usize,
    steps: usize,
    game_values: Vec<f64>,
    y0: Option<Vec<f64>>,
    y1: Option<Vec<f64>>,
    cancel_region: Vec<bool>,
    exercise_region: Vec<bool>,
}

impl ValueSurface {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn row<'a, T>(&self, data: &'a [T], m: usize) -> &'a [T] {
        &data[m * self.n_paths..(m + 1) * self.n_paths]
    }

    pub fn game_values(&self, m: usize) -> &[f64] {
        self.row(&self.game_values, m)
    }

    pub fn y0(&self, m: usize) -> Option<&[f64]> {
        self.y0.as_deref().map(|d| self.row(d, m))
    }

    pub fn y1(&self, m: usize) -> Option<&[f64]> {
        self.y1.as_deref().map(|d| self.row(d, m))
    }

    /// Paths whose value equals the cancellation amount at step `m`.
    pub fn cancel_region(&self, m: usize) -> &[bool] {
        self.row(&self.cancel_region, m)
    }

    /// Paths whose value equals the exercise amount at step `m`.
    pub fn exercise_region(&self, m: usize) -> &[bool] {
        self.row(&self.exercise_region, m)
    }

    /// Builds a surface from explicit step-major values, flagging boundary
    /// contact against `spec` on `paths`.
    pub fn from_values(paths: &PathSet, spec: &GameSpec, game_values: Vec<f64>) -> Result<Self> {
        let n = paths.n_paths();
        let steps = paths.steps();
        if game_values.len() != n * (steps + 1) {
            return Err(validation("value surface has the wrong shape"));
        }
        let mut cancel_region = vec![false; n * (steps + 1)];
        let mut exercise_region = vec![false; n * (steps + 1)];
        for m in 0..steps {
            let states = paths.at_step(m);
            for (k, &s) in states.iter().enumerate() {
                let v = game_values[m * n + k];
                cancel_region[m * n + k] = (v - spec.upper(m, s)).abs() <= BOUNDARY_TOLERANCE;
                exercise_region[m * n + k] = (v - spec.lower(m, s)).abs() <= BOUNDARY_TOLERANCE;
            }
        }
        Ok(Self {
            n_paths: n,
            steps,
            game_values,
            y0: None,
            y1: None,
            cancel_region,
            exercise_region,
        })
    }
}

#[derive(Debug, Clone)]
pub struct GameSolution {
    pub surface: ValueSurface,
    /// Time-0 value after clamping.
    pub v0: f64,
    /// Time-0 mean before clamping.
    pub continuation0: f64,
    /// Standard error of `continuation0`.
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct SwitchingSolution {
    /// Surface with `y0`, `y1` filled and `game_values = y1 - y0`.
    pub surface: ValueSurface,
    pub y0_0: f64,
    pub y1_0: f64,
}

fn check_compatible(paths: &PathSet, spec: &GameSpec) -> Result<()> {
    if paths.steps() != spec.steps() {
        return Err(validation(format!(
            "path set has {} steps but the game has {}",
            paths.steps(),
            spec.steps()
        )));
    }
    Ok(())
}

fn terminal_values(paths: &PathSet, spec: &GameSpec) -> Result<Vec<f64>> {
    let m = paths.steps();
    paths
        .at_step(m)
        .iter()
        .enumerate()
        .map(|(n, &s)| {
            spec.check_terminal(s)
                .map_err(|e| validation(format!("step {m}, path {n}: {e}")))
        })
        .collect()
}

/// Sample standard error of the mean of `samples`; antithetic pairs are
/// averaged first since their members are not independent.
fn standard_error(samples: &[f64], antithetic: bool) -> f64 {
    let units: Vec<f64> = if antithetic {
        samples.chunks_exact(2).map(|p| 0.5 * (p[0] + p[1])).collect()
    } else {
        samples.to_vec()
    };
    let n = units.len();
    if n < 2 {
        return 0.0;
    }
    let mean = units.iter().sum::<f64>() / n as f64;
    let var = units.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

fn induction(
    paths: &PathSet,
    spec: &GameSpec,
    basis: RegressionBasis,
    cancellable: bool,
) -> Result<GameSolution> {
    check_compatible(paths, spec)?;
    let n = paths.n_paths();
    let steps = paths.steps();
    let disc = spec.step_discount();
    let mut values = vec![0.0; n * (steps + 1)];
    values[steps * n..].copy_from_slice(&terminal_values(paths, spec)?);

    let mut continuation0 = 0.0;
    let mut stderr = 0.0;
    for m in (0..steps).rev() {
        let (head, tail) = values.split_at_mut((m + 1) * n);
        let targets: Vec<f64> = tail[..n].iter().map(|v| disc * v).collect();
        let cont = StepExpectation::new(paths, m, basis)?.apply(&targets)?;
        if m == 0 {
            continuation0 = cont[0];
            stderr = standard_error(&targets, paths.antithetic());
        }
        let row = &mut head[m * n..];
        for (k, (&s, &c)) in paths.at_step(m).iter().zip(&cont).enumerate() {
            let lo = spec.lower(m, s);
            let v = if cancellable {
                let hi = spec.upper(m, s);
                spec.check_gap(m, lo, hi)
                    .map_err(|e| validation(format!("{e} (path {k})")))?;
                hi.min(lo.max(c))
            } else {
                lo.max(c)
            };
            row[k] = v;
        }
    }
    let v0 = values[0];
    let surface = ValueSurface::from_values(paths, spec, values)?;
    Ok(GameSolution {
        surface,
        v0,
        continuation0,
        stderr,
    })
}

/// Time-0 result of a backward induction without the stored surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueEstimate {
    pub v0: f64,
    pub continuation0: f64,
    pub stderr: f64,
}

/// Same recursion as [`game_backward_induction`] keeping only two time
/// slices in memory. Returns bit-identical time-0 numbers.
pub fn game_value_estimate(
    paths: &PathSet,
    spec: &GameSpec,
    basis: RegressionBasis,
    cancellable: bool,
) -> Result<ValueEstimate> {
    check_compatible(paths, spec)?;
    let steps = paths.steps();
    let disc = spec.step_discount();
    let mut next = terminal_values(paths, spec)?;
    for m in (0..steps).rev() {
        let targets: Vec<f64> = next.iter().map(|v| disc * v).collect();
        let cont = StepExpectation::new(paths, m, basis)?.apply(&targets)?;
        if m == 0 {
            let (lo, hi) = (spec.lower(0, paths.price(0, 0)), spec.upper(0, paths.price(0, 0)));
            let v0 = if cancellable {
                spec.check_gap(0, lo, hi)?;
                hi.min(lo.max(cont[0]))
            } else {
                lo.max(cont[0])
            };
            return Ok(ValueEstimate {
                v0,
                continuation0: cont[0],
                stderr: standard_error(&targets, paths.antithetic()),
            });
        }
        for (k, (&s, &c)) in paths.at_step(m).iter().zip(&cont).enumerate() {
            let lo = spec.lower(m, s);
            next[k] = if cancellable {
                let hi = spec.upper(m, s);
                spec.check_gap(m, lo, hi)
                    .map_err(|e| validation(format!("{e} (path {k})")))?;
                hi.min(lo.max(c))
            } else {
                lo.max(c)
            };
        }
    }
    unreachable!("grid has at least one step")
}

/// Game value by `V_m = min(U_m, max(L_m, E[e^{-rh} V_{m+1} | S_m]))`.
pub fn game_backward_induction(
    paths: &PathSet,
    spec: &GameSpec,
    basis: RegressionBasis,
) -> Result<GameSolution> {
    induction(paths, spec, basis, true)
}

/// American (holder-only) value on the same paths: the game recursion
/// without the upper clamp. The upper barrier of `spec` is ignored.
pub fn american_backward_induction(
    paths: &PathSet,
    spec: &GameSpec,
    basis: RegressionBasis,
) -> Result<GameSolution> {
    induction(paths, spec, basis, false)
}

/// The two-mode switching recursion. Ties between staying and switching
/// are resolved in favour of staying.
pub fn switching_backward_induction(
    paths: &PathSet,
    spec: &GameSpec,
    basis: RegressionBasis,
) -> Result<SwitchingSolution> {
    check_compatible(paths, spec)?;
    let n = paths.n_paths();
    let steps = paths.steps();
    let disc = spec.step_discount();
    let mut y0 = vec![0.0; n * (steps + 1)];
    let mut y1 = vec![0.0; n * (steps + 1)];
    y1[steps * n..].copy_from_slice(&terminal_values(paths, spec)?);

    for m in (0..steps).rev() {
        let op = StepExpectation::new(paths, m, basis)?;
        let next = (m + 1) * n..(m + 2) * n;
        let t0: Vec<f64> = y0[next.clone()].iter().map(|v| disc * v).collect();
        let t1: Vec<f64> = y1[next].iter().map(|v| disc * v).collect();
        let c0 = op.apply(&t0)?;
        let c1 = op.apply(&t1)?;
        for (k, &s) in paths.at_step(m).iter().enumerate() {
            let (lo, hi) = (spec.lower(m, s), spec.upper(m, s));
            spec.check_gap(m, lo, hi)
                .map_err(|e| validation(format!("{e} (path {k})")))?;
            let switch_up = -spec.switching_cost(0, m, s) + c1[k];
            let switch_down = -spec.switching_cost(1, m, s) + c0[k];
            y0[m * n + k] = if switch_up > c0[k] { switch_up } else { c0[k] };
            y1[m * n + k] = if switch_down > c1[k] { switch_down } else { c1[k] };
        }
    }
    let game_values: Vec<f64> = y1.iter().zip(&y0).map(|(a, b)| a - b).collect();
    let (y0_0, y1_0) = (y0[0], y1[0]);
    let mut surface = ValueSurface::from_values(paths, spec, game_values)?;
    surface.y0 = Some(y0);
    surface.y1 = Some(y1);
    Ok(SwitchingSolution {
        surface,
        y0_0,
        y1_0,
    })
}

/// Per-path cancellation (`sigma`) and exercise (`tau`) step indices; `M`
/// means "never before maturity".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoppingPair {
    pub sigma: Vec<usize>,
    pub tau: Vec<usize>,
}

impl StoppingPair {
    pub fn constant(n_paths: usize, sigma: usize, tau: usize) -> Self {
        Self {
            sigma: vec![sigma; n_paths],
            tau: vec![tau; n_paths],
        }
    }
}

/// Debut times of the value surface: first step `m < M` at which it touches
/// the cancellation barrier (`sigma`) or the exercise barrier (`tau`).
pub fn extract_stopping_pair(surface: &ValueSurface) -> StoppingPair {
    let n = surface.n_paths();
    let steps = surface.steps();
    let mut sigma = vec![steps; n];
    let mut tau = vec![steps; n];
    for m in 0..steps {
        let cancel = surface.cancel_region(m);
        let exercise = surface.exercise_region(m);
        for k in 0..n {
            if sigma[k] == steps && cancel[k] {
                sigma[k] = m;
            }
            if tau[k] == steps && exercise[k] {
                tau[k] = m;
            }
        }
    }
    StoppingPair { sigma, tau }
}

/// Discounted cash flow of every path under the given stopping pair.
pub fn pair_cashflows(paths: &PathSet, spec: &GameSpec, pair: &StoppingPair) -> Result<Vec<f64>> {
    check_compatible(paths, spec)?;
    let n = paths.n_paths();
    let steps = paths.steps();
    if pair.sigma.len() != n || pair.tau.len() != n {
        return Err(validation("stopping pair does not match the number of paths"));
    }
    (0..n)
        .map(|k| {
            let (sigma, tau) = (pair.sigma[k], pair.tau[k]);
            if sigma > steps || tau > steps {
                return Err(validation(format!(
                    "stopping index out of range on path {k}: sigma {sigma}, tau {tau}, M {steps}"
                )));
            }
            let holder_stops = match spec.tie_rule() {
                TieRule::HolderFirst => tau <= sigma && tau < steps,
                TieRule::WriterFirst => tau < sigma,
            };
            let writer_stops = match spec.tie_rule() {
                TieRule::HolderFirst => sigma < tau,
                TieRule::WriterFirst => sigma <= tau && sigma < steps,
            };
            Ok(if holder_stops {
                spec.discount_to(tau) * spec.lower(tau, paths.price(k, tau))
            } else if writer_stops {
                spec.discount_to(sigma) * spec.upper(sigma, paths.price(k, sigma))
            } else {
                spec.discount_to(steps) * spec.terminal(paths.price(k, steps))
            })
        })
        .collect()
}

/// Monte Carlo estimate of the game payoff under a stopping pair.
pub fn evaluate_pair(paths: &PathSet, spec: &GameSpec, pair: &StoppingPair) -> Result<f64> {
    let flows = pair_cashflows(paths, spec, pair)?;
    Ok(flows.iter().sum::<f64>() / flows.len() as f64)
}
