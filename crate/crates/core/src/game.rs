//! Stopping-game data shared by the Monte Carlo and lattice solvers.
//!
//! A game is described from the holder's side: exercising at step `m` pays
//! `L_m(s)`, a cancellation by the writer at `m < M` pays `U_m(s)`, and if
//! nobody stops the terminal amount is `Gamma(s)`. In the switching
//! formulation, going from mode 0 to mode 1 costs `U` and going back costs
//! `-L`.

use std::fmt;
use std::sync::Arc;

use crate::error::{validation, Result};
use crate::sim::{MarketParams, TimeGrid};

type StepFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;
type TerminalFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Magnitude from which `L + gap == L` in floating point for gaps below
/// about `1e-4`; far-out lattice nodes of long-dated calls reach it.
pub const GAP_ABSORPTION_LEVEL: f64 = 1.0e12;

/// Who wins a simultaneous stop before maturity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieRule {
    /// Exercise wins ties (`tau <= sigma` pays the exercise value), as in the
    /// cancellable option cash flow.
    #[default]
    HolderFirst,
    /// Cancellation wins ties (`sigma <= tau`, `sigma < M` pays the
    /// cancellation value), as in the generic game payoff.
    WriterFirst,
}

#[derive(Clone)]
pub struct GameSpec {
    lower: StepFn,
    upper: StepFn,
    terminal: TerminalFn,
    step_discount: f64,
    steps: usize,
    tie_rule: TieRule,
}

impl fmt::Debug for GameSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameSpec")
            .field("steps", &self.steps)
            .field("step_discount", &self.step_discount)
            .field("tie_rule", &self.tie_rule)
            .finish_non_exhaustive()
    }
}

impl GameSpec {
    pub fn new(
        steps: usize,
        step_discount: f64,
        lower: impl Fn(usize, f64) -> f64 + Send + Sync + 'static,
        upper: impl Fn(usize, f64) -> f64 + Send + Sync + 'static,
        terminal: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if steps == 0 {
            return Err(validation("game needs at least one step"));
        }
        if !(step_discount > 0.0 && step_discount <= 1.0) {
            return Err(validation(format!(
                "step discount must lie in (0, 1], got {step_discount}"
            )));
        }
        Ok(Self {
            lower: Arc::new(lower),
            upper: Arc::new(upper),
            terminal: Arc::new(terminal),
            step_discount,
            steps,
            tie_rule: TieRule::default(),
        })
    }

    /// Cancellable call or put: `L = G`, `U = G + penalty`, `Gamma = G`,
    /// discounted at `exp(-r h)` per step.
    pub fn cancellable_option(params: &MarketParams, grid: &TimeGrid) -> Result<Self> {
        params.validate_for_pricing()?;
        let p = *params;
        let q = *params;
        let t = *params;
        Self::new(
            grid.steps(),
            (-params.rate * grid.step()).exp(),
            move |_, s| p.payoff(s),
            move |_, s| q.payoff(s) + q.penalty,
            move |s| t.payoff(s),
        )
    }

    /// American option on the same terms: the writer never cancels.
    pub fn american_option(params: &MarketParams, grid: &TimeGrid) -> Result<Self> {
        params.validate_for_pricing()?;
        let p = *params;
        let t = *params;
        Self::new(
            grid.steps(),
            (-params.rate * grid.step()).exp(),
            move |_, s| p.payoff(s),
            |_, _| f64::INFINITY,
            move |s| t.payoff(s),
        )
    }

    pub fn with_tie_rule(mut self, tie_rule: TieRule) -> Self {
        self.tie_rule = tie_rule;
        self
    }

    pub fn lower(&self, m: usize, s: f64) -> f64 {
        (self.lower)(m, s)
    }

    pub fn upper(&self, m: usize, s: f64) -> f64 {
        (self.upper)(m, s)
    }

    pub fn terminal(&self, s: f64) -> f64 {
        (self.terminal)(s)
    }

    pub fn step_discount(&self) -> f64 {
        self.step_discount
    }

    /// Discount factor from step 0 to step `m`.
    pub fn discount_to(&self, m: usize) -> f64 {
        self.step_discount.powi(m as i32)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tie_rule(&self) -> TieRule {
        self.tie_rule
    }

    /// Cost of switching out of `mode` at step `m`: `U` from mode 0, `-L`
    /// from mode 1.
    pub fn switching_cost(&self, mode: usize, m: usize, s: f64) -> f64 {
        if mode == 0 {
            self.upper(m, s)
        } else {
            -self.lower(m, s)
        }
    }

    /// Terminal reward of `mode`: `Gamma` in mode 1, zero in mode 0.
    pub fn terminal_reward(&self, mode: usize, s: f64) -> f64 {
        if mode == 1 {
            self.terminal(s)
        } else {
            0.0
        }
    }

    /// Strict gap `U > L` before maturity. Equality is accepted only beyond
    /// [`GAP_ABSORPTION_LEVEL`], where a small gap rounds away.
    pub(crate) fn check_gap(&self, m: usize, lower: f64, upper: f64) -> Result<()> {
        let absorbed = upper == lower && lower.abs() >= GAP_ABSORPTION_LEVEL && lower.is_finite();
        if !(upper - lower > 0.0 || absorbed) || lower.is_nan() {
            return Err(validation(format!(
                "stopping costs violate the strict gap at step {m}: lower {lower}, upper {upper}"
            )));
        }
        Ok(())
    }

    /// Terminal sandwich `L_M <= Gamma <= U_M`.
    pub(crate) fn check_terminal(&self, s: f64) -> Result<f64> {
        let m = self.steps;
        let (lo, hi, gamma) = (self.lower(m, s), self.upper(m, s), self.terminal(s));
        if !(lo <= gamma && gamma <= hi) {
            return Err(validation(format!(
                "terminal value {gamma} outside [{lo}, {hi}] at state {s}"
            )));
        }
        Ok(gamma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::OptionKind;

    #[test]
    fn option_mapping() {
        let params = MarketParams::reference(OptionKind::Put, 60.0);
        let grid = TimeGrid::new(0.5, 10).unwrap();
        let game = GameSpec::cancellable_option(&params, &grid).unwrap();
        assert_eq!(game.lower(3, 60.0), 40.0);
        assert_eq!(game.upper(3, 60.0), 45.0);
        assert_eq!(game.terminal(60.0), 40.0);
        assert_eq!(game.switching_cost(0, 3, 60.0), 45.0);
        assert_eq!(game.switching_cost(1, 3, 60.0), -40.0);
        assert_eq!(game.terminal_reward(0, 60.0), 0.0);
        assert!((game.step_discount() - (-0.003f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn zero_penalty_rejected() {
        let params = MarketParams::reference(OptionKind::Call, 100.0).with_penalty(0.0);
        let grid = TimeGrid::new(0.5, 10).unwrap();
        assert!(GameSpec::cancellable_option(&params, &grid).is_err());
    }

    #[test]
    fn gap_and_terminal_checks() {
        let game = GameSpec::new(2, 0.99, |_, _| 1.0, |_, _| 1.0, |_| 5.0).unwrap();
        assert!(game.check_gap(0, 1.0, 1.0).is_err());
        assert!(game.check_gap(0, 1e46, 1e46).is_ok());
        assert!(game.check_gap(0, 1e46, 1e45).is_err());
        assert!(game.check_terminal(1.0).is_err());
        assert!(GameSpec::new(2, 1.5, |_, _| 0.0, |_, _| 1.0, |_| 0.0).is_err());
    }
}
