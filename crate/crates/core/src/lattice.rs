//! Recombining binomial tree with exact one-step expectations.
//!
//! Used as the reference for the Monte Carlo solver: the same game and
//! switching recursions are run with `E[X_{m+1} | node] = q X_up + (1-q) X_down`,
//! admissible switching controls are evaluated exactly, and the debut-time
//! stopping pair is audited against unilateral deviations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{validation, Error, Result};
use crate::game::{GameSpec, TieRule};
use crate::lsmc::BOUNDARY_TOLERANCE;
use crate::sim::{MarketParams, TimeGrid};

/// Values indexed by `[m][j]`, `j = 0..=m` counting up-moves.
pub type NodeValues = Vec<Vec<f64>>;

/// Boolean node set indexed like [`NodeValues`], used for stopping and
/// switching regions.
pub type NodeSet = Vec<Vec<bool>>;

/// CRR tree: `u = exp(vol sqrt(h))`, `d = 1/u`, `q = (exp(rh) - d)/(u - d)`.
#[derive(Debug, Clone, Copy)]
pub struct LatticeModel {
    up: f64,
    down: f64,
    prob_up: f64,
    grid: TimeGrid,
    params: MarketParams,
}

impl LatticeModel {
    pub fn new(params: &MarketParams, grid: &TimeGrid) -> Result<Self> {
        params.validate_for_pricing()?;
        let h = grid.step();
        let up = (params.vol * h.sqrt()).exp();
        let down = 1.0 / up;
        let prob_up = ((params.rate * h).exp() - down) / (up - down);
        if !(prob_up > 0.0 && prob_up < 1.0) {
            return Err(Error::Config(format!(
                "risk-neutral up probability {prob_up} outside (0, 1); use a finer grid"
            )));
        }
        Ok(Self {
            up,
            down,
            prob_up,
            grid: *grid,
            params: *params,
        })
    }

    pub fn up(&self) -> f64 {
        self.up
    }

    pub fn down(&self) -> f64 {
        self.down
    }

    pub fn prob_up(&self) -> f64 {
        self.prob_up
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    /// `s0 u^j d^(m-j)`.
    pub fn node_price(&self, m: usize, j: usize) -> f64 {
        let h = self.grid.step();
        self.params.s0 * (self.params.vol * h.sqrt() * (2.0 * j as f64 - m as f64)).exp()
    }

    /// Discounted one-step expectation from node `(m, j)`.
    fn expect(&self, disc: f64, next: &[f64], j: usize) -> f64 {
        disc * (self.prob_up * next[j + 1] + (1.0 - self.prob_up) * next[j])
    }

    fn check(&self, spec: &GameSpec) -> Result<()> {
        if spec.steps() != self.steps() {
            return Err(validation(format!(
                "lattice has {} steps but the game has {}",
                self.steps(),
                spec.steps()
            )));
        }
        Ok(())
    }
}

/// Barrier values at every node, evaluated once.
struct Barriers {
    lower: NodeValues,
    upper: NodeValues,
    terminal: Vec<f64>,
}

impl Barriers {
    fn new(model: &LatticeModel, spec: &GameSpec) -> Result<Self> {
        model.check(spec)?;
        let steps = model.steps();
        let mut lower = Vec::with_capacity(steps + 1);
        let mut upper = Vec::with_capacity(steps + 1);
        for m in 0..=steps {
            let mut lo = Vec::with_capacity(m + 1);
            let mut hi = Vec::with_capacity(m + 1);
            for j in 0..=m {
                let s = model.node_price(m, j);
                let (l, u) = (spec.lower(m, s), spec.upper(m, s));
                if m < steps {
                    spec.check_gap(m, l, u)
                        .map_err(|e| validation(format!("{e} (node {j})")))?;
                }
                lo.push(l);
                hi.push(u);
            }
            lower.push(lo);
            upper.push(hi);
        }
        let terminal = (0..=steps)
            .map(|j| spec.check_terminal(model.node_price(steps, j)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            lower,
            upper,
            terminal,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TreeGame {
    pub values: NodeValues,
    pub v0: f64,
}

/// `V(M, j) = Gamma`, `V(m, j) = min(U, max(L, e^{-rh}(q V_up + (1-q) V_down)))`.
pub fn tree_game_value(model: &LatticeModel, spec: &GameSpec) -> Result<TreeGame> {
    let bars = Barriers::new(model, spec)?;
    let steps = model.steps();
    let disc = spec.step_discount();
    let mut values: NodeValues = vec![Vec::new(); steps + 1];
    values[steps] = bars.terminal.clone();
    for m in (0..steps).rev() {
        let row: Vec<f64> = (0..=m)
            .map(|j| {
                let c = model.expect(disc, &values[m + 1], j);
                bars.upper[m][j].min(bars.lower[m][j].max(c))
            })
            .collect();
        values[m] = row;
    }
    let v0 = values[0][0];
    Ok(TreeGame { values, v0 })
}

#[derive(Debug, Clone)]
pub struct TreeSwitching {
    pub y0: NodeValues,
    pub y1: NodeValues,
    /// Nodes where switching out of mode 0 is strictly better than staying.
    pub switch_from0: NodeSet,
    /// Nodes where switching out of mode 1 is strictly better than staying.
    pub switch_from1: NodeSet,
}

impl TreeSwitching {
    /// `Y1 - Y0` at every node.
    pub fn difference(&self) -> NodeValues {
        self.y1
            .iter()
            .zip(&self.y0)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect()
    }

    /// Switch where the recursion switches: the debut-time policy.
    pub fn debut_policy(&self) -> SwitchPolicy {
        SwitchPolicy {
            from0: self.switch_from0.clone(),
            from1: self.switch_from1.clone(),
        }
    }
}

/// Switching recursion with exact expectations; ties keep the current mode.
pub fn tree_switching_values(model: &LatticeModel, spec: &GameSpec) -> Result<TreeSwitching> {
    let bars = Barriers::new(model, spec)?;
    let steps = model.steps();
    let disc = spec.step_discount();
    let mut y0: NodeValues = vec![Vec::new(); steps + 1];
    let mut y1: NodeValues = vec![Vec::new(); steps + 1];
    let mut switch_from0: NodeSet = vec![Vec::new(); steps + 1];
    let mut switch_from1: NodeSet = vec![Vec::new(); steps + 1];
    y0[steps] = vec![0.0; steps + 1];
    y1[steps] = bars.terminal.clone();
    switch_from0[steps] = vec![false; steps + 1];
    switch_from1[steps] = vec![false; steps + 1];
    for m in (0..steps).rev() {
        let (mut r0, mut r1) = (Vec::with_capacity(m + 1), Vec::with_capacity(m + 1));
        let (mut s0, mut s1) = (Vec::with_capacity(m + 1), Vec::with_capacity(m + 1));
        for j in 0..=m {
            let c0 = model.expect(disc, &y0[m + 1], j);
            let c1 = model.expect(disc, &y1[m + 1], j);
            let up = -bars.upper[m][j] + c1;
            let down = bars.lower[m][j] + c0;
            s0.push(up > c0);
            s1.push(down > c1);
            r0.push(if up > c0 { up } else { c0 });
            r1.push(if down > c1 { down } else { c1 });
        }
        y0[m] = r0;
        y1[m] = r1;
        switch_from0[m] = s0;
        switch_from1[m] = s1;
    }
    Ok(TreeSwitching {
        y0,
        y1,
        switch_from0,
        switch_from1,
    })
}

/// Markov switching rule: in mode `i` at node `(m, j)` with `m < M`, switch
/// if the node is in the mode-`i` region. At most one switch per node.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchPolicy {
    pub from0: NodeSet,
    pub from1: NodeSet,
}

impl SwitchPolicy {
    pub fn never(steps: usize) -> Self {
        let empty: NodeSet = (0..=steps).map(|m| vec![false; m + 1]).collect();
        Self {
            from0: empty.clone(),
            from1: empty,
        }
    }
}

/// Mode 0 or mode 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Zero,
    One,
}

impl Mode {
    pub fn index(self) -> usize {
        match self {
            Mode::Zero => 0,
            Mode::One => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Mode::Zero => Mode::One,
            Mode::One => Mode::Zero,
        }
    }
}

/// An admissible switching control on the tree.
#[derive(Debug, Clone, PartialEq)]
pub enum SwitchingControl {
    /// State-dependent switching regions.
    Policy(SwitchPolicy),
    /// Deterministic schedule `(step, mode switched to)`, in order, excluding
    /// the initial `(0, initial mode)` entry.
    Schedule(Vec<(usize, Mode)>),
}

impl SwitchingControl {
    fn into_policy(self, steps: usize, initial: Mode) -> Result<SwitchPolicy> {
        match self {
            SwitchingControl::Policy(p) => {
                let shape_ok = |set: &NodeSet| {
                    set.len() == steps + 1 && set.iter().enumerate().all(|(m, r)| r.len() == m + 1)
                };
                if !shape_ok(&p.from0) || !shape_ok(&p.from1) {
                    return Err(validation("switching policy does not match the tree shape"));
                }
                Ok(p)
            }
            SwitchingControl::Schedule(schedule) => {
                let mut policy = SwitchPolicy::never(steps);
                let mut mode = initial;
                let mut last: Option<usize> = None;
                if schedule.len() > steps {
                    return Err(validation("more switches than time steps"));
                }
                for (n, &(step, to)) in schedule.iter().enumerate() {
                    if to != mode.other() {
                        return Err(validation(format!(
                            "switch {} does not alternate modes",
                            n + 1
                        )));
                    }
                    if step >= steps {
                        return Err(validation(format!(
                            "switch {} at step {step} is not before maturity {steps}",
                            n + 1
                        )));
                    }
                    if let Some(prev) = last {
                        if step < prev {
                            return Err(validation("switching times must be non-decreasing"));
                        }
                        if step == prev {
                            return Err(validation(format!(
                                "two switches at step {step} before maturity"
                            )));
                        }
                    }
                    let region = match mode {
                        Mode::Zero => &mut policy.from0,
                        Mode::One => &mut policy.from1,
                    };
                    region[step].iter_mut().for_each(|b| *b = true);
                    mode = to;
                    last = Some(step);
                }
                Ok(policy)
            }
        }
    }
}

/// Exact expected reward of a switching control started in `initial_mode`
/// at time 0: terminal reward of the mode held at `M` minus discounted
/// switching costs paid before `M`.
pub fn evaluate_switching_control(
    model: &LatticeModel,
    spec: &GameSpec,
    control: SwitchingControl,
    initial_mode: Mode,
) -> Result<f64> {
    let bars = Barriers::new(model, spec)?;
    let steps = model.steps();
    let policy = control.into_policy(steps, initial_mode)?;
    let disc = spec.step_discount();
    let mut w0 = vec![0.0; steps + 1];
    let mut w1 = bars.terminal.clone();
    for m in (0..steps).rev() {
        let mut n0 = Vec::with_capacity(m + 1);
        let mut n1 = Vec::with_capacity(m + 1);
        for j in 0..=m {
            let c0 = model.expect(disc, &w0, j);
            let c1 = model.expect(disc, &w1, j);
            n0.push(if policy.from0[m][j] { -bars.upper[m][j] + c1 } else { c0 });
            n1.push(if policy.from1[m][j] { bars.lower[m][j] + c0 } else { c1 });
        }
        w0 = n0;
        w1 = n1;
    }
    Ok(match initial_mode {
        Mode::Zero => w0[0],
        Mode::One => w1[0],
    })
}

/// Exact game payoff when each player stops at the first entry into their
/// node set (`sigma` for the canceller, `tau` for the exerciser).
pub fn tree_pair_value(
    model: &LatticeModel,
    spec: &GameSpec,
    sigma: &NodeSet,
    tau: &NodeSet,
) -> Result<f64> {
    let bars = Barriers::new(model, spec)?;
    Ok(pair_value(model, spec, &bars, sigma, tau))
}

fn pair_value(
    model: &LatticeModel,
    spec: &GameSpec,
    bars: &Barriers,
    sigma: &NodeSet,
    tau: &NodeSet,
) -> f64 {
    let steps = model.steps();
    let disc = spec.step_discount();
    let holder_first = spec.tie_rule() == TieRule::HolderFirst;
    let mut w = bars.terminal.clone();
    let mut next = Vec::with_capacity(steps + 1);
    for m in (0..steps).rev() {
        next.clear();
        for j in 0..=m {
            let (cancel, exercise) = (sigma[m][j], tau[m][j]);
            let v = if exercise && (holder_first || !cancel) {
                bars.lower[m][j]
            } else if cancel {
                bars.upper[m][j]
            } else {
                model.expect(disc, &w, j)
            };
            next.push(v);
        }
        std::mem::swap(&mut w, &mut next);
    }
    w[0]
}

/// Debut regions of a value tree: nodes before `M` where `V = U` (cancel)
/// and where `V = L` (exercise).
pub fn debut_regions(model: &LatticeModel, spec: &GameSpec, values: &NodeValues) -> (NodeSet, NodeSet) {
    let steps = model.steps();
    let mut cancel: NodeSet = Vec::with_capacity(steps + 1);
    let mut exercise: NodeSet = Vec::with_capacity(steps + 1);
    for (m, row) in values.iter().enumerate() {
        if m == steps {
            cancel.push(vec![false; m + 1]);
            exercise.push(vec![false; m + 1]);
            continue;
        }
        let (mut c, mut e) = (Vec::with_capacity(m + 1), Vec::with_capacity(m + 1));
        for (j, &v) in row.iter().enumerate() {
            let s = model.node_price(m, j);
            c.push((v - spec.upper(m, s)).abs() <= BOUNDARY_TOLERANCE);
            e.push((v - spec.lower(m, s)).abs() <= BOUNDARY_TOLERANCE);
        }
        cancel.push(c);
        exercise.push(e);
    }
    (cancel, exercise)
}

/// Outcome of a saddle-point audit.
#[derive(Debug, Clone)]
pub struct SaddleReport {
    /// Game value from the backward induction.
    pub v0: f64,
    /// Exact payoff of the debut-time pair.
    pub saddle_value: f64,
    /// Largest `D(sigma*, tau) - D(sigma*, tau*)` over exercise deviations.
    pub worst_exercise_gain: f64,
    /// Largest `D(sigma*, tau*) - D(sigma, tau*)` over cancellation deviations.
    pub worst_cancel_gain: f64,
    pub deviations_checked: usize,
    pub tolerance: f64,
}

impl SaddleReport {
    /// Worst violation margin over both inequalities (negative or zero when
    /// no deviation beats the saddle pair).
    pub fn worst_margin(&self) -> f64 {
        self.worst_exercise_gain.max(self.worst_cancel_gain)
    }

    pub fn passed(&self) -> bool {
        self.worst_margin() <= self.tolerance && (self.saddle_value - self.v0).abs() <= self.tolerance
    }
}

/// Largest lattice size for which threshold regions are enumerated exhaustively.
pub const MAX_EXHAUSTIVE_STEPS: usize = 8;

/// Every threshold stopping region before `M`: at each step either no node,
/// or all nodes with `j <= b` (lower orientation) or `j >= b` (upper).
pub fn threshold_regions(steps: usize) -> impl Iterator<Item = NodeSet> {
    let radix: Vec<usize> = (0..steps).map(|m| m + 2).collect();
    let total: usize = radix.iter().product();
    [false, true].into_iter().flat_map(move |upper| {
        let radix = radix.clone();
        (0..total).map(move |mut code| {
            let mut set: NodeSet = Vec::with_capacity(steps + 1);
            for (m, &r) in radix.iter().enumerate() {
                let digit = code % r;
                code /= r;
                let row = (0..=m)
                    .map(|j| match digit {
                        0 => false,
                        d if upper => j >= d - 1,
                        d => j < d,
                    })
                    .collect();
                set.push(row);
            }
            set.push(vec![false; steps + 1]);
            set
        })
    })
}

/// Random stopping region: each node before `M` included with a
/// per-region inclusion probability drawn uniformly.
pub fn random_region(steps: usize, rng: &mut impl Rng) -> NodeSet {
    let p: f64 = rng.gen();
    (0..=steps)
        .map(|m| (0..=m).map(|_| m < steps && rng.gen::<f64>() < p).collect())
        .collect()
}

/// Checks `D(sigma*, tau) <= D(sigma*, tau*) <= D(sigma, tau*)` for
/// threshold-region deviations (when `M <= 8` and `exhaustive`) and
/// `n_random_deviations` random regions for each player.
pub fn tree_saddle_check(
    model: &LatticeModel,
    spec: &GameSpec,
    n_random_deviations: usize,
    seed: u64,
    exhaustive: bool,
) -> Result<SaddleReport> {
    let steps = model.steps();
    if exhaustive && steps > MAX_EXHAUSTIVE_STEPS {
        return Err(validation(format!(
            "exhaustive deviation audit needs M <= {MAX_EXHAUSTIVE_STEPS}, got {steps}"
        )));
    }
    let bars = Barriers::new(model, spec)?;
    let game = tree_game_value(model, spec)?;
    let (sigma_star, tau_star) = debut_regions(model, spec, &game.values);
    let saddle_value = pair_value(model, spec, &bars, &sigma_star, &tau_star);

    let mut worst_exercise_gain = f64::NEG_INFINITY;
    let mut worst_cancel_gain = f64::NEG_INFINITY;
    let mut checked = 0usize;
    let mut audit = |region: &NodeSet| {
        let as_tau = pair_value(model, spec, &bars, &sigma_star, region);
        let as_sigma = pair_value(model, spec, &bars, region, &tau_star);
        worst_exercise_gain = worst_exercise_gain.max(as_tau - saddle_value);
        worst_cancel_gain = worst_cancel_gain.max(saddle_value - as_sigma);
        checked += 1;
    };
    audit(&tau_star);
    audit(&sigma_star);
    let never: NodeSet = (0..=steps).map(|m| vec![false; m + 1]).collect();
    audit(&never);
    if exhaustive {
        for region in threshold_regions(steps) {
            audit(&region);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_random_deviations {
        let region = random_region(steps, &mut rng);
        audit(&region);
    }
    Ok(SaddleReport {
        v0: game.v0,
        saddle_value,
        worst_exercise_gain,
        worst_cancel_gain,
        deviations_checked: checked,
        tolerance: 1e-10,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::OptionKind;

    fn model(kind: OptionKind, s0: f64, horizon: f64, steps: usize) -> (LatticeModel, GameSpec) {
        let params = MarketParams::reference(kind, s0);
        let grid = TimeGrid::new(horizon, steps).unwrap();
        (
            LatticeModel::new(&params, &grid).unwrap(),
            GameSpec::cancellable_option(&params, &grid).unwrap(),
        )
    }

    #[test]
    fn one_step_formula() {
        let (m, spec) = model(OptionKind::Put, 95.0, 0.5, 1);
        let g = |s: f64| (100.0 - s).max(0.0);
        let disc = (-0.06f64 * 0.5).exp();
        let q = m.prob_up();
        let c = disc * (q * g(95.0 * m.up()) + (1.0 - q) * g(95.0 * m.down()));
        let want = (g(95.0) + 5.0).min(g(95.0).max(c));
        assert!((tree_game_value(&m, &spec).unwrap().v0 - want).abs() < 1e-12);
    }

    #[test]
    fn coarse_grid_rejected() {
        let mut params = MarketParams::reference(OptionKind::Put, 100.0);
        params.vol = 0.01;
        params.rate = 0.5;
        let grid = TimeGrid::new(10.0, 1).unwrap();
        assert!(matches!(LatticeModel::new(&params, &grid), Err(Error::Config(_))));
    }

    #[test]
    fn node_prices_recombine() {
        let (m, _) = model(OptionKind::Call, 100.0, 1.0, 10);
        let a = m.node_price(4, 2);
        assert!((a - 100.0).abs() < 1e-12);
        let b = m.node_price(3, 3);
        assert!((b - 100.0 * m.up().powi(3)).abs() < 1e-9);
    }

    #[test]
    fn terminal_switching_values() {
        let (m, spec) = model(OptionKind::Put, 100.0, 0.5, 6);
        let sw = tree_switching_values(&m, &spec).unwrap();
        for j in 0..=6 {
            assert_eq!(sw.y0[6][j], 0.0);
            assert_eq!(sw.y1[6][j], (100.0 - m.node_price(6, j)).max(0.0));
        }
    }

    #[test]
    fn empty_controls() {
        let (m, spec) = model(OptionKind::Call, 110.0, 0.5, 7);
        let zero = evaluate_switching_control(&m, &spec, SwitchingControl::Schedule(vec![]), Mode::Zero)
            .unwrap();
        assert_eq!(zero, 0.0);
        let one = evaluate_switching_control(&m, &spec, SwitchingControl::Schedule(vec![]), Mode::One)
            .unwrap();
        // binomial expectation of the discounted terminal payoff
        let q = m.prob_up();
        let mut want = 0.0;
        let mut binom = 1.0;
        for j in 0..=7 {
            if j > 0 {
                binom = binom * (7 - j + 1) as f64 / j as f64;
            }
            want += binom * q.powi(j as i32) * (1.0 - q).powi(7 - j as i32)
                * (m.node_price(7, j as usize) - 100.0).max(0.0);
        }
        want *= (-0.06f64 * 0.5).exp();
        assert!((one - want).abs() < 1e-10);
    }

    #[test]
    fn invalid_schedules_rejected() {
        let (m, spec) = model(OptionKind::Put, 100.0, 0.5, 5);
        let eval = |s: Vec<(usize, Mode)>| {
            evaluate_switching_control(&m, &spec, SwitchingControl::Schedule(s), Mode::Zero)
        };
        assert!(eval(vec![(1, Mode::Zero)]).is_err());
        assert!(eval(vec![(3, Mode::One), (2, Mode::Zero)]).is_err());
        assert!(eval(vec![(2, Mode::One), (2, Mode::Zero)]).is_err());
        assert!(eval(vec![(5, Mode::One)]).is_err());
        assert!(eval(vec![(1, Mode::One), (3, Mode::Zero)]).is_ok());
    }

    #[test]
    fn deterministic_schedule_costs() {
        // switch 0 -> 1 at step 0: pay U(s0), then hold mode 1 to maturity
        let (m, spec) = model(OptionKind::Put, 90.0, 0.5, 4);
        let hold = evaluate_switching_control(&m, &spec, SwitchingControl::Schedule(vec![]), Mode::One)
            .unwrap();
        let v = evaluate_switching_control(
            &m,
            &spec,
            SwitchingControl::Schedule(vec![(0, Mode::One)]),
            Mode::Zero,
        )
        .unwrap();
        assert!((v - (hold - 15.0)).abs() < 1e-12);
    }

    #[test]
    fn threshold_region_count() {
        assert_eq!(threshold_regions(3).count(), 2 * 2 * 3 * 4);
        let all: Vec<NodeSet> = threshold_regions(2).collect();
        assert!(all.iter().all(|s| s.len() == 3 && s[2].iter().all(|b| !b)));
    }

    #[test]
    fn exhaustive_audit_capped() {
        let (m, spec) = model(OptionKind::Put, 100.0, 0.5, 9);
        assert!(tree_saddle_check(&m, &spec, 0, 1, true).is_err());
        assert!(tree_saddle_check(&m, &spec, 5, 1, false).is_ok());
    }
}
