//! Geometric Brownian motion paths and option payoffs.
//!
//! Paths are generated with one ChaCha stream per path (or per antithetic
//! pair), derived from a single master seed. Path `n` therefore sees the same
//! normal draws no matter how the work is scheduled across threads.

use rand::distributions::{Distribution, Open01};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{validation, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    pub fn payoff(self, s: f64, strike: f64) -> f64 {
        payoff(self, s, strike)
    }
}

impl std::str::FromStr for OptionKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "call" => Ok(OptionKind::Call),
            "put" => Ok(OptionKind::Put),
            other => Err(format!("unknown option kind `{other}` (expected call or put)")),
        }
    }
}

impl std::fmt::Display for OptionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptionKind::Call => "call",
            OptionKind::Put => "put",
        })
    }
}

/// Exercise value of a vanilla call or put.
pub fn payoff(kind: OptionKind, s: f64, strike: f64) -> f64 {
    match kind {
        OptionKind::Call => (s - strike).max(0.0),
        OptionKind::Put => (strike - s).max(0.0),
    }
}

/// Black-Scholes market together with the terms of a cancellable option.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    /// Risk-free rate per year.
    pub rate: f64,
    /// Volatility per square-root year.
    pub vol: f64,
    pub s0: f64,
    pub strike: f64,
    /// Penalty the writer pays on top of the exercise value when cancelling.
    pub penalty: f64,
    pub kind: OptionKind,
}

impl MarketParams {
    /// r = 0.06, vol = 0.4, K = 100, penalty = 5.
    pub fn reference(kind: OptionKind, s0: f64) -> Self {
        Self {
            rate: 0.06,
            vol: 0.4,
            s0,
            strike: 100.0,
            penalty: 5.0,
            kind,
        }
    }

    pub fn with_penalty(mut self, penalty: f64) -> Self {
        self.penalty = penalty;
        self
    }

    pub fn with_s0(mut self, s0: f64) -> Self {
        self.s0 = s0;
        self
    }

    pub fn payoff(&self, s: f64) -> f64 {
        payoff(self.kind, s, self.strike)
    }

    /// Checks the ranges required by the path simulator. Zero volatility is
    /// accepted here so that deterministic paths can be produced.
    pub fn validate_for_simulation(&self) -> Result<()> {
        let finite = [self.rate, self.vol, self.s0, self.strike, self.penalty]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(validation("market parameters must be finite"));
        }
        if self.rate <= 0.0 {
            return Err(validation(format!("rate must be > 0, got {}", self.rate)));
        }
        if self.vol < 0.0 {
            return Err(validation(format!("volatility must be >= 0, got {}", self.vol)));
        }
        if self.s0 <= 0.0 {
            return Err(validation(format!("s0 must be > 0, got {}", self.s0)));
        }
        if self.strike <= 0.0 {
            return Err(validation(format!("strike must be > 0, got {}", self.strike)));
        }
        if self.penalty <= 0.0 {
            return Err(validation(format!(
                "penalty must be > 0 (strict gap between cancellation and exercise values), got {}",
                self.penalty
            )));
        }
        Ok(())
    }

    /// Pricing entry points additionally require strictly positive volatility.
    pub fn validate_for_pricing(&self) -> Result<()> {
        self.validate_for_simulation()?;
        if self.vol <= 0.0 {
            return Err(validation(format!("volatility must be > 0 for pricing, got {}", self.vol)));
        }
        Ok(())
    }
}

/// Uniform grid `t_m = m * T / M`, `m = 0..=M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(validation(format!("horizon must be finite and > 0, got {horizon}")));
        }
        if steps == 0 {
            return Err(validation("time grid needs at least one step"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, m: usize) -> f64 {
        if m == self.steps {
            self.horizon
        } else {
            m as f64 * self.step()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|m| self.time(m)).collect()
    }
}

/// Simulated prices, stored step-major so that the cross-section at a step
/// is one contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    prices: Vec<f64>,
    n_paths: usize,
    steps: usize,
    seed: u64,
    antithetic: bool,
}

impl PathSet {
    /// Wraps explicit price rows, one `Vec` of length `M + 1` per path.
    pub fn from_paths(paths: &[Vec<f64>], seed: u64, antithetic: bool) -> Result<Self> {
        let n_paths = paths.len();
        if n_paths == 0 {
            return Err(validation("path set must contain at least one path"));
        }
        let width = paths[0].len();
        if width < 2 {
            return Err(validation("each path needs at least two points"));
        }
        if paths.iter().any(|p| p.len() != width) {
            return Err(validation("all paths must have the same length"));
        }
        if paths.iter().flatten().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(validation("all prices must be finite and strictly positive"));
        }
        let steps = width - 1;
        let mut prices = vec![0.0; n_paths * width];
        for (n, path) in paths.iter().enumerate() {
            for (m, &s) in path.iter().enumerate() {
                prices[m * n_paths + n] = s;
            }
        }
        Ok(Self {
            prices,
            n_paths,
            steps,
            seed,
            antithetic,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// Number of time steps `M`; each path has `M + 1` prices.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn antithetic(&self) -> bool {
        self.antithetic
    }

    /// Prices of every path at step `m`.
    pub fn at_step(&self, m: usize) -> &[f64] {
        &self.prices[m * self.n_paths..(m + 1) * self.n_paths]
    }

    pub fn price(&self, path: usize, m: usize) -> f64 {
        self.prices[m * self.n_paths + path]
    }

    pub fn path(&self, path: usize) -> Vec<f64> {
        (0..=self.steps).map(|m| self.price(path, m)).collect()
    }
}

/// Standard normal draw by inverse-CDF transform of an open-interval uniform.
fn normal_draw(rng: &mut ChaCha8Rng, std_normal: &Normal) -> f64 {
    let u: f64 = Open01.sample(rng);
    std_normal.inverse_cdf(u)
}

/// Simulates `n_paths` paths of `S_{m+1} = S_m exp((r - vol^2/2) h + vol sqrt(h) xi)`.
///
/// With `antithetic`, paths `2k` and `2k + 1` use the draws `xi` and `-xi`.
/// Output depends only on the arguments, not on the rayon thread count.
pub fn simulate_paths(
    params: &MarketParams,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    antithetic: bool,
) -> Result<PathSet> {
    params.validate_for_simulation()?;
    if n_paths < 2 {
        return Err(validation(format!("need at least 2 paths, got {n_paths}")));
    }
    if antithetic && !n_paths.is_multiple_of(2) {
        return Err(validation(format!(
            "antithetic sampling needs an even number of paths, got {n_paths}"
        )));
    }
    let steps = grid.steps();
    let h = grid.step();
    let drift = (params.rate - 0.5 * params.vol * params.vol) * h;
    let diffusion = params.vol * h.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let n_streams = if antithetic { n_paths / 2 } else { n_paths };
    let mirrors: &[f64] = if antithetic { &[1.0, -1.0] } else { &[1.0] };

    let rows: Vec<Vec<f64>> = (0..n_streams)
        .into_par_iter()
        .flat_map_iter(|stream| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream as u64);
            let draws: Vec<f64> = (0..steps).map(|_| normal_draw(&mut rng, &std_normal)).collect();
            mirrors.iter().map(move |&sign| {
                let mut row = Vec::with_capacity(steps + 1);
                let mut s = params.s0;
                row.push(s);
                for &xi in &draws {
                    s *= (drift + diffusion * sign * xi).exp();
                    row.push(s);
                }
                row
            }).collect::<Vec<_>>()
        })
        .collect();

    let width = steps + 1;
    let mut prices = vec![0.0; n_paths * width];
    for (n, row) in rows.iter().enumerate() {
        for (m, &s) in row.iter().enumerate() {
            prices[m * n_paths + n] = s;
        }
    }
    Ok(PathSet {
        prices,
        n_paths,
        steps,
        seed,
        antithetic,
    })
}
