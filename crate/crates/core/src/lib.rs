//! Finite-horizon Dynkin games solved through an auxiliary two-mode optimal
//! switching problem.
//!
//! The crate covers the numerical side of game (Israeli) option pricing in a
//! Black-Scholes market:
//!
//! * [`sim`] simulates seedable geometric Brownian motion paths,
//! * [`regress`] estimates one-step conditional expectations by least squares,
//! * [`lsmc`] runs the Monte Carlo backward inductions for the game value and
//!   the switching pair, and extracts and evaluates debut-time strategies,
//! * [`lattice`] is an exact binomial-tree oracle for the same recursions,
//!   including switching-control evaluation and saddle-point audits,
//! * [`closedform`] holds the perpetual (infinite horizon) benchmarks.

pub mod closedform;
pub mod error;
pub mod game;
pub mod lattice;
pub mod lsmc;
pub mod regress;
pub mod sim;

pub use error::{Error, Result};
pub use game::{GameSpec, TieRule};
pub use sim::{payoff, simulate_paths, MarketParams, OptionKind, PathSet, TimeGrid};
