//! Solvers for dueling (competitive) versions of classic optimization
//! problems.
//!
//! A *duel* takes an optimization problem under uncertainty and pits two
//! solutions against each other: nature draws an outcome, and whichever
//! player's solution costs less on that outcome wins the round (ties split
//! the point). This crate computes exact minmax strategies for duels with a
//! bilinear structure, approximate minmax strategies through best-response
//! oracles and repeated play, and beatability figures for the classic
//! one-player algorithms.
//!
//! The concrete duels live in their own modules:
//!
//! * [`ranking`] — permutations over items, doubly stochastic matrices,
//!   Birkhoff–von Neumann rounding
//! * [`hiring`] — secretary-style stopping games, common and independent
//!   candidate pools
//! * [`compression`] — prefix-code trees under the Kraft inequality, with a
//!   knapsack best response
//! * [`search`] — binary search trees through a layered state/action flow
//! * [`racing`] — parallel-edge races, which can encode any finite duel
//!
//! Shared machinery: [`game`] (payoff semantics and the enumeration-scale
//! matrix-game oracle), [`lp`] (a dense simplex kernel that also runs in
//! exact rational mode), [`bilinear`] (the dual-multiplier minmax LP), and
//! [`learning`] (follow-the-expected-leader self-play).

pub mod bilinear;
pub mod compression;
pub mod dist;
pub mod error;
pub mod game;
pub mod hiring;
pub mod learning;
pub mod lp;
pub mod matching;
pub mod num;
pub mod racing;
pub mod ranking;
pub mod search;

pub use dist::DiscreteDistribution;
pub use error::{DuelError, Result};
pub use game::{
    beatability_of, duel_to_matrix, payoff, solve_matrix_game, FiniteDuel, MatrixGameSolution,
    TieRule,
};
pub use lp::{Halfspace, Polytope};
pub use num::{Cost, Scalar};
