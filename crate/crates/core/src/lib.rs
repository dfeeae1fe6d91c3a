//! Solvers and checkers for robust perfect equilibria of large games with
//! finitely many actions and payoff types, with nonatomic congestion games
//! as the main application.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkers;
pub mod congestion;
pub mod error;
pub mod expr;
pub mod fixtures;
pub mod game;
pub mod simplex;
pub mod simulate;
pub mod solvers;

pub use checkers::{CheckReport, Verdict, Witness};
pub use error::{Error, Result};
pub use expr::{Expr, Scope, Var};
pub use game::{
    IntegrationConfig, LargeGame, PayoffType, PerturbationMeasure, PerturbationTemplate,
    RandomizedProfile,
};
pub use simplex::{ActionDistribution, TruncatedSimplex};
