//! Revealed-preference rankings of programs from applicants' portfolio
//! choices and test scores.
//!
//! The crate is organized around the data flow:
//!
//! - [`simgen`] draws synthetic markets with a known selectivity order, using
//!   the portfolio model in [`choice`].
//! - [`ingest`] reads, cleans and filters score-report CSVs into a
//!   [`domain::Dataset`].
//! - [`rankers`] turns a dataset into rankings (m measure, recursive m+,
//!   score-adjusted tournament); [`betafit`] fits a covariate-based ranking.
//! - [`stats`] compares rankings, checks stochastic dominance of application
//!   tails and exports plot-ready tables.
//! - [`cli`] wires it all into the `revrank` binary.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod betafit;
pub mod choice;
pub mod cli;
pub mod domain;
pub mod error;
pub mod ingest;
pub mod rankers;
pub mod simgen;
pub mod stats;

pub use domain::{Dataset, MethodTag, ProgramId, RankEntry, Ranking, Score, ScoreGrid, ScoreReport};
pub use error::{Error, Result};
