//! Markov-switching autoregressive, vector-autoregressive and hidden Markov
//! models: simulation, estimation and tests for the number of regimes.
//!
//! The crate is organised bottom-up:
//!
//! - [`markov`]: transition matrices, ergodic distributions, regime paths.
//! - [`dgp`]: simulation of all ten model families.
//! - [`likelihood`]: composite-state Hamilton filter and Kim smoother.
//! - [`estimation`]: linear fits, EM and bounded maximum likelihood.
//! - [`optim`]: particle swarm and simulated annealing for bounded boxes.
//! - [`mc`]: Monte Carlo p-values with randomized tie-breaking.
//! - [`lrt`], [`moments`], [`chp`], [`hansen`]: the four families of tests.
//! - [`data`]: CSV input and the bundled GNP sample.
//! - [`report`], [`cli`]: JSON reports and the `msregime` command line.
//!
//! Regimes are zero-indexed in the API; reports and parameter names are
//! one-indexed as printed in summaries.

pub mod chp;
pub mod cli;
pub mod data;
pub mod dgp;
pub mod error;
pub mod estimation;
pub mod hansen;
pub mod likelihood;
pub mod lrt;
pub mod markov;
pub mod mc;
pub mod model;
pub mod moments;
pub mod optim;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
pub use markov::{ergodic_distribution, simulate_chain, RegimePath, TransitionMatrix};
pub use model::{ModelFamily, ModelSpec, Sample, Theta};
