//! Random-basis approximate linear programs.
//!
//! * [`bases`]: seed-reproducible random Fourier and stump features.
//! * [`lp`]: FALP / FGLP models and a simplex backend.
//! * [`adaptive`]: the basis-growing loop with incumbent bounds and τ*.
//! * [`policy`], [`lower_bound`]: greedy policy costs by simulation and the
//!   saddle-point lower bound.
//! * [`toy`], [`pic`], [`gjr`]: the 1-D example, perishable inventory control
//!   and the joint replenishment semi-MDP.
//! * [`experiment`]: config files, run directories and summaries.

pub mod adaptive;
pub mod bases;
pub mod error;
pub mod expectation;
pub mod experiment;
pub mod gjr;
pub mod lower_bound;
pub mod lp;
pub mod mdp;
pub mod pic;
pub mod policy;
pub mod rng;
pub mod toy;
pub use error::{Error, Result};
