//! Exact Bayesian inference for hidden Markov models whose latent state is
//! a two-parameter Poisson–Dirichlet diffusion and whose observations are
//! unlabelled integer partitions.
//!
//! The latent frequency vector is never discretised: filtering, smoothing,
//! interpolation and forecasting are carried out on finite mixtures over
//! partition-valued dual processes, so posteriors are exact up to optional
//! pruning. A bootstrap particle filter over the infinite-dimensional
//! state is included as a baseline, and a small harness turns timestamped
//! interaction networks into partition-valued observation sequences.

pub mod bpf;
pub mod coag;
pub mod dual;
pub mod error;
pub mod ewens;
pub mod filter;
pub mod harness;
pub mod numeric;
pub mod simplex;
pub mod smoother;
pub mod partition;

pub use error::{Error, Result};
pub use ewens::EPParams;
pub use partition::Partition;
