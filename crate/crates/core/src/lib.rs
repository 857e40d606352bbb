//! Historical control limits for overdispersed count data.
//!
//! The crate covers the whole pipeline from clustered counts with offsets to
//! limits a new observation can be judged against:
//!
//! * [`estimation`] fits intercept-only quasi-Poisson and negative-binomial
//!   models with log link and offsets,
//! * [`limits::heuristic`] gives the classical Sheward-type limits,
//! * [`limits::prediction`] gives asymptotic prediction intervals,
//! * [`calibration`] turns those into bootstrap-calibrated intervals with
//!   equal tail probabilities,
//! * [`coverage`] measures how well any of them covers new observations.
//!
//! Random draws go through [`rng::RngState`], which is seeded explicitly and
//! split into independent streams.

pub mod calibration;
pub mod coverage;
pub mod error;
pub mod estimation;
pub mod limits;
pub mod rng;
pub mod sampling;
pub mod special;

pub use error::{Error, Result};
