// Copyright 2026 The bangoff Contributors
// SPDX-License-Identifier: Apache-2.0

//! Numerical estimation of quantum speed limits and time-optimal,
//! amplitude-bounded control fields for two- and three-level systems.
//!
//! Controls are parameterised as bang-off sequences: concatenations of
//! segments at `+M` (`P`), `-M` (`N`) and `0` (`Z`, printed `0`). The
//! library evaluates them with exact piecewise-constant propagation,
//! optimises their durations, and bisects on the total duration to locate
//! the shortest time at which perfect fidelity becomes reachable.
//!
//! Module map:
//! - [`linalg`]: small dense complex linear algebra and exact propagators.
//! - [`model`]: the two- and three-level systems and closed-form references.
//! - [`controls`]: bang-off, piecewise and CRAB parameterisations.
//! - [`objective`]: propagation, fidelity and Bures distance.
//! - [`optimize`]: stochastic descent, quasi-Newton, 1-flip SD, CRAB.
//! - [`qsl`]: minimal-duration search, speed-limit estimate, critical time.
//! - [`analysis`]: landscapes, robustness sampling, distance distributions.
//! - [`cli`]: the `bangoff` command-line driver.

pub mod analysis;
pub mod cli;
pub mod controls;
mod error;
pub mod linalg;
pub mod model;
pub mod objective;
pub mod optimize;
pub mod qsl;
pub mod rng;

pub use error::{Error, Result};
