//! Dynamic-CVaR investment and insurance policies for defined-contribution
//! pensions, trained by a nested-simulation actor-critic, with a Lee-Carter
//! mortality model that admits transitory jumps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actor_critic;
pub mod error;
pub mod experiment;
pub mod market;
pub mod mdp;
pub mod mortality;
pub mod nn;
pub mod risk;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
