//! Processor-sharing queues with soft deadlines in heavy traffic: an event
//! simulator for the measure-valued state, the invariant manifold of
//! lifted measures, reflected Brownian motion, and a convergence harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dist;
pub mod engine;
pub mod error;
pub mod harness;
pub mod io;
pub mod manifold;
pub mod measure;
pub mod quadrature;
pub mod rbm;

pub use error::{Error, Result};
