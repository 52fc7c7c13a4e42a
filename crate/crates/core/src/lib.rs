//! Highway mixed-traffic simulator and the platoon decision stack built on it:
//! POMDP environment, twin-world safety projection, LQR formation keeping,
//! the switching supervisor, a masked actor-critic learner and the
//! evaluation harness.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod driver;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod eval;
pub mod fsm;
pub mod learner;
pub mod lqr;
pub mod safety;
pub mod tracking;
#[cfg(test)]
pub(crate) mod testutil;
pub mod world;

pub use error::{Error, Result};
