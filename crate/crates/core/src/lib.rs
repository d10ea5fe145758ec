//! Training probabilistic forecasters on the cost of the decisions that a
//! downstream optimization problem makes with them.
//!
//! The crate solves convex quadratic proxy problems ([`qp`]), differentiates
//! their argmin through the KKT conditions ([`diff`]), and trains predictive
//! models ([`models`]) on the realized cost of the decisions they induce
//! ([`trainer`]) for three benchmark tasks: conditional newsvendor
//! ([`inventory`]), generator scheduling ([`generation`]) and battery
//! arbitrage ([`storage`]).

pub mod diff;
pub mod experiment;
pub mod generation;
pub mod gradcheck;
pub mod inventory;
pub mod models;
pub mod qp;
pub mod random;
pub mod storage;
pub mod task;
pub mod trainer;
