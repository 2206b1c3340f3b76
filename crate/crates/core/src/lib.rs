//! Frenet-frame traffic simulation and an anytime Monte Carlo tree search
//! planner for ego-vehicle behavior decisions.

// Negated comparisons below reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost;
pub mod frenet;
pub mod harness;
pub mod planner;
pub mod scenarios;
pub mod world;
