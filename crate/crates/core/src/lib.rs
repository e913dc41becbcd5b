//! Fairness-aware graph structure learning by maximizing two-dimensional
//! structural entropy under the sensitive-attribute partition.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod data;
pub mod entropy;
pub mod fairness;
pub mod graph;
pub mod model;
pub mod numeric;
pub mod training;

#[cfg(test)]
mod testutil;
