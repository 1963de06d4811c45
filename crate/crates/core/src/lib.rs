//! Simulation and evaluation harness for instruction-guided corridor navigation.
//!
//! Route instructions are compiled to NavScript programs, executed on a
//! simulated robot in a 2D corridor world, and scored against reference
//! routes (SR, OSR, SPD, CLS). A graph-walking baseline agent shares the
//! same maps and metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod compiler;
pub mod config;
pub mod corpus;
pub mod geom;
pub mod harness;
pub mod kinematics;
pub mod llm;
pub mod metrics;
pub mod navgraph;
pub mod navscript;
pub mod perception;
pub mod render;
pub mod world;
