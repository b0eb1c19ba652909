//! Constraint-driven construction of 3D scenes from axis-aligned blocks.

pub mod arranger;
pub mod backend;
pub mod constraint;
pub mod exec;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod planner;
pub mod solver;
pub mod synth;
