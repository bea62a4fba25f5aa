//! Verification harness for specification-driven games.

pub mod cli;
pub mod fixtures;
pub mod injection;
pub mod judge;
pub mod orchestrator;
pub mod scoring;
pub mod spec_model;
pub mod toy;
