//! Checks shared by the core integration tests and the node acceptance suite.
#![allow(dead_code)]

pub mod custody;
pub mod sweep;
pub mod tamper;
pub mod workflow;
