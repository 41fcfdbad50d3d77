//! Oracles shared by the integration tests. Nothing here calls into the code
//! paths it is used to check.
#![allow(dead_code)]

pub mod geometry;
pub mod qp;
pub mod scenarios;
