//! Support shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

pub mod checks;
pub mod gen;
pub mod walk;
