//! Independent reference implementations shared by the integration tests
//! and the acceptance runner.
#![allow(dead_code)]

pub mod callbacks;
pub mod gradcheck;
pub mod metrics;
pub mod recurrent;
pub mod segments;
