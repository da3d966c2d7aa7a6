//! Checks shared by the property tests and the acceptance suite.

#![allow(dead_code)]

pub mod oracle;
pub mod identities;
pub mod negatives;
pub mod protocol;
