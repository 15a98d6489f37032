//! Planning in partially observable problems where part of the state is only
//! seen through a learned perception model.

pub mod belief;
pub mod envs;
pub mod error;
pub mod harness;
pub mod hsvi;
pub mod model;
pub mod perception;
pub mod planning;
pub mod pomcp;

pub use error::{PbpError, Result};
