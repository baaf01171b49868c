pub mod dml;
pub mod error;
pub mod inference;
pub mod learners;
pub mod panel;
pub mod rng;
pub mod sim;
pub mod staggered;

pub use error::{Error, Result};
