pub mod dist;
pub mod error;
pub mod invert;
pub mod multiplicity;
pub mod pipeline;
pub mod regions;
pub mod simulate;
pub mod solve;

pub use error::{Error, Result};
