pub mod antidote;
pub mod clustering;
pub mod datasets;
pub mod error;
pub mod fairness;
pub mod metrics;
pub mod numerics;
pub mod seed;
pub mod zoopt;

pub use error::{Error, Result};
pub use numerics::Matrix;
