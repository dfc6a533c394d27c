pub mod error;
pub mod eval;
pub mod iacc;
pub mod image;
pub mod losses;
pub mod net;
pub mod seed;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
