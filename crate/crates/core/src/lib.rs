pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod eval;
pub mod geom;
pub mod infer;
pub mod losses;
pub mod model;
pub mod train;

pub use error::{Error, Result};
