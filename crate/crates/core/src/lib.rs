pub mod cache;
pub mod checks;
pub mod coefficients;
pub mod config;
pub mod context;
pub mod d4;
pub mod error;
pub mod error_term;
pub mod moments;
pub mod numeric;
pub mod quadruples;
pub mod voronoi;

pub use error::{Error, Result};
