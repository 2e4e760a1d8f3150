//! Floating-point building blocks shared by the table builders and the
//! moment harness.

pub mod dd;
pub mod gauss;
pub mod regression;
pub mod summation;

pub use gauss::GaussLegendre;
pub use regression::{fit_line, LineFit};
pub use summation::{chunked_sum, pairwise_sum, CompensatedSum};
