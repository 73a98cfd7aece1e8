//! Laplacian growth (Hele-Shaw flow) of planar domains through exterior
//! conformal maps, together with tools for polynomial lemniscates.
//!
//! Module map:
//! - [`cplx_poly`]: polynomials, factored lemniscate polynomials, root finding,
//!   partial fractions of `[P/P']'`.
//! - [`conformal`]: truncated Laurent maps of `{|w| > 1}`, sampled boundary
//!   curves, lemniscate tracing.
//! - [`pg_flow`]: the Polubarinova–Galin evolution, moments, boundary velocity.
//! - [`lemniscate`]: lemniscate fitting and the defect metric.
//! - [`theorem_lab`]: growth identities along lemniscate families and the
//!   destruction experiment.

pub mod conformal;
pub mod cplx_poly;
pub mod lemniscate;
pub mod pg_flow;
mod report;
pub mod theorem_lab;

pub use num_complex::Complex64;
pub use report::ResidualReport;
