//! Optimistic least squares for contextual bandits over finite function classes.
//!
//! The crate implements three optimistic learners over a tabular class `F`:
//!
//! - `ols`: confidence sets around the unfiltered least squares fit with a
//!   range-scaled radius;
//! - `sols_known` / `sols_estimated`: width-filtered regressions at dyadic
//!   thresholds with a variance-aware radius, using either a known variance
//!   bound or an online upper bound estimated from residuals;
//! - `sols_unknown`: regressions on dyadic width bands whose radii scale with
//!   each band's own residual variance.
//!
//! Alongside the learners sit a bounded-noise environment with exact
//! conditional variances, exhaustive eluder-dimension computation, and a
//! reproducible experiment harness.

pub mod class;
pub mod confidence;
pub mod eluder;
pub mod environment;
pub mod error;
pub mod harness;
pub mod policies;
pub mod regression;

pub use class::{FunctionClass, InteractionRecord, Mask, ValidationReport, Violation};
pub use error::{Error, Result};
pub use policies::{Learner, PolicyKind, PolicyParams};
