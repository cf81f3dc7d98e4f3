//! Experiment design for continuous-time LTI systems under piecewise-constant
//! inputs, with identification from derivative-free filtered data.
//!
//! The pipeline mirrors how an experiment is actually run:
//!
//! 1. [`design`] chooses inputs online, one sampling period at a time, so the
//!    stacked state/input samples gain one rank per step and reach full rank
//!    `n + m` after exactly `n + m` samples.
//! 2. [`lti`] simulates the plant exactly between and at sampling instants.
//! 3. [`filters`] and [`filtered`] turn the continuous trajectory into filtered
//!    data `(x_f, u_f, x_df)` without ever differentiating the state.
//! 4. [`sysid`] checks the informativity rank condition and recovers `(A, B)`.
//!
//! [`numlin`] holds the dense linear-algebra kernels shared by all of the above.

pub mod aircraft;
pub mod config;
pub mod design;
pub mod error;
pub mod filtered;
pub mod filters;
pub mod lti;
pub mod numlin;
pub mod serde_rows;
pub mod sysid;

pub use config::NumericConfig;
pub use error::{Error, Result};
pub use numlin::{Matrix, RankReport, Vector};
