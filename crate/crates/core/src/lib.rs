//! Compensator-based inference for the signal fraction of a
//! signal-plus-background mixture.
//!
//! The engine estimates and tests the signal fraction `η` in
//! `f = η f_s + (1-η) f_b` when the background `f_b` is unknown and only a
//! postulated proposal `g` is available:
//!
//! * [`compensator`]: score geometry, the compensator `δ`, and the Z1 test
//!   with a fixed proposal and a background-only sample;
//! * [`parametric`]: proposals `g_β` fitted by maximum likelihood, with the
//!   delta-method variance behind the Z2 test;
//! * [`nobkg`]: conservative inference without background-only data (Z3),
//!   using a bump-dominated proposal and a λ sensitivity scan;
//! * [`lrt`]: the misspecified likelihood-ratio test and its `χ̄²₀₁` reference;
//! * [`montecarlo`]: seeded, parallel calibration campaigns;
//! * [`cli`]: the file-driven front end.

pub mod cli;
pub mod compensator;
pub mod density;
pub mod error;
pub mod lrt;
pub mod montecarlo;
pub mod nobkg;
pub mod optim;
pub mod parametric;
pub mod quadrature;
pub mod stats;

pub use compensator::{
    compensator_delta, estimate_two_sample, score_geometry, test_z1, InferenceReport, Method, ScoreGeometry,
    TwoSampleEstimate,
};
pub use density::{make_bump_mixture, normalize, BumpParams, DensityModel, FamilyTag, Kernel, SearchRegion};
pub use error::{Error, Result};
pub use quadrature::{QuadratureRule, QuadratureSpec};
