//! Positional accuracy of manually digitised parcel boundaries: buffer
//! widths, outlier screening, normality checks, fixed-effects ANOVA and
//! ISO 5725-style precision figures, plus a campaign simulator.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod campaign;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod linear_model;
pub mod par;
pub mod pipeline;
pub mod precision;
pub mod robust_stats;
pub mod simulator;
pub mod special;
