//! Visibility-graph and spectral voice features, random-forest scoring and
//! per-subject score fusion.

// Parameter checks are written `!(x > 0.0)` on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio_features;
pub mod graph_features;
pub mod learn;
pub mod pipeline;
pub mod signal;
pub mod visibility;
