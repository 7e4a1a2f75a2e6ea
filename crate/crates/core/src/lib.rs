//! Range-only simultaneous localization and tracking.
//!
//! Sensors and targets are placed from noisy ranges to each other and to known
//! anchors. A batch estimate completes a partial Euclidean distance matrix with a
//! conic relaxation ([`edm`]), extracts coordinates and refines them by
//! majorization-minimization ([`refine`]). New targets are added one at a time
//! with a single-source relaxation ([`source_loc`]) and a full re-refinement
//! ([`pipeline`]). [`crlb`] gives the Gaussian Cramér-Rao bound and [`bench`]
//! runs Monte Carlo experiments. All relaxations run on the embedded
//! interior-point solver in [`conic`].

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conic;
pub mod error;
pub mod model;
pub mod edm;
pub mod refine;
pub mod source_loc;
pub mod pipeline;
pub mod crlb;
pub mod io;
pub mod bench;
