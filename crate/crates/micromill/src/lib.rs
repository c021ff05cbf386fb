//! Grain-aware bottom-surface generation for micro end-milling.
//!
//! In micro end-milling the cut dimensions approach the grain size of the
//! workpiece, so the material can no longer be treated as isotropic: each
//! grain phase carries its own friction coefficient and elastic modulus,
//! hence its own minimum chip thickness and elastic recovery height. This
//! crate models that regime for the slot bottom face:
//!
//! * [`material`] — seeded two-phase Voronoi grain maps calibrated to
//!   target mean intercept lengths, with needle-shaped minority grains.
//! * [`chipmodel`] — the per-grain cutting chain: friction angle, minimum
//!   chip thickness, contact stress, elastic recovery, plough/shear
//!   classification.
//! * [`kinematics`] — feed per tooth and the tooth-pass sweep over the
//!   domain.
//! * [`surface`] — replay of all passes into a residual height map plus
//!   chip fragments broken at grain boundaries.
//! * [`analysis`] — Ra/Rq/Rz, waviness/roughness decomposition, concave
//!   feature spacing.
//! * [`config`] / [`scenario`] — the batch interface behind the `micromill`
//!   CLI.
//!
//! Everything is deterministic for a fixed seed: reruns produce
//! byte-identical artifacts. Lengths are micrometres, pressures pascals.
//!
//! ```
//! use micromill::chipmodel::{min_chip_thickness, classify_engagement, CutMode};
//!
//! // Al6061 soft phase against a 1.36 um edge: chips need ~0.27 um.
//! let h_m = min_chip_thickness(0.3, 1.36).unwrap();
//! assert!((h_m - 0.2689).abs() < 5e-4);
//! // A 0.2 um feed per tooth ploughs on the first engagement.
//! assert_eq!(classify_engagement(0.2, h_m), CutMode::Ploughing);
//! ```

// Validation deliberately uses negated comparisons (`!(x > 0.0)`) so NaN
// fails closed instead of slipping through an inverted predicate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod chipmodel;
pub mod config;
pub mod error;
pub mod export;
pub mod kinematics;
pub mod material;
pub mod scenario;
pub mod surface;

pub use error::{Error, Result};

// The guide chapters double as doc-tests so the book can never drift from
// the library (mdBook itself does not compile its snippets).
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/chip-formation.md")]
    mod chip_formation {}
    #[doc = include_str!("../../../book/src/microstructure.md")]
    mod microstructure {}
    #[doc = include_str!("../../../book/src/kinematics.md")]
    mod kinematics {}
    #[doc = include_str!("../../../book/src/surface-synthesis.md")]
    mod surface_synthesis {}
    #[doc = include_str!("../../../book/src/roughness.md")]
    mod roughness {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
