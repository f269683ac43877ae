//! Transport-projection splitting schemes for kinetic moment closures in
//! dual variables.
//!
//! The state of the gas is carried by a dual kinetic density
//! `l(x, t, v) = sum_i gamma_i(x, t) l_i(v)` constrained to the span of a
//! fixed polynomial basis. One time step shifts the state along velocity
//! characteristics and projects back onto the span in a weighted L2 inner
//! product in `v`, the weight being generated by the power entropy of the
//! closure; a BGK variant inserts a relaxation blend toward the equilibrium
//! sub-span before the projection. The crate also carries the diagnostics
//! used to certify a run (nondegeneracy guard, conservation residuals,
//! entropy ledgers, step-refinement studies) and an independent
//! finite-volume solver for the limiting moment system used for
//! cross-validation.

pub mod basis;
pub mod diagnostics;
pub mod entropy;
pub mod error;
pub mod field;
pub mod linalg;
pub mod oracle;
pub mod projection;
pub mod quad;
pub mod scenario;
pub mod scheme;

mod fft;

pub use basis::{check_property_p, Monomial, PolyBasis, PropertyPParams, PropertyPReport};
pub use entropy::EntropyParams;
pub use error::{Error, Result};
pub use field::{DualField, SampledField, XGrid};
pub use quad::VQuadrature;
pub use scheme::{SchemeConfig, SchemeVariant, Trajectory};
