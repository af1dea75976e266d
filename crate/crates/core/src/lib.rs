//! Logit analysis toolkit: persistence, distribution statistics,
//! distillation-target transforms, an analytically tractable surrogate-logit
//! model, random-matrix linear response and mean-field manifold capacity.

pub mod error;
pub mod forge;
pub mod mftma;
pub mod nnls;
pub mod ordering;
pub mod quadrature;
pub mod response;
pub mod rng;
pub mod stats;
pub mod store;
pub mod surrogate;

pub use error::{Error, Result};
pub use store::{DatasetBundle, Format, LabelVector, LogitMatrix, RobustFlags};
