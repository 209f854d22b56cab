//! Contrastive representation learning with norm-based generalization bounds.
//!
//! Small bias-free MLPs are trained on contrastive tuples; their weight norms and
//! activation statistics then feed covering-number bounds on the generalization gap.

pub mod error;
pub mod linalg;
pub mod data;
pub mod net;
pub mod loss;
pub mod capacity;
pub mod bounds;
pub mod downstream;
pub mod verify;
mod par;

pub use error::{Error, Result};
pub use par::pairwise_sum;
