//! Identity-index fingerprints and the lineage test between two models.

mod detect;
mod output;

pub use detect::*;
pub use output::*;
