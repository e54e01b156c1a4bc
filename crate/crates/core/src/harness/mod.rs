//! Desk-scale experimental protocols, benchmark metrics and reports.

mod metrics;
mod run;
mod spec;
mod store;

pub use metrics::{ks_statistic, roc_auc, LabeledScore};
pub use run::*;
pub use spec::*;
pub use store::{ModelStore, Recipe, StoreSettings, TrainRun};
