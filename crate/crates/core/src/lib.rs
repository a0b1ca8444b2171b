//! Worst-group equalized-odds margin regularization for multi-label
//! classifiers.
//!
//! The crate is organized bottom-up:
//!
//! - [`autodiff`]: tape-based reverse-mode AD over dense `f64` tensors.
//! - [`model`]: a small multi-label MLP and its checkpoint format.
//! - [`fairloss`]: per-batch worst-subgroup selection and the EO⁺/EO⁻
//!   log-sum-exp hinge margins added to BCE.
//! - [`metrics`]: AUC, Youden operating points, subgroup TPR/FPR, EOdds,
//!   EOM, and evaluation reports.
//! - [`data`]: synthetic biased cohorts, CSV I/O, splitting, batching.
//! - [`train`]: Adam training loop and the multi-seed experiment and
//!   ablation protocols.
//!
//! The guide in `book/` walks through each piece; its code listings are
//! compiled and run as doctests of this crate.

pub mod autodiff;
pub mod data;
pub mod fairloss;
pub mod metrics;
pub mod model;
pub mod train;

pub use autodiff::{Tape, Tensor, Var};
pub use data::{generate, Cohort, CohortConfig, Split};
pub use fairloss::{total_loss, BatchView, FairLossConfig, SubgroupCatalog};
pub use metrics::{build_report, EvalReport, OperatingPoint, PredictionSet};
pub use model::{init_mlp, MlpConfig, MlpParams};
pub use train::{run_ablation, run_experiment, train_model, Comparison, RunResult, TrainConfig};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    pub mod autodiff {}
    #[doc = include_str!("../../../book/src/margins.md")]
    pub mod margins {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    pub mod metrics {}
    #[doc = include_str!("../../../book/src/cohorts.md")]
    pub mod cohorts {}
    #[doc = include_str!("../../../book/src/training.md")]
    pub mod training {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
