//! Simulation-study metrics, predictive checks and quantile-based
//! distribution reconstruction.

pub mod gln;
pub mod metrics;
pub mod pca;
pub mod predictive;

pub use gln::{fit_gln, GlnDist, GlnShape};
pub use metrics::{
    average_ranks, coverage, rae, tied_ranks, Coverage, MethodSummary, SimStudyReport, StudyRecord, RAE_TRUNCATION,
};
pub use pca::{pca_check, PcaProjection};
pub use predictive::{bayes_pvalues, posterior_predictive, PosteriorSampler};
