//! Robust multi-line estimation: locality-biased sampling of minimal sets,
//! hypothesis scoring by angular residual, local refinement of best-so-far
//! hypotheses, and sequential extraction of manifolds.

pub mod index;
pub mod ransac;

pub use index::{build_index, SpatioTemporalIndex};
pub use ransac::{
    estimate_velocity, fit_manifolds, fit_manifolds_with_diagnostics, local_refine, napsac_sample, score_hypothesis,
    FitDiagnostics, ManifoldSearch, PipelineResult, RansacConfig, RefinementMode, Score, StageTimings,
};
