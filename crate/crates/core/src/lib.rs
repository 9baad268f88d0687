//! Iteratively re-weighted solvers for objectives with smoothed `ℓ_{r,p}`
//! and Schatten-`p` penalties, `0 < p ≤ 2`.
//!
//! Each iteration replaces the non-smooth penalty by a weighted quadratic
//! that majorizes it at the current point and solves that surrogate exactly,
//! so the objective never increases.

pub mod datasets;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod majorize;
pub mod problems;
pub mod selection;

pub use datasets::{LabelColumn, LabeledDataset, PlantedInstance, SyntheticSpec};
pub use engine::{
    run_irw, run_irw_concave, ConcavePenalty, ConcaveProblem, IrwConfig, IrwProblem, SolveTrace,
    Termination,
};
pub use error::{Error, Result};
pub use linalg::{DenseMatrix, DenseVector, NormKind, SmoothedNormSpec};
pub use selection::{Classifier, CvOptions, CvReport, Method, RankedFeatures};
