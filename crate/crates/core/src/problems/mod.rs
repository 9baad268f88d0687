//! Concrete problems with closed-form surrogate solvers.

pub mod concave;
pub mod example;
pub mod featsel;
pub mod proximal;

pub use concave::PenalizedLeastSquares;
pub use example::{solve_example, ExampleProblemData, ExampleWeights};
pub use featsel::{fs_fit, fs_predict, FsModel, FsProblem, FsState};
pub use proximal::{
    solve_proximal_inner, solve_proximal_inner_from, solve_proximal_outer, FnLoss,
    LeastSquaresLoss, Lipschitz, ProxOuterConfig, ProximalProblemData, SmoothLoss,
};
