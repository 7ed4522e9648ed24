//! Forward-mode automatic differentiation and the damped Gauss-Newton
//! engine shared by pose estimation, smoothing and retargeting.

pub mod dual;
pub mod nlsq;

pub use dual::{Dual, Dual16, DUAL_WIDTH};
pub use nlsq::{
    eval_all_blocked, jacobian, jacobian_blocked, solve_blocked, solve_nlsq, BlockedProblem,
    DenseAsBlocked, ResidualProblem, SolveReport, SolveStatus,
};
