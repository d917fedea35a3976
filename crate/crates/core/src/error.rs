//! Error types shared across the crate.

use thiserror::Error;

/// Everything that can go wrong while integrating, solving, or classifying.
#[derive(Debug, Error)]
pub enum Error {
    /// A pairwise distance fell below the collision floor.
    #[error(
        "collision at t = {t}: minimum pairwise distance {min_dist:.3e} below floor {floor:.3e}"
    )]
    Collision { t: f64, min_dist: f64, floor: f64 },

    /// The adaptive step size underflowed without a collision in sight.
    #[error("step size underflow at t = {t} (h = {h:.3e})")]
    StepFailure { t: f64, h: f64 },

    /// Newton iteration hit its cap without meeting the tolerance.
    #[error(
        "Newton did not converge after {iterations} iterations (residual norm {residual_norm:.3e})"
    )]
    NoConvergence {
        iterations: usize,
        residual_norm: f64,
    },

    /// The augmented Newton matrix is numerically singular.
    #[error("singular Jacobian (condition estimate {cond:.3e})")]
    SingularJacobian { cond: f64 },

    /// The two residual gradients are linearly dependent: a bifurcation
    /// candidate, not a solver failure.
    #[error("rank-deficient Jacobian (oriented angle sine {angle_sin:.3e})")]
    RankDeficient { angle_sin: f64 },

    /// A continuation seed is too far from any root.
    #[error("seed rejected: {0}")]
    SeedRejected(String),

    /// No sign change of theta0 minus the target along the branch.
    #[error("no bracket for the requested rotation-angle target")]
    NoBracket,

    /// Every branch-switch solve landed back on the parent branch.
    #[error("branch switching found no solution off the parent branch")]
    NoNewBranch,

    /// A classification routine was handed a point that does not solve its
    /// boundary-condition system.
    #[error("not a periodic point (residual norm {residual_norm:.3e})")]
    NotAPeriodicPoint { residual_norm: f64 },

    /// Invalid problem constants or options.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
