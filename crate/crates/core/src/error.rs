use thiserror::Error;

/// Errors raised by the game, graph, dynamics, tuner and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("player index {index} out of range for a {n_players}-player game")]
    PlayerOutOfRange { index: usize, n_players: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("communication graph is not connected (undirected connectivity is required)")]
    Disconnected,

    #[error("game is not strongly monotone; no unique NE certificate")]
    NotStronglyMonotone,

    #[error("game has no closed-form structure: {0}")]
    NotQuadratic(&'static str),

    #[error("Lyapunov system is ill-conditioned (condition estimate {condition:.3e}); use fewer players or rescale theta_bar")]
    IllConditioned { condition: f64 },

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("requested alpha = {alpha} must lie in (0, m) with m = {m}")]
    AlphaOutOfRange { alpha: f64, m: f64 },

    #[error("A1 not positive definite: theta = {theta} must exceed theta* = {theta_star}")]
    ThetaBelowBound { theta: f64, theta_star: f64 },

    #[error("strategy {0} has no Lyapunov function available in this context: {1}")]
    LyapunovUnavailable(&'static str, &'static str),

    #[error("layout mismatch: strategy {strategy} expects state length {expected}, got {actual}")]
    LayoutMismatch {
        strategy: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in block `{block}` at step {step}")]
    NonFinite { step: usize, block: &'static str },

    #[error("controls not recorded")]
    ControlsNotRecorded,

    #[error("trajectory is empty")]
    EmptyTrajectory,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        })
    }
}
