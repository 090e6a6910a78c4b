use alloc::string::String;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error(
        "frame construction failed: direction {direction} against axis {axis} reaches angle {achieved:e} < {required:e}"
    )]
    ConstructionFailed {
        direction: usize,
        axis: usize,
        achieved: f64,
        required: f64,
    },

    #[error("sheet {sheet} lies in no site ball of radius {radius:e}")]
    NotInBall { sheet: usize, radius: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("{what} = {value:e} outside the valid interval ({lo:e}, {hi:e})")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("step t = {t:e} is not a diffeomorphism (min Jacobian {min_jacobian:e})")]
    InvalidStep { t: f64, min_jacobian: f64 },

    #[error("range variation not admissible at node ({i}, {j}): distance {distance:e} exceeds {bound:e}")]
    NotAdmissible {
        i: usize,
        j: usize,
        distance: f64,
        bound: f64,
    },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
