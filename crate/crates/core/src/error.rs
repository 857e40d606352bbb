use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),
    #[error("insufficient data: need at least {needed} clusters, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("all-zero sample")]
    AllZeroSample,
    #[error("method requires equal offsets across clusters")]
    UnequalOffsets,
    #[error("zero mean rate")]
    ZeroMeanRate,
    #[error("model fit has the wrong dispersion family: expected {expected}")]
    WrongFamily { expected: &'static str },
    #[error("model fit did not converge")]
    NotConverged,
    #[error("unstable bootstrap: {failed} of {total} refits failed")]
    UnstableBootstrap { failed: usize, total: usize },
    #[error("calibration bracket exceeded q = {0}; bootstrap standard errors are degenerate")]
    BracketOverflow(f64),
    #[error("no converged replicates out of {0}")]
    NoConvergedReplicates(usize),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotConverged
                | Error::UnstableBootstrap { .. }
                | Error::BracketOverflow(_)
                | Error::NoConvergedReplicates(_)
        )
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::ParameterDomain(msg.into())
}
