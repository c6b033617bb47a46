use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A family parameter makes the boundary function undefined somewhere on (0, 1].
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("{what} = {value} is outside {range}")]
    Range {
        what: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("domain hypothesis violated: {0}")]
    DomainHypothesis(String),

    #[error("ill-conditioned basis at degree {degree} (condition estimate {estimate:.3e})")]
    Conditioning { degree: usize, estimate: f64 },

    #[error("degree {degree} exceeds the cap of {cap}")]
    DegreeCap { degree: usize, cap: usize },

    #[error("quadrature did not converge within the panel budget (worst panel error {worst:.3e})")]
    QuadratureBudget { worst: f64 },

    #[error("insufficient data: {usable} usable entries, at least {needed} required")]
    InsufficientData { usable: usize, needed: usize },

    #[error("closed-form derivative unavailable for this boundary function")]
    MissingDerivative,

    #[error("internal error: {0}")]
    Internal(String),
}
