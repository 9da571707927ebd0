use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("coefficient p is singular at t = {t} (smallest singular value {sigma_min:.3e})")]
    SingularCoefficient { t: f64, sigma_min: f64 },
    #[error("integration failure: symplectic residual {residual:.3e} exceeds {limit:.1e}")]
    Integration { residual: f64, limit: f64 },
    #[error("degenerate path: {0}")]
    Degenerate(String),
    #[error("non-regular crossing at t = {t_star} (crossing form has {m_zero} zero eigenvalue(s))")]
    Regularity { t_star: f64, m_zero: usize },
    #[error("inconsistency: {0}")]
    Inconsistency(String),
    #[error("no convergence: {0}")]
    Convergence(String),
    #[error("tolerance ambiguity: {0}")]
    Tolerance(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Input problems are the caller's fault; everything else is a failure
    /// of the numerical pipeline.
    pub fn is_input(&self) -> bool {
        matches!(self, Error::Input(_) | Error::Contract(_))
    }
}
