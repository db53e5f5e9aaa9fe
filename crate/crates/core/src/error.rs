use thiserror::Error;

/// Errors produced by the solvers and the command-line front end.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid parameters passed to a constructor.
    #[error("construction error: {0}")]
    Construction(String),

    /// A quadrature panel produced a non-finite value.
    #[error("non-finite integrand value in cell {cell}")]
    NonFiniteIntegrand { cell: usize },

    /// A series coefficient came out non-finite.
    #[error("non-finite coefficient of order {order} at collocation node {index}")]
    NonFiniteCoefficient { order: usize, index: usize },

    /// Requested data that the solver state does not hold.
    #[error("state error: {0}")]
    State(String),

    /// The finite-volume step size collapsed.
    #[error("step size collapsed to {dt:e} at t = {time}")]
    Stiffness { time: f64, dt: f64 },

    /// A finite-volume step produced a significantly negative density.
    #[error("negative density {value:e} in cell {cell} at t = {time}")]
    NegativeDensity { cell: usize, value: f64, time: f64 },

    /// Configuration file or flag problem.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
