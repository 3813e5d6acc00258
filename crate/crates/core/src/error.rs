use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("quadrature failed to converge on [{a}, {b}]: estimate {estimate:e}, error {error:e}")]
    Quadrature {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
    },
    #[error("parameter domain: {0}")]
    ParameterDomain(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("negative input to projection at x = {x}: {value}")]
    NegativeProjection { x: f64, value: f64 },
    #[error("numerical failure at t = {t}: {detail}")]
    Numerical { t: f64, detail: String },
    #[error("infeasible moment-bound parameters: {0}")]
    InfeasibleParams(String),
    #[error("probe setup: {0}")]
    ProbeSetup(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
