use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("resonant frequency tuple: denominator {denominator} vanishes at vertex {vertex}")]
    Resonance { vertex: usize, denominator: f64 },
    #[error("resource budget exceeded: estimated {estimated} tuples, budget {budget}")]
    Budget { estimated: f64, budget: f64 },
    #[error("imaginary part {imag:e} exceeds tolerance for real value {real:e}")]
    NotReal { real: f64, imag: f64 },
    #[error("degenerate regression: {0}")]
    Regression(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
