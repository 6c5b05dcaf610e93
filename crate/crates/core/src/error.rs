use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("field {field_gauss} G sits on the resonance pole")]
    Pole { field_gauss: f64 },

    #[error("no finite field gives scattering length {a} m (equals the background value)")]
    NoSolution { a: f64 },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("no convergence after {iterations} iterations (last iterate {last:?}, residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        last: Vec<f64>,
        residual: f64,
    },

    #[error("iterate left the domain at {last:?}")]
    DomainExit { last: Vec<f64> },

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("wavefunction blew up at t = {time:e} s: {reason}")]
    BlowUp { time: f64, reason: String },

    #[error("no ground state: {0}")]
    NonConfining(String),

    #[error("window too small: {0}")]
    Window(String),

    #[error("phase unwrap ambiguity at T = {t:e} s (step {step:.3} rad)")]
    UnwrapAmbiguity { t: f64, step: f64 },

    #[error("minimum at scan boundary (a = {a:e} m)")]
    BoundaryMinimum { a: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
