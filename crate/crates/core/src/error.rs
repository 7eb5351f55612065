use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("value {value} outside domain [{lo}, {hi}] for {what}")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("no value condition is finite at t={t}, x={x}")]
    Unbounded { t: f64, x: f64 },
    #[error("CFL violated: v_f*dt/dx = {0}")]
    Cfl(f64),
    #[error("simplex iteration limit reached after {iterations} pivots (best bound {best_bound})")]
    IterationLimit { iterations: usize, best_bound: f64 },
    #[error("LP file parse error at line {line}: {msg}")]
    LpParse { line: usize, msg: String },
    #[error("scenario line {line}: {msg}")]
    ScenarioParse { line: usize, msg: String },
    #[error("scenario invalid: {0}")]
    ScenarioInvalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
