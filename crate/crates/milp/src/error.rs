use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("row {row} references undeclared variable {var}")]
    UnknownVariable { row: String, var: usize },
    #[error("numerical breakdown after {iterations} iterations: {detail}")]
    NumericalBreakdown { iterations: usize, detail: String },
    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),
    #[error("LP file, line {line}: {message}")]
    LpFormat { line: usize, message: String },
}
