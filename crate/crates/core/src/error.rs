use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by tensor ops, layers, the data pipeline and training.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two operands whose shapes are incompatible for `op`.
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// A NaN or infinity was produced (or supplied) by `op`.
    NonFinite { op: &'static str },
    /// A precondition on an argument was violated.
    Invalid(String),
    /// Invalid model or training configuration.
    Config(String),
    /// Input data does not satisfy the pipeline contract.
    Data(String),
    /// Training produced a non-finite loss.
    Diverged { epoch: usize, step: usize },
    /// Training was stopped by its observer (timeout or cancellation).
    Interrupted(String),
}

impl Error {
    pub fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, left, right } => {
                write!(f, "dimension error in {op}: {left:?} vs {right:?}")
            }
            Error::NonFinite { op } => write!(f, "non-finite value produced by {op}"),
            Error::Invalid(msg) => write!(f, "invalid argument: {msg}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Diverged { epoch, step } => {
                write!(f, "training diverged (non-finite loss) at epoch {epoch}, step {step}")
            }
            Error::Interrupted(msg) => write!(f, "interrupted: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
