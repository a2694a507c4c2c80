use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Operand shapes do not fit together.
    #[error("dimension error in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// A caller broke an operation's precondition.
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    /// Training produced a non-finite loss.
    #[error("non-finite loss at step {step}: l_c={l_c} l_cp={l_cp} l_cd={l_cd} l_overall={l_overall}")]
    NonFinite {
        step: usize,
        l_c: f64,
        l_cp: f64,
        l_cd: f64,
        l_overall: f64,
    },
    #[error("gradient check failed: non-finite loss at parameter {param} entry {index}")]
    GradCheck { param: usize, index: usize },
    #[error("fold {fold} failed: {source}")]
    Fold { fold: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
