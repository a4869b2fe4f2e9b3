use alloc::string::String;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Tensor shapes do not line up for the requested operation.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// A value is outside the domain accepted by an operation.
    #[error("validation error: {0}")]
    Validation(String),
    /// A configuration, policy, or parameter set is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// The training loss stopped being finite.
    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: u64, detail: String },
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! dim_err {
    ($($arg:tt)*) => { $crate::error::Error::Dimension(alloc::format!($($arg)*)) };
}
macro_rules! invalid {
    ($($arg:tt)*) => { $crate::error::Error::Validation(alloc::format!($($arg)*)) };
}
macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::Error::Config(alloc::format!($($arg)*)) };
}
pub(crate) use {config_err, dim_err, invalid};
