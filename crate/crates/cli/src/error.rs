use oralytics_core::Error;
use thiserror::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Numerical(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Self::Config(m),
            Error::Domain(d) => Self::Config(d.to_string()),
            Error::Numerical(n) => Self::Numerical(n.to_string()),
            other => Self::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Data(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use oralytics_core::error::{DomainError, NumericalError};

    #[test]
    fn exit_codes_follow_failure_class() {
        let code = |e: Error| CliError::from(e).exit_code();
        assert_eq!(code(Error::Config("x".into())), 2);
        assert_eq!(code(DomainError::check("xi1", -1.0, 0.0, 180.0).unwrap_err().into()), 2);
        assert_eq!(code(Error::Data("x".into())), 3);
        assert_eq!(code(std::io::Error::other("x").into()), 3);
        assert_eq!(code(NumericalError::NonFinite { what: "posterior" }.into()), 4);
    }
}
