use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PmlError {
    /// An argument lies outside the domain of the operation.
    #[error("{op}: domain error: {msg}")]
    Domain { op: &'static str, msg: String },

    /// A documented precondition does not hold.
    #[error("{op}: precondition violated: {msg}")]
    Precondition { op: &'static str, msg: String },

    /// A numerical procedure failed to reach its tolerance.
    #[error("{op}: numerical failure: {msg}")]
    Numerical {
        op: &'static str,
        msg: String,
        last_estimate: Option<f64>,
    },

    /// The model itself is ill-posed (e.g. a non-normalizable prior).
    #[error("model error: {0}")]
    Model(String),

    /// A configuration value failed validation. `field` is a JSON pointer.
    #[error("invalid value at {field}: {msg}")]
    Invalid { field: String, msg: String },
}

impl PmlError {
    pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        PmlError::Domain { op, msg: msg.into() }
    }

    pub(crate) fn precondition(op: &'static str, msg: impl Into<String>) -> Self {
        PmlError::Precondition { op, msg: msg.into() }
    }

    pub(crate) fn numerical(op: &'static str, msg: impl Into<String>) -> Self {
        PmlError::Numerical {
            op,
            msg: msg.into(),
            last_estimate: None,
        }
    }

    pub(crate) fn invalid(field: impl Into<String>, msg: impl Into<String>) -> Self {
        PmlError::Invalid {
            field: field.into(),
            msg: msg.into(),
        }
    }

    /// Name of the failing operation, when there is one.
    pub fn operation(&self) -> Option<&'static str> {
        match self {
            PmlError::Domain { op, .. }
            | PmlError::Precondition { op, .. }
            | PmlError::Numerical { op, .. } => Some(op),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, PmlError>;
