use std::fmt;

/// Which transform assumption a falsification refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Assumption {
    /// Jacobian of the inverse bounded below.
    A1,
    /// `|g(x)| >= |x|`.
    A2,
    /// `|g(x)| >= c0 |x|` outside a ball.
    A2Star,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assumption::A1 => write!(f, "(A1)"),
            Assumption::A2 => write!(f, "(A2)"),
            Assumption::A2Star => write!(f, "(A2*)"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("integrability violated: order {order} needs test-function exponent mu > {required}, got {mu}")]
    Integrability { order: f64, mu: f64, required: f64 },

    #[error("quadrature did not converge: estimate {value:e}, achieved error {achieved:e}, requested {requested:e}")]
    Quadrature {
        value: f64,
        achieved: f64,
        requested: f64,
    },

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("tail model required: {0}")]
    Tail(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("assumption {assumption} falsified at witness {witness:?}")]
    Assumption {
        assumption: Assumption,
        witness: Vec<f64>,
    },

    #[error("certificate error: {0}")]
    Certificate(String),

    #[error("case error: {0}")]
    Case(String),

    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: String, message: String },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
