use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("{what} did not converge (partial value {partial}, error bound {bound})")]
    Unconverged {
        what: String,
        partial: f64,
        bound: f64,
    },
    #[error("internal inconsistency: {0}")]
    Internal(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

/// A numerical value with an absolute error bound or estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn new(value: f64, error: f64) -> Self {
        Estimate { value, error }
    }

    /// Unwrap the value if the error is within `tol`, otherwise report an
    /// unconverged quantity.
    pub fn require(self, tol: f64, what: &str) -> Result<f64> {
        if self.error <= tol && self.value.is_finite() {
            Ok(self.value)
        } else {
            Err(Error::Unconverged { what: what.to_string(), partial: self.value, bound: self.error })
        }
    }
}
