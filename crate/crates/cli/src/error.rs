use bbsm_core::ErrorClass;
use thiserror::Error;

/// Front-end failure with its exit status: 1 configuration, 2 data, 3 model validity.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("model validity error: {0}")]
    Model(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Model(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Model(_) => "model_validity",
        }
    }

    /// Single-line JSON for machine consumers.
    pub fn structured(&self) -> String {
        let message = match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Model(m) => m,
        };
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": message,
        })
        .to_string()
    }
}

impl From<bbsm_core::Error> for CliError {
    fn from(e: bbsm_core::Error) -> Self {
        let message = e.to_string();
        match e.class() {
            ErrorClass::Config => CliError::Config(message),
            ErrorClass::Data => CliError::Data(message),
            ErrorClass::ModelValidity => CliError::Model(message),
        }
    }
}

macro_rules! from_core {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                bbsm_core::Error::from(e).into()
            }
        }
    )*};
}

from_core!(
    bbsm_core::IngestError,
    bbsm_core::EsgError,
    bbsm_core::CsyError,
    bbsm_core::CalibrationError,
    bbsm_core::PricingError
);

pub fn io(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
