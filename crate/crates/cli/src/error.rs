use msoe_core::experiments::ExperimentError;
use msoe_core::io::output::OutputError;
use msoe_core::io::{ConfigError, EventsError};
use msoe_core::oe::OeError;
use msoe_core::regularized::RegularizedError;
use msoe_core::sim::SimError;
use thiserror::Error;

/// Failures split by exit status: bad input versus a failed run.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

pub fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<EventsError> for CliError {
    fn from(e: EventsError) -> Self {
        match e {
            EventsError::Io(_) => CliError::Runtime(e.to_string()),
            EventsError::Invalid(ref d) => {
                let mut msg = e.to_string();
                for diag in d.iter().skip(1) {
                    msg.push_str(&format!("\n  {diag}"));
                }
                CliError::Validation(msg)
            }
            EventsError::Csv(_) => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Sim(_) | ExperimentError::Oe(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<RegularizedError> for CliError {
    fn from(e: RegularizedError) -> Self {
        match e {
            RegularizedError::BadLambda(_) | RegularizedError::BadTreeParams(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<OeError> for CliError {
    fn from(e: OeError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<OutputError> for CliError {
    fn from(e: OutputError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
