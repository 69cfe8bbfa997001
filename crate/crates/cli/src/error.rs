use std::fmt;

use tofbench::dataserver::ClientError;
use tofbench::operators::OpError;
use tofbench::peaks::PeakError;
use tofbench::retrievers::RetrieverError;
use tofbench::scripting::{ErrorKind, ScriptError};
use tofbench::views::ViewError;

pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const IO: u8 = 3;
pub const NETWORK: u8 = 4;

/// A failed command with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> CliError {
        CliError {
            code: USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl fmt::Display) -> CliError {
        CliError {
            code: DATA,
            message: message.to_string(),
        }
    }

    pub fn io(message: impl fmt::Display) -> CliError {
        CliError {
            code: IO,
            message: message.to_string(),
        }
    }

    pub fn network(message: impl fmt::Display) -> CliError {
        CliError {
            code: NETWORK,
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        self.code
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<RetrieverError> for CliError {
    fn from(e: RetrieverError) -> Self {
        if e.is_io() {
            CliError::io(e)
        } else {
            CliError::data(e)
        }
    }
}

impl From<OpError> for CliError {
    fn from(e: OpError) -> Self {
        CliError::data(e)
    }
}

impl From<ViewError> for CliError {
    fn from(e: ViewError) -> Self {
        CliError::data(e)
    }
}

impl From<PeakError> for CliError {
    fn from(e: PeakError) -> Self {
        match e {
            PeakError::Io(_) => CliError::io(e),
            e => CliError::data(e),
        }
    }
}

impl From<ScriptError> for CliError {
    fn from(e: ScriptError) -> Self {
        match &e.kind {
            ErrorKind::File { io: true, .. } | ErrorKind::Output(_) => CliError::io(e),
            _ => CliError::data(e),
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        CliError::network(e)
    }
}

impl From<tofbench::dataset::DataError> for CliError {
    fn from(e: tofbench::dataset::DataError) -> Self {
        CliError::data(e)
    }
}
