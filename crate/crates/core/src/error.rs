use thiserror::Error;

use crate::analysis::FitError;
use crate::bloch::BlochError;
use crate::bragg::BraggError;
use crate::config::ConfigError;
use crate::interferometer::SequenceError;
use crate::meanfield::MeanFieldError;
use crate::ode::OdeError;
use crate::source::SourceError;

/// Crate-level error, used by the command-line tool and the C API.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Bragg(#[from] BraggError),
    #[error(transparent)]
    MeanField(#[from] MeanFieldError),
    #[error(transparent)]
    Bloch(#[from] BlochError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
