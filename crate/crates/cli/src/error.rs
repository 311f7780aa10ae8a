use thiserror::Error;

/// Failures grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or configuration. Exit code 1.
    #[error("{0}")]
    Usage(String),
    /// Unreadable or malformed input data, or output that cannot be written.
    /// Exit code 2.
    #[error("{0}")]
    Data(String),
    /// A simulation or fit that ran but did not produce a usable answer.
    /// Exit code 3.
    #[error("{0}")]
    Numerical(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    /// Classifies a library error. Parameter errors are blamed on the
    /// configuration or on the data, depending on where the inputs came from.
    pub fn from_core(e: glassecho::Error, inputs_from_data: bool) -> Self {
        use glassecho::Error as E;
        let msg = e.to_string();
        match e {
            E::Domain(_) | E::InvalidParameter { .. } if inputs_from_data => CliError::Data(msg),
            E::Domain(_) | E::InvalidParameter { .. } => CliError::Usage(msg),
            E::InsufficientData(_) => CliError::Data(msg),
            E::InfiniteCoherence
            | E::Convergence { .. }
            | E::DegenerateDomain(_)
            | E::NonFiniteObjective
            | E::NoDecay(_)
            | E::Unidentifiable { .. } => CliError::Numerical(msg),
        }
    }
}

pub fn config_err(e: glassecho::Error) -> CliError {
    CliError::from_core(e, false)
}

pub fn data_err(e: glassecho::Error) -> CliError {
    CliError::from_core(e, true)
}
