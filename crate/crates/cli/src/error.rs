use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    /// Classifies a library error raised while running `context`.
    pub fn from_core(context: &str, e: rotasde_core::Error) -> Self {
        use rotasde_core::Error as E;
        let msg = format!("{context}: {e}");
        match e {
            _ if e.is_numerical() => CliError::Numerical(msg),
            E::InvalidData(_) | E::EmptyDiagnostics => CliError::Numerical(msg),
            _ => CliError::Config(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
