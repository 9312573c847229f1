use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("assumption violated ({assumption}): {detail}")]
    Assumption { assumption: &'static str, detail: String },

    #[error("unstable system: {0}")]
    Stability(String),

    #[error("ill-conditioned matrix: {0}")]
    Conditioning(String),

    #[error("insufficient samples: {0}")]
    Length(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that come from the numbers (singular blocks,
    /// violated assumptions, divergence) rather than from user input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Degenerate(_)
                | Error::Construction(_)
                | Error::Assumption { .. }
                | Error::Stability(_)
                | Error::Conditioning(_)
                | Error::Divergence(_)
        )
    }

    /// Short machine-readable tag, used in CSV error rows and FFI codes.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::Parameter(_) => "parameter",
            Error::Degenerate(_) => "degenerate",
            Error::Format(_) => "format",
            Error::Construction(_) => "construction",
            Error::Assumption { .. } => "assumption",
            Error::Stability(_) => "stability",
            Error::Conditioning(_) => "conditioning",
            Error::Length(_) => "length",
            Error::Divergence(_) => "divergence",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
