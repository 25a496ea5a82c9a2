use std::fmt;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Internal = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub stage: Option<String>,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn new(kind: ExitKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            stage: None,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ExitKind::Usage, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(ExitKind::Data, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ExitKind::Internal, message)
    }

    /// A library error raised while checking user-supplied settings.
    pub fn usage_from(e: aadt_qrf::Error) -> Self {
        Self::usage(e.to_string())
    }

    pub fn in_stage(mut self, stage: &str) -> Self {
        if self.stage.is_none() {
            self.stage = Some(stage.to_string());
        }
        self
    }

    pub fn exit_code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.stage {
            Some(s) => write!(f, "[{s}] {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for CliError {}

impl From<aadt_qrf::Error> for CliError {
    fn from(e: aadt_qrf::Error) -> Self {
        use aadt_qrf::Error as E;
        let kind = match e {
            E::InvalidParameter(_) => ExitKind::Usage,
            E::Io { .. }
            | E::Csv(_)
            | E::Json(_)
            | E::MissingColumn(_)
            | E::DuplicateColumn(_)
            | E::Parse { .. }
            | E::NonPositiveTarget { .. }
            | E::EmptyDataset(_)
            | E::DimensionMismatch { .. }
            | E::LengthMismatch { .. }
            | E::Degenerate(_) => ExitKind::Data,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::data(e.to_string())
    }
}
