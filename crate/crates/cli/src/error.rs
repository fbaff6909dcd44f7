use std::fmt;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Gen,
    Encode,
    Extract,
    Score,
    Train,
    Eval,
    Ablate,
    Explain,
    Report,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Gen => "gen",
            Stage::Encode => "encode",
            Stage::Extract => "extract",
            Stage::Score => "score",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Ablate => "ablate",
            Stage::Explain => "explain",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{stage}: {}{message}", scan_id.as_ref().map(|s| format!("scan `{s}`: ")).unwrap_or_default())]
    Data {
        stage: Stage,
        scan_id: Option<String>,
        message: String,
    },

    #[error("{stage}: internal error: {message}")]
    Internal { stage: Stage, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data { .. } => 3,
            CliError::Internal { .. } => 4,
        }
    }

    pub fn stage(&self) -> Stage {
        match self {
            CliError::Config(_) => Stage::Config,
            CliError::Data { stage, .. } | CliError::Internal { stage, .. } => *stage,
        }
    }

    pub fn scan_id(&self) -> Option<&str> {
        match self {
            CliError::Data { scan_id, .. } => scan_id.as_deref(),
            _ => None,
        }
    }

    /// One-line JSON for log scraping.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": {
                "stage": self.stage().as_str(),
                "scan_id": self.scan_id(),
                "exit_code": self.exit_code(),
                "message": self.to_string(),
            }
        })
        .to_string()
    }

    pub fn data(stage: Stage, message: impl fmt::Display) -> Self {
        CliError::Data {
            stage,
            scan_id: None,
            message: message.to_string(),
        }
    }

    pub fn scan(stage: Stage, scan_id: &str, message: impl fmt::Display) -> Self {
        CliError::Data {
            stage,
            scan_id: Some(scan_id.to_string()),
            message: message.to_string(),
        }
    }
}

/// Attach a stage (and optionally a scan) to core errors.
pub trait Context<T> {
    fn stage(self, stage: Stage) -> CliResult<T>;
    fn scan(self, stage: Stage, scan_id: &str) -> CliResult<T>;
}

fn classify(stage: Stage, scan_id: Option<&str>, e: rfdeep_core::Error) -> CliError {
    use rfdeep_core::Error as E;
    let scan_id = match &e {
        E::Record { scan_id, .. } => Some(scan_id.clone()),
        _ => scan_id.map(str::to_string),
    };
    match e {
        E::DimensionMismatch { .. } => CliError::Internal {
            stage,
            message: e.to_string(),
        },
        _ => CliError::Data {
            stage,
            scan_id,
            message: e.to_string(),
        },
    }
}

impl<T> Context<T> for rfdeep_core::Result<T> {
    fn stage(self, stage: Stage) -> CliResult<T> {
        self.map_err(|e| classify(stage, None, e))
    }

    fn scan(self, stage: Stage, scan_id: &str) -> CliResult<T> {
        self.map_err(|e| classify(stage, Some(scan_id), e))
    }
}
