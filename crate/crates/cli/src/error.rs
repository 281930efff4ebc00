use std::fmt;
use std::process::ExitCode;

use cos_core::decode::DecodeError;
use cos_core::grounding::GroundingError;
use cos_core::harness::HarnessError;
use cos_core::kv::KvError;
use cos_core::media::MediaError;
use cos_core::oracles::OracleError;
use cos_core::subshots::SubShotError;
use cos_core::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Failure,
    Usage,
    Io,
    Transport,
}

impl Category {
    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(match self {
            Self::Failure => 1,
            Self::Usage => 2,
            Self::Io => 3,
            Self::Transport => 4,
        })
    }

    fn label(self) -> &'static str {
        match self {
            Self::Failure => "error",
            Self::Usage => "usage error",
            Self::Io => "i/o error",
            Self::Transport => "transport error",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn new(category: Category, message: impl Into<String>) -> Self {
        Self {
            category,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Category::Usage, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(Category::Io, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cos: {}: {}", self.category.label(), self.message)
    }
}

fn oracle_category(e: &OracleError) -> Category {
    if e.is_transport() {
        Category::Transport
    } else {
        Category::Failure
    }
}

fn media_category(e: &MediaError) -> Category {
    match e {
        MediaError::Ingestion { .. } => Category::Io,
        MediaError::Argument(_) => Category::Usage,
    }
}

impl From<KvError> for CliError {
    fn from(e: KvError) -> Self {
        let category = match e {
            KvError::Io { .. } => Category::Io,
            _ => Category::Usage,
        };
        Self::new(category, e.to_string())
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        Self::new(oracle_category(&e), e.to_string())
    }
}

impl From<MediaError> for CliError {
    fn from(e: MediaError) -> Self {
        Self::new(media_category(&e), e.to_string())
    }
}

impl From<GroundingError> for CliError {
    fn from(e: GroundingError) -> Self {
        let category = match &e {
            GroundingError::Media(m) => media_category(m),
            GroundingError::Argument(_) => Category::Usage,
            GroundingError::Pool(_) => Category::Failure,
        };
        Self::new(category, e.to_string())
    }
}

impl From<DecodeError> for CliError {
    fn from(e: DecodeError) -> Self {
        let category = e.backend_error().map_or(Category::Failure, oracle_category);
        Self::new(category, e.to_string())
    }
}

impl From<SubShotError> for CliError {
    fn from(e: SubShotError) -> Self {
        let category = match &e {
            SubShotError::Media(m) => media_category(m),
            SubShotError::Argument(_) => Category::Usage,
        };
        Self::new(category, e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(m) => Self::usage(m),
            PipelineError::Media(e) => e.into(),
            PipelineError::Grounding(e) => e.into(),
            PipelineError::SubShots(e) => e.into(),
            PipelineError::Decode(e) => e.into(),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Pipeline(p) => p.into(),
            HarnessError::Argument(m) => Self::usage(m),
            other => Self::io(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}
