use std::path::PathBuf;

use proctor_core::CoreError;
use proctor_detect::DetectError;
use proctor_ocr::OcrError;
use proctor_recognizer::RecognizerError;
use proctor_video::VideoError;
use thiserror::Error;

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// Pipeline failures, grouped by who has to act on them.
#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad configuration values or artifacts the configuration points to.
    #[error("configuration error: {0}")]
    Config(String),

    /// Missing or malformed input data (videos, rosters, datasets, models).
    #[error("input error: {0}")]
    Input(String),

    #[error("{message}")]
    TooShortVideo {
        classes: usize,
        required: usize,
        message: String,
    },

    /// Inference, OCR engine or training failures.
    #[error("backend error: {0}")]
    Backend(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Input(_) | Self::Io { .. } => 3,
            Self::TooShortVideo { .. } => 4,
            Self::Backend(_) => 5,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }
}

impl From<CoreError> for PipelineError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidConfig(_) | CoreError::InvalidLayout(_) => Self::Config(e.to_string()),
            _ => Self::Input(e.to_string()),
        }
    }
}

impl From<VideoError> for PipelineError {
    fn from(e: VideoError) -> Self {
        match e {
            VideoError::Encode(_) => Self::Backend(e.to_string()),
            _ => Self::Input(e.to_string()),
        }
    }
}

impl From<DetectError> for PipelineError {
    fn from(e: DetectError) -> Self {
        match e {
            DetectError::ModelLoad { .. } | DetectError::InvalidSpec(_) => Self::Config(e.to_string()),
            _ => Self::Backend(e.to_string()),
        }
    }
}

impl From<OcrError> for PipelineError {
    fn from(e: OcrError) -> Self {
        match e {
            OcrError::InvalidConfig(_) => Self::Config(e.to_string()),
            _ => Self::Backend(e.to_string()),
        }
    }
}

impl From<RecognizerError> for PipelineError {
    fn from(e: RecognizerError) -> Self {
        match e {
            RecognizerError::InvalidConfig(_) => Self::Config(e.to_string()),
            RecognizerError::DatasetTooSmall(_) | RecognizerError::BadModel { .. } | RecognizerError::Io { .. } => {
                Self::Input(e.to_string())
            }
            _ => Self::Backend(e.to_string()),
        }
    }
}
