use std::path::Path;

use gigadet_core::{
    ConfigError, DensityError, DmapError, GazeError, MergeError, PipelineError, SaccadeError,
    SceneError, SynthError,
};

pub type Result<T> = std::result::Result<T, CliError>;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid flags, config values or scene specs (exit 2).
    Config(String),
    /// Unreadable, unwritable or malformed files (exit 3).
    Input(String),
    /// The detector adapter failed (exit 4).
    Adapter(String),
    /// Anything else (exit 1).
    Internal(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
            CliError::Adapter(_) => 4,
            CliError::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Input(m) => write!(f, "input: {m}"),
            CliError::Adapter(m) => write!(f, "adapter: {m}"),
            CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<DmapError> for CliError {
    fn from(e: DmapError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<DensityError> for CliError {
    fn from(e: DensityError) -> Self {
        match e {
            DensityError::Downsample(_) | DensityError::Factor(_) | DensityError::Weights(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<SaccadeError> for CliError {
    fn from(e: SaccadeError) -> Self {
        match e {
            SaccadeError::MapExtent { .. } => CliError::Input(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<GazeError> for CliError {
    fn from(e: GazeError) -> Self {
        match e {
            GazeError::Adapter { .. } => CliError::Adapter(e.to_string()),
            GazeError::Workers => CliError::Config(e.to_string()),
            GazeError::Pool(_) => CliError::Internal(e.to_string()),
        }
    }
}

impl From<MergeError> for CliError {
    fn from(e: MergeError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Density(e) => e.into(),
            PipelineError::Saccade(e) => e.into(),
            PipelineError::Gaze(e) => e.into(),
            PipelineError::Merge(e) => e.into(),
        }
    }
}
