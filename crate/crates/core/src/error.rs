use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure category, mapped onto process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numerical => 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: row {row}, column {column}: {message}")]
    Load {
        path: String,
        row: usize,
        column: String,
        message: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no firms survive filters")]
    NoFirmsSurvive,
    #[error("firm {firm} has no usable data: {reason}")]
    FirmUnavailable { firm: String, reason: String },
    #[error("invalid crisis window: {0}")]
    InvalidWindow(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("exact fit: unrestricted residual sum of squares is zero")]
    ExactFit,
    #[error("unknown node: {0}")]
    UnknownNode(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("modularity is undefined on an edgeless graph")]
    EdgelessGraph,
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("Katz series diverges: attenuation {attenuation} >= 1/spectral radius (radius {spectral_radius})")]
    KatzDivergence {
        attenuation: f64,
        spectral_radius: f64,
    },
    #[error("iteration limit of {0} reached without convergence")]
    IterationLimit(usize),
    #[error("firm {0} has no sector label")]
    MissingSector(String),
    #[error("column {0} has zero variance")]
    ZeroVariance(String),
    #[error("degenerate lambda path: lambda_max is zero")]
    DegeneratePath,
    #[error("unsupported configuration: {0}")]
    UnsupportedConfig(String),
    #[error("coordinate descent did not converge after {sweeps} sweeps")]
    NonConvergence { sweeps: usize, last_iterate: Vec<f64> },
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::UnsupportedConfig(_) | Error::InvalidWindow(_) | Error::Json(_) => {
                ErrorKind::Config
            }
            Error::DegenerateFit(_)
            | Error::ExactFit
            | Error::KatzDivergence { .. }
            | Error::IterationLimit(_)
            | Error::DegeneratePath
            | Error::NonConvergence { .. } => ErrorKind::Numerical,
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}
