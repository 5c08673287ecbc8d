use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid weights: {0}")]
    Weights(String),
    #[error("{0} out of range: {1}")]
    Range(&'static str, f64),
    #[error("unknown ablation variant `{0}`")]
    UnknownVariant(String),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("unknown mapping id `{0}`")]
    UnknownMapping(String),
    #[error("unknown feature id `{0}`")]
    UnknownFeature(String),
    #[error("specification is already approved")]
    AlreadyApproved,
    #[error("cannot approve: {0} flagged item(s) remain")]
    FlaggedRemaining(usize),
    #[error("reviewer identity is required")]
    MissingReviewer,
}

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot aggregate an empty metric list")]
    Empty,
    #[error("unknown ids in prediction: {0:?}")]
    UnknownIds(Vec<String>),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("input validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Emit(#[from] EmitError),
}
