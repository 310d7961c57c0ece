use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("table is not balanced; worst offenders (industry, relative gap): {}", format_offenders(.worst))]
    Unbalanced { worst: Vec<(String, f64)> },

    #[error("industry {industry} has zero gross output")]
    ZeroGrossOutput { industry: String },

    #[error(
        "I - A is singular or nearly so (spectral radius estimate {spectral_radius:.6}); \
         closed component without labor payments: {component:?}"
    )]
    Singular { spectral_radius: f64, component: Vec<String> },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("series did not converge after {terms} terms")]
    NonConvergence { terms: usize },

    #[error("random walk aborted after {steps} steps (A is close to singular)")]
    WalkAborted { steps: u64 },

    #[error("rank-deficient design: {columns:?} collinear with earlier columns{hint}")]
    RankDeficient { columns: Vec<String>, hint: String },

    #[error("identity violated: {0}")]
    Identity(String),
}

fn format_offenders(worst: &[(String, f64)]) -> String {
    worst
        .iter()
        .map(|(name, gap)| format!("{name} ({gap:.3e})"))
        .collect::<Vec<_>>()
        .join(", ")
}
