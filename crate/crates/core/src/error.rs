use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("preset `{preset}` is missing parameter `{param}`")]
    MissingParam { preset: String, param: String },

    #[error("under-resolved feature: {0}")]
    Resolution(String),

    #[error("stability guard violated: {0}")]
    Stability(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("velocity field is not a gradient: curl residual {residual:.3e} exceeds {tolerance:.1e}")]
    NotGradient { residual: f64, tolerance: f64 },

    #[error("phase winding {winding:.6} (in units of 2*pi*hbar) is not an integer")]
    Winding { winding: f64 },

    #[error("condition region has zero probability")]
    ZeroProbability,

    #[error("position {position:?} is farther than 2 cells from the support mask")]
    OutOfMask { position: [f64; 2] },

    #[error("support mask too small to form finite-difference stencils")]
    MaskTooSmall,

    #[error("non-conservative force supplied; use the Navier residual instead")]
    NonConservative,

    #[error("time step too large: {0}")]
    StepTooLarge(String),

    #[error("CFL condition violated: {0}")]
    Cfl(String),

    #[error("timeline gap: {0}")]
    TimelineGap(String),

    #[error("path positions differ by {0:.3e} at the splice time")]
    PositionMismatch(f64),

    #[error("particle identities differ: {0}")]
    IdentityMismatch(String),

    #[error("outside approximation regime: {0}")]
    Regime(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("cut construction failed: {0}")]
    Cut(String),

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
