use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate mode: k = 0 and m = 0 has zero frequency")]
    ZeroFrequencyMode,

    #[error("invalid hypersurface: {0}")]
    InvalidSurface(String),

    #[error("patch index {index} out of range (surface has {len} patches)")]
    PatchIndex { index: usize, len: usize },

    #[error("normal {0} is not timelike and future-oriented")]
    BadNormal(String),

    #[error("points are not on a common leaf (leaf-time spread {spread:e})")]
    NotOnLeaf { spread: f64 },

    #[error("particle index {index} out of range for {n} particles")]
    ParticleIndex { index: usize, n: usize },

    #[error("density vanishes on the launch surface")]
    ZeroDensity,

    #[error("strategy inapplicable: {0}")]
    StrategyInapplicable(String),

    #[error("surface was not watched during integration and samples were not kept")]
    SurfaceNotWatched,

    #[error("grid under-resolved: spacing {spacing:e} must be at most {limit:e}")]
    UnderResolved { spacing: f64, limit: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
