use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid resolution must be at least 1, got {0}")]
    InvalidResolution(usize),
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfUnitInterval { name: &'static str, value: f64 },
    #[error("cell ({i}, {j}) is outside the {n}x{n} grid")]
    CellOutOfRange { i: usize, j: usize, n: usize },
    #[error("resolution {coarse} does not divide {fine}")]
    NonDividing { coarse: usize, fine: usize },
    #[error("non-finite {what} at cell ({i}, {j})")]
    NonFinite { what: &'static str, i: usize, j: usize },
    #[error("degenerate statistic: fourth-power sum is zero")]
    Degenerate,
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("empty sample")]
    EmptySample,
    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("non-positive value {0} where a positive one is required")]
    NonPositive(f64),
    #[error("non-finite sample value")]
    NonFiniteSample,
    #[error("unknown function {0:?}")]
    UnknownFunction(String),
    #[error("function {name:?} exceeds its declared bound {bound} (|f({x})| = {value})")]
    BoundViolated { name: String, bound: f64, x: f64, value: f64 },
    #[error("driving and independent sheets share the seed stream {0:?}")]
    DependentSheets(crate::sheet::SeedSpec),
    #[error("sheets live on different grids ({0} vs {1})")]
    GridMismatch(usize, usize),
    #[error("invalid flow: {0}")]
    InvalidFlow(String),
    #[error("invalid campaign: {0}")]
    InvalidCampaign(String),
    #[error("reports mix resolutions {0} and {1}")]
    MixedResolution(usize, usize),
    #[error("replicate {replicate} at n = {n} failed: {source}")]
    Replicate {
        n: usize,
        replicate: u64,
        #[source]
        source: Box<Error>,
    },
    #[error("malformed lattice dump: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
