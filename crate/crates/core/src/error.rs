use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("no usable rows in `{path}` ({rejected} rejected)")]
    NoValidRows { path: String, rejected: usize },

    #[error("catalog `{0}` is empty")]
    EmptyCatalog(String),

    #[error("redshift selection needs a redshift on every record; {missing} of {total} lack one")]
    MissingRedshift { missing: usize, total: usize },

    #[error("invalid interval: lo {lo} must be below hi {hi}")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("log10 needs strictly positive values; axis {axis} has {value}")]
    NonPositiveLog { axis: usize, value: f64 },

    #[error("axis {axis} is degenerate (all values equal {value}); min-max rescale is undefined")]
    DegenerateAxis { axis: usize, value: f64 },

    #[error("point set `{0}` is empty")]
    EmptyPointSet(String),

    #[error("non-finite coordinate in point set `{0}`")]
    NonFinitePoint(String),

    #[error("bin grid needs at least one bin")]
    EmptyBinGrid,

    #[error("separation scale must be positive and finite, got {0}")]
    InvalidScale(f64),

    #[error("separation {separation} exceeds the scale r_max = {r_max}")]
    SeparationExceedsScale { separation: f64, r_max: f64 },

    #[error("histogram is already normalized")]
    AlreadyNormalized,

    #[error("histogram has zero total pairs")]
    ZeroTotalPairs,

    #[error("histograms were built on different bin grids")]
    GridMismatch,

    #[error("operation needs normalized histograms")]
    NotNormalized,

    #[error("operation needs raw (unnormalized) histograms")]
    NotRaw,

    #[error("bootstrap needs at least 2 replicates, got {0}")]
    TooFewReplicates(usize),

    #[error("nothing to fit: no defined points")]
    NoDefinedPoints,

    #[error("power-law fit needs strictly positive separations, got r = {0}")]
    NonPositiveRadius(f64),

    #[error("weighted fit needs strictly positive uncertainties, got sigma = {0}")]
    NonPositiveSigma(f64),

    #[error("samples must be non-empty")]
    EmptySample,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("rank test needs at least 2 groups, got {0}")]
    TooFewGroups(usize),

    #[error("rank test group {0} is empty")]
    EmptyGroup(usize),

    #[error("dimension mismatch: expected {expected} variables, group {group} has an observation with {got}")]
    DimensionMismatch {
        expected: usize,
        group: usize,
        got: usize,
    },

    #[error("non-finite observation in rank test input")]
    NonFiniteObservation,

    #[error(
        "score covariance is singular or ill-conditioned (cond {cond:.3e} exceeds {limit:.3e})"
    )]
    SingularCovariance { cond: f64, limit: f64 },

    #[error("F approximation inapplicable ({reason}); use the permutation method")]
    FApproxInapplicable { reason: String },

    #[error("permutation test needs at least 99 permutations, got {0}")]
    TooFewPermutations(usize),

    #[error("significance level must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),

    #[error("invalid merger parameters: {0}")]
    InvalidMergerParams(String),

    #[error("no non-negative mass ratio reproduces size ratio {0}")]
    NoMergerSolution(f64),

    #[error("{0}")]
    Invalid(String),
}
