//! Error type shared across the crate.

use thiserror::Error;

/// Errors surfaced by grid construction, field algebra, solvers and pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid too small: need n1 >= 3 and n2 >= 3, got {n1} x {n2}")]
    GridTooSmall { n1: usize, n2: usize },

    #[error("metric sample at node {node} is not symmetric positive definite")]
    NonSpdMetric { node: usize },

    #[error("node {node} is not a boundary node")]
    InteriorNode { node: usize },

    #[error("waypoint ({x}, {y}) lies outside the closed chart")]
    WaypointOutsideChart { x: f64, y: f64 },

    #[error("gauge field is singular: |det F| = {det_abs:.3e} at node {node}")]
    SingularGauge { node: usize, det_abs: f64 },

    #[error("rank mismatch: connection has rank {connection}, potential has rank {potential}")]
    RankMismatch { connection: usize, potential: usize },

    #[error("linear system is singular (zero pivot at row {row}); not regularizing")]
    SingularSystem { row: usize },

    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    #[error("optimizer diverged: non-finite energy at iteration {iter}")]
    Diverged { iter: usize },

    #[error("collar depth {depth} too large for grid (max {max})")]
    CollarTooDeep { depth: usize, max: usize },

    #[error("valid mask is empty (every node flagged)")]
    EmptyMask,

    #[error("zero set is thick: flagged node {node} has no unflagged neighbor")]
    ThickZeroSet { node: usize },

    #[error("frame is degenerate: min singular value {min_sv:.3e} below threshold {threshold:.3e}")]
    FrameDegenerate { min_sv: f64, threshold: f64 },

    #[error("DN matrices disagree on the measurement set: discrepancy {discrepancy:.3e} exceeds tolerance {tolerance:.3e}")]
    DnMismatch { discrepancy: f64, tolerance: f64 },

    #[error("|det G| dropped below half of min |det F|: {det_g:.3e} < 0.5 * {det_f:.3e}")]
    QuotientDegenerate { det_g: f64, det_f: f64 },

    #[error("connection jets of the two scenarios disagree near the anchor: {mismatch:.3e} > {tolerance:.3e}")]
    JetMismatch { mismatch: f64, tolerance: f64 },

    #[error("boundary jet depth {have} insufficient: need at least {need}")]
    JetDepth { have: usize, need: usize },

    #[error("dimension 2 jets are handled by the surface recovery routine")]
    DimensionTwo,

    #[error("surface recovery requires a declared zero potential")]
    PotentialNotZero,

    #[error("need at least 3 probe frequencies, got {got}")]
    TooFewFrequencies { got: usize },

    #[error("frequency {freq:.3} exceeds a quarter of the edge Nyquist frequency {limit:.3}")]
    FrequencyTooHigh { freq: f64, limit: f64 },

    #[error("requested basis size {requested} exceeds available {available}")]
    BasisExceeded { requested: usize, available: usize },

    #[error("transport anchors do not match at segment {segment}")]
    AnchorMismatch { segment: usize },

    #[error("symbol table does not expose the shape expected at stage {stage}: {detail}")]
    SymbolShape { stage: usize, detail: String },

    #[error("jet recovery did not close: residual symbol nonzero after {iters} refinement sweeps at stage {stage}")]
    RecoveryStalled { stage: usize, iters: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown preset: {0}")]
    UnknownPreset(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
