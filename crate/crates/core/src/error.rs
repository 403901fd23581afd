//! Error types shared across the crate.

use thiserror::Error;

/// Errors from constructing or manipulating capacitance networks and
/// charging-energy sets.
#[derive(Debug, Clone, Error)]
pub enum NetworkError {
    /// A capacitance or energy that must be strictly positive is not.
    #[error("{name} must be strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    /// A value is not finite.
    #[error("{name} is not finite")]
    NotFinite { name: &'static str },
    /// Total capacitance of a node does not dominate the couplings attached
    /// to it.
    #[error(
        "node {node}: total capacitance {c_total} aF does not exceed the sum \
         of attached couplings {c_attached} aF"
    )]
    DominanceViolated {
        node: usize,
        c_total: f64,
        c_attached: f64,
    },
    /// Maxwell matrix could not be factorized.
    #[error("Maxwell capacitance matrix is singular or not positive definite")]
    SingularMatrix,
    /// Energy set does not correspond to any physical network.
    #[error("charging-energy set is unphysical: {reason}")]
    UnphysicalEnergies { reason: String },
}

/// Errors from spectrum and polarization evaluation.
#[derive(Debug, Clone, Error)]
pub enum SpectrumError {
    /// A model parameter is outside its admissible range.
    #[error("{name} must satisfy {constraint}, got {value}")]
    BadParameter {
        name: &'static str,
        constraint: &'static str,
        value: f64,
    },
    /// The eigensolver failed to converge.
    #[error("eigendecomposition failed to converge")]
    EigenFailure,
    /// No zero crossing of the polarization could be bracketed.
    #[error("could not bracket the polarization zero of the {side} pair")]
    NoPolarizationZero { side: &'static str },
}

/// Errors from diagram synthesis and file I/O of grids.
#[derive(Debug, Error)]
pub enum DiagramError {
    /// Axis or grid description is invalid.
    #[error("invalid grid: {0}")]
    BadGrid(String),
    /// Model parameters rejected.
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    /// Network parameters rejected.
    #[error(transparent)]
    Network(#[from] NetworkError),
    /// Underlying file I/O failed.
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// File contents could not be parsed as a diagram.
    #[error("malformed diagram data in {path}: {reason}")]
    Malformed { path: String, reason: String },
}

/// Errors from the fitting layer.
#[derive(Debug, Error)]
pub enum FitError {
    /// Input data fails a precondition (too few points, mismatched lengths,
    /// non-finite values, guesses outside bounds).
    #[error("invalid fit input: {0}")]
    InvalidInput(String),
    /// No resolvable feature in the data (flat trace, peak below the noise
    /// floor).
    #[error("no resolvable feature: {0}")]
    NoFeature(String),
    /// Root bracketing failed.
    #[error("failed to bracket a root for {0}")]
    BracketFailure(String),
    /// The optimizer exhausted its iteration budget. Carries the best state
    /// reached so far.
    #[error("no convergence after {iterations} iterations (residual norm {residual_norm:.6e})")]
    NonConvergence {
        iterations: usize,
        residual_norm: f64,
        best: Box<crate::fit::lm::LmResult>,
    },
    /// Track of a feature across linecuts was lost too early to fit.
    #[error("feature track lost: {0}")]
    TrackLost(String),
}

/// Errors from the boundary-element solver.
#[derive(Debug, Clone, Error)]
pub enum BemError {
    /// Geometry parameters are invalid (non-positive sizes, overlapping
    /// electrodes).
    #[error("invalid geometry: {0}")]
    BadGeometry(String),
    /// Too few panels requested for a meaningful solve.
    #[error("panel budget {requested} is below the minimum of {minimum}")]
    TooFewPanels { requested: usize, minimum: usize },
    /// So many panels requested that the dense solve would not fit in
    /// memory.
    #[error("panel budget {requested} exceeds the dense-solver limit of {maximum}")]
    PanelBudgetExceeded { requested: usize, maximum: usize },
    /// The collocation matrix could not be solved to tolerance.
    #[error("collocation matrix is singular or ill conditioned: {diagnostic}")]
    IllConditioned { diagnostic: String },
}
