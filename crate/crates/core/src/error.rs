use std::fmt;

use thiserror::Error;

/// Named hypotheses that a rejected configuration can point back to.
///
/// Every validation failure carries exactly one anchor so that a user can
/// tell which admissibility condition was violated without reading code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Anchor {
    /// `p ∈ [2,∞)`, `α ∈ (1, 1+1/p)`, `θ_B ∈ [0,½)`, `θ_C ∈ (1−α/2,½)`, `θ_G ∈ (1−α/2,1)`.
    RegularityHypotheses,
    /// `δ + λ < min{1−θ_G, ½−θ_B, ½−θ_C}`.
    RegularityCap,
    /// `q < dp/(d−1)` for the `L^q` embedding in dimension `d ≥ 2`.
    LqEmbedding,
    /// `θ ∈ [1−α/2, 1]` for the smoothed boundary forcing.
    SmoothedForcingRange,
    /// Boundary covariance `Q = Σ λ_n e_n ⊗ e_n` with `Σ λ_n ‖e_n‖_∞² < ∞`.
    SummableBoundaryCovariance,
    /// RKHS boundary noise: `q ∈ (p,∞]`, `s ∈ [p,∞)`, `1/p = 1/q + 1/s`.
    RkhsBoundaryNoise,
    /// Interior noise in `L^r`: `r ∈ (d,∞)`, `θ_B ∈ (d/(2r), ½)`.
    InteriorNoiseLr,
    /// Space-time white noise: `d = 1`, `p > 2`, `θ_B ∈ (1/(2p)+¼, ½)`.
    WhiteNoiseOneDim,
    /// Dirichlet boundary noise cannot be handled by the Neumann-map construction.
    DirichletExcluded,
    /// Uniform ellipticity `a_ij ξ_i ξ_j ≥ κ|ξ|²`.
    Ellipticity,
    /// Spectrum of the shifted operator must lie strictly in the left half line.
    ShiftedSpectrum,
    /// Structural requirements of the experiment file (paths, sizes, modes).
    ExperimentSetup,
}

impl Anchor {
    pub fn as_str(self) -> &'static str {
        match self {
            Anchor::RegularityHypotheses => "regularity-hypotheses",
            Anchor::RegularityCap => "regularity-cap",
            Anchor::LqEmbedding => "lq-embedding",
            Anchor::SmoothedForcingRange => "smoothed-forcing-range",
            Anchor::SummableBoundaryCovariance => "summable-boundary-covariance",
            Anchor::RkhsBoundaryNoise => "rkhs-boundary-noise",
            Anchor::InteriorNoiseLr => "interior-noise-lr",
            Anchor::WhiteNoiseOneDim => "white-noise-one-dim",
            Anchor::DirichletExcluded => "dirichlet-excluded",
            Anchor::Ellipticity => "ellipticity",
            Anchor::ShiftedSpectrum => "shifted-spectrum",
            Anchor::ExperimentSetup => "experiment-setup",
        }
    }

    pub const ALL: [Anchor; 12] = [
        Anchor::RegularityHypotheses,
        Anchor::RegularityCap,
        Anchor::LqEmbedding,
        Anchor::SmoothedForcingRange,
        Anchor::SummableBoundaryCovariance,
        Anchor::RkhsBoundaryNoise,
        Anchor::InteriorNoiseLr,
        Anchor::WhiteNoiseOneDim,
        Anchor::DirichletExcluded,
        Anchor::Ellipticity,
        Anchor::ShiftedSpectrum,
        Anchor::ExperimentSetup,
    ];
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.as_str())
    }
}

/// A single violated admissibility condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub anchor: Anchor,
    pub message: String,
}

impl Violation {
    pub fn new(anchor: Anchor, message: impl Into<String>) -> Self {
        Self { anchor, message: message.into() }
    }
}

impl serde::Serialize for Violation {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("Violation", 2)?;
        s.serialize_field("anchor", self.anchor.as_str())?;
        s.serialize_field("message", &self.message)?;
        s.end()
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.anchor, self.message)
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("{} ellipticity violated at t = {t}, s = {position:?}: smallest eigenvalue {value}", Anchor::Ellipticity)]
    Ellipticity { t: f64, position: [f64; 2], value: f64 },

    #[error("{} spectrum of A_h(t) − w reaches {max_eigenvalue} at t = {t}", Anchor::ShiftedSpectrum)]
    ShiftedSpectrum { t: f64, max_eigenvalue: f64 },

    #[error("near-singular system for λ = {lambda}: pivot {pivot:e}")]
    SingularSystem { lambda: f64, pivot: f64 },

    #[error("test function violates the homogeneous conormal condition: boundary flux {flux:e}")]
    BoundaryCondition { flux: f64 },

    #[error("{0}")]
    Rejected(Violation),

    #[error("configuration rejected: {}", join_violations(.0))]
    Config(Vec<Violation>),

    #[error("path {path} produced a non-finite state at step {step} (norm history tail: {norms:?})")]
    NonFinite { path: u64, step: usize, norms: Vec<f64> },

    #[error("exponent undefined: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn rejected(anchor: Anchor, message: impl Into<String>) -> Self {
        Error::Rejected(Violation::new(anchor, message))
    }

    /// The violations carried by a validation error, if any.
    pub fn violations(&self) -> Vec<Violation> {
        match self {
            Error::Rejected(v) => vec![v.clone()],
            Error::Config(v) => v.clone(),
            _ => Vec::new(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::ShapeMismatch { expected, found })
    }
}
