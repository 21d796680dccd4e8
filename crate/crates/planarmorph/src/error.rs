use std::fmt;

/// Error type shared by the whole crate.
///
/// Variants mirror the failure modes of the pipeline stages: geometric
/// degeneracies, map-structure violations, search failures, and the
/// hypothesis/injectivity/energy certificates that can be refused.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanarError {
    /// A degree query landed on the curve itself (within tolerance); the
    /// winding number is undefined there.
    PointOnCurve { detail: String },
    /// Endpoints of a generalized segment coincide, sit on a rectangle
    /// corner, or are not on the rectangle boundary.
    DegeneratePoints { detail: String },
    /// The bump apex of a generalized segment would leave its rectangle.
    BumpTooLarge { detail: String },
    /// Evaluation point outside the map's domain.
    OutOfDomain { detail: String },
    /// Evaluation at an explicit discontinuity vertex; the value is a fan,
    /// not a point.
    AtDiscontinuity { detail: String },
    /// A map required to be a homeomorphism failed verification.
    NotInjective { detail: String },
    /// A polyline restriction ran through a discontinuity vertex.
    HitsDiscontinuity { detail: String },
    /// A whole sub-segment of a curve maps into the queried value.
    InfiniteIntersection { detail: String },
    /// Tangential derivative vanished where a transversal crossing was
    /// required.
    ZeroDerivative { detail: String },
    /// An affine piece maps a sub-segment into a target grid line; the grid
    /// must be re-chosen.
    TangentialPiece { detail: String },
    /// The structural hypothesis (connected, non-disconnecting point
    /// preimages) is violated; carries a witness description.
    HypothesisViolated { detail: String },
    /// Marked-point images are too close together for the requested
    /// separation width.
    GapTooSmall { detail: String },
    /// Injectivization produced (or would produce) crossing image segments.
    InjectivityFailure { detail: String },
    /// A certified per-square energy inequality failed.
    EnergyBoundFailure { detail: String },
    /// The perturbed-grid vertex search ran out of budget.
    SearchExhausted { detail: String },
    /// No admissible target grid exists under the requested spacing.
    NoAdmissibleGrid { detail: String },
    /// All extension strategies failed for one cell's boundary data.
    ExtensionFailed { detail: String },
    /// The collar construction's sup-distance precondition failed; caller
    /// falls back to the general extension.
    CollarCollision { detail: String },
    /// A multivalued-image query curve runs through a discontinuity vertex.
    BoundaryHitsDiscontinuity { detail: String },
    /// Degree-guided bisection started from a zero-degree region.
    DegreeZero { detail: String },
    /// Persistence failure (file system or serialization).
    Io { detail: String },
}

impl PlanarError {
    /// Short machine-readable tag, used in reports and CLI diagnostics.
    pub fn tag(&self) -> &'static str {
        match self {
            PlanarError::PointOnCurve { .. } => "point_on_curve",
            PlanarError::DegeneratePoints { .. } => "degenerate_points",
            PlanarError::BumpTooLarge { .. } => "bump_too_large",
            PlanarError::OutOfDomain { .. } => "out_of_domain",
            PlanarError::AtDiscontinuity { .. } => "at_discontinuity",
            PlanarError::NotInjective { .. } => "not_injective",
            PlanarError::HitsDiscontinuity { .. } => "hits_discontinuity",
            PlanarError::InfiniteIntersection { .. } => "infinite_intersection",
            PlanarError::ZeroDerivative { .. } => "zero_derivative",
            PlanarError::TangentialPiece { .. } => "tangential_piece",
            PlanarError::HypothesisViolated { .. } => "hypothesis_violated",
            PlanarError::GapTooSmall { .. } => "gap_too_small",
            PlanarError::InjectivityFailure { .. } => "injectivity_failure",
            PlanarError::EnergyBoundFailure { .. } => "energy_bound_failure",
            PlanarError::SearchExhausted { .. } => "search_exhausted",
            PlanarError::NoAdmissibleGrid { .. } => "no_admissible_grid",
            PlanarError::ExtensionFailed { .. } => "extension_failed",
            PlanarError::CollarCollision { .. } => "collar_collision",
            PlanarError::BoundaryHitsDiscontinuity { .. } => "boundary_hits_discontinuity",
            PlanarError::DegreeZero { .. } => "degree_zero",
            PlanarError::Io { .. } => "io",
        }
    }

    pub fn detail(&self) -> &str {
        match self {
            PlanarError::PointOnCurve { detail }
            | PlanarError::DegeneratePoints { detail }
            | PlanarError::BumpTooLarge { detail }
            | PlanarError::OutOfDomain { detail }
            | PlanarError::AtDiscontinuity { detail }
            | PlanarError::NotInjective { detail }
            | PlanarError::HitsDiscontinuity { detail }
            | PlanarError::InfiniteIntersection { detail }
            | PlanarError::ZeroDerivative { detail }
            | PlanarError::TangentialPiece { detail }
            | PlanarError::HypothesisViolated { detail }
            | PlanarError::GapTooSmall { detail }
            | PlanarError::InjectivityFailure { detail }
            | PlanarError::EnergyBoundFailure { detail }
            | PlanarError::SearchExhausted { detail }
            | PlanarError::NoAdmissibleGrid { detail }
            | PlanarError::ExtensionFailed { detail }
            | PlanarError::CollarCollision { detail }
            | PlanarError::BoundaryHitsDiscontinuity { detail }
            | PlanarError::DegreeZero { detail }
            | PlanarError::Io { detail } => detail,
        }
    }
}

impl fmt::Display for PlanarError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.tag(), self.detail())
    }
}

impl std::error::Error for PlanarError {}

impl From<std::io::Error> for PlanarError {
    fn from(e: std::io::Error) -> Self {
        PlanarError::Io { detail: e.to_string() }
    }
}

impl From<serde_json::Error> for PlanarError {
    fn from(e: serde_json::Error) -> Self {
        PlanarError::Io { detail: e.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, PlanarError>;
