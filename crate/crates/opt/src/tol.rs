//! Numerical tolerances. Every solver in the crate reads them from here.

/// Absolute primal feasibility tolerance on rows and bounds.
pub const FEASIBILITY: f64 = 1e-7;

/// Distance from the nearest integer under which a value counts as integral.
pub const INTEGRALITY: f64 = 1e-6;

/// Relative incumbent/bound gap at which branch-and-bound stops.
pub const MIP_GAP: f64 = 1e-9;

/// Reduced-cost tolerance for simplex pricing (scaled by the cost magnitude).
pub const OPTIMALITY: f64 = 1e-9;

/// Smallest magnitude accepted as a simplex or LU pivot.
pub const PIVOT: f64 = 1e-9;

/// Entries below this magnitude are dropped from sparse vectors.
pub const DROP: f64 = 1e-13;

/// Rounds `v` to the nearest integer when it is within [`INTEGRALITY`].
pub fn snap_integral(v: f64) -> Option<f64> {
    let r = v.round();
    ((v - r).abs() <= INTEGRALITY).then_some(r)
}

pub fn is_integral(v: f64) -> bool {
    snap_integral(v).is_some()
}
