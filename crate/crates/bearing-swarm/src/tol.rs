//! Numeric tolerances and fixed algorithm constants, collected in one place
//! so every module and test asserts against the same values.

/// Minimum target-to-sensor range before a bearing is considered singular.
pub const RANGE_EPSILON: f64 = 1e-9;

/// Off-diagonal convergence threshold for the cyclic Jacobi eigensolver,
/// relative to the Frobenius norm of the input.
pub const JACOBI_OFF_TOL: f64 = 1e-12;

/// Relative eigenvalue cutoff below which a mode is treated as part of the
/// null space when forming a pseudo-inverse.
pub const PINV_RANK_CUT: f64 = 1e-9;

/// Determinant validity threshold for the per-node 2x2 solve, relative to
/// the squared max-magnitude entry of the unpacked matrix.
pub const DET_TOL: f64 = 1e-12;

/// Smallest-singular-value threshold below which the centralized
/// least-squares oracle refuses to solve.
pub const SIGMA_MIN_TOL: f64 = 1e-8;

/// Observability margin a scenario must maintain over the whole run:
/// min over time of the smallest singular value of the stacked bearing
/// normals.
pub const OBSERVABILITY_MIN: f64 = 0.05;

/// Minimum distance the target trajectory must keep from every sensor for
/// rate certification to accept it.
pub const MIN_CLEARANCE: f64 = 1e-3;

/// Safety inflation applied to the measured signal-rate supremum when
/// certifying gamma.
pub const GAMMA_INFLATION: f64 = 1.25;

/// Absolute floor for the certified rate bound, so constant signals still
/// produce a positive gamma.
pub const GAMMA_FLOOR: f64 = 1e-6;

/// Certification and validation sweep the trajectory on a grid this many
/// times finer than the integration step.
pub const CERT_GRID_REFINE: f64 = 10.0;

/// Multiple of beta*h used as the chatter floor: a discretized signum
/// protocol cannot settle closer to consensus than its per-step quantum,
/// so "converged" means the stacked error norm sits below this.
pub const CHATTER_FLOOR_FACTOR: f64 = 10.0;

/// Positive lower bound on lambda2 used by the connectivity diagnostic
/// (breadth-first search remains authoritative).
pub const LAMBDA2_POSITIVE_TOL: f64 = 1e-9;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floors_are_ordered_sanely() {
        assert!(RANGE_EPSILON < MIN_CLEARANCE);
        assert!(SIGMA_MIN_TOL < OBSERVABILITY_MIN);
        assert!(JACOBI_OFF_TOL < PINV_RANK_CUT);
        assert!(GAMMA_INFLATION > 1.0);
    }
}
