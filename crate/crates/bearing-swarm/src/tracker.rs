//! Target recovery from information states.
//!
//! Each node unpacks its 6-dimensional consensus estimate into a 2x2
//! information matrix P and vector q and solves P p = q for the target.
//! Once consensus has locked onto the network averages, that local solve
//! coincides with the centralized least-squares solution over all sensor
//! rows, which this module also computes as the reference oracle.

use thiserror::Error;

use crate::geometry::{self, LocalInformation};
use crate::linalg::{Mat2, Vec2};
use crate::tol;

#[derive(Debug, Error, PartialEq)]
pub enum TrackerError {
    #[error(
        "observation matrix is rank deficient: smallest singular value {sigma_min:.3e} \
         (needs > {threshold:.3e}); bearing lines do not intersect transversally"
    )]
    RankDeficient { sigma_min: f64, threshold: f64 },
    #[error("least-squares routes disagree by {gap:.3e}; numerical fault")]
    RouteMismatch { gap: f64 },
}

/// Stacked range-free observations z = H p across the network.
#[derive(Debug, Clone)]
pub struct StackedObservation {
    /// Measurement rows h_i of H.
    pub rows: Vec<Vec2>,
    /// Scalar observations z_i.
    pub offsets: Vec<f64>,
}

impl StackedObservation {
    pub fn from_information(infos: &[LocalInformation]) -> StackedObservation {
        StackedObservation {
            rows: infos.iter().map(|li| li.h).collect(),
            offsets: infos.iter().map(|li| li.z).collect(),
        }
    }

    /// Normal matrix H^T H.
    pub fn normal_matrix(&self) -> Mat2 {
        self.rows
            .iter()
            .fold(Mat2::zero(), |acc, &h| acc.add(&Mat2::outer(h)))
    }

    /// Smallest singular value of H, the margin to losing observability.
    pub fn sigma_min(&self) -> f64 {
        let (lo, _) = self.normal_matrix().sym_eigenvalues();
        lo.max(0.0).sqrt()
    }
}

/// Network-average information pair (mean of h h^T, mean of z h).
pub fn average_information(infos: &[LocalInformation]) -> (Mat2, Vec2) {
    let n = infos.len() as f64;
    let mut p = Mat2::zero();
    let mut q = Vec2::ZERO;
    for li in infos {
        p = p.add(&li.info_matrix);
        q = q + li.info_vector;
    }
    (p.scale(1.0 / n), q * (1.0 / n))
}

/// Centralized least-squares target estimate, the oracle every node should
/// reach after consensus.
///
/// Computed twice: from the raw normal equations H^T H p = H^T z and from
/// the averaged information pair. The two accumulations round differently;
/// a disagreement beyond 1e-10 indicates a numerical fault and is reported
/// instead of silently returning either value.
pub fn centralized_solution(obs: &StackedObservation) -> Result<Vec2, TrackerError> {
    let sigma_min = obs.sigma_min();
    if sigma_min <= tol::SIGMA_MIN_TOL {
        return Err(TrackerError::RankDeficient {
            sigma_min,
            threshold: tol::SIGMA_MIN_TOL,
        });
    }

    let normal = obs.normal_matrix();
    let mut rhs = Vec2::ZERO;
    for (&h, &z) in obs.rows.iter().zip(&obs.offsets) {
        rhs = rhs + h * z;
    }
    let direct = normal
        .solve(rhs)
        .expect("sigma_min guard keeps the normal matrix invertible");

    let n = obs.rows.len() as f64;
    let averaged_normal = normal.scale(1.0 / n);
    let averaged_rhs = rhs * (1.0 / n);
    let averaged = averaged_normal
        .solve(averaged_rhs)
        .expect("scaling preserves invertibility");

    let gap = (direct - averaged).norm();
    if gap > 1e-10 {
        return Err(TrackerError::RouteMismatch { gap });
    }
    Ok(direct)
}

/// One node's target estimate recovered from a packed information state.
#[derive(Debug, Clone, Copy)]
pub struct TrackEstimate {
    pub node: usize,
    pub p_hat: Vec2,
    /// Condition number of the unpacked information matrix.
    pub condition: f64,
    /// False when the information matrix was numerically singular; p_hat
    /// then holds the caller-provided fallback.
    pub valid: bool,
}

/// Solves the unpacked 2x2 system from a consensus estimate. Never fails:
/// pre-consensus states are legitimately singular (a single rank-one
/// contribution cannot locate the target), so singularity lands in the
/// `valid` flag and `fallback` fills the estimate.
pub fn local_solution(node: usize, packed: &[f64; 6], fallback: Vec2) -> TrackEstimate {
    let (p_mat, q) = geometry::unpack_info(packed);
    let scale = p_mat.max_abs();
    let det = p_mat.det();
    let valid = det.abs() > tol::DET_TOL * scale * scale;
    let p_hat = if valid {
        p_mat.solve(q).expect("determinant guard")
    } else {
        fallback
    };
    TrackEstimate {
        node,
        p_hat,
        condition: p_mat.sym_condition(),
        valid,
    }
}

/// Smallest singular value of the observation matrix built from true
/// geometry; the scenario validator requires this to stay above a margin
/// along the whole trajectory.
pub fn observability_margin(
    sensors: &[Vec2],
    p: Vec2,
) -> Result<f64, crate::geometry::GeometryError> {
    let infos = geometry::measure_all(p, sensors)?;
    Ok(StackedObservation::from_information(&infos).sigma_min())
}
