//! Bearing synthesis and per-node observation quantities.
//!
//! A sensor at s observing a target at p measures only the unit direction
//! phi = (p - s)/|p - s|. Rotating phi a quarter turn counterclockwise gives
//! phi_perp, which annihilates the unknown range: phi_perp . s =
//! phi_perp . p. That scalar, together with the rank-one matrix
//! phi_perp phi_perp^T, is everything a node contributes to the network
//! least-squares problem, packed into a 6-vector for the consensus layer.

use thiserror::Error;

use crate::linalg::{Mat2, Vec2};
use crate::tol;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("target within {distance:.3e} of sensor {sensor}; bearing undefined")]
    TargetAtSensor { sensor: usize, distance: f64 },
}

/// One noiseless bearing observation.
#[derive(Debug, Clone, Copy)]
pub struct BearingMeasurement {
    /// Bearing angle in [0, 2 pi), counterclockwise from +x.
    pub theta: f64,
    /// Unit vector from sensor to target, [cos theta, sin theta].
    pub phi: Vec2,
    /// phi rotated a quarter turn counterclockwise, [-sin theta, cos theta].
    pub phi_perp: Vec2,
    /// Sensor-target distance. Diagnostic only; nodes never see it.
    pub range: f64,
}

impl BearingMeasurement {
    /// Synthetic measurement at a given angle; the diagnostic range is set
    /// to 1.
    pub fn from_angle(theta: f64) -> BearingMeasurement {
        let theta = theta.rem_euclid(2.0 * std::f64::consts::PI);
        let phi = Vec2::new(theta.cos(), theta.sin());
        BearingMeasurement {
            theta,
            phi,
            phi_perp: phi.perp(),
            range: 1.0,
        }
    }

    /// Worst entry of phi phi^T + phi_perp phi_perp^T - I, which is zero in
    /// exact arithmetic.
    pub fn identity_deviation(&self) -> f64 {
        let sum = Mat2::outer(self.phi).add(&Mat2::outer(self.phi_perp));
        sum.sub(&Mat2::identity()).max_abs()
    }
}

/// Bearing of target p seen from sensor s. The sensor index only labels the
/// error when the target sits on top of the sensor.
pub fn bearing(p: Vec2, s: Vec2, sensor: usize) -> Result<BearingMeasurement, GeometryError> {
    bearing_with_epsilon(p, s, sensor, tol::RANGE_EPSILON)
}

/// [`bearing`] with an explicit minimum-range cutoff.
pub fn bearing_with_epsilon(
    p: Vec2,
    s: Vec2,
    sensor: usize,
    range_epsilon: f64,
) -> Result<BearingMeasurement, GeometryError> {
    let d = p - s;
    let range = d.norm();
    if range <= range_epsilon {
        return Err(GeometryError::TargetAtSensor {
            sensor,
            distance: range,
        });
    }
    let phi = Vec2::new(d.x / range, d.y / range);
    let mut theta = d.y.atan2(d.x);
    if theta < 0.0 {
        theta += 2.0 * std::f64::consts::PI;
    }
    Ok(BearingMeasurement {
        theta,
        phi,
        phi_perp: phi.perp(),
        range,
    })
}

/// Everything node i contributes to the shared estimation problem.
#[derive(Debug, Clone, Copy)]
pub struct LocalInformation {
    /// Measurement row h = phi_perp.
    pub h: Vec2,
    /// Range-free scalar observation z = h . s (= h . p for the true
    /// target).
    pub z: f64,
    /// Rank-one information matrix h h^T.
    pub info_matrix: Mat2,
    /// Information vector z h.
    pub info_vector: Vec2,
    /// [vec(info_matrix); info_vector] in the packing of [`pack_info`].
    pub packed: [f64; 6],
}

/// Builds the local information quantities from a measurement and the
/// observing sensor's position.
pub fn local_information(m: &BearingMeasurement, s: Vec2) -> LocalInformation {
    let h = m.phi_perp;
    let z = h.dot(s);
    let info_matrix = Mat2::outer(h);
    let info_vector = h * z;
    LocalInformation {
        h,
        z,
        info_matrix,
        info_vector,
        packed: pack_info(&info_matrix, info_vector),
    }
}

/// Measurements and local information for every sensor at once.
pub fn measure_all(p: Vec2, sensors: &[Vec2]) -> Result<Vec<LocalInformation>, GeometryError> {
    sensors
        .iter()
        .enumerate()
        .map(|(i, &s)| Ok(local_information(&bearing(p, s, i)?, s)))
        .collect()
}

/// Stacks the packed 6-vectors of a measurement set into an n x 6 array,
/// the signal matrix the consensus layer averages.
pub fn packed_matrix(infos: &[LocalInformation]) -> ndarray::Array2<f64> {
    ndarray::Array2::from_shape_fn((infos.len(), 6), |(i, k)| infos[i].packed[k])
}

/// Packs (P, q) as [column-major vec(P); q]: entries
/// (P00, P10, P01, P11, qx, qy).
pub fn pack_info(p: &Mat2, q: Vec2) -> [f64; 6] {
    [p.m[0][0], p.m[1][0], p.m[0][1], p.m[1][1], q.x, q.y]
}

/// Inverse of [`pack_info`]. The matrix part is symmetrized as
/// (P + P^T)/2 because consensus estimates can drift slightly off
/// symmetric.
pub fn unpack_info(v: &[f64; 6]) -> (Mat2, Vec2) {
    let off = 0.5 * (v[1] + v[2]);
    (Mat2::new(v[0], off, off, v[3]), Vec2::new(v[4], v[5]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn axis_aligned_bearings() {
        let m = bearing(Vec2::new(1.0, 0.0), Vec2::ZERO, 0).unwrap();
        assert_eq!(m.theta, 0.0);
        assert_eq!(m.phi, Vec2::new(1.0, 0.0));
        assert_eq!(m.phi_perp, Vec2::new(0.0, 1.0));
        assert_eq!(m.range, 1.0);

        let m = bearing(Vec2::new(0.0, 2.0), Vec2::ZERO, 0).unwrap();
        assert_eq!(m.theta, FRAC_PI_2);
        assert_eq!(m.phi, Vec2::new(0.0, 1.0));
        assert_eq!(m.phi_perp, Vec2::new(-1.0, 0.0));
        assert_eq!(m.range, 2.0);
    }

    #[test]
    fn coincident_target_rejected() {
        assert_eq!(
            bearing(Vec2::ZERO, Vec2::ZERO, 3).unwrap_err(),
            GeometryError::TargetAtSensor {
                sensor: 3,
                distance: 0.0
            }
        );
    }

    #[test]
    fn theta_wraps_into_upper_half_range() {
        // Target below the sensor: atan2 gives a negative angle, we report
        // it in [0, 2 pi).
        let m = bearing(Vec2::new(0.0, -1.0), Vec2::ZERO, 0).unwrap();
        assert_abs_diff_eq!(m.theta, 1.5 * PI, epsilon = 1e-15);
    }

    #[test]
    fn sensor_at_origin_gives_zero_observation() {
        let m = bearing(Vec2::new(1.0, 0.0), Vec2::ZERO, 0).unwrap();
        let info = local_information(&m, Vec2::ZERO);
        assert_eq!(info.h, Vec2::new(0.0, 1.0));
        assert_eq!(info.z, 0.0);
        assert_eq!(info.info_matrix, Mat2::new(0.0, 0.0, 0.0, 1.0));
        assert_eq!(info.info_vector, Vec2::ZERO);
    }

    #[test]
    fn observation_consistent_with_true_position() {
        let p = Vec2::new(2.0, 2.0);
        let s = Vec2::new(1.0, 0.0);
        let m = bearing(p, s, 0).unwrap();
        let r5 = 5.0_f64.sqrt();
        assert_abs_diff_eq!(m.phi.x, 1.0 / r5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.phi.y, 2.0 / r5, epsilon = 1e-15);
        let info = local_information(&m, s);
        assert_abs_diff_eq!(info.h.x, -2.0 / r5, epsilon = 1e-15);
        assert_abs_diff_eq!(info.h.y, 1.0 / r5, epsilon = 1e-15);
        assert_abs_diff_eq!(info.z, -2.0 / r5, epsilon = 1e-15);
        // The scalar observation is range-free: h . s = h . p exactly for
        // the true target position.
        assert_abs_diff_eq!(info.h.dot(p), info.z, epsilon = 1e-12);
    }

    #[test]
    fn packing_order_and_symmetrization() {
        let p = Mat2::new(1.0, 3.0, 3.0, 2.0);
        let q = Vec2::new(4.0, 5.0);
        assert_eq!(pack_info(&p, q), [1.0, 3.0, 3.0, 2.0, 4.0, 5.0]);
        let (p2, q2) = unpack_info(&pack_info(&p, q));
        assert_eq!(p2, p);
        assert_eq!(q2, q);

        let (p3, _) = unpack_info(&[1.0, 0.25, 0.75, 2.0, 0.0, 0.0]);
        assert_eq!(p3, Mat2::new(1.0, 0.5, 0.5, 2.0));
    }

    proptest! {
        #[test]
        fn rotation_identity_tight(theta in -10.0f64..10.0) {
            let m = BearingMeasurement::from_angle(theta);
            prop_assert!(m.identity_deviation() <= 1e-14);
            prop_assert!(m.theta >= 0.0 && m.theta < 2.0 * PI);
        }

        #[test]
        fn bearing_times_range_recovers_displacement(
            px in -5.0f64..5.0, py in -5.0f64..5.0,
            sx in -5.0f64..5.0, sy in -5.0f64..5.0,
        ) {
            let p = Vec2::new(px, py);
            let s = Vec2::new(sx, sy);
            prop_assume!(p.dist(s) > 1e-6);
            let m = bearing(p, s, 0).unwrap();
            let rebuilt = m.phi * m.range;
            prop_assert!((rebuilt - (p - s)).norm() <= 1e-12);
            prop_assert!(m.identity_deviation() <= 1e-14);

            let info = local_information(&m, s);
            // Noiseless consistency and the projector property of h h^T.
            prop_assert!((info.h.dot(p) - info.z).abs() <= 1e-12);
            prop_assert!((info.info_matrix.trace() - 1.0).abs() <= 1e-12);
            let pp = info.info_matrix;
            let diff = Mat2::new(
                pp.m[0][0] * pp.m[0][0] + pp.m[0][1] * pp.m[1][0] - pp.m[0][0],
                pp.m[0][0] * pp.m[0][1] + pp.m[0][1] * pp.m[1][1] - pp.m[0][1],
                pp.m[1][0] * pp.m[0][0] + pp.m[1][1] * pp.m[1][0] - pp.m[1][0],
                pp.m[1][0] * pp.m[0][1] + pp.m[1][1] * pp.m[1][1] - pp.m[1][1],
            );
            prop_assert!(diff.max_abs() <= 1e-12);
        }

        #[test]
        fn pack_roundtrip_bit_exact(
            a in -3.0f64..3.0, c in -3.0f64..3.0, b in -3.0f64..3.0,
            qx in -3.0f64..3.0, qy in -3.0f64..3.0,
        ) {
            let p = Mat2::new(a, c, c, b);
            let q = Vec2::new(qx, qy);
            let (p2, q2) = unpack_info(&pack_info(&p, q));
            prop_assert_eq!(p2, p);
            prop_assert_eq!(q2, q);
        }
    }
}
