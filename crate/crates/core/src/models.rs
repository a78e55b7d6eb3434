//! Discrete-time vehicle kinematics and the range-bearing landmark sensor.
//!
//! State ordering is always `(x, y, phi)`, control ordering `(v, gamma)` and
//! measurement ordering `(range, bearing)`.

use core::f64::consts::{PI, TAU};

use libm::{atan2, cos, fmod, sin, sqrt};
use nalgebra::{Matrix2x3, Matrix3, Matrix3x2, Vector2, Vector3};

use crate::{Error, Result};

/// Smallest robot-landmark distance for which range and bearing are defined.
pub const DEFAULT_MIN_RANGE: f64 = 1e-9;

/// Wraps an angle into the half-open interval `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = fmod(a + PI, TAU);
    if w < 0.0 {
        w += TAU;
    }
    w -= PI;
    if w <= -PI {
        PI
    } else {
        w
    }
}

/// Planar robot pose. The heading is kept wrapped to `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    x: f64,
    y: f64,
    phi: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, phi: f64) -> Self {
        Self {
            x,
            y,
            phi: wrap_angle(phi),
        }
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.phi)
    }
}

/// Velocity / steer command.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    /// Forward speed, m/s.
    pub v: f64,
    /// Steer angle, rad.
    pub gamma: f64,
}

impl ControlInput {
    pub fn new(v: f64, gamma: f64) -> Self {
        Self { v, gamma }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

impl Landmark {
    pub fn new(id: u32, x: f64, y: f64) -> Self {
        Self { id, x, y }
    }
}

/// A single range-bearing reading of a known landmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub landmark_id: u32,
    /// Range in meters, never negative.
    pub range: f64,
    /// Bearing relative to the heading, wrapped to `(-pi, pi]`.
    pub bearing: f64,
}

impl Measurement {
    pub fn to_vector(&self) -> Vector2<f64> {
        Vector2::new(self.range, self.bearing)
    }
}

/// Standard deviations of the control and sensor noise channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Speed noise, m/s.
    pub sigma_v: f64,
    /// Steer noise, rad.
    pub sigma_gamma: f64,
    /// Range noise, m.
    pub sigma_r: f64,
    /// Bearing noise, rad.
    pub sigma_theta: f64,
}

impl NoiseSpec {
    /// Accepts any finite, non-negative deviations. A zero channel is only
    /// meaningful for the simulated world; filters need strictly positive
    /// values (see [`NoiseSpec::is_strictly_positive`]).
    pub fn new(sigma_v: f64, sigma_gamma: f64, sigma_r: f64, sigma_theta: f64) -> Result<Self> {
        let s = Self {
            sigma_v,
            sigma_gamma,
            sigma_r,
            sigma_theta,
        };
        if s.as_array().iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(s)
        } else {
            Err(Error::InvalidArgument(
                "noise deviations must be finite and non-negative",
            ))
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [
            self.sigma_v,
            self.sigma_gamma,
            self.sigma_r,
            self.sigma_theta,
        ]
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.as_array().iter().all(|v| *v > 0.0)
    }

    /// Diagonal of the control noise covariance `(sigma_v^2, sigma_gamma^2)`.
    pub fn control_variances(&self) -> Vector2<f64> {
        Vector2::new(
            self.sigma_v * self.sigma_v,
            self.sigma_gamma * self.sigma_gamma,
        )
    }

    /// Diagonal of the sensor noise covariance `(sigma_r^2, sigma_theta^2)`.
    pub fn sensor_variances(&self) -> Vector2<f64> {
        Vector2::new(
            self.sigma_r * self.sigma_r,
            self.sigma_theta * self.sigma_theta,
        )
    }
}

/// Bicycle-style kinematics where the process noise enters through the
/// speed and steer channels, before the trigonometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleModel {
    /// Wheelbase, m.
    pub wheelbase: f64,
}

impl VehicleModel {
    pub fn new(wheelbase: f64) -> Result<Self> {
        if wheelbase.is_finite() && wheelbase > 0.0 {
            Ok(Self { wheelbase })
        } else {
            Err(Error::InvalidArgument("wheelbase must be positive"))
        }
    }

    /// Propagates `pose` over one step of length `dt` with the command
    /// perturbed by `noise = (dv, dgamma)`.
    pub fn step(&self, pose: &Pose, u: &ControlInput, dt: f64, noise: (f64, f64)) -> Pose {
        let v = u.v + noise.0;
        let gamma = u.gamma + noise.1;
        let heading = pose.phi + gamma;
        Pose::new(
            pose.x + dt * v * cos(heading),
            pose.y + dt * v * sin(heading),
            pose.phi + dt * v / self.wheelbase * sin(gamma),
        )
    }

    /// Jacobian of [`VehicleModel::step`] with respect to the pose, at zero noise.
    pub fn jacobian_state(&self, pose: &Pose, u: &ControlInput, dt: f64) -> Matrix3<f64> {
        let heading = pose.phi + u.gamma;
        let d = dt * u.v;
        Matrix3::new(
            1.0,
            0.0,
            -d * sin(heading), //
            0.0,
            1.0,
            d * cos(heading), //
            0.0,
            0.0,
            1.0,
        )
    }

    /// Jacobian of [`VehicleModel::step`] with respect to `(v, gamma)`, at zero noise.
    pub fn jacobian_control(&self, pose: &Pose, u: &ControlInput, dt: f64) -> Matrix3x2<f64> {
        let heading = pose.phi + u.gamma;
        let (sh, ch) = (sin(heading), cos(heading));
        let b = self.wheelbase;
        Matrix3x2::new(
            dt * ch,
            -dt * u.v * sh, //
            dt * sh,
            dt * u.v * ch, //
            dt / b * sin(u.gamma),
            dt * u.v / b * cos(u.gamma),
        )
    }
}

/// Range-bearing sensor. Bearing is `atan2(y_l - y, x_l - x) - phi`, the
/// direction to the landmark measured from the robot heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeBearing {
    pub min_range: f64,
}

impl Default for RangeBearing {
    fn default() -> Self {
        Self {
            min_range: DEFAULT_MIN_RANGE,
        }
    }
}

impl RangeBearing {
    fn offset(&self, pose: &Pose, lm: &Landmark) -> Result<(f64, f64, f64)> {
        let dx = lm.x - pose.x;
        let dy = lm.y - pose.y;
        let dist = sqrt(dx * dx + dy * dy);
        if !(dist >= self.min_range) {
            return Err(Error::DegenerateGeometry(dist));
        }
        Ok((dx, dy, dist))
    }

    /// Reading of `lm` from `pose` with additive noise `(dr, dtheta)`.
    pub fn observe(&self, pose: &Pose, lm: &Landmark, noise: (f64, f64)) -> Result<Measurement> {
        let (dx, dy, dist) = self.offset(pose, lm)?;
        Ok(Measurement {
            landmark_id: lm.id,
            range: (dist + noise.0).max(0.0),
            bearing: wrap_angle(atan2(dy, dx) - pose.phi + noise.1),
        })
    }

    /// Noise-free `(range, bearing)` prediction as a vector.
    pub fn predict(&self, pose: &Pose, lm: &Landmark) -> Result<Vector2<f64>> {
        let (dx, dy, dist) = self.offset(pose, lm)?;
        Ok(Vector2::new(dist, wrap_angle(atan2(dy, dx) - pose.phi)))
    }

    /// Jacobian of the observation with respect to the pose.
    pub fn jacobian(&self, pose: &Pose, lm: &Landmark) -> Result<Matrix2x3<f64>> {
        let (dx, dy, dist) = self.offset(pose, lm)?;
        let q = dist * dist;
        Ok(Matrix2x3::new(
            -dx / dist,
            -dy / dist,
            0.0, //
            dy / q,
            -dx / q,
            -1.0,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use core::f64::consts::FRAC_PI_2;

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(0.0), 0.0);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(PI), PI);
        assert_abs_diff_eq!(wrap_angle(-3.0 * FRAC_PI_2), FRAC_PI_2, epsilon = 1e-12);
        for a in [-20.0, -7.5, -1.0, 0.3, 4.0, 100.0] {
            let w = wrap_angle(a);
            assert!(w > -PI && w <= PI);
            assert_eq!(wrap_angle(w), w);
        }
    }

    #[test]
    fn motion_step_examples() {
        let car = VehicleModel::new(4.0).unwrap();
        let p = car.step(
            &Pose::default(),
            &ControlInput::new(1.0, 0.0),
            1.0,
            (0.0, 0.0),
        );
        assert_eq!((p.x(), p.y(), p.phi()), (1.0, 0.0, 0.0));

        let p = car.step(
            &Pose::default(),
            &ControlInput::new(1.0, FRAC_PI_2),
            1.0,
            (0.0, 0.0),
        );
        assert_abs_diff_eq!(p.x(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.y(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.phi(), 0.25, epsilon = 1e-15);

        let start = Pose::new(2.0, 3.0, PI);
        let p = car.step(&start, &ControlInput::new(0.0, 0.5), 0.1, (0.0, 0.0));
        assert_eq!(p, start);
    }

    #[test]
    fn motion_noise_enters_control_channel() {
        let car = VehicleModel::new(4.0).unwrap();
        let pose = Pose::new(1.0, -2.0, 0.4);
        let a = car.step(&pose, &ControlInput::new(2.0, 0.1), 0.5, (0.3, -0.05));
        let b = car.step(&pose, &ControlInput::new(2.3, 0.05), 0.5, (0.0, 0.0));
        assert_eq!(a, b);
    }

    #[test]
    fn motion_jacobian_examples() {
        let car = VehicleModel::new(4.0).unwrap();
        let pose = Pose::new(3.0, 1.0, 2.0);
        assert_eq!(
            car.jacobian_state(&pose, &ControlInput::new(0.0, 0.3), 0.1),
            Matrix3::identity()
        );
        let f = car.jacobian_state(&Pose::default(), &ControlInput::new(1.0, 0.0), 1.0);
        assert_eq!(f, Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0));
        let g = car.jacobian_control(&Pose::default(), &ControlInput::new(1.0, 0.0), 1.0);
        assert_eq!(g, Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.25));
        let g0 = car.jacobian_control(&pose, &ControlInput::new(3.0, 0.2), 0.0);
        assert_eq!(g0, Matrix3x2::zeros());
    }

    #[test]
    fn observe_examples() {
        let s = RangeBearing::default();
        let m = s
            .observe(&Pose::default(), &Landmark::new(1, 3.0, 4.0), (0.0, 0.0))
            .unwrap();
        assert_abs_diff_eq!(m.range, 5.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.bearing, 0.927_295_218_001_612_2, epsilon = 1e-12);

        for phi in [-3.0, -1.0, 0.0, 0.7, 3.1] {
            let m = s
                .observe(
                    &Pose::new(0.0, 0.0, phi),
                    &Landmark::new(2, 7.0, 0.0),
                    (0.0, 0.0),
                )
                .unwrap();
            assert_abs_diff_eq!(m.range, 7.0, epsilon = 1e-15);
            assert_abs_diff_eq!(m.bearing, wrap_angle(-phi), epsilon = 1e-15);
        }

        let pose = Pose::new(1.0, 1.0, 0.2);
        let lm = Landmark::new(3, 5.0, -2.0);
        let clean = s.observe(&pose, &lm, (0.0, 0.0)).unwrap();
        let noisy = s.observe(&pose, &lm, (0.1, 0.01)).unwrap();
        assert_abs_diff_eq!(noisy.range - clean.range, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(noisy.bearing - clean.bearing, 0.01, epsilon = 1e-12);
    }

    #[test]
    fn observe_rejects_coincident_landmark() {
        let s = RangeBearing::default();
        let pose = Pose::new(2.0, 2.0, 0.0);
        let lm = Landmark::new(0, 2.0, 2.0);
        assert!(matches!(
            s.observe(&pose, &lm, (0.0, 0.0)),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(matches!(
            s.jacobian(&pose, &lm),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn observation_jacobian_examples() {
        let s = RangeBearing::default();
        let h = s
            .jacobian(&Pose::default(), &Landmark::new(0, 6.0, 0.0))
            .unwrap();
        assert_eq!(
            h.row(0).into_owned(),
            nalgebra::RowVector3::new(-1.0, 0.0, 0.0)
        );
        let h = s
            .jacobian(&Pose::new(-3.0, 8.0, 1.0), &Landmark::new(0, 1.0, 2.0))
            .unwrap();
        assert_eq!(h[(1, 2)], -1.0);
        assert_eq!(h[(0, 2)], 0.0);
    }
}
