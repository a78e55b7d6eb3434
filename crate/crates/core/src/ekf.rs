//! Localization EKF: prediction, measurement prediction, validation gate and
//! sequential update against a known landmark map.
//!
//! Q and R are passed in on every call so an outer adaptation loop can
//! rewrite them between steps.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use libm::sqrt;
use nalgebra::{Matrix2, Matrix2x3, Matrix3, Matrix3x2, Vector2, Vector3};

use crate::models::{
    wrap_angle, ControlInput, Landmark, Measurement, Pose, RangeBearing, VehicleModel,
};
use crate::{Error, Result};

/// 95% quantile of the chi-square distribution with two degrees of freedom.
pub const DEFAULT_GATE: f64 = 5.991;

/// Condition number above which an innovation covariance is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Pose estimate with its covariance.
///
/// The covariance is re-symmetrized after every write and the heading of the
/// mean is kept wrapped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianState {
    mean: Vector3<f64>,
    cov: Matrix3<f64>,
}

impl GaussianState {
    pub fn new(mean: Vector3<f64>, cov: Matrix3<f64>) -> Self {
        Self {
            mean: Vector3::new(mean[0], mean[1], wrap_angle(mean[2])),
            cov: symmetrize3(&cov),
        }
    }

    pub fn from_pose(pose: &Pose, cov: Matrix3<f64>) -> Self {
        Self::new(pose.to_vector(), cov)
    }

    pub fn mean(&self) -> &Vector3<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &Matrix3<f64> {
        &self.cov
    }

    pub fn pose(&self) -> Pose {
        Pose::from_vector(&self.mean)
    }
}

fn symmetrize3(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

fn symmetrize2(m: &Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}

/// Diagonal process (Q) and measurement (R) noise covariances, stored as
/// their diagonals. Q covers `(v, gamma)`, R covers `(range, bearing)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovPair {
    pub q: Vector2<f64>,
    pub r: Vector2<f64>,
}

impl CovPair {
    pub fn new(q: Vector2<f64>, r: Vector2<f64>) -> Self {
        Self { q, r }
    }

    pub fn q_matrix(&self) -> Matrix2<f64> {
        Matrix2::from_diagonal(&self.q)
    }

    pub fn r_matrix(&self) -> Matrix2<f64> {
        Matrix2::from_diagonal(&self.r)
    }
}

/// One processed measurement: its innovation, theoretical covariance and
/// whether it passed the validation gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnovationRecord {
    /// `(dr, dtheta)`, bearing wrapped.
    pub residual: Vector2<f64>,
    /// Innovation covariance `H P Hᵀ + R`.
    pub s: Matrix2<f64>,
    /// Observation Jacobian at the prior used for this measurement.
    pub jacobian: Matrix2x3<f64>,
    pub landmark_id: u32,
    pub timestep: u64,
    pub accepted: bool,
}

/// Known landmark map keyed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Map {
    landmarks: BTreeMap<u32, Landmark>,
}

impl Map {
    pub fn new(landmarks: impl IntoIterator<Item = Landmark>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for lm in landmarks {
            if map.insert(lm.id, lm).is_some() {
                return Err(Error::DuplicateLandmark(lm.id));
            }
        }
        Ok(Self { landmarks: map })
    }

    pub fn get(&self, id: u32) -> Option<&Landmark> {
        self.landmarks.get(&id)
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.landmarks.is_empty()
    }

    /// Landmarks in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &Landmark> {
        self.landmarks.values()
    }
}

/// Measurement residual `z - zhat` with the bearing component wrapped.
pub fn innovation(z: &Measurement, zhat: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(z.range - zhat[0], wrap_angle(z.bearing - zhat[1]))
}

fn eigenvalues2(s: &Matrix2<f64>) -> (f64, f64) {
    let a = s[(0, 0)];
    let d = s[(1, 1)];
    let b = 0.5 * (s[(0, 1)] + s[(1, 0)]);
    let mid = 0.5 * (a + d);
    let rad = sqrt(0.25 * (a - d) * (a - d) + b * b);
    (mid - rad, mid + rad)
}

/// Inverts a symmetric 2×2 innovation covariance, refusing matrices that are
/// not positive definite or whose condition number exceeds [`MAX_CONDITION`].
pub fn invert_innovation(s: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let (lo, hi) = eigenvalues2(s);
    if !(lo > 0.0) {
        return Err(Error::SingularInnovation(f64::INFINITY));
    }
    let cond = hi / lo;
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularInnovation(cond));
    }
    s.try_inverse().ok_or(Error::SingularInnovation(cond))
}

/// Squared Mahalanobis length `rᵀ S⁻¹ r`.
pub fn mahalanobis2(residual: &Vector2<f64>, s: &Matrix2<f64>) -> Result<f64> {
    let s_inv = invert_innovation(s)?;
    Ok((residual.transpose() * s_inv * residual)[0])
}

/// Validation gate: accepts iff `rᵀ S⁻¹ r <= threshold`.
pub fn gate(residual: &Vector2<f64>, s: &Matrix2<f64>, threshold: f64) -> Result<bool> {
    Ok(mahalanobis2(residual, s)? <= threshold)
}

/// `F P Fᵀ + G Q Gᵀ`, symmetrized.
pub fn propagate_covariance(
    cov: &Matrix3<f64>,
    f: &Matrix3<f64>,
    g: &Matrix3x2<f64>,
    q: &Matrix2<f64>,
) -> Matrix3<f64> {
    symmetrize3(&(f * cov * f.transpose() + g * q * g.transpose()))
}

/// `H P Hᵀ + R`, symmetrized.
pub fn innovation_covariance(
    cov: &Matrix3<f64>,
    h: &Matrix2x3<f64>,
    r: &Matrix2<f64>,
) -> Matrix2<f64> {
    symmetrize2(&(h * cov * h.transpose() + r))
}

/// Kalman update with an already computed residual and innovation covariance.
pub fn update(
    state: &GaussianState,
    residual: &Vector2<f64>,
    s: &Matrix2<f64>,
    h: &Matrix2x3<f64>,
) -> Result<GaussianState> {
    let s_inv = invert_innovation(s)?;
    let gain = state.cov * h.transpose() * s_inv;
    let mean = state.mean + gain * residual;
    let cov = (Matrix3::identity() - gain * h) * state.cov;
    Ok(GaussianState::new(mean, cov))
}

/// Predicted measurement of one landmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementPrediction {
    pub zhat: Vector2<f64>,
    pub s: Matrix2<f64>,
    pub h: Matrix2x3<f64>,
}

/// Filter configuration: vehicle model, sensor model and gate threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ekf {
    pub vehicle: VehicleModel,
    pub sensor: RangeBearing,
    pub gate: f64,
}

impl Ekf {
    pub fn new(vehicle: VehicleModel) -> Self {
        Self {
            vehicle,
            sensor: RangeBearing::default(),
            gate: DEFAULT_GATE,
        }
    }

    pub fn with_gate(mut self, gate: f64) -> Self {
        self.gate = gate;
        self
    }

    /// Time update with control `u`, control noise covariance `q` and step `dt`.
    pub fn predict(
        &self,
        state: &GaussianState,
        u: &ControlInput,
        q: &Matrix2<f64>,
        dt: f64,
    ) -> GaussianState {
        let pose = state.pose();
        let next = self.vehicle.step(&pose, u, dt, (0.0, 0.0));
        let f = self.vehicle.jacobian_state(&pose, u, dt);
        let g = self.vehicle.jacobian_control(&pose, u, dt);
        GaussianState::new(
            next.to_vector(),
            propagate_covariance(&state.cov, &f, &g, q),
        )
    }

    pub fn predict_measurement(
        &self,
        state: &GaussianState,
        lm: &Landmark,
        r: &Matrix2<f64>,
    ) -> Result<MeasurementPrediction> {
        let pose = state.pose();
        let zhat = self.sensor.predict(&pose, lm)?;
        let h = self.sensor.jacobian(&pose, lm)?;
        let s = innovation_covariance(&state.cov, &h, r);
        Ok(MeasurementPrediction { zhat, s, h })
    }

    /// One full localization cycle: predict, then for each measurement in
    /// arrival order predict it, gate it and, if accepted, update.
    ///
    /// Every measurement yields an [`InnovationRecord`], including the ones
    /// rejected by the gate.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &self,
        state: &GaussianState,
        u: &ControlInput,
        measurements: &[Measurement],
        cov: &CovPair,
        map: &Map,
        dt: f64,
        timestep: u64,
    ) -> Result<(GaussianState, Vec<InnovationRecord>)> {
        let mut est = self.predict(state, u, &cov.q_matrix(), dt);
        let r = cov.r_matrix();
        let mut records = Vec::with_capacity(measurements.len());
        for z in measurements {
            let lm = map
                .get(z.landmark_id)
                .ok_or(Error::UnknownLandmark(z.landmark_id))?;
            let pred = self.predict_measurement(&est, lm, &r)?;
            let residual = innovation(z, &pred.zhat);
            let accepted = gate(&residual, &pred.s, self.gate)?;
            if accepted {
                est = update(&est, &residual, &pred.s, &pred.h)?;
            }
            records.push(InnovationRecord {
                residual,
                s: pred.s,
                jacobian: pred.h,
                landmark_id: z.landmark_id,
                timestep,
                accepted,
            });
        }
        Ok((est, records))
    }
}
