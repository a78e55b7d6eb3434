//! Seeded ground-truth world and the single-run driver.
//!
//! The truth vehicle follows a loop of waypoints with noisy speed and steer
//! commands; the filter only sees the clean commands. Range-bearing scans
//! arrive every `control_rate / observe_rate` control ticks. Each run owns one
//! ChaCha stream per noise source, derived from the run seed, so truth never
//! depends on which filter variant is running.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use libm::{atan2, round};
use nalgebra::{Matrix3, Vector2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::adaptation::{AdaptConfig, Adaptation, AdaptationTrace};
use crate::ekf::{CovPair, Ekf, GaussianState, Map, DEFAULT_GATE};
use crate::metrics;
use crate::models::{
    wrap_angle, ControlInput, Landmark, Measurement, NoiseSpec, Pose, RangeBearing, VehicleModel,
};
use crate::{Error, Result};

const CONTROL_STREAM: u64 = 1;
const SENSOR_STREAM: u64 = 2;

/// Everything needed to simulate one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub landmarks: Vec<Landmark>,
    pub waypoints: Vec<(f64, f64)>,
    pub initial_pose: Pose,
    /// m
    pub wheelbase: f64,
    /// m/s
    pub speed: f64,
    /// rad
    pub gamma_max: f64,
    /// m
    pub sensor_range: f64,
    /// Full field of view, rad, centered on the heading.
    pub sensor_fov: f64,
    /// Hz
    pub control_rate: f64,
    /// Hz
    pub observe_rate: f64,
    /// Distance at which the active waypoint counts as reached, m.
    pub waypoint_radius: f64,
    pub true_noise: NoiseSpec,
    pub assumed_noise: NoiseSpec,
    /// s
    pub duration: f64,
    pub seed: u64,
    /// Validation gate threshold on `rᵀ S⁻¹ r`.
    pub gate: f64,
    /// Diagonal of the initial state covariance.
    pub initial_variance: f64,
}

impl Scenario {
    /// Built-in experiment: 3 m/s, 30° steer limit, 4 m wheelbase, 20 m /
    /// 180° sensor, 40 Hz control, 5 Hz scans, control noise (0.3 m/s, 3°),
    /// sensor noise (0.1 m, 1°). The filter starts with the true statistics.
    pub fn builtin() -> Self {
        let deg = PI / 180.0;
        let noise = NoiseSpec {
            sigma_v: 0.3,
            sigma_gamma: 3.0 * deg,
            sigma_r: 0.1,
            sigma_theta: 1.0 * deg,
        };
        let landmarks = [
            (48.0, 35.0),
            (71.0, 28.0),
            (86.0, 48.0),
            (105.0, 35.0),
            (129.0, 38.0),
            (141.0, 17.0),
            (156.0, 5.0),
            (140.0, -14.0),
            (146.0, -42.0),
            (123.0, -33.0),
            (106.0, -51.0),
            (83.0, -42.0),
            (63.0, -52.0),
            (48.0, -33.0),
            (24.0, -40.0),
            (25.0, -25.0),
            (21.0, 0.0),
            (42.0, 13.0),
        ]
        .iter()
        .enumerate()
        .map(|(i, (x, y))| Landmark::new(i as u32 + 1, *x, *y))
        .collect();
        Self {
            landmarks,
            waypoints: alloc::vec![
                (40.0, 25.0),
                (100.0, 45.0),
                (150.0, 20.0),
                (145.0, -35.0),
                (80.0, -50.0),
                (15.0, -30.0),
            ],
            initial_pose: Pose::new(0.0, 0.0, 0.0),
            wheelbase: 4.0,
            speed: 3.0,
            gamma_max: 30.0 * deg,
            sensor_range: 20.0,
            sensor_fov: 180.0 * deg,
            control_rate: 40.0,
            observe_rate: 5.0,
            waypoint_radius: 1.0,
            true_noise: noise,
            assumed_noise: noise,
            duration: 150.0,
            seed: 0,
            gate: DEFAULT_GATE,
            initial_variance: 1e-6,
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate
    }

    /// Control ticks between two scans.
    pub fn ticks_per_scan(&self) -> usize {
        round(self.control_rate / self.observe_rate) as usize
    }

    pub fn steps(&self) -> usize {
        round(self.duration * self.control_rate) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.landmarks.is_empty() {
            return Err(Error::InvalidScenario("landmark map is empty"));
        }
        Map::new(self.landmarks.iter().copied())?;
        if self.waypoints.is_empty() {
            return Err(Error::InvalidScenario("no waypoints"));
        }
        if !(positive(self.control_rate) && positive(self.observe_rate)) {
            return Err(Error::InvalidScenario("rates must be positive"));
        }
        let ratio = self.control_rate / self.observe_rate;
        if ratio < 1.0 - 1e-9 || (ratio - round(ratio)).abs() > 1e-9 {
            return Err(Error::InvalidScenario(
                "observe_rate must divide control_rate",
            ));
        }
        if !(positive(self.wheelbase) && positive(self.duration) && positive(self.sensor_range)) {
            return Err(Error::InvalidScenario(
                "wheelbase, duration and sensor range must be positive",
            ));
        }
        if !(self.speed.is_finite() && self.speed >= 0.0) {
            return Err(Error::InvalidScenario(
                "speed must be finite and non-negative",
            ));
        }
        if !(positive(self.gamma_max) && self.gamma_max < 0.5 * PI) {
            return Err(Error::InvalidScenario("gamma_max must lie in (0, 90°)"));
        }
        if !(positive(self.sensor_fov) && self.sensor_fov <= 2.0 * PI) {
            return Err(Error::InvalidScenario("sensor_fov must lie in (0, 360°]"));
        }
        if !positive(self.waypoint_radius) {
            return Err(Error::InvalidScenario("waypoint radius must be positive"));
        }
        NoiseSpec::new(
            self.true_noise.sigma_v,
            self.true_noise.sigma_gamma,
            self.true_noise.sigma_r,
            self.true_noise.sigma_theta,
        )
        .map_err(|_| Error::InvalidScenario("true noise must be finite and non-negative"))?;
        if !self.assumed_noise.is_strictly_positive()
            || self.assumed_noise.as_array().iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidScenario(
                "assumed noise must be strictly positive",
            ));
        }
        if !(self.gate >= 0.0) {
            return Err(Error::InvalidScenario(
                "gate threshold must be non-negative",
            ));
        }
        if !positive(self.initial_variance) {
            return Err(Error::InvalidScenario("initial variance must be positive"));
        }
        Ok(())
    }
}

/// Which noise statistics the filter adapts online.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Plain EKF with fixed Q and R.
    Ekf,
    /// R adapted, Q fixed.
    AnfekfR,
    /// Q adapted, R fixed.
    AnfekfQ,
    /// Both adapted.
    AnfekfRq,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Ekf,
        Variant::AnfekfR,
        Variant::AnfekfQ,
        Variant::AnfekfRq,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Ekf => "ekf",
            Variant::AnfekfR => "anfekf-r",
            Variant::AnfekfQ => "anfekf-q",
            Variant::AnfekfRq => "anfekf-rq",
        }
    }

    pub fn adapts_r(&self) -> bool {
        matches!(self, Variant::AnfekfR | Variant::AnfekfRq)
    }

    pub fn adapts_q(&self) -> bool {
        matches!(self, Variant::AnfekfQ | Variant::AnfekfRq)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or(Error::InvalidArgument(
                "variant must be one of ekf, anfekf-r, anfekf-q, anfekf-rq",
            ))
    }
}

/// Active waypoint and how many have been reached so far.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WaypointTracker {
    pub active: usize,
    pub reached: usize,
}

/// Waypoint pursuit. Returns the clean command (what the filter is told)
/// and the noisy command (what the vehicle actually executes).
pub fn drive<R: rand::Rng + ?Sized>(
    truth: &Pose,
    scenario: &Scenario,
    tracker: &mut WaypointTracker,
    rng: &mut R,
) -> (ControlInput, ControlInput) {
    let n = scenario.waypoints.len();
    let mut target = scenario.waypoints[tracker.active];
    // at most one advance per tick
    let dist = libm::hypot(target.0 - truth.x(), target.1 - truth.y());
    if dist < scenario.waypoint_radius {
        tracker.active = (tracker.active + 1) % n;
        tracker.reached += 1;
        target = scenario.waypoints[tracker.active];
    }
    let bearing = wrap_angle(atan2(target.1 - truth.y(), target.0 - truth.x()) - truth.phi());
    let clean = ControlInput::new(
        scenario.speed,
        bearing.clamp(-scenario.gamma_max, scenario.gamma_max),
    );
    let dv = gaussian(rng, scenario.true_noise.sigma_v);
    let dg = gaussian(rng, scenario.true_noise.sigma_gamma);
    (clean, ControlInput::new(clean.v + dv, clean.gamma + dg))
}

fn gaussian<R: rand::Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    Normal::new(0.0, sigma).map_or(0.0, |n| n.sample(rng))
}

/// One scan: every landmark within range and field of view, with sensor noise.
pub fn sense<R: rand::Rng + ?Sized>(
    truth: &Pose,
    map: &Map,
    scenario: &Scenario,
    sensor: &RangeBearing,
    rng: &mut R,
) -> Vec<Measurement> {
    let half_fov = 0.5 * scenario.sensor_fov;
    let mut out = Vec::new();
    for lm in map.iter() {
        let Ok(z) = sensor.predict(truth, lm) else {
            continue;
        };
        if z[0] > scenario.sensor_range || z[1].abs() > half_fov {
            continue;
        }
        let dr = gaussian(rng, scenario.true_noise.sigma_r);
        let dtheta = gaussian(rng, scenario.true_noise.sigma_theta);
        if let Ok(m) = sensor.observe(truth, lm, (dr, dtheta)) {
            out.push(m);
        }
    }
    out
}

/// One control tick of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub t: f64,
    pub truth: Pose,
    pub estimate: GaussianState,
    pub nees: f64,
    /// Measurements in this tick's scan (0 on ticks without a scan).
    pub n_meas: u32,
    /// Of those, rejected by the gate.
    pub n_gated: u32,
    /// R and Q diagonals after any adaptation in this tick.
    pub r: Vector2<f64>,
    pub q: Vector2<f64>,
    /// Latest adaptation step (zeros until the window first fills).
    pub adaptation: AdaptationTrace,
}

impl StepRecord {
    pub fn position_error_sq(&self) -> f64 {
        let m = self.estimate.mean();
        let (ex, ey) = (self.truth.x() - m[0], self.truth.y() - m[1]);
        ex * ex + ey * ey
    }

    pub fn heading_error(&self) -> f64 {
        wrap_angle(self.truth.phi() - self.estimate.mean()[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunSummary {
    pub waypoints_reached: usize,
    /// Set when the vehicle did not reach every waypoint at least once.
    pub timed_out: bool,
    pub accepted: u64,
    pub gated: u64,
    pub adaptation_steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub variant: Variant,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub summary: RunSummary,
}

/// Simulates one run of `variant` with its own random streams from `seed`.
pub fn run_once(
    scenario: &Scenario,
    variant: Variant,
    cfg: &AdaptConfig,
    seed: u64,
) -> Result<RunLog> {
    scenario.validate()?;
    let map = Map::new(scenario.landmarks.iter().copied())?;
    let vehicle = VehicleModel::new(scenario.wheelbase)?;
    let ekf = Ekf::new(vehicle).with_gate(scenario.gate);
    let dt = scenario.dt();
    let ticks = scenario.ticks_per_scan();
    let n_steps = scenario.steps();

    let mut control_rng = ChaCha8Rng::seed_from_u64(seed);
    control_rng.set_stream(CONTROL_STREAM);
    let mut sensor_rng = ChaCha8Rng::seed_from_u64(seed);
    sensor_rng.set_stream(SENSOR_STREAM);

    let mut truth = scenario.initial_pose;
    let mut est = GaussianState::from_pose(&truth, Matrix3::identity() * scenario.initial_variance);
    let mut cov = CovPair::new(
        scenario.assumed_noise.control_variances(),
        scenario.assumed_noise.sensor_variances(),
    );
    let mut adaptation = if variant == Variant::Ekf {
        None
    } else {
        Some(Adaptation::new(
            cfg,
            variant.adapts_r(),
            variant.adapts_q(),
            &cov.q,
        )?)
    };

    let mut tracker = WaypointTracker::default();
    let mut summary = RunSummary::default();
    let mut last_trace = AdaptationTrace {
        delta_q: 1.0,
        ..AdaptationTrace::default()
    };
    let mut steps = Vec::with_capacity(n_steps);

    for k in 1..=n_steps as u64 {
        let (clean, noisy) = drive(&truth, scenario, &mut tracker, &mut control_rng);
        let control_jacobian = vehicle.jacobian_control(&est.pose(), &clean, dt);
        truth = vehicle.step(&truth, &noisy, dt, (0.0, 0.0));

        let scan = if k % ticks as u64 == 0 {
            sense(&truth, &map, scenario, &ekf.sensor, &mut sensor_rng)
        } else {
            Vec::new()
        };
        let (next, records) = ekf.step(&est, &clean, &scan, &cov, &map, dt, k)?;
        est = next;

        let n_gated = records.iter().filter(|r| !r.accepted).count() as u32;
        summary.accepted += (records.len() as u32 - n_gated) as u64;
        summary.gated += n_gated as u64;

        if let Some(ad) = adaptation.as_mut() {
            if let Some(trace) = ad.process(&records, &mut cov, &control_jacobian, ticks)? {
                last_trace = trace;
                summary.adaptation_steps += 1;
            }
        }

        steps.push(StepRecord {
            step: k,
            t: k as f64 * dt,
            truth,
            estimate: est,
            nees: metrics::nees(&truth, &est).unwrap_or(f64::NAN),
            n_meas: records.len() as u32,
            n_gated,
            r: cov.r,
            q: cov.q,
            adaptation: last_trace,
        });
    }

    summary.waypoints_reached = tracker.reached;
    summary.timed_out = tracker.reached < scenario.waypoints.len();
    Ok(RunLog {
        variant,
        seed,
        steps,
        summary,
    })
}
