//! Innovation-based covariance matching.
//!
//! The sample covariance of the most recent residuals is compared with the
//! filter's theoretical innovation covariance. Their difference, the degree
//! of mismatch (DOM), and its change between adaptation steps feed small
//! fuzzy networks that rewrite R additively and Q multiplicatively.
//!
//! The networks work on dimensionless signals: each channel's mismatch is
//! divided by the mean of the theoretical and sample variances of that
//! channel, so the same membership grid `{-2, -1, 0, 1, 2}` covers every
//! channel regardless of units. R-net outputs are fractions of the current
//! R entry; the Q-net output is the multiplicative factor itself.

use alloc::collections::VecDeque;

use nalgebra::{Matrix2, Matrix3x2, Vector2};

use crate::anfis::{AnfisNet, ForwardTrace, PARAMS, SINGLETONS};
use crate::ekf::{CovPair, InnovationRecord};
use crate::{Error, Result};

/// Moving window of the last `capacity` residuals together with the
/// innovation covariance each one was produced under.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualWindow {
    capacity: usize,
    entries: VecDeque<(Vector2<f64>, Matrix2<f64>)>,
}

impl ResidualWindow {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity < 2 {
            return Err(Error::InvalidArgument(
                "residual window needs at least two entries",
            ));
        }
        Ok(Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn push(&mut self, residual: Vector2<f64>, s: Matrix2<f64>) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((residual, s));
    }

    fn check_full(&self) -> Result<()> {
        if self.is_full() {
            Ok(())
        } else {
            Err(Error::WindowWarmUp {
                have: self.entries.len(),
                need: self.capacity,
            })
        }
    }

    /// Sample innovation covariance `(1/N) Σ r rᵀ`.
    pub fn actual_cov(&self) -> Result<Matrix2<f64>> {
        self.check_full()?;
        let sum = self
            .entries
            .iter()
            .fold(Matrix2::zeros(), |acc, (r, _)| acc + r * r.transpose());
        Ok(sum / self.capacity as f64)
    }

    /// Mean theoretical innovation covariance over the same entries.
    pub fn mean_theoretical_cov(&self) -> Result<Matrix2<f64>> {
        self.check_full()?;
        let sum = self
            .entries
            .iter()
            .fold(Matrix2::zeros(), |acc, (_, s)| acc + s);
        Ok(sum / self.capacity as f64)
    }
}

/// Sample innovation covariance of a full window.
pub fn estimate_actual_cov(window: &ResidualWindow) -> Result<Matrix2<f64>> {
    window.actual_cov()
}

/// Degree of mismatch between theoretical and sample innovation covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomState {
    pub dom: Matrix2<f64>,
    pub dom_prev: Matrix2<f64>,
    pub delta_dom: Matrix2<f64>,
    /// Per-channel normalizer `(S_ii + C_ii) / 2`.
    pub scale: Vector2<f64>,
}

impl DomState {
    /// Dimensionless mismatch of channel `i`, in `[-2, 2]`.
    pub fn normalized(&self, i: usize) -> f64 {
        self.dom[(i, i)] / self.scale[i]
    }

    pub fn normalized_delta(&self, i: usize) -> f64 {
        self.delta_dom[(i, i)] / self.scale[i]
    }
}

/// `dom = S - C`; `delta_dom = dom - prev.dom`, zero on the first evaluation.
pub fn compute_dom(s: &Matrix2<f64>, c_hat: &Matrix2<f64>, prev: Option<&DomState>) -> DomState {
    let dom = s - c_hat;
    let dom_prev = prev.map_or(dom, |p| p.dom);
    let scale = Vector2::new(
        (0.5 * (s[(0, 0)] + c_hat[(0, 0)])).max(f64::MIN_POSITIVE),
        (0.5 * (s[(1, 1)] + c_hat[(1, 1)])).max(f64::MIN_POSITIVE),
    );
    DomState {
        dom,
        dom_prev,
        delta_dom: dom - dom_prev,
        scale,
    }
}

/// Hyperparameters of the adapters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptConfig {
    /// Residual window length N.
    pub window: usize,
    /// Steepest-descent learning rate of every network.
    pub learning_rate: f64,
    /// R-net singleton spacing, as a fraction of the current R entry.
    pub r_step: f64,
    /// Lower bound on the R diagonal.
    pub r_floor: f64,
    /// Ratio between neighbouring Q-net singletons.
    pub q_ratio: f64,
    /// Q-net membership width relative to the center spacing.
    pub q_width: f64,
    /// Q floor and ceiling, as multiples of the initial Q diagonal.
    pub q_floor_factor: f64,
    pub q_ceiling_factor: f64,
    /// Trained parameters to start from instead of the default grids.
    pub r_nets: Option<[[f64; PARAMS]; 2]>,
    pub q_net: Option<[f64; PARAMS]>,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            window: 15,
            learning_rate: crate::anfis::DEFAULT_LEARNING_RATE,
            r_step: 0.05,
            r_floor: 1e-9,
            q_ratio: 1.5,
            q_width: 0.4,
            q_floor_factor: 0.01,
            q_ceiling_factor: 100.0,
            r_nets: None,
            q_net: None,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::InvalidArgument("window must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.learning_rate) {
            return Err(Error::InvalidArgument("learning rate must lie in [0, 1]"));
        }
        if !(self.r_step >= 0.0 && self.r_step.is_finite()) {
            return Err(Error::InvalidArgument(
                "r_step must be finite and non-negative",
            ));
        }
        if !(self.r_floor > 0.0 && self.r_floor.is_finite()) {
            return Err(Error::InvalidArgument("r_floor must be positive"));
        }
        if !(self.q_ratio >= 1.0 && self.q_ratio.is_finite()) {
            return Err(Error::InvalidArgument("q_ratio must be at least 1"));
        }
        if !(self.q_width > 0.0 && self.q_width.is_finite()) {
            return Err(Error::InvalidArgument("q_width must be positive"));
        }
        if !(self.q_floor_factor > 0.0
            && self.q_floor_factor <= 1.0
            && self.q_ceiling_factor >= 1.0)
        {
            return Err(Error::InvalidArgument(
                "need 0 < q_floor_factor <= 1 <= q_ceiling_factor",
            ));
        }
        Ok(())
    }
}

/// Two R-nets, one per diagonal channel (range, bearing).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RAdapter {
    pub nets: [AnfisNet; 2],
    pub r_floor: f64,
}

/// What [`RAdapter::adapt`] did, kept for training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RAdaptation {
    pub traces: [ForwardTrace; 2],
    pub r_before: Vector2<f64>,
    /// Change actually applied after flooring.
    pub delta_r: Vector2<f64>,
}

impl RAdapter {
    /// Inputs are the normalized (DOM, ΔDOM), both on a unit-spaced grid with
    /// unit widths. Singletons are `{-3, ..., 3} * r_step`.
    pub fn new(cfg: &AdaptConfig) -> Result<Self> {
        let singletons: [f64; SINGLETONS] = core::array::from_fn(|l| (l as f64 - 3.0) * cfg.r_step);
        let mut nets = [AnfisNet::grid([1.0, 1.0], 1.0, singletons, cfg.learning_rate); 2];
        if let Some(params) = cfg.r_nets {
            for (n, p) in nets.iter_mut().zip(params.iter()) {
                n.set_params(p)?;
            }
        }
        Ok(Self {
            nets,
            r_floor: cfg.r_floor,
        })
    }

    /// `R'_ii = max(R_ii + ΔR_i, r_floor)` with `ΔR_i = R_ii * net_i(dom, Δdom)`.
    pub fn adapt(&self, dom: &DomState, r: &Vector2<f64>) -> Result<(Vector2<f64>, RAdaptation)> {
        let mut next = *r;
        let mut traces = [None, None];
        for i in 0..2 {
            let (out, trace) = self.nets[i].forward(dom.normalized(i), dom.normalized_delta(i))?;
            next[i] = (r[i] + r[i] * out).max(self.r_floor);
            traces[i] = Some(trace);
        }
        let traces = traces.map(|t| t.expect("both channels evaluated"));
        Ok((
            next,
            RAdaptation {
                traces,
                r_before: *r,
                delta_r: next - r,
            },
        ))
    }

    /// One training step per net. The error is the channel mismatch after the
    /// applied change (S moves one-for-one with R), in normalized units.
    pub fn train(&mut self, dom: &DomState, step: &RAdaptation) {
        for i in 0..2 {
            let e = (dom.dom[(i, i)] + step.delta_r[i]) / dom.scale[i];
            let d_s_d_out = step.r_before[i] / dom.scale[i];
            self.nets[i].train_step(&step.traces[i], e, d_s_d_out);
        }
    }
}

/// R adaptation as a free function.
pub fn adapt_r(
    adapter: &RAdapter,
    dom: &DomState,
    r: &Vector2<f64>,
) -> Result<(Vector2<f64>, RAdaptation)> {
    adapter.adapt(dom, r)
}

/// Single Q-net driven by the range and bearing mismatch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QAdapter {
    pub net: AnfisNet,
    pub q_floor: Vector2<f64>,
    pub q_ceiling: Vector2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QAdaptation {
    pub trace: ForwardTrace,
    pub q_before: Vector2<f64>,
    /// Raw network output, the multiplicative factor.
    pub factor: f64,
}

impl QAdapter {
    /// Singletons are `q_ratio^{-3..=3}`: low/low mismatch (S too small)
    /// selects the largest factor, high/high the smallest, center exactly 1.
    pub fn new(cfg: &AdaptConfig, initial_q: &Vector2<f64>) -> Result<Self> {
        let singletons: [f64; SINGLETONS] =
            core::array::from_fn(|l| libm::pow(cfg.q_ratio, l as f64 - 3.0));
        let mut net = AnfisNet::grid([1.0, 1.0], cfg.q_width, singletons, cfg.learning_rate);
        if let Some(p) = cfg.q_net {
            net.set_params(&p)?;
        }
        Ok(Self {
            net,
            q_floor: initial_q * cfg.q_floor_factor,
            q_ceiling: initial_q * cfg.q_ceiling_factor,
        })
    }

    /// `Q'_ii = clamp(Q_ii * ΔQ, floor_i, ceiling_i)` with `ΔQ = net(dom11, dom22)`.
    pub fn adapt(&self, dom: &DomState, q: &Vector2<f64>) -> Result<(Vector2<f64>, QAdaptation)> {
        let (factor, trace) = self.net.forward(dom.normalized(0), dom.normalized(1))?;
        let next = Vector2::new(
            (q[0] * factor).clamp(self.q_floor[0], self.q_ceiling[0]),
            (q[1] * factor).clamp(self.q_floor[1], self.q_ceiling[1]),
        );
        Ok((
            next,
            QAdaptation {
                trace,
                q_before: *q,
                factor,
            },
        ))
    }

    /// `sensitivity[i]` is `∂S_ii/∂ΔQ` at `ΔQ = 1`, i.e. the diagonal of the
    /// Q contribution to S. The two channel errors are combined into one
    /// gradient step with the sensitivities averaged.
    pub fn train(&mut self, dom: &DomState, step: &QAdaptation, sensitivity: &Vector2<f64>) {
        let mut weighted = 0.0;
        let mut d_sum = 0.0;
        for i in 0..2 {
            let d = sensitivity[i] / dom.scale[i];
            let e = (dom.dom[(i, i)] + sensitivity[i] * (step.factor - 1.0)) / dom.scale[i];
            weighted += e * d;
            d_sum += d;
        }
        if d_sum > 0.0 && d_sum.is_finite() {
            self.net
                .train_step(&step.trace, weighted / d_sum, 0.5 * d_sum);
        }
    }
}

/// Q adaptation as a free function.
pub fn adapt_q(
    adapter: &QAdapter,
    dom: &DomState,
    q: &Vector2<f64>,
) -> Result<(Vector2<f64>, QAdaptation)> {
    adapter.adapt(dom, q)
}

/// Diagonal of `H G Q Gᵀ Hᵀ`: how much S's diagonal grows per unit of the
/// multiplicative Q factor over one prediction step.
pub fn q_sensitivity(
    record: &InnovationRecord,
    control_jacobian: &Matrix3x2<f64>,
    q: &Vector2<f64>,
) -> Vector2<f64> {
    let hg = record.jacobian * control_jacobian;
    (hg * Matrix2::from_diagonal(q) * hg.transpose()).diagonal()
}

/// What happened on one adaptation step, for the run log.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdaptationTrace {
    pub dom: [f64; 2],
    pub delta_dom: [f64; 2],
    pub delta_r: [f64; 2],
    pub delta_q: f64,
}

/// Per-filter adaptation context: residual window, last DOM and the enabled
/// adapters.
#[derive(Debug, Clone, PartialEq)]
pub struct Adaptation {
    window: ResidualWindow,
    dom: Option<DomState>,
    pub r: Option<RAdapter>,
    pub q: Option<QAdapter>,
}

impl Adaptation {
    pub fn new(
        cfg: &AdaptConfig,
        adapt_r: bool,
        adapt_q: bool,
        initial_q: &Vector2<f64>,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            window: ResidualWindow::new(cfg.window)?,
            dom: None,
            r: if adapt_r {
                Some(RAdapter::new(cfg)?)
            } else {
                None
            },
            q: if adapt_q {
                Some(QAdapter::new(cfg, initial_q)?)
            } else {
                None
            },
        })
    }

    pub fn window(&self) -> &ResidualWindow {
        &self.window
    }

    pub fn dom(&self) -> Option<&DomState> {
        self.dom.as_ref()
    }

    /// Feeds one scan's innovation records, then (once the window is full)
    /// recomputes DOM and lets the adapters rewrite `cov` and learn.
    ///
    /// `control_jacobian` and `prediction_steps` describe the prediction
    /// since the previous scan; they scale the Q-net's training signal.
    pub fn process(
        &mut self,
        records: &[InnovationRecord],
        cov: &mut CovPair,
        control_jacobian: &Matrix3x2<f64>,
        prediction_steps: usize,
    ) -> Result<Option<AdaptationTrace>> {
        if records.is_empty() {
            return Ok(None);
        }
        for rec in records {
            self.window.push(rec.residual, rec.s);
        }
        if !self.window.is_full() {
            return Ok(None);
        }
        let c_hat = self.window.actual_cov()?;
        let s_bar = self.window.mean_theoretical_cov()?;
        let dom = compute_dom(&s_bar, &c_hat, self.dom.as_ref());
        self.dom = Some(dom);

        let mut trace = AdaptationTrace {
            dom: [dom.dom[(0, 0)], dom.dom[(1, 1)]],
            delta_dom: [dom.delta_dom[(0, 0)], dom.delta_dom[(1, 1)]],
            delta_r: [0.0; 2],
            delta_q: 1.0,
        };

        if let Some(adapter) = self.r.as_mut() {
            let (r_next, step) = adapter.adapt(&dom, &cov.r)?;
            adapter.train(&dom, &step);
            trace.delta_r = [step.delta_r[0], step.delta_r[1]];
            cov.r = r_next;
        }
        if let Some(adapter) = self.q.as_mut() {
            let (q_next, step) = adapter.adapt(&dom, &cov.q)?;
            let per_step = records.iter().fold(Vector2::zeros(), |acc, rec| {
                acc + q_sensitivity(rec, control_jacobian, &cov.q)
            }) / records.len() as f64;
            adapter.train(&dom, &step, &(per_step * prediction_steps as f64));
            trace.delta_q = step.factor;
            cov.q = q_next;
        }
        Ok(Some(trace))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn full_window(res: &[(f64, f64)]) -> ResidualWindow {
        let mut w = ResidualWindow::new(res.len()).unwrap();
        for (a, b) in res {
            w.push(Vector2::new(*a, *b), Matrix2::identity());
        }
        w
    }

    #[test]
    fn constant_residuals() {
        let w = full_window(&[(0.3, -2.0); 5]);
        let c = estimate_actual_cov(&w).unwrap();
        assert_abs_diff_eq!(c, Matrix2::new(0.09, -0.6, -0.6, 4.0), epsilon = 1e-14);
    }

    #[test]
    fn alternating_residuals() {
        let w = full_window(&[(1.0, 0.0), (-1.0, 0.0), (1.0, 0.0), (-1.0, 0.0)]);
        assert_eq!(
            estimate_actual_cov(&w).unwrap(),
            Matrix2::new(1.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn warm_up_is_an_error() {
        let mut w = ResidualWindow::new(3).unwrap();
        w.push(Vector2::new(1.0, 1.0), Matrix2::identity());
        assert_eq!(
            estimate_actual_cov(&w),
            Err(Error::WindowWarmUp { have: 1, need: 3 })
        );
        assert!(ResidualWindow::new(1).is_err());
    }

    #[test]
    fn dom_definitions() {
        let s = Matrix2::new(2.0, 0.1, 0.1, 1.0);
        let first = compute_dom(&s, &s, None);
        assert_eq!(first.dom, Matrix2::zeros());
        assert_eq!(first.delta_dom, Matrix2::zeros());

        let a = compute_dom(&s, &Matrix2::new(1.0, 0.0, 0.0, 1.5), None);
        let b = compute_dom(&s, &Matrix2::new(0.5, 0.0, 0.0, 0.2), Some(&a));
        assert_eq!(b.delta_dom, b.dom - a.dom);
        assert_eq!(b.dom_prev, a.dom);
    }

    #[test]
    fn centered_r_net_leaves_r() {
        let adapter = RAdapter::new(&AdaptConfig::default()).unwrap();
        let s = Matrix2::new(0.01, 0.0, 0.0, 3e-4);
        let dom = compute_dom(&s, &s, None);
        let r = Vector2::new(0.01, 3e-4);
        let (next, _) = adapter.adapt(&dom, &r).unwrap();
        assert_abs_diff_eq!(next, r, epsilon = 1e-6);
        assert!((next - r).abs().max() < 1e-15);
    }

    #[test]
    fn large_positive_mismatch_decreases_r() {
        let adapter = RAdapter::new(&AdaptConfig::default()).unwrap();
        // S four times the sample covariance: normalized DOM = 1.2 in both channels,
        // and S ≫ C: normalized DOM near 2.
        for c in [1.0, 0.01] {
            let s = Matrix2::new(4.0, 0.0, 0.0, 4.0e-4);
            let dom = compute_dom(&s, &Matrix2::new(c, 0.0, 0.0, c * 1e-4), None);
            let r = Vector2::new(3.9, 3.9e-4);
            let (next, step) = adapter.adapt(&dom, &r).unwrap();
            assert!(step.delta_r[0] < 0.0 && step.delta_r[1] < 0.0);
            assert!(next[0] < r[0] && next[1] < r[1]);
        }
    }

    #[test]
    fn r_floor_clamps_exactly() {
        let cfg = AdaptConfig {
            r_floor: 0.5,
            ..AdaptConfig::default()
        };
        let adapter = RAdapter::new(&cfg).unwrap();
        let dom = compute_dom(
            &Matrix2::new(10.0, 0.0, 0.0, 10.0),
            &Matrix2::new(0.1, 0.0, 0.0, 0.1),
            None,
        );
        let (next, _) = adapter.adapt(&dom, &Vector2::new(0.5, 0.5)).unwrap();
        assert_eq!(next, Vector2::new(0.5, 0.5));
    }

    #[test]
    fn q_factor_directions() {
        let q0 = Vector2::new(0.09, 0.0027);
        let adapter = QAdapter::new(&AdaptConfig::default(), &q0).unwrap();
        let s = Matrix2::new(0.01, 0.0, 0.0, 3e-4);

        let centered = compute_dom(&s, &s, None);
        let (_, step) = adapter.adapt(&centered, &q0).unwrap();
        assert!((step.factor - 1.0).abs() < 1e-3, "factor {}", step.factor);

        let low = compute_dom(&s, &(s * 50.0), None);
        let (next, step) = adapter.adapt(&low, &q0).unwrap();
        assert!(step.factor > 1.0);
        assert!(next[0] > q0[0]);

        let high = compute_dom(&(s * 50.0), &s, None);
        let (_, step) = adapter.adapt(&high, &q0).unwrap();
        assert!(step.factor < 1.0);
    }

    #[test]
    fn unit_q_factor_keeps_q() {
        let q0 = Vector2::new(0.09, 0.0027);
        let mut cfg = AdaptConfig::default();
        let mut net = QAdapter::new(&cfg, &q0).unwrap().net;
        net.singletons = [1.0; SINGLETONS];
        cfg.q_net = Some(net.params());
        let adapter = QAdapter::new(&cfg, &q0).unwrap();
        let dom = compute_dom(
            &Matrix2::new(3.0, 0.0, 0.0, 2.0),
            &Matrix2::identity(),
            None,
        );
        let (next, _) = adapter.adapt(&dom, &q0).unwrap();
        assert_eq!(next, q0);
    }

    #[test]
    fn q_clamped_to_floor_and_ceiling() {
        let q0 = Vector2::new(0.09, 0.0027);
        let adapter = QAdapter::new(&AdaptConfig::default(), &q0).unwrap();
        let s = Matrix2::new(0.01, 0.0, 0.0, 3e-4);
        let low = compute_dom(&s, &(s * 50.0), None);
        let (next, _) = adapter.adapt(&low, &(q0 * 99.0)).unwrap();
        assert_eq!(next, q0 * 100.0);
        let high = compute_dom(&(s * 50.0), &s, None);
        let (next, _) = adapter.adapt(&high, &(q0 * 0.0101)).unwrap();
        assert_eq!(next, q0 * 0.01);
    }

    #[test]
    fn zero_error_training_is_a_no_op() {
        let cfg = AdaptConfig::default();
        let mut adapter = RAdapter::new(&cfg).unwrap();
        let s = Matrix2::new(0.5, 0.0, 0.0, 0.2);
        let dom = compute_dom(&s, &s, None);
        let r = Vector2::new(0.4, 0.1);
        let (_, step) = adapter.adapt(&dom, &r).unwrap();
        let before = adapter;
        adapter.train(&dom, &step);
        assert_eq!(adapter, before);
    }
}
