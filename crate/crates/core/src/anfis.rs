//! Two-input, one-output adaptive neuro-fuzzy network.
//!
//! Layers:
//! 1. pass-through of the two inputs,
//! 2. five Gaussian memberships per input, `exp(-(u - m)^2 / delta^2)`,
//! 3. product firing strength for each of the 25 input-term pairs,
//! 4. normalization of the 25 firing strengths,
//! 5. weighted sum of the normalized strengths with the singleton selected
//!    by the rule base.
//!
//! All centers, widths and singletons are trained by steepest descent.

use libm::exp;

use crate::{Error, Result};

/// Membership terms per input.
pub const TERMS: usize = 5;
/// Rules in the full grid.
pub const RULES: usize = TERMS * TERMS;
/// Output singletons.
pub const SINGLETONS: usize = 7;
/// Length of the flat parameter vector: centers, widths, singletons.
pub const PARAMS: usize = 2 * TERMS + 2 * TERMS + SINGLETONS;

pub const DEFAULT_DELTA_FLOOR: f64 = 1e-4;
pub const DEFAULT_LEARNING_RATE: f64 = 0.01;

/// Gaussian membership function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MembershipFn {
    pub center: f64,
    pub width: f64,
}

impl MembershipFn {
    pub fn new(center: f64, width: f64) -> Self {
        Self { center, width }
    }
}

/// Membership grade `exp(-(u - m)^2 / delta^2)`.
pub fn mf_eval(u: f64, mf: &MembershipFn) -> f64 {
    let d = (u - mf.center) / mf.width;
    exp(-d * d)
}

/// Maps each (input-1 term, input-2 term) pair to a singleton index.
///
/// Indices are zero-based here: singleton 0 is the smallest output, 6 the
/// largest; term 0 is "low", term 4 is "high".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RuleBase {
    consequent: [[u8; TERMS]; TERMS],
}

impl RuleBase {
    /// Consequent singleton (zero-based) of rule `(i, j)`.
    pub fn consequent(&self, i: usize, j: usize) -> usize {
        self.consequent[i][j] as usize
    }

    /// Builds a rule base from one-based labels `1..=7`.
    pub fn from_labels(labels: [[u8; TERMS]; TERMS]) -> Result<Self> {
        let mut consequent = [[0u8; TERMS]; TERMS];
        for (row, out) in labels.iter().zip(consequent.iter_mut()) {
            for (l, c) in row.iter().zip(out.iter_mut()) {
                if !(1..=SINGLETONS as u8).contains(l) {
                    return Err(Error::InvalidArgument("rule label outside 1..=7"));
                }
                *c = l - 1;
            }
        }
        Ok(Self { consequent })
    }

    /// One-based label of rule `(i, j)` with one-based term indices.
    pub fn label(&self, i: usize, j: usize) -> u8 {
        self.consequent[i - 1][j - 1] + 1
    }
}

/// Rule table: label `clamp(10 - (i + j), 1, 7)` for one-based term indices,
/// so low/low selects the largest singleton, high/high the smallest and the
/// center rule the middle one.
pub fn build_rule_base() -> RuleBase {
    let mut labels = [[0u8; TERMS]; TERMS];
    for (i, row) in labels.iter_mut().enumerate() {
        for (j, l) in row.iter_mut().enumerate() {
            let s = (i + 1 + j + 1) as i32;
            *l = (10 - s).clamp(1, SINGLETONS as i32) as u8;
        }
    }
    RuleBase::from_labels(labels).expect("labels are clamped into range")
}

/// Intermediate values of one forward pass, kept for training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardTrace {
    pub inputs: [f64; 2],
    /// Layer 2: membership grades per input and term.
    pub grades: [[f64; TERMS]; 2],
    /// Layer 3: firing strength of rule `(i, j)` at index `i * TERMS + j`.
    pub firing: [f64; RULES],
    pub firing_sum: f64,
    /// Layer 4.
    pub normalized: [f64; RULES],
    /// Layer 5.
    pub output: f64,
}

/// Gradient of the network output with respect to every free parameter.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OutputGradient {
    pub centers: [[f64; TERMS]; 2],
    pub widths: [[f64; TERMS]; 2],
    pub singletons: [f64; SINGLETONS],
}

impl OutputGradient {
    pub fn to_flat(&self) -> [f64; PARAMS] {
        flatten(&self.centers, &self.widths, &self.singletons)
    }
}

fn flatten(
    centers: &[[f64; TERMS]; 2],
    widths: &[[f64; TERMS]; 2],
    singletons: &[f64; SINGLETONS],
) -> [f64; PARAMS] {
    let mut out = [0.0; PARAMS];
    let (c, rest) = out.split_at_mut(2 * TERMS);
    let (w, s) = rest.split_at_mut(2 * TERMS);
    for k in 0..2 {
        c[k * TERMS..(k + 1) * TERMS].copy_from_slice(&centers[k]);
        w[k * TERMS..(k + 1) * TERMS].copy_from_slice(&widths[k]);
    }
    s.copy_from_slice(singletons);
    out
}

/// The network: memberships for both inputs, the rule base, the output
/// singletons and the learning rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnfisNet {
    pub memberships: [[MembershipFn; TERMS]; 2],
    pub rules: RuleBase,
    pub singletons: [f64; SINGLETONS],
    pub learning_rate: f64,
    pub delta_floor: f64,
}

impl AnfisNet {
    /// Evenly spaced memberships: input `k` gets centers
    /// `{-2, -1, 0, 1, 2} * spacing[k]` with width `width_factor * spacing[k]`.
    pub fn grid(
        spacing: [f64; 2],
        width_factor: f64,
        singletons: [f64; SINGLETONS],
        learning_rate: f64,
    ) -> Self {
        let mut memberships = [[MembershipFn::new(0.0, 1.0); TERMS]; 2];
        for (k, mfs) in memberships.iter_mut().enumerate() {
            for (t, mf) in mfs.iter_mut().enumerate() {
                *mf = MembershipFn::new((t as f64 - 2.0) * spacing[k], width_factor * spacing[k]);
            }
        }
        Self {
            memberships,
            rules: build_rule_base(),
            singletons,
            learning_rate,
            delta_floor: DEFAULT_DELTA_FLOOR,
        }
    }

    /// Flat parameter vector: 10 centers (input 1 then input 2), 10 widths,
    /// 7 singletons.
    pub fn params(&self) -> [f64; PARAMS] {
        let centers = self.memberships.map(|mfs| mfs.map(|m| m.center));
        let widths = self.memberships.map(|mfs| mfs.map(|m| m.width));
        flatten(&centers, &widths, &self.singletons)
    }

    pub fn set_params(&mut self, p: &[f64; PARAMS]) -> Result<()> {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("network parameters must be finite"));
        }
        if p[2 * TERMS..4 * TERMS].iter().any(|w| *w <= 0.0) {
            return Err(Error::InvalidArgument("membership widths must be positive"));
        }
        for k in 0..2 {
            for t in 0..TERMS {
                self.memberships[k][t] =
                    MembershipFn::new(p[k * TERMS + t], p[2 * TERMS + k * TERMS + t]);
            }
        }
        self.singletons.copy_from_slice(&p[4 * TERMS..]);
        Ok(())
    }

    pub fn forward(&self, in1: f64, in2: f64) -> Result<(f64, ForwardTrace)> {
        let inputs = [in1, in2];
        let grades: [[f64; TERMS]; 2] =
            core::array::from_fn(|k| self.memberships[k].map(|mf| mf_eval(inputs[k], &mf)));
        let mut firing = [0.0; RULES];
        for i in 0..TERMS {
            for j in 0..TERMS {
                firing[i * TERMS + j] = grades[0][i] * grades[1][j];
            }
        }
        let firing_sum: f64 = firing.iter().sum();
        if !(firing_sum >= 1e-300) {
            return Err(Error::VanishingFiring(firing_sum));
        }
        let normalized = firing.map(|f| f / firing_sum);
        let mut output = 0.0;
        for i in 0..TERMS {
            for j in 0..TERMS {
                output += normalized[i * TERMS + j] * self.singletons[self.rules.consequent(i, j)];
            }
        }
        Ok((
            output,
            ForwardTrace {
                inputs,
                grades,
                firing,
                firing_sum,
                normalized,
                output,
            },
        ))
    }

    /// Analytic derivative of the output with respect to every parameter,
    /// evaluated at the point recorded in `trace`.
    pub fn output_gradient(&self, trace: &ForwardTrace) -> OutputGradient {
        let mut g = OutputGradient::default();
        // d out / d firing(i, j) = (w_c(i,j) - out) / sum
        let mut d_firing = [0.0; RULES];
        for i in 0..TERMS {
            for j in 0..TERMS {
                let l = i * TERMS + j;
                let c = self.rules.consequent(i, j);
                g.singletons[c] += trace.normalized[l];
                d_firing[l] = (self.singletons[c] - trace.output) / trace.firing_sum;
            }
        }
        for k in 0..2 {
            for t in 0..TERMS {
                let d_grade: f64 = (0..TERMS)
                    .map(|o| {
                        let (l, other) = if k == 0 {
                            (t * TERMS + o, trace.grades[1][o])
                        } else {
                            (o * TERMS + t, trace.grades[0][o])
                        };
                        d_firing[l] * other
                    })
                    .sum();
                let mf = &self.memberships[k][t];
                let mu = trace.grades[k][t];
                let diff = trace.inputs[k] - mf.center;
                let w2 = mf.width * mf.width;
                g.centers[k][t] = d_grade * mu * 2.0 * diff / w2;
                g.widths[k][t] = d_grade * mu * 2.0 * diff * diff / (w2 * mf.width);
            }
        }
        g
    }

    /// One steepest-descent step on `E = e^2 / 2`, where `e` depends on the
    /// output through `d_s_d_out`: `dE/dθ = e * d_s_d_out * d out/dθ`.
    /// Widths are clamped to `delta_floor`.
    pub fn train_step(&mut self, trace: &ForwardTrace, e: f64, d_s_d_out: f64) {
        let scale = e * d_s_d_out;
        if scale == 0.0 || !scale.is_finite() {
            return;
        }
        let g = self.output_gradient(trace);
        let step = self.learning_rate * scale;
        for k in 0..2 {
            for t in 0..TERMS {
                let mf = &mut self.memberships[k][t];
                mf.center -= step * g.centers[k][t];
                mf.width = (mf.width - step * g.widths[k][t]).max(self.delta_floor);
            }
        }
        for (w, d) in self.singletons.iter_mut().zip(g.singletons.iter()) {
            *w -= step * d;
        }
    }
}
