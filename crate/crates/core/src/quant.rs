//! Quantization procedure: observe parameter ranges to size integer bits,
//! sweep fractional bits, and apply post-training (PTQ) or in-training
//! (ITQ) quantization to the weight and neuron-parameter groups.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::SpikeTrain;
use crate::error::{Error, Result};
use crate::evaluation::Evaluator;
use crate::fixedpoint::{quantize_det, quantize_slice, quantize_value, FixedPointFormat, ParamFormat, RoundingMode};
use crate::learning::LearnConfig;
use crate::metrics::OpCounts;
use crate::network::{FormatTags, NetworkModel};
use crate::training::{train, Rule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Ptq,
    Itq,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Ptq => "ptq",
            Scheme::Itq => "itq",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ptq" => Ok(Scheme::Ptq),
            "itq" => Ok(Scheme::Itq),
            o => Err(Error::InvalidParameter(format!("unknown scheme {o:?}"))),
        }
    }
}

/// Which parameter groups a configuration quantizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Groups {
    /// Weights only.
    #[serde(rename = "qW")]
    QW,
    /// Weights, membrane potential and threshold.
    #[serde(rename = "qWN")]
    QWN,
}

impl fmt::Display for Groups {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Groups::QW => "qW",
            Groups::QWN => "qWN",
        })
    }
}

impl FromStr for Groups {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "qW" | "qw" => Ok(Groups::QW),
            "qWN" | "qwn" => Ok(Groups::QWN),
            o => Err(Error::InvalidParameter(format!("unknown group set {o:?}"))),
        }
    }
}

/// A parameter group that can carry its own format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Weights,
    VMem,
    VThresh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantConfig {
    pub scheme: Scheme,
    pub rounding: RoundingMode,
    pub groups: Groups,
    pub weights: ParamFormat,
    pub v_mem: ParamFormat,
    pub v_thresh: ParamFormat,
}

impl QuantConfig {
    /// Identity configuration: every group stays fp32.
    pub fn fp32(scheme: Scheme) -> Self {
        Self {
            scheme,
            rounding: RoundingMode::Truncate,
            groups: Groups::QW,
            weights: ParamFormat::Fp32,
            v_mem: ParamFormat::Fp32,
            v_thresh: ParamFormat::Fp32,
        }
    }

    pub fn qw(scheme: Scheme, rounding: RoundingMode, weights: FixedPointFormat) -> Self {
        Self {
            weights: ParamFormat::Fixed(weights),
            rounding,
            ..Self::fp32(scheme)
        }
    }

    pub fn qwn(
        scheme: Scheme,
        rounding: RoundingMode,
        weights: FixedPointFormat,
        v_mem: FixedPointFormat,
        v_thresh: FixedPointFormat,
    ) -> Self {
        Self {
            scheme,
            rounding,
            groups: Groups::QWN,
            weights: ParamFormat::Fixed(weights),
            v_mem: ParamFormat::Fixed(v_mem),
            v_thresh: ParamFormat::Fixed(v_thresh),
        }
    }

    /// Formats actually applied: groups outside the enabled set are fp32.
    pub fn tags(&self) -> FormatTags {
        match self.groups {
            Groups::QW => FormatTags {
                weights: self.weights,
                ..FormatTags::default()
            },
            Groups::QWN => FormatTags {
                weights: self.weights,
                v_mem: self.v_mem,
                v_thresh: self.v_thresh,
            },
        }
    }
}

/// Puts model parameters on their grids. Weights use the configured
/// rounding (and own random stream for stochastic rounding); stored
/// constants are rounded to nearest; `v_mem` state is truncated as in the
/// per-step update.
#[derive(Debug, Clone)]
pub struct Requantizer {
    tags: FormatTags,
    rounding: RoundingMode,
    rng: ChaCha8Rng,
}

impl Requantizer {
    pub fn new(cfg: &QuantConfig, seed: u64) -> Self {
        Self {
            tags: cfg.tags(),
            rounding: cfg.rounding,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn tags(&self) -> &FormatTags {
        &self.tags
    }

    /// Quantizes every enabled group and tags the model.
    pub fn quantize_model(&mut self, model: &mut NetworkModel) -> Result<()> {
        model.formats = self.tags;
        self.requantize_weights(model)?;
        if let ParamFormat::Fixed(f) = self.tags.v_mem {
            let p = &mut model.params;
            p.v_rest = quantize_det(p.v_rest, &f, RoundingMode::Nearest)?;
            p.v_reset = quantize_det(p.v_reset, &f, RoundingMode::Nearest)?;
            p.w_inh = quantize_det(p.w_inh, &f, RoundingMode::Nearest)?.max(0.0);
            for s in &mut model.states {
                s.v_mem = quantize_det(s.v_mem, &f, RoundingMode::Truncate)?;
            }
        }
        if let ParamFormat::Fixed(f) = self.tags.v_thresh {
            let p = &mut model.params;
            p.v_thresh_base = quantize_det(p.v_thresh_base, &f, RoundingMode::Nearest)?;
            p.theta_inc = quantize_det(p.theta_inc, &f, RoundingMode::Nearest)?.max(0.0);
            for s in &mut model.states {
                s.theta = quantize_value(s.theta, &f, self.rounding, Some(&mut self.rng))?.max(0.0);
            }
        }
        if model.params.v_reset > model.params.v_thresh_base {
            model.params.v_reset = model.params.v_thresh_base;
        }
        Ok(())
    }

    /// Re-quantizes the weight group (no-op for fp32 weights), keeping
    /// every weight within `[0, w_max]`.
    pub fn requantize_weights(&mut self, model: &mut NetworkModel) -> Result<()> {
        let ParamFormat::Fixed(f) = self.tags.weights else {
            return Ok(());
        };
        let cap = quantize_det(model.w_max, &f, RoundingMode::Truncate)?;
        let w = model.weights.as_mut_slice();
        quantize_slice(w, &f, self.rounding, Some(&mut self.rng))?;
        for x in w.iter_mut() {
            *x = x.clamp(0.0, cap.max(0.0));
        }
        Ok(())
    }
}

/// Post-training quantization; the input model is left untouched.
pub fn apply_ptq(model: &NetworkModel, cfg: &QuantConfig, seed: u64) -> Result<NetworkModel> {
    let mut out = model.clone();
    Requantizer::new(cfg, seed).quantize_model(&mut out)?;
    Ok(out)
}

/// In-training quantization: enhanced-STDP training with every enabled
/// group re-quantized after each normalization and weight update.
pub fn train_itq<I>(
    initial: &NetworkModel,
    stream: I,
    learn: &LearnConfig,
    cfg: &QuantConfig,
    seed: u64,
    counter: &mut OpCounts,
) -> Result<NetworkModel>
where
    I: IntoIterator,
    I::Item: std::borrow::Borrow<SpikeTrain>,
{
    let mut model = initial.clone();
    let mut rq = Requantizer::new(cfg, seed);
    train(&mut model, stream, learn, Rule::Enhanced, Some(&mut rq), counter)?;
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupRange {
    pub min: f64,
    pub max: f64,
    pub int_bits: u32,
}

impl GroupRange {
    pub fn from_bounds(min: f64, max: f64) -> Self {
        Self {
            min,
            max,
            int_bits: recommended_int_bits(min, max),
        }
    }

    pub fn signed(&self) -> bool {
        self.min < 0.0
    }

    /// A format of `total_bits` width whose integer part covers the range
    /// as far as the width allows; the rest goes to the fraction.
    pub fn format_for_width(&self, total_bits: u32) -> Result<FixedPointFormat> {
        let sign = u32::from(self.signed());
        if total_bits <= sign {
            return Err(Error::InvalidFormat(format!("{total_bits} bits cannot hold a signed value")));
        }
        let int_bits = self.int_bits.min(total_bits - sign);
        FixedPointFormat::new(self.signed(), int_bits, total_bits - sign - int_bits)
    }

    pub fn format_with_frac(&self, frac_bits: u32) -> Result<FixedPointFormat> {
        FixedPointFormat::new(self.signed(), self.int_bits, frac_bits)
    }
}

/// `ceil(log2(max(|min|, |max|) + 1))`, at least 0.
pub fn recommended_int_bits(min: f64, max: f64) -> u32 {
    let mag = min.abs().max(max.abs());
    if mag == 0.0 {
        return 0;
    }
    (mag + 1.0).log2().ceil().max(0.0) as u32
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeReport {
    pub weights: GroupRange,
    pub v_mem: GroupRange,
    pub v_thresh: GroupRange,
}

impl RangeReport {
    pub fn group(&self, g: ParamGroup) -> &GroupRange {
        match g {
            ParamGroup::Weights => &self.weights,
            ParamGroup::VMem => &self.v_mem,
            ParamGroup::VThresh => &self.v_thresh,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct MinMax(f64, f64);

impl MinMax {
    fn new() -> Self {
        MinMax(f64::INFINITY, f64::NEG_INFINITY)
    }

    fn push(&mut self, x: f64) {
        self.0 = self.0.min(x);
        self.1 = self.1.max(x);
    }

    fn range(self) -> GroupRange {
        if self.0 > self.1 {
            GroupRange::from_bounds(0.0, 0.0)
        } else {
            GroupRange::from_bounds(self.0, self.1)
        }
    }
}

/// Observes parameter ranges: weights statically, `v_mem` (including the
/// integrated value just before a spike resets it) and the effective
/// threshold at every step of inference over the calibration samples.
pub fn observe_ranges(model: &NetworkModel, calibration: &[SpikeTrain]) -> Result<RangeReport> {
    if calibration.is_empty() {
        return Err(Error::Empty("calibration set"));
    }
    let mut w = MinMax::new();
    for &x in model.weights.as_slice() {
        w.push(x);
    }
    let mut m = model.clone();
    let n = m.num_excitatory();
    let mut v = MinMax::new();
    let mut th = MinMax::new();
    let mut drive = vec![0.0; n];
    let mut fired = Vec::with_capacity(n);
    let mut ops = OpCounts::default();
    for train in calibration {
        if train.num_inputs() != m.num_inputs() {
            return Err(Error::DimensionMismatch {
                context: "calibration spike train inputs",
                expected: m.num_inputs(),
                found: train.num_inputs(),
            });
        }
        m.reset_dynamic_state();
        for s in &m.states {
            v.push(s.v_mem);
        }
        for t in 0..train.num_steps() {
            let before: Vec<f64> = m.states.iter().map(|s| s.v_mem).collect();
            m.step_active(train.active(t), false, &mut drive, &mut fired, &mut ops);
            for &j in &fired {
                let p = m.params;
                v.push(before[j] + (p.v_rest - before[j]) / p.tau_mem + drive[j]);
            }
            for s in &m.states {
                v.push(s.v_mem);
                th.push(m.params.v_thresh_base + s.theta);
            }
        }
    }
    Ok(RangeReport {
        weights: w.range(),
        v_mem: v.range(),
        v_thresh: th.range(),
    })
}

/// Accuracy of PTQ applied to a single group at each candidate fraction
/// width; the group's integer bits come from `range`. One row per
/// candidate, in input order.
pub fn sweep_fractional_bits(
    model: &NetworkModel,
    evaluator: &Evaluator,
    group: ParamGroup,
    range: &GroupRange,
    candidate_frac_bits: &[u32],
    rounding: RoundingMode,
    seed: u64,
) -> Result<Vec<(u32, f64)>> {
    if candidate_frac_bits.is_empty() {
        return Err(Error::Empty("fractional-bit candidates"));
    }
    candidate_frac_bits
        .iter()
        .map(|&frac| {
            let fmt = ParamFormat::Fixed(range.format_with_frac(frac)?);
            let mut cfg = QuantConfig::fp32(Scheme::Ptq);
            cfg.rounding = rounding;
            match group {
                ParamGroup::Weights => cfg.weights = fmt,
                ParamGroup::VMem => {
                    cfg.groups = Groups::QWN;
                    cfg.v_mem = fmt;
                }
                ParamGroup::VThresh => {
                    cfg.groups = Groups::QWN;
                    cfg.v_thresh = fmt;
                }
            }
            let mut q = apply_ptq(model, &cfg, seed)?;
            Ok((frac, evaluator.evaluate(&mut q)?.accuracy))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{LayerParams, WeightMatrix};

    fn fmt(s: &str) -> FixedPointFormat {
        s.parse().unwrap()
    }

    fn small_model() -> NetworkModel {
        let w = WeightMatrix::from_vec(2, 2, vec![0.30, 0.70, 0.05, 0.95]).unwrap();
        NetworkModel::with_weights(w, 1.0, LayerParams::default()).unwrap()
    }

    #[test]
    fn int_bits_formula() {
        assert_eq!(recommended_int_bits(0.0, 1.0), 1);
        assert_eq!(recommended_int_bits(0.0, 0.4), 1);
        assert_eq!(recommended_int_bits(0.0, 7.5), 4);
        assert_eq!(recommended_int_bits(0.0, 0.0), 0);
        assert_eq!(recommended_int_bits(-3.0, 1.0), 2);
    }

    #[test]
    fn identity_config_is_identity() {
        let m = small_model();
        let q = apply_ptq(&m, &QuantConfig::fp32(Scheme::Ptq), 1).unwrap();
        assert_eq!(q, m);
    }

    #[test]
    fn ptq_truncates_elementwise() {
        let m = small_model();
        let f = fmt("qu0.8");
        let q = apply_ptq(&m, &QuantConfig::qw(Scheme::Ptq, RoundingMode::Truncate, f), 1).unwrap();
        for (a, b) in q.weights.as_slice().iter().zip(m.weights.as_slice()) {
            assert_eq!(*a, quantize_det(*b, &f, RoundingMode::Truncate).unwrap());
        }
        assert_eq!(q.formats.weights, ParamFormat::Fixed(f));
        assert_eq!(q.formats.v_mem, ParamFormat::Fp32);
        // input untouched
        assert_eq!(m.weights.get(0, 0), 0.30);
        let again = apply_ptq(&q, &QuantConfig::qw(Scheme::Ptq, RoundingMode::Truncate, f), 1).unwrap();
        assert_eq!(again, q);
    }

    #[test]
    fn qwn_puts_neuron_groups_on_grid() {
        let mut m = small_model();
        m.states[0].theta = 0.3;
        let cfg = QuantConfig::qwn(
            Scheme::Ptq,
            RoundingMode::Nearest,
            fmt("qu1.7"),
            fmt("qu2.6"),
            fmt("qu2.6"),
        );
        let q = apply_ptq(&m, &cfg, 1).unwrap();
        let g = fmt("qu2.6");
        assert!(g.contains(q.params.v_thresh_base));
        assert!(g.contains(q.params.theta_inc));
        assert!(g.contains(q.params.w_inh));
        assert!(q.states.iter().all(|s| g.contains(s.theta) && g.contains(s.v_mem)));
    }

    #[test]
    fn format_for_width_splits_bits() {
        let r = GroupRange::from_bounds(0.0, 0.9);
        assert_eq!(r.format_for_width(8).unwrap(), fmt("qu1.7"));
        let s = GroupRange::from_bounds(-2.0, 5.0);
        assert_eq!(s.format_for_width(8).unwrap(), fmt("qs3.4"));
        assert_eq!(s.format_for_width(3).unwrap(), fmt("qs2.0"));
        assert!(s.format_for_width(1).is_err());
    }

    #[test]
    fn empty_calibration_rejected() {
        assert!(observe_ranges(&small_model(), &[]).is_err());
    }

    #[test]
    fn weight_range_is_static() {
        let m = small_model();
        let r = observe_ranges(&m, &[SpikeTrain::silent(2, 3)]).unwrap();
        assert_eq!((r.weights.min, r.weights.max, r.weights.int_bits), (0.05, 0.95, 1));
        assert_eq!(r.v_mem.int_bits, 0);
    }
}
