//! Memory footprint and energy accounting.
//!
//! Memory is `M = Nw * Bw + sum_k Nn_k * Bn_k` over a declared parameter
//! inventory, in exact integer bits. Energy is either a linear
//! operation-count model (each op class has a per-op cost at 32-bit
//! operands, scaled linearly by operand width) or measured time x power.
//!
//! The two-layer reference topology (one inhibitory neuron per excitatory
//! neuron) is never simulated. Its inventory and op counts are derived in
//! closed form from the reduced network's so ratios can be reported.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::{ParamFormat, FP32_BITS};
use crate::network::{FormatTags, NetworkModel};

/// Operation tallies of a simulation run.
///
/// The first four fields are energy-bearing operation classes; the
/// remaining tallies describe the run and feed the reference-topology
/// derivation in [`baseline_op_counts`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounts {
    /// (input spike, integrating neuron) pairs.
    pub synaptic_accumulates: u64,
    pub neuron_updates: u64,
    /// Synapse-level learning work: weight updates, trace reads and trace
    /// resets.
    pub learning_updates: u64,
    /// (firing neuron, inhibited neuron) pairs.
    pub inhibition_events: u64,
    pub timesteps: u64,
    pub input_spikes: u64,
    pub output_spikes: u64,
}

impl AddAssign for OpCounts {
    fn add_assign(&mut self, o: Self) {
        self.synaptic_accumulates += o.synaptic_accumulates;
        self.neuron_updates += o.neuron_updates;
        self.learning_updates += o.learning_updates;
        self.inhibition_events += o.inhibition_events;
        self.timesteps += o.timesteps;
        self.input_spikes += o.input_spikes;
        self.output_spikes += o.output_spikes;
    }
}

impl Add for OpCounts {
    type Output = Self;

    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NeuronParamEntry {
    pub name: String,
    pub count: u64,
    pub bits: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ParameterInventory {
    pub num_weights: u64,
    pub weight_bits: u32,
    pub neuron_params: Vec<NeuronParamEntry>,
}

impl ParameterInventory {
    pub fn entry(mut self, name: &str, count: u64, bits: u32) -> Self {
        self.neuron_params.push(NeuronParamEntry {
            name: name.to_string(),
            count,
            bits,
        });
        self
    }

    /// Concatenation: weights become one more (count, bits) term.
    pub fn concat(&self, other: &ParameterInventory) -> ParameterInventory {
        let mut out = self.clone();
        out.neuron_params.push(NeuronParamEntry {
            name: "weights'".into(),
            count: other.num_weights,
            bits: other.weight_bits,
        });
        out.neuron_params.extend(other.neuron_params.iter().cloned());
        out
    }
}

/// `M = Nw * Bw + sum_k Nn_k * Bn_k`, in bits.
pub fn memory_footprint(inv: &ParameterInventory) -> u64 {
    inv.num_weights * u64::from(inv.weight_bits)
        + inv
            .neuron_params
            .iter()
            .map(|e| e.count * u64::from(e.bits))
            .sum::<u64>()
}

pub fn normalized_memory(m_q: u64, m_0: u64) -> Result<f64> {
    if m_0 == 0 {
        return Err(Error::InvalidParameter("reference memory M_0 is zero".into()));
    }
    Ok(m_q as f64 / m_0 as f64)
}

/// Inventory of the reduced (excitatory-only) network.
///
/// Per neuron: `v_mem` and `theta`. Per layer, counted once: `v_rest`,
/// `v_reset`, `w_inh` (stored with `v_mem`), `v_thresh_base`, `theta_inc`
/// (stored with the threshold) and the three time constants at 32 bits.
pub fn tinysnn_inventory(num_inputs: u64, num_excitatory: u64, formats: &FormatTags) -> ParameterInventory {
    let vb = formats.v_mem.bits();
    let tb = formats.v_thresh.bits();
    ParameterInventory {
        num_weights: num_inputs * num_excitatory,
        weight_bits: formats.weights.bits(),
        neuron_params: Vec::new(),
    }
    .entry("v_mem", num_excitatory, vb)
    .entry("theta", num_excitatory, tb)
    .entry("v_rest", 1, vb)
    .entry("v_reset", 1, vb)
    .entry("w_inh", 1, vb)
    .entry("v_thresh_base", 1, tb)
    .entry("theta_inc", 1, tb)
    .entry("tau_mem", 1, FP32_BITS)
    .entry("tau_theta", 1, FP32_BITS)
    .entry("t_refrac", 1, FP32_BITS)
}

pub fn model_inventory(model: &NetworkModel) -> ParameterInventory {
    tinysnn_inventory(
        model.num_inputs() as u64,
        model.num_excitatory() as u64,
        &model.formats,
    )
}

/// Inventory of the reference topology with a paired inhibitory layer:
/// input->exc all-to-all, exc->inh one-to-one, inh->exc all-but-self.
/// Both layers store `v_mem` and `theta` per neuron plus their own
/// per-layer constants; everything at `bits`.
pub fn baseline_inventory(num_inputs: u64, num_excitatory: u64, bits: u32) -> ParameterInventory {
    let e = num_excitatory;
    let mut inv = ParameterInventory {
        num_weights: num_inputs * e + e + e * e.saturating_sub(1),
        weight_bits: bits,
        neuron_params: Vec::new(),
    };
    for layer in ["exc", "inh"] {
        inv = inv
            .entry(&format!("{layer}.v_mem"), e, bits)
            .entry(&format!("{layer}.theta"), e, bits);
        for c in [
            "v_rest",
            "v_reset",
            "v_thresh_base",
            "theta_inc",
            "tau_mem",
            "tau_theta",
            "t_refrac",
        ] {
            inv = inv.entry(&format!("{layer}.{c}"), 1, bits);
        }
    }
    inv
}

/// Op counts the reference topology would incur on the same input.
///
/// Every excitatory spike drives its inhibitory partner (one synaptic
/// event), which is assumed to fire once and reach the other `E - 1`
/// excitatory neurons through synapses instead of direct inhibition. The
/// inhibitory layer doubles the neuron updates. When `training`, the
/// pair-wise rule runs on every postsynaptic spike: one trace read and one
/// weight update per input, plus a trace reset per input spike.
pub fn baseline_op_counts(reduced: &OpCounts, num_inputs: u64, num_excitatory: u64, training: bool) -> OpCounts {
    let inh_fanout = num_excitatory.saturating_sub(1);
    OpCounts {
        synaptic_accumulates: reduced.synaptic_accumulates
            + reduced.output_spikes
            + reduced.output_spikes * inh_fanout,
        neuron_updates: 2 * reduced.neuron_updates,
        learning_updates: if training {
            reduced.input_spikes + 2 * reduced.output_spikes * num_inputs
        } else {
            0
        },
        inhibition_events: 0,
        ..*reduced
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyMode {
    OpCount,
    TimePower,
}

/// Energy per operation at 32-bit operands, in Joules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OpEnergy {
    pub synaptic_accumulate: f64,
    pub neuron_update: f64,
    pub learning_update: f64,
    pub inhibition_event: f64,
}

impl Default for OpEnergy {
    /// Counts of elementary arithmetic ops at 1 pJ each: accumulate (1);
    /// leak, theta decay, threshold compare and refractory check (7);
    /// `k * eta * x * (w_m - w)` plus accumulate (5); subtract and floor (2).
    fn default() -> Self {
        const PJ: f64 = 1e-12;
        Self {
            synaptic_accumulate: PJ,
            neuron_update: 7.0 * PJ,
            learning_update: 5.0 * PJ,
            inhibition_event: 2.0 * PJ,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyModel {
    pub mode: EnergyMode,
    pub coeffs: OpEnergy,
    /// Operational power for [`EnergyMode::TimePower`], in Watts.
    pub power_watts: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            mode: EnergyMode::OpCount,
            coeffs: OpEnergy::default(),
            power_watts: 10.0,
        }
    }
}

/// Operand widths driving the bit scaling of op energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperandBits {
    /// Synaptic accumulates and learning updates.
    pub weights: u32,
    /// Neuron updates and inhibition.
    pub v_mem: u32,
}

impl OperandBits {
    pub const FP32: OperandBits = OperandBits {
        weights: FP32_BITS,
        v_mem: FP32_BITS,
    };

    pub fn of(formats: &FormatTags) -> Self {
        Self {
            weights: formats.weights.bits(),
            v_mem: formats.v_mem.bits(),
        }
    }

    pub fn uniform(fmt: ParamFormat) -> Self {
        Self {
            weights: fmt.bits(),
            v_mem: fmt.bits(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum EnergyInput<'a> {
    Ops(&'a OpCounts, OperandBits),
    /// Wall-clock seconds.
    Elapsed(f64),
}

pub fn energy_estimate(input: EnergyInput<'_>, model: &EnergyModel) -> Result<f64> {
    if [
        model.coeffs.synaptic_accumulate,
        model.coeffs.neuron_update,
        model.coeffs.learning_update,
        model.coeffs.inhibition_event,
        model.power_watts,
    ]
    .iter()
    .any(|c| !(*c >= 0.0))
    {
        return Err(Error::InvalidParameter("energy coefficients must be non-negative".into()));
    }
    match (model.mode, input) {
        (EnergyMode::OpCount, EnergyInput::Ops(ops, bits)) => {
            let scale = |b: u32| f64::from(b) / f64::from(FP32_BITS);
            let c = &model.coeffs;
            Ok(ops.synaptic_accumulates as f64 * c.synaptic_accumulate * scale(bits.weights)
                + ops.learning_updates as f64 * c.learning_update * scale(bits.weights)
                + ops.neuron_updates as f64 * c.neuron_update * scale(bits.v_mem)
                + ops.inhibition_events as f64 * c.inhibition_event * scale(bits.v_mem))
        }
        (EnergyMode::TimePower, EnergyInput::Elapsed(secs)) => {
            if !(secs >= 0.0) {
                return Err(Error::InvalidParameter(format!("elapsed time {secs} must be >= 0")));
            }
            Ok(secs * model.power_watts)
        }
        (mode, _) => Err(Error::InvalidParameter(format!(
            "energy input does not match {mode:?} mode"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::FixedPointFormat;

    fn reference_inventory(bw: u32) -> ParameterInventory {
        ParameterInventory {
            num_weights: 784 * 400,
            weight_bits: bw,
            neuron_params: Vec::new(),
        }
        .entry("v_mem", 400, 32)
        .entry("theta", 400, 32)
    }

    #[test]
    fn memory_examples() {
        assert_eq!(memory_footprint(&reference_inventory(32)), 10_060_800);
        assert_eq!(memory_footprint(&reference_inventory(8)), 2_534_400);
        assert_eq!(memory_footprint(&ParameterInventory::default()), 0);
    }

    #[test]
    fn normalized_examples() {
        assert_eq!(normalized_memory(7, 7).unwrap(), 1.0);
        assert_eq!(normalized_memory(0, 9).unwrap(), 0.0);
        let r = normalized_memory(2_534_400, 10_060_800).unwrap();
        assert!((r - 0.2519).abs() < 5e-5);
        assert!(normalized_memory(1, 0).is_err());
    }

    #[test]
    fn baseline_weight_counts() {
        assert_eq!(baseline_inventory(784, 400, 32).num_weights, 473_600);
        assert_eq!(baseline_inventory(784, 1, 32).num_weights, 785);
        assert!(
            tinysnn_inventory(784, 400, &FormatTags::default()).num_weights
                < baseline_inventory(784, 400, 32).num_weights
        );
    }

    #[test]
    fn additive_over_concat() {
        let a = reference_inventory(8);
        let b = baseline_inventory(10, 3, 16);
        assert_eq!(memory_footprint(&a.concat(&b)), memory_footprint(&a) + memory_footprint(&b));
    }

    #[test]
    fn model_inventory_tracks_formats() {
        let q8: ParamFormat = ParamFormat::Fixed(FixedPointFormat::new(false, 1, 7).unwrap());
        let fp = tinysnn_inventory(784, 400, &FormatTags::default());
        let qw = tinysnn_inventory(
            784,
            400,
            &FormatTags {
                weights: q8,
                ..FormatTags::default()
            },
        );
        assert_eq!(memory_footprint(&fp) - memory_footprint(&qw), 313_600 * 24);
    }

    #[test]
    fn energy_examples() {
        let m = EnergyModel {
            coeffs: OpEnergy {
                synaptic_accumulate: 1e-9,
                ..OpEnergy::default()
            },
            ..EnergyModel::default()
        };
        let zero = OpCounts::default();
        assert_eq!(energy_estimate(EnergyInput::Ops(&zero, OperandBits::FP32), &m).unwrap(), 0.0);
        let ops = OpCounts {
            synaptic_accumulates: 1_000_000,
            ..OpCounts::default()
        };
        let e32 = energy_estimate(EnergyInput::Ops(&ops, OperandBits::FP32), &m).unwrap();
        assert!((e32 - 1e-3).abs() < 1e-15);
        let e8 = energy_estimate(
            EnergyInput::Ops(&ops, OperandBits { weights: 8, v_mem: 8 }),
            &m,
        )
        .unwrap();
        assert_eq!(e32, 4.0 * e8);
        assert!(energy_estimate(EnergyInput::Elapsed(1.0), &m).is_err());

        let tp = EnergyModel {
            mode: EnergyMode::TimePower,
            ..EnergyModel::default()
        };
        assert_eq!(energy_estimate(EnergyInput::Elapsed(0.0), &tp).unwrap(), 0.0);
        assert_eq!(energy_estimate(EnergyInput::Elapsed(2.0), &tp).unwrap(), 20.0);
        assert!(energy_estimate(EnergyInput::Ops(&zero, OperandBits::FP32), &tp).is_err());
    }

    #[test]
    fn baseline_ops_add_inhibitory_work() {
        let r = OpCounts {
            synaptic_accumulates: 100,
            neuron_updates: 40,
            learning_updates: 10,
            inhibition_events: 9,
            timesteps: 4,
            input_spikes: 10,
            output_spikes: 3,
        };
        let b = baseline_op_counts(&r, 10, 4, true);
        assert_eq!(b.synaptic_accumulates, 100 + 3 + 9);
        assert_eq!(b.neuron_updates, 80);
        assert_eq!(b.learning_updates, 10 + 60);
        assert_eq!(b.inhibition_events, 0);
        assert_eq!(baseline_op_counts(&r, 10, 4, false).learning_updates, 0);
    }
}
