//! Excitatory LIF layer with direct lateral inhibition.
//!
//! There is no inhibitory population: a firing excitatory neuron directly
//! lowers the membrane potential of every other excitatory neuron by
//! `w_inh`. The only stored per-neuron state is `v_mem`, the adaptive
//! threshold offset `theta` and a refractory counter.

use rand::Rng;

use crate::encoding::SpikeTrain;
use crate::error::{Error, Result};
use crate::fixedpoint::{quantize_det, ParamFormat, RoundingMode};
use crate::metrics::OpCounts;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerParams {
    pub v_rest: f64,
    pub v_reset: f64,
    pub v_thresh_base: f64,
    /// Membrane time constant, in timesteps.
    pub tau_mem: f64,
    pub theta_inc: f64,
    /// Decay constant of `theta`, in timesteps.
    pub tau_theta: f64,
    pub t_refrac: u32,
    /// Potential removed from every other neuron per firing neuron.
    pub w_inh: f64,
}

impl Default for LayerParams {
    fn default() -> Self {
        Self {
            v_rest: 0.0,
            v_reset: 0.0,
            v_thresh_base: 0.5,
            tau_mem: 100.0,
            theta_inc: 0.05,
            tau_theta: 1e5,
            t_refrac: 5,
            w_inh: 0.1,
        }
    }
}

impl LayerParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        let all = [
            self.v_rest,
            self.v_reset,
            self.v_thresh_base,
            self.tau_mem,
            self.theta_inc,
            self.tau_theta,
            self.w_inh,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("layer parameters must be finite");
        }
        if self.tau_mem <= 0.0 || self.tau_theta <= 0.0 {
            return bad("time constants must be positive");
        }
        if self.w_inh < 0.0 {
            return bad("w_inh must be non-negative");
        }
        if self.theta_inc < 0.0 {
            return bad("theta_inc must be non-negative");
        }
        if self.v_reset > self.v_thresh_base {
            return bad("v_reset must not exceed v_thresh_base");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronDynamicState {
    pub v_mem: f64,
    pub theta: f64,
    pub refrac_remaining: u32,
}

/// Storage format of each quantizable parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FormatTags {
    pub weights: ParamFormat,
    pub v_mem: ParamFormat,
    /// Covers `v_thresh_base`, `theta` and `theta_inc`.
    pub v_thresh: ParamFormat,
}

/// Dense input-major weight matrix: entry `(i, j)` is the synapse from
/// input `i` onto excitatory neuron `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "weight matrix data",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Uniform random weights in `[0, max)`.
    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, max: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen::<f64>() * max).collect();
        Self { rows, cols, data }
    }

    /// Number of inputs.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of neurons.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, input: usize, neuron: usize) -> f64 {
        self.data[input * self.cols + neuron]
    }

    pub fn set(&mut self, input: usize, neuron: usize, w: f64) {
        self.data[input * self.cols + neuron] = w;
    }

    /// Outgoing weights of one input, indexed by neuron.
    pub fn row(&self, input: usize) -> &[f64] {
        &self.data[input * self.cols..(input + 1) * self.cols]
    }

    pub fn row_mut(&mut self, input: usize) -> &mut [f64] {
        &mut self.data[input * self.cols..(input + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn column_sum(&self, neuron: usize) -> f64 {
        (0..self.rows).map(|i| self.get(i, neuron)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub weights: WeightMatrix,
    /// Upper weight bound `w_m`.
    pub w_max: f64,
    pub params: LayerParams,
    pub states: Vec<NeuronDynamicState>,
    pub formats: FormatTags,
    /// Free-form provenance (seeds, sample counts) carried into model files.
    pub lineage: String,
}

impl NetworkModel {
    /// A model at rest with all-zero weights.
    pub fn new(num_inputs: usize, num_excitatory: usize, w_max: f64, params: LayerParams) -> Result<Self> {
        Self::with_weights(WeightMatrix::zeros(num_inputs, num_excitatory), w_max, params)
    }

    pub fn with_weights(weights: WeightMatrix, w_max: f64, params: LayerParams) -> Result<Self> {
        params.validate()?;
        if !(w_max > 0.0 && w_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("w_max {w_max} must be positive")));
        }
        if let Some(w) = weights.as_slice().iter().find(|w| !(0.0..=w_max).contains(*w)) {
            return Err(Error::InvalidParameter(format!("weight {w} outside [0, {w_max}]")));
        }
        let states = vec![
            NeuronDynamicState {
                v_mem: params.v_rest,
                theta: 0.0,
                refrac_remaining: 0,
            };
            weights.cols()
        ];
        Ok(Self {
            weights,
            w_max,
            params,
            states,
            formats: FormatTags::default(),
            lineage: String::new(),
        })
    }

    pub fn num_inputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn num_excitatory(&self) -> usize {
        self.weights.cols()
    }

    /// Effective firing threshold of neuron `j`.
    pub fn threshold(&self, j: usize) -> f64 {
        self.params.v_thresh_base + self.states[j].theta
    }

    /// Restores `v_mem` to rest and clears refractory counters; `theta` is
    /// left untouched.
    pub fn reset_dynamic_state(&mut self) {
        let v_rest = self.params.v_rest;
        for s in &mut self.states {
            s.v_mem = v_rest;
            s.refrac_remaining = 0;
        }
    }

    /// One timestep driven by a dense binary input vector; returns the
    /// excitatory spike vector.
    pub fn step_layer(&mut self, input_spikes: &[bool], counter: &mut OpCounts) -> Result<Vec<bool>> {
        if input_spikes.len() != self.num_inputs() {
            return Err(Error::DimensionMismatch {
                context: "step_layer input",
                expected: self.num_inputs(),
                found: input_spikes.len(),
            });
        }
        let active: Vec<u32> = input_spikes
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| s.then_some(i as u32))
            .collect();
        let mut fired = Vec::new();
        let mut drive = vec![0.0; self.num_excitatory()];
        self.step_active(&active, true, &mut drive, &mut fired, counter);
        let mut out = vec![false; self.num_excitatory()];
        for j in fired {
            out[j] = true;
        }
        Ok(out)
    }

    /// Core timestep. `active` lists the spiking inputs in ascending order;
    /// `drive` is scratch space of length `num_excitatory`; the indices of
    /// firing neurons are written to `fired`.
    pub(crate) fn step_active(
        &mut self,
        active: &[u32],
        adapt_theta: bool,
        drive: &mut [f64],
        fired: &mut Vec<usize>,
        counter: &mut OpCounts,
    ) {
        let n = self.num_excitatory();
        let p = self.params;
        fired.clear();

        drive.fill(0.0);
        for &i in active {
            for (d, w) in drive.iter_mut().zip(self.weights.row(i as usize)) {
                *d += w;
            }
        }
        counter.input_spikes += active.len() as u64;

        let theta_decay = 1.0 - 1.0 / p.tau_theta;
        let theta_fmt = self.formats.v_thresh.fixed().copied();
        for (j, s) in self.states.iter_mut().enumerate() {
            let refractory = s.refrac_remaining > 0;
            if refractory {
                s.refrac_remaining -= 1;
            } else {
                s.v_mem = s.v_mem + (p.v_rest - s.v_mem) / p.tau_mem + drive[j];
                counter.synaptic_accumulates += active.len() as u64;
            }
            if adapt_theta {
                s.theta *= theta_decay;
                if let Some(f) = &theta_fmt {
                    // Nearest keeps slow decays from collapsing theta one ulp per step.
                    s.theta = quantize_det(s.theta, f, RoundingMode::Nearest).expect("finite theta");
                }
            }
            if !refractory && s.v_mem >= p.v_thresh_base + s.theta {
                s.v_mem = p.v_reset;
                if adapt_theta {
                    s.theta += p.theta_inc;
                    if let Some(f) = &theta_fmt {
                        s.theta = quantize_det(s.theta, f, RoundingMode::Nearest).expect("finite theta");
                    }
                }
                s.refrac_remaining = p.t_refrac;
                fired.push(j);
            }
        }
        counter.neuron_updates += n as u64;

        if !fired.is_empty() {
            counter.output_spikes += fired.len() as u64;
            let inhibition = p.w_inh * fired.len() as f64;
            let mut next_fired = fired.iter().peekable();
            for (j, s) in self.states.iter_mut().enumerate() {
                if next_fired.peek() == Some(&&j) {
                    next_fired.next();
                    continue;
                }
                let floor = p.v_reset.min(s.v_mem);
                s.v_mem = (s.v_mem - inhibition).max(floor);
            }
            counter.inhibition_events += (fired.len() * (n - 1)) as u64;
        }

        if let ParamFormat::Fixed(f) = self.formats.v_mem {
            for s in &mut self.states {
                s.v_mem = quantize_det(s.v_mem, &f, RoundingMode::Truncate).expect("finite v_mem");
            }
        }
        counter.timesteps += 1;
    }

    /// Presents one sample: resets dynamic state, runs every timestep and
    /// returns per-neuron output spike counts.
    ///
    /// With a learning hook the presentation is a training pass: `theta`
    /// adapts and the hook sees every step plus each update time (every
    /// `update_period` steps and at the end of the window). Without one,
    /// `theta` is frozen and weights are never touched.
    pub fn present_sample(
        &mut self,
        train: &SpikeTrain,
        mut learning: Option<&mut dyn LearningHook>,
        counter: &mut OpCounts,
    ) -> Result<Vec<u32>> {
        if train.num_inputs() != self.num_inputs() {
            return Err(Error::DimensionMismatch {
                context: "present_sample spike train inputs",
                expected: self.num_inputs(),
                found: train.num_inputs(),
            });
        }
        self.reset_dynamic_state();
        let n = self.num_excitatory();
        let steps = train.num_steps();
        let mut counts = vec![0u32; n];
        let mut drive = vec![0.0; n];
        let mut fired = Vec::with_capacity(n);
        let adapt = learning.is_some();
        let period = learning.as_ref().map_or(usize::MAX, |h| h.update_period().max(1));
        if let Some(h) = learning.as_deref_mut() {
            h.begin_presentation(self, steps)?;
        }
        for t in 0..steps {
            let active = train.active(t);
            self.step_active(active, adapt, &mut drive, &mut fired, counter);
            for &j in &fired {
                counts[j] += 1;
            }
            if let Some(h) = learning.as_deref_mut() {
                h.on_step(self, active, &fired, counter)?;
                if (t + 1) % period == 0 || t + 1 == steps {
                    h.on_update(self, counter)?;
                }
            }
        }
        Ok(counts)
    }
}

/// Plasticity driven by [`NetworkModel::present_sample`].
pub trait LearningHook {
    /// Steps between update times; the last step of a window is always an
    /// update time as well.
    fn update_period(&self) -> usize;

    fn begin_presentation(&mut self, model: &NetworkModel, num_steps: usize) -> Result<()>;

    /// Called after every timestep with the step's input and output spikes.
    fn on_step(
        &mut self,
        model: &mut NetworkModel,
        active_inputs: &[u32],
        fired: &[usize],
        counter: &mut OpCounts,
    ) -> Result<()>;

    fn on_update(&mut self, model: &mut NetworkModel, counter: &mut OpCounts) -> Result<()>;
}

/// Training-mode presentation (adaptive thresholds) with frozen weights.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoPlasticity;

impl LearningHook for NoPlasticity {
    fn update_period(&self) -> usize {
        usize::MAX
    }

    fn begin_presentation(&mut self, _: &NetworkModel, _: usize) -> Result<()> {
        Ok(())
    }

    fn on_step(&mut self, _: &mut NetworkModel, _: &[u32], _: &[usize], _: &mut OpCounts) -> Result<()> {
        Ok(())
    }

    fn on_update(&mut self, _: &mut NetworkModel, _: &mut OpCounts) -> Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_neuron(thresh: f64) -> NetworkModel {
        let params = LayerParams {
            v_rest: 0.0,
            v_reset: 0.0,
            v_thresh_base: thresh,
            tau_mem: 100.0,
            w_inh: 0.1,
            ..LayerParams::default()
        };
        let w = WeightMatrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        NetworkModel::with_weights(w, 1.0, params).unwrap()
    }

    #[test]
    fn rest_is_a_fixed_point() {
        let mut m = two_neuron(0.5);
        let mut c = OpCounts::default();
        let before = m.states.clone();
        let out = m.step_layer(&[false], &mut c).unwrap();
        assert_eq!(out, vec![false, false]);
        assert_eq!(m.states, before);
        assert_eq!(c.synaptic_accumulates, 0);
        assert_eq!(c.neuron_updates, 2);
    }

    #[test]
    fn single_step_fire_and_inhibit() {
        let mut m = two_neuron(0.5);
        let mut c = OpCounts::default();
        let out = m.step_layer(&[true], &mut c).unwrap();
        assert_eq!(out, vec![true, false]);
        assert_eq!(m.states[0].v_mem, 0.0);
        assert_eq!(m.states[0].refrac_remaining, 5);
        assert_eq!(m.states[0].theta, 0.05);
        assert_eq!(m.states[1].v_mem, 0.0);
        assert_eq!(c.synaptic_accumulates, 2);
        assert_eq!(c.inhibition_events, 1);
    }

    #[test]
    fn single_step_subthreshold() {
        let mut m = two_neuron(2.0);
        let mut c = OpCounts::default();
        let out = m.step_layer(&[true], &mut c).unwrap();
        assert_eq!(out, vec![false, false]);
        assert_eq!(m.states[0].v_mem, 1.0);
    }

    #[test]
    fn dimension_mismatch() {
        let mut m = two_neuron(0.5);
        assert!(m.step_layer(&[true, false], &mut OpCounts::default()).is_err());
        let st = SpikeTrain::silent(3, 4);
        assert!(m.present_sample(&st, None, &mut OpCounts::default()).is_err());
    }

    #[test]
    fn empty_window_gives_zero_counts() {
        let mut m = two_neuron(0.5);
        let st = SpikeTrain::silent(1, 0);
        assert_eq!(m.present_sample(&st, None, &mut OpCounts::default()).unwrap(), vec![0, 0]);
    }

    #[test]
    fn zero_weights_never_fire() {
        let params = LayerParams::default();
        let mut m = NetworkModel::new(4, 3, 1.0, params).unwrap();
        let st = SpikeTrain::from_dense(&vec![vec![true; 50]; 4]).unwrap();
        let counts = m
            .present_sample(&st, Some(&mut NoPlasticity), &mut OpCounts::default())
            .unwrap();
        assert_eq!(counts, vec![0, 0, 0]);
    }

    #[test]
    fn reset_keeps_theta_and_is_idempotent() {
        let mut m = two_neuron(0.5);
        let st = SpikeTrain::from_dense(&[vec![true; 20]]).unwrap();
        m.present_sample(&st, Some(&mut NoPlasticity), &mut OpCounts::default())
            .unwrap();
        let thetas: Vec<f64> = m.states.iter().map(|s| s.theta).collect();
        assert!(thetas[0] > 0.0);
        m.reset_dynamic_state();
        let once = m.clone();
        m.reset_dynamic_state();
        assert_eq!(m, once);
        assert_eq!(m.states.iter().map(|s| s.theta).collect::<Vec<_>>(), thetas);
        let out = m.step_layer(&[false], &mut OpCounts::default()).unwrap();
        assert_eq!(out, vec![false, false]);
    }

    #[test]
    fn inference_freezes_theta() {
        let mut m = two_neuron(0.5);
        let st = SpikeTrain::from_dense(&[vec![true; 20]]).unwrap();
        let counts = m.present_sample(&st, None, &mut OpCounts::default()).unwrap();
        assert!(counts[0] > 0);
        assert_eq!(m.states[0].theta, 0.0);
    }

    #[test]
    fn invalid_params_rejected() {
        let p = LayerParams {
            tau_mem: 0.0,
            ..LayerParams::default()
        };
        assert!(NetworkModel::new(1, 1, 1.0, p).is_err());
        let w = WeightMatrix::from_vec(1, 1, vec![2.0]).unwrap();
        assert!(NetworkModel::with_weights(w, 1.0, LayerParams::default()).is_err());
    }
}
