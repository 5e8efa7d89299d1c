//! STDP rules.
//!
//! The enhanced rule updates weights once per update window, only for
//! neurons that spiked in that window, with a potentiation-only step
//! `dw = k * eta_post * x_pre * (w_m - w)`. The factor
//! `k = ceil(maxN / n_th)` grows with the largest per-neuron spike count
//! seen so far in the presentation. The pair-wise rule is the
//! every-timestep reference used for comparisons.

use crate::error::{Error, Result};
use crate::metrics::OpCounts;
use crate::network::{LearningHook, NetworkModel, WeightMatrix};

/// Presynaptic traces, stored as (value, step) anchors and evaluated
/// lazily: between spikes `x(t) = x(t0) * exp(-(t - t0) / tau_pre)`, and a
/// spike sets the trace to one. Advancing time is O(spikes), not O(inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceState {
    anchor: Vec<f64>,
    anchor_step: Vec<u64>,
    now: u64,
    tau_pre: f64,
}

impl TraceState {
    pub fn new(num_inputs: usize, tau_pre: f64) -> Result<Self> {
        if !(tau_pre > 0.0 && tau_pre.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau_pre {tau_pre} must be positive")));
        }
        Ok(Self {
            anchor: vec![0.0; num_inputs],
            anchor_step: vec![0; num_inputs],
            now: 0,
            tau_pre,
        })
    }

    pub fn len(&self) -> usize {
        self.anchor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchor.is_empty()
    }

    pub fn tau_pre(&self) -> f64 {
        self.tau_pre
    }

    /// Zeroes every trace.
    pub fn reset(&mut self) {
        self.anchor.fill(0.0);
        self.anchor_step.fill(0);
        self.now = 0;
    }

    /// Overwrites trace `i` at the current time.
    pub fn set(&mut self, i: usize, value: f64) {
        self.anchor[i] = value.clamp(0.0, 1.0);
        self.anchor_step[i] = self.now;
    }

    /// One timestep: decay every trace, then set spiking inputs to one.
    pub fn update_traces(&mut self, input_spikes: &[bool]) -> Result<()> {
        if input_spikes.len() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "update_traces input",
                expected: self.len(),
                found: input_spikes.len(),
            });
        }
        self.now += 1;
        for (i, _) in input_spikes.iter().enumerate().filter(|(_, s)| **s) {
            self.anchor[i] = 1.0;
            self.anchor_step[i] = self.now;
        }
        Ok(())
    }

    /// [`update_traces`](Self::update_traces) given the ascending list of
    /// spiking inputs.
    pub fn update_active(&mut self, active: &[u32]) {
        self.now += 1;
        for &i in active {
            self.anchor[i as usize] = 1.0;
            self.anchor_step[i as usize] = self.now;
        }
    }

    pub fn x_pre(&self, i: usize) -> f64 {
        let a = self.anchor[i];
        if a == 0.0 {
            return 0.0;
        }
        let age = (self.now - self.anchor_step[i]) as f64;
        a * (-age / self.tau_pre).exp()
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.x_pre(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnConfig {
    pub eta_post: f64,
    /// Maximum weight `w_m`.
    pub w_max: f64,
    /// Postsynaptic-spike count per unit of `k`.
    pub n_th: u32,
    pub update_period: usize,
    pub tau_pre: f64,
    /// Target trace of the pair-wise rule.
    pub x_tar: f64,
    /// Per-neuron incoming weight sum enforced before each training sample.
    pub norm_target: Option<f64>,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            eta_post: 0.01,
            w_max: 1.0,
            n_th: 5,
            update_period: crate::encoding::DEFAULT_NUM_STEPS,
            tau_pre: 20.0,
            x_tar: 0.4,
            norm_target: Some(78.0),
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.eta_post > 0.0 && self.eta_post.is_finite()) {
            return bad(format!("eta_post {} must be positive", self.eta_post));
        }
        if !(self.w_max > 0.0 && self.w_max.is_finite()) {
            return bad(format!("w_max {} must be positive", self.w_max));
        }
        if self.n_th == 0 {
            return bad("n_th must be at least 1".into());
        }
        if self.update_period == 0 {
            return bad("update_period must be at least 1".into());
        }
        if !(self.tau_pre > 0.0) {
            return bad(format!("tau_pre {} must be positive", self.tau_pre));
        }
        if let Some(t) = self.norm_target {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("norm_target {t} must be positive"));
            }
        }
        Ok(())
    }
}

/// Postsynaptic spike counts within the current presentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeStats {
    counts: Vec<u32>,
    max_n: u32,
}

impl SpikeStats {
    pub fn new(num_neurons: usize) -> Self {
        Self {
            counts: vec![0; num_neurons],
            max_n: 0,
        }
    }

    pub fn reset(&mut self) {
        self.counts.fill(0);
        self.max_n = 0;
    }

    pub fn record(&mut self, fired: &[usize]) {
        for &j in fired {
            self.counts[j] += 1;
            self.max_n = self.max_n.max(self.counts[j]);
        }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Largest per-neuron count (`maxN`).
    pub fn max_n(&self) -> u32 {
        self.max_n
    }
}

/// `k = ceil(maxN / n_th)`.
pub fn compute_k(max_n: u32, n_th: u32) -> Result<u32> {
    if n_th == 0 {
        return Err(Error::InvalidParameter("n_th must be at least 1".into()));
    }
    Ok(max_n.div_ceil(n_th))
}

/// Enhanced update at an update time: potentiates the inputs of every
/// neuron that spiked in the window.
pub fn enhanced_stdp_update(
    weights: &mut WeightMatrix,
    traces: &TraceState,
    stats: &SpikeStats,
    window_spiked: &[bool],
    cfg: &LearnConfig,
    counter: &mut OpCounts,
) -> Result<()> {
    check_dims(weights, traces, window_spiked.len())?;
    let k = compute_k(stats.max_n(), cfg.n_th)?;
    let scale = f64::from(k) * cfg.eta_post;
    if scale > 1.0 {
        return Err(Error::InvalidParameter(format!(
            "k * eta_post = {scale} exceeds 1 (k = {k}); lower eta_post or raise n_th"
        )));
    }
    let targets: Vec<usize> = window_spiked
        .iter()
        .enumerate()
        .filter_map(|(j, s)| s.then_some(j))
        .collect();
    if targets.is_empty() || k == 0 {
        return Ok(());
    }
    let n_in = weights.rows();
    let w_max = cfg.w_max;
    for i in 0..n_in {
        let x = traces.x_pre(i);
        if x == 0.0 {
            continue;
        }
        let step = scale * x;
        let row = weights.row_mut(i);
        for &j in &targets {
            let w = row[j];
            row[j] = (w + step * (w_max - w)).clamp(0.0, w_max);
        }
    }
    counter.learning_updates += (n_in * (targets.len() + 1)) as u64;
    Ok(())
}

/// Pair-wise rule, applied every timestep: each neuron spiking now gets
/// `dw = eta_post * (x_pre - x_tar) * (w_m - w)`, clamped to `[0, w_m]`.
pub fn pairwise_stdp_update(
    weights: &mut WeightMatrix,
    traces: &TraceState,
    post_spikes: &[bool],
    cfg: &LearnConfig,
    counter: &mut OpCounts,
) -> Result<()> {
    check_dims(weights, traces, post_spikes.len())?;
    let targets: Vec<usize> = post_spikes
        .iter()
        .enumerate()
        .filter_map(|(j, s)| s.then_some(j))
        .collect();
    if targets.is_empty() {
        return Ok(());
    }
    let w_max = cfg.w_max;
    for i in 0..weights.rows() {
        let step = cfg.eta_post * (traces.x_pre(i) - cfg.x_tar);
        let row = weights.row_mut(i);
        for &j in &targets {
            let w = row[j];
            row[j] = (w + step * (w_max - w)).clamp(0.0, w_max);
        }
    }
    counter.learning_updates += (weights.rows() * 2 * targets.len()) as u64;
    Ok(())
}

fn check_dims(weights: &WeightMatrix, traces: &TraceState, neurons: usize) -> Result<()> {
    if traces.len() != weights.rows() {
        return Err(Error::DimensionMismatch {
            context: "trace count vs weight rows",
            expected: weights.rows(),
            found: traces.len(),
        });
    }
    if neurons != weights.cols() {
        return Err(Error::DimensionMismatch {
            context: "neuron vector vs weight columns",
            expected: weights.cols(),
            found: neurons,
        });
    }
    Ok(())
}

/// Scales every non-zero incoming-weight column to sum to `target_sum`,
/// clamping at `w_max`.
pub fn normalize_input_weights(weights: &mut WeightMatrix, target_sum: f64, w_max: f64) -> Result<()> {
    if !(target_sum > 0.0) {
        return Err(Error::InvalidParameter(format!("target_sum {target_sum} must be positive")));
    }
    let cols = weights.cols();
    let mut sums = vec![0.0; cols];
    for i in 0..weights.rows() {
        for (s, w) in sums.iter_mut().zip(weights.row(i)) {
            *s += w;
        }
    }
    let factors: Vec<f64> = sums
        .iter()
        .map(|&s| if s > 0.0 { target_sum / s } else { 1.0 })
        .collect();
    for i in 0..weights.rows() {
        for (w, f) in weights.row_mut(i).iter_mut().zip(&factors) {
            *w = (*w * f).min(w_max);
        }
    }
    Ok(())
}

/// The enhanced rule as a presentation hook.
#[derive(Debug, Clone)]
pub struct EnhancedStdp {
    cfg: LearnConfig,
    traces: TraceState,
    stats: SpikeStats,
    window_spiked: Vec<bool>,
    updates: usize,
    k_history: Vec<u32>,
}

impl EnhancedStdp {
    pub fn new(cfg: LearnConfig, num_inputs: usize, num_neurons: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            traces: TraceState::new(num_inputs, cfg.tau_pre)?,
            stats: SpikeStats::new(num_neurons),
            window_spiked: vec![false; num_neurons],
            updates: 0,
            k_history: Vec::new(),
            cfg,
        })
    }

    pub fn config(&self) -> &LearnConfig {
        &self.cfg
    }

    /// Updates performed during the current (or last) presentation.
    pub fn updates_in_presentation(&self) -> usize {
        self.updates
    }

    /// `k` used at each update time of the current presentation.
    pub fn k_history(&self) -> &[u32] {
        &self.k_history
    }

    pub fn stats(&self) -> &SpikeStats {
        &self.stats
    }
}

impl LearningHook for EnhancedStdp {
    fn update_period(&self) -> usize {
        self.cfg.update_period
    }

    fn begin_presentation(&mut self, _model: &NetworkModel, _num_steps: usize) -> Result<()> {
        self.traces.reset();
        self.stats.reset();
        self.window_spiked.fill(false);
        self.updates = 0;
        self.k_history.clear();
        Ok(())
    }

    fn on_step(
        &mut self,
        _model: &mut NetworkModel,
        active_inputs: &[u32],
        fired: &[usize],
        counter: &mut OpCounts,
    ) -> Result<()> {
        self.traces.update_active(active_inputs);
        counter.learning_updates += active_inputs.len() as u64;
        self.stats.record(fired);
        for &j in fired {
            self.window_spiked[j] = true;
        }
        Ok(())
    }

    fn on_update(&mut self, model: &mut NetworkModel, counter: &mut OpCounts) -> Result<()> {
        enhanced_stdp_update(
            &mut model.weights,
            &self.traces,
            &self.stats,
            &self.window_spiked,
            &self.cfg,
            counter,
        )?;
        self.k_history.push(compute_k(self.stats.max_n(), self.cfg.n_th)?);
        self.window_spiked.fill(false);
        self.updates += 1;
        Ok(())
    }
}

/// The pair-wise rule as a presentation hook (no windowed updates).
#[derive(Debug, Clone)]
pub struct PairwiseStdp {
    cfg: LearnConfig,
    traces: TraceState,
    post: Vec<bool>,
}

impl PairwiseStdp {
    pub fn new(cfg: LearnConfig, num_inputs: usize, num_neurons: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            traces: TraceState::new(num_inputs, cfg.tau_pre)?,
            post: vec![false; num_neurons],
            cfg,
        })
    }
}

impl LearningHook for PairwiseStdp {
    fn update_period(&self) -> usize {
        usize::MAX
    }

    fn begin_presentation(&mut self, _model: &NetworkModel, _num_steps: usize) -> Result<()> {
        self.traces.reset();
        Ok(())
    }

    fn on_step(
        &mut self,
        model: &mut NetworkModel,
        active_inputs: &[u32],
        fired: &[usize],
        counter: &mut OpCounts,
    ) -> Result<()> {
        self.traces.update_active(active_inputs);
        counter.learning_updates += active_inputs.len() as u64;
        if fired.is_empty() {
            return Ok(());
        }
        self.post.fill(false);
        for &j in fired {
            self.post[j] = true;
        }
        pairwise_stdp_update(&mut model.weights, &self.traces, &self.post, &self.cfg, counter)
    }

    fn on_update(&mut self, _model: &mut NetworkModel, _counter: &mut OpCounts) -> Result<()> {
        Ok(())
    }
}
