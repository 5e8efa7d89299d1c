//! Experiment configuration: a flat TOML table.
//!
//! Every key except `data_dir` has a default (see [`defaults_toml`]);
//! unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoding::{DEFAULT_NUM_STEPS, DEFAULT_RATE_SCALE};
use crate::error::{Error, Result};
use crate::fixedpoint::{ParamFormat, RoundingMode};
use crate::learning::LearnConfig;
use crate::metrics::{EnergyMode, EnergyModel, OpEnergy};
use crate::network::LayerParams;
use crate::quant::{Groups, QuantConfig, Scheme};
use crate::training::Rule;

// Desk-scale tuning (100 neurons, 5000 samples). A drive of tens of
// potential units per window needs a threshold and an inhibition of the
// same order, or all neurons fire in lockstep and never specialize.
pub const DESK_V_THRESH_BASE: f64 = 20.0;
pub const DESK_W_INH: f64 = 100.0;
pub const DESK_THETA_INC: f64 = 0.2;
pub const DESK_TAU_THETA: f64 = 1e6;
pub const DESK_NORM_TARGET: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSplit {
    /// Label neurons on the training samples themselves.
    Train,
    /// Label neurons on the training-file samples that follow the training
    /// subset.
    Heldout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleName {
    Enhanced,
    Pairwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Directory with `{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]`.
    pub data_dir: PathBuf,
    /// Name written to reports; defaults to the directory name.
    pub dataset: Option<String>,

    pub num_excitatory: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Number of labelling samples; defaults to `train_samples`.
    pub label_samples: Option<usize>,
    pub label_split: LabelSplit,
    pub epochs: usize,
    pub seed: u64,
    pub jobs: usize,

    pub num_steps: usize,
    pub rate_scale: f64,

    pub v_rest: f64,
    pub v_reset: f64,
    pub v_thresh_base: f64,
    pub tau_mem: f64,
    pub theta_inc: f64,
    pub tau_theta: f64,
    pub t_refrac: u32,
    pub w_inh: f64,

    /// Initial weights are uniform in `[0, init_w_max)`.
    pub init_w_max: f64,
    pub rule: RuleName,
    pub eta_post: f64,
    pub w_max: f64,
    pub n_th: u32,
    pub update_period: usize,
    pub tau_pre: f64,
    pub x_tar: f64,
    /// Incoming weight sum per neuron; 0 disables normalization.
    pub norm_target: f64,

    /// Single-model quantization (`ptq`, `itq`).
    pub scheme: Scheme,
    pub rounding: RoundingMode,
    pub groups: Groups,
    pub wfmt: ParamFormat,
    pub vmemfmt: ParamFormat,
    pub vthfmt: ParamFormat,

    /// Sweep grid. Integer bits of each format come from observed ranges.
    pub schemes: Vec<Scheme>,
    pub roundings: Vec<RoundingMode>,
    pub bitwidths: Vec<u32>,
    pub group_sets: Vec<Groups>,
    /// Calibration samples for range observation.
    pub calibration_samples: usize,

    /// Trade-off coefficients; the report is scored at the first.
    pub mu: Vec<f64>,
    pub mem_budget_bits: Option<u64>,
    pub energy_budget_j: Option<f64>,

    pub energy_mode: EnergyMode,
    /// Per-op energies at 32-bit operands, picojoules.
    pub e_synaptic_pj: f64,
    pub e_neuron_pj: f64,
    pub e_learning_pj: f64,
    pub e_inhibition_pj: f64,
    pub power_watts: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let layer = LayerParams::default();
        let learn = LearnConfig::default();
        let energy = EnergyModel::default();
        Self {
            data_dir: PathBuf::new(),
            dataset: None,
            num_excitatory: 100,
            train_samples: 5000,
            test_samples: 1000,
            label_samples: None,
            label_split: LabelSplit::Train,
            epochs: 1,
            seed: 1,
            jobs: 1,
            num_steps: DEFAULT_NUM_STEPS,
            rate_scale: DEFAULT_RATE_SCALE,
            v_rest: layer.v_rest,
            v_reset: layer.v_reset,
            v_thresh_base: DESK_V_THRESH_BASE,
            tau_mem: layer.tau_mem,
            theta_inc: DESK_THETA_INC,
            tau_theta: DESK_TAU_THETA,
            t_refrac: layer.t_refrac,
            w_inh: DESK_W_INH,
            init_w_max: 0.3,
            rule: RuleName::Enhanced,
            eta_post: learn.eta_post,
            w_max: learn.w_max,
            n_th: learn.n_th,
            update_period: learn.update_period,
            tau_pre: learn.tau_pre,
            x_tar: learn.x_tar,
            norm_target: DESK_NORM_TARGET,
            scheme: Scheme::Ptq,
            rounding: RoundingMode::Truncate,
            groups: Groups::QW,
            wfmt: "qu1.7".parse().expect("valid literal"),
            vmemfmt: ParamFormat::Fp32,
            vthfmt: ParamFormat::Fp32,
            schemes: vec![Scheme::Ptq, Scheme::Itq],
            roundings: RoundingMode::ALL.to_vec(),
            bitwidths: vec![4, 6, 8, 16],
            group_sets: vec![Groups::QW, Groups::QWN],
            calibration_samples: 100,
            mu: vec![0.1],
            mem_budget_bits: None,
            energy_budget_j: None,
            energy_mode: EnergyMode::OpCount,
            e_synaptic_pj: energy.coeffs.synaptic_accumulate * 1e12,
            e_neuron_pj: energy.coeffs.neuron_update * 1e12,
            e_learning_pj: energy.coeffs.learning_update * 1e12,
            e_inhibition_pj: energy.coeffs.inhibition_event * 1e12,
            power_watts: energy.power_watts,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.data_dir.as_os_str().is_empty() {
            return bad("missing required key `data_dir`".into());
        }
        if self.num_excitatory == 0 {
            return bad("num_excitatory must be at least 1".into());
        }
        if self.train_samples == 0 || self.test_samples == 0 || self.epochs == 0 {
            return bad("train_samples, test_samples and epochs must be at least 1".into());
        }
        if self.label_samples == Some(0) {
            return bad("label_samples must be at least 1".into());
        }
        if self.num_steps == 0 {
            return bad("num_steps must be at least 1".into());
        }
        if !(self.init_w_max >= 0.0 && self.init_w_max <= self.w_max) {
            return bad(format!("init_w_max {} must lie in [0, w_max]", self.init_w_max));
        }
        if self.mu.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return bad("every mu must be a non-negative real".into());
        }
        if self.calibration_samples == 0 {
            return bad("calibration_samples must be at least 1".into());
        }
        if self.bitwidths.iter().any(|&b| b == 0 || b > crate::fixedpoint::MAX_TOTAL_BITS) {
            return bad("bitwidths must lie in 1..=32".into());
        }
        self.layer_params().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.learn_config().validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn dataset_name(&self) -> String {
        self.dataset.clone().unwrap_or_else(|| {
            self.data_dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }

    pub fn layer_params(&self) -> LayerParams {
        LayerParams {
            v_rest: self.v_rest,
            v_reset: self.v_reset,
            v_thresh_base: self.v_thresh_base,
            tau_mem: self.tau_mem,
            theta_inc: self.theta_inc,
            tau_theta: self.tau_theta,
            t_refrac: self.t_refrac,
            w_inh: self.w_inh,
        }
    }

    pub fn learn_config(&self) -> LearnConfig {
        LearnConfig {
            eta_post: self.eta_post,
            w_max: self.w_max,
            n_th: self.n_th,
            update_period: self.update_period,
            tau_pre: self.tau_pre,
            x_tar: self.x_tar,
            norm_target: (self.norm_target > 0.0).then_some(self.norm_target),
        }
    }

    pub fn rule(&self) -> Rule {
        match self.rule {
            RuleName::Enhanced => Rule::Enhanced,
            RuleName::Pairwise => Rule::Pairwise,
        }
    }

    /// The single-model quantization configuration.
    pub fn quant_config(&self) -> QuantConfig {
        QuantConfig {
            scheme: self.scheme,
            rounding: self.rounding,
            groups: self.groups,
            weights: self.wfmt,
            v_mem: self.vmemfmt,
            v_thresh: self.vthfmt,
        }
    }

    pub fn energy_model(&self) -> EnergyModel {
        const PJ: f64 = 1e-12;
        EnergyModel {
            mode: self.energy_mode,
            coeffs: OpEnergy {
                synaptic_accumulate: self.e_synaptic_pj * PJ,
                neuron_update: self.e_neuron_pj * PJ,
                learning_update: self.e_learning_pj * PJ,
                inhibition_event: self.e_inhibition_pj * PJ,
            },
            power_watts: self.power_watts,
        }
    }

    pub fn label_count(&self) -> usize {
        self.label_samples.unwrap_or(self.train_samples)
    }
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_toml(&text)
}

/// The default configuration rendered as TOML, for `--help`.
pub fn defaults_toml() -> String {
    let mut d = ExperimentConfig::default();
    d.data_dir = PathBuf::from("<required>");
    toml::to_string(&d).expect("default config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::FixedPointFormat;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_toml("data_dir = \"data/mnist\"").unwrap();
        assert_eq!(c.num_excitatory, 100);
        assert_eq!(c.train_samples, 5000);
        assert_eq!(c.test_samples, 1000);
        assert_eq!(c.dataset_name(), "mnist");
        assert_eq!(c.label_count(), 5000);
    }

    #[test]
    fn q_notation() {
        let c = ExperimentConfig::from_toml("data_dir = \"d\"\nwfmt = \"qu0.8\"").unwrap();
        assert_eq!(c.wfmt, ParamFormat::Fixed(FixedPointFormat::new(false, 0, 8).unwrap()));
        assert!(ExperimentConfig::from_toml("data_dir = \"d\"\nwfmt = \"qx0.8\"").is_err());
    }

    #[test]
    fn unknown_key_is_named() {
        let e = ExperimentConfig::from_toml("data_dir = \"d\"\nneurnos = 400").unwrap_err();
        assert!(e.to_string().contains("neurnos"), "{e}");
    }

    #[test]
    fn data_dir_is_required() {
        let e = ExperimentConfig::from_toml("seed = 3").unwrap_err();
        assert!(e.to_string().contains("data_dir"), "{e}");
    }

    #[test]
    fn defaults_render_and_reparse() {
        let text = defaults_toml();
        let c = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(c.bitwidths, vec![4, 6, 8, 16]);
        assert!(text.contains("wfmt = \"qu1.7\""), "{text}");
    }
}
