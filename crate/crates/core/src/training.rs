//! Unsupervised training loop shared by fp32 training and in-training
//! quantization.

use std::borrow::Borrow;

use crate::encoding::SpikeTrain;
use crate::error::Result;
use crate::learning::{normalize_input_weights, EnhancedStdp, LearnConfig, PairwiseStdp};
use crate::metrics::OpCounts;
use crate::network::{LearningHook, NetworkModel};
use crate::quant::Requantizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rule {
    #[default]
    Enhanced,
    Pairwise,
}

/// Hook wrapper that re-quantizes the model after every weight update.
struct Requantizing<'a, H> {
    inner: H,
    requant: &'a mut Requantizer,
}

impl<H: LearningHook> LearningHook for Requantizing<'_, H> {
    fn update_period(&self) -> usize {
        self.inner.update_period()
    }

    fn begin_presentation(&mut self, model: &NetworkModel, num_steps: usize) -> Result<()> {
        self.inner.begin_presentation(model, num_steps)
    }

    fn on_step(
        &mut self,
        model: &mut NetworkModel,
        active_inputs: &[u32],
        fired: &[usize],
        counter: &mut OpCounts,
    ) -> Result<()> {
        self.inner.on_step(model, active_inputs, fired, counter)?;
        // the pair-wise rule writes weights on every postsynaptic spike
        if self.inner.update_period() == usize::MAX && !fired.is_empty() {
            self.requant.requantize_weights(model)?;
        }
        Ok(())
    }

    fn on_update(&mut self, model: &mut NetworkModel, counter: &mut OpCounts) -> Result<()> {
        self.inner.on_update(model, counter)?;
        self.requant.requantize_weights(model)
    }
}

/// Presents every sample of `stream` once with plasticity on.
///
/// When the config carries a normalization target, incoming weights are
/// normalized before each sample. With a [`Requantizer`] the enabled
/// groups are put on their grids first and re-quantized after every
/// normalization and weight update.
pub fn train<I>(
    model: &mut NetworkModel,
    stream: I,
    learn: &LearnConfig,
    rule: Rule,
    mut requant: Option<&mut Requantizer>,
    counter: &mut OpCounts,
) -> Result<()>
where
    I: IntoIterator,
    I::Item: Borrow<SpikeTrain>,
{
    learn.validate()?;
    if let Some(rq) = requant.as_deref_mut() {
        rq.quantize_model(model)?;
    }
    let (n_in, n_exc) = (model.num_inputs(), model.num_excitatory());
    let mut enhanced = EnhancedStdp::new(*learn, n_in, n_exc)?;
    let mut pairwise = PairwiseStdp::new(*learn, n_in, n_exc)?;
    for sample in stream {
        if let Some(target) = learn.norm_target {
            normalize_input_weights(&mut model.weights, target, learn.w_max)?;
            if let Some(rq) = requant.as_deref_mut() {
                rq.requantize_weights(model)?;
            }
        }
        let train = sample.borrow();
        match (rule, requant.as_deref_mut()) {
            (Rule::Enhanced, None) => {
                model.present_sample(train, Some(&mut enhanced), counter)?;
            }
            (Rule::Pairwise, None) => {
                model.present_sample(train, Some(&mut pairwise), counter)?;
            }
            (Rule::Enhanced, Some(rq)) => {
                let mut hook = Requantizing {
                    inner: &mut enhanced,
                    requant: rq,
                };
                model.present_sample(train, Some(&mut hook), counter)?;
            }
            (Rule::Pairwise, Some(rq)) => {
                let mut hook = Requantizing {
                    inner: &mut pairwise,
                    requant: rq,
                };
                model.present_sample(train, Some(&mut hook), counter)?;
            }
        }
    }
    model.reset_dynamic_state();
    Ok(())
}

impl<H: LearningHook + ?Sized> LearningHook for &mut H {
    fn update_period(&self) -> usize {
        (**self).update_period()
    }

    fn begin_presentation(&mut self, model: &NetworkModel, num_steps: usize) -> Result<()> {
        (**self).begin_presentation(model, num_steps)
    }

    fn on_step(
        &mut self,
        model: &mut NetworkModel,
        active_inputs: &[u32],
        fired: &[usize],
        counter: &mut OpCounts,
    ) -> Result<()> {
        (**self).on_step(model, active_inputs, fired, counter)
    }

    fn on_update(&mut self, model: &mut NetworkModel, counter: &mut OpCounts) -> Result<()> {
        (**self).on_update(model, counter)
    }
}
