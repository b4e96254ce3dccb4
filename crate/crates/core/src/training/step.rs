//! One optimizer update over a batch, each example unrolled for `k`
//! simulated interaction steps.

use rand::Rng;

use super::adam::adam_update;
use super::loss::{segmentation_loss, LossValue};
use super::TrainConfig;
use crate::error::{Error, Result};
use crate::interaction::{correction_prompts, initial_prompts, PromptSampleConfig};
use crate::network::{sigmoid, ModelParams, Network, OptimizerState, Scalar};
use crate::types::{
    encode_interactions, stack_target, ContextSet, Image, InteractionState, SegMask, TargetStack, DEFAULT_CLICK_RADIUS,
};

/// A target with its ground truth and a context drawn from the same task.
#[derive(Clone, Debug)]
pub struct TrainExample {
    pub image: Image,
    pub label: SegMask,
    pub context: ContextSet,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepReport {
    /// Batch mean of the loss summed over interaction steps.
    pub loss: LossValue,
    /// Batch mean per interaction step.
    pub per_step: Vec<LossValue>,
}

/// Gradient of the unrolled loss for one example, accumulated into `grads`.
/// The previous prediction fed to step `j + 1` is treated as a constant.
pub fn example_gradient<R: Rng + ?Sized>(
    net: &Network,
    params: &[f32],
    example: &TrainExample,
    cfg: &TrainConfig,
    prompts: &PromptSampleConfig,
    grads: &mut [f64],
    rng: &mut R,
) -> Result<Vec<LossValue>> {
    let mut local = vec![0.0f32; params.len()];
    let unroll = unroll_example(net, params, example, cfg, prompts, &mut local, rng)?;
    for (acc, g) in grads.iter_mut().zip(&local) {
        *acc += *g as f64;
    }
    Ok(unroll.losses)
}

/// The network inputs of every interaction step of one unrolled example.
/// With these fixed, the training loss is a function of the parameters only.
#[derive(Clone, Debug)]
pub struct Unroll {
    pub targets: Vec<TargetStack>,
    pub losses: Vec<LossValue>,
}

/// Runs the `k`-step interaction unroll in precision `T`, adding the
/// gradient of the summed loss to `grads`.
pub fn unroll_example<T: Scalar, R: Rng + ?Sized>(
    net: &Network,
    params: &[T],
    example: &TrainExample,
    cfg: &TrainConfig,
    prompts: &PromptSampleConfig,
    grads: &mut [T],
    rng: &mut R,
) -> Result<Unroll> {
    let context = net.context_maps::<T>(&example.context)?;
    let (h, w) = example.image.shape();
    let context_only = cfg.p_context_only > 0.0 && rng.random_bool(cfg.p_context_only);
    let mut state = if context_only {
        InteractionState::empty(h, w)
    } else {
        initial_prompts(&example.label, prompts, rng)?
    };
    let mut previous = SegMask::empty(h, w);
    let mut step_grads = vec![T::zero(); params.len()];
    let mut unroll = Unroll {
        targets: Vec::with_capacity(cfg.interaction_steps),
        losses: Vec::with_capacity(cfg.interaction_steps),
    };
    for j in 0..cfg.interaction_steps {
        if j > 0 {
            let more = correction_prompts(&example.label, &previous, prompts, rng)?;
            state.merge(&more);
        }
        let encoded = encode_interactions(&state, DEFAULT_CLICK_RADIUS)?;
        let stack = stack_target(&example.image, &encoded, Some(&previous))?;
        let (logits, tape) = net.forward_maps(params, net.target_maps::<T>(&stack)?, context.clone());
        let wide: Vec<f64> = logits.iter().map(|l| l.as_f64()).collect();
        let (loss, dlogits) = segmentation_loss(&wide, example.label.pixels(), &cfg.loss);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: j as u64,
                detail: format!("interaction step {j}: {loss:?}"),
            });
        }
        let dl: Vec<T> = dlogits.iter().map(|&g| T::lit(g)).collect();
        step_grads.iter_mut().for_each(|g| *g = T::zero());
        net.backward(params, &tape, &dl, &mut step_grads);
        for (acc, g) in grads.iter_mut().zip(&step_grads) {
            *acc += *g;
        }
        unroll.targets.push(stack);
        unroll.losses.push(loss);
        previous = SegMask::soft(h, w, wide.iter().map(|&l| sigmoid(l) as f32).collect())?;
    }
    Ok(unroll)
}

/// Summed loss of a recorded unroll evaluated at `params`.
pub fn replay_loss<T: Scalar>(net: &Network, params: &[T], targets: &[TargetStack], example: &TrainExample, cfg: &TrainConfig) -> Result<f64> {
    let context = net.context_maps::<T>(&example.context)?;
    let mut total = 0.0;
    for stack in targets {
        let (logits, _) = net.forward_maps(params, net.target_maps::<T>(stack)?, context.clone());
        let wide: Vec<f64> = logits.iter().map(|l| l.as_f64()).collect();
        total += segmentation_loss(&wide, example.label.pixels(), &cfg.loss).0.total;
    }
    Ok(total)
}

/// Accumulates the batch-mean gradient and applies one Adam update.
pub fn train_step<R: Rng + ?Sized>(
    net: &Network,
    params: &mut ModelParams,
    optimizer: &mut OptimizerState,
    batch: &[TrainExample],
    cfg: &TrainConfig,
    prompts: &PromptSampleConfig,
    rng: &mut R,
) -> Result<StepReport> {
    if batch.is_empty() {
        return Err(Error::input("empty training batch"));
    }
    let mut grads = vec![0.0f64; params.values.len()];
    let mut report = StepReport {
        per_step: vec![LossValue::default(); cfg.interaction_steps],
        ..Default::default()
    };
    for example in batch {
        let losses = example_gradient(net, &params.values, example, cfg, prompts, &mut grads, rng)?;
        for (acc, l) in report.per_step.iter_mut().zip(&losses) {
            acc.add(l);
            report.loss.add(l);
        }
    }
    let scale = 1.0 / batch.len() as f64;
    grads.iter_mut().for_each(|g| *g *= scale);
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss {
            step: optimizer.step,
            detail: "non-finite gradient".into(),
        });
    }
    report.loss = report.loss.scaled(scale);
    report.per_step.iter_mut().for_each(|l| *l = l.scaled(scale));
    adam_update(&mut params.values, &grads, optimizer, cfg.learning_rate, &cfg.adam);
    Ok(report)
}
