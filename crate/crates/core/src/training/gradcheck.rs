//! Finite-difference verification of the training gradient in `f64`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::step::{replay_loss, unroll_example, TrainExample};
use super::TrainConfig;
use crate::error::Result;
use crate::interaction::PromptSampleConfig;
use crate::network::Network;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub num_params: usize,
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_relative_error: f64,
    pub worst_param: usize,
    pub loss: f64,
}

/// Compares the analytic gradient of the unrolled training loss of `example`
/// against central differences with step `h`, for every parameter. The
/// interaction sequence is recorded once at `params` and held fixed.
#[allow(clippy::too_many_arguments)]
pub fn check_training_gradient(
    net: &Network,
    params: &[f64],
    example: &TrainExample,
    cfg: &TrainConfig,
    prompts: &PromptSampleConfig,
    seed: u64,
    h: f64,
    floor: f64,
) -> Result<GradCheckReport> {
    let mut grads = vec![0.0f64; params.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unroll = unroll_example(net, params, example, cfg, prompts, &mut grads, &mut rng)?;
    let loss = replay_loss(net, params, &unroll.targets, example, cfg)?;
    let mut p = params.to_vec();
    let mut report = GradCheckReport {
        num_params: params.len(),
        max_relative_error: 0.0,
        worst_param: 0,
        loss,
    };
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = replay_loss(net, &p, &unroll.targets, example, cfg)?;
        p[i] = orig - h;
        let down = replay_loss(net, &p, &unroll.targets, example, cfg)?;
        p[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let rel = (numeric - grads[i]).abs() / numeric.abs().max(grads[i].abs()).max(floor);
        if rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst_param = i;
        }
    }
    Ok(report)
}
