use ctxseg_core::data::toy::{ToyConfig, ToySource};
use ctxseg_core::interaction::PromptSampleConfig;
use ctxseg_core::network::{Checkpoint, ModelConfig, Network, OptimizerState};
use ctxseg_core::synthetic::{AugmentationSpec, SynthConfig};
use ctxseg_core::training::{
    check_training_gradient, example_gradient, initial_params, train, train_step, unroll_example, TrainConfig,
    TrainExample, TrainSetup,
};
use ctxseg_core::{ContextSet, Image, SegMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_model(res: usize) -> ModelConfig {
    ModelConfig {
        resolution: res,
        features: 8,
        encoder_stages: 2,
        decoder_stages: 1,
        ..ModelConfig::desk()
    }
}

fn disc(rng: &mut impl Rng, res: usize) -> (Image, SegMask) {
    let s = res as f32;
    let (cy, cx) = (rng.random_range(0.3..0.7) * s, rng.random_range(0.3..0.7) * s);
    let rad = rng.random_range(0.15..0.3) * s;
    let inside = |i: usize| {
        let (y, x) = ((i / res) as f32 + 0.5, (i % res) as f32 + 0.5);
        (y - cy).powi(2) + (x - cx).powi(2) <= rad * rad
    };
    let img = (0..res * res).map(|i| if inside(i) { 0.8 } else { 0.2 } + rng.random_range(-0.05..0.05)).collect();
    let lab = (0..res * res).map(|i| if inside(i) { 1.0 } else { 0.0 }).collect();
    (Image::new(res, res, img).unwrap(), SegMask::hard(res, res, lab).unwrap())
}

fn disc_example(seed: u64, res: usize, context: usize) -> TrainExample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (image, label) = disc(&mut rng, res);
    let entries = (0..context).map(|_| disc(&mut rng, res)).collect();
    TrainExample {
        image,
        label,
        context: ContextSet::from_entries(entries).unwrap(),
    }
}

fn short_config(steps: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-3,
        max_context: 3,
        total_steps: steps,
        checkpoint_every: 5,
        eval_every: 0,
        seed: 11,
        ..TrainConfig::default()
    }
}

fn toy_source() -> ToySource {
    ToySource {
        cfg: ToyConfig {
            resolution: 16,
            ..ToyConfig::default()
        },
        root_seed: 3,
    }
}

fn setup<'a>(source: &'a ToySource, train_cfg: TrainConfig) -> TrainSetup<'a> {
    TrainSetup {
        model: tiny_model(16),
        train: train_cfg,
        augmentation: AugmentationSpec::default(),
        synth: SynthConfig::default(),
        prompts: PromptSampleConfig::for_resolution(16),
        source,
        validation: &[],
        out_dir: None,
    }
}

#[test]
fn hundred_steps_with_all_augmentations_stay_finite() {
    let source = toy_source();
    let out = train(&setup(&source, short_config(100)), None, &mut |_| {}).unwrap();
    assert_eq!(out.log.len(), 100);
    assert!(out.log.iter().all(|r| r.loss_total.is_finite()));
    assert!(out.last.params.values.iter().all(|v| v.is_finite()));
}

#[test]
fn overfits_a_single_batch() {
    let model = tiny_model(16);
    let net = Network::new(&model).unwrap();
    let mut params = initial_params(&model, 1).unwrap();
    let mut opt = OptimizerState::new(net.num_params());
    let batch = vec![disc_example(1, 16, 2), disc_example(2, 16, 2)];
    let cfg = TrainConfig {
        learning_rate: 3e-3,
        ..short_config(0)
    };
    let prompts = PromptSampleConfig::for_resolution(16);
    let mut first = None;
    let mut last = f64::INFINITY;
    for step in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(step);
        let r = train_step(&net, &mut params, &mut opt, &batch, &cfg, &prompts, &mut rng).unwrap();
        first.get_or_insert(r.loss.total);
        last = r.loss.total;
    }
    let first = first.unwrap();
    assert!(last < 0.2 * first, "loss {first} -> {last}");
}

#[test]
fn nearly_every_parameter_receives_gradient() {
    let model = tiny_model(16);
    let net = Network::new(&model).unwrap();
    let params = initial_params(&model, 2).unwrap();
    let mut grads = vec![0.0f64; net.num_params()];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cfg = short_config(0);
    let prompts = PromptSampleConfig::for_resolution(16);
    example_gradient(&net, &params.values, &disc_example(4, 16, 3), &cfg, &prompts, &mut grads, &mut rng).unwrap();
    let nonzero = grads.iter().filter(|g| **g != 0.0).count();
    assert!(nonzero as f64 >= 0.99 * grads.len() as f64, "{nonzero} of {}", grads.len());
}

#[test]
fn training_is_bit_reproducible() {
    let source = toy_source();
    let a = train(&setup(&source, short_config(10)), None, &mut |_| {}).unwrap();
    let b = train(&setup(&source, short_config(10)), None, &mut |_| {}).unwrap();
    let bits = |c: &Checkpoint| c.params.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.last), bits(&b.last));
    assert_eq!(a.log, b.log);
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let source = toy_source();
    let dir = tempfile::tempdir().unwrap();
    let straight = train(&setup(&source, short_config(10)), None, &mut |_| {}).unwrap();

    let mut first = setup(&source, short_config(5));
    first.out_dir = Some(dir.path().to_path_buf());
    train(&first, None, &mut |_| {}).unwrap();
    let ck = Checkpoint::load(&dir.path().join("last.ckpt")).unwrap();
    assert_eq!(ck.step, 5);
    let mut second = setup(&source, short_config(10));
    second.out_dir = Some(dir.path().to_path_buf());
    let resumed = train(&second, Some(ck), &mut |_| {}).unwrap();

    assert_eq!(straight.last.params.values, resumed.last.params.values);
    assert_eq!(straight.last.optimizer, resumed.last.optimizer);
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11, "header plus ten rows");
}

#[test]
fn zero_steps_writes_the_initial_checkpoint() {
    let source = toy_source();
    let dir = tempfile::tempdir().unwrap();
    let mut s = setup(&source, short_config(0));
    s.out_dir = Some(dir.path().to_path_buf());
    let out = train(&s, None, &mut |_| {}).unwrap();
    let ck = Checkpoint::load(&dir.path().join("last.ckpt")).unwrap();
    assert_eq!(ck.step, 0);
    assert_eq!(ck.params.values, initial_params(&s.model, s.train.seed).unwrap().values);
    assert!(out.log.is_empty());
}

#[test]
fn loss_is_dice_plus_focal_per_step() {
    let model = tiny_model(16);
    let net = Network::new(&model).unwrap();
    let mut params = initial_params(&model, 5).unwrap();
    let mut opt = OptimizerState::new(net.num_params());
    let cfg = short_config(0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let batch = vec![disc_example(6, 16, 1)];
    let r = train_step(&net, &mut params, &mut opt, &batch, &cfg, &PromptSampleConfig::for_resolution(16), &mut rng).unwrap();
    assert_eq!(r.per_step.len(), cfg.interaction_steps);
    for l in &r.per_step {
        assert!((l.total - l.dice - l.focal).abs() < 1e-12);
    }
    let summed: f64 = r.per_step.iter().map(|l| l.total).sum();
    assert!((summed - r.loss.total).abs() < 1e-9);
}

#[test]
fn training_loss_gradient_matches_finite_differences() {
    let model = tiny_model(8);
    let net = Network::new(&model).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params: Vec<f64> = net.init_params(&mut rng);
    let example = disc_example(9, 8, 2);
    let cfg = short_config(0);
    let report = check_training_gradient(&net, &params, &example, &cfg, &PromptSampleConfig::for_resolution(8), 3, 1e-6, 1e-6).unwrap();
    assert!(report.max_relative_error < 1e-4, "{report:?}");
}

#[test]
fn context_only_option_clears_the_first_step_prompts() {
    let model = tiny_model(16);
    let net = Network::new(&model).unwrap();
    let params: Vec<f32> = initial_params(&model, 2).unwrap().values;
    let example = disc_example(5, 16, 2);
    let prompts = PromptSampleConfig::for_resolution(16);
    let prompt_mass = |p: f64| {
        let cfg = TrainConfig {
            p_context_only: p,
            ..short_config(0)
        };
        let mut grads = vec![0.0f32; params.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let unroll = unroll_example(&net, &params, &example, &cfg, &prompts, &mut grads, &mut rng).unwrap();
        assert_eq!(unroll.targets.len(), cfg.interaction_steps);
        (1..=3).map(|c| unroll.targets[0].channel(c).iter().sum::<f32>()).sum::<f32>()
    };
    assert_eq!(prompt_mass(1.0), 0.0);
    assert!(prompt_mass(0.0) > 0.0);
    let bad = TrainConfig {
        p_context_only: 1.5,
        ..short_config(0)
    };
    assert!(bad.validate().is_err());
}
