//! Trains a model on toy shape families and reports held-out trends.
//! Arguments are `key=value` pairs, e.g. `steps=2000 lr=1e-3 features=16`.

use std::collections::HashMap;
use std::time::Instant;

use ctxseg_core::data::toy::{toy_corpus, ToyConfig, ToySource};
use ctxseg_core::evaluation::{mean_dice, mean_noi_by_position, run_interactive_incontext, run_sequential_many, ContextLabelMode, ProtocolConfig, SweepConfig};
use ctxseg_core::interaction::{PromptSampleConfig, Protocol};
use ctxseg_core::network::{Model, ModelConfig};
use ctxseg_core::synthetic::{AugmentationSpec, Pipeline, SynthConfig};
use ctxseg_core::training::{train, TrainConfig, TrainSetup};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: HashMap<String, String> = std::env::args()
        .skip(1)
        .filter_map(|a| a.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();
    let get = |k: &str, d: &str| args.get(k).cloned().unwrap_or_else(|| d.to_string());
    let steps: u64 = get("steps", "500").parse()?;
    let model = ModelConfig {
        features: get("features", "16").parse()?,
        ..ModelConfig::desk()
    };
    let toy = ToyConfig::default();
    let train_cfg = TrainConfig {
        learning_rate: get("lr", "1e-3").parse()?,
        batch_size: get("batch", "2").parse()?,
        max_context: get("max_context", "8").parse()?,
        p_synth: get("p_synth", "0.0").parse()?,
        p_context_only: get("p_context_only", "0.25").parse()?,
        total_steps: steps,
        eval_every: get("eval_every", "250").parse()?,
        probe_context: 8,
        val_examples_per_task: 4,
        seed: get("seed", "1").parse()?,
        ..TrainConfig::default()
    };
    let mut aug = AugmentationSpec::default();
    match get("aug", "within").as_str() {
        "none" => aug = AugmentationSpec::identity(),
        "within" => aug.task_level = Pipeline::identity(),
        _ => {}
    }
    let val = toy_corpus(&toy, 8, [16, 8, 0], 0xA11);
    let held = toy_corpus(&toy, get("tasks", "12").parse()?, [16, 0, 24], 0xBEEF);
    let source = ToySource { cfg: toy.clone(), root_seed: 7 };
    let setup = TrainSetup {
        model: model.clone(),
        train: train_cfg,
        augmentation: aug,
        synth: SynthConfig::default(),
        prompts: PromptSampleConfig::for_resolution(64),
        source: &source,
        validation: &val.tasks,
        out_dir: None,
    };
    let t = Instant::now();
    let mut acc = 0.0;
    let out = train(&setup, None, &mut |r| {
        acc += r.loss_total;
        if r.step % 50 == 0 {
            eprintln!("step {} loss {:.4} val {:?} t={:.0}s", r.step, acc / 50.0, r.val_dice, t.elapsed().as_secs_f64());
            acc = 0.0;
        }
    })?;
    eprintln!("trained in {:.0}s, best val {:?}", t.elapsed().as_secs_f64(), out.best_val_dice);
    let ck = out.best.unwrap_or(out.last);
    if let Some(p) = args.get("save") {
        ck.save(std::path::Path::new(p))?;
    }
    let m = Model::new(ck.params)?;
    let t = Instant::now();
    let sweep = SweepConfig {
        context_sizes: vec![1, 8],
        predictions_per_example: 1,
        examples_per_task: Some(8),
        seed: 5,
    };
    let rows = run_interactive_incontext(&m, &held.tasks, &sweep, Protocol::CenterClicks, 3)?;
    for s in 0..=3 {
        eprintln!("step {s}: ctx1 {:.4} ctx8 {:.4}", mean_dice(&rows, 1, s), mean_dice(&rows, 8, s));
    }
    eprintln!("sweep {:.0}s", t.elapsed().as_secs_f64());
    let runs: usize = get("runs", "0").parse()?;
    for protocol in [Protocol::CenterClicks, Protocol::CenterlineScribbles] {
        if runs == 0 {
            break;
        }
        for mode in [ContextLabelMode::BinaryPred, ContextLabelMode::GroundTruth] {
            let t = Instant::now();
            let cfg = ProtocolConfig {
                protocol,
                num_images: 12,
                num_simulations: runs,
                context_label_mode: mode,
                seed: 3,
                ..ProtocolConfig::default()
            };
            let traces = run_sequential_many(&m, &held.tasks, &cfg)?;
            let noi = mean_noi_by_position(&traces);
            let a = noi[..3].iter().sum::<f64>() / 3.0;
            let b = noi[8..12].iter().sum::<f64>() / 4.0;
            eprintln!("{protocol:?} {mode:?}: 1-3 {a:.3} 9-12 {b:.3} all {:?} ({:.0}s)", noi.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>(), t.elapsed().as_secs_f64());
        }
    }
    Ok(())
}
