use ctxseg_core::network::ops::{cross_conv_concatenated, cross_conv_partitioned};
use ctxseg_core::network::{count_params, ModelConfig, Maps, Network};
use ctxseg_core::{ContextSet, EncodedPrompts, Image, SegMask, TargetStack};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(rng: &mut impl Rng, r: usize) -> Image {
    Image::new(r, r, (0..r * r).map(|_| rng.random::<f32>()).collect()).unwrap()
}

fn random_mask(rng: &mut impl Rng, r: usize) -> SegMask {
    SegMask::hard(r, r, (0..r * r).map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 }).collect()).unwrap()
}

fn random_target(rng: &mut impl Rng, r: usize) -> TargetStack {
    let img = random_image(rng, r);
    ctxseg_core::stack_target(&img, &EncodedPrompts::zeros(r, r), None).unwrap()
}

fn tiny_config(res: usize) -> ModelConfig {
    ModelConfig {
        resolution: res,
        features: 8,
        encoder_stages: 2,
        decoder_stages: 1,
        ..ModelConfig::desk()
    }
}

#[test]
fn parameter_count_matches_closed_form() {
    for (c, e) in [(16usize, 4usize), (8, 2), (4, 1), (256, 5)] {
        let cfg = ModelConfig {
            features: c,
            encoder_stages: e,
            decoder_stages: e - 1,
            resolution: 1 << (e + 2),
            ..ModelConfig::desk()
        };
        let k2 = 9;
        let block = |iq: usize, iv: usize, has_v: bool| {
            let mut n = c * iq * k2 + c + c * iv * k2 + 2 * c + c * c * k2 + c + 2 * c;
            if has_v {
                n += c * c * k2 + c + 2 * c;
            }
            n
        };
        let mut want = 0;
        for s in 0..e {
            let (iq, iv) = if s == 0 { (5, 2) } else { (c, c) };
            want += block(iq, iv, !(e == 1 && s == 0));
        }
        for s in 0..e - 1 {
            want += block(2 * c, 2 * c, s + 2 != e);
        }
        want += c + 1;
        assert_eq!(count_params(&cfg).unwrap(), want, "c={c} e={e}");
    }
}

#[test]
fn context_order_does_not_change_logits() {
    let cfg = ModelConfig {
        resolution: 32,
        ..ModelConfig::desk()
    };
    let net = Network::new(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params: Vec<f32> = net.init_params(&mut rng);
    let target = random_target(&mut rng, 32);
    let entries: Vec<_> = (0..5).map(|_| (random_image(&mut rng, 32), random_mask(&mut rng, 32))).collect();
    let a = net.predict(&params, &target, &ContextSet::from_entries(entries.clone()).unwrap()).unwrap();
    let mut rev = entries;
    rev.reverse();
    let b = net.predict(&params, &target, &ContextSet::from_entries(rev).unwrap()).unwrap();
    let diff = a.logits.iter().zip(&b.logits).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
    assert!(diff <= 1e-5, "max diff {diff}");
}

#[test]
fn empty_context_equals_dummy_entry() {
    let cfg = tiny_config(16);
    let net = Network::new(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params: Vec<f32> = net.init_params(&mut rng);
    let target = random_target(&mut rng, 16);
    let empty = net.predict(&params, &target, &ContextSet::new()).unwrap();
    let dummy = ContextSet::from_entries(vec![(
        Image::filled(16, 16, 0.5),
        SegMask::soft(16, 16, vec![0.5; 256]).unwrap(),
    )])
    .unwrap();
    let explicit = net.predict(&params, &target, &dummy).unwrap();
    assert_eq!(empty.logits, explicit.logits);
}

#[test]
fn partitioned_cross_conv_equals_concatenation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (qc, vc, oc, k, h) = (5, 2, 6, 3, 9);
    let mut rand_vec = |n: usize| (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect::<Vec<_>>();
    let q = Maps::from_vec(1, qc, h, h, rand_vec(qc * h * h));
    let v = Maps::from_vec(4, vc, h, h, rand_vec(4 * vc * h * h));
    let wq = rand_vec(oc * qc * k * k);
    let wv = rand_vec(oc * vc * k * k);
    let b = rand_vec(oc);
    let a = cross_conv_partitioned(&q, &v, &wq, &wv, &b, oc, k);
    let c = cross_conv_concatenated(&q, &v, &wq, &wv, &b, oc, k);
    let diff = a.data.iter().zip(&c.data).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
    assert!(diff <= 1e-5, "max diff {diff}");
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let cfg = tiny_config(8);
    let net = Network::new(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let params: Vec<f64> = net.init_params(&mut rng);
    let target = Maps::from_vec(1, 5, 8, 8, (0..5 * 64).map(|_| rng.random::<f64>()).collect());
    let context = Maps::from_vec(3, 2, 8, 8, (0..3 * 2 * 64).map(|_| rng.random::<f64>()).collect());
    let weights: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |p: &[f64]| {
        let (l, _) = net.forward_maps(p, target.clone(), context.clone());
        l.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>()
    };
    let (_, tape) = net.forward_maps(&params, target.clone(), context.clone());
    let mut grads = vec![0.0; params.len()];
    net.backward(&params, &tape, &weights, &mut grads);
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut p = params.clone();
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = loss(&p);
        p[i] = orig - h;
        let down = loss(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let rel = (numeric - grads[i]).abs() / numeric.abs().max(grads[i].abs()).max(1e-6);
        worst = worst.max(rel);
    }
    assert!(worst < 1e-4, "worst relative error {worst}");
}
