use ctxseg_core::network::{count_params, Maps, ModelConfig, Network};
use rand::SeedableRng;
use std::time::Instant;

fn main() {
    let cfg = ModelConfig::desk();
    let net = Network::new(&cfg).unwrap();
    println!("params {}", count_params(&cfg).unwrap());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let p: Vec<f32> = net.init_params(&mut rng);
    for n in [1usize, 4, 8, 16] {
        let t = Maps::from_vec(1, 5, 64, 64, vec![0.3; 5 * 4096]);
        let c = Maps::from_vec(n, 2, 64, 64, vec![0.4; n * 2 * 4096]);
        let s = Instant::now();
        let reps = 5;
        for _ in 0..reps {
            let (l, tape) = net.forward_maps(&p, t.clone(), c.clone());
            let mut g = vec![0.0; p.len()];
            net.backward(&p, &tape, &l, &mut g);
        }
        let fb = s.elapsed().as_secs_f64() / reps as f64;
        let s = Instant::now();
        for _ in 0..reps {
            let _ = net.forward_maps(&p, t.clone(), c.clone());
        }
        println!("n={n} fwd+bwd {:.3}s fwd {:.3}s", fb, s.elapsed().as_secs_f64() / reps as f64);
    }
}
