use ctxseg_core::data::io::write_png_gray;
use ctxseg_core::data::toy::{ToyConfig, ToyFamily};

fn main() {
    let cfg = ToyConfig::default();
    let s = cfg.resolution;
    let (cols, rows) = (6usize, 4usize);
    let (gw, gh) = (cols * s * 2, rows * s);
    let mut canvas = vec![0.0f32; gw * gh];
    for fr in 0..rows {
        let fam = ToyFamily::new(100 + fr as u64, &cfg);
        for i in 0..cols {
            let (x, y) = fam.example(i as u64, &cfg);
            for r in 0..s {
                for c in 0..s {
                    canvas[(fr * s + r) * gw + i * 2 * s + c] = x.get(r, c);
                    canvas[(fr * s + r) * gw + i * 2 * s + s + c] = y.get(r, c);
                }
            }
        }
    }
    write_png_gray(std::path::Path::new("/tmp/toy.png"), gh, gw, &canvas).unwrap();
}
