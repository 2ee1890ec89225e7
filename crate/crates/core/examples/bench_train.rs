use gpcrlm::tsne::{tsne, TsneConfig};
use rand::{Rng, SeedableRng};

fn main() {
    for sep in [8.0, 10.0, 14.0] {
        for seed in [7u64, 4242, 9] {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut points = Vec::new();
            for c in 0..3usize {
                for _ in 0..20 {
                    points.push((0..32).map(|k| {
                        let center = if k % 3 == c { sep } else { 0.0 };
                        center + rng.random::<f64>() - 0.5
                    }).collect::<Vec<f64>>());
                }
            }
            let r = tsne(&points, &TsneConfig::default()).unwrap();
            let (i, f) = (r.kl_trace[0], *r.kl_trace.last().unwrap());
            println!("sep {sep:4} seed {seed:5}: KL {i:.3} -> {f:.3} ratio {:.3}", f / i);
        }
    }
}
