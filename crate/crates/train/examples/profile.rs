//! Rough per-phase timing of one training iteration.

use std::time::Instant;

use pcl_data::{generate_synthetic, SyntheticSpec};
use pcl_train::{config::TrainConfig, Pipeline};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let unsup = args.get(1).map(|s| s == "unsup").unwrap_or(false);
    let mut cfg = if unsup { TrainConfig::desk_unsupervised() } else { TrainConfig::desk_supervised() };
    cfg.batch_size = 4;
    let l = cfg.clip_len;
    let pipeline = Pipeline::<f32>::new(cfg).unwrap();
    let clips: Vec<_> = (0..4)
        .map(|i| {
            generate_synthetic(&SyntheticSpec::translation(l, 64, 64, 1.0 + i as f64 * 0.5, -1.0), i)
                .unwrap()
        })
        .collect();

    let _ = pipeline.batch_loss(&clips, false).unwrap();
    let t0 = Instant::now();
    for _ in 0..2 {
        let _ = pipeline.batch_loss(&clips, false).unwrap();
    }
    let fwd = t0.elapsed().as_secs_f64() / 2.0;
    let t0 = Instant::now();
    for _ in 0..2 {
        let _ = pipeline.batch_loss(&clips, true).unwrap();
    }
    let both = t0.elapsed().as_secs_f64() / 2.0;
    println!("forward only: {fwd:.3}s   forward+backward: {both:.3}s   backward: {:.3}s", both - fwd);
}
