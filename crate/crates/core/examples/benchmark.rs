//! Trains modes on the synthetic benchmark and prints AUROC per OOD split.
//!
//! cargo run --release -p oodk-core --example benchmark -- [seeds] [first_seed] [MODE ...]

use std::time::Instant;

use oodk_core::rng::seeded;
use oodk_core::trainer::score_inputs;
use oodk_core::{auroc, gen_synthetic, train, Mode, RunConfig, TrainData};

fn main() {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().map_or(5, |s| s.parse().expect("seed count"));
    let first: u64 = args.next().map_or(0, |s| s.parse().expect("first seed"));
    let mut modes: Vec<Mode> = args.map(|m| m.parse().expect("mode")).collect();
    if modes.is_empty() {
        modes = vec![Mode::Ours, Mode::CeOnly, Mode::NdaOnly, Mode::VosLike];
    }
    let start = Instant::now();
    for mode in modes {
        let (mut sem, mut modal) = (0.0, 0.0);
        for seed in first..first + seeds {
            let mut cfg = RunConfig::desk_benchmark();
            cfg.synthetic.seed = seed;
            cfg.train.seed = seed;
            cfg.train.mode = mode;
            let b = gen_synthetic(&cfg.synthetic, &mut seeded(seed)).unwrap();
            let data = TrainData {
                inputs: &b.train.inputs,
                labels: &b.train.labels,
                classes: b.k_known,
                image_shape: None,
            };
            let out = train(&data, &cfg.train, &cfg.tails, &cfg.nda).unwrap();
            let score = |x: &[Vec<f64>]| score_inputs(&out.params, x, cfg.train.temperature).unwrap();
            let id = score(&b.test_id.inputs);
            let s = auroc(&id, &score(&b.test_semantic.inputs)).unwrap();
            let m = auroc(&id, &score(&b.test_modality.inputs)).unwrap();
            println!("{mode:9} seed {seed}: semantic {s:.4} modality {m:.4}");
            sem += s;
            modal += m;
        }
        let n = seeds as f64;
        println!("{mode:9} mean: semantic {:.4} modality {:.4}", sem / n, modal / n);
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
}
