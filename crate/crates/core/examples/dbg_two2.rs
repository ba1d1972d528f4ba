use soscert::alternate::{run, AlternateConfig};
use soscert::sdp::SolveOptions;

#[path = "../tests/common/mod.rs"]
mod common;

fn main() {
    for frac in [0.95f64, 0.90, 0.80] {
        for seed in 1..4u64 {
            let mut spec = common::toy_two_barriers();
            spec.algo.seed = seed;
            spec.init.rho = Some(1.0 + 0.1 * seed as f64);
            let cfg = AlternateConfig {
                max_outer: 4,
                solver: SolveOptions { step_frac: frac, ..AlternateConfig::default().solver },
                ..Default::default()
            };
            match run(&spec, spec.initial_controller(), &cfg) {
                Ok((_, hist)) => println!("frac {frac} seed {seed}: OK {} iters", hist.len()),
                Err(e) => println!("frac {frac} seed {seed}: ERR {}", e.to_string().chars().take(60).collect::<String>()),
            }
        }
    }
}
