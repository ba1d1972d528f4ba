use soscert::alternate::{run, AlternateConfig};
use soscert::sdp::SolveOptions;

#[path = "../tests/common/mod.rs"]
mod common;

fn main() {
    for seed in 0..4u64 {
        let mut spec = common::toy_two_barriers();
        spec.algo.seed = seed;
        spec.init.rho = Some(1.0 + 0.1 * seed as f64);
        let cfg = AlternateConfig {
            max_outer: 4,
            verbose: std::env::var("VERBOSE").is_ok(),
            solver: SolveOptions { verbose: std::env::var("VERBOSE").is_ok(), ..AlternateConfig::default().solver },
            ..Default::default()
        };
        match run(&spec, spec.initial_controller(), &cfg) {
            Ok((cert, hist)) => println!("seed {seed}: OK {} iters, eps {:?}", hist.len(), cert.eps),
            Err(e) => println!("seed {seed}: ERR {e}"),
        }
    }
}
