// debug binary
use soscert::alternate::{run, AlternateConfig};
use soscert::sdp::SolveOptions;

#[path = "../tests/common/mod.rs"]
mod common;

fn main() {
    let spec = common::toy_oscillator();
    let cfg = AlternateConfig {
        max_outer: 6,
        verbose: true,
        solver: SolveOptions { verbose: true, ..Default::default() },
        ..Default::default()
    };
    match run(&spec, spec.initial_controller(), &cfg) {
        Ok((cert, hist)) => println!("OK after {} iters, eps {:?}", hist.len(), cert.eps),
        Err(e) => println!("ERR: {e}"),
    }
}
