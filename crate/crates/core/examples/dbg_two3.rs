use soscert::alternate::{step1, AlternateConfig};
use soscert::certs::build_step2_program;
use soscert::sdp::{solve, SolveOptions};

#[path = "../tests/common/mod.rs"]
mod common;

fn main() {
    let mut spec = common::toy_two_barriers();
    spec.algo.seed = 1;
    spec.init.rho = Some(1.1);
    let opts = AlternateConfig::default().solver;
    let s1out = step1(&spec, &spec.initial_controller(), &opts).unwrap();
    println!("step1: {:?} cost {}", s1out.status, s1out.cost);
    for margin in [0.0, 1e-9, 3e-8, 1e-6, 1e-4] {
        let sp = build_step2_program(&spec, &s1out.v, &s1out.b, margin, false).unwrap();
        let prob = sp.prog.compile().unwrap();
        let sol = solve(&prob, &SolveOptions { ..opts.clone() });
        println!(
            "margin {margin:.1e}: {:?} obj {:.6e} res ({:.1e},{:.1e},{:.1e}) iters {}",
            sol.status, sol.objective, sol.residuals.primal, sol.residuals.dual, sol.residuals.relgap, sol.iterations
        );
    }
}
