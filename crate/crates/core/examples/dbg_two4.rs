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
    let sp = build_step2_program(&spec, &s1out.v, &s1out.b, 0.0, false).unwrap();
    let prob = sp.prog.compile().unwrap();
    let sol = solve(&prob, &SolveOptions { max_iters: 60, ..opts.clone() });
    println!("status {:?} obj {:.6e}", sol.status, sol.objective);
    // eps values
    let vars = sp.prog.recover_vars(&sol);
    for (i, e) in sp.eps.iter().enumerate() {
        println!("eps{} = {:.6e}", i + 1, vars[e.0 as usize]);
    }
    // residual per equality row on the returned candidate
    let mut rows: Vec<(f64, String)> = prob
        .eqs
        .iter()
        .zip(&prob.eq_labels)
        .map(|(eq, label)| {
            let mut v = -eq.rhs;
            for &(b, i, j, c) in &eq.cone {
                let x = sol.blocks[b][(i, j)];
                let xt = sol.blocks[b][(j, i)];
                v += if i == j { c * x } else { c * (x + xt) / 2.0 };
            }
            for &(f, c) in &eq.free {
                v += c * sol.free[f];
            }
            (v.abs(), label.clone())
        })
        .collect();
    rows.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    for (v, label) in rows.iter().take(8) {
        println!("residual {v:.3e}  {label}");
    }
    // block eigen floors
    for (b, m) in sol.blocks.iter().enumerate() {
        let (ok, min) = soscert::sdp::psd_project_check(m, 1e-8);
        if !ok || min < -1e-9 {
            println!("block {b} ({}) min eig {min:.2e}", prob.block_labels.get(b).cloned().unwrap_or_default());
        }
    }
}
