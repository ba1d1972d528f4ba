use soscert::pipeline::{self, SynthOverrides};
use soscert::probfile;
use soscert::verify::{simulate, RationalController};

fn main() {
    let text = std::fs::read_to_string("crates/cli/problems/powerconverter.prob").unwrap();
    let out = pipeline::synth(&text, &SynthOverrides::default()).unwrap();
    let spec = probfile::parse_problem(&text).unwrap();
    let ctrl = RationalController::from_certificates(&out.cert, spec.eps_s1);
    let starts = pipeline::sample_safe_starts(&spec, &out.cert, 100, spec.algo.seed ^ 0x7247);
    let mut bad = 0;
    for (id, x0) in starts.iter().enumerate() {
        let traj = simulate(&spec, &ctrl, x0, 5.0, 1e-3).unwrap();
        for w in traj.states.windows(2) {
            let d: f64 = w[0].coords().iter().zip(spec.xstar.coords()).map(|(a,b)| (a-b)*(a-b)).sum::<f64>().sqrt();
            if d <= 1e-4 { continue; }
            let v0 = out.cert.v.evaluate(&w[0]).unwrap();
            let v1 = out.cert.v.evaluate(&w[1]).unwrap();
            if v1 >= v0 {
                bad += 1;
                if bad < 12 {
                    println!("traj {id}: |x|={d:.3e} V0={v0:.6e} dV={:+.3e} relative {:+.2e}", v1 - v0, (v1-v0)/v0.abs().max(1e-300));
                }
            }
        }
    }
    println!("total offending steps: {bad}");
}
