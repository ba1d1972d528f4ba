use soscert::pipeline::{self, SynthOverrides};
use soscert::probfile;
use soscert::verify::{check_decrease, simulate, RationalController};

fn main() {
    let text = std::fs::read_to_string("crates/cli/problems/powerconverter.prob").unwrap();
    let out = pipeline::synth(&text, &SynthOverrides::default()).unwrap();
    // Exactly the verify_certificate path: re-parse the certificate text.
    let parsed = soscert::certfile::parse_certificate(&out.cert_text).unwrap();
    let cert = parsed.cert;
    let spec = probfile::parse_problem(&text).unwrap();
    let ctrl = RationalController::from_certificates(&cert, spec.eps_s1);
    let starts = pipeline::sample_safe_starts(&spec, &cert, 100, spec.algo.seed ^ 0x7247);
    println!("starts: {}", starts.len());
    let mut fails = 0;
    for (id, x0) in starts.iter().enumerate() {
        let traj = simulate(&spec, &ctrl, x0, 5.0, 1e-3).unwrap();
        let rep = check_decrease(&cert.v, &spec.xstar, &traj).unwrap();
        if !rep.pass {
            fails += 1;
            println!("traj {id}: {}/{} decreasing; x0 = {:?}", rep.decreasing_steps, rep.checked_steps, x0.coords());
            // find the offending step
            for (k, w) in traj.states.windows(2).enumerate() {
                let d: f64 = w[0].coords().iter().zip(spec.xstar.coords()).map(|(a,b)| (a-b)*(a-b)).sum::<f64>().sqrt();
                if d <= 1e-4 { continue; }
                let v0 = cert.v.evaluate(&w[0]).unwrap();
                let v1 = cert.v.evaluate(&w[1]).unwrap();
                if v1 >= v0 {
                    println!("   step {k} t={:.3} |x|={d:.3e} V0={v0:.9e} dV={:+.3e}", traj.times[k], v1 - v0);
                }
            }
        }
    }
    println!("fails: {fails}");
}
