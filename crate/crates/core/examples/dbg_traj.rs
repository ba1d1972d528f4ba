use soscert::pipeline::{self, SynthOverrides};
use soscert::probfile;
use soscert::poly::Point;
use soscert::verify::{simulate, RationalController};

fn main() {
    let text = std::fs::read_to_string("crates/cli/problems/powerconverter.prob").unwrap();
    let out = pipeline::synth(&text, &SynthOverrides::default()).unwrap();
    let spec = probfile::parse_problem(&text).unwrap();
    let ctrl = RationalController::from_certificates(&out.cert, spec.eps_s1);
    let x0 = Point::new(vec![-0.0007446325507169949, -1.1943752242419534, -0.09023765115168092]);
    let traj = simulate(&spec, &ctrl, &x0, 5.0, 1e-3).unwrap();
    println!("events: {:?}", traj.events);
    for (k, s) in traj.states.iter().enumerate() {
        let bad = s.coords().iter().any(|c| !c.is_finite() || c.abs() > 5.0);
        if bad || k < 4 {
            println!("step {k} t={:.4} x={:?}", traj.times[k], s.coords());
            if bad { break; }
        }
    }
}
