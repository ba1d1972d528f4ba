use soscert::pipeline::{self, SynthOverrides};
use soscert::probfile;
use soscert::poly::Point;
use soscert::verify::{closed_loop_field, RationalController};

fn main() {
    let text = std::fs::read_to_string("crates/cli/problems/powerconverter.prob").unwrap();
    let out = pipeline::synth(&text, &SynthOverrides::default()).unwrap();
    let spec = probfile::parse_problem(&text).unwrap();
    let ctrl = RationalController::from_certificates(&out.cert, spec.eps_s1);
    // s1 minimum over the operating region (sampled)
    let bbox = soscert::sampling::bounding_box(&spec.r, 10.0);
    let mut s1_min = f64::INFINITY;
    let mut umax: f64 = 0.0;
    let mut fmax: f64 = 0.0;
    for i in 0..200000u64 {
        let mut rng = soscert::sampling::stream_rng(5, i);
        let x = soscert::sampling::sample_in_box(&mut rng, &bbox);
        if spec.r.evaluate(&x).unwrap() > 0.0 { continue; }
        let s1 = out.cert.s1.evaluate(&x).unwrap();
        s1_min = s1_min.min(s1);
        let u = ctrl.eval(&x).unwrap();
        umax = umax.max(u[0].abs()).max(u[1].abs());
        let f = closed_loop_field(&spec, &ctrl, &x).unwrap();
        fmax = fmax.max(f.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    }
    println!("min s1 over X_op: {s1_min:.4e}; max |u|: {umax:.4e}; max |xdot|: {fmax:.4e}");
    let x0 = Point::new(vec![-0.0007446325507169949, -1.1943752242419534, -0.09023765115168092]);
    let u = ctrl.eval(&x0).unwrap();
    let f = closed_loop_field(&spec, &ctrl, &x0).unwrap();
    println!("at offending x0: u = {u:?}, xdot = {f:?}, s1 = {}", out.cert.s1.evaluate(&x0).unwrap());
}
