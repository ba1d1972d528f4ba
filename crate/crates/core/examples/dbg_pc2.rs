use soscert::pipeline::{synth, SynthOverrides};

fn main() {
    let text = std::fs::read_to_string("crates/cli/problems/powerconverter.prob").unwrap();
    let out = synth(&text, &SynthOverrides::default()).unwrap();
    for r in &out.history {
        println!("k={} cost={:.6e} eps={:?}", r.k, r.cost, r.eps);
    }
    println!("cert eps {:?}", out.cert.eps);
}
