use soscert::alternate::{run, AlternateConfig};
use soscert::certs::{AlgoParams, DegreeTable, InitOverride, ProblemSpec};
use soscert::poly::{parse_polynomial, Point, PolyMatrix, PolyVector};
use soscert::sdp::SolveOptions;

fn main() {
    let n = 3;
    let names: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    let p = |s: &str| parse_polynomial(s, &names).unwrap();
    let spec = ProblemSpec {
        varnames: names.clone(),
        f: PolyVector::new(vec![
            p("-0.05*x1 - 57.9*x2 + 0.00919*x3"),
            p("1710*x1 + 314*x3"),
            p("-0.271*x1 - 314*x2"),
        ]),
        g: PolyMatrix::new(
            3,
            2,
            vec![
                p("0.05 - 57.9*x2"),
                p("-57.9*x3"),
                p("1710 + 1710*x1"),
                p("0"),
                p("0"),
                p("1710 + 1710*x1"),
            ],
        ),
        w: vec![
            p("(x1 + 0.3)^2 + (x2/20)^2 + (x3/20)^2 - 0.5^2"),
            p("(x1/20)^2 + x2^2 + x3^2 - 1.2^2"),
        ],
        r: p("(x1/0.8)^2 + (x2/1.2)^2 + (x3/1.2)^2 - 1.8"),
        l: p("x1^2 + x2^2 + x3^2"),
        xstar: Point::origin(3),
        eps_s1: 1e-3,
        centers: vec![
            (Point::new(vec![-0.3, 0.0, 0.0]), -10.0),
            (Point::new(vec![-0.3, 0.0, 0.0]), -10.0),
        ],
        degrees: DegreeTable {
            v: 4,
            b: 4,
            s1: 2,
            s2: 6,
            s3: 6,
            s4: 3,
            p: 4,
            pm1: 2,
            v_even: true,
            b_even: true,
        },
        algo: AlgoParams { max_outer: 10, threshold: 1e-3, seed: 0, coeff_bound: 1e2 },
        init: InitOverride { rho: Some(1e-3), ..Default::default() },
    };
    spec.validate().unwrap();
    let cfg = AlternateConfig {
        max_outer: 10,
        verbose: true,
        solver: SolveOptions { verbose: false, ..AlternateConfig::default().solver },
        ..Default::default()
    };
    let t0 = std::time::Instant::now();
    match run(&spec, spec.initial_controller(), &cfg) {
        Ok((cert, hist)) => {
            println!("OK in {:.1?}: {} iterations", t0.elapsed(), hist.len());
            for r in &hist {
                println!(
                    "  k={} cost={:.6e} eps={:?} inner=({}, {})",
                    r.k, r.cost, r.eps, r.step1_iters, r.step2_iters
                );
                println!(
                    "    step1 dof={} psd={} step2 dof={} psd={}",
                    r.step1_stats.poly_dof,
                    r.step1_stats.psd_entries,
                    r.step2_stats.poly_dof,
                    r.step2_stats.psd_entries
                );
            }
            println!("V = {} terms, B1 = {} terms", cert.v.num_terms(), cert.b[0].num_terms());
            println!("B1(0) = {:?}", cert.b[0].evaluate(&Point::origin(3)).unwrap());
            println!("B2(0) = {:?}", cert.b[1].evaluate(&Point::origin(3)).unwrap());
        }
        Err(e) => println!("ERR after {:.1?}: {e}", t0.elapsed()),
    }
}
