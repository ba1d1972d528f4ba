//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with `cargo test -p soscert --test acceptance -- --nocapture` to see
//! the per-criterion lines. The power converter benchmark is synthesized once
//! and shared across the criteria that examine it.

mod common;

use std::time::{Duration, Instant};

use once_cell::sync::Lazy;

use common::oracles::lmi_toys;
use soscert::alternate::{check_monotone, run, AlternateConfig, IterationRecord};
use soscert::certs::CertificateSet;
use soscert::pipeline::{self, SynthOverrides};
use soscert::poly::{parse_polynomial, Point, PolyMatrix, PolyVector, Polynomial};
use soscert::sampling;
use soscert::sdp::{solve, SolveOptions, SolveStatus};
use soscert::soscomp::{default_half_basis, monomial_basis, ParamPolynomial, SosProgram};
use soscert::verify::{simulate, RationalController};

const POWER_CONVERTER: &str =
    include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../cli/problems/powerconverter.prob"));

struct Artifacts {
    cert: CertificateSet,
    cert_text: String,
    history: Vec<IterationRecord>,
    synth_time: Duration,
}

static CONVERTER: Lazy<Artifacts> = Lazy::new(|| {
    let t0 = Instant::now();
    let outcome = pipeline::synth(POWER_CONVERTER, &SynthOverrides::default())
        .expect("power converter synthesis succeeds");
    Artifacts {
        cert: outcome.cert,
        cert_text: outcome.cert_text,
        history: outcome.history,
        synth_time: t0.elapsed(),
    }
});

fn report(criterion: u32, what: &str, pass: bool) {
    println!("ACCEPTANCE {criterion} ({what}): {}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "acceptance criterion {criterion} failed: {what}");
}

#[test]
fn criterion_1_power_converter_end_to_end() {
    let art = &CONVERTER;
    let within_time = art.synth_time <= Duration::from_secs(600);
    let slacks_ok = art.cert.eps.iter().all(|&e| e <= 1e-7)
        && art.history.iter().all(|r| r.eps.iter().all(|&e| e <= 1e-7));
    let monotone = check_monotone(&art.history);
    let n_iters = art.history.len() as f64;
    let avg1 = art.history.iter().map(|r| r.step1_iters).sum::<usize>() as f64 / n_iters;
    let avg2 = art.history.iter().map(|r| r.step2_iters).sum::<usize>() as f64 / n_iters;
    let inner_ok = (10.0..=100.0).contains(&avg1) && (10.0..=100.0).contains(&avg2);
    let s1 = art.history.last().unwrap().step1_stats;
    let s2 = art.history.last().unwrap().step2_stats;
    let within2 = |have: usize, reference: usize| {
        let r = have as f64 / reference as f64;
        (0.5..=2.0).contains(&r)
    };
    let counts_ok = within2(s1.poly_dof, 337)
        && within2(s1.psd_entries, 5188)
        && within2(s2.poly_dof, 372)
        && within2(s2.psd_entries, 4892);
    println!(
        "  synth {:.1?}; inner avg ({avg1:.1}, {avg2:.1}); step1 {}x{}, step2 {}x{} (reference 337x5188, 372x4892)",
        art.synth_time, s1.poly_dof, s1.psd_entries, s2.poly_dof, s2.psd_entries
    );
    report(
        1,
        "power converter end-to-end",
        within_time && slacks_ok && monotone && inner_ok && counts_ok,
    );
}

#[test]
fn criterion_2_safety_reproduction() {
    let art = &CONVERTER;
    let outcome =
        pipeline::verify_certificate(POWER_CONVERTER, &art.cert_text, 100_000, 100, 5.0, 1e-3)
            .expect("verification runs");
    println!(
        "  {} MC violations; {}/{} trajectories safe; {} decrease failures",
        outcome.safety_violations,
        outcome.trajectories_safe,
        outcome.trajectories_checked,
        outcome.decrease_failures
    );
    let pass = outcome.safety_violations == 0
        && outcome.trajectories_checked == 100
        && outcome.trajectories_safe == 100
        && outcome.decrease_failures == 0;
    report(2, "Monte-Carlo and trajectory safety", pass);
}

#[test]
fn criterion_3_certificate_identity() {
    let art = &CONVERTER;
    let checks = pipeline::check_witnesses(&art.cert);
    let worst_rel = checks.iter().map(|c| c.max_rel_coeff_err).fold(0.0f64, f64::max);
    let worst_eig = checks.iter().map(|c| c.min_eig).fold(f64::INFINITY, f64::min);
    println!(
        "  {} witnesses; worst relative reconstruction error {worst_rel:.2e}; worst min eigenvalue {worst_eig:.2e}",
        checks.len()
    );
    let pass = !checks.is_empty() && checks.iter().all(|c| c.pass);
    report(3, "Gram reconstruction and PSD witnesses", pass);
}

#[test]
fn criterion_4_alternating_lemma_property() {
    // 5 systems x 4 seeds = 20 runs. Seeds vary both the sampling streams and
    // the initial feedback gain.
    let mut runs = 0usize;
    let mut violations = 0usize;
    for (name, base) in common::all_toys() {
        if base.ncbf() == 0 {
            continue; // slack accounting is vacuous without CBFs
        }
        for seed in 0..4u64 {
            let mut spec = base.clone();
            spec.algo.seed = seed;
            spec.init.rho = Some(spec.init.rho.unwrap_or(1.0) * (1.0 + 0.1 * seed as f64));
            let cfg = AlternateConfig { max_outer: 4, ..Default::default() };
            runs += 1;
            match run(&spec, spec.initial_controller(), &cfg) {
                Ok((cert, history)) => {
                    let t = spec.ncbf() as f64;
                    // Whenever step 1 was Optimal (every recorded iteration),
                    // step 2 was Optimal with bounded slack sum.
                    if !history
                        .iter()
                        .all(|r| r.eps.iter().sum::<f64>() <= t * 1e-7)
                        || !check_monotone(&history)
                        || !cert.eps.iter().all(|&e| e <= 1e-7)
                    {
                        eprintln!("  violation: {name} seed {seed}");
                        violations += 1;
                    }
                }
                Err(e) => {
                    eprintln!("  failure: {name} seed {seed}: {e}");
                    violations += 1;
                }
            }
        }
    }
    println!("  {runs} seeded runs, {violations} violations");
    report(4, "feasibility chain and cost monotonicity", runs >= 20 && violations == 0);
}

#[test]
fn criterion_5_sdp_oracle_suite() {
    let opts = SolveOptions::default();
    let mut failures = 0usize;
    let toys = lmi_toys();
    let n_problems = toys.len();
    for toy in toys {
        let sol = solve(&toy.to_problem(), &opts);
        let expect = toy.analytic.expect("closed form");
        if sol.status != SolveStatus::Optimal || (sol.objective - expect).abs() >= 1e-6 {
            eprintln!("  oracle mismatch on {}: {:?} {}", toy.name, sol.status, sol.objective);
            failures += 1;
        }
        let grid = toy.grid_optimum();
        if !(grid >= expect - 1e-9 && grid <= expect + 2e-3) {
            eprintln!("  grid oracle disagrees on {}: {grid} vs {expect}", toy.name);
            failures += 1;
        }
    }

    // Named memberships: a perfect square is feasible, Motzkin is not.
    let names: Vec<String> = vec!["x1".into(), "x2".into()];
    let mut prog = SosProgram::new();
    let square = ParamPolynomial::from_poly(&parse_polynomial("x1^2 + 2*x1 + 1", &names).unwrap());
    prog.assert_sos(&square, &default_half_basis(&square), "square").unwrap();
    let feasible = solve(&prog.compile().unwrap(), &opts).status == SolveStatus::Optimal;

    let mut prog = SosProgram::new();
    let motzkin = ParamPolynomial::from_poly(
        &parse_polynomial("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1", &names).unwrap(),
    );
    prog.assert_sos(&motzkin, &monomial_basis(2, 3, None, None), "motzkin").unwrap();
    let infeasible = solve(&prog.compile().unwrap(), &opts).status == SolveStatus::Infeasible;

    println!(
        "  {n_problems} oracle problems, {failures} failures; square feasible: {feasible}; Motzkin infeasible: {infeasible}"
    );
    report(5, "solver oracle suite", n_problems >= 16 && failures == 0 && feasible && infeasible);
}

#[test]
fn criterion_6_numerical_calculus() {
    // Gradients against central finite differences on 100 random polynomials.
    use rand::Rng;
    let mut failures = 0usize;
    for case in 0..100u64 {
        let mut rng = sampling::stream_rng(0xca1c, case);
        let nvars = 1 + (rng.gen_range(0..4usize));
        let basis = monomial_basis(nvars, 4, None, None);
        let mut terms = Vec::new();
        for m in &basis {
            if rng.gen_bool(0.4) {
                terms.push((m.clone(), rng.gen_range(-3.0..3.0)));
            }
        }
        let poly = Polynomial::from_terms(nvars, terms);
        let x = Point::new((0..nvars).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let grad = poly.gradient();
        let h = 1e-4;
        for i in 0..nvars {
            let mut up = x.coords().to_vec();
            up[i] += h;
            let mut dn = x.coords().to_vec();
            dn[i] -= h;
            let fd = (poly.evaluate(&Point::new(up)).unwrap()
                - poly.evaluate(&Point::new(dn)).unwrap())
                / (2.0 * h);
            let exact = grad.entry(i).evaluate(&x).unwrap();
            if (exact - fd).abs() > 1e-6 * (1.0 + exact.abs()) {
                failures += 1;
            }
        }
    }

    // RK4 on dx/dt = -x over [0, 1] with dt = 1e-3 against exp(-1).
    let names = vec!["x1".to_string()];
    let p = |s: &str| parse_polynomial(s, &names).unwrap();
    let spec = soscert::certs::ProblemSpec {
        varnames: names.clone(),
        f: PolyVector::new(vec![p("-x1")]),
        g: PolyMatrix::new(1, 1, vec![p("1")]),
        w: vec![],
        r: p("x1^2 - 100"),
        l: p("x1^2"),
        xstar: Point::origin(1),
        eps_s1: 1e-3,
        centers: vec![],
        degrees: soscert::certs::DegreeTable {
            v: 2, b: 2, s1: 0, s2: 2, s3: 2, s4: 2, p: 3, pm1: 2, v_even: true, b_even: true,
        },
        algo: Default::default(),
        init: Default::default(),
    };
    let ctrl = RationalController { p: PolyVector::new(vec![p("0")]), s1: p("1"), eps_s1: 1e-3 };
    let traj = simulate(&spec, &ctrl, &Point::new(vec![1.0]), 1.0, 1e-3).unwrap();
    let rk4_err = (traj.states.last().unwrap().coords()[0] - (-1.0f64).exp()).abs();

    println!("  {failures} gradient mismatches over 100 polynomials; RK4 error {rk4_err:.2e}");
    report(6, "gradients and integrator", failures == 0 && rk4_err <= 1e-6);
}

#[test]
fn criterion_7_reproducibility() {
    let art = &CONVERTER;
    let second = pipeline::synth(POWER_CONVERTER, &SynthOverrides::default())
        .expect("second synthesis succeeds");
    let identical = art.cert_text.as_bytes() == second.cert_text.as_bytes();
    println!("  certificate files byte-identical: {identical}");
    report(7, "byte-identical repeated synthesis", identical);
}
