//! Loop-level tests on the toy systems: feasibility chaining, slack bounds,
//! cost monotonicity, and basic geometry of the synthesized safe sets.

mod common;

use common::*;
use soscert::alternate::{check_monotone, run, AlternateConfig};
use soscert::poly::Point;

#[test]
fn integrator_synthesis_converges() {
    let spec = toy_integrator();
    spec.validate().unwrap();
    let (cert, history) = run(&spec, spec.initial_controller(), &AlternateConfig::default()).unwrap();
    assert!(history.len() <= 3, "expected quick convergence, took {}", history.len());
    assert!(cert.eps.iter().all(|&e| e <= 1e-7), "slacks {:?}", cert.eps);
    assert!(check_monotone(&history));

    // {B <= 0} must contain a neighborhood of the origin and stay within [-1, 1].
    let b = &cert.b[0];
    assert!(b.evaluate(&Point::origin(1)).unwrap() < 0.0);
    for k in 0..200 {
        let x = -1.5 + 3.0 * (k as f64) / 199.0;
        let bx = b.evaluate(&Point::new(vec![x])).unwrap();
        if bx <= 0.0 {
            assert!(x.abs() <= 1.0 + 1e-6, "B({x}) = {bx} <= 0 outside the allowable set");
        }
    }
}

#[test]
fn controller_stabilizes_integrator() {
    let spec = toy_integrator();
    let (cert, _) = run(&spec, spec.initial_controller(), &AlternateConfig::default()).unwrap();
    // Explicit Euler on the closed loop from x0 = 0.9 (well inside the safe set).
    let mut x = 0.9f64;
    let dt = 1e-3;
    for _ in 0..20_000 {
        let pt = Point::new(vec![x]);
        let u = cert.p[0].evaluate(&pt).unwrap() / cert.s1.evaluate(&pt).unwrap();
        x += dt * u;
        assert!(x.abs() <= 1.2, "trajectory escaped: {x}");
    }
    assert!(x.abs() < 0.05, "did not contract: {x}");
}

#[test]
fn max_outer_zero_returns_init_record() {
    let spec = toy_integrator();
    let cfg = AlternateConfig { max_outer: 0, ..Default::default() };
    let (cert, history) = run(&spec, spec.initial_controller(), &cfg).unwrap();
    assert_eq!(history.len(), 1);
    assert_eq!(history[0].k, 0);
    assert_eq!(cert.p, spec.initial_controller().p);
}

#[test]
fn full_toy_suite_feasibility_chain() {
    for (name, spec) in all_toys() {
        spec.validate().unwrap_or_else(|e| panic!("{name}: validation failed: {e}"));
        let cfg = AlternateConfig { max_outer: 4, ..Default::default() };
        let (cert, history) =
            run(&spec, spec.initial_controller(), &cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
        let t = spec.ncbf();
        for rec in &history {
            let eps_sum: f64 = rec.eps.iter().sum();
            assert!(
                eps_sum <= t as f64 * 1e-7,
                "{name}: iteration {} slack sum {eps_sum}",
                rec.k
            );
        }
        assert!(check_monotone(&history), "{name}: cost not monotone");
        assert!(cert.eps.iter().all(|&e| e <= 1e-7), "{name}: final slacks {:?}", cert.eps);
    }
}

#[test]
fn clf_only_has_zero_cost() {
    let spec = toy_clf_only();
    let cfg = AlternateConfig { max_outer: 2, ..Default::default() };
    let (cert, history) = run(&spec, spec.initial_controller(), &cfg).unwrap();
    assert!(cert.b.is_empty());
    assert!(cert.eps.is_empty());
    assert!(history[0].cost.abs() < 1e-6, "cost {}", history[0].cost);
}
