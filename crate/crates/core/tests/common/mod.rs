//! Shared fixtures for the loop-level and acceptance tests.

#[allow(dead_code)]
pub mod oracles;

use soscert::certs::{AlgoParams, DegreeTable, InitOverride, ProblemSpec};
use soscert::poly::{parse_polynomial, Point, PolyMatrix, PolyVector, Polynomial};

pub fn names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

pub fn poly(s: &str, n: usize) -> Polynomial {
    parse_polynomial(s, &names(n)).unwrap()
}

fn degrees_1d() -> DegreeTable {
    DegreeTable { v: 2, b: 2, s1: 0, s2: 2, s3: 2, s4: 2, p: 3, pm1: 2, v_even: true, b_even: true }
}

/// Single integrator `ẋ = u`, safe set inside `[-1, 1]`.
pub fn toy_integrator() -> ProblemSpec {
    let n = 1;
    ProblemSpec {
        varnames: names(n),
        f: PolyVector::new(vec![poly("0", n)]),
        g: PolyMatrix::new(1, 1, vec![poly("1", n)]),
        w: vec![poly("x1^2 - 1", n)],
        r: poly("x1^2 - 2", n),
        l: poly("x1^2", n),
        xstar: Point::origin(n),
        eps_s1: 1e-3,
        centers: vec![(Point::origin(n), -1.0)],
        degrees: degrees_1d(),
        algo: AlgoParams { max_outer: 8, threshold: 1e-4, seed: 1, ..Default::default() },
        init: InitOverride::default(),
    }
}

/// Open-loop unstable `ẋ = x + u`.
pub fn toy_unstable() -> ProblemSpec {
    let mut spec = toy_integrator();
    spec.f = PolyVector::new(vec![poly("x1", 1)]);
    spec.init.rho = Some(2.0);
    spec
}

/// Cubic drift `ẋ = -x³ + u`.
pub fn toy_cubic_drift() -> ProblemSpec {
    let mut spec = toy_integrator();
    spec.f = PolyVector::new(vec![poly("-x1^3", 1)]);
    spec
}

/// Two-state oscillator with one input: `ẋ₁ = x₂`, `ẋ₂ = -x₁ + u`.
pub fn toy_oscillator() -> ProblemSpec {
    let n = 2;
    ProblemSpec {
        varnames: names(n),
        f: PolyVector::new(vec![poly("x2", n), poly("-x1", n)]),
        g: PolyMatrix::new(2, 1, vec![poly("0", n), poly("1", n)]),
        w: vec![poly("x1^2 + x2^2 - 1", n)],
        r: poly("x1^2 + x2^2 - 2", n),
        l: poly("x1^2 + x2^2", n),
        xstar: Point::origin(n),
        eps_s1: 1e-3,
        centers: vec![(Point::origin(n), -1.0)],
        degrees: DegreeTable {
            v: 2,
            b: 2,
            s1: 0,
            s2: 2,
            s3: 2,
            s4: 0,
            p: 3,
            pm1: 2,
            v_even: true,
            b_even: true,
        },
        algo: AlgoParams { max_outer: 8, threshold: 1e-4, seed: 2, ..Default::default() },
        init: InitOverride::default(),
    }
}

/// Two CBFs: a shifted disc and an ellipse, intersected safe set.
pub fn toy_two_barriers() -> ProblemSpec {
    let n = 2;
    let mut spec = toy_oscillator();
    spec.w = vec![
        poly("(x1 - 0.2)^2 + x2^2 - 1", n),
        poly("x1^2 + (x2/1.1)^2 - 1", n),
    ];
    spec.r = poly("x1^2 + x2^2 - 3", n);
    spec.centers = vec![(Point::origin(n), -1.0), (Point::origin(n), -1.0)];
    spec.algo.seed = 3;
    spec
}

/// Pure CLF synthesis (no state constraints, t = 0).
pub fn toy_clf_only() -> ProblemSpec {
    let mut spec = toy_integrator();
    spec.w = vec![];
    spec.centers = vec![];
    spec.algo.seed = 4;
    spec
}

pub fn all_toys() -> Vec<(&'static str, ProblemSpec)> {
    vec![
        ("integrator", toy_integrator()),
        ("unstable", toy_unstable()),
        ("cubic-drift", toy_cubic_drift()),
        ("oscillator", toy_oscillator()),
        ("two-barriers", toy_two_barriers()),
        ("clf-only", toy_clf_only()),
    ]
}
