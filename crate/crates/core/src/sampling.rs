//! Deterministic sampling utilities for semialgebraic regions.
//!
//! Sampling is keyed by `(seed, stream index)` so batches can be split across
//! workers without changing the drawn points.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::poly::{Monomial, Point, Polynomial};

/// RNG stream keyed by a global seed and a stream index.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Per-axis bounding box of the sublevel set `{p ≤ 0}` for a quadratic `p`
/// with positive-definite quadratic part. `None` when `p` is not of that
/// shape or the set is empty.
pub fn ellipsoid_bbox(p: &Polynomial) -> Option<Vec<(f64, f64)>> {
    if p.degree() != 2 {
        return None;
    }
    let n = p.nvars();
    let mut q = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    let mut c = 0.0;
    for (m, coef) in p.terms() {
        match m.degree() {
            0 => c = *coef,
            1 => {
                let i = m.exponents().iter().position(|&e| e == 1).unwrap();
                b[i] = *coef;
            }
            2 => {
                let nz: Vec<usize> = m
                    .exponents()
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(i, _)| i)
                    .collect();
                if nz.len() == 1 {
                    q[(nz[0], nz[0])] += coef;
                } else {
                    q[(nz[0], nz[1])] += coef / 2.0;
                    q[(nz[1], nz[0])] += coef / 2.0;
                }
            }
            _ => unreachable!(),
        }
    }
    let chol = q.clone().cholesky()?; // PD check
    let center = chol.solve(&(-&b * 0.5));
    // p(center) = centerᵀQcenter + bᵀcenter + c; the set is the ellipsoid
    // (x-center)ᵀQ(x-center) ≤ -p(center).
    let p_center = (center.transpose() * &q * &center)[(0, 0)] + b.dot(&center) + c;
    let radius2 = -p_center;
    if radius2 < 0.0 {
        return None;
    }
    let qinv = chol.inverse();
    Some(
        (0..n)
            .map(|i| {
                let extent = (radius2 * qinv[(i, i)]).max(0.0).sqrt();
                (center[i] - extent, center[i] + extent)
            })
            .collect(),
    )
}

/// Bounding box for `{p ≤ 0}`: the exact ellipsoid box when available,
/// otherwise a centered fallback cube.
pub fn bounding_box(p: &Polynomial, fallback_halfwidth: f64) -> Vec<(f64, f64)> {
    ellipsoid_bbox(p)
        .unwrap_or_else(|| vec![(-fallback_halfwidth, fallback_halfwidth); p.nvars()])
}

/// Intersection of per-axis boxes.
pub fn intersect_boxes(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    a.iter()
        .zip(b)
        .map(|(&(alo, ahi), &(blo, bhi))| (alo.max(blo), ahi.min(bhi)))
        .collect()
}

pub fn sample_in_box(rng: &mut ChaCha8Rng, bbox: &[(f64, f64)]) -> Point {
    Point::new(
        bbox.iter()
            .map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..hi) } else { lo })
            .collect(),
    )
}

/// Up to `max_tries` rejection-sampling attempts for one point in
/// `{x ∈ bbox : pred(x)}`, using the stream keyed by `(seed, index)`.
pub fn sample_region_point(
    seed: u64,
    index: u64,
    bbox: &[(f64, f64)],
    pred: impl Fn(&Point) -> bool,
    max_tries: usize,
) -> Option<Point> {
    let mut rng = stream_rng(seed, index);
    for _ in 0..max_tries {
        let x = sample_in_box(&mut rng, bbox);
        if pred(&x) {
            return Some(x);
        }
    }
    None
}

/// Random directions on the unit sphere.
pub fn unit_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

/// The top-degree form of `p` evaluated at a direction.
pub fn top_form_value(p: &Polynomial, dir: &[f64]) -> f64 {
    let deg = p.degree();
    let top = Polynomial::from_terms(
        p.nvars(),
        p.terms()
            .filter(|(m, _)| m.degree() == deg)
            .map(|(m, c)| (m.clone(), *c)),
    );
    top.evaluate(&Point::new(dir.to_vec())).unwrap()
}

/// Helper to build `x_i` monomial quickly in tests.
#[allow(dead_code)]
pub(crate) fn var_monomial(n: usize, i: usize) -> Monomial {
    Monomial::var(n, i)
}
