//! Builders for the certificate synthesis conditions: CLF decrease, CBF
//! invariance, safe-set containment, multiplier positivity, and the assembly
//! of the two alternating subproblems with the trace + center-point cost.
//!
//! The synthesized objects certify, for `ẋ = f(x) + G(x)u` with the rational
//! controller `u = p/s₁`:
//!
//! ```text
//! -∇Vᵀ(s₁ f + G p) - l² + s₂ r                  ∈ Σ[x]
//! -∇Bᵢᵀ(s₁ f + G p) - p_{m+1,i} Bᵢ + s₃ᵢ r      ∈ Σ[x]   i = 1..t
//! Bᵢ - s₄ᵢ wᵢ                                   ∈ Σ[x]   i = 1..t
//! s₁ - ε_{s1}                                   ∈ Σ[x]
//! V ∈ Σ[x], V(x*) = 0
//! ```
//!
//! The two subproblems split the bilinearity: step 1 fixes `(s₁, p, p_{m+1,i})`
//! and solves for `(V, Bᵢ, s₂, s₃ᵢ, s₄ᵢ)` minimizing the safe-set volume
//! surrogate; step 2 fixes `(V, Bᵢ)` and recovers the controller, minimizing
//! the CBF slack sum `Σ εᵢ`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::poly::{Monomial, Point, PolyError, PolyMatrix, PolyVector, Polynomial};
use crate::sampling;
use crate::sdp::{SdpSolution, SdpStats};
use crate::soscomp::{
    default_half_basis, monomial_basis, AffineExpr, ParamPolynomial, SosError, SosProgram, VarId,
};

#[derive(Debug, Error)]
pub enum CertsError {
    #[error("problem validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Per-unknown degree bounds. `v_even`/`b_even` restrict the CLF/CBF bases to
/// even total degrees (in coordinates shifted to `x*` and the CBF centers).
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeTable {
    pub v: u32,
    pub b: u32,
    pub s1: u32,
    pub s2: u32,
    pub s3: u32,
    pub s4: u32,
    pub p: u32,
    pub pm1: u32,
    pub v_even: bool,
    pub b_even: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgoParams {
    pub max_outer: usize,
    pub threshold: f64,
    pub seed: u64,
    /// Symmetric box `|c| ≤ coeff_bound` on the scale-free unknowns (`V` in
    /// step 1; `s₁, p, p_{m+1,i}` in step 2). The certificate conditions are
    /// invariant under scaling these up, so without the box the subproblems
    /// have unbounded optimal faces that stall the interior-point method.
    pub coeff_bound: f64,
}

impl Default for AlgoParams {
    fn default() -> Self {
        AlgoParams { max_outer: 30, threshold: 1e-3, seed: 0, coeff_bound: 1e2 }
    }
}

/// Optional overrides for the iteration-0 controller.
#[derive(Debug, Clone, Default)]
pub struct InitOverride {
    pub s1: Option<Polynomial>,
    pub p: Option<Vec<Polynomial>>,
    pub pm1: Option<Vec<Polynomial>>,
    /// Gain of the default feedback `p = -ρ Gᵀ(x)(x - x*)`.
    pub rho: Option<f64>,
}

/// The user-facing synthesis problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub varnames: Vec<String>,
    pub f: PolyVector,
    pub g: PolyMatrix,
    /// Allowable-set constraints `wᵢ(x) ≤ 0`; one CBF is synthesized per entry.
    pub w: Vec<Polynomial>,
    /// Operating region `r(x) ≤ 0`, a compact superset of the allowable set.
    pub r: Polynomial,
    /// Positive definite with respect to `x*`.
    pub l: Polynomial,
    pub xstar: Point,
    pub eps_s1: f64,
    /// Center points `(x_{c,i}, B_{c,i})`, one per CBF.
    pub centers: Vec<(Point, f64)>,
    pub degrees: DegreeTable,
    pub algo: AlgoParams,
    pub init: InitOverride,
}

/// The controller triple fixed during step 1 and recovered in step 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerTriple {
    pub s1: Polynomial,
    pub p: Vec<Polynomial>,
    pub pm1: Vec<Polynomial>,
}

/// One SOS membership witness: `target(x) = Z(x-center)ᵀ Q Z(x-center)` with
/// `Q ⪰ 0`.
#[derive(Debug, Clone)]
pub struct SosWitness {
    pub name: String,
    pub basis: Vec<Monomial>,
    pub center: Point,
    pub gram: DMatrix<f64>,
    pub target: Polynomial,
}

#[derive(Debug, Clone, Default)]
pub struct CertMeta {
    pub iteration: usize,
    pub cost: f64,
    pub step1_inner_iters: usize,
    pub step2_inner_iters: usize,
}

/// Everything the synthesis produces: the certified functions, the shared
/// controller numerator/denominator, the slacks, and the PSD witnesses.
#[derive(Debug, Clone)]
pub struct CertificateSet {
    pub v: Polynomial,
    pub b: Vec<Polynomial>,
    pub s1: Polynomial,
    pub s2: Polynomial,
    pub s3: Vec<Polynomial>,
    pub s4: Vec<Polynomial>,
    pub p: Vec<Polynomial>,
    pub pm1: Vec<Polynomial>,
    pub eps: Vec<f64>,
    pub witnesses: Vec<SosWitness>,
    pub meta: CertMeta,
}

impl ProblemSpec {
    pub fn nvars(&self) -> usize {
        self.varnames.len()
    }

    pub fn ninputs(&self) -> usize {
        self.g.shape().1
    }

    /// Number of CBFs (= number of allowable-set constraints).
    pub fn ncbf(&self) -> usize {
        self.w.len()
    }

    /// Default `l(x) = Σ (x_j - x*_j)²`.
    pub fn default_l(nvars: usize, xstar: &Point) -> Polynomial {
        let mut out = Polynomial::zero(nvars);
        for j in 0..nvars {
            let d = Polynomial::var(nvars, j)
                .sub(&Polynomial::constant(nvars, xstar.coords()[j]))
                .unwrap();
            out = out.add(&d.mul(&d).unwrap()).unwrap();
        }
        out
    }

    /// Iteration-0 controller: `s₁ ≡ 1`, `p = -ρ Gᵀ(x)(x - x*)`,
    /// `p_{m+1,i} ≡ 1`, with any per-field overrides applied.
    pub fn initial_controller(&self) -> ControllerTriple {
        let n = self.nvars();
        let m = self.ninputs();
        let s1 = self.init.s1.clone().unwrap_or_else(|| Polynomial::one(n));
        let p = match &self.init.p {
            Some(p) => p.clone(),
            None => {
                let rho = self.init.rho.unwrap_or(1.0);
                let shift = PolyVector::new(
                    (0..n)
                        .map(|j| {
                            Polynomial::var(n, j)
                                .sub(&Polynomial::constant(n, self.xstar.coords()[j]))
                                .unwrap()
                        })
                        .collect(),
                );
                (0..m)
                    .map(|k| {
                        self.g
                            .column(k)
                            .dot(&shift)
                            .expect("dimensions checked")
                            .scale(-rho)
                    })
                    .collect()
            }
        };
        let pm1 = self
            .init
            .pm1
            .clone()
            .unwrap_or_else(|| vec![Polynomial::one(n); self.ncbf()]);
        ControllerTriple { s1, p, pm1 }
    }

    /// Sampled structural checks: `l` positive definite w.r.t. `x*`, the
    /// `wᵢ`/`r` sublevel sets bounded, the allowable set inside the operating
    /// region, and consistent dimensions. Returns warnings for conditions
    /// that degrade the certificates without invalidating the synthesis.
    pub fn validate(&self) -> Result<Vec<String>, CertsError> {
        let n = self.nvars();
        let fail = |msg: String| Err(CertsError::Validation(msg));
        if n == 0 {
            return fail("no state variables".into());
        }
        if self.ninputs() == 0 {
            return fail("at least one input is required".into());
        }
        if self.f.len() != n {
            return fail(format!("f has {} rows, expected {n}", self.f.len()));
        }
        if self.g.shape().0 != n {
            return fail(format!("G has {} rows, expected {n}", self.g.shape().0));
        }
        if self.centers.len() != self.ncbf() {
            return fail(format!(
                "{} center points for {} constraints",
                self.centers.len(),
                self.ncbf()
            ));
        }
        if !(self.eps_s1 > 0.0) {
            return fail("eps_s1 must be positive".into());
        }
        if !self.xstar.is_finite() || self.xstar.dim() != n {
            return fail("equilibrium point must be finite of state dimension".into());
        }
        for (c, _) in &self.centers {
            if !c.is_finite() || c.dim() != n {
                return fail("center points must be finite of state dimension".into());
            }
        }

        let mut warnings = Vec::new();
        // The equilibrium must lie strictly inside the operating region (the
        // reduced Gram bases for s2 and the CLF constraint rely on r(x*) < 0).
        let r_star = self.r.evaluate(&self.xstar)?;
        if r_star >= 0.0 {
            return fail(format!("equilibrium lies outside the operating region: r(x*) = {r_star}"));
        }
        let lx = self.l.evaluate(&self.xstar)?;
        if lx.abs() > 1e-9 {
            return fail(format!("l(x*) = {lx}, expected 0"));
        }
        let mut rng = sampling::stream_rng(self.algo.seed, 0x1c);
        for radius in [1e-2, 1.0] {
            for _ in 0..500 {
                let dir = sampling::unit_direction(&mut rng, n);
                let x = Point::new(
                    dir.iter()
                        .zip(self.xstar.coords())
                        .map(|(d, c)| c + radius * d)
                        .collect(),
                );
                if self.l.evaluate(&x)? <= 0.0 {
                    return fail(format!("l is not positive at sampled shell point {x:?}"));
                }
            }
        }

        // Boundedness of {w_i <= 0} and {r <= 0}: top-degree form positive on
        // sampled directions.
        let mut rng = sampling::stream_rng(self.algo.seed, 0xb0);
        for (name, poly) in self
            .w
            .iter()
            .enumerate()
            .map(|(i, p)| (format!("w{}", i + 1), p))
            .chain(std::iter::once(("r".to_string(), &self.r)))
        {
            if poly.degree() == 0 {
                return fail(format!("{name} is constant"));
            }
            for _ in 0..1000 {
                let dir = sampling::unit_direction(&mut rng, n);
                if sampling::top_form_value(poly, &dir) <= 0.0 {
                    return fail(format!("{name}'s top-degree form is not positive definite (unbounded sublevel set)"));
                }
            }
        }

        // X_a ⊆ X_op spot check (vacuous without state constraints). The
        // inclusion is an assumption of the synthesis, but published instances
        // violate it at corner points of the allowable set; the certificates
        // then only cover X_a ∩ X_op, so this is reported as a warning.
        if self.w.is_empty() {
            return Ok(warnings);
        }
        let mut bbox = sampling::bounding_box(&self.w[0], 10.0);
        for w in &self.w[1..] {
            bbox = sampling::intersect_boxes(&bbox, &sampling::bounding_box(w, 10.0));
        }
        let mut rng = sampling::stream_rng(self.algo.seed, 0xa0);
        let mut outside = 0usize;
        let mut example = None;
        for _ in 0..1000 {
            let x = sampling::sample_in_box(&mut rng, &bbox);
            let in_xa = self
                .w
                .iter()
                .map(|w| w.evaluate(&x))
                .collect::<Result<Vec<f64>, _>>()?
                .iter()
                .all(|&v| v <= 0.0);
            if in_xa && self.r.evaluate(&x)? > 0.0 {
                outside += 1;
                if example.is_none() {
                    example = Some(x);
                }
            }
        }
        if let Some(x) = example {
            warnings.push(format!(
                "allowable set is not contained in the operating region ({outside}/1000 samples outside, e.g. {:?}); certificates cover the intersection only",
                x.coords()
            ));
        }
        Ok(warnings)
    }
}

// ---------------------------------------------------------------------------
// Constraint builders
// ---------------------------------------------------------------------------

/// `s₁ f + G p` as a vector of (affine) polynomials. The bilinearity guard in
/// `try_mul` rejects variable-times-variable products.
fn controlled_field(
    f: &PolyVector,
    g: &PolyMatrix,
    s1: &ParamPolynomial,
    p: &[ParamPolynomial],
) -> Result<Vec<ParamPolynomial>, SosError> {
    let n = f.len();
    let m = g.shape().1;
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let mut acc = s1.try_mul(&ParamPolynomial::from_poly(f.entry(j)))?;
        for k in 0..m {
            acc = acc.add(&p[k].try_mul(&ParamPolynomial::from_poly(g.entry(j, k)))?);
        }
        out.push(acc);
    }
    Ok(out)
}

/// CLF decrease constraint `-∇Vᵀ(s₁ f + G p) - l² (+ s₂ r)`.
///
/// Exactly one side of the bilinear pairing (`V` versus `s₁, p`) may carry
/// decision variables.
pub fn clf_constraint(
    f: &PolyVector,
    g: &PolyMatrix,
    v: &ParamPolynomial,
    s1: &ParamPolynomial,
    p: &[ParamPolynomial],
    l: &Polynomial,
    relax: Option<(&ParamPolynomial, &Polynomial)>,
) -> Result<ParamPolynomial, SosError> {
    let field = controlled_field(f, g, s1, p)?;
    let grad = v.gradient();
    let n = v.nvars();
    let mut acc = ParamPolynomial::zero(n);
    for j in 0..n {
        acc = acc.sub(&grad[j].try_mul(&field[j])?);
    }
    acc = acc.sub(&ParamPolynomial::from_poly(&l.mul(l)?));
    if let Some((s2, r)) = relax {
        acc = acc.add(&s2.mul_poly(r));
    }
    Ok(acc)
}

/// CBF invariance constraint
/// `-∇Bᵢᵀ(s₁ f + G p) - p_{m+1,i} Bᵢ (+ s₃ᵢ r) (+ εᵢ)`.
pub fn cbf_constraint(
    f: &PolyVector,
    g: &PolyMatrix,
    b_i: &ParamPolynomial,
    s1: &ParamPolynomial,
    p: &[ParamPolynomial],
    pm1_i: &ParamPolynomial,
    relax: Option<(&ParamPolynomial, &Polynomial)>,
    slack: Option<&AffineExpr>,
) -> Result<ParamPolynomial, SosError> {
    let field = controlled_field(f, g, s1, p)?;
    let grad = b_i.gradient();
    let n = b_i.nvars();
    let mut acc = ParamPolynomial::zero(n);
    for j in 0..n {
        acc = acc.sub(&grad[j].try_mul(&field[j])?);
    }
    acc = acc.sub(&pm1_i.try_mul(b_i)?);
    if let Some((s3, r)) = relax {
        acc = acc.add(&s3.mul_poly(r));
    }
    if let Some(eps) = slack {
        let mut sl = ParamPolynomial::zero(n);
        sl.add_term(Monomial::unit(n), eps.clone());
        acc = acc.add(&sl);
    }
    Ok(acc)
}

/// Containment constraint `Bᵢ - s₄ᵢ wᵢ`, certifying `{Bᵢ ≤ 0} ⊆ {wᵢ ≤ 0}`.
pub fn containment_constraint(
    b_i: &ParamPolynomial,
    s4_i: &ParamPolynomial,
    w_i: &Polynomial,
) -> ParamPolynomial {
    b_i.sub(&s4_i.mul_poly(w_i))
}

/// Strict-positivity constraint `s₁ - ε_{s1}`.
pub fn s1_positivity(s1: &ParamPolynomial, eps_s1: f64) -> ParamPolynomial {
    let mut shift = ParamPolynomial::zero(s1.nvars());
    shift.add_term(Monomial::unit(s1.nvars()), AffineExpr::constant(-eps_s1));
    s1.add(&shift)
}

// ---------------------------------------------------------------------------
// Cost terms
// ---------------------------------------------------------------------------

/// Trace surrogate of the safe-set volume: the trace of the canonical Gram
/// representation of `Bᵢ` in its shifted basis. The canonical Gram spreads
/// each coefficient uniformly over its representing positions, so the trace
/// is the fixed linear functional `Σ_α coeff(2α) / N_{2α}` over the square
/// monomials of the half basis.
pub fn cost_c1_terms(b_basis: &[Monomial], b_vars: &[VarId]) -> Vec<(VarId, f64)> {
    let nvars = b_basis.first().map_or(0, |m| m.nvars());
    let maxdeg = b_basis.iter().map(|m| m.degree()).max().unwrap_or(0);
    let half = monomial_basis(nvars, maxdeg / 2, None, None);
    // Count representations of each product monomial (ordered pairs).
    let mut reps: BTreeMap<Monomial, f64> = BTreeMap::new();
    for a in &half {
        for b in &half {
            *reps.entry(a.mul(b)).or_insert(0.0) += 1.0;
        }
    }
    let index: BTreeMap<&Monomial, usize> = b_basis.iter().zip(0..).collect();
    let mut out = Vec::new();
    for alpha in &half {
        let sq = alpha.mul(alpha);
        if let Some(&k) = index.get(&sq) {
            out.push((b_vars[k], 1.0 / reps[&sq]));
        }
    }
    out
}

/// Center-point deviation cost `(Bᵢ(x_{c,i}) - B_{c,i})²` as a rank-one
/// quadratic over coefficient variables.
pub struct QuadCost {
    pub quad: BTreeMap<(VarId, VarId), f64>,
    pub linear: BTreeMap<VarId, f64>,
    pub constant: f64,
}

impl QuadCost {
    pub fn new() -> Self {
        QuadCost { quad: BTreeMap::new(), linear: BTreeMap::new(), constant: 0.0 }
    }

    /// Add `(expr)²`.
    pub fn add_square(&mut self, expr: &AffineExpr) {
        let terms: Vec<(VarId, f64)> = expr.linear_terms().map(|(v, c)| (*v, *c)).collect();
        for (i, &(vi, ci)) in terms.iter().enumerate() {
            for &(vj, cj) in terms.iter().skip(i) {
                let key = (vi, vj);
                *self.quad.entry(key).or_insert(0.0) += if vi == vj { ci * cj } else { ci * cj };
            }
        }
        for &(v, c) in &terms {
            *self.linear.entry(v).or_insert(0.0) += 2.0 * expr.constant * c;
        }
        self.constant += expr.constant * expr.constant;
    }

    pub fn add_linear(&mut self, v: VarId, c: f64) {
        *self.linear.entry(v).or_insert(0.0) += c;
    }

    pub fn apply(self, prog: &mut SosProgram) -> Result<(), SosError> {
        prog.set_objective(
            self.quad.into_iter().map(|((i, j), c)| (i, j, c)).collect(),
            self.linear.into_iter().collect(),
            self.constant,
        )
    }
}

impl Default for QuadCost {
    fn default() -> Self {
        Self::new()
    }
}

// ---------------------------------------------------------------------------
// Step-1 / Step-2 program assembly
// ---------------------------------------------------------------------------

pub struct Step1Program {
    pub prog: SosProgram,
    pub v: ParamPolynomial,
    pub b: Vec<ParamPolynomial>,
    pub s2: ParamPolynomial,
    pub s3: Vec<ParamPolynomial>,
    pub s4: Vec<ParamPolynomial>,
}

/// Step 1: hold the controller triple fixed, find `V, Bᵢ, s₂, s₃ᵢ, s₄ᵢ`
/// minimizing `Σ tr(Q_{B,i}) + (Bᵢ(x_{c,i}) - B_{c,i})²`.
pub fn build_step1_program(
    spec: &ProblemSpec,
    ctrl: &ControllerTriple,
) -> Result<Step1Program, CertsError> {
    let n = spec.nvars();
    let t = spec.ncbf();
    let deg = &spec.degrees;
    let mut prog = SosProgram::new();

    // V: coefficient unknown in (x - x*) coordinates, no constant term, with
    // an SOS Gram in the same shifted coordinates.
    let v_degs: Vec<u32> = degree_list(deg.v, deg.v_even, false);
    let v_basis = monomial_basis(n, deg.v, None, Some(&v_degs));
    let v_start = prog.num_vars() as u32;
    let v = prog.new_poly_var_shifted(n, &v_basis, &spec.xstar);
    add_coeff_boxes(
        &mut prog,
        n,
        (v_start..v_start + v_basis.len() as u32).map(VarId),
        spec.algo.coeff_bound,
        "V-box",
    )?;
    let v_half_degs: Vec<u32> = (1..=deg.v.div_ceil(2)).collect();
    let v_half = monomial_basis(n, deg.v.div_ceil(2), None, Some(&v_half_degs));
    prog.assert_sos_shifted(&v, &v_half, &spec.xstar, "V-sos")?;
    // V(x*) = 0 holds by basis construction; pin explicitly if a constant
    // term ever enters (e.g. custom degree lists).
    let at_star = v.eval_point(&spec.xstar);
    if at_star.linear_terms().any(|(_, c)| c.abs() > 1e-9) || at_star.constant.abs() > 1e-9 {
        let mut pp = ParamPolynomial::zero(n);
        pp.add_term(Monomial::unit(n), at_star);
        prog.assert_eq_zero(&pp, "V(xstar)");
    }

    // B_i: free coefficients in (x - x_{c,i}) coordinates.
    let b_degs: Vec<u32> = degree_list(deg.b, deg.b_even, true);
    let b_basis = monomial_basis(n, deg.b, None, Some(&b_degs));
    let mut b = Vec::with_capacity(t);
    let mut b_vars: Vec<Vec<VarId>> = Vec::with_capacity(t);
    for (center, _) in &spec.centers {
        let start = prog.num_vars() as u32;
        let bi = prog.new_poly_var_shifted(n, &b_basis, center);
        b_vars.push((start..start + b_basis.len() as u32).map(VarId).collect());
        b.push(bi);
    }

    // Multipliers. Every feasible point has s2(x*) = 0 (the relaxed CLF
    // constraint is nonnegative yet equals s2(x*) r(x*) <= 0 there), so s2 is
    // built on a shifted basis without the constant monomial. This keeps the
    // Gram blocks away from a forced singular face.
    let (s2, _) = if deg.s2 >= 2 {
        let s2_degs: Vec<u32> = (1..=deg.s2 / 2).collect();
        let s2_half = monomial_basis(n, deg.s2 / 2, None, Some(&s2_degs));
        let (pp, idx) = prog.new_sos_var_shifted(n, &s2_half, &spec.xstar, "s2-sos");
        (pp, Some(idx))
    } else {
        (ParamPolynomial::zero(n), None)
    };
    let s3_half = monomial_basis(n, deg.s3 / 2, None, None);
    let s4_half = monomial_basis(n, deg.s4 / 2, None, None);
    let mut s3 = Vec::with_capacity(t);
    let mut s4 = Vec::with_capacity(t);
    for i in 0..t {
        let (s3i, _) = prog.new_sos_var(n, &s3_half, &format!("s3-{}-sos", i + 1));
        s3.push(s3i);
        let (s4i, _) = prog.new_sos_var(n, &s4_half, &format!("s4-{}-sos", i + 1));
        s4.push(s4i);
    }

    // Fixed controller as parameter polynomials.
    let s1_pp = ParamPolynomial::from_poly(&ctrl.s1);
    let p_pp: Vec<ParamPolynomial> = ctrl.p.iter().map(ParamPolynomial::from_poly).collect();

    // Constraints. The relaxed CLF constraint vanishes (to second order) at
    // x*, so its Gram basis is shifted there and omits the constant.
    let clf = clf_constraint(&spec.f, &spec.g, &v, &s1_pp, &p_pp, &spec.l, Some((&s2, &spec.r)))?;
    prog.assert_sos_shifted(&clf, &clf_half_basis(&clf), &spec.xstar, "clf")?;
    for i in 0..t {
        let pm1_pp = ParamPolynomial::from_poly(&ctrl.pm1[i]);
        let cbf = cbf_constraint(
            &spec.f,
            &spec.g,
            &b[i],
            &s1_pp,
            &p_pp,
            &pm1_pp,
            Some((&s3[i], &spec.r)),
            None,
        )?;
        prog.assert_sos(&cbf, &default_half_basis(&cbf), &format!("cbf-{}", i + 1))?;
        let cont = containment_constraint(&b[i], &s4[i], &spec.w[i]);
        prog.assert_sos(&cont, &default_half_basis(&cont), &format!("containment-{}", i + 1))?;
    }

    // Objective c1 + c2.
    let mut cost = QuadCost::new();
    for i in 0..t {
        for (var, coef) in cost_c1_terms(&b_basis, &b_vars[i]) {
            cost.add_linear(var, coef);
        }
        let (center, target) = &spec.centers[i];
        let mut dev = b[i].eval_point(center);
        dev.constant -= target;
        cost.add_square(&dev);
    }
    cost.apply(&mut prog)?;

    Ok(Step1Program { prog, v, b, s2, s3, s4 })
}

pub struct Step2Program {
    pub prog: SosProgram,
    pub s1: ParamPolynomial,
    pub s2: ParamPolynomial,
    pub s3: Vec<ParamPolynomial>,
    pub p: Vec<ParamPolynomial>,
    pub pm1: Vec<ParamPolynomial>,
    pub eps: Vec<VarId>,
}

/// Step 2: hold `V, Bᵢ` fixed, find `εᵢ, s₁, s₂, s₃ᵢ, p, p_{m+1,i}`
/// minimizing `Σ εᵢ` with the CBF constraints slack-relaxed.
///
/// `clf_margin` adds `margin · l(x)` to the CLF constraint. Zero is the
/// published constraint; a tiny positive value restores an interior when the
/// fixed `V` sits exactly on the constraint boundary (the certified decrease
/// then holds outside `l(x) ≤ margin`).
///
/// With `pin_slacks` the slack variables are dropped entirely (ε ≡ 0) and the
/// program becomes the pure feasibility question behind the alternation''s
/// maintenance lemma. This resolves the sign of near-zero optimal slacks at
/// feasibility accuracy instead of objective accuracy.
pub fn build_step2_program(
    spec: &ProblemSpec,
    v_fixed: &Polynomial,
    b_fixed: &[Polynomial],
    clf_margin: f64,
    pin_slacks: bool,
) -> Result<Step2Program, CertsError> {
    let n = spec.nvars();
    let m = spec.ninputs();
    let t = spec.ncbf();
    let deg = &spec.degrees;
    let mut prog = SosProgram::new();

    let ctrl_start = prog.num_vars() as u32;
    let s1_basis = monomial_basis(n, deg.s1, None, None);
    let s1 = prog.new_poly_var(n, &s1_basis);
    let p_basis = monomial_basis(n, deg.p, None, None);
    let p: Vec<ParamPolynomial> = (0..m).map(|_| prog.new_poly_var(n, &p_basis)).collect();
    let pm1_basis = monomial_basis(n, deg.pm1, None, None);
    let pm1: Vec<ParamPolynomial> = (0..t).map(|_| prog.new_poly_var(n, &pm1_basis)).collect();
    let ctrl_end = prog.num_vars() as u32;
    add_coeff_boxes(
        &mut prog,
        n,
        (ctrl_start..ctrl_end).map(VarId),
        spec.algo.coeff_bound,
        "ctrl-box",
    )?;
    let eps: Vec<VarId> = if pin_slacks {
        Vec::new()
    } else {
        (0..t).map(|_| prog.new_scalar_var()).collect()
    };
    // The slack objective has a recession direction (scaling up the
    // controller and multipliers drives every ε below any bound once a
    // strictly feasible ray exists), so each slack is floored at -1. Any
    // negative slack already certifies compatibility, and ε = 0 remains
    // feasible, so the floor does not affect which iterates are accepted.
    for (i, &e) in eps.iter().enumerate() {
        let mut lb = ParamPolynomial::zero(n);
        let mut expr = AffineExpr::var(e);
        expr.constant = 1.0;
        lb.add_term(Monomial::unit(n), expr);
        prog.assert_sos(&lb, &[Monomial::unit(n)], &format!("eps-floor-{}", i + 1))?;
    }

    let s2 = if deg.s2 >= 2 {
        let s2_degs: Vec<u32> = (1..=deg.s2 / 2).collect();
        let s2_half = monomial_basis(n, deg.s2 / 2, None, Some(&s2_degs));
        prog.new_sos_var_shifted(n, &s2_half, &spec.xstar, "s2-sos").0
    } else {
        ParamPolynomial::zero(n)
    };
    let s3_half = monomial_basis(n, deg.s3 / 2, None, None);
    let mut s3 = Vec::with_capacity(t);
    for i in 0..t {
        let (s3i, _) = prog.new_sos_var(n, &s3_half, &format!("s3-{}-sos", i + 1));
        s3.push(s3i);
    }

    let v_pp = ParamPolynomial::from_poly(v_fixed);
    let mut clf = clf_constraint(&spec.f, &spec.g, &v_pp, &s1, &p, &spec.l, Some((&s2, &spec.r)))?;
    if clf_margin > 0.0 {
        clf = clf.add_poly(&spec.l.scale(clf_margin));
    }
    prog.assert_sos_shifted(&clf, &clf_half_basis(&clf), &spec.xstar, "clf")?;
    for i in 0..t {
        let b_pp = ParamPolynomial::from_poly(&b_fixed[i]);
        let slack = if pin_slacks { None } else { Some(AffineExpr::var(eps[i])) };
        let cbf = cbf_constraint(
            &spec.f,
            &spec.g,
            &b_pp,
            &s1,
            &p,
            &pm1[i],
            Some((&s3[i], &spec.r)),
            slack.as_ref(),
        )?;
        prog.assert_sos(&cbf, &default_half_basis(&cbf), &format!("cbf-{}", i + 1))?;
    }
    let s1_pos = s1_positivity(&s1, spec.eps_s1);
    prog.assert_sos(&s1_pos, &default_half_basis(&s1_pos), "s1-positivity")?;

    let mut cost = QuadCost::new();
    for &e in &eps {
        cost.add_linear(e, 1.0);
    }
    cost.apply(&mut prog)?;

    Ok(Step2Program { prog, s1, s2, s3, p, pm1, eps })
}

/// Box `-bound ≤ v ≤ bound` for each listed variable via two 1x1 PSD slacks.
fn add_coeff_boxes(
    prog: &mut SosProgram,
    nvars: usize,
    vars: impl Iterator<Item = VarId>,
    bound: f64,
    label: &str,
) -> Result<(), SosError> {
    let unit = [Monomial::unit(nvars)];
    for (k, v) in vars.enumerate() {
        let mut hi = ParamPolynomial::zero(nvars);
        let mut e = AffineExpr::var(v).scale(-1.0);
        e.constant = bound;
        hi.add_term(Monomial::unit(nvars), e);
        prog.assert_sos(&hi, &unit, &format!("{label}-ub-{k}"))?;
        let mut lo = ParamPolynomial::zero(nvars);
        let mut e = AffineExpr::var(v);
        e.constant = bound;
        lo.add_term(Monomial::unit(nvars), e);
        prog.assert_sos(&lo, &unit, &format!("{label}-lb-{k}"))?;
    }
    Ok(())
}

/// Half basis for the CLF constraint: total degrees 1..⌈deg/2⌉ (no constant,
/// since the constraint vanishes at x*).
fn clf_half_basis(pp: &ParamPolynomial) -> Vec<Monomial> {
    let hi = pp.degree().div_ceil(2).max(1);
    let degs: Vec<u32> = (1..=hi).collect();
    monomial_basis(pp.nvars(), hi, None, Some(&degs))
}

fn degree_list(maxdeg: u32, even: bool, include_constant: bool) -> Vec<u32> {
    let lo = if include_constant { 0 } else { 1 };
    (lo..=maxdeg)
        .filter(|d| !even || d % 2 == 0)
        .filter(|d| include_constant || *d > 0)
        .collect()
}

/// Substitute a solved decision vector into a program's memberships,
/// producing serializable witnesses.
pub fn extract_witnesses(prog: &SosProgram, vars: &[f64]) -> Vec<SosWitness> {
    prog.memberships
        .iter()
        .map(|mem| {
            let q = mem.gram.substitute(vars);
            let d = q.len();
            SosWitness {
                name: mem.label.clone(),
                basis: mem.gram.basis.clone(),
                center: mem.gram.center.clone(),
                gram: DMatrix::from_fn(d, d, |i, j| q[i][j]),
                target: mem.target.substitute(vars).clean(0.0),
            }
        })
        .collect()
}

/// Diagnose an infeasible subproblem from the solver's Farkas ray: reports the
/// memberships whose matching equalities dominate the certificate.
pub fn infeasibility_diagnosis(labels: &[String], farkas: &[f64]) -> String {
    let mut weights: BTreeMap<String, f64> = BTreeMap::new();
    for (label, w) in labels.iter().zip(farkas) {
        let family = label.split('[').next().unwrap_or(label).to_string();
        *weights.entry(family).or_insert(0.0) += w.abs();
    }
    let mut items: Vec<(String, f64)> = weights.into_iter().collect();
    items.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return "no dominant constraint family identified".to_string();
    }
    items
        .iter()
        .take(3)
        .map(|(name, w)| format!("{name} ({:.0}%)", 100.0 * w / total))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Convenience: substitute a solution into handle polynomials.
pub fn substitute_all(prog: &SosProgram, sol: &SdpSolution, polys: &[&ParamPolynomial]) -> (Vec<Polynomial>, Vec<f64>) {
    let vars = prog.recover_vars(sol);
    let out = polys.iter().map(|p| p.substitute(&vars)).collect();
    (out, vars)
}

/// Program size statistics in the reporting convention: `poly_dof` counts
/// polynomial-coefficient unknowns, `psd_entries` counts scalar entries of
/// all PSD blocks.
pub fn program_stats(prog: &SosProgram) -> Result<SdpStats, CertsError> {
    Ok(prog.compile()?.stats)
}
