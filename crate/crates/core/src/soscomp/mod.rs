//! Sum-of-squares programs: polynomials with affine-in-parameter coefficients,
//! Gram-matrix SOS memberships, and compilation into a block-diagonal SDP.
//!
//! A program owns a growing vector of scalar decision variables `v`. Unknown
//! polynomials are either coefficient-parameterized ([`SosProgram::new_poly_var`])
//! or Gram-parameterized SOS unknowns ([`SosProgram::new_sos_var`]). Concrete
//! SOS requirements on affine polynomial expressions go through
//! [`SosProgram::assert_sos`], which allocates a fresh Gram matrix and one
//! coefficient-matching equality per monomial.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::poly::{shift_monomial, Monomial, Point, PolyError, Polynomial};
use crate::sdp::{EqRow, SdpProblem, SdpStats};

#[derive(Debug, Error)]
pub enum SosError {
    #[error("polynomial dimension error: {0}")]
    Poly(#[from] PolyError),
    #[error("bilinear product: both factors depend on decision variables ({left} * {right})")]
    BilinearTerm { left: String, right: String },
    #[error("basis deficiency in `{label}`: monomials {monomials:?} are not products of two basis elements")]
    BasisDeficiency { label: String, monomials: Vec<String> },
    #[error("objective matrix is not positive semidefinite (min eigenvalue {min_eig})")]
    NonPsdObjective { min_eig: f64 },
    #[error("contradictory constraint in `{label}`: coefficient of {monomial} is constant {residual} != 0")]
    ContradictoryConstant { label: String, monomial: String, residual: f64 },
    #[error("objective references unknown variable id {0}")]
    UnknownVar(u32),
}

/// Index of a scalar decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub u32);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Scalar affine expression `constant + Σ coeff · v`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineExpr {
    pub constant: f64,
    linear: BTreeMap<VarId, f64>,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        AffineExpr { constant: c, linear: BTreeMap::new() }
    }

    pub fn var(v: VarId) -> Self {
        let mut linear = BTreeMap::new();
        linear.insert(v, 1.0);
        AffineExpr { constant: 0.0, linear }
    }

    pub fn is_constant(&self) -> bool {
        self.linear.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.linear.is_empty()
    }

    pub fn linear_terms(&self) -> impl Iterator<Item = (&VarId, &f64)> {
        self.linear.iter()
    }

    pub fn add_scaled_var(&mut self, v: VarId, c: f64) {
        if c == 0.0 {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.linear.entry(v) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                let nv = e.get() + c;
                if nv == 0.0 {
                    e.remove();
                } else {
                    *e.get_mut() = nv;
                }
            }
        }
    }

    pub fn add(&self, other: &AffineExpr) -> AffineExpr {
        let mut out = self.clone();
        out.constant += other.constant;
        for (v, c) in &other.linear {
            out.add_scaled_var(*v, *c);
        }
        out
    }

    pub fn sub(&self, other: &AffineExpr) -> AffineExpr {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> AffineExpr {
        if s == 0.0 {
            return AffineExpr::constant(0.0);
        }
        let mut out = self.clone();
        out.constant *= s;
        for c in out.linear.values_mut() {
            *c *= s;
        }
        out
    }

    /// Substitute a concrete parameter vector.
    pub fn eval(&self, v: &[f64]) -> f64 {
        self.constant + self.linear.iter().map(|(id, c)| c * v[id.0 as usize]).sum::<f64>()
    }
}

/// Polynomial whose coefficients are affine expressions in the decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPolynomial {
    nvars: usize,
    terms: BTreeMap<Monomial, AffineExpr>,
}

impl ParamPolynomial {
    pub fn zero(nvars: usize) -> Self {
        ParamPolynomial { nvars, terms: BTreeMap::new() }
    }

    pub fn from_poly(p: &Polynomial) -> Self {
        let mut out = ParamPolynomial::zero(p.nvars());
        for (m, c) in p.terms() {
            out.terms.insert(m.clone(), AffineExpr::constant(*c));
        }
        out
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &AffineExpr)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Monomial) -> AffineExpr {
        self.terms.get(m).cloned().unwrap_or_else(|| AffineExpr::constant(0.0))
    }

    pub fn is_concrete(&self) -> bool {
        self.terms.values().all(|a| a.is_constant())
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    pub fn min_degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).min().unwrap_or(0)
    }

    pub fn add_term(&mut self, m: Monomial, a: AffineExpr) {
        if a.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(e) => {
                e.insert(a);
            }
            Entry::Occupied(mut e) => {
                let s = e.get().add(&a);
                if s.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = s;
                }
            }
        }
    }

    pub fn add(&self, other: &ParamPolynomial) -> ParamPolynomial {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (m, a) in &other.terms {
            out.add_term(m.clone(), a.clone());
        }
        out
    }

    pub fn sub(&self, other: &ParamPolynomial) -> ParamPolynomial {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> ParamPolynomial {
        let mut out = ParamPolynomial::zero(self.nvars);
        if s == 0.0 {
            return out;
        }
        for (m, a) in &self.terms {
            out.terms.insert(m.clone(), a.scale(s));
        }
        out
    }

    pub fn add_poly(&self, p: &Polynomial) -> ParamPolynomial {
        self.add(&ParamPolynomial::from_poly(p))
    }

    /// Multiply by a concrete polynomial.
    pub fn mul_poly(&self, p: &Polynomial) -> ParamPolynomial {
        let mut out = ParamPolynomial::zero(self.nvars);
        for (ma, a) in &self.terms {
            for (mb, c) in p.terms() {
                out.add_term(ma.mul(mb), a.scale(*c));
            }
        }
        out
    }

    /// Product guarded against bilinearity: at most one factor may carry
    /// decision variables.
    pub fn try_mul(&self, other: &ParamPolynomial) -> Result<ParamPolynomial, SosError> {
        if !self.is_concrete() && !other.is_concrete() {
            return Err(SosError::BilinearTerm {
                left: describe_vars(self),
                right: describe_vars(other),
            });
        }
        if other.is_concrete() {
            Ok(self.mul_poly(&other.to_polynomial_unchecked()))
        } else {
            Ok(other.mul_poly(&self.to_polynomial_unchecked()))
        }
    }

    pub fn gradient(&self) -> Vec<ParamPolynomial> {
        (0..self.nvars)
            .map(|i| {
                let mut out = ParamPolynomial::zero(self.nvars);
                for (m, a) in &self.terms {
                    let e = m.exponents()[i];
                    if e == 0 {
                        continue;
                    }
                    let mut exps = m.exponents().to_vec();
                    exps[i] -= 1;
                    out.add_term(Monomial::new(exps), a.scale(e as f64));
                }
                out
            })
            .collect()
    }

    /// Evaluate at a concrete point, producing an affine expression in `v`.
    pub fn eval_point(&self, x: &Point) -> AffineExpr {
        let mut out = AffineExpr::constant(0.0);
        for (m, a) in &self.terms {
            out = out.add(&a.scale(m.eval(x)));
        }
        out
    }

    /// Substitute a concrete decision vector.
    pub fn substitute(&self, v: &[f64]) -> Polynomial {
        Polynomial::from_terms(self.nvars, self.terms.iter().map(|(m, a)| (m.clone(), a.eval(v))))
    }

    /// Concrete polynomial view; panics when decision variables are present.
    pub fn to_polynomial_unchecked(&self) -> Polynomial {
        Polynomial::from_terms(
            self.nvars,
            self.terms.iter().map(|(m, a)| {
                debug_assert!(a.is_constant());
                (m.clone(), a.constant)
            }),
        )
    }

    /// True when `self` has only even total degrees or only odd.
    pub fn consistent_parity(&self) -> Option<u32> {
        let mut parity = None;
        for m in self.terms.keys() {
            let p = m.degree() % 2;
            match parity {
                None => parity = Some(p),
                Some(q) if q != p => return None,
                _ => {}
            }
        }
        parity
    }
}

fn describe_vars(p: &ParamPolynomial) -> String {
    let mut ids = BTreeSet::new();
    for a in p.terms.values() {
        for (v, _) in a.linear_terms() {
            ids.insert(*v);
            if ids.len() >= 3 {
                break;
            }
        }
    }
    let names: Vec<String> = ids.iter().map(|v| v.to_string()).collect();
    format!("poly with vars [{}…]", names.join(","))
}

/// Gram-matrix attachment of an SOS membership: `poly = Z(x-c)ᵀ Q Z(x-c)`
/// with `Q` symmetric and PSD, entries affine in the decision vector.
#[derive(Debug, Clone)]
pub struct GramBlock {
    pub basis: Vec<Monomial>,
    pub center: Point,
    /// Row-major upper triangle, `entry(i,j)` for `i <= j`.
    entries: Vec<AffineExpr>,
}

impl GramBlock {
    fn tri_index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * self.basis.len() - i * (i + 1) / 2 + j
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> &AffineExpr {
        &self.entries[self.tri_index(i, j)]
    }

    /// Expand `Z(x-c)ᵀ Q Z(x-c)` as a parameterized polynomial.
    pub fn expand(&self) -> ParamPolynomial {
        let n = self.center.dim();
        let mut out = ParamPolynomial::zero(n);
        let shifted: Vec<Polynomial> =
            self.basis.iter().map(|m| shift_monomial(m, &self.center)).collect();
        for i in 0..self.dim() {
            for j in i..self.dim() {
                let prod = shifted[i].mul(&shifted[j]).expect("same nvars");
                let w = if i == j { 1.0 } else { 2.0 };
                let a = self.entry(i, j);
                for (m, c) in prod.terms() {
                    out.add_term(m.clone(), a.scale(w * c));
                }
            }
        }
        out
    }

    /// Substitute a concrete decision vector into the Gram entries.
    pub fn substitute(&self, v: &[f64]) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut q = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in i..d {
                let val = self.entry(i, j).eval(v);
                q[i][j] = val;
                q[j][i] = val;
            }
        }
        q
    }
}

/// One SOS membership registered in a program.
#[derive(Debug, Clone)]
pub struct SosMembership {
    pub label: String,
    pub gram: GramBlock,
    /// The asserted polynomial (affine in `v`). For Gram-parameterized
    /// unknowns this equals the Gram expansion by construction.
    pub target: ParamPolynomial,
    /// Whether coefficient-matching equalities tie `target` to the Gram.
    pub matched: bool,
}

/// Linear equality `expr = 0`.
#[derive(Debug, Clone)]
pub struct LinearEq {
    pub label: String,
    pub expr: AffineExpr,
}

#[derive(Debug, Clone, Default)]
pub struct Objective {
    /// Sparse symmetric PSD quadratic part, upper-triangle entries `(i, j, c)`
    /// with `i <= j` representing `vᵀPv` (`P[i][j] = P[j][i] = c`).
    pub quad: Vec<(VarId, VarId, f64)>,
    /// Linear part `cᵀ v`.
    pub linear: Vec<(VarId, f64)>,
    /// Constant offset, reported with objective values.
    pub constant: f64,
}

/// Declarative SOS program: memberships, equalities, and a quadratic objective.
#[derive(Debug, Default)]
pub struct SosProgram {
    next_var: u32,
    pub memberships: Vec<SosMembership>,
    pub equalities: Vec<LinearEq>,
    pub objective: Objective,
    /// Polynomial-coefficient degrees of freedom: |basis| for coefficient
    /// unknowns, span size for Gram unknowns. Reported as the "variables"
    /// statistic of the compiled SDP.
    poly_dof: usize,
}

/// Monomials of total degree ≤ `maxdeg` (optionally restricted by a parity
/// filter or an explicit set of allowed total degrees), graded-lex sorted.
pub fn monomial_basis(
    nvars: usize,
    maxdeg: u32,
    parity: Option<u32>,
    degree_set: Option<&[u32]>,
) -> Vec<Monomial> {
    let mut out = Vec::new();
    let mut exps = vec![0u32; nvars];
    enumerate_exps(&mut exps, 0, maxdeg, &mut |e| {
        let deg: u32 = e.iter().sum();
        if let Some(p) = parity {
            if deg % 2 != p {
                return;
            }
        }
        if let Some(set) = degree_set {
            if !set.contains(&deg) {
                return;
            }
        }
        out.push(Monomial::new(e.to_vec()));
    });
    out.sort();
    out
}

fn enumerate_exps(exps: &mut [u32], pos: usize, budget: u32, f: &mut impl FnMut(&[u32])) {
    if pos == exps.len() {
        f(exps);
        return;
    }
    for e in 0..=budget {
        exps[pos] = e;
        enumerate_exps(exps, pos + 1, budget - e, f);
    }
    exps[pos] = 0;
}

/// Default Gram half-basis for asserting `pp ∈ Σ[x]`: all monomials with total
/// degree in `[⌈mindeg/2⌉, ⌈maxdeg/2⌉]`.
pub fn default_half_basis(pp: &ParamPolynomial) -> Vec<Monomial> {
    let lo = pp.min_degree().div_ceil(2);
    let hi = pp.degree().div_ceil(2);
    let degs: Vec<u32> = (lo..=hi).collect();
    monomial_basis(pp.nvars(), hi, None, Some(&degs))
}

impl SosProgram {
    pub fn new() -> Self {
        SosProgram::default()
    }

    pub fn num_vars(&self) -> usize {
        self.next_var as usize
    }

    pub fn poly_dof(&self) -> usize {
        self.poly_dof
    }

    fn fresh(&mut self) -> VarId {
        let v = VarId(self.next_var);
        self.next_var += 1;
        v
    }

    /// Fresh scalar decision variable (a degree-zero polynomial unknown).
    pub fn new_scalar_var(&mut self) -> VarId {
        self.poly_dof += 1;
        self.fresh()
    }

    /// Free polynomial unknown with one decision variable per basis monomial.
    pub fn new_poly_var(&mut self, nvars: usize, basis: &[Monomial]) -> ParamPolynomial {
        self.new_poly_var_shifted(nvars, basis, &Point::origin(nvars))
    }

    /// Free polynomial unknown in shifted coordinates:
    /// `p(x) = Σ v_μ (x - c)^μ`, expanded in the original variables.
    pub fn new_poly_var_shifted(
        &mut self,
        nvars: usize,
        basis: &[Monomial],
        center: &Point,
    ) -> ParamPolynomial {
        let mut out = ParamPolynomial::zero(nvars);
        for m in basis {
            let v = self.fresh();
            let expanded = shift_monomial(m, center);
            for (mm, c) in expanded.terms() {
                let mut a = AffineExpr::constant(0.0);
                a.add_scaled_var(v, *c);
                out.add_term(mm.clone(), a);
            }
        }
        self.poly_dof += basis.len();
        out
    }

    /// SOS polynomial unknown, Gram-parameterized: fresh symmetric matrix of
    /// decision variables over the half-basis, returned as its expansion, with
    /// the PSD membership registered.
    pub fn new_sos_var(&mut self, nvars: usize, half_basis: &[Monomial], label: &str) -> (ParamPolynomial, usize) {
        self.new_sos_var_shifted(nvars, half_basis, &Point::origin(nvars), label)
    }

    pub fn new_sos_var_shifted(
        &mut self,
        _nvars: usize,
        half_basis: &[Monomial],
        center: &Point,
        label: &str,
    ) -> (ParamPolynomial, usize) {
        assert!(!half_basis.is_empty(), "half basis must be nonempty");
        let d = half_basis.len();
        let mut entries = Vec::with_capacity(d * (d + 1) / 2);
        for _ in 0..d * (d + 1) / 2 {
            entries.push(AffineExpr::var(self.fresh()));
        }
        let gram = GramBlock { basis: half_basis.to_vec(), center: center.clone(), entries };
        let expanded = gram.expand();
        // Span of the expansion counts as the polynomial degrees of freedom.
        self.poly_dof += expanded.terms.len();
        let idx = self.memberships.len();
        self.memberships.push(SosMembership {
            label: label.to_string(),
            gram,
            target: expanded.clone(),
            matched: false,
        });
        (expanded, idx)
    }

    /// Assert `pp ∈ Σ[x]` with an explicit Gram half-basis. Allocates a fresh
    /// symmetric Gram matrix `Q` and registers one linear equality per
    /// monomial (`Σ_{a·b=μ} Q_ab = coeff_pp(μ)`) plus the PSD membership.
    pub fn assert_sos(
        &mut self,
        pp: &ParamPolynomial,
        half_basis: &[Monomial],
        label: &str,
    ) -> Result<usize, SosError> {
        self.assert_sos_shifted(pp, half_basis, &Point::origin(pp.nvars()), label)
    }

    pub fn assert_sos_shifted(
        &mut self,
        pp: &ParamPolynomial,
        half_basis: &[Monomial],
        center: &Point,
        label: &str,
    ) -> Result<usize, SosError> {
        assert!(!half_basis.is_empty(), "half basis must be nonempty");
        let d = half_basis.len();
        let mut entries = Vec::with_capacity(d * (d + 1) / 2);
        for _ in 0..d * (d + 1) / 2 {
            entries.push(AffineExpr::var(self.fresh()));
        }
        let gram = GramBlock { basis: half_basis.to_vec(), center: center.clone(), entries };
        let expansion = gram.expand();

        // Monomials of pp outside the Gram span: a nonzero constant
        // coefficient there is structurally unmatchable; a variable
        // coefficient is pinned to zero by the matching equality below.
        let missing: Vec<String> = pp
            .terms
            .iter()
            .filter(|(m, a)| !expansion.terms.contains_key(*m) && a.is_constant() && a.constant != 0.0)
            .map(|(m, _)| m.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(SosError::BasisDeficiency { label: label.to_string(), monomials: missing });
        }

        // Matching equalities over the union of supports: expansion − pp = 0.
        let diff = expansion.sub(pp);
        for (m, a) in diff.terms() {
            self.equalities.push(LinearEq {
                label: format!("{label}[{m}]"),
                expr: a.clone(),
            });
        }

        let idx = self.memberships.len();
        self.memberships.push(SosMembership {
            label: label.to_string(),
            gram,
            target: pp.clone(),
            matched: true,
        });
        Ok(idx)
    }

    /// Register `pp = 0` coefficient-wise (one equality per monomial).
    pub fn assert_eq_zero(&mut self, pp: &ParamPolynomial, label: &str) {
        for (m, a) in pp.terms() {
            self.equalities.push(LinearEq { label: format!("{label}[{m}]"), expr: a.clone() });
        }
    }

    /// Set the quadratic objective `vᵀPv + cᵀv (+ constant)`. `quad` holds the
    /// upper triangle of the symmetric matrix `P`, which must be PSD
    /// (validated by an eigenvalue check at `-1e-9`).
    pub fn set_objective(
        &mut self,
        quad: Vec<(VarId, VarId, f64)>,
        linear: Vec<(VarId, f64)>,
        constant: f64,
    ) -> Result<(), SosError> {
        for (i, j, _) in &quad {
            if i.0 >= self.next_var || j.0 >= self.next_var {
                return Err(SosError::UnknownVar(i.0.max(j.0)));
            }
        }
        for (i, _) in &linear {
            if i.0 >= self.next_var {
                return Err(SosError::UnknownVar(i.0));
            }
        }
        if !quad.is_empty() {
            let (_, _, min_eig) = quad_factor(&quad)?;
            if min_eig < -1e-9 {
                return Err(SosError::NonPsdObjective { min_eig });
            }
        }
        self.objective = Objective { quad, linear, constant };
        Ok(())
    }

    /// Compile into a standard-form SDP: one PSD block per SOS membership,
    /// free scalars for the remaining decision variables, equalities from
    /// coefficient matching, and a Schur-complement epigraph block for the
    /// quadratic objective.
    pub fn compile(&self) -> Result<SdpProblem, SosError> {
        // Partition VarIds: Gram entries -> (block, i, j); the rest -> free.
        #[derive(Clone, Copy)]
        enum Slot {
            Free(usize),
            Gram { block: usize, i: usize, j: usize },
        }
        let mut slots: Vec<Option<Slot>> = vec![None; self.next_var as usize];
        let mut block_dims = Vec::with_capacity(self.memberships.len());
        for (b, mem) in self.memberships.iter().enumerate() {
            let d = mem.gram.dim();
            block_dims.push(d);
            for i in 0..d {
                for j in i..d {
                    let a = mem.gram.entry(i, j);
                    // Gram entries allocated by this module are single fresh vars.
                    let mut it = a.linear_terms();
                    if let (Some((v, c)), None) = (it.next(), it.next()) {
                        if *c == 1.0 && a.constant == 0.0 && slots[v.0 as usize].is_none() {
                            slots[v.0 as usize] = Some(Slot::Gram { block: b, i, j });
                        }
                    }
                }
            }
        }
        let mut nfree = 0usize;
        for s in slots.iter_mut() {
            if s.is_none() {
                *s = Some(Slot::Free(nfree));
                nfree += 1;
            }
        }
        let slot_of = |v: VarId| slots[v.0 as usize].expect("slot assigned");

        let mut eqs = Vec::new();
        let mut eq_labels = Vec::new();
        for leq in &self.equalities {
            let mut row = EqRow::default();
            for (v, c) in leq.expr.linear_terms() {
                match slot_of(*v) {
                    Slot::Free(k) => row.free.push((k, *c)),
                    Slot::Gram { block, i, j } => row.cone.push((block, i, j, *c)),
                }
            }
            row.rhs = -leq.expr.constant;
            if row.cone.is_empty() && row.free.is_empty() {
                if row.rhs.abs() > 1e-9 {
                    let (label, monomial) = split_label(&leq.label);
                    return Err(SosError::ContradictoryConstant {
                        label,
                        monomial,
                        residual: row.rhs,
                    });
                }
                continue; // trivially satisfied
            }
            eqs.push(row);
            eq_labels.push(leq.label.clone());
        }

        // Objective: linear part over free variables and Gram entries.
        let mut obj_cone: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        let mut obj_free = vec![0.0; nfree];
        let mut extra_free = 0usize;
        for (v, c) in &self.objective.linear {
            match slot_of(*v) {
                Slot::Free(k) => obj_free[k] += c,
                Slot::Gram { block, i, j } => {
                    *obj_cone.entry((block, i, j)).or_insert(0.0) += c;
                }
            }
        }

        let mut block_labels: Vec<String> = self.memberships.iter().map(|m| m.label.clone()).collect();

        // Quadratic objective: epigraph variable t with PSD block
        // [[I, Rv], [vᵀRᵀ, t]] where P = RᵀR, minimizing t.
        if !self.objective.quad.is_empty() {
            let (vars, r_rows, _) = quad_factor(&self.objective.quad)?;
            let rank = r_rows.len();
            let d = rank + 1;
            let b = block_dims.len();
            block_dims.push(d);
            block_labels.push("objective-epigraph".to_string());
            obj_free.push(1.0); // the epigraph scalar t
            let t_index = nfree + extra_free;
            extra_free += 1;
            // Upper-left identity block.
            for i in 0..rank {
                for j in i..rank {
                    let mut row = EqRow::default();
                    row.cone.push((b, i, j, 1.0));
                    row.rhs = if i == j { 1.0 } else { 0.0 };
                    eqs.push(row);
                    eq_labels.push(format!("objective-epigraph[I{i}{j}]"));
                }
            }
            // Off-diagonal column: X_{i,rank} - (Rv)_i = 0
            for (i, r_row) in r_rows.iter().enumerate() {
                let mut row = EqRow::default();
                row.cone.push((b, i, rank, 1.0));
                for (k, coef) in r_row.iter().enumerate() {
                    if *coef != 0.0 {
                        match slot_of(vars[k]) {
                            Slot::Free(kk) => row.free.push((kk, -coef)),
                            Slot::Gram { block, i: gi, j: gj } => {
                                row.cone.push((block, gi, gj, -coef));
                            }
                        }
                    }
                }
                row.rhs = 0.0;
                eqs.push(row);
                eq_labels.push(format!("objective-epigraph[R{i}]"));
            }
            // Corner: X_{rank,rank} - t = 0
            let mut row = EqRow::default();
            row.cone.push((b, rank, rank, 1.0));
            row.free.push((t_index, -1.0));
            row.rhs = 0.0;
            eqs.push(row);
            eq_labels.push("objective-epigraph[t]".to_string());
        }

        let stats = SdpStats {
            poly_dof: self.poly_dof,
            psd_entries: block_dims.iter().map(|d| d * d).sum(),
            num_blocks: block_dims.len(),
            num_equalities: eqs.len(),
            num_free: nfree + extra_free,
            cone_dim: block_dims.iter().map(|d| d * (d + 1) / 2).sum(),
        };

        Ok(SdpProblem {
            block_dims,
            nfree: nfree + extra_free,
            eqs,
            eq_labels,
            block_labels,
            obj_cone: obj_cone.into_iter().map(|((b, i, j), c)| (b, i, j, c)).collect(),
            obj_free,
            obj_constant: self.objective.constant,
            stats,
        })
    }

    /// Recover the value of every decision variable from an SDP solution
    /// produced by [`SosProgram::compile`] + [`crate::sdp::solve`].
    pub fn recover_vars(&self, sol: &crate::sdp::SdpSolution) -> Vec<f64> {
        let mut out = vec![0.0; self.next_var as usize];
        // Recompute the slot assignment (compile is deterministic).
        let mut assigned = vec![false; self.next_var as usize];
        for (b, mem) in self.memberships.iter().enumerate() {
            let d = mem.gram.dim();
            for i in 0..d {
                for j in i..d {
                    let a = mem.gram.entry(i, j);
                    let mut it = a.linear_terms();
                    if let (Some((v, c)), None) = (it.next(), it.next()) {
                        if *c == 1.0 && a.constant == 0.0 && !assigned[v.0 as usize] {
                            assigned[v.0 as usize] = true;
                            out[v.0 as usize] = sol.blocks[b][(i, j)];
                        }
                    }
                }
            }
        }
        let mut k = 0;
        for v in 0..self.next_var as usize {
            if !assigned[v] {
                out[v] = sol.free[k];
                k += 1;
            }
        }
        out
    }
}

fn split_label(label: &str) -> (String, String) {
    match label.rfind('[') {
        Some(i) => (label[..i].to_string(), label[i + 1..label.len() - 1].to_string()),
        None => (label.to_string(), String::new()),
    }
}

/// Factor the sparse symmetric PSD matrix `P` as `RᵀR` over its touched
/// variables. Returns (touched vars, rows of R, min eigenvalue).
#[allow(clippy::type_complexity)]
fn quad_factor(quad: &[(VarId, VarId, f64)]) -> Result<(Vec<VarId>, Vec<Vec<f64>>, f64), SosError> {
    use nalgebra::DMatrix;
    let mut vars: BTreeSet<VarId> = BTreeSet::new();
    for (i, j, _) in quad {
        vars.insert(*i);
        vars.insert(*j);
    }
    let vars: Vec<VarId> = vars.into_iter().collect();
    let index: BTreeMap<VarId, usize> = vars.iter().enumerate().map(|(k, v)| (*v, k)).collect();
    let n = vars.len();
    let mut p: DMatrix<f64> = DMatrix::zeros(n, n);
    for (i, j, c) in quad {
        let (a, b) = (index[i], index[j]);
        p[(a, b)] += c;
        if a != b {
            p[(b, a)] += c;
        }
    }
    let eig = p.clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    // R rows: sqrt(λ_k) q_kᵀ for positive eigenvalues.
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > 1e-12 {
            let q = eig.eigenvectors.column(k);
            rows.push((0..n).map(|i| lam.sqrt() * q[i]).collect());
        }
    }
    Ok((vars, rows, min_eig))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::parse_polynomial;

    fn names(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn basis_single_var() {
        let b = monomial_basis(1, 2, None, None);
        assert_eq!(b.len(), 3);
        assert_eq!(b[0], Monomial::unit(1));
        assert_eq!(b[1], Monomial::var(1, 0));
        assert_eq!(b[2], Monomial::new(vec![2]));
    }

    #[test]
    fn basis_degree_set_2_4() {
        let b = monomial_basis(3, 4, None, Some(&[2, 4]));
        assert_eq!(b.len(), 21);
        assert!(b.iter().all(|m| m.degree() == 2 || m.degree() == 4));
    }

    #[test]
    fn basis_even_with_constant() {
        let b = monomial_basis(3, 2, Some(0), None);
        assert_eq!(b.len(), 7);
    }

    #[test]
    fn poly_var_allocates_per_monomial() {
        let mut prog = SosProgram::new();
        let basis = monomial_basis(3, 4, None, Some(&[2, 4]));
        let p = prog.new_poly_var(3, &basis);
        assert_eq!(prog.num_vars(), 21);
        assert_eq!(p.terms().count(), 21);

        let constant = prog.new_poly_var(3, &[Monomial::unit(3)]);
        assert_eq!(prog.num_vars(), 22);
        assert_eq!(constant.terms().count(), 1);
    }

    #[test]
    fn poly_vars_are_disjoint() {
        let mut prog = SosProgram::new();
        let basis = monomial_basis(2, 1, None, None);
        let a = prog.new_poly_var(2, &basis);
        let b = prog.new_poly_var(2, &basis);
        let ids = |p: &ParamPolynomial| {
            let mut s = BTreeSet::new();
            for (_, e) in p.terms() {
                for (v, _) in e.linear_terms() {
                    s.insert(*v);
                }
            }
            s
        };
        assert!(ids(&a).is_disjoint(&ids(&b)));
    }

    #[test]
    fn sos_var_1x1_and_2x2() {
        let mut prog = SosProgram::new();
        let (q, _) = prog.new_sos_var(1, &[Monomial::unit(1)], "q");
        assert_eq!(prog.num_vars(), 1);
        assert_eq!(q.terms().count(), 1);

        let mut prog = SosProgram::new();
        let (p, _) = prog.new_sos_var(1, &monomial_basis(1, 1, None, None), "p");
        assert_eq!(prog.num_vars(), 3);
        // q11 + 2 q12 x + q22 x^2
        assert_eq!(p.terms().count(), 3);
        let x2 = Monomial::new(vec![2]);
        let a = p.coeff(&x2);
        assert_eq!(a.linear_terms().count(), 1);
    }

    #[test]
    fn sos_var_quadratic_form_no_constant() {
        let mut prog = SosProgram::new();
        let basis = monomial_basis(3, 1, None, Some(&[1]));
        let (p, _) = prog.new_sos_var(3, &basis, "s");
        assert_eq!(prog.num_vars(), 6);
        assert!(p.terms().all(|(m, _)| m.degree() == 2));
    }

    #[test]
    fn assert_eq_zero_pins_variable() {
        let mut prog = SosProgram::new();
        let v = prog.new_scalar_var();
        let mut pp = ParamPolynomial::zero(1);
        let mut a = AffineExpr::var(v);
        a.constant = -3.0;
        pp.add_term(Monomial::unit(1), a);
        prog.assert_eq_zero(&pp, "pin");
        assert_eq!(prog.equalities.len(), 1);

        let empty = ParamPolynomial::zero(1);
        prog.assert_eq_zero(&empty, "none");
        assert_eq!(prog.equalities.len(), 1);
    }

    #[test]
    fn assert_eq_zero_two_equalities() {
        // (v1+v2) x1 + (v1-v2) = 0 has the unique solution v1 = v2 = 0.
        let mut prog = SosProgram::new();
        let v1 = prog.new_scalar_var();
        let v2 = prog.new_scalar_var();
        let mut pp = ParamPolynomial::zero(1);
        let mut sum = AffineExpr::var(v1);
        sum.add_scaled_var(v2, 1.0);
        let mut dif = AffineExpr::var(v1);
        dif.add_scaled_var(v2, -1.0);
        pp.add_term(Monomial::var(1, 0), sum);
        pp.add_term(Monomial::unit(1), dif);
        prog.assert_eq_zero(&pp, "sys");
        assert_eq!(prog.equalities.len(), 2);
    }

    #[test]
    fn contradictory_constant_detected_at_compile() {
        let mut prog = SosProgram::new();
        let mut pp = ParamPolynomial::zero(1);
        pp.add_term(Monomial::unit(1), AffineExpr::constant(1.0));
        prog.assert_eq_zero(&pp, "bad");
        match prog.compile() {
            Err(SosError::ContradictoryConstant { residual, .. }) => {
                assert!((residual - (-1.0)).abs() < 1e-12)
            }
            other => panic!("expected contradiction, got {other:?}"),
        }
    }

    #[test]
    fn basis_deficiency_lists_monomials() {
        let mut prog = SosProgram::new();
        let pp = ParamPolynomial::from_poly(&parse_polynomial("x1^4 + 1", &names(1)).unwrap());
        let err = prog.assert_sos(&pp, &monomial_basis(1, 1, None, None), "c").unwrap_err();
        match err {
            SosError::BasisDeficiency { monomials, .. } => assert_eq!(monomials, vec!["x1^4"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bilinear_guard_fires() {
        let mut prog = SosProgram::new();
        let basis = monomial_basis(1, 1, None, None);
        let a = prog.new_poly_var(1, &basis);
        let b = prog.new_poly_var(1, &basis);
        assert!(matches!(a.try_mul(&b), Err(SosError::BilinearTerm { .. })));
        let c = ParamPolynomial::from_poly(&parse_polynomial("2*x1", &names(1)).unwrap());
        assert!(a.try_mul(&c).is_ok());
    }

    #[test]
    fn compile_counts_simple_program() {
        // One 1x1 SOS var, no constraints -> one 1x1 block, no equalities.
        let mut prog = SosProgram::new();
        let _ = prog.new_sos_var(1, &[Monomial::unit(1)], "q");
        let sdp = prog.compile().unwrap();
        assert_eq!(sdp.block_dims, vec![1]);
        assert_eq!(sdp.eqs.len(), 0);
        assert_eq!(sdp.nfree, 0);
    }

    #[test]
    fn compile_assert_sos_block_and_equalities() {
        // x^2 + 2x + 1 over basis [1, x]: one 2x2 block and 3 equalities.
        let mut prog = SosProgram::new();
        let pp = ParamPolynomial::from_poly(&parse_polynomial("x1^2 + 2*x1 + 1", &names(1)).unwrap());
        prog.assert_sos(&pp, &monomial_basis(1, 1, None, None), "c").unwrap();
        let sdp = prog.compile().unwrap();
        assert_eq!(sdp.block_dims, vec![2]);
        assert_eq!(sdp.eqs.len(), 3);
    }

    #[test]
    fn compile_is_deterministic() {
        let build = || {
            let mut prog = SosProgram::new();
            let basis = monomial_basis(2, 2, None, None);
            let v = prog.new_poly_var(2, &basis);
            prog.assert_sos(&v, &monomial_basis(2, 1, None, None), "v").unwrap();
            let first = VarId(0);
            prog.set_objective(vec![(first, first, 1.0)], vec![(VarId(1), 0.5)], 0.0).unwrap();
            prog.compile().unwrap()
        };
        let a = build();
        let b = build();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn substitution_homomorphism_on_gram_expansion() {
        let mut prog = SosProgram::new();
        let (pp, idx) = prog.new_sos_var(2, &monomial_basis(2, 1, None, None), "s");
        let v: Vec<f64> = (0..prog.num_vars()).map(|i| (i as f64 + 1.0) * 0.37).collect();
        let direct = pp.substitute(&v);
        let mem = &prog.memberships[idx];
        let q = mem.gram.substitute(&v);
        // Z^T Q Z expanded by hand
        let d = mem.gram.dim();
        let mut recon = Polynomial::zero(2);
        for i in 0..d {
            for j in 0..d {
                let mi = &mem.gram.basis[i];
                let mj = &mem.gram.basis[j];
                let prod = Polynomial::from_terms(2, [(mi.mul(mj), q[i][j])]);
                recon = recon.add(&prod).unwrap();
            }
        }
        let diff = direct.sub(&recon).unwrap();
        assert!(diff.max_abs_coeff() < 1e-12);
    }

    #[test]
    fn perfect_square_is_sos_feasible() {
        let mut prog = SosProgram::new();
        let pp = ParamPolynomial::from_poly(&parse_polynomial("x1^2 + 2*x1 + 1", &names(1)).unwrap());
        prog.assert_sos(&pp, &monomial_basis(1, 1, None, None), "c").unwrap();
        let sdp = prog.compile().unwrap();
        let sol = crate::sdp::solve(&sdp, &crate::sdp::SolveOptions::default());
        assert_eq!(sol.status, crate::sdp::SolveStatus::Optimal);
        let (ok, _) = crate::sdp::psd_project_check(&sol.blocks[0], 1e-8);
        assert!(ok);
    }

    #[test]
    fn negative_square_is_sos_infeasible() {
        let mut prog = SosProgram::new();
        let pp = ParamPolynomial::from_poly(&parse_polynomial("-x1^2", &names(1)).unwrap());
        prog.assert_sos(&pp, &[Monomial::var(1, 0)], "c").unwrap();
        let sdp = prog.compile().unwrap();
        let sol = crate::sdp::solve(&sdp, &crate::sdp::SolveOptions::default());
        assert_eq!(sol.status, crate::sdp::SolveStatus::Infeasible);
    }

    #[test]
    fn motzkin_polynomial_is_not_sos() {
        // x^4 y^2 + x^2 y^4 - 3 x^2 y^2 + 1, full degree-3 half basis.
        let mut prog = SosProgram::new();
        let pp = ParamPolynomial::from_poly(
            &parse_polynomial("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1", &names(2)).unwrap(),
        );
        prog.assert_sos(&pp, &monomial_basis(2, 3, None, None), "motzkin").unwrap();
        let sdp = prog.compile().unwrap();
        let sol = crate::sdp::solve(&sdp, &crate::sdp::SolveOptions::default());
        assert_eq!(sol.status, crate::sdp::SolveStatus::Infeasible);
    }

    #[test]
    fn solved_gram_reconstructs_target() {
        // (2x^2 - x)^2 + (x - 1)^2 is SOS by construction.
        let mut prog = SosProgram::new();
        let a = parse_polynomial("2*x1^2 - x1", &names(1)).unwrap();
        let b = parse_polynomial("x1 - 1", &names(1)).unwrap();
        let sos = a.mul(&a).unwrap().add(&b.mul(&b).unwrap()).unwrap();
        let pp = ParamPolynomial::from_poly(&sos);
        let idx = prog.assert_sos(&pp, &default_half_basis(&pp), "sq").unwrap();
        let sdp = prog.compile().unwrap();
        let sol = crate::sdp::solve(&sdp, &crate::sdp::SolveOptions::default());
        assert_eq!(sol.status, crate::sdp::SolveStatus::Optimal);
        let mem = &prog.memberships[idx];
        let recon = crate::sdp::extract_polynomial(&sol.blocks[idx], &mem.gram.basis).unwrap();
        let diff = recon.sub(&sos).unwrap();
        assert!(
            diff.max_abs_coeff() <= 1e-6 * (1.0 + sos.max_abs_coeff()),
            "reconstruction error {}",
            diff.max_abs_coeff()
        );
        let (ok, min_eig) = crate::sdp::psd_project_check(&sol.blocks[idx], 1e-8);
        assert!(ok, "gram not PSD: {min_eig}");
    }

    #[test]
    fn objective_rejects_non_psd() {
        let mut prog = SosProgram::new();
        let a = prog.new_scalar_var();
        let b = prog.new_scalar_var();
        // [[0,1],[1,0]] is indefinite.
        let err = prog.set_objective(vec![(a, b, 1.0)], vec![], 0.0).unwrap_err();
        assert!(matches!(err, SosError::NonPsdObjective { .. }));
    }
}
