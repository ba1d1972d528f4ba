//! Dense primal-dual interior-point engine: homogeneous self-dual embedding,
//! Nesterov–Todd scaling, Mehrotra predictor-corrector, Ruiz equilibration,
//! and a Schur-complement reduction that keeps free variables in the equality
//! system.

use nalgebra::{DMatrix, DVector};

use super::{SdpProblem, SdpSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIters,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub relgap: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Relative primal/dual feasibility tolerance (infinity norms).
    pub tol_feas: f64,
    /// Relative duality-gap tolerance.
    pub tol_gap: f64,
    pub ruiz_iters: usize,
    /// Fraction-to-boundary step factor.
    pub step_frac: f64,
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 200,
            tol_feas: 1e-7,
            tol_gap: 1e-7,
            ruiz_iters: 10,
            step_frac: 0.98,
            verbose: false,
        }
    }
}

/// Pluggable conic solver interface; the in-repo engine is the default.
pub trait ConicSolver {
    fn solve_sdp(&self, prob: &SdpProblem, opts: &SolveOptions) -> SdpSolution;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct InteriorPointSolver;

impl ConicSolver for InteriorPointSolver {
    fn solve_sdp(&self, prob: &SdpProblem, opts: &SolveOptions) -> SdpSolution {
        solve(prob, opts)
    }
}

/// Solve with the in-repo interior-point engine.
pub fn solve(prob: &SdpProblem, opts: &SolveOptions) -> SdpSolution {
    Ipm::new(prob, opts).run()
}

// ---------------------------------------------------------------------------
// Scaled problem representation
// ---------------------------------------------------------------------------

struct Scaling {
    row: Vec<f64>,
    block: Vec<f64>,
    freev: Vec<f64>,
    /// Original index of each kept row (trivial rows are dropped).
    kept_rows: Vec<usize>,
}

struct Prep {
    /// Per kept row: 1 + |rhs| + max |coefficient| of the original data.
    row_scale_orig: Vec<f64>,
    /// Per block: rows touching it, as (kept-row index, entries).
    block_rows: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>>,
    /// Per kept row: free-variable entries.
    f_rows: Vec<Vec<(usize, f64)>>,
    /// Per free variable: (kept-row index, coeff).
    f_cols: Vec<Vec<(usize, f64)>>,
    cmats: Vec<DMatrix<f64>>,
    cfree: DVector<f64>,
    b: DVector<f64>,
    dims: Vec<usize>,
    nfree: usize,
    scaling: Scaling,
    /// Infeasibility discovered during preprocessing (empty row, rhs != 0).
    trivially_infeasible: Option<usize>,
}

fn preprocess(prob: &SdpProblem, ruiz_iters: usize) -> Prep {
    let nblocks = prob.block_dims.len();
    let nfree = prob.nfree;

    // Keep rows with at least one nonzero coefficient; an all-zero row with
    // nonzero rhs is a Farkas certificate by itself.
    let mut kept_rows = Vec::new();
    let mut trivially_infeasible = None;
    for (idx, eq) in prob.eqs.iter().enumerate() {
        let nonzero = eq.cone.iter().any(|&(_, _, _, c)| c != 0.0)
            || eq.free.iter().any(|&(_, c)| c != 0.0);
        if nonzero {
            kept_rows.push(idx);
        } else if eq.rhs.abs() > 1e-12 && trivially_infeasible.is_none() {
            trivially_infeasible = Some(idx);
        }
    }
    let m = kept_rows.len();

    // Ruiz equilibration: per-row scales, one uniform scale per PSD block,
    // per-column scales for free variables.
    let mut row = vec![1.0f64; m];
    let mut block = vec![1.0f64; nblocks];
    let mut freev = vec![1.0f64; nfree];
    for _ in 0..ruiz_iters {
        let mut row_max = vec![0.0f64; m];
        let mut blk_max = vec![0.0f64; nblocks];
        let mut free_max = vec![0.0f64; nfree];
        for (k, &idx) in kept_rows.iter().enumerate() {
            let eq = &prob.eqs[idx];
            for &(b, _, _, c) in &eq.cone {
                let v = (c * row[k] * block[b]).abs();
                row_max[k] = row_max[k].max(v);
                blk_max[b] = blk_max[b].max(v);
            }
            for &(f, c) in &eq.free {
                let v = (c * row[k] * freev[f]).abs();
                row_max[k] = row_max[k].max(v);
                free_max[f] = free_max[f].max(v);
            }
            // Equilibrate [A | b] so large right-hand sides (e.g. coefficient
            // boxes) do not dominate the scaled data.
            row_max[k] = row_max[k].max((eq.rhs * row[k]).abs());
        }
        let update = |s: &mut f64, mx: f64| {
            if mx > 0.0 {
                *s /= mx.sqrt();
            }
        };
        for k in 0..m {
            update(&mut row[k], row_max[k]);
        }
        for b in 0..nblocks {
            update(&mut block[b], blk_max[b]);
        }
        for f in 0..nfree {
            update(&mut freev[f], free_max[f]);
        }
    }

    // Assemble scaled data.
    let mut block_rows: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>> = vec![Vec::new(); nblocks];
    let mut f_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    let mut f_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nfree];
    let mut b_vec = DVector::zeros(m);
    for (k, &idx) in kept_rows.iter().enumerate() {
        let eq = &prob.eqs[idx];
        let mut per_block: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); nblocks];
        for &(b, i, j, c) in &eq.cone {
            if c != 0.0 {
                per_block[b].push((i, j, c * row[k] * block[b]));
            }
        }
        for (b, entries) in per_block.into_iter().enumerate() {
            if !entries.is_empty() {
                block_rows[b].push((k, entries));
            }
        }
        for &(f, c) in &eq.free {
            if c != 0.0 {
                let v = c * row[k] * freev[f];
                f_rows[k].push((f, v));
                f_cols[f].push((k, v));
            }
        }
        b_vec[k] = eq.rhs * row[k];
    }

    let row_scale_orig: Vec<f64> = kept_rows
        .iter()
        .map(|&idx| {
            let eq = &prob.eqs[idx];
            let coef_max = eq
                .cone
                .iter()
                .map(|&(_, _, _, c)| c.abs())
                .chain(eq.free.iter().map(|&(_, c)| c.abs()))
                .fold(0.0f64, f64::max);
            1.0 + eq.rhs.abs() + coef_max
        })
        .collect();

    let mut cmats: Vec<DMatrix<f64>> = prob.block_dims.iter().map(|&d| DMatrix::zeros(d, d)).collect();
    for &(b, i, j, c) in &prob.obj_cone {
        let v = c * block[b];
        if i == j {
            cmats[b][(i, i)] += v;
        } else {
            cmats[b][(i, j)] += v / 2.0;
            cmats[b][(j, i)] += v / 2.0;
        }
    }
    let mut cfree = DVector::zeros(nfree);
    for (f, c) in prob.obj_free.iter().enumerate() {
        cfree[f] = c * freev[f];
    }

    Prep {
        row_scale_orig,
        block_rows,
        f_rows,
        f_cols,
        cmats,
        cfree,
        b: b_vec,
        dims: prob.block_dims.clone(),
        nfree,
        scaling: Scaling { row, block, freev, kept_rows },
        trivially_infeasible,
    }
}

// ---------------------------------------------------------------------------
// Cone-vector helpers (lists of symmetric matrices)
// ---------------------------------------------------------------------------

fn zeros_like(dims: &[usize]) -> Vec<DMatrix<f64>> {
    dims.iter().map(|&d| DMatrix::zeros(d, d)).collect()
}

fn vec_amax(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn identity_scaled(dims: &[usize], s: f64) -> Vec<DMatrix<f64>> {
    dims.iter().map(|&d| DMatrix::identity(d, d) * s).collect()
}

fn cone_dot(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

/// Sparse row entries -> dense symmetric matrix.
fn sym_from(entries: &[(usize, usize, f64)], d: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(d, d);
    for &(i, j, c) in entries {
        if i == j {
            a[(i, i)] += c;
        } else {
            a[(i, j)] += c / 2.0;
            a[(j, i)] += c / 2.0;
        }
    }
    a
}

/// `<A_row, M>` for a sparse row and symmetric dense `M`.
fn sparse_dot(entries: &[(usize, usize, f64)], m: &DMatrix<f64>) -> f64 {
    entries.iter().map(|&(i, j, c)| c * m[(i, j)]).sum()
}

// ---------------------------------------------------------------------------
// Nesterov–Todd scaling
// ---------------------------------------------------------------------------

struct NtBlock {
    r: DMatrix<f64>,
    rinv: DMatrix<f64>,
    w: DMatrix<f64>,
    lambda: DVector<f64>,
}

fn compute_nt(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<NtBlock> {
    let d = x.nrows();
    if d == 0 {
        return Some(NtBlock {
            r: DMatrix::zeros(0, 0),
            rinv: DMatrix::zeros(0, 0),
            w: DMatrix::zeros(0, 0),
            lambda: DVector::zeros(0),
        });
    }
    let lx = x.clone().cholesky()?;
    let lz = z.clone().cholesky()?;
    let m = lz.l().transpose() * lx.l();
    let svd = m.svd(true, true);
    let u = svd.u?;
    let vt = svd.v_t?;
    let sigma = svd.singular_values;
    if sigma.iter().any(|&s| !(s > 0.0)) {
        return None;
    }
    let s_isqrt = DVector::from_iterator(d, sigma.iter().map(|&s| 1.0 / s.sqrt()));
    // R = L_x V Σ^{-1/2},  R^{-1} = Σ^{-1/2} Uᵀ L_zᵀ
    let mut v = vt.transpose();
    for (k, mut col) in v.column_iter_mut().enumerate() {
        col *= s_isqrt[k];
    }
    let r = lx.l() * v;
    let mut ut = u.transpose();
    for (k, mut row) in ut.row_iter_mut().enumerate() {
        row *= s_isqrt[k];
    }
    let rinv = ut * lz.l().transpose();
    let w = &r * r.transpose();
    Some(NtBlock { r, rinv, w, lambda: sigma })
}

// ---------------------------------------------------------------------------
// KKT factorization: K = [[H, F], [Fᵀ, 0]] via H-Cholesky + free-variable
// Schur complement. Iterative refinement against the exact operator.
// ---------------------------------------------------------------------------

struct Kkt {
    h: DMatrix<f64>,
    h_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    hinv_f: DMatrix<f64>,
    g_chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    nf: usize,
}

fn kkt_factor(h: DMatrix<f64>, f_cols: &[Vec<(usize, f64)>], m: usize, nf: usize) -> Option<Kkt> {
    let mut reg = 0.0;
    let base = if m == 0 { 1.0 } else { h.diagonal().amax().max(1.0) };
    let h_chol = loop {
        let mut hr = h.clone();
        if reg > 0.0 {
            for i in 0..m {
                hr[(i, i)] += reg * base;
            }
        }
        match hr.cholesky() {
            Some(c) => break c,
            None => {
                reg = if reg == 0.0 { 1e-12 } else { reg * 100.0 };
                if reg > 1e-5 {
                    return None;
                }
            }
        }
    };
    // H⁻¹ F column by column.
    let mut f_dense = DMatrix::zeros(m, nf);
    for (k, col) in f_cols.iter().enumerate() {
        for &(r, c) in col {
            f_dense[(r, k)] = c;
        }
    }
    let hinv_f = if nf > 0 { h_chol.solve(&f_dense) } else { DMatrix::zeros(m, 0) };
    let g_chol = if nf > 0 {
        let mut g = f_dense.transpose() * &hinv_f;
        let gbase = if nf == 0 { 1.0 } else { g.diagonal().amax().max(1.0) };
        let mut greg = 0.0;
        loop {
            let gr = if greg > 0.0 {
                let mut t = g.clone();
                for i in 0..nf {
                    t[(i, i)] += greg * gbase;
                }
                t
            } else {
                g.clone()
            };
            match gr.cholesky() {
                Some(c) => break Some(c),
                None => {
                    greg = if greg == 0.0 { 1e-12 } else { greg * 100.0 };
                    if greg > 1e-5 {
                        g = g + DMatrix::identity(nf, nf) * gbase;
                        break g.cholesky();
                    }
                }
            }
        }
    } else {
        None
    };
    Some(Kkt { h, h_chol, hinv_f, g_chol, nf })
}

impl Kkt {
    fn apply(&self, f_rows: &[Vec<(usize, f64)>], f_cols: &[Vec<(usize, f64)>], a: &DVector<f64>, b: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let mut top = &self.h * a;
        for (k, row) in f_rows.iter().enumerate() {
            for &(f, c) in row {
                top[k] += c * b[f];
            }
        }
        let mut bot = DVector::zeros(self.nf);
        for (f, col) in f_cols.iter().enumerate() {
            for &(r, c) in col {
                bot[f] += c * a[r];
            }
        }
        (top, bot)
    }

    fn solve_once(&self, p: &DVector<f64>, q: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        if self.nf == 0 {
            return (self.h_chol.solve(p), DVector::zeros(0));
        }
        let hinv_p = self.h_chol.solve(p);
        let rhs = self.hinv_f.transpose() * p - q;
        let du = match &self.g_chol {
            Some(g) => g.solve(&rhs),
            None => DVector::zeros(self.nf),
        };
        let dy = hinv_p - &self.hinv_f * &du;
        (dy, du)
    }

    fn solve(
        &self,
        f_rows: &[Vec<(usize, f64)>],
        f_cols: &[Vec<(usize, f64)>],
        p: &DVector<f64>,
        q: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let (mut a, mut b) = self.solve_once(p, q);
        // Iterative refinement against the exact K operator; keep the best
        // iterate in case refinement stagnates on ill-conditioned systems.
        let scale = 1.0 + vec_amax(p).max(vec_amax(q));
        let mut best = (f64::INFINITY, a.clone(), b.clone());
        for _ in 0..4 {
            let (top, bot) = self.apply(f_rows, f_cols, &a, &b);
            let rp = p - top;
            let rq = q - bot;
            let res = vec_amax(&rp).max(vec_amax(&rq));
            if res < best.0 {
                best = (res, a.clone(), b.clone());
            }
            if res < 1e-15 * scale {
                break;
            }
            let (da, db) = self.solve_once(&rp, &rq);
            a += da;
            b += db;
        }
        let (top, bot) = self.apply(f_rows, f_cols, &a, &b);
        let res = vec_amax(&(p - top)).max(vec_amax(&(q - bot)));
        if res < best.0 {
            (a, b)
        } else {
            (best.1, best.2)
        }
    }
}

// ---------------------------------------------------------------------------
// The IPM driver
// ---------------------------------------------------------------------------

struct Direction {
    dx: Vec<DMatrix<f64>>,
    dz: Vec<DMatrix<f64>>,
    dy: DVector<f64>,
    du: DVector<f64>,
    dtau: f64,
    dkappa: f64,
}

struct Metrics {
    pres: f64,
    dres: f64,
    relgap: f64,
    pobj: f64,
    dobj: f64,
    score: f64,
}

struct Ipm<'a> {
    orig: &'a SdpProblem,
    opts: &'a SolveOptions,
    prep: Prep,
    // state
    x: Vec<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    u: DVector<f64>,
    tau: f64,
    kappa: f64,
    degree: f64,
    norm_b: f64,
    norm_c: f64,
}

impl<'a> Ipm<'a> {
    fn new(orig: &'a SdpProblem, opts: &'a SolveOptions) -> Self {
        let prep = preprocess(orig, opts.ruiz_iters);
        let dims = prep.dims.clone();
        let m = prep.b.len();
        let degree: f64 = dims.iter().map(|&d| d as f64).sum::<f64>() + 1.0;
        let norm_b = vec_amax(&prep.b);
        let norm_c = prep
            .cmats
            .iter()
            .map(|c| c.iter().fold(0.0f64, |a, v| a.max(v.abs())))
            .fold(0.0f64, f64::max)
            .max(vec_amax(&prep.cfree));
        // Identity initialization scaled by the geometric mean of the data norms.
        let eta = ((1.0 + norm_b) * (1.0 + norm_c)).powf(0.25);
        Ipm {
            orig,
            opts,
            x: identity_scaled(&dims, eta),
            z: identity_scaled(&dims, eta),
            y: DVector::zeros(m),
            u: DVector::zeros(prep.nfree),
            tau: 1.0,
            kappa: eta * eta,
            degree,
            norm_b,
            norm_c,
            prep,
        }
    }

    fn apply_a(&self, xs: &[DMatrix<f64>], u: Option<&DVector<f64>>) -> DVector<f64> {
        let m = self.prep.b.len();
        let mut out = DVector::zeros(m);
        for (b, rows) in self.prep.block_rows.iter().enumerate() {
            for (k, entries) in rows {
                out[*k] += entries.iter().map(|&(i, j, c)| {
                    let v = xs[b][(i, j)];
                    let vt = xs[b][(j, i)];
                    if i == j { c * v } else { c * (v + vt) / 2.0 }
                }).sum::<f64>();
            }
        }
        if let Some(u) = u {
            for (k, row) in self.prep.f_rows.iter().enumerate() {
                for &(f, c) in row {
                    out[k] += c * u[f];
                }
            }
        }
        out
    }

    fn apply_at(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut out = zeros_like(&self.prep.dims);
        for (b, rows) in self.prep.block_rows.iter().enumerate() {
            for (k, entries) in rows {
                let w = y[*k];
                if w == 0.0 {
                    continue;
                }
                for &(i, j, c) in entries {
                    if i == j {
                        out[b][(i, i)] += c * w;
                    } else {
                        out[b][(i, j)] += c * w / 2.0;
                        out[b][(j, i)] += c * w / 2.0;
                    }
                }
            }
        }
        out
    }

    fn apply_ft(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.prep.nfree);
        for (f, col) in self.prep.f_cols.iter().enumerate() {
            for &(r, c) in col {
                out[f] += c * y[r];
            }
        }
        out
    }

    fn cone_obj(&self, xs: &[DMatrix<f64>]) -> f64 {
        cone_dot(&self.prep.cmats, xs)
    }

    /// Residuals of the homogeneous model at the current iterate.
    fn residuals(&self) -> (DVector<f64>, Vec<DMatrix<f64>>, DVector<f64>, f64) {
        let r_p = self.apply_a(&self.x, Some(&self.u)) - &self.prep.b * self.tau;
        let at_y = self.apply_at(&self.y);
        let mut r_d = Vec::with_capacity(self.prep.dims.len());
        for (b, at) in at_y.iter().enumerate() {
            r_d.push(-at + &self.prep.cmats[b] * self.tau - &self.z[b]);
        }
        let r_f = -self.apply_ft(&self.y) + &self.prep.cfree * self.tau;
        let r_g = self.prep.b.dot(&self.y)
            - self.cone_obj(&self.x)
            - self.prep.cfree.dot(&self.u)
            - self.kappa;
        (r_p, r_d, r_f, r_g)
    }

    fn mu(&self) -> f64 {
        (cone_dot(&self.x, &self.z) + self.tau * self.kappa) / self.degree
    }

    /// Termination metrics on the original (unscaled) problem.
    fn metrics(&self) -> Metrics {
        let sc = &self.prep.scaling;
        let inv_tau = 1.0 / self.tau;
        // Unscaled residuals derived from the scaled ones.
        let (r_p, r_d, r_f, _) = self.residuals();
        // Row-wise normalization: each unscaled row residual relative to that
        // row's own data magnitude (so one large right-hand side cannot
        // excuse absolute errors elsewhere).
        let mut pres: f64 = 0.0;
        for k in 0..sc.kept_rows.len() {
            let unscaled = (r_p[k] * inv_tau / sc.row[k]).abs();
            pres = pres.max(unscaled / self.prep.row_scale_orig[k]);
        }

        let norm_c0 = self
            .orig
            .obj_cone
            .iter()
            .map(|&(_, _, _, c)| c.abs())
            .chain(self.orig.obj_free.iter().map(|c| c.abs()))
            .fold(0.0f64, f64::max);
        let mut dres: f64 = 0.0;
        for (b, rd) in r_d.iter().enumerate() {
            let s = inv_tau / sc.block[b];
            dres = dres.max(rd.iter().fold(0.0f64, |a, v| a.max(v.abs())) * s);
        }
        for (f, v) in r_f.iter().enumerate() {
            dres = dres.max((v * inv_tau / sc.freev[f]).abs());
        }
        dres /= 1.0 + norm_c0;

        let pobj = (self.cone_obj(&self.x) + self.prep.cfree.dot(&self.u)) * inv_tau;
        let dobj = self.prep.b.dot(&self.y) * inv_tau;
        let comp = cone_dot(&self.x, &self.z) * inv_tau * inv_tau;
        let denom = pobj.abs().max(dobj.abs()).max(1.0);
        // Duality gap between the primal and dual candidates; the cone
        // complementarity enters with a weaker weight (it converges more
        // slowly on non-strictly-complementary optima and |pobj - dobj|
        // already bounds the suboptimality of near-feasible candidates).
        let relgap = ((pobj - dobj).abs().max(0.01 * comp)) / denom;
        let score = pres.max(dres).max(relgap);
        Metrics { pres, dres, relgap, pobj, dobj, score }
    }

    /// Infeasibility certificates, evaluated on unscaled data.
    fn certificates(&self) -> Option<SolveStatus> {
        let sc = &self.prep.scaling;
        let norm_data = self.norm_b.max(self.norm_c).max(1.0);
        // Primal infeasibility: y with Aᵀy + z = 0, Fᵀy = 0, bᵀy > 0.
        let by = self.prep.b.dot(&self.y);
        if by > 0.0 {
            let at_y = self.apply_at(&self.y);
            let mut res: f64 = 0.0;
            for (b, at) in at_y.iter().enumerate() {
                let mat = at + &self.z[b];
                res = res.max(mat.iter().fold(0.0f64, |a, v| a.max(v.abs())) / sc.block[b]);
            }
            let ft_y = self.apply_ft(&self.y);
            for (f, v) in ft_y.iter().enumerate() {
                res = res.max((v / sc.freev[f]).abs());
            }
            if res <= self.opts.tol_feas * norm_data * by {
                return Some(SolveStatus::Infeasible);
            }
        }
        // Dual infeasibility (primal unbounded): x ⪰ 0 with Ax + Fu = 0, cᵀx < 0.
        let cx = self.cone_obj(&self.x) + self.prep.cfree.dot(&self.u);
        if cx < 0.0 {
            let ax = self.apply_a(&self.x, Some(&self.u));
            let mut res: f64 = 0.0;
            for (k, v) in ax.iter().enumerate() {
                res = res.max((v / sc.row[k]).abs());
            }
            if res <= self.opts.tol_feas * norm_data * (-cx) {
                return Some(SolveStatus::Unbounded);
            }
        }
        None
    }

    /// Largest alpha with X + alpha dX ⪰ 0 (and Z likewise), computed in the
    /// NT-scaled space where the current iterate is the diagonal λ. This
    /// avoids factoring nearly singular iterates at the cone boundary.
    fn step_to_boundary_scaled(nt: &[NtBlock], scaled_dirs: &[DMatrix<f64>]) -> f64 {
        let mut alpha = f64::INFINITY;
        for (n, m) in nt.iter().zip(scaled_dirs) {
            let d = m.nrows();
            if d == 0 {
                continue;
            }
            // G = Λ^{-1/2} M Λ^{-1/2}; blocking when 1 + α λmin(G) = 0.
            let mut g = m.clone();
            for i in 0..d {
                for j in 0..d {
                    g[(i, j)] /= (n.lambda[i] * n.lambda[j]).sqrt();
                }
            }
            let min_eig = g
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if min_eig < 0.0 {
                alpha = alpha.min(-1.0 / min_eig);
            }
        }
        alpha
    }

    #[allow(clippy::too_many_arguments)]
    fn solve_direction(
        &self,
        nt: &[NtBlock],
        kkt: &Kkt,
        sol2: &(DVector<f64>, DVector<f64>),
        cs_w_cs: f64,
        b_minus_awc: &DVector<f64>,
        g: &[DMatrix<f64>],
        dtau_rhs: f64,
        r_p: &DVector<f64>,
        r_d: &[DMatrix<f64>],
        r_f: &DVector<f64>,
        r_g: f64,
    ) -> Option<Direction> {
        // W r_d W per block.
        let wrd: Vec<DMatrix<f64>> = nt
            .iter()
            .zip(r_d)
            .map(|(n, rd)| &n.w * rd * &n.w)
            .collect();
        let a_g = self.apply_a(g, None);
        let a_wrd = self.apply_a(&wrd, None);
        let q1 = -r_p - a_g + a_wrd;
        let q2 = r_f.clone();
        let (y1, u1) = kkt.solve(&self.prep.f_rows, &self.prep.f_cols, &q1, &q2);
        let (y2, u2) = sol2;

        let cs_g = self.cone_obj(g);
        let cs_wrd = cone_dot(&self.prep.cmats, &wrd);
        let rhs3 = -r_g + cs_g - cs_wrd + dtau_rhs / self.tau;
        let num = rhs3 - b_minus_awc.dot(&y1) + self.prep.cfree.dot(&u1);
        let den = b_minus_awc.dot(y2) - self.prep.cfree.dot(u2) + cs_w_cs + self.kappa / self.tau;
        if !den.is_finite() || den.abs() < 1e-300 {
            return None;
        }
        let dtau = num / den;
        let dy = &y1 + y2 * dtau;
        let du = &u1 + u2 * dtau;
        let at_dy = self.apply_at(&dy);
        let mut dz = Vec::with_capacity(nt.len());
        let mut dx = Vec::with_capacity(nt.len());
        for b in 0..nt.len() {
            let dzb = &self.prep.cmats[b] * dtau - &at_dy[b] + &r_d[b];
            let dxb = &g[b] - &nt[b].w * &dzb * &nt[b].w;
            dz.push(dzb);
            dx.push(dxb);
        }
        let dkappa = (dtau_rhs - self.kappa * dtau) / self.tau;
        Some(Direction { dx, dz, dy, du, dtau, dkappa })
    }

    fn run(mut self) -> SdpSolution {
        if let Some(row) = self.prep.trivially_infeasible {
            let mut farkas = vec![0.0; self.orig.eqs.len()];
            farkas[row] = self.orig.eqs[row].rhs.signum();
            return self.finish(SolveStatus::Infeasible, 0, Some(farkas));
        }

        let m = self.prep.b.len();
        let mut best: Option<(f64, Box<SdpSolution>)> = None;
        let mut stalled = 0usize;
        let mut iter = 0;
        let mut status = SolveStatus::MaxIters;

        while iter < self.opts.max_iters {
            let met = self.metrics();
            // Divergence/stall guards: iterates running away from or circling
            // the best point seen (weakly infeasible or ill-posed problems).
            if let Some((best_score, _)) = &best {
                if !met.score.is_finite() || (iter >= 10 && met.score > best_score * 1e8) {
                    status = SolveStatus::NumericalFailure;
                    break;
                }
                if met.score >= *best_score {
                    stalled += 1;
                    if stalled >= 12 {
                        status = SolveStatus::NumericalFailure;
                        break;
                    }
                } else {
                    stalled = 0;
                }
            }
            if self.opts.verbose {
                eprintln!(
                    "ipm iter {iter:3}  pres {:9.2e}  dres {:9.2e}  gap {:9.2e}  tau {:8.2e}  kappa {:8.2e}",
                    met.pres, met.dres, met.relgap, self.tau, self.kappa
                );
            }
            let cand = self.finish_candidate(iter);
            if best.as_ref().map_or(true, |(s, _)| met.score < *s) {
                best = Some((met.score, Box::new(cand)));
            }
            if met.pres <= self.opts.tol_feas && met.dres <= self.opts.tol_feas && met.relgap <= self.opts.tol_gap {
                status = SolveStatus::Optimal;
                break;
            }
            if let Some(infeas) = self.certificates() {
                return self.finish(infeas, iter, Some(self.unscaled_dual_ray()));
            }
            if self.tau < 1e-12 || self.mu() < 1e-16 {
                status = SolveStatus::NumericalFailure;
                break;
            }

            // NT scaling.
            let mut nt = Vec::with_capacity(self.prep.dims.len());
            let mut nt_ok = true;
            for b in 0..self.prep.dims.len() {
                match compute_nt(&self.x[b], &self.z[b]) {
                    Some(n) => nt.push(n),
                    None => {
                        nt_ok = false;
                        break;
                    }
                }
            }
            if !nt_ok {
                status = SolveStatus::NumericalFailure;
                break;
            }

            // Schur complement H = A W Aᵀ.
            let mut h = DMatrix::zeros(m, m);
            for (b, rows) in self.prep.block_rows.iter().enumerate() {
                let d = self.prep.dims[b];
                let w = &nt[b].w;
                for (jj, (row_j, entries_j)) in rows.iter().enumerate() {
                    let a_j = sym_from(entries_j, d);
                    let m_j = w * a_j * w;
                    for (row_i, entries_i) in rows.iter().take(jj + 1) {
                        let v = sparse_dot(entries_i, &m_j);
                        h[(*row_i, *row_j)] += v;
                        if row_i != row_j {
                            h[(*row_j, *row_i)] += v;
                        }
                    }
                }
            }
            let kkt = match kkt_factor(h, &self.prep.f_cols, m, self.prep.nfree) {
                Some(k) => k,
                None => {
                    status = SolveStatus::NumericalFailure;
                    break;
                }
            };

            // Static per-iteration quantities.
            let wcs: Vec<DMatrix<f64>> = nt
                .iter()
                .zip(&self.prep.cmats)
                .map(|(n, c)| &n.w * c * &n.w)
                .collect();
            let a_wcs = self.apply_a(&wcs, None);
            let h_vec = &a_wcs + &self.prep.b;
            let cs_w_cs = cone_dot(&self.prep.cmats, &wcs);
            let b_minus_awc = &self.prep.b - &a_wcs;
            let sol2 = kkt.solve(&self.prep.f_rows, &self.prep.f_cols, &h_vec, &self.prep.cfree.clone());

            let (r_p, r_d, r_f, r_g) = self.residuals();
            let mu = self.mu();

            // Predictor (affine) direction: g = -x, dtau_rhs = -tau*kappa.
            let g_aff: Vec<DMatrix<f64>> = self.x.iter().map(|x| -x).collect();
            let aff = match self.solve_direction(
                &nt, &kkt, &sol2, cs_w_cs, &b_minus_awc, &g_aff,
                -self.tau * self.kappa, &r_p, &r_d, &r_f, r_g,
            ) {
                Some(d) => d,
                None => {
                    status = SolveStatus::NumericalFailure;
                    break;
                }
            };

            let alpha_aff = self.max_step(&nt, &aff).min(1.0);
            // Mehrotra centering weight.
            let mut gap_aff = 0.0;
            for b in 0..self.prep.dims.len() {
                gap_aff += (&self.x[b] + &aff.dx[b] * alpha_aff).dot(&(&self.z[b] + &aff.dz[b] * alpha_aff));
            }
            gap_aff += (self.tau + alpha_aff * aff.dtau) * (self.kappa + alpha_aff * aff.dkappa);
            let mu_aff = gap_aff / self.degree;
            let sigma = (mu_aff / mu).clamp(1e-8, 1.0 - 1e-8).powi(3);

            // Corrector target: sigma*mu*I - Λ² - (dX̄_aff ∘ dZ̄_aff) per block.
            let mut g_comb = Vec::with_capacity(self.prep.dims.len());
            for b in 0..self.prep.dims.len() {
                let n = &nt[b];
                let d = self.prep.dims[b];
                let dxb = &n.rinv * &aff.dx[b] * n.rinv.transpose();
                let dzb = n.r.transpose() * &aff.dz[b] * &n.r;
                let prod = (&dxb * &dzb + &dzb * &dxb).scale(0.5);
                let mut dmat = -prod;
                for i in 0..d {
                    dmat[(i, i)] += sigma * mu - n.lambda[i] * n.lambda[i];
                }
                // Jordan solve: (Λ S + S Λ)/2 = D  =>  S_ij = 2 D_ij/(λ_i+λ_j)
                let mut s = dmat;
                for i in 0..d {
                    for j in 0..d {
                        s[(i, j)] *= 2.0 / (n.lambda[i] + n.lambda[j]);
                    }
                }
                g_comb.push(&n.r * s * n.r.transpose());
            }
            let dtau_rhs = sigma * mu - self.tau * self.kappa - aff.dtau * aff.dkappa;

            let comb = match self.solve_direction(
                &nt, &kkt, &sol2, cs_w_cs, &b_minus_awc, &g_comb,
                dtau_rhs, &r_p, &r_d, &r_f, r_g,
            ) {
                Some(d) => d,
                None => {
                    status = SolveStatus::NumericalFailure;
                    break;
                }
            };

            let alpha = (self.opts.step_frac * self.max_step(&nt, &comb)).min(1.0);
            if alpha < 1e-10 {
                status = SolveStatus::NumericalFailure;
                break;
            }
            for b in 0..self.prep.dims.len() {
                self.x[b] += &comb.dx[b] * alpha;
                self.z[b] += &comb.dz[b] * alpha;
                // Symmetrize against drift.
                self.x[b] = (&self.x[b] + self.x[b].transpose()).scale(0.5);
                self.z[b] = (&self.z[b] + self.z[b].transpose()).scale(0.5);
            }
            self.y += &comb.dy * alpha;
            self.u += &comb.du * alpha;
            self.tau += alpha * comb.dtau;
            self.kappa += alpha * comb.dkappa;
            // The homogeneous model is invariant under positive scaling of the
            // iterate; renormalizing to tau = 1 stops silent drift along the
            // scaling ray (all termination tests are ratio-based).
            if self.tau.is_finite() && self.tau > 0.0 {
                let s = 1.0 / self.tau;
                if s.is_finite() {
                    for b in 0..self.prep.dims.len() {
                        self.x[b] *= s;
                        self.z[b] *= s;
                    }
                    self.y *= s;
                    self.u *= s;
                    self.kappa *= s;
                    self.tau = 1.0;
                }
            }
            iter += 1;
        }

        if status == SolveStatus::Optimal {
            return self.finish(SolveStatus::Optimal, iter, None);
        }
        // Fall back to the best iterate seen.
        let (score, mut sol) = best.expect("at least one iterate");
        sol.status = if score
            <= self
                .opts
                .tol_feas
                .max(self.opts.tol_gap)
            {
            SolveStatus::Optimal
        } else {
            status
        };
        sol.iterations = iter;
        *sol
    }

    fn max_step(&self, nt: &[NtBlock], dir: &Direction) -> f64 {
        let dx_scaled: Vec<DMatrix<f64>> = nt
            .iter()
            .zip(&dir.dx)
            .map(|(n, dx)| {
                let m = &n.rinv * dx * n.rinv.transpose();
                (&m + m.transpose()).scale(0.5)
            })
            .collect();
        let dz_scaled: Vec<DMatrix<f64>> = nt
            .iter()
            .zip(&dir.dz)
            .map(|(n, dz)| {
                let m = n.r.transpose() * dz * &n.r;
                (&m + m.transpose()).scale(0.5)
            })
            .collect();
        let mut alpha = Self::step_to_boundary_scaled(nt, &dx_scaled);
        alpha = alpha.min(Self::step_to_boundary_scaled(nt, &dz_scaled));
        if dir.dtau < 0.0 {
            alpha = alpha.min(-self.tau / dir.dtau);
        }
        if dir.dkappa < 0.0 {
            alpha = alpha.min(-self.kappa / dir.dkappa);
        }
        alpha
    }

    /// Dual Farkas ray in original row indexing (for infeasibility diagnosis).
    fn unscaled_dual_ray(&self) -> Vec<f64> {
        let sc = &self.prep.scaling;
        let mut out = vec![0.0; self.orig.eqs.len()];
        for (k, &idx) in sc.kept_rows.iter().enumerate() {
            out[idx] = self.y[k] * sc.row[k];
        }
        let norm = out.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if norm > 0.0 {
            for v in &mut out {
                *v /= norm;
            }
        }
        out
    }

    fn finish_candidate(&self, iterations: usize) -> SdpSolution {
        let met = self.metrics();
        let sc = &self.prep.scaling;
        let inv_tau = 1.0 / self.tau;
        let blocks: Vec<DMatrix<f64>> = self
            .x
            .iter()
            .enumerate()
            .map(|(b, x)| x * (sc.block[b] * inv_tau))
            .collect();
        let free: Vec<f64> = self
            .u
            .iter()
            .enumerate()
            .map(|(f, v)| v * sc.freev[f] * inv_tau)
            .collect();
        let mut dual = vec![0.0; self.orig.eqs.len()];
        for (k, &idx) in sc.kept_rows.iter().enumerate() {
            dual[idx] = self.y[k] * sc.row[k] * inv_tau;
        }
        SdpSolution {
            status: SolveStatus::MaxIters,
            blocks,
            free,
            dual,
            objective: met.pobj + self.orig.obj_constant,
            dual_objective: met.dobj + self.orig.obj_constant,
            residuals: Residuals { primal: met.pres, dual: met.dres, relgap: met.relgap },
            iterations,
            farkas: None,
        }
    }

    fn finish(&self, status: SolveStatus, iterations: usize, farkas: Option<Vec<f64>>) -> SdpSolution {
        let mut sol = self.finish_candidate(iterations);
        sol.status = status;
        sol.farkas = farkas;
        sol
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::EqRow;

    fn eq(cone: Vec<(usize, usize, usize, f64)>, free: Vec<(usize, f64)>, rhs: f64) -> EqRow {
        EqRow { cone, free, rhs }
    }

    #[test]
    fn min_x_with_offdiag_one() {
        // minimize x s.t. [[x, 1], [1, x]] ⪰ 0  ->  x* = 1
        let prob = SdpProblem {
            block_dims: vec![2],
            nfree: 1,
            eqs: vec![
                eq(vec![(0, 0, 0, 1.0)], vec![(0, -1.0)], 0.0),
                eq(vec![(0, 1, 1, 1.0)], vec![(0, -1.0)], 0.0),
                eq(vec![(0, 0, 1, 1.0)], vec![], 1.0),
            ],
            eq_labels: vec![],
            block_labels: vec![],
            obj_cone: vec![],
            obj_free: vec![1.0],
            obj_constant: 0.0,
            stats: Default::default(),
        };
        let sol = solve(&prob, &SolveOptions::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-6, "objective {}", sol.objective);
        assert!((sol.free[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn feasibility_block_pinned_to_one() {
        let prob = SdpProblem {
            block_dims: vec![1],
            nfree: 0,
            eqs: vec![eq(vec![(0, 0, 0, 1.0)], vec![], 1.0)],
            eq_labels: vec![],
            block_labels: vec![],
            obj_cone: vec![],
            obj_free: vec![],
            obj_constant: 0.0,
            stats: Default::default(),
        };
        let sol = solve(&prob, &SolveOptions::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.blocks[0][(0, 0)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_row_with_nonzero_rhs_is_infeasible() {
        let prob = SdpProblem {
            block_dims: vec![1],
            nfree: 1,
            eqs: vec![eq(vec![], vec![(0, 0.0)], 1.0)],
            eq_labels: vec![],
            block_labels: vec![],
            obj_cone: vec![],
            obj_free: vec![0.0],
            obj_constant: 0.0,
            stats: Default::default(),
        };
        let sol = solve(&prob, &SolveOptions::default());
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_direction_detected() {
        // minimize -x s.t. x >= 0 (1x1 block) is unbounded below.
        let prob = SdpProblem {
            block_dims: vec![1],
            nfree: 0,
            eqs: vec![],
            eq_labels: vec![],
            block_labels: vec![],
            obj_cone: vec![(0, 0, 0, -1.0)],
            obj_free: vec![],
            obj_constant: 0.0,
            stats: Default::default(),
        };
        let sol = solve(&prob, &SolveOptions::default());
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }

    #[test]
    fn psd_constraint_infeasible() {
        // X ⪰ 0 with X00 = -1 is infeasible.
        let prob = SdpProblem {
            block_dims: vec![1],
            nfree: 0,
            eqs: vec![eq(vec![(0, 0, 0, 1.0)], vec![], -1.0)],
            eq_labels: vec![],
            block_labels: vec![],
            obj_cone: vec![],
            obj_free: vec![],
            obj_constant: 0.0,
            stats: Default::default(),
        };
        let sol = solve(&prob, &SolveOptions::default());
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn deterministic_iterates() {
        let build = || {
            let prob = SdpProblem {
                block_dims: vec![2],
                nfree: 1,
                eqs: vec![
                    eq(vec![(0, 0, 0, 1.0)], vec![(0, -1.0)], 0.0),
                    eq(vec![(0, 1, 1, 1.0)], vec![(0, -1.0)], 0.0),
                    eq(vec![(0, 0, 1, 1.0)], vec![], 1.0),
                ],
                eq_labels: vec![],
                block_labels: vec![],
                obj_cone: vec![],
                obj_free: vec![1.0],
                obj_constant: 0.0,
                stats: Default::default(),
            };
            let sol = solve(&prob, &SolveOptions::default());
            (sol.free[0].to_bits(), sol.iterations, sol.objective.to_bits())
        };
        assert_eq!(build(), build());
    }
}
