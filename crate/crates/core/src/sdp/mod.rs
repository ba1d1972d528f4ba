//! Standard-form semidefinite programming: data model, a dense primal-dual
//! interior-point engine, and helpers to move between Gram matrices and
//! polynomials.
//!
//! A problem is
//!
//! ```text
//! minimize    Σ_b <C_b, X_b> + c_fᵀ u
//! subject to  Σ_b <A_{i,b}, X_b> + a_{i,f}ᵀ u = b_i     i = 1..m
//!             X_b ⪰ 0,  u free
//! ```
//!
//! Coefficients are stored entry-wise on the upper triangle: a stored
//! `(block, i, j, c)` with `i <= j` contributes `c · X[i][j]` to the row value
//! (equivalently the symmetric coefficient matrix has `A_ii = c` on the
//! diagonal and `A_ij = A_ji = c/2` off it).

mod solver;

pub use solver::{solve, ConicSolver, InteriorPointSolver, Residuals, SolveOptions, SolveStatus};

use nalgebra::DMatrix;

use crate::poly::{Monomial, PolyError, Polynomial};

/// One linear equality row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EqRow {
    /// Entries `(block, i, j, coeff)` with `i <= j`; the row value includes
    /// `coeff · X_b[i][j]`.
    pub cone: Vec<(usize, usize, usize, f64)>,
    /// Entries `(free index, coeff)`.
    pub free: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Size statistics of a compiled problem.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SdpStats {
    /// Polynomial-coefficient degrees of freedom of the originating program.
    pub poly_dof: usize,
    /// Total scalar entries over all PSD blocks (Σ dim²).
    pub psd_entries: usize,
    pub num_blocks: usize,
    pub num_equalities: usize,
    pub num_free: usize,
    /// Σ dim(dim+1)/2 over blocks.
    pub cone_dim: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    pub block_dims: Vec<usize>,
    pub nfree: usize,
    pub eqs: Vec<EqRow>,
    pub eq_labels: Vec<String>,
    pub block_labels: Vec<String>,
    /// Objective entries `(block, i, j, coeff)`, same convention as rows.
    pub obj_cone: Vec<(usize, usize, usize, f64)>,
    /// Dense objective over free variables.
    pub obj_free: Vec<f64>,
    /// Constant added to reported objective values.
    pub obj_constant: f64,
    pub stats: SdpStats,
}

impl SdpProblem {
    /// Documented sparse text dump for diffing against external solvers.
    ///
    /// Header: `blocks d1 d2 ...` and `nfree k`; then one line per equality,
    /// `eq <row> block <b> <i> <j> <coeff>` / `eq <row> free <k> <coeff>` /
    /// `eq <row> rhs <value>`; objective lines use row id `obj`.
    pub fn dump_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        write!(s, "blocks").unwrap();
        for d in &self.block_dims {
            write!(s, " {d}").unwrap();
        }
        s.push('\n');
        writeln!(s, "nfree {}", self.nfree).unwrap();
        for (r, eq) in self.eqs.iter().enumerate() {
            for (b, i, j, c) in &eq.cone {
                writeln!(s, "eq {r} block {b} {i} {j} {c:?}").unwrap();
            }
            for (k, c) in &eq.free {
                writeln!(s, "eq {r} free {k} {c:?}").unwrap();
            }
            writeln!(s, "eq {r} rhs {:?}", eq.rhs).unwrap();
        }
        for (b, i, j, c) in &self.obj_cone {
            writeln!(s, "obj block {b} {i} {j} {c:?}").unwrap();
        }
        for (k, c) in self.obj_free.iter().enumerate() {
            if *c != 0.0 {
                writeln!(s, "obj free {k} {c:?}").unwrap();
            }
        }
        s
    }
}

/// Solver outcome with certified residuals.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// Primal PSD block matrices.
    pub blocks: Vec<DMatrix<f64>>,
    /// Values of the free scalar variables.
    pub free: Vec<f64>,
    /// Dual multipliers for the equality rows.
    pub dual: Vec<f64>,
    /// Primal objective value (includes the problem's constant offset).
    pub objective: f64,
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    /// On `Infeasible`, a Farkas-type dual certificate (per-row multipliers)
    /// for diagnosing which constraints conflict.
    pub farkas: Option<Vec<f64>>,
}

/// Expand a Gram matrix over a monomial basis into the polynomial `ZᵀQZ`.
pub fn extract_polynomial(block: &DMatrix<f64>, basis: &[Monomial]) -> Result<Polynomial, PolyError> {
    let d = basis.len();
    if block.nrows() != d || block.ncols() != d {
        return Err(PolyError::DimensionMismatch { left: block.nrows(), right: d });
    }
    let nvars = basis.first().map_or(0, |m| m.nvars());
    let mut out = Polynomial::zero(nvars);
    for i in 0..d {
        for j in 0..d {
            let m = basis[i].mul(&basis[j]);
            out = out
                .add(&Polynomial::from_terms(nvars, [(m, block[(i, j)])]))
                .expect("same nvars");
        }
    }
    Ok(out)
}

/// Smallest eigenvalue of a symmetric matrix and whether it clears `-tol`.
pub fn psd_project_check(m: &DMatrix<f64>, tol: f64) -> (bool, f64) {
    if m.nrows() == 0 {
        return (true, 0.0);
    }
    let sym = (m + m.transpose()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    (min >= -tol, min)
}
