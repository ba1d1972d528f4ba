//! Shared linear-matrix-inequality toys with independently derived optima,
//! used by the oracle suite and the acceptance suite.

use nalgebra::DMatrix;
use soscert::sdp::{EqRow, SdpProblem};

/// A linear-matrix-inequality toy: minimize `cᵀv` subject to
/// `F0_b + Σ_k v_k Fk_b ⪰ 0` per block. Converted to the primal standard form
/// with one equality per upper-triangle entry and `v` free.
pub struct LmiToy {
    pub name: &'static str,
    pub c: Vec<f64>,
    pub blocks: Vec<(DMatrix<f64>, Vec<DMatrix<f64>>)>,
    /// Closed-form optimum when available.
    pub analytic: Option<f64>,
    /// Grid-refinement search box halfwidth (brute-force oracle).
    pub grid_halfwidth: f64,
}

impl LmiToy {
    pub fn to_problem(&self) -> SdpProblem {
        let nv = self.c.len();
        let mut prob = SdpProblem {
            block_dims: self.blocks.iter().map(|(f0, _)| f0.nrows()).collect(),
            nfree: nv,
            obj_free: self.c.clone(),
            ..Default::default()
        };
        for (b, (f0, fs)) in self.blocks.iter().enumerate() {
            let d = f0.nrows();
            for i in 0..d {
                for j in i..d {
                    let mut row = EqRow { cone: vec![(b, i, j, 1.0)], free: vec![], rhs: f0[(i, j)] };
                    for (k, fk) in fs.iter().enumerate() {
                        if fk[(i, j)] != 0.0 {
                            row.free.push((k, -fk[(i, j)]));
                        }
                    }
                    prob.eqs.push(row);
                    prob.eq_labels.push(format!("b{b}[{i}{j}]"));
                }
            }
        }
        prob
    }

    pub fn feasible(&self, v: &[f64], tol: f64) -> bool {
        self.blocks.iter().all(|(f0, fs)| {
            let mut m = f0.clone();
            for (k, fk) in fs.iter().enumerate() {
                m += fk * v[k];
            }
            let eig = m.symmetric_eigen();
            eig.eigenvalues.iter().all(|&l| l >= -tol)
        })
    }

    /// Brute-force oracle: nested grid refinement, keeping a recentering
    /// margin of several grid cells; feasibility is the exact PSD test.
    pub fn grid_optimum(&self) -> f64 {
        let d = self.c.len();
        assert!(d <= 3, "grid oracle limited to 3 variables");
        let mut center = vec![0.0; d];
        let mut width = self.grid_halfwidth;
        let pts = 41usize;
        let mut best_val = f64::INFINITY;
        for _round in 0..24 {
            let mut best_here: Option<(f64, Vec<f64>)> = None;
            let mut idx = vec![0usize; d];
            loop {
                let v: Vec<f64> = (0..d)
                    .map(|k| center[k] - width + 2.0 * width * idx[k] as f64 / (pts - 1) as f64)
                    .collect();
                if self.feasible(&v, 1e-13) {
                    let val: f64 = v.iter().zip(&self.c).map(|(a, b)| a * b).sum();
                    if best_here.as_ref().map_or(true, |(bv, _)| val < *bv) {
                        best_here = Some((val, v));
                    }
                }
                // Odometer increment.
                let mut k = 0;
                loop {
                    if k == d {
                        break;
                    }
                    idx[k] += 1;
                    if idx[k] < pts {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
                if k == d {
                    break;
                }
            }
            let (val, argmin) = best_here.expect("oracle found no feasible grid point");
            best_val = best_val.min(val);
            // Shrink only once the argmin sits in the inner half of the box,
            // so the search can slide along curved constraint boundaries.
            let interior = argmin
                .iter()
                .zip(&center)
                .all(|(a, c)| (a - c).abs() <= 0.5 * width);
            center = argmin;
            if interior {
                width = width * 8.0 / (pts - 1) as f64;
            }
        }
        best_val
    }
}

pub fn m2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a, b, c, d])
}

pub fn m1(a: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, 1, &[a])
}

pub fn lmi_toys() -> Vec<LmiToy> {
    vec![
        LmiToy {
            name: "offdiag-one",
            c: vec![1.0],
            blocks: vec![(m2(0.0, 1.0, 1.0, 0.0), vec![m2(1.0, 0.0, 0.0, 1.0)])],
            analytic: Some(1.0),
            grid_halfwidth: 10.0,
        },
        LmiToy {
            name: "am-gm",
            c: vec![1.0, 1.0],
            blocks: vec![(m2(0.0, 1.0, 1.0, 0.0), vec![m2(1.0, 0.0, 0.0, 0.0), m2(0.0, 0.0, 0.0, 1.0)])],
            analytic: Some(2.0),
            grid_halfwidth: 10.0,
        },
        LmiToy {
            name: "lp-substituted",
            // min 2a + 3(1-a) = 3 - a, 0 <= a <= 1
            c: vec![-1.0],
            blocks: vec![(m1(0.0), vec![m1(1.0)]), (m1(1.0), vec![m1(-1.0)])],
            analytic: Some(-1.0),
            grid_halfwidth: 10.0,
        },
        LmiToy {
            name: "shifted-scalar",
            c: vec![1.0],
            blocks: vec![(m1(-1.0), vec![m1(1.0)])],
            analytic: Some(1.0),
            grid_halfwidth: 10.0,
        },
        LmiToy {
            name: "lambda-max",
            c: vec![1.0],
            blocks: vec![(m2(-1.0, -0.5, -0.5, -2.0), vec![m2(1.0, 0.0, 0.0, 1.0)])],
            analytic: Some((3.0 + 2.0f64.sqrt()) / 2.0),
            grid_halfwidth: 10.0,
        },
        LmiToy {
            name: "hyperbola",
            c: vec![1.0, 1.0],
            blocks: vec![(m2(0.0, 0.3, 0.3, 0.0), vec![m2(1.0, 0.0, 0.0, 0.0), m2(0.0, 0.0, 0.0, 1.0)])],
            analytic: Some(0.6),
            grid_halfwidth: 10.0,
        },
        LmiToy {
            name: "epigraph-of-square",
            // v = (x, t): [[1, x], [x, t]] ⪰ 0, x pinned to 3 by two 1x1 blocks.
            c: vec![0.0, 1.0],
            blocks: vec![
                (m2(1.0, 0.0, 0.0, 0.0), vec![m2(0.0, 1.0, 1.0, 0.0), m2(0.0, 0.0, 0.0, 1.0)]),
                (m1(-3.0), vec![m1(1.0), m1(0.0)]),
                (m1(3.0), vec![m1(-1.0), m1(0.0)]),
            ],
            analytic: Some(9.0),
            grid_halfwidth: 12.0,
        },
        LmiToy {
            name: "minimax",
            // min t s.t. t >= x, t >= 1 - x
            c: vec![0.0, 1.0],
            blocks: vec![
                (m1(0.0), vec![m1(-1.0), m1(1.0)]),
                (m1(-1.0), vec![m1(1.0), m1(1.0)]),
            ],
            analytic: Some(0.5),
            grid_halfwidth: 10.0,
        },
        LmiToy {
            name: "tridiagonal",
            c: vec![1.0, 1.0, 1.0],
            blocks: vec![(
                DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]),
                vec![
                    DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
                    DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]),
                    DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
                ],
            )],
            // By symmetry x = z and the determinant condition x^2 y >= 2x,
            // minimize 2x + 2/x: optimum 4 at x = z = 1, y = 2.
            analytic: Some(4.0),
            grid_halfwidth: 10.0,
        },
        LmiToy {
            name: "completion",
            c: vec![1.0],
            blocks: vec![(
                DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.5, 1.0, 0.5, 0.0, 0.5, 1.0]),
                vec![DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0])],
            )],
            analytic: Some(-0.5),
            grid_halfwidth: 5.0,
        },
        LmiToy {
            name: "offdiag-two",
            c: vec![1.0],
            blocks: vec![(m2(0.0, 2.0, 2.0, 0.0), vec![m2(1.0, 0.0, 0.0, 1.0)])],
            analytic: Some(2.0),
            grid_halfwidth: 10.0,
        },
        LmiToy {
            name: "lp-corner",
            // min -a - 2b s.t. a, b >= 0, a + b <= 1
            c: vec![-1.0, -2.0],
            blocks: vec![
                (m1(0.0), vec![m1(1.0), m1(0.0)]),
                (m1(0.0), vec![m1(0.0), m1(1.0)]),
                (m1(1.0), vec![m1(-1.0), m1(-1.0)]),
            ],
            analytic: Some(-2.0),
            grid_halfwidth: 10.0,
        },
        LmiToy {
            name: "coupled-free",
            // min u + x s.t. [[x,1],[1,u]] ⪰ 0, u >= 1: min u + 1/u = 2
            c: vec![1.0, 1.0],
            blocks: vec![
                (m2(0.0, 1.0, 1.0, 0.0), vec![m2(1.0, 0.0, 0.0, 0.0), m2(0.0, 0.0, 0.0, 1.0)]),
                (m1(-1.0), vec![m1(0.0), m1(1.0)]),
            ],
            analytic: Some(2.0),
            grid_halfwidth: 10.0,
        },
        LmiToy {
            name: "interval-zero-cost",
            c: vec![1.0],
            blocks: vec![(m1(0.0), vec![m1(1.0)]), (m1(1.0), vec![m1(-1.0)])],
            analytic: Some(0.0),
            grid_halfwidth: 10.0,
        },
        LmiToy {
            name: "badly-scaled",
            c: vec![1.0],
            blocks: vec![(m2(0.0, 1e2, 1e2, 0.0), vec![m2(1e3, 0.0, 0.0, 1e3)])],
            analytic: Some(0.1),
            grid_halfwidth: 10.0,
        },
        LmiToy {
            name: "ellipse-support",
            // min x + 2y s.t. [[1 - x, y], [y, 1 + x]] ⪰ 0 (disc x² + y² <= 1)
            c: vec![1.0, 2.0],
            blocks: vec![(
                m2(1.0, 0.0, 0.0, 1.0),
                vec![m2(-1.0, 0.0, 0.0, 1.0), m2(0.0, 1.0, 1.0, 0.0)],
            )],
            analytic: Some(-5.0f64.sqrt()),
            grid_halfwidth: 5.0,
        },
    ]
}

