//! Independent numerical validation of synthesized certificates: closed-loop
//! simulation under the rational controller, decrease/invariance checks,
//! sampled constraint residuals, Monte-Carlo safe-set volume, and contour
//! data for plotting.

use thiserror::Error;

use crate::certs::{CertificateSet, ProblemSpec};
use crate::poly::{PolyError, PolyVector, Point, Polynomial};
use crate::sampling;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("controller denominator violated its certificate: s1({0:?}) = {1}")]
    CertificateViolation(Vec<f64>, f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// The shared rational controller `u(x) = p(x) / s₁(x)`.
///
/// One object serves both the stabilization and the invariance role; the
/// control-sharing property is structural.
#[derive(Debug, Clone)]
pub struct RationalController {
    pub p: PolyVector,
    pub s1: Polynomial,
    pub eps_s1: f64,
}

impl RationalController {
    pub fn from_certificates(cert: &CertificateSet, eps_s1: f64) -> Self {
        RationalController {
            p: PolyVector::new(cert.p.clone()),
            s1: cert.s1.clone(),
            eps_s1,
        }
    }

    /// `p(x)/s₁(x)` componentwise. The positivity certificate guarantees
    /// `s₁ ≥ ε_{s1}`; a value below half of that is reported as a violation.
    pub fn eval(&self, x: &Point) -> Result<Vec<f64>, VerifyError> {
        let s1 = self.s1.evaluate(x)?;
        if s1 < self.eps_s1 / 2.0 {
            return Err(VerifyError::CertificateViolation(x.coords().to_vec(), s1));
        }
        Ok(self.p.evaluate(x)?.into_iter().map(|v| v / s1).collect())
    }
}

/// `ẋ = f(x) + G(x) u(x)`.
pub fn closed_loop_field(
    spec: &ProblemSpec,
    ctrl: &RationalController,
    x: &Point,
) -> Result<Vec<f64>, VerifyError> {
    let u = ctrl.eval(x)?;
    let f = spec.f.evaluate(x)?;
    let g = spec.g.evaluate(x)?;
    Ok((0..spec.nvars())
        .map(|i| f[i] + g[i].iter().zip(&u).map(|(gij, uj)| gij * uj).sum::<f64>())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryEvent {
    LeftOperatingRegion,
    EnteredEquilibriumNeighborhood,
    StepRejected,
    /// The error estimate stayed above tolerance (or went non-finite) at the
    /// minimum step size; the trajectory is truncated at the last good state.
    IntegrationFailure,
}

/// A simulated closed-loop trajectory with the applied inputs.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Point>,
    pub inputs: Vec<Vec<f64>>,
    pub events: Vec<TrajectoryEvent>,
}

fn rk4_step(
    spec: &ProblemSpec,
    ctrl: &RationalController,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>, VerifyError> {
    let eval = |x: &[f64]| closed_loop_field(spec, ctrl, &Point::new(x.to_vec()));
    let k1 = eval(x)?;
    let mid1: Vec<f64> = x.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
    let k2 = eval(&mid1)?;
    let mid2: Vec<f64> = x.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
    let k3 = eval(&mid2)?;
    let end: Vec<f64> = x.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
    let k4 = eval(&end)?;
    Ok(x.iter()
        .enumerate()
        .map(|(i, a)| a + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Classic fixed-step fourth-order integration with step halving whenever the
/// step-doubling error estimate exceeds `1e-8`. Stops at `T` or on leaving
/// the operating region.
pub fn simulate(
    spec: &ProblemSpec,
    ctrl: &RationalController,
    x0: &Point,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory, VerifyError> {
    if dt <= 0.0 {
        return Err(VerifyError::InvalidArgument("dt must be positive".into()));
    }
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.clone()],
        inputs: vec![ctrl.eval(x0)?],
        events: Vec::new(),
    };
    let mut t = 0.0;
    let mut x = x0.coords().to_vec();
    let eq_radius = 1e-4;
    let mut entered_eq = false;
    while t < t_final - 1e-12 {
        let h_macro = dt.min(t_final - t);
        // One macro step, subdivided on error-estimate failures.
        let mut h = h_macro;
        let mut t_local = 0.0;
        while t_local < h_macro - 1e-15 {
            h = h.min(h_macro - t_local);
            let full = rk4_step(spec, ctrl, &x, h)?;
            let half = rk4_step(spec, ctrl, &x, h / 2.0)?;
            let two_half = rk4_step(spec, ctrl, &half, h / 2.0)?;
            let err = full
                .iter()
                .zip(&two_half)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max)
                / 15.0;
            // A non-finite estimate must reject the step as well.
            if !(err <= 1e-8) {
                if h > h_macro * 1e-9 {
                    if !traj.events.contains(&TrajectoryEvent::StepRejected) {
                        traj.events.push(TrajectoryEvent::StepRejected);
                    }
                    h /= 2.0;
                    continue;
                }
                traj.events.push(TrajectoryEvent::IntegrationFailure);
                return Ok(traj);
            }
            x = two_half;
            t_local += h;
            if x.iter().any(|v| !v.is_finite()) {
                traj.events.push(TrajectoryEvent::IntegrationFailure);
                return Ok(traj);
            }
        }
        t += h_macro;
        let pt = Point::new(x.clone());
        traj.inputs.push(ctrl.eval(&pt)?);
        traj.states.push(pt.clone());
        traj.times.push(t);
        let dist2: f64 = x
            .iter()
            .zip(spec.xstar.coords())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if !entered_eq && dist2.sqrt() <= eq_radius {
            entered_eq = true;
            traj.events.push(TrajectoryEvent::EnteredEquilibriumNeighborhood);
        }
        if spec.r.evaluate(&pt)? > 0.0 {
            traj.events.push(TrajectoryEvent::LeftOperatingRegion);
            break;
        }
    }
    Ok(traj)
}

/// Lyapunov decrease along a recorded trajectory: fraction of steps with
/// `V(x_{k+1}) < V(x_k)` outside the equilibrium ball `‖x - x*‖ ≤ 1e-4`.
#[derive(Debug, Clone, Copy)]
pub struct DecreaseReport {
    pub checked_steps: usize,
    pub decreasing_steps: usize,
    pub pass: bool,
}

pub fn check_decrease(
    v: &Polynomial,
    xstar: &Point,
    traj: &Trajectory,
) -> Result<DecreaseReport, VerifyError> {
    let mut checked = 0;
    let mut decreasing = 0;
    for w in traj.states.windows(2) {
        let dist: f64 = w[0]
            .coords()
            .iter()
            .zip(xstar.coords())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dist <= 1e-4 {
            continue;
        }
        checked += 1;
        if v.evaluate(&w[1])? < v.evaluate(&w[0])? {
            decreasing += 1;
        }
    }
    Ok(DecreaseReport { checked_steps: checked, decreasing_steps: decreasing, pass: checked == decreasing })
}

/// Minimum sampled values of the certified constraint polynomials over the
/// operating region.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub min_clf: f64,
    pub min_cbf: Vec<f64>,
    pub min_containment: Vec<f64>,
    pub min_s1: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Rebuild the certified constraint polynomials from a certificate set.
pub fn constraint_polynomials(
    spec: &ProblemSpec,
    cert: &CertificateSet,
) -> Result<(Polynomial, Vec<Polynomial>, Vec<Polynomial>), PolyError> {
    let n = spec.nvars();
    // s1 f + G p
    let mut field = Vec::with_capacity(n);
    for j in 0..n {
        let mut acc = cert.s1.mul(spec.f.entry(j))?;
        for (k, pk) in cert.p.iter().enumerate() {
            acc = acc.add(&spec.g.entry(j, k).mul(pk)?)?;
        }
        field.push(acc);
    }
    let field = PolyVector::new(field);
    let l2 = spec.l.mul(&spec.l)?;
    let clf = cert
        .v
        .gradient()
        .dot(&field)?
        .neg()
        .sub(&l2)?
        .add(&cert.s2.mul(&spec.r)?)?;
    let mut cbfs = Vec::new();
    let mut conts = Vec::new();
    for i in 0..cert.b.len() {
        let cbf = cert.b[i]
            .gradient()
            .dot(&field)?
            .neg()
            .sub(&cert.pm1[i].mul(&cert.b[i])?)?
            .add(&cert.s3[i].mul(&spec.r)?)?;
        cbfs.push(cbf);
        conts.push(cert.b[i].sub(&cert.s4[i].mul(&spec.w[i])?)?);
    }
    Ok((clf, cbfs, conts))
}

/// Sample the constraint polynomials at `n_samples` points of the operating
/// region; pass iff every minimum clears `-1e-6`.
pub fn sample_sos_residuals(
    cert: &CertificateSet,
    spec: &ProblemSpec,
    n_samples: usize,
    seed: u64,
) -> Result<ResidualReport, VerifyError> {
    if n_samples == 0 {
        return Err(VerifyError::InvalidArgument("sample count must be at least 1".into()));
    }
    let (clf, cbfs, conts) = constraint_polynomials(spec, cert)?;
    let s1_shift = cert.s1.sub(&Polynomial::constant(spec.nvars(), spec.eps_s1))?;
    let bbox = sampling::bounding_box(&spec.r, 10.0);
    let mut min_clf = f64::INFINITY;
    let mut min_cbf = vec![f64::INFINITY; cbfs.len()];
    let mut min_cont = vec![f64::INFINITY; conts.len()];
    let mut min_s1 = f64::INFINITY;
    let mut taken = 0usize;
    let mut index = 0u64;
    while taken < n_samples {
        let x = match sampling::sample_region_point(seed, index, &bbox, |p| {
            spec.r.evaluate(p).map(|v| v <= 0.0).unwrap_or(false)
        }, 64)
        {
            Some(x) => x,
            None => {
                index += 1;
                continue;
            }
        };
        index += 1;
        taken += 1;
        min_clf = min_clf.min(clf.evaluate(&x)?);
        for (i, c) in cbfs.iter().enumerate() {
            min_cbf[i] = min_cbf[i].min(c.evaluate(&x)?);
        }
        for (i, c) in conts.iter().enumerate() {
            min_cont[i] = min_cont[i].min(c.evaluate(&x)?);
        }
        min_s1 = min_s1.min(s1_shift.evaluate(&x)?);
    }
    let tol = -1e-6;
    let pass = min_clf >= tol
        && min_cbf.iter().all(|&v| v >= tol)
        && min_cont.iter().all(|&v| v >= tol)
        && min_s1 >= tol;
    Ok(ResidualReport {
        min_clf,
        min_cbf,
        min_containment: min_cont,
        min_s1,
        samples: n_samples,
        pass,
    })
}

/// Monte-Carlo estimate of the safe-set volume `vol{x : Bᵢ(x) ≤ 0 ∀i}` over a
/// bounding box, with the binomial standard error.
pub fn safe_set_volume(
    b: &[Polynomial],
    bbox: &[(f64, f64)],
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64), VerifyError> {
    if n_samples == 0 {
        return Err(VerifyError::InvalidArgument("sample count must be at least 1".into()));
    }
    let box_volume: f64 = bbox.iter().map(|(lo, hi)| hi - lo).product();
    let mut hits = 0usize;
    for index in 0..n_samples {
        let mut rng = sampling::stream_rng(seed, index as u64);
        let x = sampling::sample_in_box(&mut rng, bbox);
        let inside = b
            .iter()
            .map(|bi| bi.evaluate(&x))
            .collect::<Result<Vec<f64>, _>>()?
            .iter()
            .all(|&v| v <= 0.0);
        if inside {
            hits += 1;
        }
    }
    let p = hits as f64 / n_samples as f64;
    let stderr = (p * (1.0 - p) / n_samples as f64).sqrt() * box_volume;
    Ok((p * box_volume, stderr))
}

/// One grid sample row of a two-dimensional slice.
#[derive(Debug, Clone)]
pub struct SliceRow {
    pub x1: f64,
    pub x2: f64,
    pub value: f64,
    pub poly_id: String,
}

/// A zero-level segment from marching squares, in slice coordinates.
#[derive(Debug, Clone)]
pub struct SliceSegment {
    pub poly_id: String,
    pub a: (f64, f64),
    pub b: (f64, f64),
}

/// Sample polynomials on an axis-aligned 2-D slice (remaining coordinates
/// fixed), plus marching-squares zero-level segments for contour plotting.
#[allow(clippy::too_many_arguments)]
pub fn contour_slice(
    polys: &[(String, Polynomial)],
    axis_x: usize,
    axis_y: usize,
    fixed: &Point,
    bbox: &[(f64, f64)],
    grid: usize,
) -> Result<(Vec<SliceRow>, Vec<SliceSegment>), VerifyError> {
    if grid < 2 {
        return Err(VerifyError::InvalidArgument("grid must be at least 2x2".into()));
    }
    let n = fixed.dim();
    if axis_x >= n || axis_y >= n || axis_x == axis_y {
        return Err(VerifyError::InvalidArgument("invalid slice axes".into()));
    }
    let (x_lo, x_hi) = bbox[axis_x];
    let (y_lo, y_hi) = bbox[axis_y];
    let coord = |i: usize, j: usize| {
        let mut c = fixed.coords().to_vec();
        c[axis_x] = x_lo + (x_hi - x_lo) * i as f64 / (grid - 1) as f64;
        c[axis_y] = y_lo + (y_hi - y_lo) * j as f64 / (grid - 1) as f64;
        c
    };
    let mut rows = Vec::new();
    let mut segments = Vec::new();
    for (name, poly) in polys {
        let mut values = vec![vec![0.0; grid]; grid];
        for i in 0..grid {
            for j in 0..grid {
                let c = coord(i, j);
                let v = poly.evaluate(&Point::new(c.clone()))?;
                values[i][j] = v;
                rows.push(SliceRow { x1: c[axis_x], x2: c[axis_y], value: v, poly_id: name.clone() });
            }
        }
        // Marching squares on the sign grid.
        for i in 0..grid - 1 {
            for j in 0..grid - 1 {
                let corners = [
                    (i, j, values[i][j]),
                    (i + 1, j, values[i + 1][j]),
                    (i + 1, j + 1, values[i + 1][j + 1]),
                    (i, j + 1, values[i][j + 1]),
                ];
                let mut crossings = Vec::new();
                for k in 0..4 {
                    let (i0, j0, v0) = corners[k];
                    let (i1, j1, v1) = corners[(k + 1) % 4];
                    if (v0 < 0.0) != (v1 < 0.0) {
                        let t = v0 / (v0 - v1);
                        let c0 = coord(i0, j0);
                        let c1 = coord(i1, j1);
                        crossings.push((
                            c0[axis_x] + t * (c1[axis_x] - c0[axis_x]),
                            c0[axis_y] + t * (c1[axis_y] - c0[axis_y]),
                        ));
                    }
                }
                // 2 crossings: one segment; 4: saddle, pair them in edge order.
                let mut it = crossings.chunks_exact(2);
                for pair in &mut it {
                    segments.push(SliceSegment { poly_id: name.clone(), a: pair[0], b: pair[1] });
                }
            }
        }
    }
    Ok((rows, segments))
}
