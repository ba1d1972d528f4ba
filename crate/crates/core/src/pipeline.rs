//! End-to-end orchestration behind the command-line interface: problem
//! loading, synthesis, certificate verification, simulation batches, and
//! figure data. Kept in the library so the flows are testable in-process.

use std::fmt::Write as _;

use thiserror::Error;

use crate::alternate::{run, AlternateConfig, AlternateError, IterationRecord};
use crate::certfile::{self, CertFileError, CertificateFile};
use crate::certs::{CertificateSet, CertsError, ProblemSpec, SosWitness};
use crate::poly::{shift_monomial, Point, Polynomial};
use crate::probfile::{self, ProbFileError};
use crate::sampling;
use crate::sdp::psd_project_check;
use crate::verify::{
    self, check_decrease, contour_slice, sample_sos_residuals, simulate, RationalController,
    Trajectory, VerifyError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Problem(#[from] ProbFileError),
    #[error(transparent)]
    Certificate(#[from] CertFileError),
    #[error(transparent)]
    Certs(#[from] CertsError),
    #[error(transparent)]
    Alternate(#[from] AlternateError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Poly(#[from] crate::poly::PolyError),
    #[error("certificate does not match this problem file (hash {found} != {expected})")]
    HashMismatch { expected: String, found: String },
    #[error("{0}")]
    InvalidArgument(String),
}

/// Flag-level overrides applied on top of the problem file.
#[derive(Debug, Clone, Default)]
pub struct SynthOverrides {
    pub max_outer: Option<usize>,
    pub threshold: Option<f64>,
    pub seed: Option<u64>,
    pub checkpoint_dir: Option<std::path::PathBuf>,
    pub verbose: bool,
}

pub struct SynthOutcome {
    pub cert: CertificateSet,
    pub cert_text: String,
    pub history: Vec<IterationRecord>,
    pub warnings: Vec<String>,
}

/// Parse, validate and solve a problem, returning the serialized certificate.
pub fn synth(problem_text: &str, overrides: &SynthOverrides) -> Result<SynthOutcome, PipelineError> {
    let mut spec = probfile::parse_problem(problem_text)?;
    if let Some(mo) = overrides.max_outer {
        spec.algo.max_outer = mo;
    }
    if let Some(th) = overrides.threshold {
        spec.algo.threshold = th;
    }
    if let Some(seed) = overrides.seed {
        spec.algo.seed = seed;
    }
    let warnings = spec.validate()?;
    let hash = certfile::sha256_hex(problem_text.as_bytes());
    let cfg = AlternateConfig {
        max_outer: spec.algo.max_outer,
        cost_threshold: spec.algo.threshold,
        checkpoint_dir: overrides.checkpoint_dir.clone(),
        problem_hash: hash.clone(),
        verbose: overrides.verbose,
        ..Default::default()
    };
    let (cert, history) = run(&spec, spec.initial_controller(), &cfg)?;
    let cert_text = certfile::write_certificate(&cert, &hash);
    Ok(SynthOutcome { cert, cert_text, history, warnings })
}

/// Reconstruct `Z(x-c)ᵀ Q Z(x-c)` from a stored witness.
pub fn reconstruct_witness(w: &SosWitness) -> Polynomial {
    let n = w.center.dim();
    let shifted: Vec<Polynomial> = w.basis.iter().map(|m| shift_monomial(m, &w.center)).collect();
    let mut out = Polynomial::zero(n);
    for i in 0..shifted.len() {
        for j in 0..shifted.len() {
            let prod = shifted[i].mul(&shifted[j]).expect("same nvars");
            out = out.add(&prod.scale(w.gram[(i, j)])).expect("same nvars");
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct WitnessCheck {
    pub name: String,
    pub max_rel_coeff_err: f64,
    pub min_eig: f64,
    pub pass: bool,
}

/// Check every stored SOS witness: the Gram must reconstruct its target
/// within `1e-6` relative coefficient error and have `λmin ≥ -1e-8`.
pub fn check_witnesses(cert: &CertificateSet) -> Vec<WitnessCheck> {
    cert.witnesses
        .iter()
        .map(|w| {
            let recon = reconstruct_witness(w);
            let diff = recon.sub(&w.target).expect("same nvars");
            let scale = 1.0f64.max(w.target.max_abs_coeff());
            let rel = diff.max_abs_coeff() / scale;
            let (psd_ok, min_eig) = psd_project_check(&w.gram, 1e-8);
            WitnessCheck { name: w.name.clone(), max_rel_coeff_err: rel, min_eig, pass: rel <= 1e-6 && psd_ok }
        })
        .collect()
}

pub struct VerifyOutcome {
    pub witness_checks: Vec<WitnessCheck>,
    pub residuals: verify::ResidualReport,
    pub safety_violations: usize,
    pub trajectories_checked: usize,
    pub trajectories_safe: usize,
    pub decrease_failures: usize,
    pub volume: (f64, f64),
    pub report: String,
    pub pass: bool,
}

/// Parse both files, check the hash binding, and run the full numerical
/// validation: witness identities, sampled constraint residuals, Monte-Carlo
/// safety, and closed-loop trajectories.
pub fn verify_certificate(
    problem_text: &str,
    cert_text: &str,
    mc_samples: usize,
    n_trajectories: usize,
    t_final: f64,
    dt: f64,
) -> Result<VerifyOutcome, PipelineError> {
    let spec = probfile::parse_problem(problem_text)?;
    spec.validate()?;
    let parsed: CertificateFile = certfile::parse_certificate(cert_text)?;
    let expected = certfile::sha256_hex(problem_text.as_bytes());
    if parsed.problem_hash != expected {
        return Err(PipelineError::HashMismatch { expected, found: parsed.problem_hash });
    }
    let cert = parsed.cert;
    let seed = spec.algo.seed;

    let witness_checks = check_witnesses(&cert);
    let residuals = sample_sos_residuals(&cert, &spec, mc_samples.max(1), seed)?;

    // Monte-Carlo safety: no sampled point may be inside the safe set yet
    // outside the allowable set.
    let bbox = sampling::bounding_box(&spec.r, 10.0);
    let mut safety_violations = 0usize;
    for index in 0..mc_samples {
        let mut rng = sampling::stream_rng(seed ^ 0x5afe, index as u64);
        let x = sampling::sample_in_box(&mut rng, &bbox);
        let in_safe = cert
            .b
            .iter()
            .all(|b| b.evaluate(&x).map(|v| v <= 0.0).unwrap_or(false));
        if in_safe {
            let violates = spec
                .w
                .iter()
                .any(|w| w.evaluate(&x).map(|v| v > 1e-6).unwrap_or(true));
            if violates {
                safety_violations += 1;
            }
        }
    }

    // Closed-loop trajectories from the safe set.
    let ctrl = RationalController::from_certificates(&cert, spec.eps_s1);
    let mut trajectories_safe = 0usize;
    let mut decrease_failures = 0usize;
    let starts = sample_safe_starts(&spec, &cert, n_trajectories, seed ^ 0x7247);
    for x0 in &starts {
        let traj = simulate(&spec, &ctrl, x0, t_final, dt)?;
        let mut stayed = !traj
            .events
            .contains(&soscert_trajectory_failure());
        for state in &traj.states {
            for w in &spec.w {
                // NaN-robust: anything not provably inside counts as unsafe.
                if !(w.evaluate(state)? <= 1e-6) {
                    stayed = false;
                }
            }
        }
        if stayed {
            trajectories_safe += 1;
        }
        if !check_decrease(&cert.v, &spec.xstar, &traj)?.pass {
            decrease_failures += 1;
        }
    }

    let volume = verify::safe_set_volume(&cert.b, &bbox, mc_samples.max(1), seed ^ 0x701)?;

    let witness_pass = witness_checks.iter().all(|w| w.pass);
    let pass = witness_pass
        && residuals.pass
        && safety_violations == 0
        && trajectories_safe == starts.len()
        && decrease_failures == 0;

    let mut report = String::new();
    writeln!(report, "witness identities: {} ({} checked)", pass_str(witness_pass), witness_checks.len()).unwrap();
    for w in &witness_checks {
        if !w.pass {
            writeln!(report, "  FAIL {}: rel err {:.2e}, min eig {:.2e}", w.name, w.max_rel_coeff_err, w.min_eig).unwrap();
        }
    }
    writeln!(
        report,
        "sampled constraint residuals: {} (min clf {:.2e}, min cbf {:.2e}, min containment {:.2e}, min s1 {:.2e})",
        pass_str(residuals.pass),
        residuals.min_clf,
        residuals.min_cbf.iter().cloned().fold(f64::INFINITY, f64::min),
        residuals.min_containment.iter().cloned().fold(f64::INFINITY, f64::min),
        residuals.min_s1
    )
    .unwrap();
    writeln!(
        report,
        "monte-carlo safety ({} samples): {} ({} violations)",
        mc_samples,
        pass_str(safety_violations == 0),
        safety_violations
    )
    .unwrap();
    writeln!(
        report,
        "trajectories ({} from the safe set, T = {t_final}): {} safe, {} decrease failures",
        starts.len(),
        trajectories_safe,
        decrease_failures
    )
    .unwrap();
    writeln!(report, "safe-set volume estimate: {:.6} ± {:.6}", volume.0, volume.1).unwrap();
    writeln!(report, "overall: {}", pass_str(pass)).unwrap();

    Ok(VerifyOutcome {
        witness_checks,
        residuals,
        safety_violations,
        trajectories_checked: starts.len(),
        trajectories_safe,
        decrease_failures,
        volume,
        report,
        pass,
    })
}

fn soscert_trajectory_failure() -> verify::TrajectoryEvent {
    verify::TrajectoryEvent::IntegrationFailure
}

fn pass_str(b: bool) -> &'static str {
    if b {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Deterministic start points inside the safe set (rejection sampling).
pub fn sample_safe_starts(
    spec: &ProblemSpec,
    cert: &CertificateSet,
    count: usize,
    seed: u64,
) -> Vec<Point> {
    let bbox = sampling::bounding_box(&spec.r, 10.0);
    let inside = |x: &Point| {
        cert.b.iter().all(|b| b.evaluate(x).map(|v| v <= 0.0).unwrap_or(false))
            && spec.r.evaluate(x).map(|v| v <= 0.0).unwrap_or(false)
    };
    let mut out = Vec::with_capacity(count);
    let mut index = 0u64;
    while out.len() < count && index < (count as u64) * 10_000 {
        if let Some(x) = sampling::sample_region_point(seed, index, &bbox, &inside, 128) {
            out.push(x);
        }
        index += 1;
    }
    out
}

/// Simulate trajectories and emit CSV rows
/// (`traj,t,x1..xn,u1..um,V,B1..Bt`).
pub fn simulate_csv(
    problem_text: &str,
    cert_text: &str,
    starts: &[Point],
    t_final: f64,
    dt: f64,
) -> Result<(String, Vec<Trajectory>), PipelineError> {
    let spec = probfile::parse_problem(problem_text)?;
    let parsed = certfile::parse_certificate(cert_text)?;
    let expected = certfile::sha256_hex(problem_text.as_bytes());
    if parsed.problem_hash != expected {
        return Err(PipelineError::HashMismatch { expected, found: parsed.problem_hash });
    }
    let cert = parsed.cert;
    let ctrl = RationalController::from_certificates(&cert, spec.eps_s1);
    let n = spec.nvars();
    let m = spec.ninputs();
    let t = cert.b.len();
    let mut csv = String::from("traj,t");
    for i in 1..=n {
        write!(csv, ",x{i}").unwrap();
    }
    for k in 1..=m {
        write!(csv, ",u{k}").unwrap();
    }
    csv.push_str(",V");
    for i in 1..=t {
        write!(csv, ",B{i}").unwrap();
    }
    csv.push('\n');
    let mut trajectories = Vec::new();
    for (id, x0) in starts.iter().enumerate() {
        let traj = simulate(&spec, &ctrl, x0, t_final, dt)?;
        for (step, time) in traj.times.iter().enumerate() {
            let state = &traj.states[step];
            write!(csv, "{id},{time:?}").unwrap();
            for c in state.coords() {
                write!(csv, ",{c:?}").unwrap();
            }
            for u in &traj.inputs[step] {
                write!(csv, ",{u:?}").unwrap();
            }
            write!(csv, ",{:?}", cert.v.evaluate(state)?).unwrap();
            for b in &cert.b {
                write!(csv, ",{:?}", b.evaluate(state)?).unwrap();
            }
            csv.push('\n');
        }
        trajectories.push(traj);
    }
    Ok((csv, trajectories))
}

/// Contour-slice CSV (`x1,x2,value,poly_id`) for the allowable-set boundaries
/// and each certificate's barrier zero-level sets. Zero-level segments are
/// appended with `poly_id` suffixed `:zero`, `value` holding the segment
/// index, and endpoints on consecutive rows.
pub fn plotdata_csv(
    problem_text: &str,
    certs: &[(String, String)],
    axis_x: usize,
    axis_y: usize,
    grid: usize,
) -> Result<String, PipelineError> {
    let spec = probfile::parse_problem(problem_text)?;
    if certs.is_empty() {
        return Err(PipelineError::InvalidArgument("no certificate files given".into()));
    }
    let n = spec.nvars();
    if axis_x >= n || axis_y >= n || axis_x == axis_y {
        return Err(PipelineError::InvalidArgument("invalid plane axes".into()));
    }
    let bbox = sampling::bounding_box(&spec.r, 10.0);
    let mut polys: Vec<(String, Polynomial)> = spec
        .w
        .iter()
        .enumerate()
        .map(|(i, w)| (format!("w{}", i + 1), w.clone()))
        .collect();
    for (tag, text) in certs {
        let parsed = certfile::parse_certificate(text)?;
        for (i, b) in parsed.cert.b.iter().enumerate() {
            let name = if certs.len() == 1 {
                format!("B{}", i + 1)
            } else {
                format!("B{}@{tag}", i + 1)
            };
            polys.push((name, b.clone()));
        }
    }
    let (rows, segments) = contour_slice(&polys, axis_x, axis_y, &spec.xstar, &bbox, grid)?;
    let mut csv = String::from("x1,x2,value,poly_id\n");
    for r in &rows {
        writeln!(csv, "{:?},{:?},{:?},{}", r.x1, r.x2, r.value, r.poly_id).unwrap();
    }
    for (k, seg) in segments.iter().enumerate() {
        writeln!(csv, "{:?},{:?},{k},{}:zero", seg.a.0, seg.a.1, seg.poly_id).unwrap();
        writeln!(csv, "{:?},{:?},{k},{}:zero", seg.b.0, seg.b.1, seg.poly_id).unwrap();
    }
    Ok(csv)
}
