//! The alternating synthesis loop: step 1 fixes the controller triple and
//! optimizes the certificates, step 2 fixes the certificates and recovers the
//! controller by slack minimization. Feasibility is maintained along the
//! iterations and the step-1 cost is non-increasing, which is what
//! [`check_monotone`] verifies.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::certfile;
use crate::certs::{
    build_step1_program, build_step2_program, extract_witnesses, infeasibility_diagnosis,
    CertMeta, CertificateSet, CertsError, ControllerTriple, ProblemSpec, SosWitness,
};
use crate::poly::Polynomial;
use crate::sdp::{self, SdpStats, SolveOptions, SolveStatus};

/// Slack tolerance: a snapshot is compatible when every step-2 slack is below
/// this value.
pub const EPS_TOL: f64 = 1e-7;

/// Relative coefficient cleanup between half-steps. Solver round-off in a
/// coefficient that is exactly zero at every feasible point would otherwise
/// re-enter the next subproblem as a spurious near-zero constraint row.
fn tidy(p: Polynomial) -> Polynomial {
    let tol = 1e-9 * (1.0 + p.max_abs_coeff());
    p.clean(tol)
}

#[derive(Debug, Clone)]
pub struct AlternateConfig {
    pub max_outer: usize,
    /// Relative cost-plateau threshold `|Δcost| / (1 + |cost|)`.
    pub cost_threshold: f64,
    pub solver: SolveOptions,
    /// When set, a certificate checkpoint is written after every half-step as
    /// `iter<k>_step<1|2>.cert`.
    pub checkpoint_dir: Option<PathBuf>,
    /// Problem-file hash recorded into checkpoints.
    pub problem_hash: String,
    pub verbose: bool,
}

impl Default for AlternateConfig {
    fn default() -> Self {
        AlternateConfig {
            max_outer: 30,
            cost_threshold: 1e-3,
            // Subproblems at the alternation's fixed points are degenerate
            // (optimal faces without strict complementarity), where a dense
            // double-precision engine reliably certifies gaps near 1e-5 while
            // feasibility stays at 1e-7. Compatible iterations sit at the
            // slack floor (-1), so slack accounting is unaffected.
            solver: SolveOptions { tol_gap: 1e-5, ..SolveOptions::default() },
            checkpoint_dir: None,
            problem_hash: String::new(),
            verbose: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub k: usize,
    /// Step-1 objective value (`c₁ + c₂`).
    pub cost: f64,
    /// Step-2 slacks, one per CBF.
    pub eps: Vec<f64>,
    pub step1_iters: usize,
    pub step2_iters: usize,
    pub step1_time: Duration,
    pub step2_time: Duration,
    pub step1_stats: SdpStats,
    pub step2_stats: SdpStats,
    pub snapshot: CertificateSet,
}

#[derive(Debug, Error)]
pub enum AlternateError {
    #[error("step 1 is infeasible for the initial controller; dominant constraints: {diagnosis}. Consider raising the multiplier degrees or providing a different initial controller.")]
    InitInfeasible { diagnosis: String },
    #[error("{step} failed with status {status:?} at iteration {k}: {detail}")]
    SolverFailure {
        step: &'static str,
        status: SolveStatus,
        k: usize,
        detail: String,
        history: Vec<IterationRecord>,
        best: Option<Box<CertificateSet>>,
    },
    #[error("no iteration produced step-2 slacks below {EPS_TOL:e}")]
    NoCompatibleSnapshot { history: Vec<IterationRecord> },
    #[error(transparent)]
    Certs(#[from] CertsError),
    #[error("checkpoint io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coefficient boxes and slack floors are solver scaffolding, not
/// certificate content.
fn is_scaffolding(name: &str) -> bool {
    name.contains("-box-") || name.starts_with("eps-floor")
}

pub struct Step1Result {
    pub v: Polynomial,
    pub b: Vec<Polynomial>,
    pub s2: Polynomial,
    pub s3: Vec<Polynomial>,
    pub s4: Vec<Polynomial>,
    pub witnesses: Vec<SosWitness>,
    pub cost: f64,
    pub inner_iters: usize,
    pub stats: SdpStats,
    pub status: SolveStatus,
    pub diagnosis: String,
}

/// Solve step 1 (certificates) for a fixed controller triple.
pub fn step1(
    spec: &ProblemSpec,
    ctrl: &ControllerTriple,
    opts: &SolveOptions,
) -> Result<Step1Result, CertsError> {
    let sp = build_step1_program(spec, ctrl)?;
    let sdp_prob = sp.prog.compile()?;
    let sol = sdp::solve(&sdp_prob, opts);
    let vars = sp.prog.recover_vars(&sol);
    let diagnosis = match (&sol.status, &sol.farkas) {
        (SolveStatus::Infeasible, Some(ray)) => infeasibility_diagnosis(&sdp_prob.eq_labels, ray),
        _ => String::new(),
    };
    Ok(Step1Result {
        v: tidy(sp.v.substitute(&vars)),
        b: sp.b.iter().map(|b| tidy(b.substitute(&vars))).collect(),
        s2: tidy(sp.s2.substitute(&vars)),
        s3: sp.s3.iter().map(|s| tidy(s.substitute(&vars))).collect(),
        s4: sp.s4.iter().map(|s| tidy(s.substitute(&vars))).collect(),
        witnesses: extract_witnesses(&sp.prog, &vars)
            .into_iter()
            .filter(|w| !is_scaffolding(&w.name))
            .collect(),
        cost: sol.objective,
        inner_iters: sol.iterations,
        stats: sdp_prob.stats,
        status: sol.status,
        diagnosis,
    })
}

pub struct Step2Result {
    pub ctrl: ControllerTriple,
    /// Interior margin applied to the CLF constraint (zero for the exact
    /// published subproblem).
    pub clf_margin: f64,
    pub s2: Polynomial,
    pub s3: Vec<Polynomial>,
    pub eps: Vec<f64>,
    pub witnesses: Vec<SosWitness>,
    pub inner_iters: usize,
    pub stats: SdpStats,
    pub status: SolveStatus,
    pub diagnosis: String,
}

/// Solve step 2 (controller recovery) for fixed `V` and `Bᵢ`.
///
/// When the exact subproblem defeats the interior-point engine (the fixed
/// `V` can leave the feasible set without an interior), the solve is retried
/// with a tiny interior margin on the CLF constraint.
pub fn step2(
    spec: &ProblemSpec,
    v_fixed: &Polynomial,
    b_fixed: &[Polynomial],
    opts: &SolveOptions,
) -> Result<Step2Result, CertsError> {
    let mut last = step2_with_margin(spec, v_fixed, b_fixed, opts, 0.0, false)?;
    for margin in [1e-9, 3e-8] {
        if !matches!(last.status, SolveStatus::NumericalFailure | SolveStatus::MaxIters) {
            break;
        }
        last = step2_with_margin(spec, v_fixed, b_fixed, opts, margin, false)?;
        last.clf_margin = margin;
    }
    // A reported slack that is positive but within solver accuracy of zero is
    // ambiguous (the maintenance lemma guarantees the optimum is <= 0). The
    // sign is settled by certifying the zero-slack point directly as a
    // feasibility problem.
    if last.status == SolveStatus::Optimal && last.eps.iter().any(|&e| e > 0.0) {
        let margin = last.clf_margin;
        if let Ok(mut pinned) = step2_with_margin(spec, v_fixed, b_fixed, opts, margin, true) {
            if pinned.status == SolveStatus::Optimal {
                pinned.eps = vec![0.0; spec.ncbf()];
                pinned.clf_margin = margin;
                return Ok(pinned);
            }
        }
    }
    Ok(last)
}

fn step2_with_margin(
    spec: &ProblemSpec,
    v_fixed: &Polynomial,
    b_fixed: &[Polynomial],
    opts: &SolveOptions,
    clf_margin: f64,
    pin_slacks: bool,
) -> Result<Step2Result, CertsError> {
    let sp = build_step2_program(spec, v_fixed, b_fixed, clf_margin, pin_slacks)?;
    let sdp_prob = sp.prog.compile()?;
    let sol = sdp::solve(&sdp_prob, opts);
    let vars = sp.prog.recover_vars(&sol);
    let diagnosis = match (&sol.status, &sol.farkas) {
        (SolveStatus::Infeasible, Some(ray)) => infeasibility_diagnosis(&sdp_prob.eq_labels, ray),
        _ => String::new(),
    };
    Ok(Step2Result {
        clf_margin,
        ctrl: ControllerTriple {
            s1: tidy(sp.s1.substitute(&vars)),
            p: sp.p.iter().map(|p| tidy(p.substitute(&vars))).collect(),
            pm1: sp.pm1.iter().map(|p| tidy(p.substitute(&vars))).collect(),
        },
        s2: tidy(sp.s2.substitute(&vars)),
        s3: sp.s3.iter().map(|s| tidy(s.substitute(&vars))).collect(),
        eps: sp.eps.iter().map(|&e| vars[e.0 as usize]).collect(),
        witnesses: extract_witnesses(&sp.prog, &vars)
            .into_iter()
            .filter(|w| !is_scaffolding(&w.name))
            .collect(),
        inner_iters: sol.iterations,
        stats: sdp_prob.stats,
        status: sol.status,
        diagnosis,
    })
}

/// True when the cost history is non-increasing up to solver noise (1e-6).
pub fn check_monotone(history: &[IterationRecord]) -> bool {
    history
        .windows(2)
        .all(|w| w[1].cost <= w[0].cost + 1e-6)
}

fn write_checkpoint(
    cfg: &AlternateConfig,
    k: usize,
    half: u8,
    cert: &CertificateSet,
) -> Result<(), AlternateError> {
    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("iter{k}_step{half}.cert"));
        std::fs::write(path, certfile::write_certificate(cert, &cfg.problem_hash))?;
    }
    Ok(())
}

/// Run the alternating loop from an initial controller triple.
///
/// Returns the latest compatible snapshot (all step-2 slacks ≤ 1e-7) and the
/// per-iteration history. Step-1 infeasibility at the first iteration is
/// reported as [`AlternateError::InitInfeasible`] with a constraint-family
/// diagnosis from the Farkas ray.
pub fn run(
    spec: &ProblemSpec,
    init: ControllerTriple,
    cfg: &AlternateConfig,
) -> Result<(CertificateSet, Vec<IterationRecord>), AlternateError> {
    let t = spec.ncbf();
    let n = spec.nvars();
    if cfg.max_outer == 0 {
        let snapshot = CertificateSet {
            v: Polynomial::zero(n),
            b: vec![Polynomial::zero(n); t],
            s1: init.s1.clone(),
            s2: Polynomial::zero(n),
            s3: vec![Polynomial::zero(n); t],
            s4: vec![Polynomial::zero(n); t],
            p: init.p.clone(),
            pm1: init.pm1.clone(),
            eps: Vec::new(),
            witnesses: Vec::new(),
            meta: CertMeta { iteration: 0, cost: f64::INFINITY, ..Default::default() },
        };
        let record = IterationRecord {
            k: 0,
            cost: f64::INFINITY,
            eps: Vec::new(),
            step1_iters: 0,
            step2_iters: 0,
            step1_time: Duration::ZERO,
            step2_time: Duration::ZERO,
            step1_stats: SdpStats::default(),
            step2_stats: SdpStats::default(),
            snapshot: snapshot.clone(),
        };
        return Ok((snapshot, vec![record]));
    }

    let mut ctrl = init;
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut best: Option<CertificateSet> = None;

    for k in 1..=cfg.max_outer {
        let t0 = Instant::now();
        let s1out = step1(spec, &ctrl, &cfg.solver)?;
        let step1_time = t0.elapsed();
        match s1out.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible if k == 1 => {
                return Err(AlternateError::InitInfeasible { diagnosis: s1out.diagnosis });
            }
            status => {
                return Err(AlternateError::SolverFailure {
                    step: "step 1",
                    status,
                    k,
                    detail: s1out.diagnosis,
                    history,
                    best: best.map(Box::new),
                });
            }
        }
        if cfg.verbose {
            eprintln!(
                "iter {k} step 1: cost {:.6e}  inner {:2}  {:.2?}",
                s1out.cost, s1out.inner_iters, step1_time
            );
        }
        // Cost plateau: the previous iteration's snapshot is already fully
        // certified and the certificates have stopped moving, so stop before
        // re-solving a controller for an (essentially identical) pair. At the
        // plateau the step-2 feasible set tends to lose its interior, which
        // is the worst case for the interior-point engine.
        if let Some(prev) = history.last() {
            if (s1out.cost - prev.cost).abs() / (1.0 + s1out.cost.abs()) <= cfg.cost_threshold {
                if cfg.verbose {
                    eprintln!("iter {k}: cost plateau, stopping");
                }
                break;
            }
        }
        // Half-step checkpoint: new certificates with the previous controller.
        let half_cert = CertificateSet {
            v: s1out.v.clone(),
            b: s1out.b.clone(),
            s1: ctrl.s1.clone(),
            s2: s1out.s2.clone(),
            s3: s1out.s3.clone(),
            s4: s1out.s4.clone(),
            p: ctrl.p.clone(),
            pm1: ctrl.pm1.clone(),
            eps: Vec::new(),
            witnesses: s1out.witnesses.clone(),
            meta: CertMeta {
                iteration: k,
                cost: s1out.cost,
                step1_inner_iters: s1out.inner_iters,
                step2_inner_iters: 0,
            },
        };
        write_checkpoint(cfg, k, 1, &half_cert)?;

        let t1 = Instant::now();
        let s2out = step2(spec, &s1out.v, &s1out.b, &cfg.solver)?;
        let step2_time = t1.elapsed();
        if s2out.status != SolveStatus::Optimal {
            return Err(AlternateError::SolverFailure {
                step: "step 2",
                status: s2out.status,
                k,
                detail: s2out.diagnosis,
                history,
                best: best.map(Box::new),
            });
        }
        let eps_sum: f64 = s2out.eps.iter().sum();
        if cfg.verbose {
            eprintln!(
                "iter {k} step 2: eps {:?} (sum {:.3e})  inner {:2}  {:.2?}",
                s2out.eps, eps_sum, s2out.inner_iters, step2_time
            );
        }
        if s2out.eps.iter().any(|&e| e > EPS_TOL) && cfg.verbose {
            eprintln!("iter {k}: warning: step-2 slack above tolerance; continuing");
        }
        ctrl = s2out.ctrl.clone();

        // Full snapshot: step-1 certificates plus the recovered controller.
        // Witnesses for the dynamic constraints come from step 2 (they
        // certify the final V, B with the new controller); the V-SOS and
        // containment witnesses come from step 1.
        let mut witnesses: Vec<SosWitness> = s1out
            .witnesses
            .iter()
            .filter(|w| w.name == "V-sos" || w.name.starts_with("containment") || w.name.starts_with("s4"))
            .cloned()
            .collect();
        witnesses.extend(s2out.witnesses.iter().cloned());
        let snapshot = CertificateSet {
            v: s1out.v.clone(),
            b: s1out.b.clone(),
            s1: ctrl.s1.clone(),
            s2: s2out.s2.clone(),
            s3: s2out.s3.clone(),
            s4: s1out.s4.clone(),
            p: ctrl.p.clone(),
            pm1: ctrl.pm1.clone(),
            eps: s2out.eps.clone(),
            witnesses,
            meta: CertMeta {
                iteration: k,
                cost: s1out.cost,
                step1_inner_iters: s1out.inner_iters,
                step2_inner_iters: s2out.inner_iters,
            },
        };
        write_checkpoint(cfg, k, 2, &snapshot)?;
        if s2out.eps.iter().all(|&e| e <= EPS_TOL) {
            best = Some(snapshot.clone());
        }

        history.push(IterationRecord {
            k,
            cost: s1out.cost,
            eps: s2out.eps.clone(),
            step1_iters: s1out.inner_iters,
            step2_iters: s2out.inner_iters,
            step1_time,
            step2_time,
            step1_stats: s1out.stats,
            step2_stats: s2out.stats,
            snapshot,
        });
    }

    match best {
        Some(cert) => Ok((cert, history)),
        None => Err(AlternateError::NoCompatibleSnapshot { history }),
    }
}
