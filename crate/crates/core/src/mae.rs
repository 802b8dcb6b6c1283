//! The Monge-Ampere iteration: solve det(D^2 u) = f, u = g on the boundary,
//! by repeated Poisson solves.
//!
//! Each step replaces the Laplacian target with a cubic blend of the current
//! iterate's Laplacian and its determinant defect,
//!
//!   w = cbrt( (Delta u_k)^3 + a (f - det D^2 u_k) ),
//!
//! then solves Delta u_{k+1} = w with the original boundary data. At a fixed
//! point the defect f - det D^2 u vanishes. The plain scheme takes the new
//! iterate as is; the averaged variant halves the step by averaging the new
//! coefficient vector with the previous one, which damps the oscillations the
//! plain scheme shows for rough data. The Poisson factorization is built once
//! and reused for every step, so each iteration costs one pair of triangular
//! solves plus the pointwise update.
//!
//! All pointwise work (defect, convexity statistics, the next right-hand
//! side) happens at the interior collocation points of the assembled system.

use std::sync::Arc;

use nalgebra::{Matrix3, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bench::TestCase;
use crate::collocation::{assemble, FactorizedPoisson, SolveConfig, SolveReport};
use crate::bform::Spline;
use crate::realcbrt;
use crate::smoothness::SplineSpace;
use crate::util;
use crate::{Error, Result};

/// How the first iterate's Laplacian target is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitMode {
    /// Delta u_0 = cbrt(27 f). The 27 here is fixed; it is not the step
    /// parameter `a`.
    Cbrt,
    /// Delta u_0 = p everywhere.
    Constant(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Plain update u_{k+1} = Poisson(w).
    Alg1,
    /// Averaged update u_{k+1} = (Poisson(w) + u_k) / 2.
    Alg2,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.write_str(match self {
            Algorithm::Alg1 => "alg1",
            Algorithm::Alg2 => "alg2",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// Defect dropped below 1e-12 (1 + ||f||_inf).
    Converged,
    /// Defect rose; the previous iterate is returned.
    DefectIncrease,
    MaxIters,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.write_str(match self {
            StopReason::Converged => "converged",
            StopReason::DefectIncrease => "defect-increase",
            StopReason::MaxIters => "max-iters",
        })
    }
}

type Field = Arc<dyn Fn(&Point3<f64>) -> f64 + Send + Sync>;

/// Problem description plus iteration knobs.
#[derive(Clone)]
pub struct MaeProblem {
    pub space: Arc<SplineSpace>,
    /// Right-hand side of det(D^2 u) = f.
    pub f: Field,
    /// Dirichlet boundary values.
    pub g: Field,
    /// Step parameter in the cubic update. Must be positive; values above 27
    /// are accepted with a warning since they can break the monotone descent.
    pub a: f64,
    /// Collocation degree (must exceed the spline degree).
    pub dprime: u32,
    pub max_iters: usize,
    pub init: InitMode,
    pub cfg: SolveConfig,
    /// Grid resolution for error norms and the contraction diagnostic.
    pub grid_n: usize,
    /// Scale constant in the contraction-ratio diagnostic.
    pub big_a: f64,
}

impl MaeProblem {
    pub fn new(space: Arc<SplineSpace>, f: Field, g: Field) -> MaeProblem {
        let dprime = space.degree() + 1;
        MaeProblem {
            space,
            f,
            g,
            a: 27.0,
            dprime,
            max_iters: 100,
            init: InitMode::Cbrt,
            cfg: SolveConfig::default(),
            grid_n: 51,
            big_a: 1.0,
        }
    }

    /// Problem with f and boundary data taken from a catalog case.
    pub fn from_case(space: Arc<SplineSpace>, case: &TestCase) -> MaeProblem {
        MaeProblem::new(space, case.f.clone(), case.u.clone())
    }
}

/// Everything recorded about one iterate.
#[derive(Clone, Debug, Serialize)]
pub struct IterRecord {
    pub iter: usize,
    /// max |f - det D^2 u_k| over the interior collocation points.
    pub defect_inf: f64,
    pub value_inf: f64,
    pub laplacian_inf: f64,
    /// min over points of the running average of f - det D^2 u_j for
    /// j = 0..=k. For the cbrt initial rule these averages stay
    /// nonnegative: the update telescopes to
    /// (Delta u_{k+1})^3 = 27 f + 27 sum_j (f - det D^2 u_j), and the
    /// arithmetic-geometric mean bound keeps det below (Delta/3)^3.
    pub running_avg_min: f64,
    pub min_trace: f64,
    pub min_det: f64,
    pub min_eig: f64,
    /// Fraction of interior points where the Hessian is positive
    /// semidefinite up to roundoff.
    pub frac_psd: f64,
    pub normal_residual_rel: f64,
    pub feasibility_inf: f64,
    /// Filled when an exact solution is supplied.
    pub l2: Option<f64>,
    pub h1: Option<f64>,
    pub linf: Option<f64>,
    pub rho_hat: Option<f64>,
}

pub struct MaeRun {
    pub final_spline: Spline,
    pub history: Vec<IterRecord>,
    pub stop_reason: StopReason,
    /// Index of the returned iterate (0 is the initial guess).
    pub iters: usize,
    pub warnings: Vec<String>,
}

/// The cubic Laplacian update: cbrt(lap^3 + a (f - det)).
pub fn mae_rhs(lap: f64, det: f64, f: f64, a: f64) -> f64 {
    realcbrt(lap * lap * lap + a * (f - det))
}

/// Solves the Poisson init problem on an existing factorization.
pub fn initial_guess(fact: &FactorizedPoisson, init: InitMode) -> Result<(Spline, SolveReport)> {
    let sys = fact.system();
    let rhs: Vec<f64> = match init {
        InitMode::Cbrt => sys.fvec.iter().map(|&f| realcbrt(27.0 * f)).collect(),
        InitMode::Constant(p) => vec![p; sys.fvec.len()],
    };
    let (c, rep) = fact.solve_values(&rhs, &sys.gvec)?;
    Ok((Spline::from_coeffs(sys.space().clone(), c)?, rep))
}

pub fn run_alg1(problem: &MaeProblem, exact: Option<&TestCase>) -> Result<MaeRun> {
    run(problem, Algorithm::Alg1, exact)
}

pub fn run_alg2(problem: &MaeProblem, exact: Option<&TestCase>) -> Result<MaeRun> {
    run(problem, Algorithm::Alg2, exact)
}

#[derive(Clone, Default)]
struct PtStat {
    lap: f64,
    det: f64,
    value: f64,
    eig_min: f64,
    eig_max: f64,
}

/// Runs the iteration with either update rule.
pub fn run(problem: &MaeProblem, algorithm: Algorithm, exact: Option<&TestCase>) -> Result<MaeRun> {
    if !(problem.a > 0.0) {
        return Err(Error::Config(format!(
            "step parameter a must be positive, got {}",
            problem.a
        )));
    }
    let mut warnings = Vec::new();
    if problem.a > 27.0 {
        warnings.push(format!(
            "a = {} exceeds 27; the update can lose its monotone descent",
            problem.a
        ));
    }
    for w in problem.space.warnings() {
        warnings.push(w.clone());
    }

    let f = problem.f.clone();
    let g = problem.g.clone();
    let sys = assemble(&problem.space, problem.dprime, f.as_ref(), g.as_ref())?;
    let fvec = sys.fvec.clone();
    let gvec = sys.gvec.clone();
    let fact = FactorizedPoisson::new(sys, problem.cfg)?;
    if fact.conditioning_warning {
        warnings.push("normal equations needed ridge regularization; treat results as minimum-norm".into());
    }

    let f_inf = fvec.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * (1.0 + f_inf);
    let npts = fvec.len();

    let (mut cur, mut rep) = initial_guess(&fact, problem.init)?;
    let mut sum_defect = vec![0.0f64; npts];
    let mut history: Vec<IterRecord> = Vec::new();
    let mut prev: Option<(Spline, f64)> = None;

    let mut k = 0usize;
    loop {
        let interior = &fact.system().interior;
        let stats: Vec<PtStat> = {
            let cur = &cur;
            util::par_map(npts, move |i| {
                let p = &interior[i];
                let b = cur.derivs_at(p.tet as usize, &p.bary);
                let (emin, _emid, emax) = sym_eigs3(&b.hessian);
                PtStat {
                    lap: b.laplacian(),
                    det: b.det_hessian(),
                    value: b.value,
                    eig_min: emin,
                    eig_max: emax,
                }
            })
        };
        let mut defect_inf = 0.0f64;
        let mut value_inf = 0.0f64;
        let mut lap_inf = 0.0f64;
        let mut min_trace = f64::INFINITY;
        let mut min_det = f64::INFINITY;
        let mut min_eig = f64::INFINITY;
        let mut n_psd = 0usize;
        let mut running_avg_min = f64::INFINITY;
        for (i, s) in stats.iter().enumerate() {
            defect_inf = defect_inf.max((fvec[i] - s.det).abs());
            value_inf = value_inf.max(s.value.abs());
            lap_inf = lap_inf.max(s.lap.abs());
            min_trace = min_trace.min(s.lap);
            min_det = min_det.min(s.det);
            min_eig = min_eig.min(s.eig_min);
            if s.eig_min >= -1e-10 * (1.0 + s.eig_max.abs()) {
                n_psd += 1;
            }
            sum_defect[i] += fvec[i] - s.det;
            running_avg_min = running_avg_min.min(sum_defect[i] / (k + 1) as f64);
        }

        let (l2, h1, linf, rho_hat) = match exact {
            Some(tc) => {
                let e = crate::bench::error_norms(&cur, tc, problem.grid_n);
                let rho = rho_diagnostic(&cur, tc, problem.a, problem.big_a, problem.grid_n);
                (Some(e.l2), Some(e.h1), Some(e.linf), Some(rho))
            }
            None => (None, None, None, None),
        };
        history.push(IterRecord {
            iter: k,
            defect_inf,
            value_inf,
            laplacian_inf: lap_inf,
            running_avg_min,
            min_trace,
            min_det,
            min_eig,
            frac_psd: n_psd as f64 / npts.max(1) as f64,
            normal_residual_rel: rep.normal_residual_rel,
            feasibility_inf: rep.feasibility_inf,
            l2,
            h1,
            linf,
            rho_hat,
        });

        if defect_inf <= tol {
            return Ok(MaeRun {
                final_spline: cur,
                history,
                stop_reason: StopReason::Converged,
                iters: k,
                warnings,
            });
        }
        if let Some((prev_spline, prev_defect)) = &prev {
            if defect_inf > *prev_defect {
                return Ok(MaeRun {
                    final_spline: prev_spline.clone(),
                    history,
                    stop_reason: StopReason::DefectIncrease,
                    iters: k - 1,
                    warnings,
                });
            }
        }
        if k == problem.max_iters {
            return Ok(MaeRun {
                final_spline: cur,
                history,
                stop_reason: StopReason::MaxIters,
                iters: k,
                warnings,
            });
        }

        let w: Vec<f64> = (0..npts)
            .map(|i| mae_rhs(stats[i].lap, stats[i].det, fvec[i], problem.a))
            .collect();
        let (c_next, nrep) = fact.solve_values(&w, &gvec)?;
        let mut next = Spline::from_coeffs(problem.space.clone(), c_next)?;
        if algorithm == Algorithm::Alg2 {
            let old = cur.coeffs();
            for (cn, co) in next.coeffs_mut().iter_mut().zip(old) {
                *cn = 0.5 * (*cn + *co);
            }
        }
        prev = Some((cur, defect_inf));
        cur = next;
        rep = nrep;
        k += 1;
    }
}

/// Convexity statistics of a spline at seeded random points of its mesh.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConvexityReport {
    pub samples: usize,
    pub min_eig: f64,
    pub min_trace: f64,
    pub min_det: f64,
    pub frac_psd: f64,
}

/// Samples the Hessian at `samples` deterministic random points inside the
/// mesh and reports eigenvalue/trace/determinant minima.
pub fn convexity_report(u: &Spline, samples: usize) -> ConvexityReport {
    convexity_report_seeded(u, samples, 0xc04e_f17)
}

/// Same report with a caller-chosen sampling seed.
pub fn convexity_report_seeded(u: &Spline, samples: usize, seed: u64) -> ConvexityReport {
    let mesh = u.space().mesh();
    let (lo, hi) = mesh.bbox();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(samples);
    let mut guard = 0usize;
    while pts.len() < samples && guard < samples.saturating_mul(1000).max(1000) {
        guard += 1;
        let p = Point3::new(
            rng.random_range(lo.x..=hi.x),
            rng.random_range(lo.y..=hi.y),
            rng.random_range(lo.z..=hi.z),
        );
        if let Some((t, b)) = mesh.locate(&p) {
            pts.push((t, b));
        }
    }
    let stats: Vec<(f64, f64, f64, bool)> = util::par_map(pts.len(), |i| {
        let (t, b) = pts[i];
        let d = u.derivs_at(t, &b);
        let (emin, _, emax) = sym_eigs3(&d.hessian);
        let psd = emin >= -1e-10 * (1.0 + emax.abs());
        (emin, d.laplacian(), d.det_hessian(), psd)
    });
    let mut rep = ConvexityReport {
        samples: stats.len(),
        min_eig: f64::INFINITY,
        min_trace: f64::INFINITY,
        min_det: f64::INFINITY,
        frac_psd: 0.0,
    };
    let mut n_psd = 0usize;
    for (emin, tr, det, psd) in &stats {
        rep.min_eig = rep.min_eig.min(*emin);
        rep.min_trace = rep.min_trace.min(*tr);
        rep.min_det = rep.min_det.min(*det);
        if *psd {
            n_psd += 1;
        }
    }
    rep.frac_psd = n_psd as f64 / stats.len().max(1) as f64;
    rep
}

/// Eigenvalues of a symmetric 3x3 matrix, returned ascending, by the
/// trigonometric closed form.
pub(crate) fn sym_eigs3(m: &Matrix3<f64>) -> (f64, f64, f64) {
    let p1 = m[(0, 1)] * m[(0, 1)] + m[(0, 2)] * m[(0, 2)] + m[(1, 2)] * m[(1, 2)];
    if p1 == 0.0 {
        let mut d = [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
        d.sort_by(f64::total_cmp);
        return (d[0], d[1], d[2]);
    }
    let q = (m[(0, 0)] + m[(1, 1)] + m[(2, 2)]) / 3.0;
    let p2 = (m[(0, 0)] - q).powi(2) + (m[(1, 1)] - q).powi(2) + (m[(2, 2)] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b = (m - Matrix3::identity() * q) / p;
    let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
    (lo, 3.0 * q - hi - lo, hi)
}

/// Estimated contraction ratio of the iteration at u against the exact
/// solution, maximized over the evaluation grid. Values below 1 indicate the
/// local contraction regime. `big_a` scales the second-order term.
pub fn rho_diagnostic(u: &Spline, exact: &TestCase, a: f64, big_a: f64, grid_n: usize) -> f64 {
    let mesh = u.space().mesh();
    let (lo, hi) = mesh.bbox();
    let len = hi - lo;
    let n = grid_n.max(1);
    let step = 1.0 / (n as f64 + 1.0);
    let vals: Vec<(f64, f64)> = util::par_map(n * n * n, |idx| {
        let i = idx / (n * n);
        let j = (idx / n) % n;
        let kk = idx % n;
        let p = Point3::new(
            lo.x + (i as f64 + 1.0) * step * len.x,
            lo.y + (j as f64 + 1.0) * step * len.y,
            lo.z + (kk as f64 + 1.0) * step * len.z,
        );
        let Some((t, b)) = mesh.locate(&p) else {
            return (0.0, 0.0);
        };
        let d = u.derivs_at(t, &b);
        let h_star = (exact.hess)(&p);
        let lap_k = d.laplacian();
        let lap_s = h_star.trace();
        let f_p = (exact.f)(&p);
        let w_k = mae_rhs(lap_k, d.det_hessian(), f_p, a);
        let w_s = mae_rhs(lap_s, h_star.determinant(), f_p, a);
        let denom = w_k * w_k + w_k * w_s + w_s * w_s;
        if denom.abs() == 0.0 {
            return (f64::INFINITY, f64::INFINITY);
        }
        let num = lap_k * lap_k + lap_k * lap_s + lap_s * lap_s;
        let first = (num / denom).abs();
        let mut second = 0.0f64;
        for t_blend in [0.0, 0.5, 1.0] {
            let m = d.hessian * (1.0 - t_blend) + h_star * t_blend;
            let rowsum = (0..3)
                .map(|r| (0..3).map(|c| m[(r, c)].abs()).sum::<f64>())
                .fold(0.0f64, f64::max);
            second = second.max(rowsum / denom.abs());
        }
        (first, second)
    });
    let mut first = 0.0f64;
    let mut second = 0.0f64;
    for (a1, a2) in &vals {
        first = first.max(*a1);
        second = second.max(*a2);
    }
    first + (81.0 / big_a) * second * second
}
