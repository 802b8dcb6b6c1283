//! Test-function catalog, error norms against exact solutions, convergence
//! rates, and parameter studies over the nonlinear solver.
//!
//! Every catalog entry carries closed-form handles for u, its gradient, its
//! Hessian, and the right-hand side f = det(D^2 u). The f handles for the
//! non-tabulated cases were derived by hand, so `certify_case` checks
//! det(D^2 u) = f at random points; the test suite runs it for every entry
//! before the catalog is trusted for benchmarks.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bform::Spline;
use crate::collocation::SolveConfig;
use crate::mae::{self, Algorithm, InitMode, IterRecord, MaeProblem};
use crate::mesh::DomainSpec;
use crate::smoothness::SplineSpace;
use crate::util;
use crate::{Error, Result};

pub type Field = Arc<dyn Fn(&Point3<f64>) -> f64 + Send + Sync>;
pub type GradField = Arc<dyn Fn(&Point3<f64>) -> Vector3<f64> + Send + Sync>;
pub type HessField = Arc<dyn Fn(&Point3<f64>) -> Matrix3<f64> + Send + Sync>;

/// An exact solution of det(D^2 u) = f with all the handles a benchmark
/// needs. Boundary data is `u` restricted to the boundary.
#[derive(Clone)]
pub struct TestCase {
    pub name: &'static str,
    pub aliases: &'static [&'static str],
    pub u: Field,
    pub grad: GradField,
    pub hess: HessField,
    /// det(D^2 u) in closed form.
    pub f: Field,
    pub note: &'static str,
    /// Point where u loses smoothness or f blows up, if any.
    pub singular_at: Option<Point3<f64>>,
}

fn q(p: &Point3<f64>) -> f64 {
    p.coords.norm_squared()
}

/// u = (a x^2 + b y^2 + c z^2) / 2: diagonal Hessian, constant f = abc.
fn quad_case(
    name: &'static str,
    aliases: &'static [&'static str],
    diag: [f64; 3],
    note: &'static str,
) -> TestCase {
    let [a, b, c] = diag;
    TestCase {
        name,
        aliases,
        u: Arc::new(move |p| 0.5 * (a * p.x * p.x + b * p.y * p.y + c * p.z * p.z)),
        grad: Arc::new(move |p| Vector3::new(a * p.x, b * p.y, c * p.z)),
        hess: Arc::new(move |_| Matrix3::from_diagonal(&Vector3::new(a, b, c))),
        f: Arc::new(move |_| a * b * c),
        note,
        singular_at: None,
    }
}

/// u = exp(q / c): D^2 u = e^{q/c} ((2/c) I + (4/c^2) x x^T), and with
/// det(a I + b x x^T) = a^2 (a + b q) this gives
/// f = (8/c^3) (1 + 2 q / c) e^{3 q / c}.
fn exp_case(
    name: &'static str,
    aliases: &'static [&'static str],
    c: f64,
    note: &'static str,
) -> TestCase {
    TestCase {
        name,
        aliases,
        u: Arc::new(move |p| (q(p) / c).exp()),
        grad: Arc::new(move |p| p.coords * (2.0 / c) * (q(p) / c).exp()),
        hess: Arc::new(move |p| {
            let e = (q(p) / c).exp();
            let x = p.coords;
            (Matrix3::identity() * (2.0 / c) + x * x.transpose() * (4.0 / (c * c))) * e
        }),
        f: Arc::new(move |p| {
            let qq = q(p);
            (8.0 / (c * c * c)) * (1.0 + 2.0 * qq / c) * (3.0 * qq / c).exp()
        }),
        note,
        singular_at: None,
    }
}

/// u = -sqrt(s - q): D^2 u = (s-q)^{-1/2} I + (s-q)^{-3/2} x x^T, so
/// f = s (s - q)^{-5/2}. Only defined where q < s.
fn sqrt_case(
    name: &'static str,
    aliases: &'static [&'static str],
    s: f64,
    note: &'static str,
    singular_at: Option<Point3<f64>>,
) -> TestCase {
    TestCase {
        name,
        aliases,
        u: Arc::new(move |p| -(s - q(p)).sqrt()),
        grad: Arc::new(move |p| p.coords / (s - q(p)).sqrt()),
        hess: Arc::new(move |p| {
            let d = s - q(p);
            let x = p.coords;
            Matrix3::identity() / d.sqrt() + x * x.transpose() / (d * d.sqrt())
        }),
        f: Arc::new(move |p| s * (s - q(p)).powf(-2.5)),
        note,
        singular_at,
    }
}

/// The nine benchmark solutions. Names u3ds1..u3ds9; the short aliases group
/// them into smooth (s1-s4) and non-smooth (ns1, ns2) families.
pub fn catalog() -> Vec<TestCase> {
    let sqrt3 = 3.0f64.sqrt();
    vec![
        quad_case(
            "u3ds1",
            &["s1"],
            [1.0, 5.0, 15.0],
            "anisotropic quadratic, f = 75",
        ),
        quad_case(
            "u3ds2",
            &[],
            [1.0, 10.0, 100.0],
            "strongly anisotropic quadratic, f = 1000",
        ),
        exp_case("u3ds3", &["s2"], 2.0, "radial exponential exp(q/2)"),
        exp_case("u3ds4", &[], 3.0, "radial exponential exp(q/3)"),
        sqrt_case(
            "u3ds5",
            &["s3"],
            6.0,
            "-sqrt(6-q), smooth on the unit cube",
            None,
        ),
        sqrt_case(
            "u3ds6",
            &["ns1"],
            3.0,
            "-sqrt(3-q); gradient and f blow up at the corner (1,1,1)",
            Some(Point3::new(1.0, 1.0, 1.0)),
        ),
        TestCase {
            name: "u3ds7",
            aliases: &[],
            u: Arc::new(move |p| -(1.0 - q(p)) / (2.0 * sqrt3)),
            grad: Arc::new(move |p| p.coords / sqrt3),
            hess: Arc::new(move |_| Matrix3::identity() / sqrt3),
            f: Arc::new(move |_| 1.0 / (3.0 * sqrt3)),
            note: "paraboloid vanishing on the unit sphere; meant for ball-like meshes",
            singular_at: None,
        },
        TestCase {
            name: "u3ds8",
            aliases: &["s4"],
            u: Arc::new(|p| 0.5 * q(p) - p.x.sin() - p.y.sin() - p.z.sin()),
            grad: Arc::new(|p| {
                Vector3::new(p.x - p.x.cos(), p.y - p.y.cos(), p.z - p.z.cos())
            }),
            hess: Arc::new(|p| {
                Matrix3::from_diagonal(&Vector3::new(
                    1.0 + p.x.sin(),
                    1.0 + p.y.sin(),
                    1.0 + p.z.sin(),
                ))
            }),
            f: Arc::new(|p| (1.0 + p.x.sin()) * (1.0 + p.y.sin()) * (1.0 + p.z.sin())),
            note: "separable: f = (1+sin x)(1+sin y)(1+sin z)",
            singular_at: None,
        },
        TestCase {
            name: "u3ds9",
            aliases: &["ns2"],
            u: Arc::new(|p| q(p).powf(0.75) / 3.0),
            grad: Arc::new(|p| p.coords / (2.0 * q(p).powf(0.25))),
            hess: Arc::new(|p| {
                let qq = q(p);
                let x = p.coords;
                Matrix3::identity() * (0.5 * qq.powf(-0.25))
                    - x * x.transpose() * (0.25 * qq.powf(-1.25))
            }),
            f: Arc::new(|p| q(p).powf(-0.75) / 16.0),
            note: "q^{3/4}/3; Hessian and f blow up at the origin",
            singular_at: Some(Point3::origin()),
        },
    ]
}

/// Looks a case up by name or alias, case-insensitively.
pub fn find_case(name: &str) -> Option<TestCase> {
    catalog().into_iter().find(|tc| {
        tc.name.eq_ignore_ascii_case(name)
            || tc.aliases.iter().any(|a| a.eq_ignore_ascii_case(name))
    })
}

/// Largest relative gap between det(D^2 u) and the stored f over `n` seeded
/// random points of the open unit cube.
pub fn certify_case(tc: &TestCase, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let p = Point3::new(
            rng.random_range(1e-3..1.0),
            rng.random_range(1e-3..1.0),
            rng.random_range(1e-3..1.0),
        );
        let det = (tc.hess)(&p).determinant();
        let f = (tc.f)(&p);
        worst = worst.max((det - f).abs() / f.abs().max(1e-300));
    }
    worst
}

/// Discrete error norms of a spline against an exact solution.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ErrorReport {
    /// sqrt(sum e^2 / NI)
    pub l2: f64,
    /// sqrt(sum (e^2 + |grad e|^2) / NI)
    pub h1: f64,
    pub linf: f64,
    /// Requested lattice resolution per axis.
    pub grid: usize,
    /// Lattice points that landed inside the mesh (NI above).
    pub points_inside: usize,
    /// Seconds spent evaluating.
    pub runtime: f64,
}

#[derive(Clone, Default)]
struct NormAcc {
    inside: u32,
    e2: f64,
    h2: f64,
    inf: f64,
}

/// Evaluates u - s and its gradient on the n^3 lattice strictly inside the
/// mesh bounding box and applies the three norm formulas.
///
/// The lattice is open: points sit at lo + (i+1) len/(n+1), never on the
/// bounding box itself, so exact solutions whose gradient blows up on the
/// boundary still get finite norms. A point counts iff point location
/// succeeds, which also handles non-convex domains.
pub fn error_norms(s: &Spline, tc: &TestCase, n: usize) -> ErrorReport {
    assert!(n >= 2, "error-norm grid needs n >= 2");
    let t0 = Instant::now();
    let mesh = s.space().mesh();
    let (lo, hi) = mesh.bbox();
    let len = hi - lo;
    let step = 1.0 / (n as f64 + 1.0);
    let acc: Vec<NormAcc> = util::par_map(n * n * n, |idx| {
        let i = idx / (n * n);
        let j = (idx / n) % n;
        let k = idx % n;
        let p = Point3::new(
            lo.x + (i as f64 + 1.0) * step * len.x,
            lo.y + (j as f64 + 1.0) * step * len.y,
            lo.z + (k as f64 + 1.0) * step * len.z,
        );
        match s.eval_with_derivatives(&p) {
            None => NormAcc::default(),
            Some(d) => {
                let e = (tc.u)(&p) - d.value;
                let ge = (tc.grad)(&p) - d.gradient;
                NormAcc {
                    inside: 1,
                    e2: e * e,
                    h2: e * e + ge.norm_squared(),
                    inf: e.abs(),
                }
            }
        }
    });
    let mut inside = 0u64;
    let mut e2 = 0.0f64;
    let mut h2 = 0.0f64;
    let mut inf = 0.0f64;
    for a in &acc {
        inside += a.inside as u64;
        e2 += a.e2;
        h2 += a.h2;
        inf = inf.max(a.inf);
    }
    let ni = inside.max(1) as f64;
    ErrorReport {
        l2: (e2 / ni).sqrt(),
        h1: (h2 / ni).sqrt(),
        linf: inf,
        grid: n,
        points_inside: inside as usize,
        runtime: t0.elapsed().as_secs_f64(),
    }
}

/// Refinement rates log2(e_i / e_{i+1}) for one error sequence.
pub fn rate_table(errors: &[f64]) -> Vec<f64> {
    assert!(errors.len() >= 2, "rate table needs at least two levels");
    errors
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudyKind {
    /// Step parameter sweep at fixed everything else.
    ASweep,
    /// Constant-initialization sweep over p, both update rules per p.
    InitSweep,
    /// Plain vs averaged update at one configuration.
    AlgCompare,
    /// Mesh refinement h, h/2, ... with rates.
    Refine,
}

impl std::fmt::Display for StudyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StudyKind::ASweep => "a-sweep",
            StudyKind::InitSweep => "init-sweep",
            StudyKind::AlgCompare => "alg-compare",
            StudyKind::Refine => "refine",
        })
    }
}

/// One batch of nonlinear solves; defaults follow the single-solve defaults.
#[derive(Clone)]
pub struct StudySpec {
    pub kind: StudyKind,
    pub case: String,
    pub domain: DomainSpec,
    pub degree: u32,
    pub smoothness: u32,
    /// Collocation degree; None means degree + 1.
    pub dprime: Option<u32>,
    pub a: f64,
    pub algorithm: Algorithm,
    pub init: InitMode,
    pub max_iters: usize,
    pub cfg: SolveConfig,
    pub grid_n: usize,
    /// Refinement levels for the refine study.
    pub levels: usize,
    pub a_values: Vec<f64>,
    pub p_values: Vec<f64>,
}

impl StudySpec {
    pub fn new(kind: StudyKind, case: &str, domain: DomainSpec) -> StudySpec {
        StudySpec {
            kind,
            case: case.to_string(),
            domain,
            degree: 5,
            smoothness: 1,
            dprime: None,
            a: 27.0,
            algorithm: Algorithm::Alg2,
            init: InitMode::Cbrt,
            max_iters: 100,
            cfg: SolveConfig::default(),
            grid_n: 51,
            levels: 3,
            a_values: vec![6.0, 9.0, 27.0],
            p_values: vec![12.6, 15.1, 16.4, 17.1, 17.7, 26.0, 26.5, 27.0, 27.5],
        }
    }
}

/// One configuration's outcome. Failures keep the row with `error` set so a
/// batch never dies half way.
#[derive(Clone, Debug, Serialize)]
pub struct StudyRow {
    pub case: String,
    pub domain: String,
    pub h: f64,
    pub degree: u32,
    pub smoothness: u32,
    pub dprime: u32,
    pub a: f64,
    pub algorithm: String,
    pub init: String,
    pub iters: Option<usize>,
    pub l2: Option<f64>,
    pub h1: Option<f64>,
    pub linf: Option<f64>,
    pub rate_l2: Option<f64>,
    pub rate_h1: Option<f64>,
    pub runtime_s: f64,
    pub stop_reason: String,
    pub error: Option<String>,
    pub history: Vec<IterRecord>,
}

/// Label used for the init column: "cbrt" or "p=<value>".
pub fn init_label(init: InitMode) -> String {
    match init {
        InitMode::Cbrt => "cbrt".into(),
        InitMode::Constant(p) => format!("p={p}"),
    }
}

fn domain_h(domain: &DomainSpec) -> Option<f64> {
    match domain {
        DomainSpec::Box { h, .. } | DomainSpec::Letter { h, .. } => Some(*h),
        DomainSpec::File { .. } => None,
    }
}

fn domain_with_h(domain: &DomainSpec, h: f64) -> Option<DomainSpec> {
    match domain {
        DomainSpec::Box { lo, hi, .. } => Some(DomainSpec::Box { lo: *lo, hi: *hi, h }),
        DomainSpec::Letter { kind, .. } => Some(DomainSpec::Letter { kind: *kind, h }),
        DomainSpec::File { .. } => None,
    }
}

fn run_one(
    spec: &StudySpec,
    tc: &TestCase,
    domain: &DomainSpec,
    a: f64,
    algorithm: Algorithm,
    init: InitMode,
) -> StudyRow {
    let t0 = Instant::now();
    let dprime = spec.dprime.unwrap_or(spec.degree + 1);
    let mut row = StudyRow {
        case: tc.name.to_string(),
        domain: domain.label(),
        h: domain_h(domain).unwrap_or(f64::NAN),
        degree: spec.degree,
        smoothness: spec.smoothness,
        dprime,
        a,
        algorithm: algorithm.to_string(),
        init: init_label(init),
        iters: None,
        l2: None,
        h1: None,
        linf: None,
        rate_l2: None,
        rate_h1: None,
        runtime_s: 0.0,
        stop_reason: "failed".into(),
        error: None,
        history: Vec::new(),
    };
    let outcome = (|| -> Result<()> {
        let mesh = Arc::new(domain.build()?);
        row.h = mesh.h();
        let space = SplineSpace::new(mesh, spec.degree, spec.smoothness)?;
        let mut problem = MaeProblem::from_case(space, tc);
        problem.a = a;
        problem.dprime = dprime;
        problem.init = init;
        problem.max_iters = spec.max_iters;
        problem.cfg = spec.cfg;
        problem.grid_n = spec.grid_n;
        let run = mae::run(&problem, algorithm, None)?;
        let rep = error_norms(&run.final_spline, tc, spec.grid_n);
        row.iters = Some(run.iters);
        row.l2 = Some(rep.l2);
        row.h1 = Some(rep.h1);
        row.linf = Some(rep.linf);
        row.stop_reason = run.stop_reason.to_string();
        row.history = run.history;
        Ok(())
    })();
    if let Err(e) = outcome {
        row.error = Some(e.to_string());
        row.stop_reason = "failed".into();
    }
    row.runtime_s = t0.elapsed().as_secs_f64();
    row
}

/// Runs the batch a study kind describes; one row per configuration.
pub fn study(spec: &StudySpec) -> Result<Vec<StudyRow>> {
    let tc = find_case(&spec.case).ok_or_else(|| {
        Error::Config(format!(
            "unknown test case '{}'; known cases are u3ds1..u3ds9 and aliases s1-s4, ns1, ns2",
            spec.case
        ))
    })?;
    let mut rows = Vec::new();
    match spec.kind {
        StudyKind::ASweep => {
            for &a in &spec.a_values {
                rows.push(run_one(spec, &tc, &spec.domain, a, spec.algorithm, spec.init));
            }
        }
        StudyKind::InitSweep => {
            for &p in &spec.p_values {
                for alg in [Algorithm::Alg1, Algorithm::Alg2] {
                    rows.push(run_one(
                        spec,
                        &tc,
                        &spec.domain,
                        spec.a,
                        alg,
                        InitMode::Constant(p),
                    ));
                }
            }
        }
        StudyKind::AlgCompare => {
            for alg in [Algorithm::Alg1, Algorithm::Alg2] {
                rows.push(run_one(spec, &tc, &spec.domain, spec.a, alg, spec.init));
            }
        }
        StudyKind::Refine => {
            let base = domain_h(&spec.domain).ok_or_else(|| {
                Error::Config("refine study needs a cube or letter domain, not a mesh file".into())
            })?;
            if spec.levels < 2 {
                return Err(Error::Config("refine study needs at least 2 levels".into()));
            }
            for level in 0..spec.levels {
                let h = base / (1u64 << level) as f64;
                let domain = domain_with_h(&spec.domain, h).expect("parametric domain");
                rows.push(run_one(spec, &tc, &domain, spec.a, spec.algorithm, spec.init));
            }
            for i in 1..rows.len() {
                if let (Some(a), Some(b)) = (rows[i - 1].l2, rows[i].l2) {
                    if a > 0.0 && b > 0.0 {
                        rows[i].rate_l2 = Some((a / b).log2());
                    }
                }
                if let (Some(a), Some(b)) = (rows[i - 1].h1, rows[i].h1) {
                    if a > 0.0 && b > 0.0 {
                        rows[i].rate_h1 = Some((a / b).log2());
                    }
                }
            }
        }
    }
    Ok(rows)
}

fn opt_e(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn opt_plain<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Renders rows as CSV. Errors use scientific notation, rates and h plain
/// formatting; runtime is rounded to milliseconds and is the only column
/// that varies between identical runs.
pub fn rows_to_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from(
        "case,domain,h,D,r,dprime,a,algorithm,iters,l2,h1,linf,rate_l2,rate_h1,runtime_s,stop_reason,init\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.3},{},{}\n",
            r.case,
            r.domain,
            r.h,
            r.degree,
            r.smoothness,
            r.dprime,
            r.a,
            r.algorithm,
            opt_plain(r.iters),
            opt_e(r.l2),
            opt_e(r.h1),
            opt_e(r.linf),
            opt_plain(r.rate_l2),
            opt_plain(r.rate_h1),
            r.runtime_s,
            r.stop_reason,
            r.init,
        ));
    }
    out
}
