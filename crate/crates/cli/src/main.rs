//! Command-line driver for the solver: single Poisson or Monge-Ampere runs
//! on the catalog cases, the parameter-study batches, and mesh utilities.
//!
//! Results go to stdout or `--out` as JSON or CSV. Exit code 0 means
//! success, 1 a configuration error (bad flags, unknown case, invalid degree
//! combinations), 2 a solver or I/O failure. Identical configurations
//! reproduce identical output except for the runtime fields.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Point3;
use serde::Serialize;

use ma3d::bench::{self, init_label, rows_to_csv, ErrorReport, StudyKind, StudyRow, StudySpec};
use ma3d::collocation::{self, SolveConfig, SolveReport};
use ma3d::mae::{self, Algorithm, ConvexityReport, InitMode, IterRecord, MaeProblem};
use ma3d::mesh::{save_mesh, DomainSpec, LetterKind};
use ma3d::smoothness::SplineSpace;
use ma3d::{Error, TestCase};

#[derive(Parser)]
#[command(
    name = "ma3d",
    version,
    about = "Trivariate spline collocation solver for det(D^2 u) = f"
)]
struct Cli {
    /// Worker threads for assembly and grid evaluation (falls back to the
    /// MA3D_THREADS environment variable, then to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one Poisson problem: Delta u = Delta u*, u = u* on the boundary,
    /// with u* taken from a catalog case.
    SolvePoisson(SolvePoissonArgs),
    /// Run the Monge-Ampere fixed-point iteration on a catalog case.
    SolveMae(SolveMaeArgs),
    /// Parameter-study batches; one output row per configuration.
    Bench(BenchArgs),
    /// Build, inspect, or save tetrahedral meshes.
    #[command(subcommand)]
    Mesh(MeshCmd),
}

#[derive(Clone, Debug)]
enum DomainArg {
    Cube,
    Letter(LetterKind),
    File(PathBuf),
}

fn parse_domain(s: &str) -> Result<DomainArg, String> {
    if let Some(path) = s.strip_prefix("mesh:") {
        if path.is_empty() {
            return Err("mesh: needs a file path".into());
        }
        return Ok(DomainArg::File(PathBuf::from(path)));
    }
    match s.to_ascii_lowercase().as_str() {
        "cube" => Ok(DomainArg::Cube),
        "letter-l" => Ok(DomainArg::Letter(LetterKind::L)),
        "letter-c" => Ok(DomainArg::Letter(LetterKind::C)),
        "letter-s" => Ok(DomainArg::Letter(LetterKind::S)),
        other => Err(format!(
            "unknown domain '{other}'; use cube, letter-l, letter-c, letter-s, or mesh:<path>"
        )),
    }
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    match s.to_ascii_lowercase().as_str() {
        "alg1" => Ok(Algorithm::Alg1),
        "alg2" => Ok(Algorithm::Alg2),
        other => Err(format!("unknown algorithm '{other}'; use alg1 or alg2")),
    }
}

fn parse_init(s: &str) -> Result<InitMode, String> {
    if s.eq_ignore_ascii_case("cbrt") {
        return Ok(InitMode::Cbrt);
    }
    if let Some(rest) = s.strip_prefix("p=") {
        return rest
            .parse()
            .map(InitMode::Constant)
            .map_err(|e| format!("bad p value '{rest}': {e}"));
    }
    Err(format!("expected 'cbrt' or 'p=<value>', got '{s}'"))
}

fn parse_study(s: &str) -> Result<StudyKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "a-sweep" => Ok(StudyKind::ASweep),
        "init-sweep" => Ok(StudyKind::InitSweep),
        "alg-compare" => Ok(StudyKind::AlgCompare),
        "refine" => Ok(StudyKind::Refine),
        other => Err(format!(
            "unknown study '{other}'; use a-sweep, init-sweep, alg-compare, or refine"
        )),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

/// Flags shared by every command that builds a spline space.
#[derive(Args, Clone)]
struct CommonArgs {
    /// Domain: cube, letter-l, letter-c, letter-s, or mesh:<path>.
    #[arg(long, value_parser = parse_domain, default_value = "cube")]
    domain: DomainArg,
    /// Cell size for the cube and letter domains (ignored for mesh files).
    #[arg(long, default_value_t = 0.5)]
    h: f64,
    /// Spline degree D.
    #[arg(long, default_value_t = 5)]
    degree: u32,
    /// Smoothness order r.
    #[arg(long, default_value_t = 1)]
    smoothness: u32,
    /// Collocation degree D'; defaults to D + 1.
    #[arg(long)]
    dprime: Option<u32>,
    /// Weight on the interior (PDE) rows of the least-squares stack.
    #[arg(long, default_value_t = 1e4)]
    mu: f64,
    /// Evaluation lattice resolution per axis for the error norms.
    #[arg(long, default_value_t = 51)]
    grid: usize,
}

impl CommonArgs {
    fn domain_spec(&self) -> DomainSpec {
        match &self.domain {
            DomainArg::Cube => DomainSpec::cube(self.h),
            DomainArg::Letter(kind) => DomainSpec::Letter {
                kind: *kind,
                h: self.h,
            },
            DomainArg::File(path) => DomainSpec::File { path: path.clone() },
        }
    }

    fn space(&self) -> ma3d::Result<Arc<SplineSpace>> {
        let mesh = Arc::new(self.domain_spec().build()?);
        SplineSpace::new(mesh, self.degree, self.smoothness)
    }

    fn dprime(&self) -> u32 {
        self.dprime.unwrap_or(self.degree + 1)
    }

    fn cfg(&self) -> SolveConfig {
        SolveConfig {
            mu: self.mu,
            ..SolveConfig::default()
        }
    }

    fn validate(&self) -> ma3d::Result<()> {
        if self.grid < 2 {
            return Err(Error::Config(format!(
                "--grid must be at least 2, got {}",
                self.grid
            )));
        }
        Ok(())
    }
}

#[derive(Args)]
struct SolvePoissonArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Catalog case supplying the Laplacian target and boundary data.
    #[arg(long)]
    case: String,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveMaeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Catalog case supplying f and the boundary data.
    #[arg(long)]
    case: String,
    /// Step parameter of the cubic update.
    #[arg(long, default_value_t = 27.0)]
    a: f64,
    /// Update rule: alg1 (plain) or alg2 (averaged).
    #[arg(long, value_parser = parse_algorithm, default_value = "alg2")]
    algorithm: Algorithm,
    /// Initialization: cbrt or p=<value>.
    #[arg(long, value_parser = parse_init, default_value = "cbrt")]
    init: InitMode,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Sampling seed for the convexity report.
    #[arg(long, default_value_t = 0xc04e_f17)]
    seed: u64,
    /// Include the per-iteration series (defect, convexity numbers, error
    /// norms, contraction estimate) in the JSON output.
    #[arg(long)]
    log_history: bool,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Which batch to run: a-sweep, init-sweep, alg-compare, or refine.
    #[arg(long, value_parser = parse_study)]
    study: StudyKind,
    #[arg(long)]
    case: String,
    #[arg(long, default_value_t = 27.0)]
    a: f64,
    #[arg(long, value_parser = parse_algorithm, default_value = "alg2")]
    algorithm: Algorithm,
    #[arg(long, value_parser = parse_init, default_value = "cbrt")]
    init: InitMode,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Refinement levels for the refine study.
    #[arg(long, default_value_t = 3)]
    levels: usize,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum MeshCmd {
    /// Build a parametric domain and print its statistics.
    Build(MeshArgs),
    /// Load or build any domain, including mesh files, and print statistics.
    Inspect(MeshArgs),
    /// Build or load a domain and write it in the plain-text mesh format.
    Save(MeshSaveArgs),
}

#[derive(Args)]
struct MeshArgs {
    #[command(flatten)]
    domain: MeshDomainArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MeshSaveArgs {
    #[command(flatten)]
    domain: MeshDomainArgs,
    /// Destination mesh file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MeshDomainArgs {
    #[arg(long, value_parser = parse_domain, default_value = "cube")]
    domain: DomainArg,
    #[arg(long, default_value_t = 0.5)]
    h: f64,
}

impl MeshDomainArgs {
    fn domain_spec(&self) -> DomainSpec {
        match &self.domain {
            DomainArg::Cube => DomainSpec::cube(self.h),
            DomainArg::Letter(kind) => DomainSpec::Letter {
                kind: *kind,
                h: self.h,
            },
            DomainArg::File(path) => DomainSpec::File { path: path.clone() },
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = cli.threads.or_else(|| {
        std::env::var("MA3D_THREADS")
            .ok()
            .and_then(|s| s.parse().ok())
    });
    if let Some(n) = threads {
        // Failure means a global pool already exists; keep going on it.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 1,
                Error::MeshParse { .. } | Error::Io(_) | Error::Solver(_) => 2,
            })
        }
    }
}

fn dispatch(cmd: Cmd) -> ma3d::Result<()> {
    match cmd {
        Cmd::SolvePoisson(args) => solve_poisson(args),
        Cmd::SolveMae(args) => solve_mae(args),
        Cmd::Bench(args) => bench_cmd(args),
        Cmd::Mesh(cmd) => mesh_cmd(cmd),
    }
}

fn find_case_or_err(name: &str) -> ma3d::Result<TestCase> {
    ma3d::find_case(name).ok_or_else(|| {
        Error::Config(format!(
            "unknown test case '{name}'; known cases are u3ds1..u3ds9 and aliases s1-s4, ns1, ns2"
        ))
    })
}

fn to_json<T: Serialize>(value: &T) -> ma3d::Result<String> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Solver(format!("serialization: {e}")))?;
    text.push('\n');
    Ok(text)
}

fn write_output(path: Option<&Path>, text: &str) -> ma3d::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct PoissonOutput {
    command: &'static str,
    case: String,
    domain: String,
    h: f64,
    degree: u32,
    smoothness: u32,
    dprime: u32,
    mu: f64,
    dofs: usize,
    interior_points: usize,
    boundary_points: usize,
    solve: SolveReport,
    errors: ErrorReport,
    runtime_s: f64,
    warnings: Vec<String>,
}

fn solve_poisson(args: SolvePoissonArgs) -> ma3d::Result<()> {
    args.common.validate()?;
    let tc = find_case_or_err(&args.case)?;
    let t0 = Instant::now();
    let space = args.common.space()?;
    let hess = tc.hess.clone();
    let lap = move |p: &Point3<f64>| hess(p).trace();
    let sys = collocation::assemble(&space, args.common.dprime(), &lap, tc.u.as_ref())?;
    let (interior_points, boundary_points) = (sys.interior.len(), sys.boundary.len());
    let (s, solve) = collocation::solve_ls(sys, args.common.cfg())?;
    let errors = bench::error_norms(&s, &tc, args.common.grid);
    let out = PoissonOutput {
        command: "solve-poisson",
        case: tc.name.to_string(),
        domain: args.common.domain_spec().label(),
        h: space.mesh().h(),
        degree: args.common.degree,
        smoothness: args.common.smoothness,
        dprime: args.common.dprime(),
        mu: args.common.mu,
        dofs: space.num_dofs(),
        interior_points,
        boundary_points,
        solve,
        errors,
        runtime_s: t0.elapsed().as_secs_f64(),
        warnings: space.warnings().to_vec(),
    };
    let text = match args.format {
        OutputFormat::Json => to_json(&out)?,
        OutputFormat::Csv => rows_to_csv(&[StudyRow {
            case: out.case.clone(),
            domain: out.domain.clone(),
            h: out.h,
            degree: out.degree,
            smoothness: out.smoothness,
            dprime: out.dprime,
            a: 0.0,
            algorithm: "poisson".into(),
            init: String::new(),
            iters: None,
            l2: Some(out.errors.l2),
            h1: Some(out.errors.h1),
            linf: Some(out.errors.linf),
            rate_l2: None,
            rate_h1: None,
            runtime_s: out.runtime_s,
            stop_reason: "solved".into(),
            error: None,
            history: Vec::new(),
        }]),
    };
    write_output(args.out.as_deref(), &text)
}

#[derive(Serialize)]
struct MaeOutput {
    command: &'static str,
    case: String,
    domain: String,
    h: f64,
    degree: u32,
    smoothness: u32,
    dprime: u32,
    a: f64,
    mu: f64,
    algorithm: String,
    init: String,
    max_iters: usize,
    seed: u64,
    dofs: usize,
    iters: usize,
    stop_reason: String,
    /// Defect of the returned iterate.
    defect_inf: f64,
    l2: f64,
    h1: f64,
    linf: f64,
    grid: usize,
    points_inside: usize,
    runtime_s: f64,
    convexity: ConvexityReport,
    warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    history: Option<Vec<IterRecord>>,
}

fn solve_mae(args: SolveMaeArgs) -> ma3d::Result<()> {
    args.common.validate()?;
    let tc = find_case_or_err(&args.case)?;
    let t0 = Instant::now();
    let space = args.common.space()?;
    let mut problem = MaeProblem::from_case(space.clone(), &tc);
    problem.a = args.a;
    problem.dprime = args.common.dprime();
    problem.max_iters = args.max_iters;
    problem.init = args.init;
    problem.cfg = args.common.cfg();
    problem.grid_n = args.common.grid;
    // The per-iteration error and contraction columns need the exact
    // solution, which costs one grid pass per iterate; only pay for it when
    // the history is requested.
    let exact = if args.log_history { Some(&tc) } else { None };
    let run = mae::run(&problem, args.algorithm, exact)?;
    let errors = bench::error_norms(&run.final_spline, &tc, args.common.grid);
    let convexity = mae::convexity_report_seeded(&run.final_spline, 1000, args.seed);
    let defect_inf = run
        .history
        .get(run.iters)
        .map(|r| r.defect_inf)
        .unwrap_or(f64::NAN);
    let runtime_s = t0.elapsed().as_secs_f64();
    let out = MaeOutput {
        command: "solve-mae",
        case: tc.name.to_string(),
        domain: args.common.domain_spec().label(),
        h: space.mesh().h(),
        degree: args.common.degree,
        smoothness: args.common.smoothness,
        dprime: args.common.dprime(),
        a: args.a,
        mu: args.common.mu,
        algorithm: args.algorithm.to_string(),
        init: init_label(args.init),
        max_iters: args.max_iters,
        seed: args.seed,
        dofs: space.num_dofs(),
        iters: run.iters,
        stop_reason: run.stop_reason.to_string(),
        defect_inf,
        l2: errors.l2,
        h1: errors.h1,
        linf: errors.linf,
        grid: errors.grid,
        points_inside: errors.points_inside,
        runtime_s,
        convexity,
        warnings: run.warnings.clone(),
        history: args.log_history.then(|| run.history.clone()),
    };
    let text = match args.format {
        OutputFormat::Json => to_json(&out)?,
        OutputFormat::Csv => rows_to_csv(&[StudyRow {
            case: out.case.clone(),
            domain: out.domain.clone(),
            h: out.h,
            degree: out.degree,
            smoothness: out.smoothness,
            dprime: out.dprime,
            a: out.a,
            algorithm: out.algorithm.clone(),
            init: out.init.clone(),
            iters: Some(out.iters),
            l2: Some(out.l2),
            h1: Some(out.h1),
            linf: Some(out.linf),
            rate_l2: None,
            rate_h1: None,
            runtime_s: out.runtime_s,
            stop_reason: out.stop_reason.clone(),
            error: None,
            history: Vec::new(),
        }]),
    };
    write_output(args.out.as_deref(), &text)
}

fn bench_cmd(args: BenchArgs) -> ma3d::Result<()> {
    args.common.validate()?;
    let mut spec = StudySpec::new(args.study, &args.case, args.common.domain_spec());
    spec.degree = args.common.degree;
    spec.smoothness = args.common.smoothness;
    spec.dprime = args.common.dprime;
    spec.a = args.a;
    spec.algorithm = args.algorithm;
    spec.init = args.init;
    spec.max_iters = args.max_iters;
    spec.cfg = args.common.cfg();
    spec.grid_n = args.common.grid;
    spec.levels = args.levels;
    let rows = bench::study(&spec)?;
    let text = match args.format {
        OutputFormat::Csv => rows_to_csv(&rows),
        OutputFormat::Json => to_json(&rows)?,
    };
    write_output(args.out.as_deref(), &text)
}

#[derive(Serialize)]
struct MeshStats {
    domain: String,
    vertices: usize,
    tets: usize,
    h: f64,
    total_volume: f64,
    bbox_lo: [f64; 3],
    bbox_hi: [f64; 3],
    interior_faces: usize,
    boundary_faces: usize,
    h_max: f64,
    h_min: f64,
    max_aspect: f64,
}

fn mesh_stats(domain: &DomainSpec) -> ma3d::Result<MeshStats> {
    let mesh = domain.build()?;
    let (lo, hi) = mesh.bbox();
    let shape = mesh.shape_report();
    Ok(MeshStats {
        domain: domain.label(),
        vertices: mesh.num_vertices(),
        tets: mesh.num_tets(),
        h: mesh.h(),
        total_volume: mesh.total_volume(),
        bbox_lo: [lo.x, lo.y, lo.z],
        bbox_hi: [hi.x, hi.y, hi.z],
        interior_faces: mesh.interior_faces().len(),
        boundary_faces: mesh.boundary_faces().len(),
        h_max: shape.h_max,
        h_min: shape.h_min,
        max_aspect: shape.max_aspect,
    })
}

fn mesh_cmd(cmd: MeshCmd) -> ma3d::Result<()> {
    match cmd {
        MeshCmd::Build(args) => {
            if matches!(args.domain.domain, DomainArg::File(_)) {
                return Err(Error::Config(
                    "mesh build constructs parametric domains; use mesh inspect for files".into(),
                ));
            }
            let stats = mesh_stats(&args.domain.domain_spec())?;
            write_output(args.out.as_deref(), &to_json(&stats)?)
        }
        MeshCmd::Inspect(args) => {
            let stats = mesh_stats(&args.domain.domain_spec())?;
            write_output(args.out.as_deref(), &to_json(&stats)?)
        }
        MeshCmd::Save(args) => {
            let mesh = args.domain.domain_spec().build()?;
            save_mesh(&args.out, &mesh)
        }
    }
}
