//! `hiphop` — compute, continue, and classify periodic hip-hop orbits of the
//! equal-mass 2N-body problem.
//!
//! Exit codes: 0 success, 2 argument/configuration error, 3 numerical
//! failure, 4 I/O error.

// validation guards use the `!(x > 0)` form so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod angle;
mod config;

use clap::{Args, Parser, Subcommand};
use hiphop_core::classify::{self, MatchOptions, Symmetry};
use hiphop_core::continuation::{
    detect_bifurcations, switch_branch, trace_branch, Branch, ContinuationOptions,
    InitialDirection, PointRecord,
};
use hiphop_core::error::Error as CoreError;
use hiphop_core::integrate::{self, IntegratorOptions};
use hiphop_core::model::derived_constants;
use hiphop_core::shoot::{self, Constraint, ShootPoint, SolveOptions, SystemKind};
use hiphop_core::verify;
use hiphop_core::Params;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "hiphop",
    about = "Periodic hip-hop orbits of the equal-mass 2N-body problem",
    version
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Bodies per N-gon (2N bodies total)
    #[arg(short = 'N', long = "bodies", global = true)]
    n: Option<u32>,
    /// Mass per body
    #[arg(short = 'm', long = "mass", global = true)]
    m: Option<f64>,
    /// Initial ring radius
    #[arg(long = "r0", global = true)]
    r0: Option<f64>,
    /// Relative integration tolerance
    #[arg(long, global = true)]
    rel_tol: Option<f64>,
    /// Absolute integration tolerance
    #[arg(long, global = true)]
    abs_tol: Option<f64>,
    /// Collision floor on pairwise distances (default 1e-8 * r0)
    #[arg(long, global = true)]
    rho_min: Option<f64>,
    /// Flat key=value file overriding defaults (flags win over the file)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TraceArgs {
    /// Initial arclength step
    #[arg(long)]
    h0: Option<f64>,
    /// Maximum arclength step
    #[arg(long)]
    h_max: Option<f64>,
    /// Minimum arclength step
    #[arg(long)]
    h_min: Option<f64>,
    /// Point budget per trace
    #[arg(long)]
    max_points: Option<usize>,
    /// Stop when the angular momentum drops below this
    #[arg(long)]
    a_min: Option<f64>,
    /// Rank-statistic threshold flagging bifurcation candidates
    #[arg(long)]
    bif_threshold: Option<f64>,
    /// |b| of the first point when seeding from the trivial line
    #[arg(long)]
    escape_b: Option<f64>,
    /// Follow the trivial line instead of escaping it
    #[arg(long)]
    no_trivial_escape: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Print derived constants and the branch seeds p0, q0
    Seeds,
    /// One Newton solve of system I or II
    Solve {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[arg(long = "T")]
        t: f64,
        #[arg(long, default_value = "II")]
        system: String,
        /// Coordinate pinned to square the system: a, b, or T
        #[arg(long, default_value = "b")]
        fix: String,
        /// Convergence tolerance on the residuals
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Divide the system-II gap residual by b
        #[arg(long)]
        reduced: bool,
    },
    /// Trace a solution branch and write it as JSONL
    Branch {
        #[arg(long, default_value = "II")]
        system: String,
        /// q0, p0, or an explicit a,b,T triple
        #[arg(long, default_value = "q0")]
        seed: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        trace: TraceArgs,
    },
    /// Detect bifurcation candidates on a branch file and switch onto the
    /// crossing branches
    Bifurcate {
        #[arg(long)]
        branch: PathBuf,
        /// Child branches are written as <prefix><k>.jsonl
        #[arg(long)]
        out_prefix: Option<String>,
        #[command(flatten)]
        trace: TraceArgs,
    },
    /// Append per-point classification fields to a branch file
    Classify {
        #[arg(long)]
        branch: PathBuf,
        /// Output path (default: rewrite the input)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Largest k scanned in the integer angle equation
        #[arg(long, default_value_t = 40)]
        k_max: u32,
        /// Defect tolerance of the integer match, radians
        #[arg(long, default_value_t = 1e-3)]
        match_tol: f64,
        /// Residual tolerance of the double-symmetry test
        #[arg(long, default_value_t = 1e-6)]
        symmetry_tol: f64,
    },
    /// Refine a branch point to an exact rotation-angle target
    Choreo {
        #[arg(long)]
        branch: PathBuf,
        /// Target angle; accepts symbolic fractions of pi such as 5pi/3
        #[arg(long)]
        target: String,
    },
    /// Cross-check a point against the full 2N-body integration
    Verify {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[arg(long = "T")]
        t: f64,
    },
    /// Export a trajectory as CSV
    Export {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        b: f64,
        #[arg(long = "T")]
        t: f64,
        /// Integration span as a multiple of T
        #[arg(long, default_value_t = 2.0)]
        span: f64,
        #[arg(long)]
        out: PathBuf,
        /// Export the embedded full-problem trajectory instead of the
        /// reduced one
        #[arg(long)]
        full: bool,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[derive(Debug)]
enum CliError {
    Args(String),
    Numerical(CoreError),
    Io(std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Args(msg) => write!(f, "{msg}"),
            CliError::Numerical(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Args(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParams(msg) => CliError::Args(msg),
            CoreError::Io(io) => CliError::Io(io),
            CoreError::Json(j) => CliError::Args(format!("malformed branch file: {j}")),
            other => CliError::Numerical(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

type CliResult<T> = Result<T, CliError>;

/// Effective run configuration: defaults, overridden by --config, overridden
/// by explicit flags.
struct RunConfig {
    params: Params,
    integrator: IntegratorOptions,
    continuation: ContinuationOptions,
}

fn build_config(common: &CommonArgs, trace: Option<&TraceArgs>) -> CliResult<RunConfig> {
    let mut cfg = config::FileConfig::default();
    if let Some(path) = &common.config {
        cfg = config::FileConfig::load(path)?;
    }
    let n = common.n.or(cfg.n).unwrap_or(3);
    let m = common.m.or(cfg.m).unwrap_or(1.0);
    let r0 = common.r0.or(cfg.r0).unwrap_or(2.0);
    let params = Params::new(n, m, r0).map_err(|e| CliError::Args(e.to_string()))?;

    let mut integrator = IntegratorOptions::default();
    if let Some(v) = common.rel_tol.or(cfg.rel_tol) {
        integrator.rel_tol = v;
    }
    if let Some(v) = common.abs_tol.or(cfg.abs_tol) {
        integrator.abs_tol = v;
    }
    if let Some(v) = common.rho_min.or(cfg.rho_min) {
        integrator.rho_min = Some(v);
    }

    let mut continuation = ContinuationOptions {
        integrator,
        ..Default::default()
    };
    if let Some(v) = cfg.h0 {
        continuation.h0 = v;
    }
    if let Some(v) = cfg.h_max {
        continuation.h_max = v;
    }
    if let Some(v) = cfg.h_min {
        continuation.h_min = v;
    }
    if let Some(v) = cfg.max_points {
        continuation.max_points = v;
    }
    if let Some(v) = cfg.a_min {
        continuation.a_min = v;
    }
    if let Some(v) = cfg.bif_angle_threshold {
        continuation.bif_angle_threshold = v;
    }
    if let Some(v) = cfg.escape_b {
        continuation.escape_b = v;
    }
    if let Some(t) = trace {
        if let Some(v) = t.h0 {
            continuation.h0 = v;
        }
        if let Some(v) = t.h_max {
            continuation.h_max = v;
        }
        if let Some(v) = t.h_min {
            continuation.h_min = v;
        }
        if let Some(v) = t.max_points {
            continuation.max_points = v;
        }
        if let Some(v) = t.a_min {
            continuation.a_min = v;
        }
        if let Some(v) = t.bif_threshold {
            continuation.bif_angle_threshold = v;
        }
        if let Some(v) = t.escape_b {
            continuation.escape_b = v;
        }
        if t.no_trivial_escape {
            continuation.trivial_escape = false;
        }
    }
    Ok(RunConfig {
        params,
        integrator: continuation.integrator,
        continuation,
    })
}

fn parse_system(s: &str) -> CliResult<SystemKind> {
    s.parse::<SystemKind>()
        .map_err(|e| CliError::Args(e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Seeds => {
            let cfg = build_config(&cli.common, None)?;
            seeds(&cfg)
        }
        Command::Solve {
            a,
            b,
            t,
            system,
            fix,
            tol,
            reduced,
        } => {
            let cfg = build_config(&cli.common, None)?;
            solve(&cfg, *a, *b, *t, system, fix, *tol, *reduced)
        }
        Command::Branch {
            system,
            seed,
            out,
            trace,
        } => {
            let cfg = build_config(&cli.common, Some(trace))?;
            branch(&cfg, system, seed, out)
        }
        Command::Bifurcate {
            branch,
            out_prefix,
            trace,
        } => {
            let cfg = build_config(&cli.common, Some(trace))?;
            bifurcate(&cfg, branch, out_prefix.as_deref(), trace)
        }
        Command::Classify {
            branch,
            out,
            k_max,
            match_tol,
            symmetry_tol,
        } => {
            let cfg = build_config(&cli.common, None)?;
            classify_file(
                &cfg,
                branch,
                out.as_deref(),
                *k_max,
                *match_tol,
                *symmetry_tol,
            )
        }
        Command::Choreo { branch, target } => {
            let cfg = build_config(&cli.common, None)?;
            choreo(&cfg, branch, target)
        }
        Command::Verify { a, b, t } => {
            let cfg = build_config(&cli.common, None)?;
            verify_point(&cfg, *a, *b, *t)
        }
        Command::Export {
            a,
            b,
            t,
            span,
            out,
            full,
            samples,
        } => {
            let cfg = build_config(&cli.common, None)?;
            export(&cfg, *a, *b, *t, *span, out, *full, *samples)
        }
    }
}

fn seeds(cfg: &RunConfig) -> CliResult<()> {
    let c = derived_constants(&cfg.params);
    let p = &cfg.params;
    println!("N = {}, m = {:.16e}, r0 = {:.16e}", p.n, p.m, p.r0);
    println!("alpha   = {:.16e}", c.alpha);
    println!("gamma   = {:.16e}", c.gamma);
    println!(
        "gamma/alpha = {:.16e}  (bound (4+sqrt2)/8 = {:.16e})",
        c.gamma / c.alpha,
        (4.0 + 2f64.sqrt()) / 8.0
    );
    println!("a0      = {:.16e}", c.a0);
    println!("omega_r = {:.16e}", c.omega_r);
    println!("omega_z = {:.16e}", c.omega_z);
    println!(
        "p0 = ({:.16e}, 0, {:.16e})   [system I seed, period 4T]",
        c.a0, c.t0_i
    );
    println!(
        "q0 = ({:.16e}, 0, {:.16e})   [system II seed, period 2T]",
        c.a0, c.t0_ii
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn solve(
    cfg: &RunConfig,
    a: f64,
    b: f64,
    t: f64,
    system: &str,
    fix: &str,
    tol: f64,
    reduced: bool,
) -> CliResult<()> {
    let kind = parse_system(system)?;
    let seed = ShootPoint::new(a, b, t);
    let index = match fix {
        "a" => 0,
        "b" => 1,
        "T" | "t" => 2,
        other => {
            return Err(CliError::Args(format!(
                "--fix must be a, b, or T, got {other:?}"
            )))
        }
    };
    let constraint = Constraint::fix_coordinate(index, &seed);
    let solve_opts = SolveOptions {
        tol,
        reduced_residual: reduced,
        ..Default::default()
    };
    let res = shoot::newton_solve(
        &seed,
        kind,
        &constraint,
        &cfg.params,
        &cfg.integrator,
        &solve_opts,
    )?;
    println!(
        "converged in {} iterations (system {kind}, {fix} fixed)",
        res.iterations
    );
    println!("a = {:.16e}", res.point.a);
    println!("b = {:.16e}", res.point.b);
    println!("T = {:.16e}", res.point.t);
    println!(
        "residual = ({:.3e}, {:.3e})",
        res.residual[0], res.residual[1]
    );
    println!("theta0 = {:.16e}", res.theta);
    println!("jacobian rows (d/da, d/db, d/dT):");
    for row in 0..2 {
        println!(
            "  ({:.16e}, {:.16e}, {:.16e})",
            res.jacobian[(row, 0)],
            res.jacobian[(row, 1)],
            res.jacobian[(row, 2)]
        );
    }
    Ok(())
}

fn parse_seed(cfg: &RunConfig, seed: &str) -> CliResult<ShootPoint> {
    let c = derived_constants(&cfg.params);
    match seed {
        "q0" => Ok(ShootPoint::new(c.a0, 0.0, c.t0_ii)),
        "p0" => Ok(ShootPoint::new(c.a0, 0.0, c.t0_i)),
        triple => {
            let parts: Vec<&str> = triple.split(',').collect();
            if parts.len() != 3 {
                return Err(CliError::Args(format!(
                    "--seed must be q0, p0, or a,b,T — got {triple:?}"
                )));
            }
            let vals: Result<Vec<f64>, _> = parts.iter().map(|s| s.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| CliError::Args(format!("bad seed number: {e}")))?;
            Ok(ShootPoint::new(vals[0], vals[1], vals[2]))
        }
    }
}

fn branch(cfg: &RunConfig, system: &str, seed: &str, out: &Path) -> CliResult<()> {
    let kind = parse_system(system)?;
    let seed_pt = parse_seed(cfg, seed)?;
    let branch = trace_branch(&seed_pt, kind, &cfg.params, &cfg.continuation)?;
    let mut file = BufWriter::new(File::create(out)?);
    branch.write_jsonl(&mut file)?;
    file.flush()?;
    println!(
        "wrote {} points to {} (termination: {})",
        branch.points.len(),
        out.display(),
        termination_name(&branch)
    );
    Ok(())
}

fn termination_name(branch: &Branch) -> String {
    serde_json::to_string(&branch.meta.termination)
        .map(|s| s.trim_matches('"').to_string())
        .unwrap_or_else(|_| format!("{:?}", branch.meta.termination))
}

fn read_branch(path: &Path) -> CliResult<(Branch, Vec<PointRecord>)> {
    let file = BufReader::new(File::open(path)?);
    Ok(Branch::read_jsonl(file)?)
}

fn bifurcate(
    cfg: &RunConfig,
    path: &Path,
    out_prefix: Option<&str>,
    trace: &TraceArgs,
) -> CliResult<()> {
    let (mut parent, _) = read_branch(path)?;
    // detection runs with the options stored in the file, except where the
    // command line overrides them explicitly
    if let Some(v) = trace.bif_threshold {
        parent.meta.options.bif_angle_threshold = v;
    }
    let candidates = detect_bifurcations(&parent)?;
    if candidates.is_empty() {
        println!("no bifurcation candidates");
        return Ok(());
    }
    let prefix = out_prefix.map(str::to_owned).unwrap_or_else(|| {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("branch");
        let dir = path.parent().map(|p| p.to_path_buf()).unwrap_or_default();
        dir.join(format!("{stem}-child-"))
            .to_string_lossy()
            .into_owned()
    });
    let mut written = 0usize;
    for (ci, cand) in candidates.iter().enumerate() {
        let pt = cand.point.point;
        println!(
            "candidate {ci}: ({:.16e}, {:.16e}, {:.16e})  |rank statistic| {:.3e}",
            pt.a,
            pt.b,
            pt.t,
            cand.point.grad_angle_sin.abs()
        );
        match switch_branch(&cand.point, &parent, &cfg.params, &cfg.continuation) {
            Ok(seeds) => {
                for seed in seeds {
                    let dir = seed.as_vector() - pt.as_vector();
                    let opts = ContinuationOptions {
                        direction: InitialDirection::Along([dir[0], dir[1], dir[2]]),
                        ..cfg.continuation
                    };
                    match trace_branch(&seed, parent.meta.kind, &cfg.params, &opts) {
                        Ok(child) => {
                            written += 1;
                            let out = PathBuf::from(format!("{prefix}{written}.jsonl"));
                            let mut file = BufWriter::new(File::create(&out)?);
                            child.write_jsonl(&mut file)?;
                            file.flush()?;
                            println!(
                                "  child {written}: {} points -> {} (termination: {})",
                                child.points.len(),
                                out.display(),
                                termination_name(&child)
                            );
                        }
                        Err(e) => println!(
                            "  child trace from ({:.6}, {:.6}, {:.6}) failed: {e}",
                            seed.a, seed.b, seed.t
                        ),
                    }
                }
            }
            Err(CoreError::NoNewBranch) => println!("  no new branch at this candidate"),
            Err(e) => return Err(e.into()),
        }
    }
    println!("{written} child branch(es) written");
    Ok(())
}

fn thread_budget() -> usize {
    let available = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    match std::env::var("HIPHOP_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
    {
        Some(n) if n >= 1 => n.min(available).min(64),
        _ => available.min(64),
    }
}

fn classify_file(
    cfg: &RunConfig,
    path: &Path,
    out: Option<&Path>,
    k_max: u32,
    match_tol: f64,
    symmetry_tol: f64,
) -> CliResult<()> {
    let (branch, mut records) = read_branch(path)?;
    let match_opts = MatchOptions {
        k_max,
        tol: match_tol,
        ..Default::default()
    };
    let params = branch.meta.params;
    let iopts = cfg.integrator;

    let threads = thread_budget();
    let n = records.len();
    let chunk = n.div_ceil(threads.max(1));
    let mut reports: Vec<Option<classify::TrajectoryReport>> = vec![None; n];
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (ti, slice) in records.chunks(chunk).enumerate() {
            let slice: Vec<ShootPoint> = slice
                .iter()
                .map(|r| ShootPoint::new(r.a, r.b, r.t))
                .collect();
            handles.push((
                ti,
                scope.spawn(move || {
                    slice
                        .iter()
                        .map(|pt| {
                            classify::classify_point(pt, &params, symmetry_tol, &match_opts, &iopts)
                                .ok()
                        })
                        .collect::<Vec<_>>()
                }),
            ));
        }
        for (ti, handle) in handles {
            let chunk_reports = handle.join().expect("classification worker");
            for (k, rep) in chunk_reports.into_iter().enumerate() {
                reports[ti * chunk + k] = rep;
            }
        }
    });

    let mut classified = 0usize;
    for (rec, rep) in records.iter_mut().zip(&reports) {
        if let Some(rep) = rep {
            classified += 1;
            rec.symmetry = Some(rep.symmetry.to_string());
            rec.choreography = Some(rep.choreography);
            if let Some(m) = &rep.rational {
                rec.k0 = Some(m.k0);
                rec.j0 = Some(m.j0);
                rec.l = Some(m.l);
                rec.defect = Some(m.defect);
            }
            rec.count = rep.count;
        }
    }
    let target = out.unwrap_or(path);
    let mut file = BufWriter::new(File::create(target)?);
    hiphop_core::continuation::write_records_jsonl(&branch.meta, &records, &mut file)?;
    file.flush()?;
    println!("classified {classified}/{n} points -> {}", target.display());
    Ok(())
}

fn choreo(cfg: &RunConfig, path: &Path, target: &str) -> CliResult<()> {
    let target = angle::parse(target).map_err(CliError::Args)?;
    let (branch, _) = read_branch(path)?;
    let pt = classify::choreography_refine(&branch, target, &cfg.params, &cfg.integrator)?;
    let theta = classify::theta_half_period(&pt, &cfg.params, &cfg.integrator)?;
    println!(
        "refined point at theta0 = {:.16e} (target {:.16e})",
        theta, target
    );
    println!("a = {:.16e}", pt.a);
    println!("b = {:.16e}", pt.b);
    println!("T = {:.16e}", pt.t);
    let symmetry = classify::symmetry_class(&pt, &cfg.params, 1e-6, &cfg.integrator)?;
    println!("symmetry = {symmetry}");
    let match_opts = MatchOptions {
        parity: match symmetry {
            Symmetry::Single => classify::ParityMode::EvenJOnly,
            Symmetry::Double => classify::ParityMode::BothParities,
        },
        ..Default::default()
    };
    match classify::rational_match(target, cfg.params.n, &match_opts) {
        Some(m) => {
            let count = classify::trajectory_count(&m, cfg.params.n);
            println!(
                "integer match: k0 = {}, j0 = {}, l = {}, defect = {:.3e}",
                m.k0, m.j0, m.l, m.defect
            );
            println!(
                "trajectories = {count}{}",
                if count == 1 { " (choreography)" } else { "" }
            );
        }
        None => println!("no integer match for the target angle within defaults"),
    }
    Ok(())
}

fn verify_point(cfg: &RunConfig, a: f64, b: f64, t: f64) -> CliResult<()> {
    let p = &cfg.params;
    let opts = &cfg.integrator;
    let period = 2.0 * t;
    let deviation = verify::compare_reduced_full(a, b, period, p, opts, 400)?;
    println!(
        "max position deviation (reduced vs full, [0, 2T]) = {:.16e}",
        deviation
    );

    let fs = verify::embed(&hiphop_core::ReducedState::initial(p.r0, b), a, p);
    let e0 = fs.total_energy(p.m);
    let l0 = fs.total_angular_momentum(p.m);
    let full = verify::integrate_full(&fs, period, p, opts)?;
    let mut worst_e: f64 = 0.0;
    let mut worst_l: f64 = 0.0;
    let mut worst_sym: f64 = 0.0;
    for i in 0..=200 {
        let tt = period * i as f64 / 200.0;
        let s = full.state_at(tt);
        worst_e = worst_e.max((s.total_energy(p.m) - e0).abs());
        worst_l = worst_l.max((s.total_angular_momentum(p.m) - l0).norm());
        worst_sym = worst_sym.max(verify::antiprism_defect(&s, p));
    }
    println!("energy drift over one period           = {:.16e}", worst_e);
    println!("angular momentum drift over one period = {:.16e}", worst_l);
    println!(
        "antiprism symmetry defect              = {:.16e}",
        worst_sym
    );
    println!("total energy = {:.16e}", e0);
    println!(
        "angular momentum (z) = {:.16e}  (2N m a = {:.16e})",
        l0[2],
        2.0 * p.n as f64 * p.m * a
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn export(
    cfg: &RunConfig,
    a: f64,
    b: f64,
    t: f64,
    span: f64,
    out: &Path,
    full: bool,
    samples: usize,
) -> CliResult<()> {
    if !(span > 0.0) {
        return Err(CliError::Args(format!(
            "--span must be positive, got {span}"
        )));
    }
    let total = span * t;
    let mut file = BufWriter::new(File::create(out)?);
    if full {
        let fs = verify::embed(
            &hiphop_core::ReducedState::initial(cfg.params.r0, b),
            a,
            &cfg.params,
        );
        let traj = verify::integrate_full(&fs, total, &cfg.params, &cfg.integrator)?;
        verify::write_full_csv(&traj, samples, &mut file)?;
    } else {
        let traj = integrate::integrate(a, b, total, &cfg.params, &cfg.integrator)?;
        integrate::write_reduced_csv(&traj, samples, &mut file)?;
    }
    file.flush()?;
    println!(
        "wrote {} samples over [0, {:.6}] to {}",
        samples,
        total,
        out.display()
    );
    Ok(())
}
