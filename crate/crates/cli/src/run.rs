use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, Context};
use shishkin::convergence::CellError;
use shishkin::output::write_atomic;
use shishkin::problem::{validate_assumptions_with, DEFAULT_VALIDATION_SAMPLES, EXAMPLE1_CONFIG};
use shishkin::{
    build_shishkin_mesh, build_time_mesh, interesting_point, layer_function, parse_config,
    parse_expression, run_sweep, time_march_with, Axis, ConvergenceError, Execution, LayerSide,
    ProblemConfig, ProblemError, ProblemSpec, ScaledEpsilons, SolveError, SolverOptions,
    SweepOptions,
};

use crate::{Args, Mode};

const BUILTIN_EXAMPLE1: &str = "builtin:example1";
const DEFAULT_N: usize = 128;
const DEFAULT_M: usize = 32;

/// A run failure, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Validation(String),
    Solver(anyhow::Error),
    Io(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Validation(_) => 3,
            Failure::Solver(_) => 4,
            Failure::Io(_) => 5,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration: {e:#}"),
            Failure::Validation(report) => write!(f, "validation failed\n{report}"),
            Failure::Solver(e) => write!(f, "solver: {e:#}"),
            Failure::Io(e) => write!(f, "i/o: {e:#}"),
        }
    }
}

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn problem_failure(e: ProblemError) -> Failure {
    Failure::Config(e.into())
}

fn solve_failure(e: SolveError) -> Failure {
    match e {
        SolveError::Problem(p) => problem_failure(p),
        other => Failure::Solver(other.into()),
    }
}

fn sweep_failure(e: ConvergenceError) -> Failure {
    match e {
        ConvergenceError::Cell {
            eta,
            resolution,
            source,
        } => {
            let context = format!("cell eta = {eta:e}, resolution = {resolution}");
            match source {
                CellError::Solve(s) => match solve_failure(s) {
                    Failure::Config(inner) => Failure::Config(inner.context(context)),
                    Failure::Solver(inner) => Failure::Solver(inner.context(context)),
                    other => other,
                },
                CellError::Problem(p) => Failure::Config(anyhow::Error::from(p).context(context)),
                CellError::Mesh(m) => Failure::Config(anyhow::Error::from(m).context(context)),
                CellError::Difference(d) => {
                    Failure::Solver(anyhow::Error::from(*d).context(context))
                }
            }
        }
        e @ (ConvergenceError::Resolutions(_) | ConvergenceError::NoParameters) => config_err(e),
        other => Failure::Solver(other.into()),
    }
}

struct RunState {
    args: Args,
    config: ProblemConfig,
    execution: Execution,
    solver: SolverOptions,
    out: Output,
}

/// Serialized artifact writer; echoes each path once.
struct Output {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Output {
    fn write<F, E>(&mut self, name: &str, fill: F) -> Result<(), Failure>
    where
        F: FnOnce(&mut io::BufWriter<fs::File>) -> Result<(), E>,
        E: From<io::Error> + std::error::Error + Send + Sync + 'static,
    {
        fs::create_dir_all(&self.dir)
            .with_context(|| format!("creating {}", self.dir.display()))
            .map_err(Failure::Io)?;
        let path = self.dir.join(name);
        write_atomic(&path, fill)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::Io)?;
        if !self.written.contains(&path) {
            println!("wrote {}", path.display());
            self.written.push(path);
        }
        Ok(())
    }
}

fn parse_values(items: &[String], what: &str) -> Result<Vec<f64>, Failure> {
    items
        .iter()
        .map(|s| {
            parse_expression(s)
                .map_err(|e| anyhow!("{what} `{s}`: {e}"))
                .and_then(|expr| {
                    expr.eval(0.0, 0.0)
                        .map_err(|e| anyhow!("{what} `{s}`: {e}"))
                })
        })
        .collect::<Result<_, _>>()
        .map_err(Failure::Config)
}

fn load_config(args: &Args) -> Result<ProblemConfig, Failure> {
    let text = if args.problem == BUILTIN_EXAMPLE1 {
        EXAMPLE1_CONFIG.to_string()
    } else if let Some(name) = args.problem.strip_prefix("builtin:") {
        return Err(config_err(anyhow!("unknown builtin problem `{name}`")));
    } else {
        fs::read_to_string(&args.problem)
            .with_context(|| format!("reading problem file {}", args.problem))
            .map_err(Failure::Config)?
    };
    let mut config = parse_config(&text)
        .with_context(|| format!("parsing {}", args.problem))
        .map_err(Failure::Config)?;
    if let Some(alpha) = args.alpha {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(problem_failure(ProblemError::InvalidAlpha(alpha)));
        }
        config.alpha = alpha;
    }
    Ok(config)
}

impl RunState {
    fn ratios(&self) -> Result<Vec<f64>, Failure> {
        if !self.args.ratios.is_empty() {
            let r = parse_values(&self.args.ratios, "ratio")?;
            if r.len() != self.config.n {
                return Err(config_err(anyhow!(
                    "{} ratios given for {} components",
                    r.len(),
                    self.config.n
                )));
            }
            return Ok(r);
        }
        if self.config.n == 2 {
            return Ok(vec![1.0 / 16.0, 1.0 / 8.0]);
        }
        Err(config_err(anyhow!(
            "--ratios is required to map eta to {} perturbation parameters",
            self.config.n
        )))
    }

    fn etas(&self) -> Result<Vec<f64>, Failure> {
        parse_values(&self.args.eta, "eta")
    }

    /// Perturbation parameters for single-run modes: `--epsilons`, else
    /// the first `--eta` times the ratios, else the config's `epsilons`.
    fn single_epsilons(&self) -> Result<Vec<f64>, Failure> {
        if !self.args.epsilons.is_empty() {
            return parse_values(&self.args.epsilons, "epsilon");
        }
        if let Some(&eta) = self.etas()?.first() {
            return Ok(self.ratios()?.iter().map(|r| r * eta).collect());
        }
        self.config.epsilons.clone().ok_or_else(|| {
            config_err(anyhow!(
                "no perturbation parameters: pass --epsilons or --eta"
            ))
        })
    }

    fn spec(&self, epsilons: Vec<f64>) -> Result<ProblemSpec, Failure> {
        self.config
            .clone()
            .into_spec(Some(epsilons))
            .map_err(problem_failure)
    }

    fn validate(&self, spec: &ProblemSpec) -> Result<shishkin::ValidationReport, Failure> {
        let report = validate_assumptions_with(
            spec,
            DEFAULT_VALIDATION_SAMPLES,
            DEFAULT_VALIDATION_SAMPLES,
            self.execution,
        );
        if let Some(err) = &report.evaluation_error {
            return Err(config_err(anyhow!("evaluating coefficients: {err}")));
        }
        Ok(report)
    }

    /// Fails with the validation exit code unless the assumptions hold or
    /// `--skip-validation` is set.
    fn require_valid(&self, spec: &ProblemSpec) -> Result<(), Failure> {
        let report = self.validate(spec)?;
        if report.pass {
            return Ok(());
        }
        if self.args.skip_validation {
            eprintln!(
                "warning: assumptions fail ({}); continuing",
                report.failing().join(", ")
            );
            return Ok(());
        }
        Err(Failure::Validation(report.to_string()))
    }
}

pub fn run(args: &Args) -> Result<(), Failure> {
    let start = Instant::now();
    if !(args.tolerance > 0.0 && args.tolerance.is_finite()) {
        return Err(config_err(anyhow!(
            "--tolerance must be positive, got {}",
            args.tolerance
        )));
    }
    let config = load_config(args)?;
    let mut ctx = RunState {
        args: args.clone(),
        config,
        execution: if args.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
        solver: SolverOptions {
            dense_fallback: args.dense_fallback,
            residual_tolerance: args.tolerance,
        },
        out: Output {
            dir: args.out.clone(),
            written: Vec::new(),
        },
    };
    let summary = match args.mode {
        Mode::Validate => validate(&ctx)?,
        Mode::Solve => solve(&mut ctx)?,
        Mode::SweepTime => sweep(&mut ctx, Axis::Time)?,
        Mode::SweepSpace => sweep(&mut ctx, Axis::Space)?,
        Mode::MeshDump => mesh_dump(&mut ctx)?,
        Mode::Diagnostics => diagnostics(&mut ctx)?,
    };
    let mut line = format!("summary mode={}", args.mode.name());
    for (key, value) in summary {
        line.push_str(&format!(" {key}={value}"));
    }
    line.push_str(&format!(" wall_s={:.3}", start.elapsed().as_secs_f64()));
    println!("{line}");
    io::stdout().flush().map_err(|e| Failure::Io(e.into()))
}

type Summary = Vec<(&'static str, String)>;

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:e}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn validate(ctx: &RunState) -> Result<Summary, Failure> {
    let spec = ctx.spec(ctx.single_epsilons()?)?;
    let report = ctx.validate(&spec)?;
    if !report.pass {
        return Err(Failure::Validation(report.to_string()));
    }
    print!("{report}");
    Ok(vec![
        ("pass", "true".into()),
        ("min_row_sum", format!("{:e}", report.min_row_sum)),
    ])
}

fn solve(ctx: &mut RunState) -> Result<Summary, Failure> {
    let spec = ctx.spec(ctx.single_epsilons()?)?;
    ctx.require_valid(&spec)?;
    let big_n = ctx.args.space_intervals.unwrap_or(DEFAULT_N);
    let m = ctx.args.time_intervals.unwrap_or(DEFAULT_M);
    let space = build_shishkin_mesh(spec.epsilons(), spec.alpha(), big_n).map_err(config_err)?;
    let time = build_time_mesh(spec.horizon(), m).map_err(config_err)?;
    let grid = time_march_with(&spec, &space, &time, &ctx.solver).map_err(solve_failure)?;
    ctx.out.write("solution.csv", |w| grid.write_csv(w))?;
    Ok(vec![
        ("N", big_n.to_string()),
        ("M", m.to_string()),
        ("epsilons", join(spec.epsilons())),
        ("max_abs", format!("{:e}", grid.max_abs())),
        ("min", format!("{:e}", grid.min())),
    ])
}

fn sweep(ctx: &mut RunState, axis: Axis) -> Result<Summary, Failure> {
    let mut etas = ctx.etas()?;
    if etas.is_empty() {
        etas = (7..=11).map(|k| 2f64.powi(-k)).collect();
    }
    let ratios = ctx.ratios()?;
    let fixed = match axis {
        Axis::Time => ctx.args.space_intervals.unwrap_or(DEFAULT_N),
        Axis::Space => ctx.args.time_intervals.unwrap_or(DEFAULT_M),
    };
    let base = ctx.spec(ratios.iter().map(|r| r * etas[0]).collect())?;
    let family = ScaledEpsilons { base, ratios };
    for &eta in &etas {
        let spec = shishkin::ProblemFamily::instantiate(&family, eta).map_err(problem_failure)?;
        ctx.require_valid(&spec)?;
    }
    let options = SweepOptions {
        execution: ctx.execution,
        solver: ctx.solver,
    };
    let report = run_sweep(&family, &etas, axis, &ctx.args.resolutions, fixed, &options)
        .map_err(sweep_failure)?;
    let name = format!("sweep-{}.csv", axis);
    ctx.out.write(&name, |w| report.write_csv(w))?;
    Ok(vec![
        ("p*", format!("{:.7}", report.p_star)),
        ("C*", format!("{:.7}", report.c_star)),
        ("D", join(&report.uniform)),
    ])
}

fn mesh_dump(ctx: &mut RunState) -> Result<Summary, Failure> {
    let eps = ctx.single_epsilons()?;
    let alpha = ctx.config.alpha;
    let big_n = ctx.args.space_intervals.unwrap_or(DEFAULT_N);
    let mesh = build_shishkin_mesh(&eps, alpha, big_n).map_err(config_err)?;
    ctx.out.write("mesh.csv", |w| mesh.write_csv(w))?;
    Ok(vec![
        ("N", big_n.to_string()),
        ("sigma", join(mesh.sigmas())),
        ("uniform", mesh.is_uniform_collapse().to_string()),
    ])
}

fn write_layers(
    w: &mut dyn Write,
    points: &[f64],
    eps: &[f64],
    alpha: f64,
) -> Result<(), io::Error> {
    let n = eps.len();
    let mut header = vec!["j".to_string(), "x_j".to_string()];
    header.extend((1..=n).map(|i| format!("B_L_{i}")));
    header.extend((1..=n).map(|i| format!("B_R_{i}")));
    writeln!(w, "{}", header.join(","))?;
    for (j, &x) in points.iter().enumerate() {
        write!(w, "{j},{x:e}")?;
        for side in [LayerSide::Left, LayerSide::Right] {
            for i in 0..n {
                write!(w, ",{:e}", layer_function(i, x, side, eps, alpha))?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

fn diagnostics(ctx: &mut RunState) -> Result<Summary, Failure> {
    let eps = ctx.single_epsilons()?;
    let alpha = ctx.config.alpha;
    let big_n = ctx.args.space_intervals.unwrap_or(DEFAULT_N);
    let mesh = build_shishkin_mesh(&eps, alpha, big_n).map_err(config_err)?;
    ctx.out.write("layers.csv", |w| {
        write_layers(w, mesh.points(), &eps, alpha)
    })?;

    let mut rows = Vec::new();
    for i in 0..eps.len() {
        for j in i + 1..eps.len() {
            for s in [0.5, 1.0, 1.5] {
                let x = interesting_point(i, j, s, &eps, alpha).map_err(config_err)?;
                let bound = 2.0 * s * eps[j].sqrt() / alpha.sqrt();
                rows.push((i + 1, j + 1, s, x, bound));
            }
        }
    }
    ctx.out.write("interesting_points.csv", |w| {
        writeln!(w, "i,j,s,x,bound")?;
        for (i, j, s, x, bound) in &rows {
            writeln!(w, "{i},{j},{s},{x:e},{bound:e}")?;
        }
        Ok::<(), io::Error>(())
    })?;
    Ok(vec![
        ("N", big_n.to_string()),
        ("interesting_points", rows.len().to_string()),
    ])
}
