#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use config::{CoeffsConfig, GradcheckConfig, GradcheckModel, Validate3dConfig, WireFilmConfig, WireWireConfig};
use magjunction::limit_wire_film::{minimize_wire_film, WireFilmParams};
use magjunction::limit_wire_wire::{minimize_wire_wire, WireWireParams};
use magjunction::magnetostatic3d::{convergence_study, ConvergenceRow, StructureKind};
use magjunction::mesh2d::{triangulate_section, CrossSection};
use magjunction::shape_coeffs::{coefficients, ShapeCoefficients};
use magjunction::sphere_field::{
    fd_gradient_check, write_trace_csv, DirectorField2D, EnergyBreakdown, EnergyFunctional, MinimizeResult,
};
use magjunction::vector::{Vec2, Vec3};
use output::Outputs;
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use thiserror::Error;

const THREADS_ENV: &str = "MAGJUNCTION_THREADS";

#[derive(Debug, Parser)]
#[command(name = "magjunction", version, about = "Wire/film multistructure coefficients, limit energies and 3D checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Shape coefficients alpha, beta, gamma of a cross-section.
    Coeffs(Common),
    /// Minimize the wire–film limit energy.
    WireFilm(Common),
    /// Minimize the coupled wire–wire limit energy.
    WireWire(Common),
    /// Compare the 3D magnetostatic energy with its thin-structure limit.
    Validate3d(Validate3dArgs),
    /// Finite-difference check of the limit-energy gradients.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory receiving result.json and the CSV series. The JSON result
    /// is printed to stdout either way.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Print the fully populated default configuration and exit.
    #[arg(long)]
    dump_defaults: bool,
}

#[derive(Debug, Args)]
struct Validate3dArgs {
    #[command(flatten)]
    common: Common,
    /// wire-film or wire-wire.
    #[arg(long, value_parser = parse_kind)]
    kind: Option<StructureKind>,
    /// Comma-separated, strictly decreasing thicknesses.
    #[arg(long, value_delimiter = ',')]
    h_list: Option<Vec<f64>>,
    /// Body cell size as a fraction of h.
    #[arg(long)]
    delta_fraction: Option<f64>,
    /// Half width L of the box [-L, L]^3.
    #[arg(long)]
    box_half_width: Option<f64>,
    /// Constant magnetization of branch a, as x,y,z.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    m_a: Option<Vec<f64>>,
    /// Constant magnetization of branch b, as x,y,z.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    m_b: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[command(flatten)]
    common: Common,
    /// wire-film or wire-wire.
    #[arg(long, value_parser = parse_model)]
    model: Option<GradcheckModel>,
    #[arg(long)]
    h_fd: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_kind(s: &str) -> Result<StructureKind, String> {
    match s.replace('-', "_").as_str() {
        "wire_film" => Ok(StructureKind::WireFilm),
        "wire_wire" => Ok(StructureKind::WireWire),
        _ => Err(format!("unknown structure kind '{s}'")),
    }
}

fn parse_model(s: &str) -> Result<GradcheckModel, String> {
    match s.replace('-', "_").as_str() {
        "wire_film" => Ok(GradcheckModel::WireFilm),
        "wire_wire" => Ok(GradcheckModel::WireWire),
        _ => Err(format!("unknown model '{s}'")),
    }
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] magjunction::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        use magjunction::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config(_) => "validation",
            CliError::Core(E::InvalidArgument(_) | E::InvalidGeometry(_)) => "validation",
            CliError::Core(E::BudgetExceeded { .. }) => "budget",
            CliError::Core(_) => "solver",
            CliError::Io(_) => "io",
        }
    }

    fn exit_code(&self) -> u8 {
        match self.kind() {
            "validation" => 2,
            "solver" => 3,
            "budget" => 4,
            _ => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report(CliError::Usage(e.to_string().trim_end().to_string())),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> ExitCode {
    let code = e.exit_code();
    let doc = serde_json::json!({ "error": e.kind(), "message": e.to_string(), "exit_code": code });
    eprintln!("{doc}");
    ExitCode::from(code)
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Coeffs(c) => run_coeffs(&c),
        Command::WireFilm(c) => run_wire_film(&c),
        Command::WireWire(c) => run_wire_wire(&c),
        Command::Validate3d(a) => run_validate3d(&a),
        Command::Gradcheck(a) => run_gradcheck(&a),
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))
}

/// Loads the config, or prints the defaults when asked. `None` means the
/// defaults were dumped and there is nothing left to do.
fn load<T>(common: &Common, required: bool) -> CliResult<Option<T>>
where
    T: DeserializeOwned + Serialize + Default,
{
    if common.dump_defaults {
        print!("{}", to_json(&T::default()));
        return Ok(None);
    }
    match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let cfg = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Ok(Some(cfg))
        }
        None if required => Err(CliError::Config("--config is required".into())),
        None => Ok(Some(T::default())),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    // all result types are plain data
    serde_json::to_string_pretty(value).expect("serializable result") + "\n"
}

/// Prints the JSON result and, with `--out-dir`, writes it next to the series.
fn finish<T: Serialize>(common: &Common, result: &T, mut files: Outputs) -> CliResult<()> {
    let json = to_json(result);
    if let Some(dir) = &common.out_dir {
        files.add("result.json", json.clone().into_bytes());
        files.commit(dir)?;
    }
    std::io::stdout().write_all(json.as_bytes())?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct CoefficientSummary {
    alpha: f64,
    beta: f64,
    gamma: f64,
    error_estimate: f64,
}

impl From<&ShapeCoefficients> for CoefficientSummary {
    fn from(c: &ShapeCoefficients) -> Self {
        Self { alpha: c.alpha, beta: c.beta, gamma: c.gamma, error_estimate: c.error_estimate }
    }
}

fn run_coeffs(common: &Common) -> CliResult<()> {
    let Some(cfg) = load::<CoeffsConfig>(common, true)? else {
        return Ok(());
    };
    let section = cfg.validate()?;
    let c = coefficients(&section, &cfg.params)?;
    let mut files = Outputs::default();
    files.add_with("levels.csv", |w| {
        writeln!(w, "radius,h,alpha,beta,gamma,gamma_boundary,vertices,cg_iterations")?;
        for l in &c.levels {
            writeln!(
                w,
                "{},{},{:e},{:e},{:e},{:e},{},{}",
                l.radius, l.h, l.alpha, l.beta, l.gamma, l.gamma_boundary, l.vertices, l.cg_iterations
            )?;
        }
        Ok(())
    });
    finish(common, &c, files)
}

#[derive(Debug, Serialize)]
struct RunSummary {
    breakdown: EnergyBreakdown,
    converged: bool,
    iterations: usize,
    /// Index of the winning start (0..6 constant, then seeded random).
    best_start: usize,
}

impl RunSummary {
    fn new(run: &MinimizeResult, best_start: usize) -> Self {
        Self { breakdown: run.breakdown, converged: run.converged, iterations: run.iterations, best_start }
    }
}

#[derive(Debug, Serialize)]
struct WireFilmReport {
    coefficients: CoefficientSummary,
    total: EnergyBreakdown,
    wire: RunSummary,
    film: RunSummary,
    /// Minimizer at `x₃ = j/n`.
    wire_samples: Vec<Vec3>,
    film_vertices: Vec<Vec2>,
    film_samples: Vec<Vec3>,
}

fn write_profile(w: &mut Vec<u8>, coord: &str, m: &[Vec3]) -> std::io::Result<()> {
    let n = m.len() - 1;
    writeln!(w, "{coord},m1,m2,m3")?;
    for (j, v) in m.iter().enumerate() {
        writeln!(w, "{},{:e},{:e},{:e}", j as f64 / n as f64, v[0], v[1], v[2])?;
    }
    Ok(())
}

fn run_wire_film(common: &Common) -> CliResult<()> {
    let Some(cfg) = load::<WireFilmConfig>(common, true)? else {
        return Ok(());
    };
    let section = cfg.validate()?;
    let film_mesh = triangulate_section(&section, cfg.film_h)?;
    let f_a = cfg.f_a.samples(cfg.n + 1, "f_a")?;
    let f_b = cfg.f_b.samples(film_mesh.num_vertices(), "f_b")?;
    let coeffs = cfg.coefficients.resolve(&section)?;
    let params = WireFilmParams {
        lambda: cfg.lambda,
        theta_area: section.area(),
        coeffs,
        anisotropy: cfg.anisotropy,
        f_a,
        f_b,
        film_mesh,
    };
    params.validate()?;
    let res = minimize_wire_film(&params, &cfg.optimizer)?;
    let (wire, film) = (res.wire.best_run(), res.film.best_run());

    let mut files = Outputs::default();
    files.add_with("wire_profile.csv", |w| write_profile(w, "x3", &wire.nodes));
    files.add_with("film_profile.csv", |w| {
        writeln!(w, "vertex,x1,x2,m1,m2,m3")?;
        for (i, (p, v)) in params.film_mesh.vertices().iter().zip(&film.nodes).enumerate() {
            writeln!(w, "{i},{},{},{:e},{:e},{:e}", p[0], p[1], v[0], v[1], v[2])?;
        }
        Ok(())
    });
    files.add_with("film_mesh.txt", |w| params.film_mesh.write_text(w));
    files.add_with("wire_trace.csv", |w| write_trace_csv(&wire.trace, w));
    files.add_with("film_trace.csv", |w| write_trace_csv(&film.trace, w));

    let report = WireFilmReport {
        coefficients: (&params.coeffs).into(),
        total: res.total(),
        wire: RunSummary::new(wire, res.wire.best),
        film: RunSummary::new(film, res.film.best),
        wire_samples: wire.nodes.clone(),
        film_vertices: params.film_mesh.vertices().to_vec(),
        film_samples: film.nodes.clone(),
    };
    finish(common, &report, files)
}

#[derive(Debug, Serialize)]
struct WireWireReport {
    coefficients: CoefficientSummary,
    #[serde(flatten)]
    run: RunSummary,
    junction: Vec3,
    /// Wire a at `x₃ = j/n_a`, starting at the junction.
    m_a: Vec<Vec3>,
    /// Wire b at `x₁ = j/n_b`, starting at the junction.
    m_b: Vec<Vec3>,
}

fn run_wire_wire(common: &Common) -> CliResult<()> {
    let Some(cfg) = load::<WireWireConfig>(common, true)? else {
        return Ok(());
    };
    cfg.validate()?;
    let params = wire_wire_params(&cfg)?;
    let res = minimize_wire_wire(&params, &cfg.optimizer)?;
    let best = res.best_run();

    let (m_a, m_b) = (res.field.m_a(), res.field.m_b());
    let mut files = Outputs::default();
    files.add_with("profile_a.csv", |w| write_profile(w, "x3", &m_a));
    files.add_with("profile_b.csv", |w| write_profile(w, "x1", &m_b));
    files.add_with("trace.csv", |w| write_trace_csv(&best.trace, w));

    let report = WireWireReport {
        coefficients: (&params.coeffs_a).into(),
        run: RunSummary::new(best, res.runs.best),
        junction: res.field.junction(),
        m_a,
        m_b,
    };
    finish(common, &report, files)
}

fn wire_wire_params(cfg: &WireWireConfig) -> CliResult<WireWireParams> {
    let coeffs = cfg.coefficients.resolve(&CrossSection::unit_square())?;
    Ok(WireWireParams {
        lambda: cfg.lambda,
        coeffs_a: coeffs.clone(),
        coeffs_b: coeffs,
        anisotropy: cfg.anisotropy,
        f_a: cfg.f_a.samples(cfg.n_a + 1, "f_a")?,
        f_bl: cfg.f_bl.samples(cfg.n_b + 1, "f_bl")?,
    })
}

#[derive(Debug, Serialize)]
struct Validate3dReport {
    kind: StructureKind,
    coefficients: CoefficientSummary,
    m_a: Vec3,
    m_b: Vec3,
    /// Errors strictly decrease along the h list.
    monotone: bool,
    rows: Vec<ConvergenceRow>,
}

fn vec3_flag(v: &[f64]) -> CliResult<Vec3> {
    match v {
        &[x, y, z] => Ok([x, y, z]),
        _ => Err(CliError::Config(format!("expected three components x,y,z, got {}", v.len()))),
    }
}

fn run_validate3d(args: &Validate3dArgs) -> CliResult<()> {
    let Some(mut cfg) = load::<Validate3dConfig>(&args.common, false)? else {
        return Ok(());
    };
    if let Some(k) = args.kind {
        cfg.kind = k;
    }
    if let Some(h) = &args.h_list {
        cfg.h_list = h.clone();
    }
    if let Some(d) = args.delta_fraction {
        cfg.grid.delta_fraction = d;
    }
    if let Some(l) = args.box_half_width {
        cfg.grid.box_half_width = l;
    }
    if let Some(m) = &args.m_a {
        cfg.m_a = vec3_flag(m)?;
    }
    if let Some(m) = &args.m_b {
        cfg.m_b = vec3_flag(m)?;
    }
    let section = cfg.validate()?;
    let coeffs = cfg.coefficients.resolve(&section)?;
    let theta = (cfg.kind == StructureKind::WireFilm).then_some(&section);
    let table = convergence_study(cfg.kind, theta, [cfg.m_a, cfg.m_b], &cfg.h_list, &coeffs, &cfg.grid)?;

    let mut files = Outputs::default();
    files.add_with("convergence.csv", |w| table.write_csv(w));
    let report = Validate3dReport {
        kind: cfg.kind,
        coefficients: (&coeffs).into(),
        m_a: cfg.m_a,
        m_b: cfg.m_b,
        monotone: table.monotone,
        rows: table.rows,
    };
    finish(&args.common, &report, files)
}

#[derive(Debug, Serialize)]
struct GradcheckReport {
    model: GradcheckModel,
    h_fd: f64,
    samples: usize,
    tolerance: f64,
    /// Largest relative error per functional.
    max_error: BTreeMap<String, f64>,
    pass: bool,
}

fn worst_error<F: EnergyFunctional>(f: &F, cfg: &GradcheckConfig) -> CliResult<f64> {
    let n = f.num_nodes();
    let mut worst = 0.0f64;
    for k in 0..cfg.samples as u64 {
        let m = DirectorField2D::random(n, cfg.seed.wrapping_add(2 * k));
        let d = DirectorField2D::random(n, cfg.seed.wrapping_add(2 * k + 1));
        worst = worst.max(fd_gradient_check(f, m.nodes(), d.nodes(), cfg.h_fd)?);
    }
    Ok(worst)
}

fn run_gradcheck(args: &GradcheckArgs) -> CliResult<()> {
    let Some(mut cfg) = load::<GradcheckConfig>(&args.common, false)? else {
        return Ok(());
    };
    if let Some(m) = args.model {
        cfg.model = m;
    }
    if let Some(h) = args.h_fd {
        cfg.h_fd = h;
    }
    if let Some(s) = args.samples {
        cfg.samples = s;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let max_error = match cfg.model {
        GradcheckModel::WireFilm => {
            let wf = &cfg.wire_film;
            let section = wf.validate()?;
            let film_mesh = triangulate_section(&section, wf.film_h)?;
            let params = WireFilmParams {
                lambda: wf.lambda,
                theta_area: section.area(),
                coeffs: wf.coefficients.resolve(&section)?,
                anisotropy: wf.anisotropy,
                f_a: wf.f_a.samples(wf.n + 1, "f_a")?,
                f_b: wf.f_b.samples(film_mesh.num_vertices(), "f_b")?,
                film_mesh,
            };
            BTreeMap::from([
                ("wire".to_string(), worst_error(&params.wire_functional()?, &cfg)?),
                ("film".to_string(), worst_error(&params.film_functional()?, &cfg)?),
            ])
        }
        GradcheckModel::WireWire => {
            let params = wire_wire_params(&cfg.wire_wire)?;
            BTreeMap::from([("coupled".to_string(), worst_error(&params.functional()?, &cfg)?)])
        }
    };
    let pass = max_error.values().all(|e| *e <= cfg.tolerance);
    let report = GradcheckReport {
        model: cfg.model,
        h_fd: cfg.h_fd,
        samples: cfg.samples,
        tolerance: cfg.tolerance,
        max_error,
        pass,
    };
    finish(&args.common, &report, Outputs::default())
}
