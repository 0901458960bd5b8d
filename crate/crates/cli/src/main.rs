use clap::{Args, Parser, Subcommand};
use lpvred::analysis::{sigma_response, step_response, FrequencyGrid};
use lpvred::bench::{build_msd, MsdConfig};
use lpvred::closedloop::{mixed_sensitivity_plant, synthesize_controller, validate, ValidationOptions, Weights};
use lpvred::io::{model_from_json, model_to_json, rows_to_matrix};
use lpvred::model::difference;
use lpvred::{reduce, Error, LpvModel64, LtiStateSpace64, ReductionConfig64, StructureMask};
use nalgebra::DMatrix;
use serde::Deserialize;
use serde_json::{json, Value};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser, Debug)]
#[command(name = "lpvred", version, about = "LPV model order reduction by fixed-structure synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the mass-spring-damper benchmark model.
    #[command(alias = "generate-benchmark")]
    Generate(GenerateArgs),
    /// Reduce a model to a given order.
    Reduce(ReduceArgs),
    /// Singular-value and step-response data on a parameter grid.
    Analyze(AnalyzeArgs),
    /// Design a controller on one model and validate it on another.
    Closedloop(ClosedLoopArgs),
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    /// Grid points per scheduling parameter.
    #[arg(long, default_value_t = 5)]
    grid: usize,
    /// Explicit grid point, comma separated; repeat for several points.
    #[arg(long = "rho", allow_hyphen_values = true)]
    rho: Vec<String>,
}

impl GridArgs {
    fn resolve(&self, model: &LpvModel64) -> Result<Vec<Vec<f64>>, CliError> {
        if self.rho.is_empty() {
            if self.grid == 0 {
                return Err(CliError::usage("--grid must be at least 1"));
            }
            return Ok(model.params.grid(self.grid));
        }
        let mut points = Vec::with_capacity(self.rho.len());
        for s in &self.rho {
            let p = s
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::usage(format!("bad --rho '{s}': {e}")))?;
            model.params.check(&p)?;
            points.push(p);
        }
        Ok(points)
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Number of blocks.
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long = "n-rho", default_value_t = 1)]
    n_rho: usize,
    #[arg(long)]
    mass: Option<f64>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    k0: Option<f64>,
    #[arg(long = "k-rho")]
    k_rho: Option<f64>,
    /// Model file; stdout when neither this nor --out-dir is given.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run directory receiving model.json and manifest.json.
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReduceArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    order: usize,
    /// full, modal, or a mask JSON file.
    #[arg(long, default_value = "full")]
    structure: String,
    /// Restrict the reduced model to constant matrices.
    #[arg(long = "parameter-independent")]
    parameter_independent: bool,
    /// Keep D_red at the initial model's value.
    #[arg(long = "pin-d")]
    pin_d: bool,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    multistart: usize,
    #[arg(long = "max-iterations", default_value_t = 200)]
    max_iterations: usize,
    #[arg(long)]
    certify: bool,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Model file; repeat for several models.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long = "w-min", default_value_t = 1e-3)]
    w_min: f64,
    #[arg(long = "w-max", default_value_t = 1e2)]
    w_max: f64,
    #[arg(long = "n-freq", default_value_t = 400)]
    n_freq: usize,
    /// Also write step responses over this horizon (s).
    #[arg(long)]
    step: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    /// Also write sigma data of the difference of the first two models.
    #[arg(long = "error-pair")]
    error_pair: bool,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct ClosedLoopArgs {
    /// Model the controller is validated on.
    #[arg(long = "full-model")]
    full_model: PathBuf,
    /// Model the controller is designed on; defaults to the full model.
    #[arg(long = "design-model")]
    design_model: Option<PathBuf>,
    /// Controller order; defaults to design-model order plus weight order.
    #[arg(long)]
    order: Option<usize>,
    /// JSON file {"We": {"A","B","C","D"}, "Wu": {...}}.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    multistart: usize,
    #[arg(long = "max-iterations", default_value_t = 200)]
    max_iterations: usize,
    #[arg(long, default_value_t = 60.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long)]
    certify: bool,
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(String),
    Lib(Error),
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) | Self::Io(_) => 2,
            Self::Lib(e) => match e {
                Error::Dimension(_)
                | Error::OutOfRange { .. }
                | Error::InvalidArgument(_)
                | Error::UnsupportedRational(_)
                | Error::Serialization(_) => 2,
                _ => 3,
            },
        }
    }

    fn to_json(&self) -> Value {
        let (kind, message) = match self {
            Self::Usage(m) => ("usage", m.clone()),
            Self::Io(m) => ("io", m.clone()),
            Self::Lib(e) => (lib_kind(e), e.to_string()),
        };
        json!({ "error": kind, "message": message, "exit_code": self.exit_code() })
    }
}

fn lib_kind(e: &Error) -> &'static str {
    match e {
        Error::Dimension(_) => "dimension",
        Error::OutOfRange { .. } => "out_of_range",
        Error::InvalidArgument(_) => "invalid_argument",
        Error::IllPosed { .. } => "ill_posed",
        Error::UnsupportedRational(_) => "unsupported_rational",
        Error::AlgebraicLoop => "algebraic_loop",
        Error::Unstable { .. } => "unstable",
        Error::Infeasible { .. } => "infeasible",
        Error::SingularFrequency { .. } => "singular_frequency",
        Error::Numerical(_) => "numerical",
        Error::NoStableStart { .. } => "no_stable_start",
        Error::CertificationFailed { .. } => "certification_failed",
        Error::Serialization(_) => "serialization",
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::Lib(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn read_model(path: &Path) -> CliResult<LpvModel64> {
    let s = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(model_from_json(&s)?)
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("JSON value");
    s.push('\n');
    s.into_bytes()
}

fn write_csv(path: &Path, label: &str, abscissa: &[f64], values: &DMatrix<f64>) -> CliResult<()> {
    let mut buf = Vec::new();
    lpvred::analysis::write_csv(&mut buf, label, abscissa, values).expect("in-memory write");
    write_file(path, &buf)
}

struct Manifest {
    command: &'static str,
    config: Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: Option<u64>,
}

impl Manifest {
    fn write(&self, dir: &Path, started: Instant) -> CliResult<()> {
        let paths = |p: &[PathBuf]| p.iter().map(|x| x.display().to_string()).collect::<Vec<_>>();
        let v = json!({
            "command": self.command,
            "argv": std::env::args().collect::<Vec<_>>(),
            "config": self.config,
            "inputs": paths(&self.inputs),
            "outputs": paths(&self.outputs),
            "seed": self.seed,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "duration_s": started.elapsed().as_secs_f64(),
        });
        write_file(&dir.join("manifest.json"), &pretty(&v))
    }
}

fn cmd_generate(a: &GenerateArgs, started: Instant) -> CliResult<()> {
    let mut cfg = MsdConfig::new(a.n, a.n_rho);
    if let Some(v) = a.mass {
        cfg.mass = v;
    }
    if let Some(v) = a.damping {
        cfg.damping = v;
    }
    if let Some(v) = a.k0 {
        cfg.k0 = v;
    }
    if let Some(v) = a.k_rho {
        cfg.k_rho = v;
    }
    let model = build_msd::<f64>(&cfg)?;
    let text = model_to_json(&model) + "\n";
    let mut outputs = Vec::new();
    if let Some(path) = &a.out {
        write_file(path, text.as_bytes())?;
        outputs.push(path.clone());
    }
    if let Some(dir) = &a.out_dir {
        create_dir(dir)?;
        let path = dir.join("model.json");
        write_file(&path, text.as_bytes())?;
        outputs.push(path);
        Manifest {
            command: "generate",
            config: json!({
                "n_blocks": cfg.n_blocks,
                "n_rho": cfg.n_rho,
                "mass": cfg.mass,
                "damping": cfg.damping,
                "k0": cfg.k0,
                "k_rho": cfg.k_rho,
            }),
            inputs: vec![],
            outputs,
            seed: None,
        }
        .write(dir, started)?;
    } else if a.out.is_none() {
        print!("{text}");
    }
    Ok(())
}

fn structure_mask(spec: &str, order: usize, g: &LpvModel64) -> CliResult<StructureMask> {
    let (n_u, n_y, n_rho) = (g.n_u(), g.n_y(), g.n_rho());
    match spec {
        "full" => Ok(StructureMask::full(order, n_u, n_y, n_rho)),
        "modal" => Ok(StructureMask::modal(order, n_u, n_y, n_rho)),
        path => {
            let s = fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("--structure must be full, modal or a mask file ({path}: {e})")))?;
            let mask = StructureMask::from_json(&s)?;
            if mask.order() != order {
                return Err(CliError::usage(format!(
                    "mask file has order {}, --order is {order}",
                    mask.order()
                )));
            }
            Ok(mask)
        }
    }
}

fn cmd_reduce(a: &ReduceArgs, started: Instant) -> CliResult<()> {
    let g = read_model(&a.model)?;
    let mut mask = structure_mask(&a.structure, a.order, &g)?;
    if a.parameter_independent {
        mask = mask.parameter_independent();
    }
    if a.pin_d {
        mask = mask.pin_d();
    }
    let mut cfg = ReductionConfig64::new(a.order, a.grid.resolve(&g)?);
    cfg.seed = a.seed;
    cfg.multistart = a.multistart;
    cfg.max_iterations = a.max_iterations;
    cfg.certify = a.certify;
    let report = reduce(&g, &cfg, &mask)?;
    create_dir(&a.out_dir)?;
    let report_path = a.out_dir.join("report.json");
    let model_path = a.out_dir.join("reduced_model.json");
    write_file(&report_path, &pretty(&report.to_json()))?;
    write_file(&model_path, (model_to_json(&report.g_red) + "\n").as_bytes())?;
    Manifest {
        command: "reduce",
        config: json!({
            "reduction": cfg.to_json(),
            "structure": a.structure,
            "mask": serde_json::from_str::<Value>(&mask.to_json()).expect("mask JSON"),
        }),
        inputs: vec![a.model.clone()],
        outputs: vec![report_path, model_path],
        seed: Some(a.seed),
    }
    .write(&a.out_dir, started)
}

fn cmd_analyze(a: &AnalyzeArgs, started: Instant) -> CliResult<()> {
    let models = a.models.iter().map(|p| read_model(p)).collect::<CliResult<Vec<_>>>()?;
    if a.error_pair && models.len() < 2 {
        return Err(CliError::usage("--error-pair needs two --model files"));
    }
    let grid = a.grid.resolve(&models[0])?;
    let freqs = FrequencyGrid::logspace(a.w_min, a.w_max, a.n_freq)?;
    create_dir(&a.out_dir)?;
    let mut outputs = Vec::new();
    let emit_sigma = |name: String, m: &LpvModel64, rho: &[f64], outputs: &mut Vec<PathBuf>| -> CliResult<()> {
        let s = sigma_response(&m.freeze(rho)?, &freqs)?;
        let path = a.out_dir.join(name);
        write_csv(&path, "omega", freqs.frequencies(), &s)?;
        outputs.push(path);
        Ok(())
    };
    for (mi, m) in models.iter().enumerate() {
        for (k, rho) in grid.iter().enumerate() {
            emit_sigma(format!("sigma_m{mi}_rho{k}.csv"), m, rho, &mut outputs)?;
            if let Some(horizon) = a.step {
                let traj = step_response(&m.freeze(rho)?, horizon, a.dt)?;
                let path = a.out_dir.join(format!("step_m{mi}_rho{k}.csv"));
                let mut buf = Vec::new();
                traj.write_csv(&mut buf).expect("in-memory write");
                write_file(&path, &buf)?;
                outputs.push(path);
            }
        }
    }
    if a.error_pair {
        let err = difference(&models[0], &models[1])?;
        for (k, rho) in grid.iter().enumerate() {
            emit_sigma(format!("sigma_error_rho{k}.csv"), &err, rho, &mut outputs)?;
        }
    }
    Manifest {
        command: "analyze",
        config: json!({
            "grid": grid,
            "w_min": a.w_min,
            "w_max": a.w_max,
            "n_freq": a.n_freq,
            "step_horizon": a.step,
            "dt": a.dt,
            "error_pair": a.error_pair,
        }),
        inputs: a.models.clone(),
        outputs,
        seed: None,
    }
    .write(&a.out_dir, started)
}

#[derive(Deserialize)]
struct LtiJson {
    #[serde(rename = "A", default)]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B", default)]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C", default)]
    c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    d: Vec<Vec<f64>>,
}

impl LtiJson {
    fn to_lti(&self) -> CliResult<LtiStateSpace64> {
        let n = self.a.len();
        let n_u = self.d.first().map_or(0, Vec::len);
        let b = if n == 0 { DMatrix::zeros(0, n_u) } else { rows_to_matrix(&self.b, n_u)? };
        let c = if n == 0 { DMatrix::zeros(self.d.len(), 0) } else { rows_to_matrix(&self.c, n)? };
        Ok(LtiStateSpace64::new(rows_to_matrix(&self.a, n)?, b, c, rows_to_matrix(&self.d, n_u)?)?)
    }
}

#[derive(Deserialize)]
struct WeightsJson {
    #[serde(rename = "We")]
    we: LtiJson,
    #[serde(rename = "Wu")]
    wu: LtiJson,
}

fn lti_to_json(s: &LtiStateSpace64) -> Value {
    let rows = lpvred::io::matrix_to_rows::<f64>;
    json!({ "A": rows(&s.a), "B": rows(&s.b), "C": rows(&s.c), "D": rows(&s.d) })
}

fn read_weights(path: &Option<PathBuf>) -> CliResult<Weights<f64>> {
    let w = match path {
        None => Weights::default(),
        Some(p) => {
            let s = fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            let j: WeightsJson = serde_json::from_str(&s).map_err(|e| CliError::usage(format!("weights file: {e}")))?;
            Weights {
                we: j.we.to_lti()?,
                wu: j.wu.to_lti()?,
            }
        }
    };
    w.validate()?;
    Ok(w)
}

fn cmd_closedloop(a: &ClosedLoopArgs, started: Instant) -> CliResult<()> {
    let g_full = read_model(&a.full_model)?;
    let design = match &a.design_model {
        Some(p) => read_model(p)?,
        None => g_full.clone(),
    };
    if (design.n_u(), design.n_y(), design.n_rho()) != (g_full.n_u(), g_full.n_y(), g_full.n_rho()) {
        return Err(CliError::usage("design and full models differ in channels or parameters"));
    }
    let weights = read_weights(&a.weights)?;
    let order = a
        .order
        .unwrap_or(design.n_x() + weights.order(design.n_u(), design.n_y()));
    let grid = a.grid.resolve(&g_full)?;
    let plant = mixed_sensitivity_plant(&design, &weights)?;
    let mut cfg = ReductionConfig64::new(order, grid.clone());
    cfg.seed = a.seed;
    cfg.multistart = a.multistart;
    cfg.max_iterations = a.max_iterations;
    let mask = StructureMask::full(order, design.n_y(), design.n_u(), design.n_rho());
    let (synth, initializer) = synthesize_controller(&plant, &mask, &cfg, None)?;
    let opts = ValidationOptions {
        horizon: a.horizon,
        dt: a.dt,
        certify: a.certify,
        ..ValidationOptions::default()
    };
    let report = validate(&g_full, &synth.k, &weights, &grid, &opts)?;

    create_dir(&a.out_dir)?;
    let mut outputs = Vec::new();
    let mut body = report.to_json();
    body["design"] = json!({
        "controller_order": order,
        "design_gamma": synth.grid_error,
        "iterations": synth.iterations,
        "history": synth.history,
        "start_index": synth.start_index,
        "initializer": initializer,
    });
    let report_path = a.out_dir.join("report.json");
    write_file(&report_path, &pretty(&body))?;
    outputs.push(report_path);
    let k_path = a.out_dir.join("controller.json");
    write_file(&k_path, (model_to_json(&synth.k) + "\n").as_bytes())?;
    outputs.push(k_path);
    for (k, p) in report.points.iter().enumerate() {
        if let Some(traj) = &p.step {
            let path = a.out_dir.join(format!("step_rho{k}.csv"));
            let mut buf = Vec::new();
            traj.write_csv(&mut buf).expect("in-memory write");
            write_file(&path, &buf)?;
            outputs.push(path);
        }
    }
    let mut inputs = vec![a.full_model.clone()];
    inputs.extend(a.design_model.clone());
    inputs.extend(a.weights.clone());
    Manifest {
        command: "closedloop",
        config: json!({
            "synthesis": cfg.to_json(),
            "controller_order": order,
            "weights": { "We": lti_to_json(&weights.we), "Wu": lti_to_json(&weights.wu) },
            "horizon": a.horizon,
            "dt": a.dt,
            "certify": a.certify,
        }),
        inputs,
        outputs,
        seed: Some(a.seed),
    }
    .write(&a.out_dir, started)
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("LPVRED_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("LPVRED_THREADS must be a non-negative integer, got '{v}'")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    configure_threads()?;
    let started = Instant::now();
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, started),
        Command::Reduce(a) => cmd_reduce(a, started),
        Command::Analyze(a) => cmd_analyze(a, started),
        Command::Closedloop(a) => cmd_closedloop(a, started),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
