//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::benchmarks::{build_tier, parameter_sets, run_table, BenchmarkId, BenchmarkSpec, Tier};
use crate::config::ProblemConfig;
use crate::discretization::{Discretization, MeshSpec};
use crate::error::{DvsError, Result};
use crate::estimator::{EstimatorConfig, LipschitzMode};
use crate::fom::TimeGrid;
use crate::model::{Method, ReducedModel, Strategy};
use crate::offline::{run_offline, OfflineConfig};
use crate::online::{evaluate_error_metric, online_zetas, Reconstructor};
use crate::persist::{load_model, manifest, manifest_path, read_header, save_model};
use crate::problem::{ParametricProblem, SamplingLaw};
use crate::record::TimeDerivative;
use crate::report::{self, num};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "pardyn", version, about = "Dynamical variable-separation reduced models")]
pub struct Cli {
    /// Worker threads for sample sweeps (default: all cores).
    #[arg(long, global = true, env = "PARDYN_JOBS")]
    pub jobs: Option<usize>,
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a reduced model and write it with its manifest and greedy trace.
    Offline(OfflineArgs),
    /// Evaluate a stored model at new parameters.
    ///
    /// Writes `<output>` with columns `sample, xi_1…, zeta_1(T)…` (and
    /// `rel_error` with --with-fom) and `<output stem>_timing.csv` with the
    /// online (and full-order) wall time of every sample.
    Online(OnlineArgs),
    /// Reproduce the error/time tables of a reference problem.
    ///
    /// Files in --out-dir: `<id>_table.csv` (N, eps_mean, eps_max,
    /// eps_t=… for fixed-time columns, vs_mean, vs_max with --compare vs),
    /// `<id>_timing.csv` (N, offline_s, online_total_s, online_mean_s,
    /// fom_mean_s), `<id>_curve.csv` (t, N=…: mean error per time node),
    /// `<id>_density.csv` (sample, xi_…, N=…: per-sample errors),
    /// `<id>_trace.csv` (greedy trace) and `<id>_run_manifest.json`.
    Benchmark(BenchmarkArgs),
    /// Print the manifest of a stored model.
    Inspect(InspectArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ProblemSource {
    /// Reference problem id (reaction-diffusion, heat2d, burgers, allen-cahn).
    #[arg(long, conflicts_with = "config")]
    pub benchmark: Option<String>,
    /// TOML problem file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Resolution tier of a reference problem (full or ci).
    #[arg(long, default_value = "full")]
    pub tier: String,
}

#[derive(Args, Debug)]
pub struct OfflineArgs {
    #[command(flatten)]
    pub source: ProblemSource,
    #[arg(long, default_value_t = 10)]
    pub n_max: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    /// true-error or estimator.
    #[arg(long, default_value = "true-error")]
    pub strategy: String,
    /// dvs or vs.
    #[arg(long, default_value = "dvs")]
    pub method: String,
    /// product-rule or exact.
    #[arg(long, default_value = "exact")]
    pub time_derivative: String,
    /// eigen-bound or sampled-sup.
    #[arg(long, default_value = "sampled-sup")]
    pub lipschitz: String,
    /// Training-set seed (overrides the problem's).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training-set size (overrides the problem's).
    #[arg(long)]
    pub training_size: Option<usize>,
    /// Model file.
    #[arg(long, short, default_value = "model.dvs")]
    pub output: PathBuf,
    /// Store only the scalars needed for online evaluation.
    #[arg(long)]
    pub strip: bool,
}

#[derive(Args, Debug)]
pub struct OnlineArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Explicit parameter, comma separated; may be repeated.
    #[arg(long = "params", value_delimiter = ';')]
    pub params: Vec<String>,
    /// Number of random parameters when --params is absent.
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    #[arg(long, default_value_t = 2)]
    pub seed: u64,
    /// Compare against full-order solves (needs the spatial fields).
    #[arg(long)]
    pub with_fom: bool,
    /// Also write the reconstructed field at the final time of every sample.
    #[arg(long)]
    pub reconstruct: bool,
    #[arg(long, short, default_value = "online.csv")]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub id: String,
    /// Comma-separated list of term counts.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Number of test samples.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value = "full")]
    pub tier: String,
    #[arg(long, default_value = "true-error")]
    pub strategy: String,
    /// Also run the static-coefficient baseline (`vs`).
    #[arg(long)]
    pub compare: Option<String>,
    #[arg(long)]
    pub training_seed: Option<u64>,
    #[arg(long)]
    pub test_seed: Option<u64>,
    #[arg(long, default_value = "exact")]
    pub time_derivative: String,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
}

fn parse_method(s: &str) -> Result<Method> {
    match s {
        "dvs" => Ok(Method::Dvs),
        "vs" => Ok(Method::Vs),
        _ => Err(DvsError::Config(format!("unknown method {s:?}"))),
    }
}

fn parse_form(s: &str) -> Result<TimeDerivative> {
    match s {
        "product-rule" => Ok(TimeDerivative::ProductRule),
        "exact" => Ok(TimeDerivative::Exact),
        _ => Err(DvsError::Config(format!("unknown time derivative {s:?}"))),
    }
}

/// Exit code of an error.
pub fn exit_code(e: &DvsError) -> i32 {
    match e {
        _ if e.is_numerical() => EXIT_NUMERICAL,
        DvsError::Io { .. } | DvsError::Format(_) | DvsError::Version { .. } => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

struct Loaded {
    problem: ParametricProblem,
    mesh: MeshSpec,
    grid: TimeGrid,
    training: Vec<Vec<f64>>,
    bench: Option<BenchmarkSpec>,
}

fn load_source(src: &ProblemSource, seed: Option<u64>, size: Option<usize>) -> Result<Loaded> {
    match (&src.benchmark, &src.config) {
        (Some(id), None) => {
            let id: BenchmarkId = id.parse()?;
            let (problem, mut spec) = build_tier(id, src.tier.parse::<Tier>()?);
            if let Some(s) = seed {
                spec.training_seed = s;
            }
            if let Some(n) = size {
                spec.training_size = n;
            }
            let (training, _) = parameter_sets(&problem, &BenchmarkSpec { test_size: 1, ..spec.clone() })?;
            Ok(Loaded {
                mesh: spec.mesh.clone(),
                grid: spec.grid()?,
                problem,
                training,
                bench: Some(spec),
            })
        }
        (None, Some(path)) => {
            let mut cfg = ProblemConfig::load(path)?;
            if let Some(s) = seed {
                cfg.training.seed = s;
            }
            if let Some(n) = size {
                cfg.training.size = n;
            }
            Ok(Loaded {
                mesh: cfg.mesh()?,
                grid: cfg.grid()?,
                training: cfg.training_set()?,
                problem: cfg.problem,
                bench: None,
            })
        }
        _ => Err(DvsError::Config("give exactly one of --benchmark and --config".into())),
    }
}

fn stem_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}{suffix}"))
}

#[derive(Serialize)]
struct RunManifest<'a, C: Serialize> {
    version: String,
    command: &'a str,
    config: C,
}

fn write_run_manifest<C: Serialize>(path: &Path, command: &str, config: C) -> Result<()> {
    let m = RunManifest {
        version: format!("pardyn {}", env!("CARGO_PKG_VERSION")),
        command,
        config,
    };
    let text = serde_json::to_string_pretty(&m).map_err(|e| DvsError::Format(e.to_string()))?;
    report::write_file(path, &text)
}

fn cmd_offline(a: &OfflineArgs) -> Result<()> {
    let src = load_source(&a.source, a.seed, a.training_size)?;
    let cfg = OfflineConfig {
        tolerance: a.tolerance,
        n_max: a.n_max,
        strategy: a.strategy.parse()?,
        form: parse_form(&a.time_derivative)?,
        method: parse_method(&a.method)?,
        estimator: EstimatorConfig {
            lipschitz_mode: a.lipschitz.parse::<LipschitzMode>()?,
            ..EstimatorConfig::default()
        },
        ..OfflineConfig::default()
    };
    let disc = Discretization::new(&src.problem, &src.mesh)?;
    let t0 = Instant::now();
    let result = run_offline(&src.problem, &disc, &src.grid, &src.training, &cfg);
    let seconds = t0.elapsed().as_secs_f64();
    let (model, failure) = match result {
        Ok(m) => (Some(m), None),
        Err(f) => (f.partial, Some(f.error)),
    };
    let out = if failure.is_some() {
        let mut s = a.output.as_os_str().to_owned();
        s.push(".partial");
        PathBuf::from(s)
    } else {
        a.output.clone()
    };
    if let Some(m) = &model {
        save_model(m, &out, a.strip)?;
        report::write_file(&stem_path(&out, "_trace.csv"), &report::trace_csv(&m.trace))?;
        report::write_file(&stem_path(&out, "_trace_timing.csv"), &report::trace_timing_csv(&m.trace))?;
        eprintln!(
            "{} terms in {seconds:.2}s, stop: {}; model written to {}",
            m.n_terms(),
            if failure.is_some() { "failure" } else { &m.trace.stop },
            out.display()
        );
    }
    #[derive(Serialize)]
    struct Cfg<'a> {
        benchmark: Option<&'a BenchmarkSpec>,
        config_file: Option<&'a Path>,
        offline: &'a OfflineConfig,
        training: &'a [Vec<f64>],
        partial: bool,
    }
    write_run_manifest(
        &stem_path(&out, "_run.json"),
        "offline",
        Cfg {
            benchmark: src.bench.as_ref(),
            config_file: a.source.config.as_deref(),
            offline: &cfg,
            training: &src.training,
            partial: failure.is_some(),
        },
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn online_params(a: &OnlineArgs, model: &ReducedModel) -> Result<Vec<Vec<f64>>> {
    if a.params.is_empty() {
        return model.problem.sample_parameters(a.m, a.seed, SamplingLaw::Uniform);
    }
    a.params
        .iter()
        .map(|p| {
            p.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| DvsError::Config(format!("bad parameter component {x:?}")))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

fn cmd_online(a: &OnlineArgs) -> Result<()> {
    let model = match load_model(&a.model) {
        Ok(m) => m,
        Err(e @ DvsError::Version { .. }) => {
            if let Ok(h) = read_header(&a.model) {
                eprintln!("header: format {}.{}, metadata {} bytes", h.major, h.minor, h.metadata_len);
            }
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    let params = online_params(a, &model)?;
    let dim = model.problem.param_dim();
    let nt = model.n_terms();
    let mut body = String::from("sample");
    for j in 0..dim {
        body.push_str(&format!(",xi_{}", j + 1));
    }
    for k in 0..nt {
        body.push_str(&format!(",zeta_{}(T)", k + 1));
    }
    if a.with_fom {
        body.push_str(",rel_error");
    }
    body.push('\n');
    let mut timing = String::from("sample,online_s,fom_s\n");
    let disc = if a.with_fom || a.reconstruct {
        if !model.has_fields() {
            return Err(DvsError::State("the model was stored without spatial fields".into()));
        }
        Some(Discretization::new(&model.problem, &model.mesh)?)
    } else {
        None
    };
    let rec = if a.reconstruct { Some(Reconstructor::new(&model)?) } else { None };
    let mut fields = String::new();
    for (i, xi) in params.iter().enumerate() {
        let ev = online_zetas(&model, xi)?;
        body.push_str(&i.to_string());
        for x in xi {
            body.push_str(&format!(",{}", num(*x)));
        }
        for row in &ev.zetas {
            body.push_str(&format!(",{}", num(row[model.grid.steps])));
        }
        let mut fom_s = String::new();
        if let Some(d) = &disc {
            if a.with_fom {
                let r = evaluate_error_metric(&model, d, std::slice::from_ref(xi), &[nt], &[])?;
                body.push_str(&format!(",{}", num(r[0].samples.first().map(|s| s.rel_error).unwrap_or(f64::NAN))));
                fom_s = num(r[0].fom_seconds_mean);
            }
        }
        if let Some(r) = &rec {
            let f = r.field(&model, &ev, model.grid.steps)?;
            fields.push_str(&i.to_string());
            for v in f {
                fields.push_str(&format!(",{}", num(v)));
            }
            fields.push('\n');
        }
        body.push('\n');
        timing.push_str(&format!("{i},{},{fom_s}\n", num(ev.seconds)));
    }
    report::write_file(&a.output, &body)?;
    report::write_file(&stem_path(&a.output, "_timing.csv"), &timing)?;
    if a.reconstruct {
        let mut head = String::from("sample");
        for n in 0..Discretization::new(&model.problem, &model.mesh)?.n_nodes() {
            head.push_str(&format!(",node_{n}"));
        }
        head.push('\n');
        head.push_str(&fields);
        report::write_file(&stem_path(&a.output, "_fields.csv"), &head)?;
    }
    eprintln!("{} samples written to {}", params.len(), a.output.display());
    Ok(())
}

fn cmd_benchmark(a: &BenchmarkArgs) -> Result<()> {
    let id: BenchmarkId = a.id.parse()?;
    let (problem, mut spec) = build_tier(id, a.tier.parse()?);
    if !a.n.is_empty() {
        if a.n.contains(&0) {
            return Err(DvsError::Config("term counts start at 1".into()));
        }
        spec.n_list = a.n.clone();
    }
    if let Some(m) = a.m {
        spec.test_size = m;
    }
    if let Some(s) = a.training_seed {
        spec.training_seed = s;
    }
    if let Some(s) = a.test_seed {
        spec.test_seed = s;
    }
    let compare = match a.compare.as_deref() {
        None => None,
        Some("vs") => Some(Method::Vs),
        Some(x) => return Err(DvsError::Config(format!("unknown comparison method {x:?}"))),
    };
    let cfg = OfflineConfig {
        strategy: a.strategy.parse::<Strategy>()?,
        form: parse_form(&a.time_derivative)?,
        ..OfflineConfig::default()
    };
    let disc = Discretization::new(&problem, &spec.mesh)?;
    let main = run_table(&problem, &spec, &disc, &cfg)?;
    let other = match compare {
        Some(m) => Some(run_table(
            &problem,
            &spec,
            &disc,
            &OfflineConfig {
                method: m,
                strategy: Strategy::TrueError,
                ..cfg.clone()
            },
        )?),
        None => None,
    };
    let files = report::write_benchmark(&a.out_dir, &main, other.as_ref())?;
    #[derive(Serialize)]
    struct Cfg<'a> {
        spec: &'a BenchmarkSpec,
        offline: &'a OfflineConfig,
        compare: Option<Method>,
    }
    write_run_manifest(
        &a.out_dir.join(format!("{}_run_manifest.json", id)),
        "benchmark",
        Cfg {
            spec: &spec,
            offline: &cfg,
            compare,
        },
    )?;
    for r in &main.reports {
        eprintln!("N={:>2}  eps={}  max={}", r.n_terms, num(r.mean), num(r.max));
    }
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

fn cmd_inspect(a: &InspectArgs) -> Result<()> {
    let header = read_header(&a.model)?;
    let model = load_model(&a.model)?;
    let m = manifest(&model);
    let text = serde_json::to_string_pretty(&m).map_err(|e| DvsError::Format(e.to_string()))?;
    println!("{text}");
    eprintln!(
        "format {}.{}; sidecar {}",
        header.major,
        header.minor,
        manifest_path(&a.model).display()
    );
    Ok(())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    init_logging(cli.verbose);
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return EXIT_USAGE;
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let result = match &cli.command {
        Command::Offline(a) => cmd_offline(a),
        Command::Online(a) => cmd_online(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
