//! The `pme` command line.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cloud::PointCloud;
use crate::datagen::{generate, preset, random_rotation, GeneratorSpec, Mechanism};
use crate::error::PmeError;
use crate::io::{
    cloud_to_csv, fmt_real, model_to_json, read_cloud_csv, read_model, rows_to_csv, trace_to_csv,
    write_atomic,
};
use crate::lambda_select::{log_grid, select_lambda_with_fits, SelectConfig};
use crate::metrics::{distance_to_pca_line, hausdorff, l2_map_distance, Reference};
use crate::pa::{lambda_sweep, pa_fit, InitStrategy, PaConfig};
use crate::spline::SplineMap;
use crate::templates::{quadrature_nodes, TemplateKind};

const CURVE_NODES: usize = 500;

#[derive(Parser, Debug)]
#[command(name = "pme", version, about = "Principal manifold estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a synthetic point cloud.
    Gen(GenArgs),
    /// Fit a principal manifold at one λ.
    Fit(FitArgs),
    /// Choose λ by the coefficient-of-variation rule.
    Select(SelectArgs),
    /// Compare a fitted model against a reference.
    Eval(EvalArgs),
    /// Fit a grid of λ values and tabulate per-λ metrics.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    mechanism: Option<String>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    petals: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Apply a random rotation (drawn from the seed) to 3-d mechanisms.
    #[arg(long)]
    rotate: bool,
    /// Flower surface only: Fibonacci-lattice latents.
    #[arg(long)]
    fibonacci: bool,
    #[arg(short, long)]
    output: PathBuf,
    /// Also write the latent variables here.
    #[arg(long)]
    latent: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InitArg {
    Raw,
    Isomap,
}

#[derive(Args, Debug)]
struct FitOptions {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, value_parser = parse_template)]
    template: TemplateKind,
    #[arg(long, default_value_t = 1e-5)]
    eps_stop: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// Initial indices for circle and sphere templates (intervals always use ISOMAP).
    #[arg(long, value_enum, default_value_t = InitArg::Raw)]
    init: InitArg,
    #[arg(long)]
    isomap_k: Option<usize>,
    /// Fit with at most this many kernel sections.
    #[arg(long)]
    knot_cap: Option<usize>,
    /// Seed for knot subsampling and Monte-Carlo draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    opts: FitOptions,
    #[arg(long)]
    lambda: f64,
    /// Model JSON path.
    #[arg(short, long)]
    output: PathBuf,
    /// Defaults to `<output stem>.trace.csv`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Defaults to `<output stem>.curve.csv`.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long, default_value_t = 1e-9)]
    lambda_min: f64,
    #[arg(long, default_value_t = 1e-2)]
    lambda_max: f64,
    #[arg(long, default_value_t = 8)]
    lambda_count: usize,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[command(flatten)]
    opts: FitOptions,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = 2000)]
    n_mc: usize,
    /// Kernel-regression bandwidth on the template (default: data-driven).
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Profile CSV path.
    #[arg(short, long)]
    output: PathBuf,
    /// Also save the fit at the selected λ.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum MetricArg {
    L2,
    Hausdorff,
    PcaLine,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, required = true, num_args = 1.., value_delimiter = ',')]
    metric: Vec<MetricArg>,
    /// Second model: reference for l2 and hausdorff.
    #[arg(long)]
    ref_model: Option<PathBuf>,
    /// Point cloud: its mean is the l2 reference, its points the hausdorff
    /// reference, and its PCA line the pca-line reference.
    #[arg(long)]
    cloud: Option<PathBuf>,
    /// Generating manifold of a mechanism as the hausdorff reference.
    #[arg(long, conflicts_with = "truth_preset")]
    truth: Option<String>,
    /// Generating manifold of a preset (rotation drawn from --seed).
    #[arg(long)]
    truth_preset: Option<String>,
    #[arg(long)]
    petals: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Image samples of the model for hausdorff.
    #[arg(long, default_value_t = 500)]
    samples: usize,
    /// Dense samples of the generating manifold.
    #[arg(long, default_value_t = 5000)]
    truth_samples: usize,
    #[arg(long, default_value_t = 1000)]
    n_quad: usize,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    opts: FitOptions,
    #[command(flatten)]
    grid: GridArgs,
    /// Start each λ from the previous λ's final indices.
    #[arg(long)]
    warm_start: bool,
    #[arg(long, default_value_t = 1000)]
    n_quad: usize,
    #[arg(short, long)]
    output: PathBuf,
}

fn parse_template(s: &str) -> std::result::Result<TemplateKind, String> {
    s.parse().map_err(|e: PmeError| e.to_string())
}

/// Command failure, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or unreadable input: exit 2.
    Usage(String),
    /// The computation failed: exit 3.
    Numerical(PmeError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "error: {msg}"),
            CliError::Numerical(e) => write!(f, "numerical failure ({}): {e}", e.name()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn numerical(e: PmeError) -> CliError {
    CliError::Numerical(e)
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    write_atomic(path, contents.as_bytes())
        .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn read_cloud(path: &Path) -> CliResult<PointCloud<f64>> {
    read_cloud_csv(path).map_err(usage)
}

/// Sets the worker count from `PME_THREADS` (unset or 0: one per core).
fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("PME_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| usage(format!("PME_THREADS must be a count, got '{raw}'")))?;
    if n > 0 {
        // Fails only if a pool already exists, e.g. on a second call in-process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Diagnostics go to standard error.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = configure_threads().and_then(|()| match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Select(a) => cmd_select(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
    });
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn cmd_gen(a: GenArgs) -> CliResult<()> {
    let mut spec = match (&a.preset, &a.mechanism) {
        (Some(name), _) => preset(name, a.seed).map_err(usage)?,
        (None, Some(m)) => {
            let mechanism: Mechanism = m.parse().map_err(usage)?;
            let n =
                a.n.ok_or_else(|| usage("--n is required with --mechanism"))?;
            let sigma2 = a
                .sigma2
                .ok_or_else(|| usage("--sigma2 is required with --mechanism"))?;
            GeneratorSpec::new(mechanism, n, sigma2, a.seed)
        }
        (None, None) => unreachable!("clap requires one of --mechanism/--preset"),
    };
    if let Some(n) = a.n {
        spec.n = n;
    }
    if let Some(s) = a.sigma2 {
        spec.sigma2 = s;
    }
    if let Some(p) = a.petals {
        spec.petals = p;
    }
    if a.rotate {
        spec.rotation = Some(random_rotation(a.seed));
    }
    spec.fibonacci |= a.fibonacci;
    spec.validate().map_err(usage)?;
    let g = generate(&spec).map_err(numerical)?;
    write_file(&a.output, &cloud_to_csv(&g.cloud))?;
    if let Some(path) = &a.latent {
        write_file(path, &rows_to_csv(g.latent, None))?;
    }
    Ok(())
}

fn pa_config(o: &FitOptions, lambda: f64) -> CliResult<PaConfig<f64>> {
    let mut cfg = PaConfig::new(o.template, lambda);
    cfg.eps_stop = o.eps_stop;
    cfg.max_iter = o.max_iter;
    cfg.isomap_k = o.isomap_k;
    cfg.knot_cap = o.knot_cap;
    cfg.knot_seed = o.seed;
    cfg.init = match (o.template, o.init) {
        (TemplateKind::Interval, _) => InitStrategy::Interval,
        (TemplateKind::Circle, InitArg::Raw) => InitStrategy::CircularRaw,
        (TemplateKind::Circle, InitArg::Isomap) => InitStrategy::CircularIsomap,
        (TemplateKind::Sphere, InitArg::Raw) => InitStrategy::SphericalRaw,
        (TemplateKind::Sphere, InitArg::Isomap) => InitStrategy::SphericalIsomap,
    };
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn grid(g: &GridArgs) -> CliResult<Vec<f64>> {
    log_grid(g.lambda_min, g.lambda_max, g.lambda_count).map_err(usage)
}

fn curve_csv(map: &SplineMap<f64>) -> CliResult<String> {
    let nodes = quadrature_nodes(map.kind(), CURVE_NODES);
    let images = map.eval_many(&nodes).map_err(numerical)?;
    Ok(rows_to_csv(images.to_rows(), None))
}

fn cmd_fit(a: FitArgs) -> CliResult<()> {
    let cloud = read_cloud(&a.opts.input)?;
    let cfg = pa_config(&a.opts, a.lambda)?;
    let fit = pa_fit(&cloud, a.opts.template, &cfg).map_err(numerical)?;
    for w in &fit.trace.warnings {
        eprintln!("warning: {w}");
    }
    write_file(&a.output, &model_to_json(&fit.map))?;
    write_file(
        &a.trace.unwrap_or_else(|| sibling(&a.output, "trace.csv")),
        &trace_to_csv(&fit.trace),
    )?;
    write_file(
        &a.curve.unwrap_or_else(|| sibling(&a.output, "curve.csv")),
        &curve_csv(&fit.map)?,
    )?;
    Ok(())
}

fn cmd_select(a: SelectArgs) -> CliResult<()> {
    let lambdas = grid(&a.grid)?;
    if lambdas.len() < 4 {
        return Err(usage(
            "the inflection rule needs --lambda-count of at least 4",
        ));
    }
    let cloud = read_cloud(&a.opts.input)?;
    let cfg = pa_config(&a.opts, lambdas[0])?;
    let sel = SelectConfig {
        n_mc: a.n_mc,
        seed: a.opts.seed,
        bandwidth: a.bandwidth,
    };
    let (profile, mut fits) =
        select_lambda_with_fits(&cloud, a.opts.template, &cfg, &lambdas, &sel)
            .map_err(numerical)?;
    for (i, reason) in &profile.failures {
        eprintln!("warning: fit at lambda {:e} failed: {reason}", lambdas[*i]);
    }
    let rows = (0..lambdas.len()).map(|i| {
        format!(
            "{},{},{},{},{}",
            fmt_real(profile.lambdas[i]),
            fmt_real(profile.mean_phi[i]),
            fmt_real(profile.sd_phi[i]),
            fmt_real(profile.cv[i]),
            i <= profile.eligible_max_index
        )
    });
    let mut csv = String::from("lambda,mean_phi,sd_phi,cv,eligible\n");
    for r in rows {
        csv.push_str(&r);
        csv.push('\n');
    }
    write_file(&a.output, &csv)?;
    if let Some(path) = &a.model {
        let fit = fits[profile.selected_index]
            .take()
            .expect("selected λ has a fit");
        write_file(path, &model_to_json(&fit.map))?;
    }
    println!(
        "{}",
        serde_json::json!({ "lambda_star": profile.selected_lambda })
    );
    Ok(())
}

fn image_cloud(map: &SplineMap<f64>, n: usize) -> CliResult<PointCloud<f64>> {
    let m = map
        .eval_many(&quadrature_nodes(map.kind(), n))
        .map_err(numerical)?;
    PointCloud::new(m).map_err(numerical)
}

fn truth_cloud(a: &EvalArgs) -> CliResult<Option<PointCloud<f64>>> {
    let spec = match (&a.truth, &a.truth_preset) {
        (Some(m), _) => GeneratorSpec::new(m.parse().map_err(usage)?, 1, 0.0, a.seed),
        (None, Some(p)) => preset(p, a.seed).map_err(usage)?,
        (None, None) => return Ok(None),
    };
    let spec = GeneratorSpec {
        petals: a.petals.unwrap_or(spec.petals),
        ..spec
    };
    spec.validate().map_err(usage)?;
    let truth = generate(&GeneratorSpec {
        n: 1,
        sigma2: 0.0,
        ..spec
    })
    .map_err(numerical)?
    .truth;
    Ok(Some(truth.dense(a.truth_samples)))
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let map: SplineMap<f64> = read_model(&a.model).map_err(usage)?;
    let ref_model: Option<SplineMap<f64>> = a
        .ref_model
        .as_deref()
        .map(read_model)
        .transpose()
        .map_err(usage)?;
    let cloud = a.cloud.as_deref().map(read_cloud).transpose()?;
    let truth = truth_cloud(&a)?;
    let mut out = serde_json::Map::new();
    for metric in &a.metric {
        let (key, value) = match metric {
            MetricArg::L2 => {
                let reference = match (&ref_model, &cloud) {
                    (Some(m), _) => Reference::Map(m),
                    (None, Some(c)) => Reference::Constant(c.mean()),
                    (None, None) => return Err(usage("l2 needs --ref-model or --cloud")),
                };
                (
                    "l2",
                    l2_map_distance(&map, &reference, a.n_quad).map_err(numerical)?,
                )
            }
            MetricArg::Hausdorff => {
                let other = match (&truth, &ref_model, &cloud) {
                    (Some(t), _, _) => t.clone(),
                    (None, Some(m), _) => image_cloud(m, a.samples)?,
                    (None, None, Some(c)) => c.clone(),
                    _ => {
                        return Err(usage(
                            "hausdorff needs --truth, --truth-preset, --ref-model or --cloud",
                        ))
                    }
                };
                let value = hausdorff(&image_cloud(&map, a.samples)?, &other).map_err(numerical)?;
                ("hausdorff", value)
            }
            MetricArg::PcaLine => {
                let c = cloud
                    .as_ref()
                    .ok_or_else(|| usage("pca-line needs --cloud"))?;
                (
                    "pca_line",
                    distance_to_pca_line(&map, c, a.n_quad).map_err(numerical)?,
                )
            }
        };
        out.insert(key.into(), serde_json::json!(value));
    }
    let text = serde_json::Value::Object(out).to_string();
    match &a.output {
        Some(path) => write_file(path, &format!("{text}\n")),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_sweep(a: SweepArgs) -> CliResult<()> {
    let lambdas = grid(&a.grid)?;
    let cloud = read_cloud(&a.opts.input)?;
    let cfg = pa_config(&a.opts, lambdas[0])?;
    let entries =
        lambda_sweep(&cloud, a.opts.template, &cfg, &lambdas, a.warm_start).map_err(usage)?;
    let mean = cloud.mean();
    let mut csv = String::from(
        "lambda,status,iterations,converged,fit_error,penalty,total,l2_to_mean,pca_line\n",
    );
    let mut failed = 0;
    for e in &entries {
        match &e.outcome {
            Ok(fit) => {
                let r = fit.trace.final_record();
                let l2 = l2_map_distance(&fit.map, &Reference::Constant(mean.clone()), a.n_quad)
                    .map_err(numerical)?;
                let pca = match a.opts.template {
                    TemplateKind::Interval => fmt_real(
                        distance_to_pca_line(&fit.map, &cloud, a.n_quad).map_err(numerical)?,
                    ),
                    _ => String::new(),
                };
                csv.push_str(&format!(
                    "{},ok,{},{},{},{},{},{},{}\n",
                    fmt_real(e.lambda),
                    fit.trace.iterations_used,
                    fit.trace.converged,
                    fmt_real(r.fit_error),
                    fmt_real(r.penalty),
                    fmt_real(r.total),
                    fmt_real(l2),
                    pca
                ));
            }
            Err(err) => {
                failed += 1;
                eprintln!("warning: fit at lambda {} failed: {err}", e.lambda);
                csv.push_str(&format!("{},{},,,,,,,\n", fmt_real(e.lambda), err.name()));
            }
        }
    }
    write_file(&a.output, &csv)?;
    if failed == entries.len() {
        let first = entries
            .into_iter()
            .find_map(|e| e.outcome.err())
            .expect("all entries failed");
        return Err(numerical(first));
    }
    Ok(())
}
