//! `spnf`: train, render and evaluate prefiltered neural fields.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use spnf::kernels::{spectrum, Covariance, KernelFamily, KernelSpec, LanczosShape};
use spnf::metrics::eval_sweep;
use spnf::model::FieldModel;
use spnf::oracle::{filtered_grid, QuadratureConfig};
use spnf::signals::{load_signal, write_signal};
use spnf::{exec, trainer};

use config::{packed_dim, parse_cov, parse_overrides, RunConfig};

#[derive(Parser)]
#[command(name = "spnf", version, about = "Neural fields with analytically prefiltered Fourier features")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "SPNF_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes model.spnf, train_log.csv and config.toml.
    Train(ConfigArgs),
    /// Render a trained model under a filter.
    Filter(FilterArgs),
    /// Compare model renders against quadrature references; writes eval.csv.
    Eval(ConfigArgs),
    /// Filter a signal by brute-force quadrature.
    Oracle(OracleArgs),
    /// Dump a kernel's frequency response along one direction as CSV.
    Spectrum(SpectrumArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Config overrides as `--key value` pairs.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, default_value = "gaussian")]
    family: KernelFamily,
    /// Packed symmetric covariance: `v`, `xx,xy,yy` or `xx,xy,xz,yy,yz,zz`.
    #[arg(long, allow_hyphen_values = true)]
    cov: String,
    /// Lanczos order.
    #[arg(long, default_value_t = 2.0)]
    order: f64,
}

impl KernelArgs {
    fn spec(&self) -> Result<KernelSpec> {
        let packed = parse_cov(&self.cov)?;
        let dim = packed_dim(packed.len())?;
        let cov = Covariance::from_packed(dim, &packed).with_context(|| format!("covariance {}", self.cov))?;
        Ok(KernelSpec::with_lanczos(self.family, cov, LanczosShape::new(self.order)?))
    }
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Output resolution, comma separated (defaults to the training resolution).
    #[arg(long)]
    res: Option<String>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    signal: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Quadrature nodes per axis.
    #[arg(long, default_value_t = QuadratureConfig::default().points)]
    points: usize,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct SpectrumArgs {
    #[command(flatten)]
    kernel: KernelArgs,
    /// Direction of the frequency ray (defaults to the first axis).
    #[arg(long, allow_hyphen_values = true)]
    dir: Option<String>,
    /// Largest |b| sampled.
    #[arg(long, default_value_t = 64.0)]
    max_freq: f64,
    #[arg(long, default_value_t = 257)]
    samples: usize,
    #[arg(short, long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        exec::init_threads(n.max(1));
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(&load_config(&a)?),
        Command::Filter(a) => cmd_filter(&a),
        Command::Eval(a) => cmd_eval(&load_config(&a)?),
        Command::Oracle(a) => cmd_oracle(&a),
        Command::Spectrum(a) => cmd_spectrum(&a),
    }
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    RunConfig::load(args.config.as_deref(), &parse_overrides(&args.overrides)?)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_configured_signal(cfg: &RunConfig) -> Result<spnf::signals::GridSignal> {
    if cfg.signal.as_os_str().is_empty() {
        bail!("no signal given (set `signal` in the config or pass --signal)");
    }
    let mut signal = load_signal(&cfg.signal).with_context(|| format!("loading signal {}", cfg.signal.display()))?;
    signal.interpolation = cfg.interpolation()?;
    Ok(signal)
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let signal = load_configured_signal(cfg)?;
    create_dir(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("config.toml"), cfg.to_toml())?;
    let train_cfg = cfg.train_config();
    let (mut model, records) = trainer::train_with(&signal, &train_cfg, |r| {
        eprintln!("step {:>7}  lr {:.3e}  loss {:.4e}  {:.1}s", r.step, r.lr, r.loss, r.wall_ms / 1e3);
    })?;
    let mut meta: serde_json::Value = serde_json::from_str(&model.meta)?;
    meta["config"] = serde_json::Value::String(cfg.to_toml());
    model.meta = meta.to_string();
    let path = cfg.model.clone().unwrap_or_else(|| cfg.out_dir.join("model.spnf"));
    model.save(&path)?;
    trainer::save_log(&records, &cfg.out_dir.join("train_log.csv"))?;
    println!("{} checksum {:016x}", path.display(), spnf::checksum64(&std::fs::read(&path)?));
    Ok(())
}

fn load_model(path: &Path) -> Result<FieldModel> {
    FieldModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

/// Resolution recorded in the checkpoint metadata by `train`.
fn trained_resolution(model: &FieldModel) -> Option<Vec<usize>> {
    let meta: serde_json::Value = serde_json::from_str(&model.meta).ok()?;
    meta["signal"]["resolution"]
        .as_array()?
        .iter()
        .map(|v| v.as_u64().map(|v| v as usize))
        .collect()
}

fn parse_res(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| s.trim().parse::<usize>().with_context(|| format!("bad resolution {s:?}")))
        .collect()
}

fn cmd_filter(a: &FilterArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let spec = a.kernel.spec()?;
    if spec.dim() != model.dim() {
        bail!("covariance is {}D but the model is {}D", spec.dim(), model.dim());
    }
    let res = match &a.res {
        Some(r) => parse_res(r)?,
        None => trained_resolution(&model).context("model has no recorded resolution; pass --res")?,
    };
    if res.len() != model.dim() {
        bail!("resolution {res:?} does not match the {}D model", model.dim());
    }
    let grid = model.render(&res, &spec)?;
    write_signal(&grid, &a.out)?;
    Ok(())
}

fn cmd_eval(cfg: &RunConfig) -> Result<()> {
    let signal = load_configured_signal(cfg)?;
    let model_path = cfg.model.clone().unwrap_or_else(|| cfg.out_dir.join("model.spnf"));
    let model = load_model(&model_path)?;
    let kernels = cfg.eval_kernels(signal.dim())?;
    let report = eval_sweep(&model, &signal, &kernels, &cfg.quadrature(), &cfg.eval_options())?;
    create_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("eval.csv");
    report.save_csv(&path)?;
    let mut stdout = std::io::stdout().lock();
    for r in &report.rows {
        writeln!(stdout, "{:<9} {:<28} {:<12} {:>10.4}", r.family, r.sigma_desc, r.metric, r.value)?;
    }
    Ok(())
}

fn cmd_oracle(a: &OracleArgs) -> Result<()> {
    let signal = load_signal(&a.signal).with_context(|| format!("loading signal {}", a.signal.display()))?;
    let spec = a.kernel.spec()?;
    let quad = QuadratureConfig::with_points(a.points);
    let grid = filtered_grid(&signal, &spec, signal.resolution(), &quad)?;
    write_signal(&grid, &a.out)?;
    Ok(())
}

fn cmd_spectrum(a: &SpectrumArgs) -> Result<()> {
    let spec = a.kernel.spec()?;
    let n = spec.dim();
    let mut dir = match &a.dir {
        Some(d) => parse_cov(d)?,
        None => {
            let mut d = vec![0.0; n];
            d[0] = 1.0;
            d
        }
    };
    if dir.len() != n {
        bail!("direction has {} components, covariance is {n}D", dir.len());
    }
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        bail!("direction must be nonzero");
    }
    dir.iter_mut().for_each(|v| *v /= norm);
    if a.samples < 2 {
        bail!("need at least two samples");
    }
    let mut csv = String::from("b_norm,amplitude\n");
    for i in 0..a.samples {
        let t = a.max_freq * i as f64 / (a.samples - 1) as f64;
        let b: Vec<f64> = dir.iter().map(|d| d * t).collect();
        csv.push_str(&format!("{t},{}\n", spectrum(&spec, &b)?));
    }
    std::fs::write(&a.out, csv).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}
