//! Run configuration: a flat TOML file plus `--key value` overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use spnf::kernels::{Covariance, KernelFamily, KernelSpec, LanczosShape};
use spnf::metrics::{anisotropic_sweep, isotropic_sweep, EvalOptions};
use spnf::model::ModelConfig;
use spnf::oracle::QuadratureConfig;
use spnf::signals::Interpolation;
use spnf::trainer::TrainConfig;

/// Every key a config file may contain. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Source signal (PPM, PFM or SPNG).
    pub signal: PathBuf,
    /// "multilinear" or "nearest".
    pub interpolation: String,
    /// Checkpoint to evaluate; `train` writes `<out_dir>/model.spnf`.
    pub model: Option<PathBuf>,
    pub out_dir: PathBuf,

    pub steps: u64,
    pub batch_size: usize,
    pub base_lr: f64,
    pub decay_fraction: f64,
    pub var_min: f64,
    pub var_max: f64,
    pub mix_gaussian: f64,
    pub mix_box: f64,
    pub mix_lanczos: f64,
    pub unfiltered_prob: f64,
    pub seed: u64,
    pub mc_samples: usize,
    pub log_every: u64,
    pub lanczos_order: f64,

    pub fourier_features: usize,
    pub fourier_scale: f64,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub modulate: bool,

    /// Families evaluated by `eval`.
    pub eval_families: Vec<String>,
    /// Isotropic variances evaluated by `eval` (0 = unfiltered).
    pub eval_variances: Vec<f64>,
    /// Number of random anisotropic covariances per family.
    pub eval_anisotropic: usize,
    pub eval_seed: u64,
    pub eval_var_min: f64,
    pub eval_var_max: f64,
    /// Extra covariances in packed form (1, 3 or 6 numbers).
    pub eval_covariances: Vec<Vec<f64>>,
    /// Report MSE and sign IoU instead of PSNR.
    pub sdf: bool,
    pub peak: f64,

    pub quad_points: usize,
    pub quad_points_3d: usize,
    pub quad_gaussian_radius: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let m = ModelConfig::default();
        let q = QuadratureConfig::default();
        RunConfig {
            signal: PathBuf::new(),
            interpolation: "multilinear".into(),
            model: None,
            out_dir: PathBuf::from("out"),
            steps: t.steps,
            batch_size: t.batch_size,
            base_lr: t.base_lr,
            decay_fraction: t.decay_fraction,
            var_min: t.var_range.0,
            var_max: t.var_range.1,
            mix_gaussian: t.family_mix[0],
            mix_box: t.family_mix[1],
            mix_lanczos: t.family_mix[2],
            unfiltered_prob: t.unfiltered_prob,
            seed: t.seed,
            mc_samples: t.mc_samples,
            log_every: t.log_every,
            lanczos_order: t.lanczos_order,
            fourier_features: m.fourier_features,
            fourier_scale: m.fourier_scale,
            hidden_width: m.hidden_width,
            hidden_layers: m.hidden_layers,
            modulate: m.modulate,
            eval_families: vec!["gaussian".into(), "box".into(), "lanczos".into()],
            eval_variances: vec![0.0, 1e-4, 1e-3, 1e-2, 1e-1],
            eval_anisotropic: 0,
            eval_seed: 2024,
            eval_var_min: 1e-4,
            eval_var_max: 1e-1,
            eval_covariances: Vec::new(),
            sdf: false,
            peak: 1.0,
            quad_points: q.points,
            quad_points_3d: q.points_3d,
            quad_gaussian_radius: q.gaussian_radius,
        }
    }
}

/// Parses an override value as TOML, falling back to a bare string.
fn override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Splits `--key value` pairs; keys use underscores or dashes.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, toml::Value)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let Some(key) = flag.strip_prefix("--") else {
            bail!("expected --key, found {flag:?}");
        };
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().with_context(|| format!("missing value for --{key}"))?;
                (key.to_string(), v.clone())
            }
        };
        out.push((key.replace('-', "_"), override_value(&value)));
    }
    Ok(out)
}

impl RunConfig {
    /// Reads `path` (if any) and applies `overrides` on top.
    pub fn load(path: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for (k, v) in overrides {
            table.insert(k.clone(), v.clone());
        }
        let base = path.and_then(Path::parent).unwrap_or(Path::new(""));
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .with_context(|| match path {
                Some(p) => format!("invalid config {}", p.display()),
                None => "invalid configuration".into(),
            })?;
        // Relative paths in a config file are relative to the file; overrides
        // are relative to the working directory.
        let from_file = |key: &str| !overrides.iter().any(|(k, _)| k == key);
        for (key, p) in [("signal", &mut cfg.signal), ("out_dir", &mut cfg.out_dir)] {
            if from_file(key) && !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(m) = cfg.model.as_mut().filter(|m| m.is_relative() && from_file("model")) {
            *m = base.join(&*m);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn interpolation(&self) -> Result<Interpolation> {
        Ok(self.interpolation.parse()?)
    }

    pub fn lanczos_shape(&self) -> Result<LanczosShape> {
        Ok(LanczosShape::new(self.lanczos_order)?)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            base_lr: self.base_lr,
            decay_fraction: self.decay_fraction,
            var_range: (self.var_min, self.var_max),
            family_mix: [self.mix_gaussian, self.mix_box, self.mix_lanczos],
            unfiltered_prob: self.unfiltered_prob,
            seed: self.seed,
            mc_samples: self.mc_samples,
            log_every: self.log_every,
            lanczos_order: self.lanczos_order,
            model: ModelConfig {
                fourier_features: self.fourier_features,
                fourier_scale: self.fourier_scale,
                hidden_width: self.hidden_width,
                hidden_layers: self.hidden_layers,
                modulate: self.modulate,
            },
        }
    }

    pub fn quadrature(&self) -> QuadratureConfig {
        QuadratureConfig {
            points: self.quad_points,
            points_3d: self.quad_points_3d,
            gaussian_radius: self.quad_gaussian_radius,
            ..QuadratureConfig::default()
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            peak: self.peak,
            sdf: self.sdf,
        }
    }

    /// The kernels `eval` sweeps over, in a fixed order.
    pub fn eval_kernels(&self, dim: usize) -> Result<Vec<KernelSpec>> {
        let shape = self.lanczos_shape()?;
        let mut out = Vec::new();
        for name in &self.eval_families {
            let family: KernelFamily = name.parse()?;
            out.extend(isotropic_sweep(dim, family, &self.eval_variances, shape)?);
            for packed in &self.eval_covariances {
                out.push(KernelSpec::with_lanczos(family, Covariance::from_packed(dim, packed)?, shape));
            }
            if self.eval_anisotropic > 0 {
                out.extend(anisotropic_sweep(
                    dim,
                    family,
                    self.eval_anisotropic,
                    (self.eval_var_min, self.eval_var_max),
                    self.eval_seed,
                    shape,
                )?);
            }
        }
        Ok(out)
    }
}

/// Packed symmetric covariance from `a,b,c` syntax.
pub fn parse_cov(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad covariance entry {s:?}")))
        .collect()
}

/// Dimension implied by a packed covariance length.
pub fn packed_dim(len: usize) -> Result<usize> {
    match len {
        1 => Ok(1),
        3 => Ok(2),
        6 => Ok(3),
        n => bail!("a packed covariance has 1, 3 or 6 entries, got {n}"),
    }
}
