//! Monte Carlo supervision: random points, random filters, single-sample
//! estimates of the filtered signal, and the minibatch MSE loop.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::kernels::{sample_covariance, sample_offset, KernelFamily, KernelSpec, LanczosShape};
use crate::model::{adam_step, AdamConfig, AdamState, FieldModel, ModelConfig};
use crate::signals::GridSignal;
use crate::{exec, rng, Coord, Error, Result};

/// Samples per work item. Batches are split into chunks of this size, each
/// with its own random stream, so results do not depend on the thread count.
pub const CHUNK: usize = 64;

/// Chunks whose gradients are held in memory at once before the ordered
/// reduction.
const WAVE: usize = 16;

const TAG_BATCH: u64 = 0xba7c;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub base_lr: f64,
    /// Learning rate at the final step as a fraction of `base_lr`.
    pub decay_fraction: f64,
    /// Eigenvalue range for sampled covariances, drawn log-uniformly.
    pub var_range: (f64, f64),
    /// Relative weights of Gaussian, Box and Lanczos filters.
    pub family_mix: [f64; 3],
    /// Probability of an unfiltered (zero covariance) sample.
    pub unfiltered_prob: f64,
    pub seed: u64,
    /// Monte Carlo samples per target.
    pub mc_samples: usize,
    /// Record the loss every this many steps (the last step is always recorded).
    pub log_every: u64,
    pub lanczos_order: f64,
    #[serde(skip)]
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 20_000,
            batch_size: 1024,
            base_lr: 5e-4,
            decay_fraction: 1e-3,
            var_range: (1e-5, 2e-1),
            family_mix: [1.0, 1.0, 1.0],
            unfiltered_prob: 0.1,
            seed: 0,
            mc_samples: 1,
            log_every: 100,
            lanczos_order: 2.0,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidInput(msg));
        if self.steps == 0 || self.batch_size == 0 || self.mc_samples == 0 || self.log_every == 0 {
            return fail("steps, batch_size, mc_samples and log_every must be positive".into());
        }
        if !(self.base_lr > 0.0 && self.decay_fraction > 0.0) {
            return fail("learning rate and decay fraction must be positive".into());
        }
        let (lo, hi) = self.var_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return fail(format!("variance range {lo}..{hi} invalid"));
        }
        if self.family_mix.iter().any(|w| !(*w >= 0.0)) || self.family_mix.iter().sum::<f64>() <= 0.0 {
            return fail(format!("family mix {:?} is not a distribution", self.family_mix));
        }
        if !(0.0..=1.0).contains(&self.unfiltered_prob) {
            return fail(format!("unfiltered probability {} outside [0, 1]", self.unfiltered_prob));
        }
        LanczosShape::new(self.lanczos_order)?;
        Ok(())
    }

    /// Mix with a single family.
    pub fn only(family: KernelFamily) -> [f64; 3] {
        let mut mix = [0.0; 3];
        mix[family as usize] = 1.0;
        mix
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainRecord {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub wall_ms: f64,
}

/// Training points with their filters and targets.
#[derive(Clone, Debug)]
pub struct Batch {
    pub xs: Vec<Coord>,
    pub specs: Vec<KernelSpec>,
    /// `channels` values per point.
    pub targets: Vec<f64>,
    pub channels: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// Average of `n` importance-weighted samples of the signal around `x`.
/// Unbiased for `(K_Σ * f)(x)` (the truncated kernel for Lanczos).
pub fn mc_target<R: Rng + ?Sized>(
    signal: &GridSignal,
    spec: &KernelSpec,
    x: &Coord,
    rng: &mut R,
    n: usize,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; signal.channels()];
    mc_target_into(signal, spec, x, rng, n, &mut out)?;
    Ok(out)
}

fn mc_target_into<R: Rng + ?Sized>(
    signal: &GridSignal,
    spec: &KernelSpec,
    x: &Coord,
    rng: &mut R,
    n: usize,
    out: &mut [f64],
) -> Result<()> {
    if spec.is_unfiltered() {
        signal.sample_into(x, out);
        return Ok(());
    }
    if n == 0 {
        return Err(Error::invalid("mc_target needs at least one sample"));
    }
    let mut tmp = vec![0.0; out.len()];
    out.fill(0.0);
    for _ in 0..n {
        let (offset, w) = sample_offset(spec, rng)?;
        let mut p = *x;
        for k in 0..spec.dim() {
            p[k] -= offset[k];
        }
        signal.sample_into(&p, &mut tmp);
        for (o, v) in out.iter_mut().zip(&tmp) {
            *o += w * v;
        }
    }
    let inv = 1.0 / n as f64;
    out.iter_mut().for_each(|o| *o *= inv);
    Ok(())
}

fn sample_spec<R: Rng + ?Sized>(dim: usize, config: &TrainConfig, rng: &mut R) -> Result<KernelSpec> {
    if rng.random::<f64>() < config.unfiltered_prob {
        return Ok(KernelSpec::unfiltered(dim));
    }
    let total: f64 = config.family_mix.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut family = KernelFamily::Gaussian;
    for (f, &w) in KernelFamily::ALL.iter().zip(&config.family_mix) {
        if w > 0.0 {
            family = *f;
            if u < w {
                break;
            }
            u -= w;
        }
    }
    let cov = sample_covariance(dim, config.var_range, rng)?;
    Ok(KernelSpec::with_lanczos(family, cov, LanczosShape::new(config.lanczos_order)?))
}

/// Draws `config.batch_size` training triples with a single random stream.
pub fn sample_batch<R: Rng + ?Sized>(signal: &GridSignal, config: &TrainConfig, rng: &mut R) -> Result<Batch> {
    sample_n(signal, config, config.batch_size, rng)
}

fn sample_n<R: Rng + ?Sized>(signal: &GridSignal, config: &TrainConfig, n: usize, rng: &mut R) -> Result<Batch> {
    let dim = signal.dim();
    let channels = signal.channels();
    let mut batch = Batch {
        xs: Vec::with_capacity(n),
        specs: Vec::with_capacity(n),
        targets: vec![0.0; n * channels],
        channels,
    };
    for t in batch.targets.chunks_exact_mut(channels) {
        let mut x = [0.0; crate::MAX_DIM];
        for c in x.iter_mut().take(dim) {
            *c = rng.random::<f64>();
        }
        let spec = sample_spec(dim, config, rng)?;
        mc_target_into(signal, &spec, &x, rng, config.mc_samples, t)?;
        batch.xs.push(x);
        batch.specs.push(spec);
    }
    Ok(batch)
}

fn embed_batch(model: &FieldModel, batch: &Batch) -> Result<Vec<f32>> {
    let e = model.basis.embed_len();
    let mut input = vec![0f32; batch.len() * e];
    for ((x, spec), row) in batch.xs.iter().zip(&batch.specs).zip(input.chunks_exact_mut(e)) {
        let amps = model.amplitudes(spec)?;
        model.embed_into(x, amps.as_deref(), row);
    }
    Ok(input)
}

/// Sum of squared errors over a batch, plus `∂/∂pred` of that sum scaled by
/// `grad_scale`.
fn residuals(pred: &[f32], targets: &[f64], grad_scale: f64) -> (f64, Vec<f32>) {
    let mut sse = 0.0;
    let grad = pred
        .iter()
        .zip(targets)
        .map(|(&p, &t)| {
            let r = f64::from(p) - t;
            sse += r * r;
            (2.0 * grad_scale * r) as f32
        })
        .collect();
    (sse, grad)
}

/// Mean over the batch of `‖prediction − target‖²`.
pub fn loss(model: &FieldModel, batch: &Batch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("loss of an empty batch"));
    }
    if batch.channels != model.channels() {
        return Err(Error::Shape {
            what: "target channels",
            expected: model.channels(),
            actual: batch.channels,
        });
    }
    let pred = model.mlp.forward(&embed_batch(model, batch)?, batch.len())?;
    let (sse, _) = residuals(&pred, &batch.targets, 0.0);
    let l = sse / batch.len() as f64;
    if !l.is_finite() {
        return Err(Error::Diverged {
            step: 0,
            what: "non-finite loss".into(),
        });
    }
    Ok(l)
}

/// Trains a fresh model on `signal`.
pub fn train(signal: &GridSignal, config: &TrainConfig) -> Result<(FieldModel, Vec<TrainRecord>)> {
    train_with(signal, config, |_| {})
}

/// [`train`] with a callback invoked on each emitted record.
pub fn train_with(
    signal: &GridSignal,
    config: &TrainConfig,
    mut on_record: impl FnMut(&TrainRecord),
) -> Result<(FieldModel, Vec<TrainRecord>)> {
    config.validate()?;
    let mut model = FieldModel::new(signal.dim(), signal.channels(), &config.model, config.seed)?;
    model.meta = serde_json::json!({
        "train": config,
        "model": {
            "fourier_features": config.model.fourier_features,
            "fourier_scale": config.model.fourier_scale,
            "hidden_width": config.model.hidden_width,
            "hidden_layers": config.model.hidden_layers,
            "modulate": config.model.modulate,
        },
        "rng": {
            "generator": "chacha8",
            "root_seed": config.seed,
            "streams": "per (step, chunk)",
            "chunk": CHUNK,
            "steps_consumed": config.steps,
        },
        "signal": { "resolution": signal.resolution(), "channels": signal.channels() },
    })
    .to_string();

    let n_params = model.mlp.param_count();
    let mut adam = AdamState::<f32>::new(
        AdamConfig::new(config.base_lr, config.decay_fraction, config.steps),
        n_params,
    );
    let chunks = config.batch_size.div_ceil(CHUNK);
    let inv_batch = 1.0 / config.batch_size as f64;
    let mut grad = vec![0f64; n_params];
    let mut grad32 = vec![0f32; n_params];
    let mut records = Vec::new();
    let start = Instant::now();

    for step in 0..config.steps {
        let lr = adam.current_lr()?;
        grad.fill(0.0);
        let mut sse = 0.0;
        for wave in (0..chunks).step_by(WAVE) {
            let wave_len = WAVE.min(chunks - wave);
            let model = &model;
            let parts = exec::map_indexed(wave_len, |k| -> Result<(f64, Vec<f32>)> {
                let c = wave + k;
                let n = CHUNK.min(config.batch_size - c * CHUNK);
                let mut r = rng::stream(config.seed, &[TAG_BATCH, step, c as u64]);
                let batch = sample_n(signal, config, n, &mut r)?;
                let input = embed_batch(model, &batch)?;
                let trace = model.mlp.forward_trace(&input, n)?;
                let (part_sse, out_grad) = residuals(trace.output(), &batch.targets, inv_batch);
                let mut g = vec![0f32; n_params];
                model.mlp.backward(&trace, &out_grad, &mut g)?;
                Ok((part_sse, g))
            });
            for part in parts {
                let (part_sse, g) = part?;
                sse += part_sse;
                for (a, v) in grad.iter_mut().zip(&g) {
                    *a += f64::from(*v);
                }
            }
        }
        let loss = sse * inv_batch;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                step,
                what: "non-finite loss".into(),
            });
        }
        for (d, s) in grad32.iter_mut().zip(&grad) {
            *d = *s as f32;
        }
        adam_step(&mut adam, &grad32, model.mlp.params_mut())?;
        if step % config.log_every == 0 || step + 1 == config.steps {
            let rec = TrainRecord {
                step,
                lr,
                loss,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            };
            on_record(&rec);
            records.push(rec);
        }
    }
    Ok((model, records))
}

/// Writes the training log as CSV `step,lr,loss,wall_ms`.
pub fn write_log<W: Write>(records: &[TrainRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "step,lr,loss,wall_ms")?;
    for r in records {
        writeln!(out, "{},{:e},{:e},{:.3}", r.step, r.lr, r.loss, r.wall_ms)?;
    }
    Ok(())
}

pub fn save_log(records: &[TrainRecord], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_log(records, std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Covariance;

    fn ramp() -> GridSignal {
        GridSignal::from_fn(&[16], 1, |x, v| v[0] = (x[0] * 3.0).sin() as f32).unwrap()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            steps: 5,
            batch_size: 100,
            model: ModelConfig {
                fourier_features: 4,
                fourier_scale: 2.0,
                hidden_width: 8,
                hidden_layers: 1,
                modulate: true,
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn unfiltered_target_is_the_sample() {
        let s = ramp();
        let mut r = rng::stream(1, &[]);
        let x = [0.37, 0.0, 0.0];
        assert_eq!(
            mc_target(&s, &KernelSpec::unfiltered(1), &x, &mut r, 3).unwrap(),
            s.sample(&[0.37]).unwrap()
        );
    }

    #[test]
    fn constant_signal_targets_are_exact() {
        let s = GridSignal::from_fn(&[8, 8], 2, |_, v| v.copy_from_slice(&[0.25, -1.5])).unwrap();
        let mut r = rng::stream(2, &[]);
        for family in [KernelFamily::Gaussian, KernelFamily::Box] {
            let spec = KernelSpec::new(family, Covariance::isotropic(2, 0.01).unwrap());
            for n in [1, 5] {
                let t = mc_target(&s, &spec, &[0.1, 0.9, 0.0], &mut r, n).unwrap();
                assert!((t[0] - 0.25).abs() < 1e-6 && (t[1] + 1.5).abs() < 1e-6, "{t:?}");
            }
        }
    }

    #[test]
    fn rho_one_gives_only_sentinels() {
        let cfg = TrainConfig {
            unfiltered_prob: 1.0,
            ..tiny_config()
        };
        let b = sample_batch(&ramp(), &cfg, &mut rng::stream(3, &[])).unwrap();
        assert!(b.specs.iter().all(|s| s.is_unfiltered()));
    }

    #[test]
    fn gaussian_only_mix() {
        let cfg = TrainConfig {
            family_mix: TrainConfig::only(KernelFamily::Gaussian),
            unfiltered_prob: 0.0,
            ..tiny_config()
        };
        let b = sample_batch(&ramp(), &cfg, &mut rng::stream(4, &[])).unwrap();
        assert!(b.specs.iter().all(|s| s.family == KernelFamily::Gaussian && !s.is_unfiltered()));
    }

    #[test]
    fn loss_basics() {
        let s = ramp();
        let cfg = tiny_config();
        let model = FieldModel::new(1, 1, &cfg.model, 0).unwrap();
        let mut b = sample_batch(&s, &cfg, &mut rng::stream(5, &[])).unwrap();
        let pred = model.mlp.forward(&embed_batch(&model, &b).unwrap(), b.len()).unwrap();
        b.targets = pred.iter().map(|&p| f64::from(p)).collect();
        assert_eq!(loss(&model, &b).unwrap(), 0.0);

        let mut zero = model.clone();
        zero.mlp.params_mut().fill(0.0);
        b.targets.fill(1.0);
        assert_eq!(loss(&zero, &b).unwrap(), 1.0);
    }

    #[test]
    fn loss_ignores_batch_order() {
        let s = ramp();
        let cfg = tiny_config();
        let model = FieldModel::new(1, 1, &cfg.model, 9).unwrap();
        let b = sample_batch(&s, &cfg, &mut rng::stream(6, &[])).unwrap();
        let mut rev = b.clone();
        rev.xs.reverse();
        rev.specs.reverse();
        rev.targets.reverse();
        let (a, r) = (loss(&model, &b).unwrap(), loss(&model, &rev).unwrap());
        assert!((a - r).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn config_validation() {
        assert!(tiny_config().validate().is_ok());
        for bad in [
            TrainConfig { steps: 0, ..tiny_config() },
            TrainConfig { var_range: (0.0, 1.0), ..tiny_config() },
            TrainConfig { family_mix: [0.0; 3], ..tiny_config() },
            TrainConfig { unfiltered_prob: 1.5, ..tiny_config() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn records_and_log_format() {
        let cfg = TrainConfig { log_every: 2, ..tiny_config() };
        let (_, recs) = train(&ramp(), &cfg).unwrap();
        assert_eq!(recs.iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 2, 4]);
        assert_eq!(recs[0].lr, cfg.base_lr);
        let mut buf = Vec::new();
        write_log(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,lr,loss,wall_ms\n0,"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn same_seed_same_parameters() {
        let cfg = tiny_config();
        let (a, _) = train(&ramp(), &cfg).unwrap();
        let (b, _) = train(&ramp(), &cfg).unwrap();
        assert_eq!(a.param_checksum(), b.param_checksum());
        let (c, _) = train(&ramp(), &TrainConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.param_checksum(), c.param_checksum());
    }
}
