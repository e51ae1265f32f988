//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the binary exits non-zero if any criterion fails.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use spnf::kernels::{lanczos_normalizer, sample_covariance, spectrum, Covariance, KernelFamily, KernelSpec, LanczosShape};
use spnf::metrics::{anisotropic_sweep, eval_sweep, psnr, EvalOptions};
use spnf::model::{FieldModel, Mlp, ModelConfig, FORMAT_VERSION};
use spnf::oracle::{filtered_grid, filtered_reference, numeric_spectrum, QuadratureConfig};
use spnf::signals::synth::{harmonics_1d, waves_2d};
use spnf::signals::{valid_region, GridSignal};
use spnf::trainer::{mc_target, train, write_log, TrainConfig, TrainRecord};
use spnf::{checksum64, coord, exec, rng, Error, FormatError};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Variances of the 1D desk benchmark.
const BENCH_VARIANCES: [f64; 3] = [0.0, 1e-3, 1e-2];

fn bench_signal() -> GridSignal {
    harmonics_1d(1024, 8, 7).unwrap()
}

fn bench_config(mc_samples: usize) -> TrainConfig {
    TrainConfig {
        steps: 20_000,
        batch_size: 256,
        family_mix: TrainConfig::only(KernelFamily::Gaussian),
        mc_samples,
        seed: 1,
        log_every: 100,
        model: ModelConfig {
            fourier_features: 64,
            fourier_scale: 1.5,
            hidden_width: 128,
            hidden_layers: 3,
            modulate: true,
        },
        ..TrainConfig::default()
    }
}

fn bench_quad() -> QuadratureConfig {
    QuadratureConfig::with_points(1025)
}

fn model_psnr(model: &FieldModel, signal: &GridSignal, spec: &KernelSpec, quad: &QuadratureConfig) -> f64 {
    let res = signal.resolution().to_vec();
    let region = valid_region(&res, spec);
    let pred = model.render(&res, spec).unwrap();
    let reference = filtered_grid(signal, spec, &res, quad).unwrap();
    psnr(&pred, &reference, 1.0, &region).unwrap()
}

fn iso(family: KernelFamily, dim: usize, var: f64) -> KernelSpec {
    KernelSpec::with_lanczos(family, Covariance::isotropic(dim, var).unwrap(), LanczosShape::default())
}

fn loss_columns(records: &[TrainRecord]) -> String {
    let mut buf = Vec::new();
    write_log(records, &mut buf).unwrap();
    String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

fn ft_equivalence() -> Verdict {
    let quad = QuadratureConfig::default();
    let mut r = rng::stream(101, &[]);
    let mut pass = true;
    let mut parts = Vec::new();
    for family in KernelFamily::ALL {
        let tol = if family == KernelFamily::Lanczos { 5e-3 } else { 1e-4 };
        for dim in 1..=2 {
            let mut worst: f64 = 0.0;
            for _ in 0..20 {
                let cov = sample_covariance(dim, (1e-3, 1e-1), &mut r).unwrap();
                let dir: Vec<f64> = (0..dim).map(|_| r.sample(StandardNormal)).collect();
                let radius = 0.9 * r.random::<f64>();
                let scale = radius / cov.quad(&coord(&dir)).sqrt();
                let b: Vec<f64> = dir.iter().map(|d| d * scale).collect();
                let spec = KernelSpec::new(family, cov);
                let analytic = spectrum(&spec, &b).unwrap();
                let numeric = numeric_spectrum(&spec, &b, &quad).unwrap();
                worst = worst.max((analytic - numeric).abs());
            }
            pass &= worst < tol;
            parts.push(format!("{family}/{dim}D max {worst:.2e} (tol {tol:.0e})"));
        }
    }
    verdict(pass, parts.join(", "))
}

fn normalizer_constants() -> Verdict {
    let published = [0.9499393398, 0.9913304793, 1.2732395447];
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, want) in (1..=3).zip(published) {
        // The published constants are the order-1 masses on the support [0, 2].
        let z = lanczos_normalizer(1.0, n, 2.0);
        pass &= (z - want).abs() < 1e-6;
        parts.push(format!("z_{n} = {z:.10} (|Δ| {:.1e})", (z - want).abs()));
    }
    verdict(pass, parts.join(", "))
}

fn unbiasedness() -> Verdict {
    let signal = bench_signal();
    let quad = QuadratureConfig::with_points(4097);
    let triples = [
        (0.31, KernelFamily::Gaussian, 1e-3),
        (0.62, KernelFamily::Gaussian, 1e-2),
        (0.17, KernelFamily::Box, 4e-3),
        (0.83, KernelFamily::Box, 2e-2),
        (0.45, KernelFamily::Lanczos, 5e-3),
    ];
    let n = 100_000;
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, &(x, family, var)) in triples.iter().enumerate() {
        let spec = iso(family, 1, var);
        let mut r = rng::stream(303, &[i as u64]);
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let v = mc_target(&signal, &spec, &coord(&[x]), &mut r, 1).unwrap()[0];
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / n as f64;
        let sd = (sum2 / n as f64 - mean * mean).max(0.0).sqrt();
        let se = sd / (n as f64).sqrt();
        let reference = filtered_reference(&signal, &spec, &[x], &quad).unwrap()[0];
        let z = (mean - reference) / se;
        pass &= z.abs() <= 3.0;
        parts.push(format!("{family} s2={var}: z {z:+.2}"));
    }
    verdict(pass, parts.join(", "))
}

fn gradient_check() -> Verdict {
    let widths = [32, 32, 32, 32, 3];
    let mut r = rng::stream(404, &[]);
    let mut mlp = Mlp::<f64>::new(&widths, &mut r).unwrap();
    for p in mlp.params_mut().iter_mut() {
        *p += 0.1 * (2.0 * r.random::<f64>() - 1.0);
    }
    let batch = 4;
    let input: Vec<f64> = (0..32 * batch).map(|_| 2.0 * r.random::<f64>() - 1.0).collect();
    let out_grad: Vec<f64> = (0..3 * batch).map(|_| r.sample(StandardNormal)).collect();
    let grad = mlp.gradient(&input, batch, &out_grad).unwrap();
    let objective = |m: &Mlp<f64>| -> f64 {
        let out = m.forward(&input, batch).unwrap();
        out.iter().zip(&out_grad).map(|(a, b)| a * b).sum()
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = r.random_range(0..mlp.param_count());
        let mut plus = mlp.clone();
        plus.params_mut()[k] += h;
        let mut minus = mlp.clone();
        minus.params_mut()[k] -= h;
        let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
        let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-8);
        worst = worst.max(rel);
    }
    verdict(worst < 1e-4, format!("max relative error {worst:.2e} over 100 parameters"))
}

struct Bench {
    model: FieldModel,
    records: Vec<TrainRecord>,
    psnr: Vec<f64>,
}

fn run_bench(mc_samples: usize) -> (Bench, f64) {
    let signal = bench_signal();
    let start = Instant::now();
    let (model, records) = train(&signal, &bench_config(mc_samples)).unwrap();
    let quad = bench_quad();
    let psnr = BENCH_VARIANCES
        .iter()
        .map(|&v| model_psnr(&model, &signal, &iso(KernelFamily::Gaussian, 1, v), &quad))
        .collect();
    (Bench { model, records, psnr }, start.elapsed().as_secs_f64())
}

fn desk_training(bench: &Bench, seconds: f64) -> Verdict {
    let pass = bench.psnr.iter().all(|&p| p >= 40.0) && seconds < 300.0;
    let parts: Vec<String> = BENCH_VARIANCES
        .iter()
        .zip(&bench.psnr)
        .map(|(v, p)| format!("s2={v}: {p:.2} dB"))
        .collect();
    verdict(
        pass,
        format!("{} (>= 40 dB), train+eval {seconds:.0}s on {} thread(s) (< 300s)", parts.join(", "), exec::current_threads()),
    )
}

fn generalization(bench: &Bench) -> Verdict {
    let signal = bench_signal();
    let quad = bench_quad();
    let mut pass = true;
    let mut parts = Vec::new();
    for var in [1e-3, 1e-2] {
        let g = model_psnr(&bench.model, &signal, &iso(KernelFamily::Gaussian, 1, var), &quad);
        for family in [KernelFamily::Box, KernelFamily::Lanczos] {
            let p = model_psnr(&bench.model, &signal, &iso(family, 1, var), &quad);
            pass &= p >= 30.0 && (g - p).abs() <= 4.0;
            parts.push(format!("{family} s2={var}: {p:.2} dB vs gaussian {g:.2} dB"));
        }
    }
    verdict(pass, format!("{} (need >= 30 dB and gap <= 4 dB)", parts.join(", ")))
}

fn mc_count(bench: &Bench) -> Verdict {
    let (many, _) = run_bench(16);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let gain = mean(&many.psnr) - mean(&bench.psnr);
    verdict(
        gain < 1.5,
        format!(
            "mean PSNR N=1 {:.2} dB, N=16 {:.2} dB, improvement {gain:+.2} dB (< 1.5)",
            mean(&bench.psnr),
            mean(&many.psnr)
        ),
    )
}

fn exact_fourier_ablation() -> Verdict {
    let signal = waves_2d(64, 6, 5, 3).unwrap();
    let kernels = anisotropic_sweep(2, KernelFamily::Gaussian, 10, (1e-4, 1e-2), 2024, LanczosShape::default()).unwrap();
    let quad = QuadratureConfig::with_points(65);
    let mean_psnr = |modulate: bool| {
        let mut cfg = bench_config(1);
        cfg.steps = 5_000;
        cfg.model.modulate = modulate;
        let (model, _) = train(&signal, &cfg).unwrap();
        let report = eval_sweep(&model, &signal, &kernels, &quad, &EvalOptions::default()).unwrap();
        report.mean("gaussian", "psnr").unwrap()
    };
    let on = mean_psnr(true);
    let off = mean_psnr(false);
    verdict(
        on - off >= 3.0,
        format!("anisotropic mean PSNR modulated {on:.2} dB, unmodulated {off:.2} dB, gap {:.2} dB (>= 3)", on - off),
    )
}

fn serialization(bench: &Bench) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.spnf");
    bench.model.save(&path).unwrap();
    let loaded = FieldModel::load(&path).unwrap();
    let mut r = rng::stream(909, &[]);
    let mut identical = 0;
    for i in 0..1000 {
        let x = [r.random::<f64>()];
        let spec = match i % 4 {
            0 => KernelSpec::unfiltered(1),
            k => {
                let cov = sample_covariance(1, (1e-5, 1e-1), &mut r).unwrap();
                KernelSpec::new(KernelFamily::ALL[k - 1], cov)
            }
        };
        let a = bench.model.predict(&x, &spec).unwrap();
        let b = loaded.predict(&x, &spec).unwrap();
        identical += usize::from(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    let bytes = std::fs::read(&path).unwrap();
    let mut corrupt = bytes.clone();
    let at = bytes.len() - 100;
    corrupt[at] ^= 0x01;
    let checksum_fires = matches!(
        FieldModel::from_bytes(&corrupt),
        Err(Error::Format(FormatError::ChecksumMismatch { .. }))
    );
    let mut wrong_version = bytes.clone();
    wrong_version[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    let version_fires = matches!(
        FieldModel::from_bytes(&wrong_version),
        Err(Error::Format(FormatError::VersionMismatch { .. }))
    );
    let truncation_fires = matches!(
        FieldModel::from_bytes(&bytes[..bytes.len() / 2]),
        Err(Error::Format(FormatError::Truncated { .. }))
    );
    verdict(
        identical == 1000 && checksum_fires && version_fires && truncation_fires,
        format!(
            "{identical}/1000 bit-identical, checksum error {checksum_fires}, version error {version_fires}, truncation error {truncation_fires}"
        ),
    )
}

fn rerun_bench() -> (FieldModel, Vec<TrainRecord>) {
    let signal = bench_signal();
    #[cfg(feature = "parallel")]
    {
        // Repeat on a different worker count to show the result does not depend on it.
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        pool.install(|| train(&signal, &bench_config(1)).unwrap())
    }
    #[cfg(not(feature = "parallel"))]
    {
        train(&signal, &bench_config(1)).unwrap()
    }
}

fn determinism(bench: &Bench) -> Verdict {
    let (model, records) = rerun_bench();
    let same_log = loss_columns(&records) == loss_columns(&bench.records);
    let (a, b) = (checksum64(&bench.model.to_bytes()), checksum64(&model.to_bytes()));
    verdict(
        same_log && a == b,
        format!("loss CSV identical {same_log}, checkpoint checksums {a:016x} / {b:016x}"),
    )
}

fn main() {
    // The desk benchmark budget is stated for a single worker.
    exec::init_threads(1);
    println!("acceptance ({} backend)", exec::MODE);
    let mut failures = Vec::new();
    let mut run = |id: u32, name: &str, f: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let v = f();
        println!(
            "criterion {id:>2} {} {name}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
        if !v.pass {
            failures.push(id);
        }
    };
    run(1, "FT equivalence", &mut ft_equivalence);
    run(2, "normalizer constants", &mut normalizer_constants);
    run(3, "estimator unbiasedness", &mut unbiasedness);
    run(4, "gradient correctness", &mut gradient_check);
    let mut bench = None;
    run(5, "desk-scale training", &mut || {
        let (b, seconds) = run_bench(1);
        let v = desk_training(&b, seconds);
        bench = Some(b);
        v
    });
    let bench = bench.unwrap();
    run(6, "filter generalization", &mut || generalization(&bench));
    run(7, "MC-count insensitivity", &mut || mc_count(&bench));
    run(8, "exact-Fourier ablation", &mut exact_fourier_ablation);
    run(9, "serialization", &mut || serialization(&bench));
    run(10, "determinism", &mut || determinism(&bench));
    if failures.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failures:?}");
        std::process::exit(1);
    }
}
