//! Image and SDF metrics, and evaluation sweeps over filters.

use std::fmt::Write as _;
use std::path::Path;

use crate::kernels::{sample_covariance, Covariance, KernelFamily, KernelSpec, LanczosShape};
use crate::model::FieldModel;
use crate::oracle::{filtered_grid, QuadratureConfig};
use crate::signals::{valid_region, GridSignal, Region};
use crate::{rng, Error, Result};

fn check_pair(pred: &GridSignal, reference: &GridSignal, region: &Region) -> Result<()> {
    if !pred.same_shape(reference) {
        return Err(Error::invalid(format!(
            "grid shapes differ: {:?}x{} vs {:?}x{}",
            pred.resolution(),
            pred.channels(),
            reference.resolution(),
            reference.channels()
        )));
    }
    if region.dim != pred.dim() || (0..region.dim).any(|a| region.hi[a] > pred.resolution()[a]) {
        return Err(Error::invalid(format!("region {region} outside the grid")));
    }
    Ok(())
}

fn region_indices<'a>(grid: &'a GridSignal, region: &'a Region) -> impl Iterator<Item = usize> + 'a {
    (0..grid.len()).filter(move |&i| region.contains(&grid.unravel(i)))
}

/// Mean squared error over the region, averaged over channels.
pub fn mse(pred: &GridSignal, reference: &GridSignal, region: &Region) -> Result<f64> {
    check_pair(pred, reference, region)?;
    if region.is_empty() {
        return Err(Error::invalid("metric over an empty region"));
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for i in region_indices(pred, region) {
        for (a, b) in pred.value(i).iter().zip(reference.value(i)) {
            let d = f64::from(*a) - f64::from(*b);
            sum += d * d;
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// `10·log10(peak² / MSE)`; identical grids give `+∞`.
pub fn psnr(pred: &GridSignal, reference: &GridSignal, peak: f64, region: &Region) -> Result<f64> {
    let e = mse(pred, reference, region)?;
    Ok(if e == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / e).log10()
    })
}

/// Intersection over union of the negative (inside) sets of two SDFs.
/// Two empty insides give 1.
pub fn sign_iou(pred: &GridSignal, reference: &GridSignal, region: &Region) -> Result<f64> {
    check_pair(pred, reference, region)?;
    if pred.channels() != 1 {
        return Err(Error::invalid("sign IoU needs single-channel grids"));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for i in region_indices(pred, region) {
        let (a, b) = (pred.value(i)[0] < 0.0, reference.value(i)[0] < 0.0);
        inter += usize::from(a && b);
        union += usize::from(a || b);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub family: String,
    pub sigma_desc: String,
    pub metric: String,
    pub value: f64,
    pub region: Region,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    /// Value of the first row matching `(family, sigma_desc, metric)`.
    pub fn get(&self, family: &str, sigma_desc: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.family == family && r.sigma_desc == sigma_desc && r.metric == metric)
            .map(|r| r.value)
    }

    /// Mean of every row with the given family and metric.
    pub fn mean(&self, family: &str, metric: &str) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.family == family && r.metric == metric)
            .map(|r| r.value)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// CSV with header `family,sigma_desc,metric,value,region`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("family,sigma_desc,metric,value,region\n");
        for r in &self.rows {
            writeln!(s, "{},{},{},{},{}", r.family, r.sigma_desc, r.metric, r.value, r.region).unwrap();
        }
        s
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    /// Peak value for PSNR.
    pub peak: f64,
    /// Treat the signal as an SDF: report MSE and sign IoU instead of PSNR.
    pub sdf: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { peak: 1.0, sdf: false }
    }
}

/// Renders the model and the quadrature reference for each kernel and
/// compares them inside the kernel's valid region.
///
/// Kernels whose valid region is empty produce a single `empty_region` row
/// with a NaN value.
pub fn eval_sweep(
    model: &FieldModel,
    signal: &GridSignal,
    kernels: &[KernelSpec],
    quad: &QuadratureConfig,
    options: &EvalOptions,
) -> Result<EvalReport> {
    if model.dim() != signal.dim() {
        return Err(Error::Shape {
            what: "model dimension",
            expected: signal.dim(),
            actual: model.dim(),
        });
    }
    let res = signal.resolution().to_vec();
    let mut report = EvalReport::default();
    for spec in kernels {
        let family = spec.family.name().to_string();
        let sigma_desc = spec.sigma_desc();
        let region = valid_region(&res, spec);
        let mut push = |metric: &str, value: f64| {
            report.rows.push(EvalRow {
                family: family.clone(),
                sigma_desc: sigma_desc.clone(),
                metric: metric.into(),
                value,
                region,
            })
        };
        if region.is_empty() {
            push("empty_region", f64::NAN);
            continue;
        }
        let pred = model.render(&res, spec)?;
        let reference = filtered_grid(signal, spec, &res, quad)?;
        if options.sdf {
            push("mse", mse(&pred, &reference, &region)?);
            push("iou", sign_iou(&pred, &reference, &region)?);
        } else {
            push("psnr", psnr(&pred, &reference, options.peak, &region)?);
            push("mse", mse(&pred, &reference, &region)?);
        }
    }
    Ok(report)
}

/// Isotropic kernels `σ²·I` for each variance (0 gives the unfiltered
/// sentinel).
pub fn isotropic_sweep(dim: usize, family: KernelFamily, variances: &[f64], shape: LanczosShape) -> Result<Vec<KernelSpec>> {
    variances
        .iter()
        .map(|&v| Ok(KernelSpec::with_lanczos(family, Covariance::isotropic(dim, v)?, shape)))
        .collect()
}

/// `count` anisotropic kernels drawn with a fixed seed.
pub fn anisotropic_sweep(
    dim: usize,
    family: KernelFamily,
    count: usize,
    range: (f64, f64),
    seed: u64,
    shape: LanczosShape,
) -> Result<Vec<KernelSpec>> {
    let mut r = rng::stream(seed, &[0xe7a1, dim as u64]);
    (0..count)
        .map(|_| Ok(KernelSpec::with_lanczos(family, sample_covariance(dim, range, &mut r)?, shape)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(values: &[f32]) -> GridSignal {
        GridSignal::new(&[values.len()], 1, values.to_vec()).unwrap()
    }

    #[test]
    fn identical_is_infinite() {
        let g = grid(&[0.1, 0.2, 0.3]);
        assert_eq!(psnr(&g, &g, 1.0, &Region::full(&[3])).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_formula() {
        let a = grid(&[0.0; 4]);
        let b = grid(&[0.1; 4]);
        let p = psnr(&a, &b, 1.0, &Region::full(&[4])).unwrap();
        assert!((p - 20.0).abs() < 1e-5, "{p}");
    }

    #[test]
    fn region_restricts_metric() {
        let a = grid(&[5.0, 0.0, 0.0, 5.0]);
        let b = grid(&[0.0; 4]);
        let mut region = Region::full(&[4]);
        region.lo[0] = 1;
        region.hi[0] = 3;
        assert_eq!(mse(&a, &b, &region).unwrap(), 0.0);
        region.hi[0] = 1;
        assert!(mse(&a, &b, &region).is_err());
        region.hi[0] = 5;
        assert!(mse(&a, &b, &region).is_err());
    }

    #[test]
    fn shape_mismatch() {
        assert!(mse(&grid(&[0.0; 3]), &grid(&[0.0; 4]), &Region::full(&[3])).is_err());
    }

    #[test]
    fn iou_cases() {
        let f = grid(&[-1.0, -0.5, 0.5, 1.0]);
        let r = Region::full(&[4]);
        assert_eq!(sign_iou(&f, &f, &r).unwrap(), 1.0);
        let neg = grid(&[1.0, 0.5, -0.5, -1.0]);
        assert_eq!(sign_iou(&f, &neg, &r).unwrap(), 0.0);
        let pos = grid(&[1.0; 4]);
        assert_eq!(sign_iou(&pos, &pos, &r).unwrap(), 1.0);
    }

    #[test]
    fn sphere_iou_matches_volume_ratio() {
        let n = 128;
        let r0 = 0.25;
        let sphere = |r: f64| {
            GridSignal::from_fn(&[n, n, n], 1, move |x, v| {
                let d = ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2) + (x[2] - 0.5).powi(2)).sqrt();
                v[0] = (d - r) as f32;
            })
            .unwrap()
        };
        let iou = sign_iou(&sphere(r0), &sphere(1.26 * r0), &Region::full(&[n, n, n])).unwrap();
        let want = (1.0 / 1.26f64).powi(3);
        assert!((iou - want).abs() < 0.02, "{iou} vs {want}");
    }

    #[test]
    fn csv_layout() {
        let report = EvalReport {
            rows: vec![EvalRow {
                family: "gaussian".into(),
                sigma_desc: "s2=0.001".into(),
                metric: "psnr".into(),
                value: 41.5,
                region: Region::full(&[8, 4]),
            }],
        };
        assert_eq!(
            report.to_csv(),
            "family,sigma_desc,metric,value,region\ngaussian,s2=0.001,psnr,41.5,0:8 0:4\n"
        );
        assert_eq!(report.get("gaussian", "s2=0.001", "psnr"), Some(41.5));
        assert_eq!(report.mean("gaussian", "psnr"), Some(41.5));
    }

    #[test]
    fn anisotropic_sweep_is_reproducible() {
        let shape = LanczosShape::default();
        let a = anisotropic_sweep(2, KernelFamily::Gaussian, 5, (1e-4, 1e-2), 3, shape).unwrap();
        let b = anisotropic_sweep(2, KernelFamily::Gaussian, 5, (1e-4, 1e-2), 3, shape).unwrap();
        assert_eq!(a.len(), 5);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.cov.to_packed(), y.cov.to_packed());
        }
    }

    proptest! {
        #[test]
        fn psnr_falls_with_noise(seed in 0u64..1000) {
            use rand::Rng;
            let mut r = rng::stream(seed, &[]);
            let n = 64;
            let reference: Vec<f32> = (0..n).map(|_| r.random::<f32>()).collect();
            let noise: Vec<f32> = (0..n).map(|_| r.random::<f32>() - 0.5).collect();
            let refg = grid(&reference);
            let region = Region::full(&[n]);
            let mut last = f64::INFINITY;
            for amp in [0.01f32, 0.02, 0.05, 0.1] {
                let pred: Vec<f32> = reference.iter().zip(&noise).map(|(a, e)| a + amp * e).collect();
                let p = psnr(&grid(&pred), &refg, 1.0, &region).unwrap();
                prop_assert!(p < last);
                last = p;
            }
        }

        #[test]
        fn axis_permutation_invariance(seed in 0u64..1000) {
            use rand::Rng;
            let mut r = rng::stream(seed, &[]);
            let (w, h) = (5, 7);
            let a: Vec<f32> = (0..w * h).map(|_| r.random::<f32>() - 0.5).collect();
            let b: Vec<f32> = (0..w * h).map(|_| r.random::<f32>() - 0.5).collect();
            let transpose = |v: &[f32]| {
                let mut t = vec![0f32; w * h];
                for j in 0..h {
                    for i in 0..w {
                        t[i * h + j] = v[j * w + i];
                    }
                }
                t
            };
            let ga = GridSignal::new(&[w, h], 1, a.clone()).unwrap();
            let gb = GridSignal::new(&[w, h], 1, b.clone()).unwrap();
            let ta = GridSignal::new(&[h, w], 1, transpose(&a)).unwrap();
            let tb = GridSignal::new(&[h, w], 1, transpose(&b)).unwrap();
            let m1 = mse(&ga, &gb, &Region::full(&[w, h])).unwrap();
            let m2 = mse(&ta, &tb, &Region::full(&[h, w])).unwrap();
            prop_assert!((m1 - m2).abs() <= 1e-12 * m1.max(1e-300));
            let i1 = sign_iou(&ga, &gb, &Region::full(&[w, h])).unwrap();
            let i2 = sign_iou(&ta, &tb, &Region::full(&[h, w])).unwrap();
            prop_assert_eq!(i1, i2);
        }
    }
}
