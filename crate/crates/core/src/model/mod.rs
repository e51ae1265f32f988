//! The field network: a Fourier basis feeding an MLP, plus optimizer and
//! checkpoint format.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::{adam_step, lr_at, AdamConfig, AdamState};
pub use checkpoint::FORMAT_VERSION;
pub use mlp::{Mlp, Trace};

use crate::encoding::{init_basis, FourierBasis};
use crate::kernels::KernelSpec;
use crate::signals::GridSignal;
use crate::{exec, rng, Coord, Error, Result};

/// Points per parallel work item when evaluating many coordinates.
const EVAL_CHUNK: usize = 256;

/// Architecture and basis hyper-parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Number of Fourier frequencies `m`; the embedding has `2m` entries.
    pub fourier_features: usize,
    /// Standard deviation of the frequency draw.
    pub fourier_scale: f64,
    pub hidden_width: usize,
    /// Number of hidden layers.
    pub hidden_layers: usize,
    /// Scale embedding pairs by the kernel spectrum. Off gives the plain
    /// encoding regardless of the requested filter.
    pub modulate: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            fourier_features: 512,
            fourier_scale: 2000.0,
            hidden_width: 1024,
            hidden_layers: 3,
            modulate: true,
        }
    }
}

/// A trained (or freshly initialized) neural field.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldModel {
    pub basis: FourierBasis,
    pub mlp: Mlp<f32>,
    pub modulate: bool,
    /// Free-form JSON stored alongside the weights (config echo, RNG summary).
    pub meta: String,
}

impl FieldModel {
    /// Draws the basis and initial weights from `seed`.
    pub fn new(dim: usize, channels: usize, config: &ModelConfig, seed: u64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::invalid("model needs at least one output channel"));
        }
        let basis = init_basis(dim, config.fourier_features, config.fourier_scale, seed)?;
        let mut widths = vec![basis.embed_len()];
        widths.extend(std::iter::repeat_n(config.hidden_width, config.hidden_layers));
        widths.push(channels);
        let mlp = Mlp::new(&widths, &mut rng::stream(seed, &[0x1417, dim as u64]))?;
        Ok(FieldModel {
            basis,
            mlp,
            modulate: config.modulate,
            meta: "{}".into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn channels(&self) -> usize {
        self.mlp.output_len()
    }

    /// Amplitudes applied to the embedding for `spec`, `None` for the plain
    /// encoding.
    pub fn amplitudes(&self, spec: &KernelSpec) -> Result<Option<Vec<f64>>> {
        if spec.dim() != self.dim() {
            return Err(Error::Shape {
                what: "kernel dimension",
                expected: self.dim(),
                actual: spec.dim(),
            });
        }
        Ok((self.modulate && !spec.is_unfiltered()).then(|| self.basis.amplitudes(spec)))
    }

    /// Writes the (possibly modulated) embedding of `x` into `out`.
    pub fn embed_into(&self, x: &Coord, amps: Option<&[f64]>, out: &mut [f32]) {
        self.basis.embed_into(x, if self.modulate { amps } else { None }, out);
    }

    /// Filtered prediction at a single point.
    pub fn predict(&self, x: &[f64], spec: &KernelSpec) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Shape {
                what: "coordinate",
                expected: self.dim(),
                actual: x.len(),
            });
        }
        let out = self.predict_points(&[crate::coord(x)], spec)?;
        Ok(out.into_iter().map(f64::from).collect())
    }

    /// Filtered predictions for many points, `channels` values per point.
    pub fn predict_points(&self, xs: &[Coord], spec: &KernelSpec) -> Result<Vec<f32>> {
        let amps = self.amplitudes(spec)?;
        let amps = amps.as_deref();
        let e = self.basis.embed_len();
        let blocks = exec::map_indexed(xs.len().div_ceil(EVAL_CHUNK), |c| {
            let pts = &xs[c * EVAL_CHUNK..((c + 1) * EVAL_CHUNK).min(xs.len())];
            let mut input = vec![0f32; pts.len() * e];
            for (x, row) in pts.iter().zip(input.chunks_exact_mut(e)) {
                self.embed_into(x, amps, row);
            }
            self.mlp.forward(&input, pts.len())
        });
        let mut out = Vec::with_capacity(xs.len() * self.channels());
        for b in blocks {
            out.extend(b?);
        }
        Ok(out)
    }

    /// Evaluates the field at every cell center of a grid of resolution `res`.
    pub fn render(&self, res: &[usize], spec: &KernelSpec) -> Result<GridSignal> {
        if res.len() != self.dim() {
            return Err(Error::Shape {
                what: "render dimension",
                expected: self.dim(),
                actual: res.len(),
            });
        }
        let mut grid = GridSignal::zeros(res, self.channels())?;
        let xs: Vec<Coord> = (0..grid.len()).map(|i| grid.position(i)).collect();
        let values = self.predict_points(&xs, spec)?;
        grid.data_mut().copy_from_slice(&values);
        Ok(grid)
    }

    /// Checksum over the raw parameter bytes.
    pub fn param_checksum(&self) -> u64 {
        let bytes: Vec<u8> = self.mlp.params().iter().flat_map(|p| p.to_le_bytes()).collect();
        crate::checksum64(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Covariance, KernelFamily};

    fn small() -> FieldModel {
        let cfg = ModelConfig {
            fourier_features: 8,
            fourier_scale: 4.0,
            hidden_width: 16,
            hidden_layers: 2,
            modulate: true,
        };
        FieldModel::new(2, 3, &cfg, 7).unwrap()
    }

    #[test]
    fn shapes_follow_config() {
        let m = small();
        assert_eq!(m.mlp.widths(), &[16, 16, 16, 3]);
        assert_eq!(m.mlp.param_count(), 17 * 16 + 17 * 16 + 17 * 3);
        assert_eq!(m.channels(), 3);
    }

    #[test]
    fn point_and_batch_predictions_agree() {
        let m = small();
        let spec = KernelSpec::new(KernelFamily::Box, Covariance::new(2, &[1e-3, 2e-4, 2e-4, 5e-3]).unwrap());
        let xs: Vec<Coord> = (0..600).map(|i| [i as f64 / 600.0, (i as f64 * 0.37).fract(), 0.0]).collect();
        let all = m.predict_points(&xs, &spec).unwrap();
        let one = m.predict(&xs[421][..2], &spec).unwrap();
        for c in 0..3 {
            assert_eq!(one[c], f64::from(all[421 * 3 + c]));
        }
    }

    #[test]
    fn unmodulated_ignores_filter() {
        let mut m = small();
        m.modulate = false;
        let wide = KernelSpec::new(KernelFamily::Gaussian, Covariance::isotropic(2, 0.1).unwrap());
        let x = [0.3, 0.6];
        assert_eq!(m.predict(&x, &wide).unwrap(), m.predict(&x, &KernelSpec::unfiltered(2)).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = small();
        assert!(m.predict(&[0.1], &KernelSpec::unfiltered(2)).is_err());
        assert!(m.predict(&[0.1, 0.2], &KernelSpec::unfiltered(1)).is_err());
        assert!(m.render(&[4, 4, 4], &KernelSpec::unfiltered(2)).is_err());
    }
}
