use num_traits::Float;
use rand::Rng;

use crate::{Error, Result};

/// Fully connected network with ReLU on hidden layers and a linear output.
///
/// Parameters live in one flat vector, layer by layer: the `fan_in × fan_out`
/// weight matrix (row-major, one row per input unit) followed by the
/// `fan_out` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    widths: Vec<usize>,
    params: Vec<T>,
    offsets: Vec<usize>,
}

/// Post-activation values of every layer from a forward pass, input first.
pub struct Trace<T> {
    batch: usize,
    acts: Vec<Vec<T>>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &[T] {
        self.acts.last().unwrap()
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

fn layer_offsets(widths: &[usize]) -> Vec<usize> {
    let mut offsets = vec![0];
    for w in widths.windows(2) {
        offsets.push(offsets.last().unwrap() + (w[0] + 1) * w[1]);
    }
    offsets
}

/// Eight-lane dot product; independent accumulators let the loop vectorize.
#[inline]
fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s = s + *x * *y;
    }
    s
}

#[inline]
fn axpy<T: Float>(a: T, x: &[T], y: &mut [T]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y = *y + a * *x;
    }
}

impl<T: Float> Mlp<T> {
    /// All-zero parameters.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::invalid(format!("bad layer widths {widths:?}")));
        }
        let offsets = layer_offsets(widths);
        Ok(Mlp {
            widths: widths.to_vec(),
            params: vec![T::zero(); *offsets.last().unwrap()],
            offsets,
        })
    }

    /// Glorot-uniform weights in `±√(6/(fan_in+fan_out))`, zero biases.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        let mut mlp = Self::zeros(widths)?;
        for l in 0..mlp.layers() {
            let (fi, fo) = (widths[l], widths[l + 1]);
            let limit = (6.0 / (fi + fo) as f64).sqrt();
            let start = mlp.offsets[l];
            for w in &mut mlp.params[start..start + fi * fo] {
                *w = T::from(limit * (2.0 * rng.random::<f64>() - 1.0)).unwrap();
            }
        }
        Ok(mlp)
    }

    /// Rebuilds a network from widths and a flat parameter vector.
    pub fn from_params(widths: &[usize], params: Vec<T>) -> Result<Self> {
        let mut mlp = Self::zeros(widths)?;
        if params.len() != mlp.params.len() {
            return Err(Error::Shape {
                what: "parameter vector",
                expected: mlp.params.len(),
                actual: params.len(),
            });
        }
        mlp.params = params;
        Ok(mlp)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Number of affine layers.
    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_len(&self) -> usize {
        self.widths[0]
    }

    pub fn output_len(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// `Σ (fan_in + 1)·fan_out`.
    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    /// Weight matrix and bias vector of layer `l`.
    pub fn layer(&self, l: usize) -> (&[T], &[T]) {
        let (fi, fo) = (self.widths[l], self.widths[l + 1]);
        let start = self.offsets[l];
        let (w, b) = self.params[start..self.offsets[l + 1]].split_at(fi * fo);
        debug_assert_eq!(b.len(), fo);
        (w, b)
    }

    fn check_input(&self, input: &[T], batch: usize) -> Result<()> {
        let expected = batch * self.input_len();
        if input.len() != expected {
            return Err(Error::Shape {
                what: "network input",
                expected,
                actual: input.len(),
            });
        }
        Ok(())
    }

    /// Forward pass keeping every layer's activations for [`Mlp::backward`].
    pub fn forward_trace(&self, input: &[T], batch: usize) -> Result<Trace<T>> {
        self.check_input(input, batch)?;
        let mut acts = Vec::with_capacity(self.widths.len());
        acts.push(input.to_vec());
        for l in 0..self.layers() {
            let (fi, fo) = (self.widths[l], self.widths[l + 1]);
            let (w, bias) = self.layer(l);
            let prev = &acts[l];
            let mut out = vec![T::zero(); batch * fo];
            let hidden = l + 1 < self.layers();
            for (x, y) in prev.chunks_exact(fi).zip(out.chunks_exact_mut(fo)) {
                y.copy_from_slice(bias);
                for (i, &a) in x.iter().enumerate() {
                    if a != T::zero() {
                        axpy(a, &w[i * fo..(i + 1) * fo], y);
                    }
                }
                if hidden {
                    for v in y.iter_mut() {
                        if *v < T::zero() {
                            *v = T::zero();
                        }
                    }
                }
            }
            acts.push(out);
        }
        Ok(Trace { batch, acts })
    }

    pub fn forward(&self, input: &[T], batch: usize) -> Result<Vec<T>> {
        Ok(self.forward_trace(input, batch)?.acts.pop().unwrap())
    }

    /// Accumulates `∂(out_grad · output)/∂θ` into `grads`.
    ///
    /// The ReLU subgradient at zero is taken as zero.
    pub fn backward(&self, trace: &Trace<T>, out_grad: &[T], grads: &mut [T]) -> Result<()> {
        let batch = trace.batch;
        let expected = batch * self.output_len();
        if out_grad.len() != expected {
            return Err(Error::Shape {
                what: "output gradient",
                expected,
                actual: out_grad.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(Error::Shape {
                what: "gradient buffer",
                expected: self.params.len(),
                actual: grads.len(),
            });
        }
        let mut delta = out_grad.to_vec();
        for l in (0..self.layers()).rev() {
            let (fi, fo) = (self.widths[l], self.widths[l + 1]);
            let (w, _) = self.layer(l);
            let input = &trace.acts[l];
            let start = self.offsets[l];
            let (gw, gb) = grads[start..self.offsets[l + 1]].split_at_mut(fi * fo);
            for (x, d) in input.chunks_exact(fi).zip(delta.chunks_exact(fo)) {
                for (g, &v) in gb.iter_mut().zip(d) {
                    *g = *g + v;
                }
                for (i, &a) in x.iter().enumerate() {
                    if a != T::zero() {
                        axpy(a, d, &mut gw[i * fo..(i + 1) * fo]);
                    }
                }
            }
            if l == 0 {
                break;
            }
            // Input of layer l is a ReLU output: only positive units pass gradient.
            let mut next = vec![T::zero(); batch * fi];
            for ((x, d), g) in input
                .chunks_exact(fi)
                .zip(delta.chunks_exact(fo))
                .zip(next.chunks_exact_mut(fi))
            {
                for (i, (&a, gi)) in x.iter().zip(g.iter_mut()).enumerate() {
                    if a > T::zero() {
                        *gi = dot(&w[i * fo..(i + 1) * fo], d);
                    }
                }
            }
            delta = next;
        }
        Ok(())
    }

    /// Convenience: fresh gradient of `out_grad · forward(input)`.
    pub fn gradient(&self, input: &[T], batch: usize, out_grad: &[T]) -> Result<Vec<T>> {
        let trace = self.forward_trace(input, batch)?;
        let mut g = vec![T::zero(); self.params.len()];
        self.backward(&trace, out_grad, &mut g)?;
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_network_outputs_zero() {
        let m = Mlp::<f32>::zeros(&[4, 8, 2]).unwrap();
        assert_eq!(m.forward(&[1.0, -2.0, 3.0, 0.5], 1).unwrap(), vec![0.0, 0.0]);
        assert_eq!(m.param_count(), 5 * 8 + 9 * 2);
    }

    #[test]
    fn identity_layer_copies_input() {
        let mut m = Mlp::<f64>::zeros(&[3, 3]).unwrap();
        for i in 0..3 {
            m.params_mut()[i * 3 + i] = 1.0;
        }
        assert_eq!(m.forward(&[0.5, -1.0, 2.0], 1).unwrap(), vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn batching_is_bit_exact() {
        let m = Mlp::<f32>::new(&[6, 16, 16, 2], &mut rng::stream(1, &[])).unwrap();
        let a: Vec<f32> = (0..6).map(|i| (i as f32 * 0.37).sin()).collect();
        let b: Vec<f32> = (0..6).map(|i| (i as f32 * 1.91).cos()).collect();
        let both: Vec<f32> = a.iter().chain(&b).copied().collect();
        let mut single = m.forward(&a, 1).unwrap();
        single.extend(m.forward(&b, 1).unwrap());
        assert_eq!(m.forward(&both, 2).unwrap(), single);
        assert!(m.forward(&[0.0; 6], 1).unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn shape_errors() {
        let m = Mlp::<f32>::zeros(&[4, 2]).unwrap();
        assert!(m.forward(&[1.0; 5], 1).is_err());
        let t = m.forward_trace(&[1.0; 4], 1).unwrap();
        let mut g = vec![0.0; m.param_count()];
        assert!(m.backward(&t, &[1.0; 3], &mut g).is_err());
        assert!(m.backward(&t, &[1.0; 2], &mut g[1..]).is_err());
    }

    #[test]
    fn zero_out_grad_gives_zero_grads() {
        let m = Mlp::<f64>::new(&[5, 7, 3], &mut rng::stream(2, &[])).unwrap();
        let g = m.gradient(&[0.1, 0.2, -0.3, 0.4, 0.5], 1, &[0.0; 3]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_linear_grad_by_hand() {
        let m = Mlp::<f64>::from_params(&[1, 1], vec![0.7, 0.1]).unwrap();
        let g = m.gradient(&[3.0], 1, &[2.0]).unwrap();
        assert_eq!(g, vec![6.0, 2.0]);
    }

    #[test]
    fn matches_central_differences() {
        let widths = [6, 12, 12, 12, 2];
        let mut r = rng::stream(3, &[]);
        let mut m = Mlp::<f64>::new(&widths, &mut r).unwrap();
        for p in m.params_mut().iter_mut() {
            *p += 0.05 * (2.0 * rand::Rng::random::<f64>(&mut r) - 1.0);
        }
        let batch = 3;
        let input: Vec<f64> = (0..widths[0] * batch).map(|i| (i as f64 * 0.71).sin()).collect();
        let og: Vec<f64> = (0..2 * batch).map(|i| (i as f64 * 1.3).cos()).collect();
        let g = m.gradient(&input, batch, &og).unwrap();
        let objective = |m: &Mlp<f64>| -> f64 {
            m.forward(&input, batch).unwrap().iter().zip(&og).map(|(a, b)| a * b).sum()
        };
        let h = 1e-5;
        for k in 0..m.param_count() {
            let mut plus = m.clone();
            plus.params_mut()[k] += h;
            let mut minus = m.clone();
            minus.params_mut()[k] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let err = (fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-6);
            assert!(err < 1e-4, "param {k}: fd {fd} vs {}", g[k]);
        }
    }
}
