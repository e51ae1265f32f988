use num_traits::Float;

use crate::{Error, Result};

/// Exponentially decayed learning rate, `base · fraction^(step/total)`.
pub fn lr_at(step: u64, total_steps: u64, base_lr: f64, target_fraction: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::invalid("total_steps must be positive"));
    }
    if step > total_steps {
        return Err(Error::invalid(format!("step {step} beyond total {total_steps}")));
    }
    Ok(base_lr * target_fraction.powf(step as f64 / total_steps as f64))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub base_lr: f64,
    pub decay_fraction: f64,
    pub total_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(base_lr: f64, decay_fraction: f64, total_steps: u64) -> Self {
        AdamConfig {
            base_lr,
            decay_fraction,
            total_steps,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments and step counter.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    m: Vec<T>,
    v: Vec<T>,
    step: u64,
}

impl<T: Float> AdamState<T> {
    pub fn new(config: AdamConfig, params: usize) -> Self {
        AdamState {
            config,
            m: vec![T::zero(); params],
            v: vec![T::zero(); params],
            step: 0,
        }
    }

    /// Steps taken so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Learning rate the next step will use.
    pub fn current_lr(&self) -> Result<f64> {
        let c = &self.config;
        lr_at(self.step.min(c.total_steps), c.total_steps, c.base_lr, c.decay_fraction)
    }
}

/// One bias-corrected Adam update. Non-finite gradients abort with the step
/// index and leave the parameters untouched.
pub fn adam_step<T: Float>(state: &mut AdamState<T>, grads: &[T], params: &mut [T]) -> Result<()> {
    if grads.len() != params.len() || params.len() != state.m.len() {
        return Err(Error::Shape {
            what: "adam parameters",
            expected: state.m.len(),
            actual: grads.len().min(params.len()),
        });
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Diverged {
            step: state.step,
            what: format!("non-finite gradient at parameter {i}"),
        });
    }
    let lr = state.current_lr()?;
    let c = state.config;
    let t = (state.step + 1) as f64;
    let bc1 = 1.0 - c.beta1.powf(t);
    let bc2 = 1.0 - c.beta2.powf(t);
    let step_size = T::from(lr / bc1).unwrap();
    let inv_bc2 = T::from(1.0 / bc2).unwrap();
    let (b1, b2) = (T::from(c.beta1).unwrap(), T::from(c.beta2).unwrap());
    let (one, eps) = (T::one(), T::from(c.eps).unwrap());
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        *p = *p - step_size * *m / ((*v * inv_bc2).sqrt() + eps);
    }
    state.step += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        assert_eq!(lr_at(0, 100, 5e-4, 1e-3).unwrap(), 5e-4);
        assert!((lr_at(100, 100, 5e-4, 1e-3).unwrap() - 5e-7).abs() < 1e-20);
        assert!((lr_at(50, 100, 1.0, 1e-3).unwrap() - 10f64.powf(-1.5)).abs() < 1e-15);
        assert!(lr_at(0, 0, 1.0, 0.5).is_err());
        assert!(lr_at(101, 100, 1.0, 0.5).is_err());
    }

    #[test]
    fn zero_gradients_leave_params() {
        let mut s = AdamState::<f32>::new(AdamConfig::new(1e-2, 1e-3, 10), 3);
        let mut p = vec![1.0f32, -2.0, 3.0];
        for _ in 0..10 {
            adam_step(&mut s, &[0.0; 3], &mut p).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_is_scale_invariant() {
        for g in [1e-3, 1.0, 1e4] {
            let mut s = AdamState::<f64>::new(AdamConfig::new(0.1, 1.0, 10), 1);
            let mut p = vec![0.0];
            adam_step(&mut s, &[g], &mut p).unwrap();
            assert!((p[0] + 0.1).abs() < 1e-6, "g {g}: moved {}", p[0]);
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut s = AdamState::<f64>::new(AdamConfig::new(1e-2, 1.0, 1000), 2);
        let mut p = vec![1.0, -0.5];
        for _ in 0..1000 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            adam_step(&mut s, &g, &mut p).unwrap();
        }
        assert!(p.iter().all(|x| x.abs() < 1e-3), "{p:?}");
    }

    #[test]
    fn non_finite_gradient_reports_step() {
        let mut s = AdamState::<f32>::new(AdamConfig::new(1e-2, 1e-3, 10), 2);
        let mut p = vec![0.0f32; 2];
        adam_step(&mut s, &[1.0, 1.0], &mut p).unwrap();
        match adam_step(&mut s, &[1.0, f32::NAN], &mut p) {
            Err(Error::Diverged { step, .. }) => assert_eq!(step, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
