use super::params::{Gradients, ParamSet};
use super::scalar::Scalar;

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ParamSet<T>, learning_rate: f64) -> Self {
        let zeros = params.zeros_like().0;
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &Gradients<T>) {
        self.step += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let step_size = T::of(self.learning_rate * bc2.sqrt() / bc1);
        let eps = T::of(self.epsilon * bc2.sqrt());
        for i in 0..params.len() {
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            let g = grads.get(i);
            for (((w, m), v), &g) in params.get_mut(i).iter_mut().zip(m).zip(v).zip(g) {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                *w -= step_size * *m / (v.sqrt() + eps);
            }
        }
    }
}
