use crate::net::{ParamStore, Real, Tensor};

/// Adam with bias correction. Moments are kept in 64-bit.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<T: Real>(params: &ParamStore<T>, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Adam { beta1, beta2, epsilon, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update; `grads[k]` matches `params.tensors()[k]`.
    pub fn update<T: Real>(&mut self, params: &mut ParamStore<T>, grads: &[Tensor<T>], lr: f64) {
        assert_eq!(grads.len(), params.len(), "one gradient per parameter tensor");
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (k, (p, g)) in params.tensors_mut().iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, (pv, gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let g = gv.as_f64();
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let step = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.epsilon);
                *pv = T::of(pv.as_f64() - step);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = ParamStore::from_entries(vec![("w".into(), Tensor::<f64>::from_vec([1, 1, 1, 3], vec![1.0, 2.0, 3.0]))]);
        let mut adam = Adam::new(&p, 0.9, 0.999, 1e-12);
        let g = Tensor::from_vec([1, 1, 1, 3], vec![0.5, -2.0, 0.0]);
        adam.update(&mut p, &[g], 0.01);
        let d = p.tensors()[0].data();
        assert!((d[0] - 0.99).abs() < 1e-9);
        assert!((d[1] - 2.01).abs() < 1e-9);
        assert_eq!(d[2], 3.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = ParamStore::from_entries(vec![("w".into(), Tensor::<f64>::from_vec([1, 1, 1, 2], vec![3.0, -4.0]))]);
        let mut adam = Adam::new(&p, 0.9, 0.999, 1e-8);
        for _ in 0..3000 {
            let g = p.tensors()[0].map(|v| 2.0 * (v - 1.0));
            adam.update(&mut p, &[g], 0.01);
        }
        for v in p.tensors()[0].data() {
            assert!((v - 1.0).abs() < 1e-3);
        }
    }
}
