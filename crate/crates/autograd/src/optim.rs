use std::collections::BTreeMap;

use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adaptive moment estimation with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T: Scalar> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: BTreeMap<String, Tensor<T>>,
    second: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, first: BTreeMap::new(), second: BTreeMap::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Moment buffers, keyed `m.<param>` and `v.<param>`.
    pub fn state_tensors(&self) -> impl Iterator<Item = (String, &Tensor<T>)> {
        self.first
            .iter()
            .map(|(k, v)| (format!("m.{k}"), v))
            .chain(self.second.iter().map(|(k, v)| (format!("v.{k}"), v)))
    }

    /// Rebuild from saved moment buffers (see [`Adam::state_tensors`]).
    pub fn restore(lr: f64, step: u64, tensors: impl IntoIterator<Item = (String, Tensor<T>)>) -> Self {
        let mut opt = Self::new(lr);
        opt.step = step;
        for (k, t) in tensors {
            if let Some(name) = k.strip_prefix("m.") {
                opt.first.insert(name.to_string(), t);
            } else if let Some(name) = k.strip_prefix("v.") {
                opt.second.insert(name.to_string(), t);
            }
        }
        opt
    }

    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &BTreeMap<String, Tensor<T>>) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::from_f64_lossy(self.beta1), T::from_f64_lossy(self.beta2));
        let (one_b1, one_b2) = (T::from_f64_lossy(1.0 - self.beta1), T::from_f64_lossy(1.0 - self.beta2));
        let step_size = T::from_f64_lossy(self.lr / bc1);
        let inv_sqrt_bc2 = T::from_f64_lossy(1.0 / bc2.sqrt());
        let eps = T::from_f64_lossy(self.eps);
        for (name, g) in grads {
            let Some(p) = params.get_mut(name) else { continue };
            let m = self.first.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self.second.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.shape()));
            for (((pv, &gv), mv), vv) in
                p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut())
            {
                *mv = b1 * *mv + one_b1 * gv;
                *vv = b2 * *vv + one_b2 * gv * gv;
                let denom = vv.sqrt() * inv_sqrt_bc2 + eps;
                *pv = *pv - step_size * *mv / denom;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Graph;

    #[test]
    fn adam_minimises_quadratic() {
        let mut store = ParamStore::<f64>::new();
        store.insert("x", Tensor::from_f64(&[2], &[3.0, -2.0]).unwrap());
        let mut opt = Adam::new(0.1);
        for _ in 0..500 {
            let g = Graph::new();
            let b = store.bind(&g, |_| true);
            let loss = b.var("x").square().sum_all();
            let grads = b.grads(&g.backward(loss));
            opt.step(&mut store, &grads);
        }
        for v in store.get("x").unwrap().data() {
            assert!(v.abs() < 1e-2, "{v}");
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut store = ParamStore::<f64>::new();
        store.insert("x", Tensor::from_f64(&[1], &[1.0]).unwrap());
        let mut opt = Adam::new(0.01);
        let mut grads = BTreeMap::new();
        grads.insert("x".to_string(), Tensor::from_f64(&[1], &[4.0]).unwrap());
        opt.step(&mut store, &grads);
        assert!((store.get("x").unwrap().data()[0] - 0.99).abs() < 1e-9);
    }
}
