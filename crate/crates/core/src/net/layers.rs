use disentaforge_autograd::{Bound, ParamStore, Scalar, Tensor, Var};
use rand_distr::{Distribution, Normal};

use crate::seed;

/// Initialisation gain: `He` for layers followed by a nonlinearity, `Unit`
/// (`1/sqrt(fan_in)`) for linear heads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    He,
    Unit,
}

fn init_weight<T: Scalar>(root: u64, name: &str, shape: &[usize], fan_in: usize, init: Init) -> Tensor<T> {
    let std = match init {
        Init::He => (2.0 / fan_in as f64).sqrt(),
        Init::Unit => (1.0 / fan_in as f64).sqrt(),
    };
    // Seeded by parameter name, so a component initialises identically in every ablation.
    let mut rng = seed::rng(root, seed::MODEL_INIT, seed::fnv1a(name));
    let normal = Normal::new(0.0, std).expect("valid std");
    Tensor::from_fn(shape, |_| T::from_f64_lossy(normal.sample(&mut rng)))
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: String,
    bias: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    init: Init,
}

impl Conv2d {
    pub fn new(name: &str, in_ch: usize, out_ch: usize, kernel: usize, stride: usize, init: Init) -> Self {
        Self {
            weight: format!("{name}.weight"),
            bias: format!("{name}.bias"),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad: kernel / 2,
            init,
        }
    }

    pub fn pointwise(name: &str, in_ch: usize, out_ch: usize, init: Init) -> Self {
        Self::new(name, in_ch, out_ch, 1, 1, init)
    }

    pub fn init_params<T: Scalar>(&self, store: &mut ParamStore<T>, root: u64) {
        let fan_in = self.in_ch * self.kernel * self.kernel;
        let shape = [self.out_ch, self.in_ch, self.kernel, self.kernel];
        store.insert(&self.weight, init_weight(root, &self.weight, &shape, fan_in, self.init));
        store.insert(&self.bias, Tensor::zeros(&[self.out_ch]));
    }

    pub fn forward<'g, T: Scalar>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Var<'g, T> {
        x.conv2d(p.var(&self.weight), Some(p.var(&self.bias)), self.stride, self.pad)
    }

    pub fn bias_name(&self) -> &str {
        &self.bias
    }
}

/// Fully connected layer on `[n, in]` inputs.
#[derive(Debug, Clone)]
pub struct Linear {
    weight: String,
    bias: String,
    pub in_dim: usize,
    pub out_dim: usize,
    init: Init,
}

impl Linear {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, init: Init) -> Self {
        Self { weight: format!("{name}.weight"), bias: format!("{name}.bias"), in_dim, out_dim, init }
    }

    pub fn init_params<T: Scalar>(&self, store: &mut ParamStore<T>, root: u64) {
        let shape = [self.in_dim, self.out_dim];
        store.insert(&self.weight, init_weight(root, &self.weight, &shape, self.in_dim, self.init));
        store.insert(&self.bias, Tensor::zeros(&[self.out_dim]));
    }

    pub fn forward<'g, T: Scalar>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Var<'g, T> {
        let n = x.shape()[0];
        let w = p.var(&self.weight).reshape(&[1, self.in_dim, self.out_dim]);
        let y = x.reshape(&[1, n, self.in_dim]).matmul(w).reshape(&[n, self.out_dim]);
        y + p.var(&self.bias)
    }
}

/// Attention of `query` positions over `key` positions.
/// `q`, `k`: `[n, dk, h, w]`; `v`: `[n, c, h, w]`; returns `[n, c, h, w]`.
pub fn spatial_attention<'g, T: Scalar>(q: Var<'g, T>, k: Var<'g, T>, v: Var<'g, T>) -> Var<'g, T> {
    let qs = q.shape();
    let vs = v.shape();
    let (n, dk, l) = (qs[0], qs[1], qs[2] * qs[3]);
    let qt = q.reshape(&[n, dk, l]).permute(&[0, 2, 1]);
    let logits = qt.matmul(k.reshape(&[n, dk, l])).div_scalar(T::from_f64_lossy((dk as f64).sqrt()));
    let attn = logits.softmax_last();
    v.reshape(&[n, vs[1], l]).matmul(attn.permute(&[0, 2, 1])).reshape(&vs)
}

/// Per-sample, per-channel mean/variance normalisation over spatial positions.
pub fn spatial_mvn<'g, T: Scalar>(x: Var<'g, T>) -> Var<'g, T> {
    let mean = x.mean_axes(&[2, 3], true);
    let centered = x - mean;
    let var = centered.square().mean_axes(&[2, 3], true);
    centered.div(var.add_scalar(T::from_f64_lossy(1e-5)).sqrt())
}

/// Global average pool `[n, c, h, w] -> [n, c]`.
pub fn global_avg_pool<'g, T: Scalar>(x: Var<'g, T>) -> Var<'g, T> {
    x.mean_axes(&[2, 3], false)
}
