#![allow(dead_code)]

use disentaforge::net::{Ablation, Model, ModelConfig};
use disentaforge_autograd::{check_gradients, Bound, GradCheckReport, Graph, ParamStore, Tensor, Var};

pub const FD_STEP: f64 = 1e-3;
/// Step for deep compositions, where third-order truncation error at `FD_STEP` is visible.
pub const FD_STEP_FINE: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-3;
/// Entries perturbed per tensor.
pub const FD_ENTRIES: usize = 24;

/// Smallest model the architecture allows: 16×16 images, 2×2 feature maps.
pub fn micro_config() -> ModelConfig {
    ModelConfig { d: 4, encoder_depth: 3, decoder_depth: 1, image_size: 16, classifier_hidden: 4, seed: 5, freeze_encoder: false }
}

pub fn micro_model(ablation: Ablation) -> Model {
    Model::new(micro_config(), ablation).unwrap()
}

pub fn wave(shape: &[usize], phase: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |i| ((i as f64 + 1.0) * 0.6180339 + phase).sin())
}

/// Images in [0.1, 0.9].
pub fn images(n: usize, size: usize, phase: f64) -> Tensor<f64> {
    wave(&[n, 3, size, size], phase).map(|v| 0.5 + 0.4 * v)
}

/// Fixed weighted sum, so every output entry gets a distinct cotangent.
pub fn project<'g>(g: &'g Graph<f64>, v: Var<'g, f64>) -> Var<'g, f64> {
    let w = g.constant(wave(&v.shape(), 0.37));
    (v * w).sum_all()
}

/// Gradient check over `inputs` plus every parameter whose name starts with one of `prefixes`.
/// Other parameters are bound as constants.
pub fn check_with_params<F>(store: &ParamStore<f64>, prefixes: &[&str], inputs: &[Tensor<f64>], f: F) -> GradCheckReport
where
    F: for<'g> Fn(&'g Graph<f64>, &Bound<'g, f64>, &[Var<'g, f64>]) -> Var<'g, f64>,
{
    check_with_params_at(FD_STEP, store, prefixes, inputs, f)
}

pub fn check_with_params_at<F>(
    step: f64,
    store: &ParamStore<f64>,
    prefixes: &[&str],
    inputs: &[Tensor<f64>],
    f: F,
) -> GradCheckReport
where
    F: for<'g> Fn(&'g Graph<f64>, &Bound<'g, f64>, &[Var<'g, f64>]) -> Var<'g, f64>,
{
    let names: Vec<String> =
        store.names().filter(|n| prefixes.iter().any(|p| n.starts_with(p))).map(str::to_string).collect();
    assert!(!names.is_empty(), "no parameters under {prefixes:?}");
    let mut all = inputs.to_vec();
    all.extend(names.iter().map(|n| store.get(n).unwrap().clone()));
    let k = inputs.len();
    check_gradients(&all, step, FD_ENTRIES, |g, vars| {
        let mut bound: Vec<(String, Var<'_, f64>)> = names.iter().cloned().zip(vars[k..].iter().copied()).collect();
        for (n, t) in store.iter() {
            if !names.iter().any(|m| m == n) {
                bound.push((n.to_string(), g.constant(t.clone())));
            }
        }
        f(g, &Bound::from_vars(bound), &vars[..k])
    })
}
