//! Central finite-difference checks for graph-built functions (64-bit only).

use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Per-input comparison of analytic and numeric gradients.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst relative error per input, in input order.
    pub rel_errors: Vec<f64>,
    /// Number of entries compared per input.
    pub checked: Vec<usize>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.rel_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Relative error of one entry. Entries far below the gradient's overall
/// magnitude are measured against `1e-3 * scale` so that round-off on
/// near-zero components does not dominate.
pub fn relative_error(analytic: f64, numeric: f64, scale: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-3 * scale).max(1e-12);
    (analytic - numeric).abs() / denom
}

/// Compare reverse-mode gradients of the scalar `f(inputs)` against central
/// differences with step `eps`. At most `max_entries` evenly spaced entries
/// of each input are perturbed (all of them when the input is smaller).
pub fn check_gradients<F>(inputs: &[Tensor<f64>], eps: f64, max_entries: usize, f: F) -> GradCheckReport
where
    F: for<'g> Fn(&'g Graph<f64>, &[Var<'g, f64>]) -> Var<'g, f64>,
{
    let analytic: Vec<Tensor<f64>> = {
        let g = Graph::new();
        let vars: Vec<Var<'_, f64>> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
        let out = f(&g, &vars);
        let grads = g.backward(out);
        vars.iter().map(|v| grads.get_or_zeros(*v)).collect()
    };
    let eval = |values: &[Tensor<f64>]| -> f64 {
        let g = Graph::new();
        let vars: Vec<Var<'_, f64>> = values.iter().map(|t| g.constant(t.clone())).collect();
        f(&g, &vars).item()
    };

    let mut compared = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let stride = (n / max_entries.max(1)).max(1);
        let idx: Vec<usize> = (0..n).step_by(stride).take(max_entries.max(1)).collect();
        let mut pairs = Vec::with_capacity(idx.len());
        for &j in &idx {
            let orig = input.data()[j];
            work[i].data_mut()[j] = orig + eps;
            let plus = eval(&work);
            work[i].data_mut()[j] = orig - eps;
            let minus = eval(&work);
            work[i].data_mut()[j] = orig;
            pairs.push((analytic[i].data()[j], (plus - minus) / (2.0 * eps)));
        }
        compared.push(pairs);
    }
    let scale = compared.iter().flatten().map(|(a, n)| a.abs().max(n.abs())).fold(0.0, f64::max);
    let rel_errors = compared
        .iter()
        .map(|pairs| pairs.iter().map(|&(a, n)| relative_error(a, n, scale)).fold(0.0, f64::max))
        .collect();
    let checked = compared.iter().map(Vec::len).collect();
    GradCheckReport { rel_errors, checked }
}
