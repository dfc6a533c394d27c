//! Identity-artifact correlation compression.
//!
//! A dual cross-attention block estimates, per feature entry, how strongly a
//! non-pure identity map and its blended artifact map are correlated. The
//! resulting gate `W` in `[0, 1]` replaces correlated entries with Gaussian
//! noise that matches each map's per-channel moments:
//! `pure = (1 - W) * feat + W * eps`. The information loss pushes the
//! identity and artifact distributions apart while keeping each purified
//! artifact close to its blended source:
//! `exp(-sum_n KL[p(id_n), p(art_n)]) + 0.5 * exp(sum_n KL[p(art_pure_n), p(art_n)])`.

use disentaforge_autograd::{Bound, ParamStore, Scalar, Tensor, Var};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::net::layers::{spatial_attention, Conv2d, Init};
use crate::seed;

pub const VAR_FLOOR: f64 = 1e-6;
/// Bounds applied to each summed KL before exponentiation.
pub const KL_CLAMP: (f64, f64) = (0.0, 20.0);
/// Weight of the retention term.
pub const RETENTION_WEIGHT: f64 = 0.5;

/// Per-channel mean and floored population variance, each of shape `[c]`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianStats<'g, T: Scalar> {
    pub mean: Var<'g, T>,
    pub var: Var<'g, T>,
}

impl<'g, T: Scalar> GaussianStats<'g, T> {
    pub fn channels(&self) -> usize {
        self.mean.shape()[0]
    }

    pub fn mean_values(&self) -> Vec<f64> {
        self.mean.value().to_f64_vec()
    }

    pub fn var_values(&self) -> Vec<f64> {
        self.var.value().to_f64_vec()
    }

    fn broadcast_shape(&self) -> [usize; 4] {
        [1, self.channels(), 1, 1]
    }
}

fn check_feature(feat: &Var<'_, impl Scalar>, what: &str) -> Result<()> {
    let s = feat.shape();
    if s.len() != 4 {
        return Err(Error::invalid(format!("{what}: expected [batch, channels, h, w], got {s:?}")));
    }
    Ok(())
}

fn check_same_shape<T: Scalar>(a: &Var<'_, T>, b: &Var<'_, T>, what: &str) -> Result<()> {
    check_feature(a, what)?;
    if a.shape() != b.shape() {
        return Err(Error::invalid(format!("{what}: shape mismatch {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Per-channel statistics pooled over batch and spatial positions.
pub fn gaussian_stats<'g, T: Scalar>(feat: Var<'g, T>) -> Result<GaussianStats<'g, T>> {
    check_feature(&feat, "gaussian_stats")?;
    let s = feat.shape();
    if s[0] * s[2] * s[3] < 2 {
        return Err(Error::invalid(format!(
            "gaussian_stats needs at least 2 pooled values per channel, got shape {s:?}"
        )));
    }
    let c = s[1];
    let mean = feat.mean_axes(&[0, 2, 3], false);
    let centered = feat - mean.reshape(&[1, c, 1, 1]);
    let var = centered.square().mean_axes(&[0, 2, 3], false).clamp_min(T::from_f64_lossy(VAR_FLOOR));
    Ok(GaussianStats { mean, var })
}

/// Mean over channels of `KL(N(mu_p, var_p) || N(mu_q, var_q))`.
pub fn kl_diag_gauss<'g, T: Scalar>(p: &GaussianStats<'g, T>, q: &GaussianStats<'g, T>) -> Result<Var<'g, T>> {
    if p.channels() != q.channels() {
        return Err(Error::invalid(format!(
            "kl_diag_gauss: {} vs {} channels",
            p.channels(),
            q.channels()
        )));
    }
    let half = T::from_f64_lossy(0.5);
    let log_ratio = (q.var.ln() - p.var.ln()).scale(half);
    let diff = p.mean - q.mean;
    let quad = (p.var + diff.square()).div(q.var.scale(T::from_f64_lossy(2.0)));
    Ok((log_ratio + quad).add_scalar(-half).mean_all())
}

/// Noise used to fill gated entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// Draw `eps ~ N(mean, var)` from this seed.
    Sample(u64),
    /// Replace `eps` by its mean.
    Mean,
}

/// `(1 - gate) * feat + gate * eps` with `eps` moment-matched to `feat`.
pub fn purify<'g, T: Scalar>(feat: Var<'g, T>, gate: Var<'g, T>, mode: NoiseMode) -> Result<Var<'g, T>> {
    check_same_shape(&feat, &gate, "purify")?;
    let stats = gaussian_stats(feat)?;
    purify_with_stats(feat, gate, &stats, mode)
}

/// [`purify`] with externally supplied noise moments (e.g. running statistics at inference).
pub fn purify_with_stats<'g, T: Scalar>(
    feat: Var<'g, T>,
    gate: Var<'g, T>,
    stats: &GaussianStats<'g, T>,
    mode: NoiseMode,
) -> Result<Var<'g, T>> {
    check_same_shape(&feat, &gate, "purify")?;
    let shape = feat.shape();
    if stats.channels() != shape[1] {
        return Err(Error::invalid(format!(
            "purify: stats for {} channels, feature has {}",
            stats.channels(),
            shape[1]
        )));
    }
    let b = stats.broadcast_shape();
    let mean = stats.mean.reshape(&b);
    let eps = match mode {
        NoiseMode::Mean => mean.broadcast_to(&shape),
        NoiseMode::Sample(noise_seed) => {
            let z = standard_normal::<T>(&shape, noise_seed);
            let z = feat.graph().constant(z);
            mean + stats.var.reshape(&b).sqrt() * z
        }
    };
    Ok(feat * gate.rsub_scalar(T::one()) + gate * eps)
}

fn standard_normal<T: Scalar>(shape: &[usize], noise_seed: u64) -> Tensor<T> {
    let mut rng = seed::rng(noise_seed, seed::TRAIN_NOISE, 0);
    Tensor::from_fn(shape, |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        T::from_f64_lossy(z)
    })
}

/// Features of one branch entering and leaving compression.
#[derive(Debug, Clone, Copy)]
pub struct BranchFeatures<'g, T: Scalar> {
    pub id_raw: Var<'g, T>,
    pub art_raw: Var<'g, T>,
    pub art_pure: Var<'g, T>,
}

/// Scalar pieces of the information loss.
#[derive(Debug, Clone, Copy)]
pub struct InfoLossTerms<'g, T: Scalar> {
    pub kl_id_art: [Var<'g, T>; 2],
    pub kl_art_art: [Var<'g, T>; 2],
    pub total: Var<'g, T>,
}

pub fn info_loss<'g, T: Scalar>(branches: &[BranchFeatures<'g, T>; 2]) -> Result<InfoLossTerms<'g, T>> {
    let mut kl_id_art = Vec::with_capacity(2);
    let mut kl_art_art = Vec::with_capacity(2);
    for b in branches {
        check_same_shape(&b.id_raw, &b.art_raw, "info_loss")?;
        check_same_shape(&b.art_pure, &b.art_raw, "info_loss")?;
        let id = gaussian_stats(b.id_raw)?;
        let art = gaussian_stats(b.art_raw)?;
        let pure = gaussian_stats(b.art_pure)?;
        kl_id_art.push(kl_diag_gauss(&id, &art)?);
        kl_art_art.push(kl_diag_gauss(&pure, &art)?);
    }
    let (lo, hi) = (T::from_f64_lossy(KL_CLAMP.0), T::from_f64_lossy(KL_CLAMP.1));
    let separation = (kl_id_art[0] + kl_id_art[1]).clamp(lo, hi).neg().exp();
    let retention = (kl_art_art[0] + kl_art_art[1]).clamp(lo, hi).exp().scale(T::from_f64_lossy(RETENTION_WEIGHT));
    Ok(InfoLossTerms {
        kl_id_art: [kl_id_art[0], kl_id_art[1]],
        kl_art_art: [kl_art_art[0], kl_art_art[1]],
        total: separation + retention,
    })
}

/// Dual cross-attention correlation gate for one branch.
#[derive(Debug, Clone)]
pub struct Dcam {
    query_id: Conv2d,
    key_art: Conv2d,
    value_art: Conv2d,
    query_art: Conv2d,
    key_id: Conv2d,
    value_id: Conv2d,
    proj: Conv2d,
    pub channels: usize,
}

impl Dcam {
    pub fn new(prefix: &str, channels: usize) -> Self {
        let dk = (channels / 4).max(2);
        let pw = |n: &str, o: usize| Conv2d::pointwise(&format!("{prefix}.{n}"), channels, o, Init::Unit);
        Self {
            query_id: pw("q_id", dk),
            key_art: pw("k_art", dk),
            value_art: pw("v_art", channels),
            query_art: pw("q_art", dk),
            key_id: pw("k_id", dk),
            value_id: pw("v_id", channels),
            proj: pw("proj", channels),
            channels,
        }
    }

    fn layers(&self) -> [&Conv2d; 7] {
        [&self.query_id, &self.key_art, &self.value_art, &self.query_art, &self.key_id, &self.value_id, &self.proj]
    }

    pub fn init_params<T: Scalar>(&self, store: &mut ParamStore<T>, root: u64) {
        for l in self.layers() {
            l.init_params(store, root);
        }
    }

    /// Gate `W = sigmoid(proj(attn(id -> art) + attn(art -> id)))`, same shape as the inputs.
    pub fn gate<'g, T: Scalar>(&self, p: &Bound<'g, T>, id_raw: Var<'g, T>, art_raw: Var<'g, T>) -> Result<Var<'g, T>> {
        check_same_shape(&id_raw, &art_raw, "dcam_gate")?;
        if id_raw.shape()[1] != self.channels {
            return Err(Error::invalid(format!(
                "dcam_gate: expected {} channels, got {:?}",
                self.channels,
                id_raw.shape()
            )));
        }
        let id_to_art = spatial_attention(
            self.query_id.forward(p, id_raw),
            self.key_art.forward(p, art_raw),
            self.value_art.forward(p, art_raw),
        );
        let art_to_id = spatial_attention(
            self.query_art.forward(p, art_raw),
            self.key_id.forward(p, id_raw),
            self.value_id.forward(p, id_raw),
        );
        Ok(self.proj.forward(p, id_to_art + art_to_id).sigmoid())
    }
}

/// Plain-valued statistics, used for running estimates at inference.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsValues {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl StatsValues {
    pub fn of<T: Scalar>(stats: &GaussianStats<'_, T>) -> Self {
        Self { mean: stats.mean_values(), var: stats.var_values() }
    }

    pub fn to_graph<'g, T: Scalar>(&self, graph: &'g disentaforge_autograd::Graph<T>) -> GaussianStats<'g, T> {
        let c = self.mean.len();
        GaussianStats {
            mean: graph.constant(Tensor::from_f64(&[c], &self.mean).expect("stats shape")),
            var: graph.constant(Tensor::from_f64(&[c], &self.var).expect("stats shape")),
        }
    }
}
