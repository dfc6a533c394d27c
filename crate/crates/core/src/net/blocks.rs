use disentaforge_autograd::{Bound, ParamStore, Scalar, Var};

use super::layers::{global_avg_pool, spatial_attention, spatial_mvn, Conv2d, Init, Linear};

/// Strided convolutional identity encoder. The last three stages halve the
/// resolution; any earlier stages keep it.
#[derive(Debug, Clone)]
pub struct Encoder {
    stages: Vec<Conv2d>,
}

impl Encoder {
    pub fn new(prefix: &str, depth: usize, d: usize) -> Self {
        let stem = (d / 4).max(4);
        let mut widths = vec![stem; depth - 3];
        widths.extend([(d / 2).max(4), d, d]);
        let mut in_ch = 3;
        let stages = widths
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                let stride = if i + 3 >= depth { 2 } else { 1 };
                let init = if i + 1 == depth { Init::Unit } else { Init::He };
                let conv = Conv2d::new(&format!("{prefix}.s{i}"), in_ch, w, 3, stride, init);
                in_ch = w;
                conv
            })
            .collect();
        Self { stages }
    }

    pub fn init_params<T: Scalar>(&self, store: &mut ParamStore<T>, root: u64) {
        for s in &self.stages {
            s.init_params(store, root);
        }
    }

    pub fn forward<'g, T: Scalar>(&self, p: &Bound<'g, T>, x: Var<'g, T>) -> Var<'g, T> {
        let last = self.stages.len() - 1;
        self.stages.iter().enumerate().fold(x, |h, (i, s)| {
            let y = s.forward(p, h);
            if i == last {
                y
            } else {
                y.silu()
            }
        })
    }
}

/// Joint separator: two shared 3x3 convolutions over `id1 || id2`, then four
/// 1x1 heads for `(id_raw1, art_raw1, id_raw2, art_raw2)`.
#[derive(Debug, Clone)]
pub struct Separator {
    trunk: [Conv2d; 2],
    heads: [Conv2d; 4],
}

impl Separator {
    pub fn new(prefix: &str, d: usize) -> Self {
        let head = |n: &str| Conv2d::pointwise(&format!("{prefix}.{n}"), d, d, Init::Unit);
        Self {
            trunk: [
                Conv2d::new(&format!("{prefix}.trunk0"), 2 * d, d, 3, 1, Init::He),
                Conv2d::new(&format!("{prefix}.trunk1"), d, d, 3, 1, Init::He),
            ],
            heads: [head("id1"), head("art1"), head("id2"), head("art2")],
        }
    }

    pub fn init_params<T: Scalar>(&self, store: &mut ParamStore<T>, root: u64) {
        for c in self.trunk.iter().chain(&self.heads) {
            c.init_params(store, root);
        }
    }

    pub fn forward<'g, T: Scalar>(&self, p: &Bound<'g, T>, id1: Var<'g, T>, id2: Var<'g, T>) -> [Var<'g, T>; 4] {
        let h = Var::concat(&[id1, id2], 1);
        let h = self.trunk[0].forward(p, h).silu();
        let h = self.trunk[1].forward(p, h).silu();
        std::array::from_fn(|i| self.heads[i].forward(p, h))
    }
}

/// Style-attention decoder: queries from the normalised identity map, keys
/// from the normalised artifact map, values from the artifact map, plus an
/// identity residual; then three nearest-neighbour upsampling stages.
#[derive(Debug, Clone)]
pub struct Decoder {
    query: Conv2d,
    key: Conv2d,
    value: Conv2d,
    attn_out: Conv2d,
    content: Conv2d,
    stages: Vec<Vec<Conv2d>>,
    to_rgb: Conv2d,
}

impl Decoder {
    pub fn new(prefix: &str, d: usize, depth: usize) -> Self {
        let c = 2 * d;
        let dk = (d / 4).max(2);
        let c0 = (d / 2).max(4);
        let pw = |n: &str, i: usize, o: usize| Conv2d::pointwise(&format!("{prefix}.{n}"), i, o, Init::Unit);
        let widths = [(d / 2).max(4), (d / 4).max(4), (d / 8).max(4)];
        let mut in_ch = c0;
        let stages = widths
            .iter()
            .enumerate()
            .map(|(s, &w)| {
                (0..depth)
                    .map(|j| {
                        let conv = Conv2d::new(&format!("{prefix}.up{s}.c{j}"), in_ch, w, 3, 1, Init::He);
                        in_ch = w;
                        conv
                    })
                    .collect()
            })
            .collect();
        Self {
            query: pw("q", c, dk),
            key: pw("k", c, dk),
            value: pw("v", c, c),
            attn_out: pw("attn_out", c, c0),
            content: pw("content", c, c0),
            stages,
            to_rgb: Conv2d::new(&format!("{prefix}.rgb"), in_ch, 3, 3, 1, Init::Unit),
        }
    }

    fn layers(&self) -> impl Iterator<Item = &Conv2d> {
        [&self.query, &self.key, &self.value, &self.attn_out, &self.content]
            .into_iter()
            .chain(self.stages.iter().flatten())
            .chain([&self.to_rgb])
    }

    pub fn init_params<T: Scalar>(&self, store: &mut ParamStore<T>, root: u64) {
        for c in self.layers() {
            c.init_params(store, root);
        }
    }

    pub fn forward<'g, T: Scalar>(&self, p: &Bound<'g, T>, id: Var<'g, T>, art: Var<'g, T>) -> Var<'g, T> {
        let styled = spatial_attention(
            self.query.forward(p, spatial_mvn(id)),
            self.key.forward(p, spatial_mvn(art)),
            self.value.forward(p, art),
        );
        let mut h = (self.attn_out.forward(p, styled) + self.content.forward(p, id)).silu();
        for stage in &self.stages {
            h = h.upsample_nearest(2);
            for conv in stage {
                h = conv.forward(p, h).silu();
            }
        }
        self.to_rgb.forward(p, h).sigmoid()
    }
}

/// Pool, hidden layer, scalar probability per sample.
#[derive(Debug, Clone)]
pub struct Classifier {
    hidden: Linear,
    out: Linear,
}

impl Classifier {
    pub fn new(prefix: &str, in_ch: usize, hidden: usize) -> Self {
        Self {
            hidden: Linear::new(&format!("{prefix}.fc1"), in_ch, hidden, Init::He),
            out: Linear::new(&format!("{prefix}.fc2"), hidden, 1, Init::Unit),
        }
    }

    pub fn init_params<T: Scalar>(&self, store: &mut ParamStore<T>, root: u64) {
        self.hidden.init_params(store, root);
        self.out.init_params(store, root);
    }

    pub fn in_channels(&self) -> usize {
        self.hidden.in_dim
    }

    /// `[n, c, h, w] -> [n]` probabilities.
    pub fn forward<'g, T: Scalar>(&self, p: &Bound<'g, T>, art: Var<'g, T>) -> Var<'g, T> {
        let n = art.shape()[0];
        let h = self.hidden.forward(p, global_avg_pool(art)).silu();
        self.out.forward(p, h).sigmoid().reshape(&[n])
    }
}
