//! Training objectives and their weighted sum
//! `total = l1 * bce + l2 * (rec_self + rec_cross) + l3 * (con_real + con_fake) + l4 * info`.

use disentaforge_autograd::{Scalar, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{layers::global_avg_pool, Bundle};

pub const PROB_CLAMP: f64 = 1e-7;
pub const COSINE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda1: 5.0, lambda2: 0.1, lambda3: 0.5, lambda4: 0.5 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.as_array().iter().enumerate() {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::invalid(format!("lambda{} must be finite and >= 0, got {v}", i + 1)));
            }
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.lambda1, self.lambda2, self.lambda3, self.lambda4]
    }
}

/// Scalar loss values of one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub bce: f64,
    pub rec_self: f64,
    pub rec_cross: f64,
    pub con_real: f64,
    pub con_fake: f64,
    pub info: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Fill `total` from the components, rejecting non-finite values.
    pub fn weighted(mut self, w: &LossWeights, step: u64) -> Result<Self> {
        for (name, v) in self.components() {
            if !v.is_finite() {
                return Err(Error::TrainingFault { component: name.to_string(), step });
            }
        }
        self.total = w.lambda1 * self.bce
            + w.lambda2 * (self.rec_self + self.rec_cross)
            + w.lambda3 * (self.con_real + self.con_fake)
            + w.lambda4 * self.info;
        Ok(self)
    }

    pub fn components(&self) -> [(&'static str, f64); 6] {
        [
            ("bce", self.bce),
            ("rec_self", self.rec_self),
            ("rec_cross", self.rec_cross),
            ("con_real", self.con_real),
            ("con_fake", self.con_fake),
            ("info", self.info),
        ]
    }
}

/// Mean binary cross-entropy with probabilities clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss<'g, T: Scalar>(probs: Var<'g, T>, labels: Var<'g, T>) -> Result<Var<'g, T>> {
    if probs.shape() != labels.shape() || probs.shape().len() != 1 {
        return Err(Error::invalid(format!(
            "bce_loss: probs {:?} and labels {:?} must be equal-length vectors",
            probs.shape(),
            labels.shape()
        )));
    }
    let eps = T::from_f64_lossy(PROB_CLAMP);
    let p = probs.clamp(eps, T::one() - eps);
    let pos = labels * p.ln();
    let neg = labels.rsub_scalar(T::one()) * p.rsub_scalar(T::one()).ln();
    Ok((pos + neg).mean_all().neg())
}

fn mae<'g, T: Scalar>(a: Var<'g, T>, b: Var<'g, T>) -> Var<'g, T> {
    (a - b).abs().mean_all()
}

/// `(rec_self, rec_cross)`, each a sum over the pair of per-pixel mean absolute errors.
/// Arguments are `(A, B)` pairs of image batches.
pub fn reconstruction_loss<'g, T: Scalar>(
    originals: (Var<'g, T>, Var<'g, T>),
    selfrec: (Var<'g, T>, Var<'g, T>),
    crossrec: (Var<'g, T>, Var<'g, T>),
) -> Result<(Var<'g, T>, Var<'g, T>)> {
    let shape = originals.0.shape();
    for v in [originals.1, selfrec.0, selfrec.1, crossrec.0, crossrec.1] {
        if v.shape() != shape {
            return Err(Error::invalid(format!("reconstruction_loss: shape {:?} vs {shape:?}", v.shape())));
        }
    }
    let rec_self = mae(originals.0, selfrec.0) + mae(originals.1, selfrec.1);
    let rec_cross = mae(originals.0, crossrec.0) + mae(originals.1, crossrec.1);
    Ok((rec_self, rec_cross))
}

/// Row-wise cosine similarity of `[n, c]` matrices, `[n]` out.
pub fn cosine_rows<'g, T: Scalar>(a: Var<'g, T>, b: Var<'g, T>) -> Var<'g, T> {
    let dot = (a * b).sum_axes(&[1], false);
    let na = a.square().sum_axes(&[1], false);
    let nb = b.square().sum_axes(&[1], false);
    let floor = T::from_f64_lossy(COSINE_FLOOR * COSINE_FLOOR);
    dot.div((na * nb).clamp_min(floor).sqrt())
}

/// Batch-mean cosine between pooled pure artifact and pure identity, per branch.
fn branch_cosines<'g, T: Scalar>(bundle: &Bundle<'g, T>) -> [Var<'g, T>; 2] {
    std::array::from_fn(|n| {
        cosine_rows(global_avg_pool(bundle.art_pure[n]), global_avg_pool(bundle.id_pure[n])).mean_all()
    })
}

/// `(con_real, con_fake)`: `sum_n (1 - cos(art_n, id_n))` over real images and
/// `sum_n cos(art_n, id_n)` over fakes.
pub fn separation_contrastive_loss<'g, T: Scalar>(
    real: &Bundle<'g, T>,
    fake: &Bundle<'g, T>,
) -> Result<(Var<'g, T>, Var<'g, T>)> {
    let [r1, r2] = branch_cosines(real);
    let [f1, f2] = branch_cosines(fake);
    let one = T::one();
    Ok((r1.rsub_scalar(one) + r2.rsub_scalar(one), f1 + f2))
}

/// Active loss terms of one forward graph. Absent terms count as zero.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms<'g, T: Scalar> {
    pub bce: Var<'g, T>,
    pub rec: Option<(Var<'g, T>, Var<'g, T>)>,
    pub con: Option<(Var<'g, T>, Var<'g, T>)>,
    pub info: Option<Var<'g, T>>,
}

impl<'g, T: Scalar> LossTerms<'g, T> {
    /// Weighted differentiable total and the scalar breakdown.
    pub fn total(&self, w: &LossWeights, step: u64) -> Result<(Var<'g, T>, LossBreakdown)> {
        let f = |v: Var<'g, T>| v.item().to_f64_lossy();
        let pair = |p: Option<(Var<'g, T>, Var<'g, T>)>| p.map_or((0.0, 0.0), |(a, b)| (f(a), f(b)));
        let (rec_self, rec_cross) = pair(self.rec);
        let (con_real, con_fake) = pair(self.con);
        let breakdown = LossBreakdown {
            bce: f(self.bce),
            rec_self,
            rec_cross,
            con_real,
            con_fake,
            info: self.info.map_or(0.0, f),
            total: 0.0,
        }
        .weighted(w, step)?;

        let k = |x: f64| T::from_f64_lossy(x);
        let mut total = self.bce.scale(k(w.lambda1));
        if let Some((a, b)) = self.rec {
            total = total + (a + b).scale(k(w.lambda2));
        }
        if let Some((a, b)) = self.con {
            total = total + (a + b).scale(k(w.lambda3));
        }
        if let Some(info) = self.info {
            total = total + info.scale(k(w.lambda4));
        }
        if !total.item().to_f64_lossy().is_finite() {
            return Err(Error::TrainingFault { component: "total".into(), step });
        }
        Ok((total, breakdown))
    }
}

#[cfg(test)]
mod tests {
    use disentaforge_autograd::{Graph, Tensor};

    use super::*;

    fn vec1<'g>(g: &'g Graph<f64>, v: &[f64]) -> Var<'g, f64> {
        g.constant(Tensor::from_f64(&[v.len()], v).unwrap())
    }

    #[test]
    fn bce_hand_values() {
        let g = Graph::new();
        let l = bce_loss(vec1(&g, &[0.5, 0.5]), vec1(&g, &[1.0, 0.0])).unwrap().item();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let l = bce_loss(vec1(&g, &[0.9]), vec1(&g, &[0.0])).unwrap().item();
        assert!((l - 2.302585092994046).abs() < 1e-12);
        let l = bce_loss(vec1(&g, &[1.0, 0.0]), vec1(&g, &[1.0, 0.0])).unwrap().item();
        assert!(l > 0.0 && l < 1e-6);
        assert!(bce_loss(vec1(&g, &[0.5]), vec1(&g, &[1.0, 0.0])).is_err());
    }

    #[test]
    fn reconstruction_offsets() {
        let g = Graph::new();
        let img = |v: f64| g.constant(Tensor::full(&[1, 3, 4, 4], v));
        let (s, c) = reconstruction_loss((img(0.2), img(0.3)), (img(0.2), img(0.3)), (img(0.2), img(0.3))).unwrap();
        assert_eq!((s.item(), c.item()), (0.0, 0.0));
        let (s, _) = reconstruction_loss((img(0.2), img(0.3)), (img(0.3), img(0.3)), (img(0.2), img(0.3))).unwrap();
        assert!((s.item() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn breakdown_weighting() {
        let w = LossWeights::default();
        let b = LossBreakdown { info: 1.5, ..Default::default() }.weighted(&w, 0).unwrap();
        assert_eq!(b.total, 0.75);
        let b = LossBreakdown { bce: 0.6931, ..Default::default() }.weighted(&w, 0).unwrap();
        assert!((b.total - 3.4655).abs() < 1e-12);
        let zero = LossWeights { lambda1: 0.0, lambda2: 0.0, lambda3: 0.0, lambda4: 0.0 };
        let b = LossBreakdown { bce: 1.0, rec_self: 2.0, info: 3.0, ..Default::default() }.weighted(&zero, 0).unwrap();
        assert_eq!(b.total, 0.0);
        let err = LossBreakdown { rec_cross: f64::NAN, ..Default::default() }.weighted(&w, 7).unwrap_err();
        assert!(matches!(err, Error::TrainingFault { ref component, step: 7 } if component == "rec_cross"));
    }
}
