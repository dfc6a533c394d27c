use std::collections::HashMap;
use std::path::Path;

use disentaforge_autograd::{Scalar, Tensor};
use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::synth::{CorpusManifest, ForgeryMethod, ForgeryRecord, Label};

/// One real and one fake sample id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePair {
    pub real: String,
    pub fake: String,
}

/// Draw `batch / 2` (real, fake) pairs from a split. Reals and fakes are each
/// drawn without replacement unless the split holds fewer than `batch / 2`.
pub fn sample_pairs(manifest: &CorpusManifest, split: &str, batch: usize, rng: &mut impl Rng) -> Result<Vec<ImagePair>> {
    if batch < 2 || batch % 2 != 0 {
        return Err(Error::invalid(format!("batch must be even and >= 2, got {batch}")));
    }
    let records = manifest.split_records(split)?;
    let pick = |label: Label| -> Vec<&ForgeryRecord> { records.iter().copied().filter(|r| r.label == label).collect() };
    let (reals, fakes) = (pick(Label::Real), pick(Label::Fake));
    if reals.is_empty() || fakes.is_empty() {
        return Err(Error::invalid(format!("split `{split}` needs both real and fake samples")));
    }
    let n = batch / 2;
    let mut draw = |pool: &[&ForgeryRecord], what: &str| -> Vec<String> {
        if pool.len() >= n {
            index::sample(rng, pool.len(), n).into_iter().map(|i| pool[i].sample_id.clone()).collect()
        } else {
            log::warn!("split `{split}` has {} {what} samples for {n} pairs; repeating", pool.len());
            (0..n).map(|_| pool[rng.gen_range(0..pool.len())].sample_id.clone()).collect()
        }
    };
    let r = draw(&reals, "real");
    let f = draw(&fakes, "fake");
    Ok(r.into_iter().zip(f).map(|(real, fake)| ImagePair { real, fake }).collect())
}

/// Decoded images of one or more splits, held in memory.
#[derive(Debug, Clone)]
pub struct ImageSet {
    pub image_size: usize,
    pub ids: Vec<String>,
    pub labels: Vec<Label>,
    pub methods: Vec<ForgeryMethod>,
    pub groups: Vec<String>,
    pixels: Vec<f32>,
    index: HashMap<String, usize>,
}

impl ImageSet {
    /// Load every image of `splits` from `root`.
    pub fn load(manifest: &CorpusManifest, root: &Path, splits: &[&str]) -> Result<Self> {
        let mut set = Self::empty(manifest.image_size);
        for split in splits {
            for r in manifest.split_records(split)? {
                let img = Image::load_png(&manifest.image_path(root, r))?;
                set.push(r, &img)?;
            }
        }
        Ok(set)
    }

    /// Build from records and already-decoded images (same order).
    pub fn from_images(image_size: usize, records: &[&ForgeryRecord], images: &[&Image]) -> Result<Self> {
        let mut set = Self::empty(image_size);
        for (r, img) in records.iter().zip(images) {
            set.push(r, img)?;
        }
        Ok(set)
    }

    fn empty(image_size: usize) -> Self {
        Self {
            image_size,
            ids: Vec::new(),
            labels: Vec::new(),
            methods: Vec::new(),
            groups: Vec::new(),
            pixels: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn push(&mut self, r: &ForgeryRecord, img: &Image) -> Result<()> {
        if img.size() != self.image_size {
            return Err(Error::invalid(format!(
                "image {} is {}px, corpus declares {}px",
                r.sample_id,
                img.size(),
                self.image_size
            )));
        }
        if self.index.insert(r.sample_id.clone(), self.ids.len()).is_some() {
            return Ok(());
        }
        self.ids.push(r.sample_id.clone());
        self.labels.push(r.label);
        self.methods.push(r.method);
        self.groups.push(r.group_id.clone());
        self.pixels.extend_from_slice(img.data());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, sample_id: &str) -> Result<usize> {
        self.index.get(sample_id).copied().ok_or_else(|| Error::invalid(format!("sample {sample_id} not loaded")))
    }

    fn image_len(&self) -> usize {
        3 * self.image_size * self.image_size
    }

    /// `[n, 3, s, s]` tensor of the images at `positions`.
    pub fn batch<T: Scalar>(&self, positions: &[usize]) -> Tensor<T> {
        let len = self.image_len();
        let mut data = Vec::with_capacity(positions.len() * len);
        for &i in positions {
            data.extend(self.pixels[i * len..(i + 1) * len].iter().map(|&v| T::from_f64_lossy(v as f64)));
        }
        Tensor::new(vec![positions.len(), 3, self.image_size, self.image_size], data).expect("batch shape")
    }

    /// Paired batch with all reals first, then all fakes.
    pub fn pair_batch<T: Scalar>(&self, pairs: &[ImagePair]) -> Result<PairBatch<T>> {
        let mut pos = Vec::with_capacity(2 * pairs.len());
        for p in pairs {
            pos.push(self.position(&p.real)?);
        }
        for p in pairs {
            pos.push(self.position(&p.fake)?);
        }
        let n = pairs.len();
        let labels = Tensor::from_fn(&[2 * n], |i| if i < n { T::zero() } else { T::one() });
        Ok(PairBatch { images: self.batch(&pos), labels, pairs: n })
    }
}

/// `2P` images (`P` reals then `P` fakes) and their 0/1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch<T: Scalar> {
    pub images: Tensor<T>,
    pub labels: Tensor<T>,
    pub pairs: usize,
}
