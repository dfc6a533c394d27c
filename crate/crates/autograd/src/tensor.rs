use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::{gemm, MatRef, Scalar};

/// Dense, contiguous, row-major tensor.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("dtype", &T::DTYPE)
            .finish()
    }
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Output shape of 2-D convolution given input `[n, c, h, w]`.
pub fn conv2d_out_hw(h: usize, w: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    ((h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1)
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if numel(&shape) != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                numel(&shape),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![T::zero(); numel(shape)] }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self { shape: shape.to_vec(), data: vec![value; numel(shape)] }
    }

    pub fn scalar(value: T) -> Self {
        Self { shape: vec![], data: vec![value] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        Self { shape: shape.to_vec(), data: (0..numel(shape)).map(&mut f).collect() }
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape.to_vec(), data.iter().map(|&v| T::from_f64_lossy(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64_lossy()).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
        }
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.numel() {
            return Err(Error::Shape(format!("cannot reshape {:?} to {:?}", self.shape, shape)));
        }
        Ok(Self { shape: shape.to_vec(), data: self.data.clone() })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.shape, other.shape, "zip_map shape mismatch");
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Mean absolute difference to another tensor of the same shape.
    pub fn mean_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape);
        if self.data.is_empty() {
            return 0.0;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs().to_f64_lossy())
            .sum::<f64>()
            / self.data.len() as f64
    }

    pub fn permute(&self, axes: &[usize]) -> Self {
        assert_eq!(axes.len(), self.ndim(), "permute rank");
        let new_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let src_strides = strides_of(&self.shape);
        let perm_strides: Vec<usize> = axes.iter().map(|&a| src_strides[a]).collect();
        let mut out = Vec::with_capacity(self.numel());
        let mut idx = vec![0usize; new_shape.len()];
        let total = self.numel();
        let mut offset = 0usize;
        for _ in 0..total {
            out.push(self.data[offset]);
            for d in (0..new_shape.len()).rev() {
                idx[d] += 1;
                offset += perm_strides[d];
                if idx[d] < new_shape[d] {
                    break;
                }
                offset -= perm_strides[d] * new_shape[d];
                idx[d] = 0;
            }
        }
        Self { shape: new_shape, data: out }
    }

    /// Broadcast (numpy rules) to `shape`.
    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Self> {
        let src = self.aligned_shape(shape.len())?;
        for (s, t) in src.iter().zip(shape) {
            if *s != *t && *s != 1 {
                return Err(Error::Shape(format!(
                    "cannot broadcast {:?} to {:?}",
                    self.shape, shape
                )));
            }
        }
        let src_strides = strides_of(&src);
        let eff: Vec<usize> =
            src.iter().zip(&src_strides).map(|(&d, &s)| if d == 1 { 0 } else { s }).collect();
        let mut out = Vec::with_capacity(numel(shape));
        let mut idx = vec![0usize; shape.len()];
        let mut offset = 0usize;
        for _ in 0..numel(shape) {
            out.push(self.data[offset]);
            for d in (0..shape.len()).rev() {
                idx[d] += 1;
                offset += eff[d];
                if idx[d] < shape[d] {
                    break;
                }
                offset -= eff[d] * shape[d];
                idx[d] = 0;
            }
        }
        Ok(Self { shape: shape.to_vec(), data: out })
    }

    fn aligned_shape(&self, rank: usize) -> Result<Vec<usize>> {
        if self.ndim() > rank {
            return Err(Error::Shape(format!(
                "cannot broadcast rank {} to rank {}",
                self.ndim(),
                rank
            )));
        }
        let mut src = vec![1; rank - self.ndim()];
        src.extend_from_slice(&self.shape);
        Ok(src)
    }

    /// Sum over broadcast axes so that the result has shape `shape`
    /// (inverse of [`Tensor::broadcast_to`]).
    pub fn sum_to(&self, shape: &[usize]) -> Result<Self> {
        if self.shape == shape {
            return Ok(self.clone());
        }
        let rank = self.ndim();
        if shape.len() > rank {
            return Err(Error::Shape(format!("cannot sum {:?} to {:?}", self.shape, shape)));
        }
        let mut target = vec![1; rank - shape.len()];
        target.extend_from_slice(shape);
        let reduced = self.reduce_to(&target)?;
        Ok(Self { shape: shape.to_vec(), data: reduced.data })
    }

    /// Sum into `target` (same rank, each dim equal or 1).
    fn reduce_to(&self, target: &[usize]) -> Result<Self> {
        for (s, t) in self.shape.iter().zip(target) {
            if *t != *s && *t != 1 {
                return Err(Error::Shape(format!("cannot reduce {:?} to {:?}", self.shape, target)));
            }
        }
        let tstrides = strides_of(target);
        let eff: Vec<usize> =
            target.iter().zip(&tstrides).map(|(&d, &s)| if d == 1 { 0 } else { s }).collect();
        let mut out = vec![T::zero(); numel(target)];
        let mut idx = vec![0usize; self.ndim()];
        let mut offset = 0usize;
        for &v in &self.data {
            out[offset] = out[offset] + v;
            for d in (0..self.ndim()).rev() {
                idx[d] += 1;
                offset += eff[d];
                if idx[d] < self.shape[d] {
                    break;
                }
                offset -= eff[d] * self.shape[d];
                idx[d] = 0;
            }
        }
        Ok(Self { shape: target.to_vec(), data: out })
    }

    /// Sum over `axes`, keeping them as size-1 dims.
    pub fn sum_axes_keepdim(&self, axes: &[usize]) -> Self {
        let mut target = self.shape.clone();
        for &a in axes {
            target[a] = 1;
        }
        self.reduce_to(&target).expect("valid reduction")
    }

    /// Split dims into (outer, axis, inner) sizes.
    fn split_at_axis(&self, axis: usize) -> (usize, usize, usize) {
        let outer = numel(&self.shape[..axis]);
        let inner = numel(&self.shape[axis + 1..]);
        (outer, self.shape[axis], inner)
    }

    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Self> {
        if axis >= self.ndim() || start + len > self.shape[axis] {
            return Err(Error::Shape(format!(
                "narrow axis {axis} [{start}, {}) out of range for {:?}",
                start + len,
                self.shape
            )));
        }
        let (outer, dim, inner) = self.split_at_axis(axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * dim * inner + start * inner;
            out.extend_from_slice(&self.data[base..base + len * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = len;
        Ok(Self { shape, data: out })
    }

    pub fn concat(parts: &[&Self], axis: usize) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        if axis >= first.ndim() {
            return Err(Error::Shape(format!("concat axis {axis} for rank {}", first.ndim())));
        }
        for p in parts {
            let ok = p.ndim() == first.ndim()
                && p.shape.iter().zip(&first.shape).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(Error::Shape(format!(
                    "concat shape mismatch {:?} vs {:?} on axis {axis}",
                    p.shape, first.shape
                )));
            }
        }
        let outer = numel(&first.shape[..axis]);
        let inner = numel(&first.shape[axis + 1..]);
        let total_axis: usize = parts.iter().map(|p| p.shape[axis]).sum();
        let mut out = Vec::with_capacity(outer * total_axis * inner);
        for o in 0..outer {
            for p in parts {
                let chunk = p.shape[axis] * inner;
                out.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first.shape.clone();
        shape[axis] = total_axis;
        Ok(Self { shape, data: out })
    }

    /// Batched matrix product over leading dims: `[.., m, k] x [.., k, n]`.
    /// `ta` / `tb` treat the trailing two dims of the operand as transposed.
    pub fn bmm(&self, other: &Self, ta: bool, tb: bool) -> Result<Self> {
        if self.ndim() < 2 || self.ndim() != other.ndim() {
            return Err(Error::Shape(format!("bmm ranks {:?} x {:?}", self.shape, other.shape)));
        }
        let r = self.ndim();
        if self.shape[..r - 2] != other.shape[..r - 2] {
            return Err(Error::Shape(format!(
                "bmm batch dims {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let (a0, a1) = (self.shape[r - 2], self.shape[r - 1]);
        let (b0, b1) = (other.shape[r - 2], other.shape[r - 1]);
        let (m, ka) = if ta { (a1, a0) } else { (a0, a1) };
        let (kb, n) = if tb { (b1, b0) } else { (b0, b1) };
        if ka != kb {
            return Err(Error::Shape(format!(
                "bmm inner dims {:?}{} x {:?}{}",
                self.shape,
                if ta { "^T" } else { "" },
                other.shape,
                if tb { "^T" } else { "" }
            )));
        }
        let batch = numel(&self.shape[..r - 2]);
        let mut out = vec![T::zero(); batch * m * n];
        for bi in 0..batch {
            let a = &self.data[bi * a0 * a1..(bi + 1) * a0 * a1];
            let b = &other.data[bi * b0 * b1..(bi + 1) * b0 * b1];
            let am = if ta { MatRef::transposed(a, m, ka) } else { MatRef::new(a, m, ka) };
            let bm = if tb { MatRef::transposed(b, kb, n) } else { MatRef::new(b, kb, n) };
            gemm(am, bm, T::zero(), &mut out[bi * m * n..(bi + 1) * m * n]);
        }
        let mut shape = self.shape[..r - 2].to_vec();
        shape.extend_from_slice(&[m, n]);
        Ok(Self { shape, data: out })
    }
}

/// Geometry of a square-kernel 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_hw(&self) -> (usize, usize) {
        conv2d_out_hw(self.height, self.width, self.kernel, self.stride, self.pad)
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    /// Output columns `[lo, hi)` whose input column `ox * stride + kx - pad` is in range.
    fn valid_ox(&self, kx: usize, ow: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = self.pad.saturating_sub(kx).div_ceil(s).min(ow);
        // Largest ox with ox * s + kx - pad <= width - 1.
        let limit = self.width + self.pad;
        let hi = if limit <= kx { 0 } else { ((limit - kx - 1) / s + 1).min(ow) };
        (lo, hi.max(lo))
    }

    /// Unfold one `[c, h, w]` image into `[c*k*k, oh*ow]` columns.
    pub fn im2col<T: Scalar>(&self, img: &[T], cols: &mut [T]) {
        let (oh, ow) = self.out_hw();
        let k = self.kernel;
        let hw = self.height * self.width;
        for c in 0..self.channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                    let (lo, hi) = self.valid_ox(kx, ow);
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        let line = &mut dst[oy * ow..(oy + 1) * ow];
                        if iy < 0 || iy >= self.height as isize || lo == hi {
                            line.fill(T::zero());
                            continue;
                        }
                        line[..lo].fill(T::zero());
                        line[hi..].fill(T::zero());
                        let src = &img[c * hw + iy as usize * self.width..][..self.width];
                        let x0 = lo * self.stride + kx - self.pad;
                        if self.stride == 1 {
                            line[lo..hi].copy_from_slice(&src[x0..x0 + (hi - lo)]);
                        } else {
                            for (j, v) in line[lo..hi].iter_mut().enumerate() {
                                *v = src[x0 + j * self.stride];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Accumulate `[c*k*k, oh*ow]` columns back into a `[c, h, w]` image.
    pub fn col2im<T: Scalar>(&self, cols: &[T], img: &mut [T]) {
        let (oh, ow) = self.out_hw();
        let k = self.kernel;
        let hw = self.height * self.width;
        for c in 0..self.channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                    let (lo, hi) = self.valid_ox(kx, ow);
                    if lo == hi {
                        continue;
                    }
                    let x0 = lo * self.stride + kx - self.pad;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.height as isize {
                            continue;
                        }
                        let dst = &mut img[c * hw + iy as usize * self.width..][..self.width];
                        let line = &src[oy * ow + lo..oy * ow + hi];
                        if self.stride == 1 {
                            for (d, &v) in dst[x0..x0 + line.len()].iter_mut().zip(line) {
                                *d = *d + v;
                            }
                        } else {
                            for (j, &v) in line.iter().enumerate() {
                                let d = &mut dst[x0 + j * self.stride];
                                *d = *d + v;
                            }
                        }
                    }
                }
            }
        }
    }
}
