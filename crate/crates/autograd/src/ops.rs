//! Differentiable operations on [`Var`].
//!
//! Shape violations inside a graph are programming errors and panic with the
//! offending shapes; callers validate user-facing inputs before building graphs.

use std::ops::{Add, Mul, Neg, Sub};
use std::rc::Rc;

use crate::graph::{Graph, Var};
use crate::scalar::{gemm, MatRef, Scalar};
use crate::tensor::{ConvGeom, Tensor};

fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let rank = a.len().max(b.len());
    let pa: Vec<usize> = std::iter::repeat(1).take(rank - a.len()).chain(a.iter().copied()).collect();
    let pb: Vec<usize> = std::iter::repeat(1).take(rank - b.len()).chain(b.iter().copied()).collect();
    pa.iter()
        .zip(&pb)
        .map(|(&x, &y)| {
            if x == y || y == 1 {
                x
            } else if x == 1 {
                y
            } else {
                panic!("incompatible shapes for broadcasting: {a:?} and {b:?}")
            }
        })
        .collect()
}

fn c<T: Scalar>(v: f64) -> T {
    T::from_f64_lossy(v)
}

impl<'g, T: Scalar> Var<'g, T> {
    fn unary(
        self,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static, // (x, y) -> dy/dx
    ) -> Var<'g, T> {
        let x = self.value();
        let y = Rc::new(x.map(f));
        let (xc, yc) = (Rc::clone(&x), Rc::clone(&y));
        let out = (*y).clone();
        self.graph.op(out, &[self], move |g| {
            let data = g
                .data()
                .iter()
                .zip(xc.data().iter().zip(yc.data()))
                .map(|(&g, (&x, &y))| g * df(x, y))
                .collect();
            vec![Some(Tensor::new(g.shape().to_vec(), data).expect("unary grad"))]
        })
    }

    fn binary_same(
        self,
        other: Var<'g, T>,
        f: impl Fn(T, T) -> T,
        grads: impl Fn(&Tensor<T>, &Tensor<T>, &Tensor<T>) -> (Tensor<T>, Tensor<T>) + 'static,
    ) -> Var<'g, T> {
        let (a, b) = (self.value(), other.value());
        let out = a.zip_map(&b, f);
        self.graph.op(out, &[self, other], move |g| {
            let (ga, gb) = grads(g, &a, &b);
            vec![Some(ga), Some(gb)]
        })
    }

    fn broadcast_pair(self, other: Var<'g, T>) -> (Var<'g, T>, Var<'g, T>) {
        let (sa, sb) = (self.shape(), other.shape());
        if sa == sb {
            return (self, other);
        }
        let shape = broadcast_shape(&sa, &sb);
        (self.broadcast_to(&shape), other.broadcast_to(&shape))
    }

    pub fn add(self, other: Var<'g, T>) -> Var<'g, T> {
        let (a, b) = self.broadcast_pair(other);
        a.binary_same(b, |x, y| x + y, |g, _, _| (g.clone(), g.clone()))
    }

    pub fn sub(self, other: Var<'g, T>) -> Var<'g, T> {
        let (a, b) = self.broadcast_pair(other);
        a.binary_same(b, |x, y| x - y, |g, _, _| (g.clone(), g.map(|v| -v)))
    }

    pub fn mul(self, other: Var<'g, T>) -> Var<'g, T> {
        let (a, b) = self.broadcast_pair(other);
        a.binary_same(b, |x, y| x * y, |g, a, b| (g.zip_map(b, |g, b| g * b), g.zip_map(a, |g, a| g * a)))
    }

    pub fn div(self, other: Var<'g, T>) -> Var<'g, T> {
        let (a, b) = self.broadcast_pair(other);
        a.binary_same(
            b,
            |x, y| x / y,
            |g, a, b| {
                let ga = g.zip_map(b, |g, b| g / b);
                let gb_data = g
                    .data()
                    .iter()
                    .zip(a.data().iter().zip(b.data()))
                    .map(|(&g, (&a, &b))| -g * a / (b * b))
                    .collect();
                (ga, Tensor::new(g.shape().to_vec(), gb_data).expect("div grad"))
            },
        )
    }

    pub fn neg(self) -> Var<'g, T> {
        self.scale(-T::one())
    }

    pub fn scale(self, k: T) -> Var<'g, T> {
        self.unary(move |x| x * k, move |_, _| k)
    }

    /// Division by a constant (exact where `x / k` is representable).
    pub fn div_scalar(self, k: T) -> Var<'g, T> {
        self.unary(move |x| x / k, move |_, _| T::one() / k)
    }

    pub fn add_scalar(self, k: T) -> Var<'g, T> {
        self.unary(move |x| x + k, |_, _| T::one())
    }

    /// `k - self`.
    pub fn rsub_scalar(self, k: T) -> Var<'g, T> {
        self.unary(move |x| k - x, |_, _| -T::one())
    }

    pub fn exp(self) -> Var<'g, T> {
        self.unary(|x| x.exp(), |_, y| y)
    }

    pub fn ln(self) -> Var<'g, T> {
        self.unary(|x| x.ln(), |x, _| T::one() / x)
    }

    pub fn sqrt(self) -> Var<'g, T> {
        self.unary(|x| x.sqrt(), |_, y| c::<T>(0.5) / y)
    }

    pub fn square(self) -> Var<'g, T> {
        self.unary(|x| x * x, |x, _| x + x)
    }

    pub fn abs(self) -> Var<'g, T> {
        self.unary(|x| x.abs(), |x, _| if x > T::zero() { T::one() } else if x < T::zero() { -T::one() } else { T::zero() })
    }

    pub fn sigmoid(self) -> Var<'g, T> {
        self.unary(sigmoid, |_, y| y * (T::one() - y))
    }

    pub fn tanh(self) -> Var<'g, T> {
        self.unary(|x| x.tanh(), |_, y| T::one() - y * y)
    }

    pub fn relu(self) -> Var<'g, T> {
        self.unary(|x| x.max(T::zero()), |x, _| if x > T::zero() { T::one() } else { T::zero() })
    }

    /// `x * sigmoid(x)`; smooth everywhere.
    pub fn silu(self) -> Var<'g, T> {
        self.unary(
            |x| x * sigmoid(x),
            |x, _| {
                let s = sigmoid(x);
                s * (T::one() + x * (T::one() - s))
            },
        )
    }

    /// Clamp into `[lo, hi]`; the gradient is zero outside the open interval.
    pub fn clamp(self, lo: T, hi: T) -> Var<'g, T> {
        self.unary(
            move |x| x.max(lo).min(hi),
            move |x, _| if x > lo && x < hi { T::one() } else { T::zero() },
        )
    }

    /// `max(x, lo)`; the gradient is zero where the floor is active.
    pub fn clamp_min(self, lo: T) -> Var<'g, T> {
        self.unary(move |x| x.max(lo), move |x, _| if x > lo { T::one() } else { T::zero() })
    }

    pub fn broadcast_to(self, shape: &[usize]) -> Var<'g, T> {
        let src = self.shape();
        if src == shape {
            return self;
        }
        let out = self.value().broadcast_to(shape).unwrap_or_else(|e| panic!("{e}"));
        self.graph.op(out, &[self], move |g| vec![Some(g.sum_to(&src).expect("sum_to"))])
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'g, T> {
        let src = self.shape();
        let out = self.value().reshape(shape).unwrap_or_else(|e| panic!("{e}"));
        self.graph.op(out, &[self], move |g| vec![Some(g.reshape(&src).expect("reshape grad"))])
    }

    pub fn permute(self, axes: &[usize]) -> Var<'g, T> {
        let out = self.value().permute(axes);
        let mut inverse = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        self.graph.op(out, &[self], move |g| vec![Some(g.permute(&inverse))])
    }

    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Var<'g, T> {
        let src = self.shape();
        let out = self.value().narrow(axis, start, len).unwrap_or_else(|e| panic!("{e}"));
        self.graph.op(out, &[self], move |g| {
            let mut parts: Vec<Tensor<T>> = Vec::with_capacity(3);
            if start > 0 {
                let mut s = src.clone();
                s[axis] = start;
                parts.push(Tensor::zeros(&s));
            }
            parts.push(g.clone());
            let rest = src[axis] - start - len;
            if rest > 0 {
                let mut s = src.clone();
                s[axis] = rest;
                parts.push(Tensor::zeros(&s));
            }
            let refs: Vec<&Tensor<T>> = parts.iter().collect();
            vec![Some(Tensor::concat(&refs, axis).expect("narrow grad"))]
        })
    }

    pub fn concat(parts: &[Var<'g, T>], axis: usize) -> Var<'g, T> {
        let graph = parts.first().expect("concat of nothing").graph;
        let values: Vec<Rc<Tensor<T>>> = parts.iter().map(|p| p.value()).collect();
        let refs: Vec<&Tensor<T>> = values.iter().map(|v| v.as_ref()).collect();
        let out = Tensor::concat(&refs, axis).unwrap_or_else(|e| panic!("{e}"));
        let sizes: Vec<usize> = values.iter().map(|v| v.shape()[axis]).collect();
        graph.op(out, parts, move |g| {
            let mut start = 0;
            sizes
                .iter()
                .map(|&len| {
                    let piece = g.narrow(axis, start, len).expect("concat grad");
                    start += len;
                    Some(piece)
                })
                .collect()
        })
    }

    pub fn sum_all(self) -> Var<'g, T> {
        let src = self.shape();
        let out = Tensor::scalar(self.value().sum());
        self.graph.op(out, &[self], move |g| vec![Some(Tensor::full(&src, g.item()))])
    }

    pub fn mean_all(self) -> Var<'g, T> {
        let n = self.value().numel().max(1);
        self.sum_all().div_scalar(c::<T>(n as f64))
    }

    /// Sum over `axes`; reduced dims are kept with size 1 when `keepdim`.
    pub fn sum_axes(self, axes: &[usize], keepdim: bool) -> Var<'g, T> {
        let src = self.shape();
        let kept = self.value().sum_axes_keepdim(axes);
        let kept_shape = kept.shape().to_vec();
        let summed = self.graph.op(kept, &[self], move |g| {
            vec![Some(g.broadcast_to(&src).expect("sum grad"))]
        });
        if keepdim {
            summed
        } else {
            let shape: Vec<usize> = kept_shape
                .iter()
                .enumerate()
                .filter(|(i, _)| !axes.contains(i))
                .map(|(_, &d)| d)
                .collect();
            summed.reshape(&shape)
        }
    }

    pub fn mean_axes(self, axes: &[usize], keepdim: bool) -> Var<'g, T> {
        let shape = self.shape();
        let count: usize = axes.iter().map(|&a| shape[a]).product();
        self.sum_axes(axes, keepdim).div_scalar(c::<T>(count.max(1) as f64))
    }

    /// Batched matrix product over leading dims (`[.., m, k] x [.., k, n]`).
    pub fn matmul(self, other: Var<'g, T>) -> Var<'g, T> {
        let (a, b) = (self.value(), other.value());
        let out = a.bmm(&b, false, false).unwrap_or_else(|e| panic!("{e}"));
        self.graph.op(out, &[self, other], move |g| {
            let ga = g.bmm(&b, false, true).expect("matmul grad a");
            let gb = a.bmm(g, true, false).expect("matmul grad b");
            vec![Some(ga), Some(gb)]
        })
    }

    /// Softmax over the last axis.
    pub fn softmax_last(self) -> Var<'g, T> {
        let x = self.value();
        let n = *x.shape().last().expect("softmax of scalar");
        let mut y = (*x).clone();
        for row in y.data_mut().chunks_mut(n) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut s = T::zero();
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s = s + *v;
            }
            for v in row.iter_mut() {
                *v = *v / s;
            }
        }
        let yc = y.clone();
        self.graph.op(y, &[self], move |g| {
            let mut out = g.clone();
            for (og, yr) in out.data_mut().chunks_mut(n).zip(yc.data().chunks(n)) {
                let dot: T = og.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                for (o, &y) in og.iter_mut().zip(yr) {
                    *o = y * (*o - dot);
                }
            }
            vec![Some(out)]
        })
    }

    /// 2-D convolution. `self`: `[n, c, h, w]`, `weight`: `[o, c, k, k]`,
    /// `bias`: `[o]`.
    pub fn conv2d(self, weight: Var<'g, T>, bias: Option<Var<'g, T>>, stride: usize, pad: usize) -> Var<'g, T> {
        let x = self.value();
        let w = weight.value();
        let (xs, ws) = (x.shape(), w.shape());
        assert!(xs.len() == 4 && ws.len() == 4, "conv2d expects 4-D input and weight, got {xs:?} / {ws:?}");
        assert_eq!(xs[1], ws[1], "conv2d channel mismatch: input {xs:?}, weight {ws:?}");
        assert_eq!(ws[2], ws[3], "conv2d needs square kernels");
        assert!(xs[2] + 2 * pad >= ws[2] && xs[3] + 2 * pad >= ws[3], "conv2d kernel larger than input");
        let geom = ConvGeom { channels: xs[1], height: xs[2], width: xs[3], kernel: ws[2], stride, pad };
        let (n, o) = (xs[0], ws[0]);
        let (oh, ow) = geom.out_hw();
        let (rows, ncols) = (geom.col_rows(), oh * ow);
        let in_sz = geom.channels * geom.height * geom.width;
        let b = bias.map(|b| {
            let bv = b.value();
            assert_eq!(bv.shape(), &[o], "conv2d bias shape");
            bv
        });
        let mut out = vec![T::zero(); n * o * ncols];
        let mut cols = vec![T::zero(); rows * ncols];
        for i in 0..n {
            geom.im2col(&x.data()[i * in_sz..(i + 1) * in_sz], &mut cols);
            let dst = &mut out[i * o * ncols..(i + 1) * o * ncols];
            if let Some(bv) = &b {
                for (oc, chunk) in dst.chunks_mut(ncols).enumerate() {
                    chunk.fill(bv.data()[oc]);
                }
            }
            gemm(MatRef::new(w.data(), o, rows), MatRef::new(&cols, rows, ncols), T::one(), dst);
        }
        drop(cols);
        let out = Tensor::new(vec![n, o, oh, ow], out).expect("conv2d out");
        let mut parents = vec![self, weight];
        let has_bias = bias.is_some();
        let need_gx = self.requires_grad();
        if let Some(bv) = bias {
            parents.push(bv);
        }
        self.graph.op(out, &parents, move |g| {
            let mut gx = vec![T::zero(); if need_gx { n * in_sz } else { 0 }];
            // Accumulated as dW^T so the large operand is read row-major.
            let mut gwt = vec![T::zero(); rows * o];
            let mut cols = vec![T::zero(); rows * ncols];
            let mut gcols = vec![T::zero(); if need_gx { rows * ncols } else { 0 }];
            for i in 0..n {
                let gy = &g.data()[i * o * ncols..(i + 1) * o * ncols];
                geom.im2col(&x.data()[i * in_sz..(i + 1) * in_sz], &mut cols);
                // dW^T += cols * dY^T
                gemm(MatRef::new(&cols, rows, ncols), MatRef::transposed(gy, ncols, o), T::one(), &mut gwt);
                if need_gx {
                    // dcols = W^T * dY
                    gemm(MatRef::transposed(w.data(), rows, o), MatRef::new(gy, o, ncols), T::zero(), &mut gcols);
                    geom.col2im(&gcols, &mut gx[i * in_sz..(i + 1) * in_sz]);
                }
            }
            let mut gw = vec![T::zero(); o * rows];
            for r in 0..rows {
                for oc in 0..o {
                    gw[oc * rows + r] = gwt[r * o + oc];
                }
            }
            let mut res = vec![
                need_gx.then(|| Tensor::new(x.shape().to_vec(), gx).expect("conv gx")),
                Some(Tensor::new(w.shape().to_vec(), gw).expect("conv gw")),
            ];
            if has_bias {
                let mut gb = vec![T::zero(); o];
                for i in 0..n {
                    for (oc, chunk) in g.data()[i * o * ncols..(i + 1) * o * ncols].chunks(ncols).enumerate() {
                        gb[oc] = gb[oc] + chunk.iter().copied().sum::<T>();
                    }
                }
                res.push(Some(Tensor::new(vec![o], gb).expect("conv gb")));
            }
            res
        })
    }

    /// Nearest-neighbour upsampling of `[n, c, h, w]` by an integer factor.
    pub fn upsample_nearest(self, factor: usize) -> Var<'g, T> {
        let x = self.value();
        let s = x.shape().to_vec();
        assert_eq!(s.len(), 4, "upsample expects [n, c, h, w]");
        let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
        let (oh, ow) = (h * factor, w * factor);
        let mut out = vec![T::zero(); planes * oh * ow];
        for p in 0..planes {
            let src = &x.data()[p * h * w..(p + 1) * h * w];
            let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
            for y in 0..oh {
                for xx in 0..ow {
                    dst[y * ow + xx] = src[(y / factor) * w + xx / factor];
                }
            }
        }
        let out = Tensor::new(vec![s[0], s[1], oh, ow], out).expect("upsample out");
        self.graph.op(out, &[self], move |g| {
            let mut gx = vec![T::zero(); planes * h * w];
            for p in 0..planes {
                let src = &g.data()[p * oh * ow..(p + 1) * oh * ow];
                let dst = &mut gx[p * h * w..(p + 1) * h * w];
                for y in 0..oh {
                    for xx in 0..ow {
                        let d = &mut dst[(y / factor) * w + xx / factor];
                        *d = *d + src[y * ow + xx];
                    }
                }
            }
            vec![Some(Tensor::new(s.clone(), gx).expect("upsample grad"))]
        })
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Graph<T> {
    /// Constant filled with `value`, shaped like `shape`.
    pub fn full(&self, shape: &[usize], value: T) -> Var<'_, T> {
        self.constant(Tensor::full(shape, value))
    }

    pub fn scalar(&self, value: T) -> Var<'_, T> {
        self.constant(Tensor::scalar(value))
    }
}

impl<'g, T: Scalar> Add for Var<'g, T> {
    type Output = Var<'g, T>;
    fn add(self, rhs: Self) -> Self::Output {
        Var::add(self, rhs)
    }
}

impl<'g, T: Scalar> Sub for Var<'g, T> {
    type Output = Var<'g, T>;
    fn sub(self, rhs: Self) -> Self::Output {
        Var::sub(self, rhs)
    }
}

impl<'g, T: Scalar> Mul for Var<'g, T> {
    type Output = Var<'g, T>;
    fn mul(self, rhs: Self) -> Self::Output {
        Var::mul(self, rhs)
    }
}

impl<'g, T: Scalar> Neg for Var<'g, T> {
    type Output = Var<'g, T>;
    fn neg(self) -> Self::Output {
        Var::neg(self)
    }
}
