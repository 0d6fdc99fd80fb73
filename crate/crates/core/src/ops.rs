//! Forward and backward kernels for every differentiable primitive.
//!
//! These are pure functions over [`Tensor`]s. The tape in [`crate::autodiff`]
//! records calls to them and replays the `*_backward` halves in reverse.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

/// Probability clamp applied inside [`bce_loss`].
pub const BCE_EPSILON: f64 = 1e-7;

/// A same-padded, optionally dilated 2-D convolution with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvSpec<T> {
    pub kernel: usize,
    pub dilation: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// `(kernel, kernel, in_channels, out_channels)`
    pub weights: Tensor<T>,
    /// `(1, 1, 1, out_channels)`
    pub bias: Tensor<T>,
}

pub fn kernel_shape(kernel: usize, in_channels: usize, out_channels: usize) -> Shape {
    Shape::new(kernel, kernel, in_channels, out_channels)
}

pub fn bias_shape(width: usize) -> Shape {
    Shape::new(1, 1, 1, width)
}

impl<T: Real> ConvSpec<T> {
    pub fn new(
        kernel: usize,
        dilation: usize,
        weights: Tensor<T>,
        bias: Tensor<T>,
    ) -> Result<Self> {
        let ws = weights.shape();
        validate_conv_geometry(kernel, dilation)?;
        if ws.n != kernel || ws.h != kernel {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                detail: format!("weights {ws} do not match kernel {kernel}"),
            });
        }
        if bias.shape() != bias_shape(ws.c) {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                detail: format!("bias {} for {} output channels", bias.shape(), ws.c),
            });
        }
        Ok(Self {
            kernel,
            dilation,
            in_channels: ws.w,
            out_channels: ws.c,
            weights,
            bias,
        })
    }

    /// Glorot-uniform weights and zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        kernel: usize,
        dilation: usize,
        in_channels: usize,
        out_channels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        validate_conv_geometry(kernel, dilation)?;
        let shape = kernel_shape(kernel, in_channels, out_channels);
        let weights = glorot_uniform(
            shape,
            kernel * kernel * in_channels,
            kernel * kernel * out_channels,
            rng,
        );
        Self::new(kernel, dilation, weights, Tensor::zeros(bias_shape(out_channels)))
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

pub fn validate_conv_geometry(kernel: usize, dilation: usize) -> Result<()> {
    if kernel == 0 || kernel % 2 == 0 {
        return Err(Error::InvalidKernel(kernel));
    }
    if dilation == 0 {
        return Err(Error::InvalidDilation);
    }
    Ok(())
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`. Values are drawn in `f64` so
/// that `f32` and `f64` networks built from one seed agree up to rounding.
pub fn glorot_uniform<T: Real, R: Rng + ?Sized>(
    shape: Shape,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor<T> {
    let fans = (fan_in + fan_out).max(1) as f64;
    let bound = (6.0 / fans).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let data = (0..shape.numel())
        .map(|_| T::from_f64_lossy(dist.sample(rng)))
        .collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

/// Convolve with zero "same" padding: output `(h, w)` equals input `(h, w)`.
pub fn conv2d<T: Real>(x: &Tensor<T>, spec: &ConvSpec<T>) -> Result<Tensor<T>> {
    conv2d_forward(x, &spec.weights, &spec.bias, spec.dilation)
}

fn check_conv<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, dilation: usize) -> Result<()> {
    let ws = w.shape();
    if ws.n != ws.h {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            detail: format!("non-square kernel {ws}"),
        });
    }
    validate_conv_geometry(ws.n, dilation)?;
    if x.shape().c != ws.w {
        return Err(Error::ChannelMismatch {
            op: "conv2d",
            expected: ws.w,
            found: x.shape().c,
        });
    }
    if b.shape() != bias_shape(ws.c) {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            detail: format!("bias {} for {} output channels", b.shape(), ws.c),
        });
    }
    Ok(())
}

/// Patch matrix: one row per output pixel, columns ordered `(u, v, c)` to
/// match the row-major kernel layout.
fn im2col<T: Real>(x: &Tensor<T>, k: usize, dilation: usize) -> Vec<T> {
    let s = x.shape();
    let half = (k / 2) as isize;
    let cols = k * k * s.c;
    let mut out = vec![T::zero(); s.n * s.h * s.w * cols];
    let xd = x.data();
    let mut row = 0;
    for b in 0..s.n {
        for i in 0..s.h {
            for j in 0..s.w {
                let dst = &mut out[row * cols..(row + 1) * cols];
                for u in 0..k {
                    let ii = i as isize + (u as isize - half) * dilation as isize;
                    if ii < 0 || ii >= s.h as isize {
                        continue;
                    }
                    for v in 0..k {
                        let jj = j as isize + (v as isize - half) * dilation as isize;
                        if jj < 0 || jj >= s.w as isize {
                            continue;
                        }
                        let src = s.offset(b, ii as usize, jj as usize, 0);
                        let d = (u * k + v) * s.c;
                        dst[d..d + s.c].copy_from_slice(&xd[src..src + s.c]);
                    }
                }
                row += 1;
            }
        }
    }
    out
}

/// Scatter-add a patch-gradient matrix back onto the input grid.
fn col2im<T: Real>(dcols: &[T], shape: Shape, k: usize, dilation: usize) -> Tensor<T> {
    let half = (k / 2) as isize;
    let cols = k * k * shape.c;
    let mut dx = Tensor::zeros(shape);
    let dxd = dx.data_mut();
    let mut row = 0;
    for b in 0..shape.n {
        for i in 0..shape.h {
            for j in 0..shape.w {
                let src = &dcols[row * cols..(row + 1) * cols];
                for u in 0..k {
                    let ii = i as isize + (u as isize - half) * dilation as isize;
                    if ii < 0 || ii >= shape.h as isize {
                        continue;
                    }
                    for v in 0..k {
                        let jj = j as isize + (v as isize - half) * dilation as isize;
                        if jj < 0 || jj >= shape.w as isize {
                            continue;
                        }
                        let dst = shape.offset(b, ii as usize, jj as usize, 0);
                        let s = (u * k + v) * shape.c;
                        for (d, &g) in dxd[dst..dst + shape.c].iter_mut().zip(&src[s..s + shape.c]) {
                            *d += g;
                        }
                    }
                }
                row += 1;
            }
        }
    }
    dx
}

pub fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    dilation: usize,
) -> Result<Tensor<T>> {
    check_conv(x, w, b, dilation)?;
    if T::WIDEN_FORWARD {
        let y = conv2d_forward(&x.cast::<f64>(), &w.cast(), &b.cast(), dilation)?;
        return Ok(y.cast());
    }
    let s = x.shape();
    let k = w.shape().n;
    let cout = w.shape().c;
    let pixels = s.n * s.h * s.w;
    let depth = k * k * s.c;

    let mut out = Tensor::zeros(s.with_channels(cout));
    let bias = b.data();
    for px in out.data_mut().chunks_exact_mut(cout.max(1)).take(pixels) {
        px.copy_from_slice(&bias[..px.len()]);
    }
    if depth == 0 || cout == 0 || pixels == 0 {
        return Ok(out);
    }
    let od = out.data_mut();
    if k == 1 {
        T::gemm(pixels, depth, cout, T::one(), x.data(), depth as isize, 1, w.data(), cout as isize, 1, T::one(), od, cout as isize, 1);
    } else {
        let cols = im2col(x, k, dilation);
        T::gemm(pixels, depth, cout, T::one(), &cols, depth as isize, 1, w.data(), cout as isize, 1, T::one(), od, cout as isize, 1);
    }
    Ok(out)
}

/// Gradients of a convolution. `dx` is skipped when `need_input_grad` is false.
pub struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dilation: usize,
    dy: &Tensor<T>,
    need_input_grad: bool,
) -> ConvGrads<T> {
    let s = x.shape();
    let k = w.shape().n;
    let cout = w.shape().c;
    let pixels = s.n * s.h * s.w;
    let depth = k * k * s.c;

    let mut db = Tensor::zeros(bias_shape(cout));
    if cout > 0 {
        let dbd = db.data_mut();
        for px in dy.data().chunks_exact(cout) {
            for (acc, &g) in dbd.iter_mut().zip(px) {
                *acc += g;
            }
        }
    }
    let mut dw = Tensor::zeros(w.shape());
    if depth == 0 || cout == 0 || pixels == 0 {
        let dx = need_input_grad.then(|| Tensor::zeros(s));
        return ConvGrads { dx, dw, db };
    }

    let cols_owned;
    let cols: &[T] = if k == 1 {
        x.data()
    } else {
        cols_owned = im2col(x, k, dilation);
        &cols_owned
    };
    // dw = colsᵀ · dy
    T::gemm(depth, pixels, cout, T::one(), cols, 1, depth as isize, dy.data(), cout as isize, 1, T::zero(), dw.data_mut(), cout as isize, 1);

    let dx = need_input_grad.then(|| {
        // dcols = dy · wᵀ
        let mut dcols = vec![T::zero(); pixels * depth];
        T::gemm(pixels, cout, depth, T::one(), dy.data(), cout as isize, 1, w.data(), 1, cout as isize, T::zero(), &mut dcols, depth as isize, 1);
        if k == 1 {
            Tensor::from_vec(s, dcols).expect("pointwise gradient has input shape")
        } else {
            col2im(&dcols, s, k, dilation)
        }
    });
    ConvGrads { dx, dw, db }
}

/// Non-overlapping `m×m` max pooling with stride `m`.
pub fn maxpool2d<T: Real>(x: &Tensor<T>, m: usize) -> Result<Tensor<T>> {
    maxpool2d_with_indices(x, m).map(|(y, _)| y)
}

/// Max pooling that also returns, per output element, the flat input index
/// of the selected maximum (first occurrence in row-major window order).
pub fn maxpool2d_with_indices<T: Real>(x: &Tensor<T>, m: usize) -> Result<(Tensor<T>, Vec<usize>)> {
    let s = x.shape();
    if m == 0 || s.h % m != 0 || s.w % m != 0 {
        return Err(Error::NotDivisible {
            op: "maxpool2d",
            h: s.h,
            w: s.w,
            m,
        });
    }
    let os = Shape::new(s.n, s.h / m, s.w / m, s.c);
    let mut out = Vec::with_capacity(os.numel());
    let mut arg = Vec::with_capacity(os.numel());
    let xd = x.data();
    for b in 0..os.n {
        for i in 0..os.h {
            for j in 0..os.w {
                for c in 0..os.c {
                    let mut best_idx = s.offset(b, i * m, j * m, c);
                    let mut best = xd[best_idx];
                    for u in 0..m {
                        for v in 0..m {
                            let idx = s.offset(b, i * m + u, j * m + v, c);
                            if xd[idx] > best {
                                best = xd[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_idx);
                }
            }
        }
    }
    Ok((Tensor::from_vec(os, out)?, arg))
}

pub fn maxpool2d_backward<T: Real>(input_shape: Shape, argmax: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(input_shape);
    let dxd = dx.data_mut();
    for (&idx, &g) in argmax.iter().zip(dy.data()) {
        dxd[idx] += g;
    }
    dx
}

/// Concatenate along channels in argument order.
pub fn concat_channels<T: Real>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts.first().ok_or_else(|| Error::ShapeMismatch {
        op: "concat_channels",
        detail: "no parts".into(),
    })?;
    let grid = first.shape();
    for p in parts {
        if !p.shape().same_grid(&grid) {
            return Err(Error::ShapeMismatch {
                op: "concat_channels",
                detail: format!("{} vs {}", grid, p.shape()),
            });
        }
    }
    let total: usize = parts.iter().map(|p| p.shape().c).sum();
    let os = grid.with_channels(total);
    let pixels = grid.n * grid.h * grid.w;
    let mut out = Vec::with_capacity(os.numel());
    for px in 0..pixels {
        for p in parts {
            let c = p.shape().c;
            out.extend_from_slice(&p.data()[px * c..(px + 1) * c]);
        }
    }
    Tensor::from_vec(os, out)
}

/// Inverse of [`concat_channels`]: slice `x` into consecutive channel groups.
pub fn split_channels<T: Real>(x: &Tensor<T>, widths: &[usize]) -> Result<Vec<Tensor<T>>> {
    let s = x.shape();
    let total: usize = widths.iter().sum();
    if total != s.c {
        return Err(Error::ChannelMismatch {
            op: "split_channels",
            expected: total,
            found: s.c,
        });
    }
    let pixels = s.n * s.h * s.w;
    let mut bufs: Vec<Vec<T>> = widths.iter().map(|&c| Vec::with_capacity(pixels * c)).collect();
    for px in x.data().chunks_exact(s.c.max(1)).take(if s.c == 0 { 0 } else { pixels }) {
        let mut start = 0;
        for (buf, &c) in bufs.iter_mut().zip(widths) {
            buf.extend_from_slice(&px[start..start + c]);
            start += c;
        }
    }
    bufs.into_iter()
        .zip(widths)
        .map(|(buf, &c)| Tensor::from_vec(s.with_channels(c), buf))
        .collect()
}

fn per_item_width<T: Real>(x: &Tensor<T>) -> usize {
    let s = x.shape();
    s.h * s.w * s.c
}

/// Fully-connected layer over the flattened `(h, w, c)` features of each
/// batch item. `w` is `(1, 1, inputs, outputs)`, `b` is `(1, 1, 1, outputs)`.
pub fn dense<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let d = per_item_width(x);
    let ws = w.shape();
    if ws.n != 1 || ws.h != 1 || ws.w != d {
        return Err(Error::ShapeMismatch {
            op: "dense",
            detail: format!("input width {d} vs weights {ws}"),
        });
    }
    if b.shape() != bias_shape(ws.c) {
        return Err(Error::ShapeMismatch {
            op: "dense",
            detail: format!("bias {} for {} outputs", b.shape(), ws.c),
        });
    }
    if T::WIDEN_FORWARD {
        return Ok(dense(&x.cast::<f64>(), &w.cast(), &b.cast())?.cast());
    }
    let n = x.shape().n;
    let o = ws.c;
    let mut out = Tensor::zeros(Shape::new(n, 1, 1, o));
    if o == 0 {
        return Ok(out);
    }
    for row in out.data_mut().chunks_exact_mut(o) {
        row.copy_from_slice(b.data());
    }
    if d > 0 {
        T::gemm(n, d, o, T::one(), x.data(), d as isize, 1, w.data(), o as isize, 1, T::one(), out.data_mut(), o as isize, 1);
    }
    Ok(out)
}

pub struct DenseGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

pub fn dense_backward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, dy: &Tensor<T>, need_input_grad: bool) -> DenseGrads<T> {
    let n = x.shape().n;
    let d = per_item_width(x);
    let o = w.shape().c;
    let mut db = Tensor::zeros(bias_shape(o));
    let mut dw = Tensor::zeros(w.shape());
    if o > 0 {
        for row in dy.data().chunks_exact(o) {
            for (acc, &g) in db.data_mut().iter_mut().zip(row) {
                *acc += g;
            }
        }
        T::gemm(d, n, o, T::one(), x.data(), 1, d as isize, dy.data(), o as isize, 1, T::zero(), dw.data_mut(), o as isize, 1);
    }
    let dx = need_input_grad.then(|| {
        let mut dx = Tensor::zeros(x.shape());
        if o > 0 {
            T::gemm(n, o, d, T::one(), dy.data(), o as isize, 1, w.data(), 1, o as isize, T::zero(), dx.data_mut(), d as isize, 1);
        }
        dx
    });
    DenseGrads { dx, dw, db }
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Real>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = dy.clone();
    for (g, &out) in dx.data_mut().iter_mut().zip(y.data()) {
        if out <= T::zero() {
            *g = T::zero();
        }
    }
    dx
}

#[inline]
pub fn sigmoid_scalar<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

pub fn sigmoid_backward<T: Real>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = dy.clone();
    for (g, &s) in dx.data_mut().iter_mut().zip(y.data()) {
        *g *= s * (T::one() - s);
    }
    dx
}

/// Mean over the spatial grid: `(n, h, w, c) -> (n, 1, 1, c)`.
pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.shape();
    let area = s.h * s.w;
    let mut out = Tensor::zeros(Shape::new(s.n, 1, 1, s.c));
    if area == 0 || s.c == 0 {
        return out;
    }
    let inv = T::one() / T::from_usize(area).expect("small integer");
    let od = out.data_mut();
    for (b, item) in x.data().chunks_exact(area * s.c).enumerate() {
        let acc = &mut od[b * s.c..(b + 1) * s.c];
        for px in item.chunks_exact(s.c) {
            for (a, &v) in acc.iter_mut().zip(px) {
                *a += v;
            }
        }
        for a in acc.iter_mut() {
            *a *= inv;
        }
    }
    out
}

pub fn global_avg_pool_backward<T: Real>(input_shape: Shape, dy: &Tensor<T>) -> Tensor<T> {
    let area = input_shape.h * input_shape.w;
    let c = input_shape.c;
    let mut dx = Tensor::zeros(input_shape);
    if area == 0 || c == 0 {
        return dx;
    }
    let inv = T::one() / T::from_usize(area).expect("small integer");
    for (b, item) in dx.data_mut().chunks_exact_mut(area * c).enumerate() {
        let g = &dy.data()[b * c..(b + 1) * c];
        for px in item.chunks_exact_mut(c) {
            for (d, &gv) in px.iter_mut().zip(g) {
                *d = gv * inv;
            }
        }
    }
    dx
}

fn check_labels<T: Real>(p: &Tensor<T>, targets: &[T]) -> Result<()> {
    if p.len() != targets.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            found: targets.len(),
        });
    }
    if p.is_empty() {
        return Err(Error::LengthMismatch { expected: 1, found: 0 });
    }
    for &t in targets {
        if t != T::zero() && t != T::one() {
            return Err(Error::InvalidLabel(t.to_f64_lossy()));
        }
    }
    Ok(())
}

/// Mean binary cross-entropy with probabilities clamped to `[ε, 1-ε]`.
pub fn bce_loss<T: Real>(p: &Tensor<T>, targets: &[T]) -> Result<T> {
    check_labels(p, targets)?;
    let eps = T::from_f64_lossy(BCE_EPSILON);
    let hi = T::one() - eps;
    let total: T = p
        .data()
        .iter()
        .zip(targets)
        .map(|(&pi, &t)| {
            let pc = pi.max(eps).min(hi);
            -(t * pc.ln() + (T::one() - t) * (T::one() - pc).ln())
        })
        .sum();
    Ok(total / T::from_usize(p.len()).expect("small integer"))
}

/// Gradient of [`bce_loss`] with respect to `p`, scaled by `dloss`. The
/// clamp has zero slope outside `[ε, 1-ε]`.
pub fn bce_loss_backward<T: Real>(p: &Tensor<T>, targets: &[T], dloss: T) -> Tensor<T> {
    let eps = T::from_f64_lossy(BCE_EPSILON);
    let hi = T::one() - eps;
    let scale = dloss / T::from_usize(p.len()).expect("small integer");
    let mut dp = Tensor::zeros(p.shape());
    for ((g, &pi), &t) in dp.data_mut().iter_mut().zip(p.data()).zip(targets) {
        if pi < eps || pi > hi {
            continue;
        }
        *g = scale * (-(t / pi) + (T::one() - t) / (T::one() - pi));
    }
    dp
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Shape, data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn f32_forward_is_the_rounded_f64_result() {
        // an f32 running sum would drop each 2^-24 term against the leading 1
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 5), vec![1.0f32, 5.96e-8, 5.96e-8, 5.96e-8, 5.96e-8]).unwrap();
        let w = Tensor::full(Shape::new(1, 1, 5, 1), 1.0f32);
        let b = Tensor::zeros(Shape::new(1, 1, 1, 1));
        let exact: f64 = x.data().iter().map(|&v| v as f64).sum();
        let y = conv2d_forward(&x, &w, &b, 1).unwrap();
        assert_eq!(y.data()[0], exact as f32);
        assert!(y.data()[0] > 1.0);
        let d = dense(&x, &w.clone().reshape(Shape::new(1, 1, 5, 1)).unwrap(), &b).unwrap();
        assert_eq!(d.data()[0], exact as f32);
    }

    #[test]
    fn same_padding_preserves_shape() {
        let mut rng = rand::rng();
        let x = Tensor::<f32>::full(Shape::new(1, 8, 8, 3), 0.5);
        let spec = ConvSpec::glorot(3, 1, 3, 4, &mut rng).unwrap();
        assert_eq!(conv2d(&x, &spec).unwrap().shape(), Shape::new(1, 8, 8, 4));
    }

    #[test]
    fn identity_pointwise_kernel() {
        let x = Tensor::<f64>::from_fn(Shape::new(1, 3, 3, 1), |_, i, j, _| (i * 3 + j) as f64);
        let spec = ConvSpec::new(1, 1, t(kernel_shape(1, 1, 1), &[1.0]), t(bias_shape(1), &[0.0])).unwrap();
        assert_eq!(conv2d(&x, &spec).unwrap(), x);
    }

    #[test]
    fn conv_rejects_channel_mismatch_and_even_kernel() {
        let x = Tensor::<f64>::zeros(Shape::new(1, 4, 4, 2));
        let spec = ConvSpec::new(1, 1, Tensor::zeros(kernel_shape(1, 3, 1)), Tensor::zeros(bias_shape(1))).unwrap();
        assert!(matches!(conv2d(&x, &spec), Err(Error::ChannelMismatch { expected: 3, found: 2, .. })));
        let even = ConvSpec::<f64>::new(2, 1, Tensor::zeros(kernel_shape(2, 2, 1)), Tensor::zeros(bias_shape(1)));
        assert!(matches!(even, Err(Error::InvalidKernel(2))));
    }

    #[test]
    fn zero_input_channels_yield_pure_bias() {
        let x = Tensor::<f64>::zeros(Shape::new(2, 3, 3, 0));
        let spec = ConvSpec::new(3, 2, Tensor::zeros(kernel_shape(3, 0, 2)), t(bias_shape(2), &[0.25, -1.0])).unwrap();
        let y = conv2d(&x, &spec).unwrap();
        assert_eq!(y.shape(), Shape::new(2, 3, 3, 2));
        for px in y.data().chunks(2) {
            assert_eq!(px, &[0.25, -1.0]);
        }
    }

    #[test]
    fn maxpool_hand_enumerated_windows() {
        let x = Tensor::<f64>::from_fn(Shape::new(1, 4, 4, 1), |_, i, j, _| (i * 4 + j + 1) as f64);
        let y = maxpool2d(&x, 2).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 2, 2, 1));
        assert_eq!(y.data(), &[6.0, 8.0, 14.0, 16.0]);
    }

    #[test]
    fn maxpool_identity_and_constant() {
        let x = Tensor::<f64>::from_fn(Shape::new(1, 3, 3, 2), |_, i, j, c| (i + 2 * j + 5 * c) as f64);
        assert_eq!(maxpool2d(&x, 1).unwrap(), x);
        let k = Tensor::<f64>::full(Shape::new(2, 6, 6, 3), 0.7);
        assert_eq!(maxpool2d(&k, 3).unwrap(), Tensor::full(Shape::new(2, 2, 2, 3), 0.7));
        assert!(matches!(maxpool2d(&k, 4), Err(Error::NotDivisible { .. })));
    }

    #[test]
    fn concat_shapes() {
        let a = Tensor::<f32>::zeros(Shape::new(1, 4, 4, 2));
        let b = Tensor::<f32>::zeros(Shape::new(1, 4, 4, 3));
        assert_eq!(concat_channels(&[&a, &b]).unwrap().shape(), Shape::new(1, 4, 4, 5));
        let empty = Tensor::<f32>::zeros(Shape::new(1, 256, 256, 0));
        let p = Tensor::<f32>::full(Shape::new(1, 256, 256, 32), 1.0);
        assert_eq!(concat_channels(&[&empty, &p]).unwrap(), p);
        let bad = Tensor::<f32>::zeros(Shape::new(1, 3, 4, 1));
        assert!(concat_channels(&[&a, &bad]).is_err());
    }

    #[test]
    fn dense_hand_arithmetic() {
        let x = t(Shape::new(1, 1, 1, 2), &[1.0, 2.0]);
        let w = t(Shape::new(1, 1, 2, 1), &[3.0, 4.0]);
        let b = t(bias_shape(1), &[0.5]);
        assert_eq!(dense(&x, &w, &b).unwrap().data(), &[11.5]);

        let eye = t(Shape::new(1, 1, 2, 2), &[1.0, 0.0, 0.0, 1.0]);
        let zb = t(bias_shape(2), &[0.0, 0.0]);
        assert_eq!(dense(&x, &eye, &zb).unwrap().data(), x.data());

        let zero = Tensor::<f64>::zeros(Shape::new(3, 1, 1, 2));
        let bias = t(bias_shape(2), &[0.1, -0.2]);
        let y = dense(&zero, &eye, &bias).unwrap();
        for row in y.data().chunks(2) {
            assert_eq!(row, bias.data());
        }
        let w3 = Tensor::<f64>::zeros(Shape::new(1, 1, 3, 1));
        assert!(dense(&x, &w3, &b).is_err());
    }

    #[test]
    fn activation_values() {
        let x = t(Shape::new(1, 1, 1, 2), &[-1.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 2.0]);
        assert_eq!(sigmoid_scalar(0.0f64), 0.5);
        assert!((sigmoid_scalar(3.0f64.ln()) - 0.75).abs() < 1e-15);
        assert!(sigmoid_scalar(-800.0f64) >= 0.0 && sigmoid_scalar(800.0f64) <= 1.0);
    }

    #[test]
    fn bce_values() {
        let half = Tensor::<f64>::full(Shape::new(2, 1, 1, 1), 0.5);
        let l = bce_loss(&half, &[0.0, 1.0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);

        let exact = t(Shape::new(2, 1, 1, 1), &[1.0, 0.0]);
        assert!(bce_loss(&exact, &[1.0, 0.0]).unwrap() <= -(1.0f64 - 1e-7).ln() + 1e-15);

        let pa = t(Shape::scalar(), &[0.3]);
        let pb = t(Shape::scalar(), &[0.8]);
        let a = bce_loss(&pa, &[1.0]).unwrap();
        let b = bce_loss(&pb, &[0.0]).unwrap();
        let both = bce_loss(&t(Shape::new(2, 1, 1, 1), &[0.3, 0.8]), &[1.0, 0.0]).unwrap();
        assert!((both - (a + b) / 2.0).abs() < 1e-15);

        assert!(matches!(bce_loss(&half, &[0.0, 0.5]), Err(Error::InvalidLabel(_))));
    }

    #[test]
    fn split_inverts_concat() {
        let a = Tensor::<f64>::from_fn(Shape::new(2, 2, 2, 1), |b, i, j, _| (b + i + j) as f64);
        let b = Tensor::<f64>::from_fn(Shape::new(2, 2, 2, 3), |b, i, j, c| (b * i + j * c) as f64);
        let cat = concat_channels(&[&a, &b]).unwrap();
        let parts = split_channels(&cat, &[1, 3]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }
}
