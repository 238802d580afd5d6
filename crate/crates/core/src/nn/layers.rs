//! Layer primitives with explicit forward caches and backward passes.

use super::real::{gemm, Mat, Real};

/// Channel-major feature map (`c x h x w`).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w, data: vec![T::zero(); c * h * w] }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), c * h * w);
        Self { c, h, w, data }
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
    }
}

/// Shape of one convolution; weights are `cout x cin x k x k` followed by
/// `cout` biases at `offset` in the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub offset: usize,
}

impl ConvShape {
    pub fn fan_in(&self) -> usize {
        self.cin * self.k * self.k
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.fan_in()
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.cout
    }

    fn weights<'a, T>(&self, params: &'a [T]) -> &'a [T] {
        &params[self.offset..self.offset + self.weight_len()]
    }

    fn biases<'a, T>(&self, params: &'a [T]) -> &'a [T] {
        let start = self.offset + self.weight_len();
        &params[start..start + self.cout]
    }
}

/// Zero-padded "same" patches: rows `(ci, ky, kx)`, columns `(y, x)`.
fn im2col<T: Real>(input: &Tensor<T>, k: usize) -> Vec<T> {
    let (h, w) = (input.h, input.w);
    let pad = (k / 2) as isize;
    let plane = h * w;
    let mut cols = vec![T::zero(); input.c * k * k * plane];
    for ci in 0..input.c {
        let src = &input.data[ci * plane..(ci + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                let dx = kx as isize - pad;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    let sx_lo = (x_lo as isize + dx) as usize;
                    dst[y * w + x_lo..y * w + x_hi].copy_from_slice(&src[sy * w + sx_lo..sy * w + sx_lo + (x_hi - x_lo)]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add patch gradients back to the input.
fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize, k: usize) -> Tensor<T> {
    let pad = (k / 2) as isize;
    let plane = h * w;
    let mut out = Tensor::zeros(c, h, w);
    for ci in 0..c {
        let dst = &mut out.data[ci * plane..(ci + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                let dx = kx as isize - pad;
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let sy = sy as usize;
                    let sx_lo = (x_lo as isize + dx) as usize;
                    let d = &mut dst[sy * w + sx_lo..sy * w + sx_lo + (x_hi - x_lo)];
                    for (a, b) in d.iter_mut().zip(&src[y * w + x_lo..y * w + x_hi]) {
                        *a = *a + *b;
                    }
                }
            }
        }
    }
    out
}

/// Cache kept by [`conv_forward`] for the backward pass.
pub struct ConvCache<T> {
    cols: Vec<T>,
    h: usize,
    w: usize,
}

pub fn conv_forward<T: Real>(shape: &ConvShape, params: &[T], input: &Tensor<T>) -> (Tensor<T>, ConvCache<T>) {
    assert_eq!(input.c, shape.cin, "conv input channels");
    let plane = input.plane();
    let cols = if shape.k == 1 { input.data.clone() } else { im2col(input, shape.k) };
    let mut out = Tensor::zeros(shape.cout, input.h, input.w);
    for (co, b) in shape.biases(params).iter().enumerate() {
        out.data[co * plane..(co + 1) * plane].fill(*b);
    }
    gemm(
        Mat::new(shape.weights(params), shape.cout, shape.fan_in()),
        Mat::new(&cols, shape.fan_in(), plane),
        &mut out.data,
        true,
    );
    (out, ConvCache { cols, h: input.h, w: input.w })
}

/// Accumulates parameter gradients into `grad` and returns the input gradient.
pub fn conv_backward<T: Real>(
    shape: &ConvShape,
    params: &[T],
    cache: &ConvCache<T>,
    grad_out: &Tensor<T>,
    grad: &mut [T],
    need_input_grad: bool,
) -> Option<Tensor<T>> {
    let plane = cache.h * cache.w;
    let wlen = shape.weight_len();
    {
        let gw = &mut grad[shape.offset..shape.offset + wlen];
        gemm(
            Mat::new(&grad_out.data, shape.cout, plane),
            Mat::new(&cache.cols, shape.fan_in(), plane).t(),
            gw,
            true,
        );
    }
    let gb = &mut grad[shape.offset + wlen..shape.offset + wlen + shape.cout];
    for (co, g) in gb.iter_mut().enumerate() {
        *g = *g + grad_out.data[co * plane..(co + 1) * plane].iter().copied().sum();
    }
    if !need_input_grad {
        return None;
    }
    let mut gcols = vec![T::zero(); shape.fan_in() * plane];
    gemm(
        Mat::new(shape.weights(params), shape.cout, shape.fan_in()).t(),
        Mat::new(&grad_out.data, shape.cout, plane),
        &mut gcols,
        false,
    );
    Some(if shape.k == 1 {
        Tensor::from_vec(shape.cin, cache.h, cache.w, gcols)
    } else {
        col2im(&gcols, shape.cin, cache.h, cache.w, shape.k)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Silu,
    Tanh,
}

impl Activation {
    pub fn tag(self) -> u32 {
        match self {
            Activation::Silu => 0,
            Activation::Tanh => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Activation::Silu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }

    /// Applies the nonlinearity in place; the input is kept for backward.
    pub fn forward<T: Real>(self, pre: &Tensor<T>) -> Tensor<T> {
        let data = match self {
            Activation::Silu => pre.data.iter().map(|&z| z / (T::one() + (-z).exp())).collect(),
            Activation::Tanh => pre.data.iter().map(|z| z.tanh()).collect(),
        };
        Tensor::from_vec(pre.c, pre.h, pre.w, data)
    }

    pub fn backward<T: Real>(self, pre: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
        let one = T::one();
        let data = pre
            .data
            .iter()
            .zip(&grad_out.data)
            .map(|(&z, &g)| match self {
                Activation::Silu => {
                    let s = one / (one + (-z).exp());
                    g * s * (one + z * (one - s))
                }
                Activation::Tanh => {
                    let t = z.tanh();
                    g * (one - t * t)
                }
            })
            .collect();
        Tensor::from_vec(pre.c, pre.h, pre.w, data)
    }
}

/// 2x2 average pooling; spatial dims must be even.
pub fn avg_pool2<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    assert!(input.h % 2 == 0 && input.w % 2 == 0, "pooling needs even dims");
    let (h2, w2) = (input.h / 2, input.w / 2);
    let quarter = T::from_f64(0.25);
    let mut out = Tensor::zeros(input.c, h2, w2);
    for c in 0..input.c {
        let src = &input.data[c * input.plane()..(c + 1) * input.plane()];
        let dst = &mut out.data[c * h2 * w2..(c + 1) * h2 * w2];
        for y in 0..h2 {
            let r0 = &src[2 * y * input.w..(2 * y + 1) * input.w];
            let r1 = &src[(2 * y + 1) * input.w..(2 * y + 2) * input.w];
            for x in 0..w2 {
                dst[y * w2 + x] = (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]) * quarter;
            }
        }
    }
    out
}

pub fn avg_pool2_backward<T: Real>(grad_out: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (grad_out.h * 2, grad_out.w * 2);
    let quarter = T::from_f64(0.25);
    let mut out = Tensor::zeros(grad_out.c, h, w);
    for c in 0..grad_out.c {
        for y in 0..h {
            for x in 0..w {
                out.data[(c * h + y) * w + x] = grad_out.data[(c * grad_out.h + y / 2) * grad_out.w + x / 2] * quarter;
            }
        }
    }
    out
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (input.h * 2, input.w * 2);
    let mut out = Tensor::zeros(input.c, h, w);
    for c in 0..input.c {
        for y in 0..h {
            for x in 0..w {
                out.data[(c * h + y) * w + x] = input.data[(c * input.h + y / 2) * input.w + x / 2];
            }
        }
    }
    out
}

pub fn upsample2_backward<T: Real>(grad_out: &Tensor<T>) -> Tensor<T> {
    let (h2, w2) = (grad_out.h / 2, grad_out.w / 2);
    let mut out = Tensor::zeros(grad_out.c, h2, w2);
    for c in 0..grad_out.c {
        for y in 0..grad_out.h {
            for x in 0..grad_out.w {
                let o = &mut out.data[(c * h2 + y / 2) * w2 + x / 2];
                *o = *o + grad_out.data[(c * grad_out.h + y) * grad_out.w + x];
            }
        }
    }
    out
}

/// Channel concatenation `[a; b]`.
pub fn concat<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    assert_eq!((a.h, a.w), (b.h, b.w));
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Tensor::from_vec(a.c + b.c, a.h, a.w, data)
}

pub fn split<T: Real>(t: &Tensor<T>, first: usize) -> (Tensor<T>, Tensor<T>) {
    let cut = first * t.plane();
    (
        Tensor::from_vec(first, t.h, t.w, t.data[..cut].to_vec()),
        Tensor::from_vec(t.c - first, t.h, t.w, t.data[cut..].to_vec()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn random_tensor(c: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
        let mut rng = seeded(seed);
        Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
        a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn conv_matches_direct_sum() {
        let shape = ConvShape { cin: 2, cout: 3, k: 3, offset: 0 };
        let mut rng = seeded(1);
        let params: Vec<f64> = (0..shape.param_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let input = random_tensor(2, 4, 5, 2);
        let (out, _) = conv_forward(&shape, &params, &input);
        for co in 0..3 {
            for y in 0..4isize {
                for x in 0..5isize {
                    let mut acc = params[shape.weight_len() + co];
                    for ci in 0..2 {
                        for ky in 0..3isize {
                            for kx in 0..3isize {
                                let (sy, sx) = (y + ky - 1, x + kx - 1);
                                if (0..4).contains(&sy) && (0..5).contains(&sx) {
                                    let wi = ((co * 2 + ci) * 3 + ky as usize) * 3 + kx as usize;
                                    acc += params[wi] * input.data[(ci * 4 + sy as usize) * 5 + sx as usize];
                                }
                            }
                        }
                    }
                    let got = out.data[(co * 4 + y as usize) * 5 + x as usize];
                    assert!((got - acc).abs() < 1e-12);
                }
            }
        }
    }

    // Scalar objective <g, f(x)>; its gradient is the backward pass applied to g.
    #[test]
    fn conv_gradients_match_finite_differences() {
        for k in [1, 3, 5] {
            let shape = ConvShape { cin: 2, cout: 3, k, offset: 0 };
            let mut rng = seeded(3);
            let mut params: Vec<f64> = (0..shape.param_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut input = random_tensor(2, 5, 4, 4);
            let g = random_tensor(3, 5, 4, 5);
            let (_, cache) = conv_forward(&shape, &params, &input);
            let mut grad = vec![0.0; params.len()];
            let gin = conv_backward(&shape, &params, &cache, &g, &mut grad, true).unwrap();
            let h = 1e-6;
            for i in 0..params.len() {
                let orig = params[i];
                params[i] = orig + h;
                let fp = dot(&g, &conv_forward(&shape, &params, &input).0);
                params[i] = orig - h;
                let fm = dot(&g, &conv_forward(&shape, &params, &input).0);
                params[i] = orig;
                assert!(rel_err(grad[i], (fp - fm) / (2.0 * h)) < 1e-6, "k={k} param {i}");
            }
            for i in 0..input.data.len() {
                let orig = input.data[i];
                input.data[i] = orig + h;
                let fp = dot(&g, &conv_forward(&shape, &params, &input).0);
                input.data[i] = orig - h;
                let fm = dot(&g, &conv_forward(&shape, &params, &input).0);
                input.data[i] = orig;
                assert!(rel_err(gin.data[i], (fp - fm) / (2.0 * h)) < 1e-6, "k={k} input {i}");
            }
        }
    }

    #[test]
    fn activation_gradients_match_finite_differences() {
        for act in [Activation::Silu, Activation::Tanh] {
            let x = random_tensor(2, 3, 3, 7);
            let g = random_tensor(2, 3, 3, 8);
            let back = act.backward(&x, &g);
            let h = 1e-6;
            for i in 0..x.data.len() {
                let mut xp = x.clone();
                xp.data[i] += h;
                let mut xm = x.clone();
                xm.data[i] -= h;
                let fd = (dot(&g, &act.forward(&xp)) - dot(&g, &act.forward(&xm))) / (2.0 * h);
                assert!(rel_err(back.data[i], fd) < 1e-6);
            }
        }
    }

    // Linear maps: backward must be the exact adjoint, <g, f(x)> = <f*(g), x>.
    #[test]
    fn pooling_upsampling_and_concat_are_adjoint() {
        let x = random_tensor(3, 4, 6, 9);
        let g = random_tensor(3, 2, 3, 10);
        assert!((dot(&g, &avg_pool2(&x)) - dot(&avg_pool2_backward(&g), &x)).abs() < 1e-12);
        let small = random_tensor(3, 2, 3, 11);
        let gbig = random_tensor(3, 4, 6, 12);
        assert!((dot(&gbig, &upsample2(&small)) - dot(&upsample2_backward(&gbig), &small)).abs() < 1e-12);
        let a = random_tensor(2, 3, 3, 13);
        let b = random_tensor(1, 3, 3, 14);
        let (sa, sb) = split(&concat(&a, &b), 2);
        assert_eq!((sa, sb), (a, b));
    }
}
