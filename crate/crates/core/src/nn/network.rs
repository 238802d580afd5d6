//! Convolutional encoder-decoder mapping an envelope image to a same-shape
//! score image.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, Activation, ConvCache, ConvShape, Tensor};
use super::real::Real;
use crate::error::{Error, Result};
use crate::image::{EnvelopeImage, Padding};

/// Encoder-decoder description. `channels[i]` is the width of level `i`; each
/// level below the first halves the resolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Topology {
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub convs_per_level: usize,
    pub activation: Activation,
}

impl Default for Topology {
    fn default() -> Self {
        Self { channels: vec![16, 32], kernel: 3, convs_per_level: 2, activation: Activation::Silu }
    }
}

impl Topology {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::Config(format!("invalid channel list {:?}", self.channels)));
        }
        if self.channels.len() > 8 {
            return Err(Error::Config("at most 8 levels are supported".into()));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel must be odd, got {}", self.kernel)));
        }
        if self.convs_per_level == 0 {
            return Err(Error::Config("convs_per_level must be positive".into()));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.channels.len()
    }

    /// Spatial sizes must be multiples of this after padding.
    pub fn divisor(&self) -> usize {
        1 << (self.levels() - 1)
    }

    pub fn param_count(&self) -> usize {
        Layout::new(self).param_count
    }
}

/// Parameter offsets of every convolution, in a fixed order.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    encoder: Vec<Vec<ConvShape>>,
    decoder: Vec<Vec<ConvShape>>, // index i: level i, for i in 0..levels-1
    head: ConvShape,
    param_count: usize,
}

impl Layout {
    fn new(t: &Topology) -> Self {
        let mut offset = 0;
        let mut push = |cin, cout, k| {
            let s = ConvShape { cin, cout, k, offset };
            offset += s.param_len();
            s
        };
        let levels = t.levels();
        let mut encoder = Vec::with_capacity(levels);
        for (i, &c) in t.channels.iter().enumerate() {
            let cin = if i == 0 { 1 } else { t.channels[i - 1] };
            let mut convs = vec![push(cin, c, t.kernel)];
            for _ in 1..t.convs_per_level {
                convs.push(push(c, c, t.kernel));
            }
            encoder.push(convs);
        }
        let mut decoder = vec![Vec::new(); levels - 1];
        for i in (0..levels - 1).rev() {
            let c = t.channels[i];
            let mut convs = vec![push(t.channels[i + 1] + c, c, t.kernel)];
            for _ in 1..t.convs_per_level {
                convs.push(push(c, c, t.kernel));
            }
            decoder[i] = convs;
        }
        let head = push(t.channels[0], 1, 1);
        Self { encoder, decoder, head, param_count: offset }
    }

    fn all_hidden(&self) -> impl Iterator<Item = &ConvShape> {
        self.encoder.iter().flatten().chain(self.decoder.iter().flatten())
    }
}

/// Score model `s_theta`: topology plus flat parameter vector `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreNetwork {
    topology: Topology,
    params: Vec<f64>,
}

/// Numeric precision of network evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

struct Block<T> {
    conv: ConvCache<T>,
    pre: Tensor<T>,
}

struct Trace<T> {
    encoder: Vec<Vec<Block<T>>>,
    decoder: Vec<Vec<Block<T>>>,
    head: ConvCache<T>,
}

impl ScoreNetwork {
    /// He-uniform hidden weights, zero biases, zero output head (so the
    /// initial score is identically zero).
    pub fn new<R: Rng + ?Sized>(topology: Topology, rng: &mut R) -> Result<Self> {
        topology.validate()?;
        let layout = Layout::new(&topology);
        let mut params = vec![0.0; layout.param_count];
        for shape in layout.all_hidden() {
            let bound = (6.0 / shape.fan_in() as f64).sqrt();
            for p in &mut params[shape.offset..shape.offset + shape.weight_len()] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(Self { topology, params })
    }

    pub fn from_parts(topology: Topology, params: Vec<f64>) -> Result<Self> {
        topology.validate()?;
        let expected = topology.param_count();
        if params.len() != expected {
            return Err(Error::Config(format!(
                "topology needs {expected} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self { topology, params })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn layout(&self) -> Layout {
        Layout::new(&self.topology)
    }

    /// Score image for an envelope image.
    pub fn forward(&self, image: &EnvelopeImage) -> Result<Vec<f64>> {
        self.forward_raw(image.height(), image.width(), image.data(), Precision::F64)
    }

    /// Forward pass on an arbitrary real-valued grid (noisy inputs may be
    /// negative).
    pub fn forward_raw(&self, h: usize, w: usize, data: &[f64], precision: Precision) -> Result<Vec<f64>> {
        check_grid(h, w, data)?;
        Ok(match precision {
            Precision::F64 => self.run::<f64>(&self.params, h, w, data, None).0,
            Precision::F32 => {
                let p: Vec<f32> = self.params.iter().map(|&v| v as f32).collect();
                self.run::<f32>(&p, h, w, data, None).0
            }
        })
    }

    /// Forward pass plus the gradient of `sum(grad_output * s_theta(x))`
    /// with respect to the parameters, accumulated into `grad`.
    pub(crate) fn forward_backward<T: Real, F>(
        &self,
        params: &[T],
        h: usize,
        w: usize,
        data: &[f64],
        grad: &mut [T],
        mut grad_output: F,
    ) -> Vec<f64>
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        let layout = self.layout();
        let (out, trace) = self.run::<T>(params, h, w, data, Some(&layout));
        let g = grad_output(&out);
        self.backward(params, &layout, trace.expect("trace requested"), h, w, &g, grad);
        out
    }

    fn padded_dims(&self, h: usize, w: usize) -> (usize, usize) {
        let d = self.topology.divisor();
        (h.div_ceil(d) * d, w.div_ceil(d) * d)
    }

    fn run<T: Real>(
        &self,
        params: &[T],
        h: usize,
        w: usize,
        data: &[f64],
        trace_layout: Option<&Layout>,
    ) -> (Vec<f64>, Option<Trace<T>>) {
        let owned;
        let layout = match trace_layout {
            Some(l) => l,
            None => {
                owned = self.layout();
                &owned
            }
        };
        let keep = trace_layout.is_some();
        let act = self.topology.activation;
        let (ph, pw) = self.padded_dims(h, w);
        let mut input = Tensor::zeros(1, ph, pw);
        for y in 0..ph {
            let sy = Padding::Reflect.index(y as isize, h);
            for x in 0..pw {
                let sx = Padding::Reflect.index(x as isize, w);
                input.data[y * pw + x] = T::from_f64(data[sy * w + sx]);
            }
        }

        let levels = self.topology.levels();
        let mut skips: Vec<Tensor<T>> = Vec::with_capacity(levels);
        let mut enc_trace = Vec::with_capacity(levels);
        let mut x = input;
        for (i, convs) in layout.encoder.iter().enumerate() {
            if i > 0 {
                x = layers::avg_pool2(skips.last().expect("previous level"));
            }
            let mut blocks = Vec::new();
            for shape in convs {
                let (pre, conv) = layers::conv_forward(shape, params, &x);
                x = act.forward(&pre);
                if keep {
                    blocks.push(Block { conv, pre });
                }
            }
            enc_trace.push(blocks);
            skips.push(x.clone());
        }

        let mut dec_trace: Vec<Vec<Block<T>>> = (0..levels - 1).map(|_| Vec::new()).collect();
        let mut x = skips.pop().expect("bottom level");
        for i in (0..levels - 1).rev() {
            let skip = skips.pop().expect("skip");
            x = layers::concat(&layers::upsample2(&x), &skip);
            for shape in &layout.decoder[i] {
                let (pre, conv) = layers::conv_forward(shape, params, &x);
                x = act.forward(&pre);
                if keep {
                    dec_trace[i].push(Block { conv, pre });
                }
            }
        }
        let (out, head) = layers::conv_forward(&layout.head, params, &x);
        let mut result = Vec::with_capacity(h * w);
        for y in 0..h {
            result.extend(out.data[y * pw..y * pw + w].iter().map(|v| v.as_f64()));
        }
        let trace = keep.then_some(Trace { encoder: enc_trace, decoder: dec_trace, head });
        (result, trace)
    }

    #[allow(clippy::too_many_arguments)]
    fn backward<T: Real>(
        &self,
        params: &[T],
        layout: &Layout,
        trace: Trace<T>,
        h: usize,
        w: usize,
        grad_output: &[f64],
        grad: &mut [T],
    ) {
        let act = self.topology.activation;
        let levels = self.topology.levels();
        let (ph, pw) = self.padded_dims(h, w);
        let mut g = Tensor::zeros(1, ph, pw);
        for y in 0..h {
            for x in 0..w {
                g.data[y * pw + x] = T::from_f64(grad_output[y * w + x]);
            }
        }
        let mut g = layers::conv_backward(&layout.head, params, &trace.head, &g, grad, true).expect("input grad");

        let mut skip_grads: Vec<Option<Tensor<T>>> = (0..levels).map(|_| None).collect();
        let add_skip = |slot: &mut Option<Tensor<T>>, t: Tensor<T>| match slot {
            Some(acc) => acc.add_assign(&t),
            None => *slot = Some(t),
        };

        for (i, blocks) in trace.decoder.iter().enumerate() {
            for (shape, block) in layout.decoder[i].iter().zip(blocks).rev() {
                let gpre = act.backward(&block.pre, &g);
                g = layers::conv_backward(shape, params, &block.conv, &gpre, grad, true).expect("input grad");
            }
            let (gu, gskip) = layers::split(&g, self.topology.channels[i + 1]);
            add_skip(&mut skip_grads[i], gskip);
            g = layers::upsample2_backward(&gu);
        }
        add_skip(&mut skip_grads[levels - 1], g);

        for i in (0..levels).rev() {
            let mut g = skip_grads[i].take().expect("every level receives a gradient");
            let blocks = &trace.encoder[i];
            for (j, (shape, block)) in layout.encoder[i].iter().zip(blocks).enumerate().rev() {
                let gpre = act.backward(&block.pre, &g);
                let need_input = i > 0 || j > 0;
                match layers::conv_backward(shape, params, &block.conv, &gpre, grad, need_input) {
                    Some(gin) => g = gin,
                    None => break,
                }
            }
            if i > 0 {
                add_skip(&mut skip_grads[i - 1], layers::avg_pool2_backward(&g));
            }
        }
    }
}

fn check_grid(h: usize, w: usize, data: &[f64]) -> Result<()> {
    if h == 0 || w == 0 || data.len() != h * w {
        return Err(Error::Config(format!("{h}x{w} grid with {} values", data.len())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn tiny() -> Topology {
        Topology { channels: vec![3, 4], kernel: 3, convs_per_level: 2, activation: Activation::Silu }
    }

    #[test]
    fn parameter_count_matches_topology() {
        // enc0: 1->3, 3->3; enc1: 3->4, 4->4; dec0: 7->3, 3->3; head 3->1
        let expected = (3 * 9 + 3) + (27 * 3 + 3) + (27 * 4 + 4) + (36 * 4 + 4) + (63 * 3 + 3) + (27 * 3 + 3) + 4;
        assert_eq!(tiny().param_count(), expected);
        assert_eq!(Topology::default().levels(), 2);
    }

    #[test]
    fn zero_head_gives_zero_output() {
        let net = ScoreNetwork::new(tiny(), &mut seeded(1)).unwrap();
        let img = EnvelopeImage::from_fn(7, 9, |y, x| 0.1 + (y * x) as f64 * 0.05).unwrap();
        assert!(net.forward(&img).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn forward_is_deterministic_and_shape_preserving() {
        let mut net = ScoreNetwork::new(tiny(), &mut seeded(2)).unwrap();
        let mut rng = seeded(3);
        for p in net.params_mut() {
            *p += rng.gen_range(-0.1..0.1);
        }
        let img = EnvelopeImage::from_fn(5, 11, |y, x| ((y * 7 + x * 3) % 5) as f64 * 0.3).unwrap();
        let a = net.forward(&img).unwrap();
        let b = net.forward(&img).unwrap();
        assert_eq!(a.len(), 55);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));
        let f32_out = net.forward_raw(5, 11, img.data(), Precision::F32).unwrap();
        for (x, y) in a.iter().zip(&f32_out) {
            assert!((x - y).abs() < 1e-4);
        }
    }

    #[test]
    fn rejects_bad_topologies() {
        let mut t = tiny();
        t.kernel = 2;
        assert!(ScoreNetwork::new(t, &mut seeded(0)).is_err());
        let t = Topology { channels: vec![], ..tiny() };
        assert!(ScoreNetwork::new(t, &mut seeded(0)).is_err());
        assert!(ScoreNetwork::from_parts(tiny(), vec![0.0; 3]).is_err());
    }

    #[test]
    fn network_gradient_matches_finite_differences() {
        for levels in [vec![2], vec![2, 3], vec![2, 2, 3]] {
            let topo = Topology { channels: levels, kernel: 3, convs_per_level: 2, activation: Activation::Silu };
            let mut net = ScoreNetwork::new(topo, &mut seeded(4)).unwrap();
            let mut rng = seeded(5);
            for p in net.params_mut() {
                *p += rng.gen_range(-0.3..0.3);
            }
            let (h, w) = (6, 5);
            let data: Vec<f64> = (0..h * w).map(|_| rng.gen_range(0.0..2.0)).collect();
            let weights: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let objective = |n: &ScoreNetwork| -> f64 {
                let out = n.forward_raw(h, w, &data, Precision::F64).unwrap();
                out.iter().zip(&weights).map(|(a, b)| a * b).sum()
            };
            let mut grad = vec![0.0; net.param_count()];
            let params = net.params().to_vec();
            net.forward_backward(&params, h, w, &data, &mut grad, |_| weights.clone());
            let step = 1e-4;
            for i in 0..net.param_count() {
                let orig = net.params()[i];
                let mut at = |d: f64| {
                    net.params_mut()[i] = orig + d;
                    objective(&net)
                };
                let fd = (8.0 * (at(step) - at(-step)) - (at(2.0 * step) - at(-2.0 * step))) / (12.0 * step);
                net.params_mut()[i] = orig;
                let err = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-8);
                assert!(err < 1e-5, "param {i}: {} vs {fd}", grad[i]);
            }
        }
    }
}
