//! Encoder `f` (three strided convolutions, global average pool, dense) and
//! projection head `h` (dense, ReLU, dense, L2 normalization), with
//! hand-written backpropagation.
//!
//! Activations are stored height × width × channels. Convolution weights are
//! stored as `[ky][kx][c_in][c_out]`, dense weights as `[in][out]`.

use rayon::prelude::*;

use super::tensor::{axpy, dot, Real, Tensor};
use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};
use crate::rng::Xoshiro256;

pub const KERNEL: usize = 3;
pub const STRIDE: usize = 2;
pub const PAD: usize = 1;
/// Below this pre-normalization norm the embedding falls back to `e_0`.
pub const DEGENERATE_NORM: f64 = 1e-12;
const INPUT_EPS: f64 = 1e-2;
/// Items per gradient-reduction chunk. Fixed so the summation order does not
/// depend on the worker count.
const REDUCE_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub in_channels: usize,
    pub conv_channels: [usize; 3],
    pub rep_dim: usize,
    pub proj_hidden: usize,
    pub embed_dim: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            in_channels: CHANNELS,
            conv_channels: [8, 16, 32],
            rep_dim: 64,
            proj_hidden: 64,
            embed_dim: 32,
        }
    }
}

/// One parameter tensor in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub fan_in: usize,
    pub is_bias: bool,
}

const CONV_W: [usize; 3] = [0, 2, 4];
const CONV_B: [usize; 3] = [1, 3, 5];
const ENC_W: usize = 6;
const ENC_B: usize = 7;
const PROJ1_W: usize = 8;
const PROJ1_B: usize = 9;
const PROJ2_W: usize = 10;
const PROJ2_B: usize = 11;
const TENSORS: usize = 12;

impl Architecture {
    pub fn params(&self) -> Vec<ParamSpec> {
        let names = [
            ("conv1.weight", "conv1.bias"),
            ("conv2.weight", "conv2.bias"),
            ("conv3.weight", "conv3.bias"),
        ];
        let mut out = Vec::with_capacity(TENSORS);
        let mut c_in = self.in_channels;
        for (i, &c_out) in self.conv_channels.iter().enumerate() {
            let fan_in = KERNEL * KERNEL * c_in;
            out.push(ParamSpec {
                name: names[i].0,
                shape: vec![KERNEL, KERNEL, c_in, c_out],
                fan_in,
                is_bias: false,
            });
            out.push(ParamSpec {
                name: names[i].1,
                shape: vec![c_out],
                fan_in,
                is_bias: true,
            });
            c_in = c_out;
        }
        let dense = [
            ("encoder.weight", "encoder.bias", c_in, self.rep_dim),
            ("proj1.weight", "proj1.bias", self.rep_dim, self.proj_hidden),
            ("proj2.weight", "proj2.bias", self.proj_hidden, self.embed_dim),
        ];
        for (w, b, i, o) in dense {
            out.push(ParamSpec {
                name: w,
                shape: vec![i, o],
                fan_in: i,
                is_bias: false,
            });
            out.push(ParamSpec {
                name: b,
                shape: vec![o],
                fan_in: i,
                is_bias: true,
            });
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.shape.iter().product::<usize>()).sum()
    }

    /// Dimension list written into checkpoints.
    pub fn descriptor(&self) -> Vec<u32> {
        [
            self.in_channels,
            self.conv_channels[0],
            self.conv_channels[1],
            self.conv_channels[2],
            self.rep_dim,
            self.proj_hidden,
            self.embed_dim,
            KERNEL,
            STRIDE,
        ]
        .iter()
        .map(|&d| d as u32)
        .collect()
    }

    pub fn from_descriptor(d: &[u32]) -> Result<Self> {
        if d.len() != 9 || d[7] as usize != KERNEL || d[8] as usize != STRIDE {
            return Err(Error::ShapeMismatch(format!("unsupported architecture {d:?}")));
        }
        if d[..7].iter().any(|&v| v == 0) {
            return Err(Error::ShapeMismatch(format!("zero dimension in {d:?}")));
        }
        let u = |i: usize| d[i] as usize;
        Ok(Self {
            in_channels: u(0),
            conv_channels: [u(1), u(2), u(3)],
            rep_dim: u(4),
            proj_hidden: u(5),
            embed_dim: u(6),
        })
    }
}

/// Weights of encoder and projector stored contiguously in declaration
/// order. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    arch: Architecture,
    offsets: [usize; TENSORS + 1],
    data: Vec<T>,
}

pub type Gradients<T> = ModelParams<T>;

impl<T: Real> ModelParams<T> {
    pub fn zeros(arch: Architecture) -> Self {
        let mut offsets = [0; TENSORS + 1];
        for (i, p) in arch.params().iter().enumerate() {
            offsets[i + 1] = offsets[i] + p.shape.iter().product::<usize>();
        }
        Self {
            arch,
            offsets,
            data: vec![T::zero(); offsets[TENSORS]],
        }
    }

    pub fn from_data(arch: Architecture, data: Vec<T>) -> Result<Self> {
        let mut p = Self::zeros(arch);
        if data.len() != p.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "architecture needs {} parameters, got {}",
                p.data.len(),
                data.len()
            )));
        }
        p.data = data;
        Ok(p)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Range of tensor `i` (declaration order) inside [`Self::data`].
    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    fn t(&self, i: usize) -> &[T] {
        &self.data[self.range(i)]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, k: T) {
        for v in &mut self.data {
            *v = *v * k;
        }
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            arch: self.arch,
            offsets: self.offsets,
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
        }
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// He-uniform weights (bound √(6/fan_in)) and zero biases.
pub fn init_params<T: Real>(arch: Architecture, seed: u64) -> ModelParams<T> {
    let mut p = ModelParams::zeros(arch);
    for (i, spec) in arch.params().iter().enumerate() {
        if spec.is_bias {
            continue;
        }
        let bound = (6.0 / spec.fan_in as f64).sqrt();
        let mut rng = Xoshiro256::for_item(seed, &[i as u64]);
        let r = p.range(i);
        for v in &mut p.data[r] {
            *v = T::of(rng.uniform(-bound, bound));
        }
    }
    p
}

/// Everything the backward pass needs for one item.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// Spatial dims of the input and of each conv output.
    dims: [(usize, usize); 4],
    /// Input followed by the three post-ReLU conv activations.
    acts: [Vec<T>; 4],
    pooled: Vec<T>,
    pub representation: Vec<T>,
    hidden: Vec<T>,
    norm: T,
    degenerate: bool,
    pub embedding: Vec<T>,
}

impl<T: Real> ForwardCache<T> {
    /// ReLU on/off pattern, used to detect finite-difference steps that
    /// straddle a kink.
    pub fn activation_pattern(&self) -> Vec<bool> {
        self.acts[1..]
            .iter()
            .flatten()
            .chain(&self.hidden)
            .map(|v| *v > T::zero())
            .collect()
    }
}

fn out_dim(n: usize) -> usize {
    (n + 2 * PAD - KERNEL) / STRIDE + 1
}

fn conv_forward<T: Real>(
    input: &[T],
    (h, w): (usize, usize),
    c_in: usize,
    weight: &[T],
    bias: &[T],
) -> (Vec<T>, (usize, usize)) {
    let c_out = bias.len();
    let (ho, wo) = (out_dim(h), out_dim(w));
    let mut out = vec![T::zero(); ho * wo * c_out];
    for oy in 0..ho {
        for ox in 0..wo {
            let row = &mut out[(oy * wo + ox) * c_out..(oy * wo + ox + 1) * c_out];
            row.copy_from_slice(bias);
            for ky in 0..KERNEL {
                let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..KERNEL {
                    let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let src = (iy as usize * w + ix as usize) * c_in;
                    let k0 = (ky * KERNEL + kx) * c_in;
                    for ci in 0..c_in {
                        let v = input[src + ci];
                        if v != T::zero() {
                            let k = k0 + ci;
                            axpy(row, &weight[k * c_out..(k + 1) * c_out], v);
                        }
                    }
                }
            }
            for v in row.iter_mut() {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
    }
    (out, (ho, wo))
}

/// Backward through a ReLU-activated conv. `d_out` is the gradient w.r.t. the
/// post-ReLU output and is masked in place.
#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Real>(
    input: &[T],
    (h, w): (usize, usize),
    c_in: usize,
    weight: &[T],
    output: &[T],
    d_out: &mut [T],
    d_weight: &mut [T],
    d_bias: &mut [T],
    mut d_input: Option<&mut [T]>,
) {
    let c_out = d_bias.len();
    let (ho, wo) = (out_dim(h), out_dim(w));
    for (g, &o) in d_out.iter_mut().zip(output) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
    for oy in 0..ho {
        for ox in 0..wo {
            let p = oy * wo + ox;
            let g = &d_out[p * c_out..(p + 1) * c_out];
            if g.iter().all(|v| *v == T::zero()) {
                continue;
            }
            for (b, &gv) in d_bias.iter_mut().zip(g) {
                *b += gv;
            }
            for ky in 0..KERNEL {
                let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..KERNEL {
                    let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let src = (iy as usize * w + ix as usize) * c_in;
                    let k0 = (ky * KERNEL + kx) * c_in;
                    for ci in 0..c_in {
                        let k = k0 + ci;
                        let v = input[src + ci];
                        if v != T::zero() {
                            axpy(&mut d_weight[k * c_out..(k + 1) * c_out], g, v);
                        }
                        if let Some(di) = d_input.as_deref_mut() {
                            di[src + ci] += dot(&weight[k * c_out..(k + 1) * c_out], g);
                        }
                    }
                }
            }
        }
    }
}

fn dense_forward<T: Real>(x: &[T], weight: &[T], bias: &[T]) -> Vec<T> {
    let o = bias.len();
    let mut out = bias.to_vec();
    for (i, &xi) in x.iter().enumerate() {
        if xi != T::zero() {
            axpy(&mut out, &weight[i * o..(i + 1) * o], xi);
        }
    }
    out
}

fn dense_backward<T: Real>(
    x: &[T],
    weight: &[T],
    d_out: &[T],
    d_weight: &mut [T],
    d_bias: &mut [T],
) -> Vec<T> {
    let o = d_out.len();
    for (b, &g) in d_bias.iter_mut().zip(d_out) {
        *b += g;
    }
    x.iter()
        .enumerate()
        .map(|(i, &xi)| {
            if xi != T::zero() {
                axpy(&mut d_weight[i * o..(i + 1) * o], d_out, xi);
            }
            dot(&weight[i * o..(i + 1) * o], d_out)
        })
        .collect()
}

fn relu_in_place<T: Real>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

fn check_images(arch: &Architecture, images: &[Image]) -> Result<(usize, usize)> {
    let Some(first) = images.first() else {
        return Ok((0, 0));
    };
    if arch.in_channels != CHANNELS {
        return Err(Error::ShapeMismatch(format!(
            "model expects {} input channels, images have {CHANNELS}",
            arch.in_channels
        )));
    }
    let dims = (first.height(), first.width());
    if dims.0 == 0 || dims.1 == 0 {
        return Err(Error::ShapeMismatch("empty image".into()));
    }
    if let Some(bad) = images.iter().find(|i| (i.height(), i.width()) != dims) {
        return Err(Error::ShapeMismatch(format!(
            "batch mixes {}×{} and {}×{} images",
            dims.0,
            dims.1,
            bad.height(),
            bad.width()
        )));
    }
    Ok(dims)
}

/// Per-image input normalization: each channel centered on its mean, all
/// channels scaled by the pooled standard deviation.
fn standardize_input<T: Real>(image: &Image) -> Vec<T> {
    let data = image.data();
    let n = (data.len() / CHANNELS).max(1) as f64;
    let mut mean = [0.0f64; CHANNELS];
    for px in data.chunks_exact(CHANNELS) {
        for (m, &v) in mean.iter_mut().zip(px) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let var = data
        .chunks_exact(CHANNELS)
        .flat_map(|px| px.iter().zip(&mean).map(|(&v, m)| (v as f64 - m).powi(2)))
        .sum::<f64>()
        / (n * CHANNELS as f64);
    let inv = 1.0 / (var.sqrt() + INPUT_EPS);
    data.chunks_exact(CHANNELS)
        .flat_map(|px| px.iter().zip(&mean).map(move |(&v, m)| T::of((v as f64 - m) * inv)))
        .collect()
}

/// Encoder forward for one item, returning the cache up to the representation.
fn encode_item<T: Real>(params: &ModelParams<T>, image: &Image) -> ForwardCache<T> {
    let arch = params.arch;
    let input = standardize_input(image);
    let mut dims = [(image.height(), image.width()); 4];
    let (a1, d1) = conv_forward(&input, dims[0], arch.in_channels, params.t(CONV_W[0]), params.t(CONV_B[0]));
    dims[1] = d1;
    let (a2, d2) = conv_forward(&a1, d1, arch.conv_channels[0], params.t(CONV_W[1]), params.t(CONV_B[1]));
    dims[2] = d2;
    let (a3, d3) = conv_forward(&a2, d2, arch.conv_channels[1], params.t(CONV_W[2]), params.t(CONV_B[2]));
    dims[3] = d3;
    let c3 = arch.conv_channels[2];
    let positions = d3.0 * d3.1;
    let mut pooled = vec![T::zero(); c3];
    for p in 0..positions {
        for (s, &v) in pooled.iter_mut().zip(&a3[p * c3..(p + 1) * c3]) {
            *s += v;
        }
    }
    let inv = T::one() / T::of(positions as f64);
    for s in &mut pooled {
        *s = *s * inv;
    }
    let representation = dense_forward(&pooled, params.t(ENC_W), params.t(ENC_B));
    ForwardCache {
        dims,
        acts: [input, a1, a2, a3],
        pooled,
        representation,
        hidden: Vec::new(),
        norm: T::zero(),
        degenerate: false,
        embedding: Vec::new(),
    }
}

/// Projector forward; fills `hidden`, `norm` and `embedding`.
fn project_item<T: Real>(params: &ModelParams<T>, cache: &mut ForwardCache<T>) {
    let mut hidden = dense_forward(&cache.representation, params.t(PROJ1_W), params.t(PROJ1_B));
    relu_in_place(&mut hidden);
    let mut u = dense_forward(&hidden, params.t(PROJ2_W), params.t(PROJ2_B));
    let norm = dot(&u, &u).sqrt();
    cache.degenerate = norm.f64() < DEGENERATE_NORM;
    if cache.degenerate {
        u.iter_mut().for_each(|v| *v = T::zero());
        u[0] = T::one();
    } else {
        u.iter_mut().for_each(|v| *v = *v / norm);
    }
    cache.hidden = hidden;
    cache.norm = norm;
    cache.embedding = u;
}

/// Encoder `f`: batch of images to `batch × rep_dim` representations.
pub fn encode<T: Real>(params: &ModelParams<T>, images: &[Image]) -> Result<Tensor<T>> {
    check_images(&params.arch, images)?;
    let rows: Vec<Vec<T>> = images
        .par_iter()
        .map(|img| encode_item(params, img).representation)
        .collect();
    if rows.is_empty() {
        return Ok(Tensor::zeros(&[0, params.arch.rep_dim]));
    }
    Tensor::from_rows(&rows)
}

/// Unit-norm embeddings plus how many rows took the degenerate fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<T> {
    pub embeddings: Tensor<T>,
    pub degenerate: usize,
}

/// Projection head `h` followed by L2 normalization.
pub fn project<T: Real>(params: &ModelParams<T>, representations: &Tensor<T>) -> Result<Projection<T>> {
    let arch = params.arch;
    if representations.shape().len() != 2 || representations.cols() != arch.rep_dim {
        return Err(Error::ShapeMismatch(format!(
            "projector expects batch × {}, got {:?}",
            arch.rep_dim,
            representations.shape()
        )));
    }
    let mut degenerate = 0;
    let mut rows = Vec::with_capacity(representations.rows());
    for i in 0..representations.rows() {
        let mut cache = ForwardCache {
            dims: [(0, 0); 4],
            acts: Default::default(),
            pooled: Vec::new(),
            representation: representations.row(i).to_vec(),
            hidden: Vec::new(),
            norm: T::zero(),
            degenerate: false,
            embedding: Vec::new(),
        };
        project_item(params, &mut cache);
        degenerate += cache.degenerate as usize;
        rows.push(cache.embedding);
    }
    let embeddings = if rows.is_empty() {
        Tensor::zeros(&[0, arch.embed_dim])
    } else {
        Tensor::from_rows(&rows)?
    };
    Ok(Projection {
        embeddings,
        degenerate,
    })
}

/// Recorded forward pass over a batch, ready for [`backward`].
#[derive(Debug, Clone)]
pub struct BatchForward<T> {
    pub caches: Vec<ForwardCache<T>>,
    pub degenerate: usize,
}

impl<T: Real> BatchForward<T> {
    pub fn embeddings(&self, embed_dim: usize) -> Tensor<T> {
        let data = self.caches.iter().flat_map(|c| c.embedding.iter().copied()).collect();
        Tensor::from_vec(&[self.caches.len(), embed_dim], data).expect("consistent dims")
    }

    pub fn representations(&self, rep_dim: usize) -> Tensor<T> {
        let data = self
            .caches
            .iter()
            .flat_map(|c| c.representation.iter().copied())
            .collect();
        Tensor::from_vec(&[self.caches.len(), rep_dim], data).expect("consistent dims")
    }
}

/// Full forward (encoder + projector) recording what backward needs.
pub fn forward<T: Real>(params: &ModelParams<T>, images: &[Image]) -> Result<BatchForward<T>> {
    check_images(&params.arch, images)?;
    let caches: Vec<ForwardCache<T>> = images
        .par_iter()
        .map(|img| {
            let mut c = encode_item(params, img);
            project_item(params, &mut c);
            c
        })
        .collect();
    let degenerate = caches.iter().filter(|c| c.degenerate).count();
    Ok(BatchForward { caches, degenerate })
}

fn backward_item<T: Real>(params: &ModelParams<T>, c: &ForwardCache<T>, dz: &[T], g: &mut ModelParams<T>) {
    let arch = params.arch;
    if c.degenerate {
        // the fallback embedding is constant in the parameters
        return;
    }
    // d/du of u/|u|
    let zdz = dot(&c.embedding, dz);
    let du: Vec<T> = c
        .embedding
        .iter()
        .zip(dz)
        .map(|(&z, &d)| (d - z * zdz) / c.norm)
        .collect();

    let (wr, br) = (g.range(PROJ2_W), g.range(PROJ2_B));
    let (gw, gb) = split_pair(&mut g.data, wr, br);
    let mut d_hidden = dense_backward(&c.hidden, params.t(PROJ2_W), &du, gw, gb);
    for (d, &h) in d_hidden.iter_mut().zip(&c.hidden) {
        if h <= T::zero() {
            *d = T::zero();
        }
    }
    let (wr, br) = (g.range(PROJ1_W), g.range(PROJ1_B));
    let (gw, gb) = split_pair(&mut g.data, wr, br);
    let d_rep = dense_backward(&c.representation, params.t(PROJ1_W), &d_hidden, gw, gb);

    let (wr, br) = (g.range(ENC_W), g.range(ENC_B));
    let (gw, gb) = split_pair(&mut g.data, wr, br);
    let d_pooled = dense_backward(&c.pooled, params.t(ENC_W), &d_rep, gw, gb);

    let c3 = arch.conv_channels[2];
    let positions = c.dims[3].0 * c.dims[3].1;
    let inv = T::one() / T::of(positions as f64);
    let mut d_act: Vec<T> = (0..positions * c3).map(|i| d_pooled[i % c3] * inv).collect();

    let c_ins = [arch.in_channels, arch.conv_channels[0], arch.conv_channels[1]];
    for layer in (0..3).rev() {
        let (wr, br) = (g.range(CONV_W[layer]), g.range(CONV_B[layer]));
        let (gw, gb) = split_pair(&mut g.data, wr, br);
        let mut d_in = if layer > 0 {
            Some(vec![T::zero(); c.acts[layer].len()])
        } else {
            None
        };
        conv_backward(
            &c.acts[layer],
            c.dims[layer],
            c_ins[layer],
            params.t(CONV_W[layer]),
            &c.acts[layer + 1],
            &mut d_act,
            gw,
            gb,
            d_in.as_deref_mut(),
        );
        if let Some(d) = d_in {
            d_act = d;
        }
    }
}

fn split_pair<T>(
    data: &mut [T],
    a: std::ops::Range<usize>,
    b: std::ops::Range<usize>,
) -> (&mut [T], &mut [T]) {
    debug_assert_eq!(a.end, b.start);
    let (left, right) = data[a.start..b.end].split_at_mut(a.end - a.start);
    (left, right)
}

/// Gradients of a loss w.r.t. all parameters, given the loss gradient w.r.t.
/// each item's embedding. Reduction order is fixed.
pub fn backward<T: Real>(
    params: &ModelParams<T>,
    fwd: &BatchForward<T>,
    d_embeddings: &Tensor<T>,
) -> Result<Gradients<T>> {
    if d_embeddings.rows() != fwd.caches.len() || d_embeddings.cols() != params.arch.embed_dim {
        return Err(Error::ShapeMismatch(format!(
            "embedding gradient {:?} for {} items",
            d_embeddings.shape(),
            fwd.caches.len()
        )));
    }
    let partials: Vec<Gradients<T>> = fwd
        .caches
        .par_chunks(REDUCE_CHUNK)
        .enumerate()
        .map(|(chunk, caches)| {
            let mut g = ModelParams::zeros(params.arch);
            for (j, c) in caches.iter().enumerate() {
                backward_item(params, c, d_embeddings.row(chunk * REDUCE_CHUNK + j), &mut g);
            }
            g
        })
        .collect();
    let mut total = ModelParams::zeros(params.arch);
    for p in &partials {
        total.add_assign(p);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_images(n: usize, h: usize, w: usize, seed: u64) -> Vec<Image> {
        (0..n)
            .map(|i| {
                let mut r = Xoshiro256::for_item(seed, &[i as u64]);
                let data = (0..h * w * 3).map(|_| r.next_f64() as f32).collect();
                Image::from_data(h, w, data).unwrap()
            })
            .collect()
    }

    #[test]
    fn parameter_count_and_layout() {
        let arch = Architecture::default();
        let expected = 27 * 8 + 8 + 72 * 16 + 16 + 144 * 32 + 32 + 32 * 64 + 64 + 64 * 64 + 64 + 64 * 32 + 32;
        assert_eq!(arch.param_count(), expected);
        let p: ModelParams<f32> = ModelParams::zeros(arch);
        assert_eq!(p.len(), expected);
        assert_eq!(Architecture::from_descriptor(&arch.descriptor()).unwrap(), arch);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let arch = Architecture::default();
        let a: ModelParams<f32> = init_params(arch, 7);
        let b: ModelParams<f32> = init_params(arch, 7);
        assert_eq!(a, b);
        assert_ne!(a, init_params::<f32>(arch, 8));
        for (i, spec) in arch.params().iter().enumerate() {
            let vals = &a.data()[a.range(i)];
            if spec.is_bias {
                assert!(vals.iter().all(|&v| v == 0.0));
            }
        }
        let bound = (6.0f64 / 27.0).sqrt() as f32;
        assert!(a.data()[a.range(0)].iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn encode_shapes_and_item_independence() {
        let arch = Architecture::default();
        let p: ModelParams<f32> = init_params(arch, 1);
        let mut imgs = random_images(3, 64, 64, 2);
        imgs.push(imgs[1].clone());
        let r = encode(&p, &imgs).unwrap();
        assert_eq!(r.shape(), &[4, 64]);
        assert_eq!(r.row(1), r.row(3));
        let single = encode(&p, &imgs[1..2]).unwrap();
        assert_eq!(single.row(0), r.row(1));
    }

    #[test]
    fn zero_weights_zero_image_gives_zero_representation() {
        let p: ModelParams<f32> = ModelParams::zeros(Architecture::default());
        let r = encode(&p, &[Image::new(64, 64)]).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.0));
        let proj = project(&p, &r).unwrap();
        assert_eq!(proj.degenerate, 1);
        let e = proj.embeddings.row(0);
        assert_eq!(e[0], 1.0);
        assert!(e[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn projections_are_unit_norm() {
        let arch = Architecture::default();
        let p: ModelParams<f64> = init_params(arch, 3);
        let imgs = random_images(6, 16, 16, 4);
        let r = encode(&p, &imgs).unwrap();
        let proj = project(&p, &r).unwrap();
        for i in 0..6 {
            let n: f64 = proj.embeddings.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
        let fwd = forward(&p, &imgs).unwrap();
        assert_eq!(fwd.embeddings(32), proj.embeddings);
    }

    #[test]
    fn mixed_sizes_are_rejected() {
        let p: ModelParams<f32> = init_params(Architecture::default(), 1);
        let imgs = vec![Image::new(8, 8), Image::new(16, 16)];
        assert!(matches!(encode(&p, &imgs), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let p: ModelParams<f64> = init_params(Architecture::default(), 5);
        let imgs = random_images(4, 8, 8, 6);
        let fwd = forward(&p, &imgs).unwrap();
        let g = backward(&p, &fwd, &Tensor::zeros(&[4, 32])).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_are_linear_in_upstream() {
        let p: ModelParams<f64> = init_params(Architecture::default(), 5);
        let imgs = random_images(4, 8, 8, 6);
        let fwd = forward(&p, &imgs).unwrap();
        let mut r = Xoshiro256::seed_from_u64(1);
        let dz: Vec<f64> = (0..4 * 32).map(|_| r.normal()).collect();
        let dz = Tensor::from_vec(&[4, 32], dz).unwrap();
        let mut dz2 = dz.clone();
        dz2.data_mut().iter_mut().for_each(|v| *v *= 2.0);
        let g1 = backward(&p, &fwd, &dz).unwrap();
        let g2 = backward(&p, &fwd, &dz2).unwrap();
        for (a, b) in g1.data().iter().zip(g2.data()) {
            assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}
