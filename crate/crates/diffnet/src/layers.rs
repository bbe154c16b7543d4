//! Layer kinds, their forward rules, and their backward rules.

use rand::Rng;

use crate::error::{dim_err, Result};
use crate::kernels::{col2im, gemm, im2col, ConvGeom};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Declarative description of one layer.
///
/// Convolutions are same-padded (`kernel / 2`) and operate on `[C, H, W]`
/// maps. A residual block is `conv3x3(stride) → relu → conv3x3(1)` plus a
/// 1×1 projection shortcut with the same stride; the two paths are summed.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense { inputs: usize, outputs: usize },
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize },
    Relu,
    Tanh,
    Flatten,
    ResidualBlock { in_channels: usize, out_channels: usize, stride: usize },
    /// Splits a flat input into consecutive slices, runs each through its
    /// own branch, and concatenates the flattened branch outputs.
    Concat(Vec<BranchSpec>),
}

/// One branch of a [`LayerSpec::Concat`]. An empty layer list passes the
/// slice through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchSpec {
    pub name: String,
    /// Per-sample shape the input slice is viewed as; its product is the slice width.
    pub shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

/// Deliberate backward-rule corruptions used to prove the gradient checks bite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradFault {
    ReluSign,
    DenseWeightSign,
    ConvWeightSign,
}

#[derive(Debug, Clone)]
pub(crate) struct ConvLayer {
    geom: ConvGeom,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Branch {
    offset: usize,
    width: usize,
    shape: Vec<usize>,
    layers: Vec<Layer>,
    out_width: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum Layer {
    Dense { inputs: usize, outputs: usize, w: usize, b: usize },
    Conv(ConvLayer),
    Relu,
    Tanh,
    Flatten,
    Residual { conv1: ConvLayer, conv2: ConvLayer, proj: ConvLayer },
    Concat { branches: Vec<Branch>, out_width: usize },
}

#[derive(Debug, Clone)]
pub(crate) struct ConvCache {
    cols: Vec<f64>,
    batch: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum Cache {
    Dense { input: Tensor },
    Conv(ConvCache),
    Relu { output: Tensor },
    Tanh { output: Tensor },
    Flatten { shape: Vec<usize> },
    Residual { conv1: ConvCache, hidden: Tensor, conv2: ConvCache, proj: ConvCache },
    Concat { branches: Vec<Vec<Cache>> },
}

pub(crate) struct BackwardCtx<'a> {
    pub store: &'a mut ParamStore,
    pub param_grads: bool,
    pub fault: Option<GradFault>,
}

fn glorot(rng: &mut impl Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
}

fn map_shape(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match shape {
        [c, h, w] => Ok((*c, *h, *w)),
        _ => dim_err(format!("convolution expects a [C, H, W] map, got {shape:?}")),
    }
}

impl ConvLayer {
    fn build(
        prefix: &str,
        store: &mut ParamStore,
        rng: &mut impl Rng,
        geom: ConvGeom,
    ) -> Result<Self> {
        let fan_in = geom.cin * geom.k * geom.k;
        let fan_out = geom.cout * geom.k * geom.k;
        let wlen = geom.cout * fan_in;
        let w = store.add(
            format!("{prefix}/w"),
            vec![geom.cout, geom.cin, geom.k, geom.k],
            glorot(rng, fan_in, fan_out, wlen),
        )?;
        let b = store.add(format!("{prefix}/b"), vec![geom.cout], vec![0.0; geom.cout])?;
        Ok(Self { geom, w, b })
    }

    fn out_shape(&self) -> Vec<usize> {
        vec![self.geom.cout, self.geom.oh, self.geom.ow]
    }

    fn forward(&self, x: &Tensor, store: &ParamStore) -> (Tensor, ConvCache) {
        let g = &self.geom;
        let batch = x.batch();
        let p = g.out_pixels();
        let bp = batch * p;
        let kk = g.patch_len();
        let cols = im2col(x.data(), batch, g);
        let w = store.by_index(self.w).1.value();
        let bias = store.by_index(self.b).1.value();
        let mut y2 = vec![0.0; g.cout * bp];
        gemm(g.cout, kk, bp, w, (kk, 1), &cols, (bp, 1), 0.0, &mut y2, (bp, 1));
        let mut out = vec![0.0; batch * g.cout * p];
        for co in 0..g.cout {
            for b in 0..batch {
                let src = &y2[co * bp + b * p..][..p];
                let dst = &mut out[(b * g.cout + co) * p..][..p];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = s + bias[co];
                }
            }
        }
        let out = Tensor::new(vec![batch, g.cout, g.oh, g.ow], out).expect("conv output shape");
        (out, ConvCache { cols, batch })
    }

    fn backward(
        &self,
        cache: ConvCache,
        grad: &Tensor,
        ctx: &mut BackwardCtx<'_>,
        want_input: bool,
    ) -> Option<Tensor> {
        let g = &self.geom;
        let batch = cache.batch;
        let p = g.out_pixels();
        let bp = batch * p;
        let kk = g.patch_len();
        let mut dy2 = vec![0.0; g.cout * bp];
        for co in 0..g.cout {
            for b in 0..batch {
                let src = &grad.data()[(b * g.cout + co) * p..][..p];
                dy2[co * bp + b * p..][..p].copy_from_slice(src);
            }
        }
        if ctx.param_grads {
            let sign = if ctx.fault == Some(GradFault::ConvWeightSign) { -1.0 } else { 1.0 };
            let dw = ctx.store.by_index_mut(self.w).grad_mut();
            gemm(g.cout, bp, kk, &dy2, (bp, 1), &cache.cols, (1, bp), 0.0, dw, (kk, 1));
            if sign < 0.0 {
                dw.iter_mut().for_each(|v| *v = -*v);
            }
            let db = ctx.store.by_index_mut(self.b).grad_mut();
            for (co, d) in db.iter_mut().enumerate() {
                *d = dy2[co * bp..(co + 1) * bp].iter().sum();
            }
        }
        if !want_input {
            return None;
        }
        let w = ctx.store.by_index(self.w).1.value();
        let mut dcols = vec![0.0; kk * bp];
        gemm(kk, g.cout, bp, w, (1, kk), &dy2, (bp, 1), 0.0, &mut dcols, (bp, 1));
        let dx = col2im(&dcols, batch, g);
        Some(Tensor::new(vec![batch, g.cin, g.h, g.w], dx).expect("conv input grad shape"))
    }
}

impl Layer {
    /// Builds a layer for the given per-sample input shape, registering its
    /// parameters, and returns it with its per-sample output shape.
    pub(crate) fn build(
        spec: &LayerSpec,
        in_shape: &[usize],
        prefix: &str,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<(Layer, Vec<usize>)> {
        match spec {
            LayerSpec::Dense { inputs, outputs } => {
                if in_shape != [*inputs] {
                    return dim_err(format!(
                        "{prefix}: dense layer expects [{inputs}], got {in_shape:?}"
                    ));
                }
                if *outputs == 0 {
                    return dim_err(format!("{prefix}: dense layer with zero outputs"));
                }
                let w = store.add(
                    format!("{prefix}/w"),
                    vec![*outputs, *inputs],
                    glorot(rng, *inputs, *outputs, inputs * outputs),
                )?;
                let b = store.add(format!("{prefix}/b"), vec![*outputs], vec![0.0; *outputs])?;
                Ok((Layer::Dense { inputs: *inputs, outputs: *outputs, w, b }, vec![*outputs]))
            }
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride } => {
                let (c, h, w) = map_shape(in_shape)?;
                if c != *in_channels {
                    return dim_err(format!(
                        "{prefix}: conv expects {in_channels} channels, got {c}"
                    ));
                }
                let geom = ConvGeom::new(c, *out_channels, *kernel, *stride, h, w)?;
                let conv = ConvLayer::build(prefix, store, rng, geom)?;
                let out = conv.out_shape();
                Ok((Layer::Conv(conv), out))
            }
            LayerSpec::Relu => Ok((Layer::Relu, in_shape.to_vec())),
            LayerSpec::Tanh => Ok((Layer::Tanh, in_shape.to_vec())),
            LayerSpec::Flatten => Ok((Layer::Flatten, vec![in_shape.iter().product()])),
            LayerSpec::ResidualBlock { in_channels, out_channels, stride } => {
                let (c, h, w) = map_shape(in_shape)?;
                if c != *in_channels {
                    return dim_err(format!(
                        "{prefix}: residual block expects {in_channels} channels, got {c}"
                    ));
                }
                let g1 = ConvGeom::new(c, *out_channels, 3, *stride, h, w)?;
                let conv1 = ConvLayer::build(&format!("{prefix}/conv1"), store, rng, g1)?;
                let g2 = ConvGeom::new(*out_channels, *out_channels, 3, 1, g1.oh, g1.ow)?;
                let conv2 = ConvLayer::build(&format!("{prefix}/conv2"), store, rng, g2)?;
                let gp = ConvGeom::new(c, *out_channels, 1, *stride, h, w)?;
                let proj = ConvLayer::build(&format!("{prefix}/proj"), store, rng, gp)?;
                if conv2.out_shape() != proj.out_shape() {
                    return dim_err(format!(
                        "{prefix}: conv path {:?} and projection {:?} disagree",
                        conv2.out_shape(),
                        proj.out_shape()
                    ));
                }
                let out = proj.out_shape();
                Ok((Layer::Residual { conv1, conv2, proj }, out))
            }
            LayerSpec::Concat(specs) => {
                if in_shape.len() != 1 {
                    return dim_err(format!("{prefix}: concat expects a flat input, got {in_shape:?}"));
                }
                let mut offset = 0;
                let mut branches = Vec::with_capacity(specs.len());
                for bs in specs {
                    let width: usize = bs.shape.iter().product();
                    let mut shape = bs.shape.clone();
                    let mut layers = Vec::with_capacity(bs.layers.len());
                    for (i, ls) in bs.layers.iter().enumerate() {
                        let (layer, next) =
                            Layer::build(ls, &shape, &format!("{prefix}/{}/{i}", bs.name), store, rng)?;
                        layers.push(layer);
                        shape = next;
                    }
                    let out_width = shape.iter().product();
                    branches.push(Branch { offset, width, shape: bs.shape.clone(), layers, out_width });
                    offset += width;
                }
                if offset != in_shape[0] {
                    return dim_err(format!(
                        "{prefix}: branches consume {offset} inputs but {} are provided",
                        in_shape[0]
                    ));
                }
                let out_width = branches.iter().map(|b| b.out_width).sum();
                Ok((Layer::Concat { branches, out_width }, vec![out_width]))
            }
        }
    }

    /// Forward rule. When `pattern` is given, every relu site appends whether
    /// its pre-activation is positive, exposing the piecewise-linear region.
    pub(crate) fn forward(
        &self,
        x: Tensor,
        store: &ParamStore,
        record: bool,
        mut pattern: Option<&mut Vec<bool>>,
    ) -> Result<(Tensor, Option<Cache>)> {
        let batch = x.batch();
        match self {
            Layer::Dense { inputs, outputs, w, b } => {
                let mut y = vec![0.0; batch * outputs];
                let wv = store.by_index(*w).1.value();
                let bv = store.by_index(*b).1.value();
                for row in y.chunks_mut(*outputs) {
                    row.copy_from_slice(bv);
                }
                gemm(batch, *inputs, *outputs, x.data(), (*inputs, 1), wv, (1, *inputs), 1.0, &mut y, (*outputs, 1));
                let y = Tensor::new(vec![batch, *outputs], y)?;
                Ok((y, record.then_some(Cache::Dense { input: x })))
            }
            Layer::Conv(conv) => {
                let (y, cache) = conv.forward(&x, store);
                Ok((y, record.then_some(Cache::Conv(cache))))
            }
            Layer::Relu => {
                if let Some(p) = pattern {
                    p.extend(x.data().iter().map(|v| *v > 0.0));
                }
                let mut y = x;
                y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                let cache = record.then(|| Cache::Relu { output: y.clone() });
                Ok((y, cache))
            }
            Layer::Tanh => {
                let mut y = x;
                y.data_mut().iter_mut().for_each(|v| *v = v.tanh());
                let cache = record.then(|| Cache::Tanh { output: y.clone() });
                Ok((y, cache))
            }
            Layer::Flatten => {
                let shape = x.shape().to_vec();
                let n = x.sample_len();
                let y = x.reshape(vec![batch, n])?;
                Ok((y, record.then_some(Cache::Flatten { shape })))
            }
            Layer::Residual { conv1, conv2, proj } => {
                let (mut hidden, c1) = conv1.forward(&x, store);
                if let Some(p) = pattern {
                    p.extend(hidden.data().iter().map(|v| *v > 0.0));
                }
                hidden.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                let (mut y, c2) = conv2.forward(&hidden, store);
                let (p, cp) = proj.forward(&x, store);
                for (a, b) in y.data_mut().iter_mut().zip(p.data()) {
                    *a += b;
                }
                let cache = record.then_some(Cache::Residual { conv1: c1, hidden, conv2: c2, proj: cp });
                Ok((y, cache))
            }
            Layer::Concat { branches, out_width } => {
                let in_width = x.sample_len();
                let mut out = vec![0.0; batch * out_width];
                let mut caches = Vec::with_capacity(branches.len());
                let mut out_off = 0;
                for br in branches {
                    let mut slice = Vec::with_capacity(batch * br.width);
                    for row in x.data().chunks(in_width) {
                        slice.extend_from_slice(&row[br.offset..br.offset + br.width]);
                    }
                    let mut shape = vec![batch];
                    shape.extend_from_slice(&br.shape);
                    let mut h = Tensor::new(shape, slice)?;
                    let mut bc = Vec::with_capacity(br.layers.len());
                    for layer in &br.layers {
                        let (next, c) = layer.forward(h, store, record, pattern.as_deref_mut())?;
                        h = next;
                        if let Some(c) = c {
                            bc.push(c);
                        }
                    }
                    for (dst, src) in out.chunks_mut(*out_width).zip(h.data().chunks(br.out_width)) {
                        dst[out_off..out_off + br.out_width].copy_from_slice(src);
                    }
                    out_off += br.out_width;
                    caches.push(bc);
                }
                let y = Tensor::new(vec![batch, *out_width], out)?;
                Ok((y, record.then_some(Cache::Concat { branches: caches })))
            }
        }
    }

    pub(crate) fn backward(
        &self,
        cache: Cache,
        grad: Tensor,
        ctx: &mut BackwardCtx<'_>,
        want_input: bool,
    ) -> Result<Option<Tensor>> {
        match (self, cache) {
            (Layer::Dense { inputs, outputs, w, b }, Cache::Dense { input }) => {
                let batch = grad.batch();
                if ctx.param_grads {
                    let dw = ctx.store.by_index_mut(*w).grad_mut();
                    gemm(*outputs, batch, *inputs, grad.data(), (1, *outputs), input.data(), (*inputs, 1), 0.0, dw, (*inputs, 1));
                    if ctx.fault == Some(GradFault::DenseWeightSign) {
                        dw.iter_mut().for_each(|v| *v = -*v);
                    }
                    let db = ctx.store.by_index_mut(*b).grad_mut();
                    db.iter_mut().for_each(|v| *v = 0.0);
                    for row in grad.data().chunks(*outputs) {
                        for (d, g) in db.iter_mut().zip(row) {
                            *d += g;
                        }
                    }
                }
                if !want_input {
                    return Ok(None);
                }
                let wv = ctx.store.by_index(*w).1.value();
                let mut dx = vec![0.0; batch * inputs];
                gemm(batch, *outputs, *inputs, grad.data(), (*outputs, 1), wv, (*inputs, 1), 0.0, &mut dx, (*inputs, 1));
                Ok(Some(Tensor::new(input.shape().to_vec(), dx)?))
            }
            (Layer::Conv(conv), Cache::Conv(c)) => Ok(conv.backward(c, &grad, ctx, want_input)),
            (Layer::Relu, Cache::Relu { output }) => {
                if !want_input {
                    return Ok(None);
                }
                let sign = if ctx.fault == Some(GradFault::ReluSign) { -1.0 } else { 1.0 };
                let mut g = grad;
                for (gv, y) in g.data_mut().iter_mut().zip(output.data()) {
                    *gv = if *y > 0.0 { sign * *gv } else { 0.0 };
                }
                Ok(Some(g))
            }
            (Layer::Tanh, Cache::Tanh { output }) => {
                if !want_input {
                    return Ok(None);
                }
                let mut g = grad;
                for (gv, y) in g.data_mut().iter_mut().zip(output.data()) {
                    *gv *= 1.0 - y * y;
                }
                Ok(Some(g))
            }
            (Layer::Flatten, Cache::Flatten { shape }) => {
                if !want_input {
                    return Ok(None);
                }
                Ok(Some(grad.reshape(shape)?))
            }
            (Layer::Residual { conv1, conv2, proj }, Cache::Residual { conv1: c1, hidden, conv2: c2, proj: cp }) => {
                let dx_proj = proj.backward(cp, &grad, ctx, want_input);
                let mut dh = conv2
                    .backward(c2, &grad, ctx, true)
                    .expect("input gradient was requested");
                for (g, h) in dh.data_mut().iter_mut().zip(hidden.data()) {
                    if *h <= 0.0 {
                        *g = 0.0;
                    } else if ctx.fault == Some(GradFault::ReluSign) {
                        *g = -*g;
                    }
                }
                let dx_conv = conv1.backward(c1, &dh, ctx, want_input);
                Ok(match (dx_conv, dx_proj) {
                    (Some(mut a), Some(b)) => {
                        for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                            *x += y;
                        }
                        Some(a)
                    }
                    _ => None,
                })
            }
            (Layer::Concat { branches, out_width }, Cache::Concat { branches: caches }) => {
                let batch = grad.batch();
                let in_width: usize = branches.iter().map(|b| b.width).sum();
                let mut dx = want_input.then(|| vec![0.0; batch * in_width]);
                let mut out_off = 0;
                for (br, mut bc) in branches.iter().zip(caches) {
                    let mut slice = Vec::with_capacity(batch * br.out_width);
                    for row in grad.data().chunks(*out_width) {
                        slice.extend_from_slice(&row[out_off..out_off + br.out_width]);
                    }
                    out_off += br.out_width;
                    let mut g = Some(Tensor::new(vec![batch, br.out_width], slice)?);
                    for (i, layer) in br.layers.iter().enumerate().rev() {
                        let c = bc.pop().expect("one cache per branch layer");
                        let upstream = g.take().expect("upstream gradient present");
                        let upstream = upstream.reshape(cache_out_shape(layer, &c, batch))?;
                        g = layer.backward(c, upstream, ctx, want_input || i > 0)?;
                    }
                    if let (Some(dx), Some(g)) = (dx.as_mut(), g) {
                        for (dst, src) in dx.chunks_mut(in_width).zip(g.data().chunks(br.width)) {
                            dst[br.offset..br.offset + br.width].copy_from_slice(src);
                        }
                    }
                }
                Ok(match dx {
                    Some(d) => Some(Tensor::new(vec![batch, in_width], d)?),
                    None => None,
                })
            }
            _ => Err(crate::error::DiffnetError::State(
                "cache does not belong to this layer".into(),
            )),
        }
    }
}

/// Full (batched) output shape a layer produced, recovered from its cache.
pub(crate) fn cache_out_shape(layer: &Layer, cache: &Cache, batch: usize) -> Vec<usize> {
    match (layer, cache) {
        (Layer::Dense { outputs, .. }, _) => vec![batch, *outputs],
        (Layer::Conv(c), _) => [vec![batch], c.out_shape()].concat(),
        (Layer::Residual { proj, .. }, _) => [vec![batch], proj.out_shape()].concat(),
        (_, Cache::Relu { output }) | (_, Cache::Tanh { output }) => output.shape().to_vec(),
        (Layer::Flatten, Cache::Flatten { shape }) => vec![batch, shape[1..].iter().product()],
        (Layer::Concat { out_width, .. }, _) => vec![batch, *out_width],
        _ => unreachable!("layer/cache pairing checked in backward"),
    }
}
