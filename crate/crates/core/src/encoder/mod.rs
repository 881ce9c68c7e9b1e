//! The parametric map from pixels to the representation spaces.
//!
//! An encoder is a validated chain of layers: a convolutional backbone that
//! ends in a flat vector (the `H` space used by linear probes) followed by
//! a projection head `Dense -> ReLU -> Dense` whose final layer, the
//! *readout*, sets the embedding dimension of the `Z` space. The readout is
//! replaceable: dimensionality annealing swaps it for a freshly initialized
//! narrow one mid-training.
//!
//! Forward passes cache every intermediate activation; the backward pass
//! consumes the cache and yields exact gradients of `<dZ, Z>` with respect
//! to every unfrozen parameter.

mod layers;

use rayon::prelude::*;

use crate::augment::FloatImage;
use crate::error::{Error, Result};
use crate::numeric::{Matrix, RandomStream, Real};

/// Channels-height-width extent of an activation; flat vectors are (n,1,1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Shape { c, h, w }
    }

    pub fn flat(&self) -> usize {
        self.c * self.h * self.w
    }
}

/// One layer of the chain. Convolutions are fixed at 3x3, stride 1, zero
/// padding 1; max pooling at 2x2, stride 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv { in_channels: usize, out_channels: usize },
    ReLU,
    MaxPool,
    GlobalAvgPool,
    Dense { in_units: usize, out_units: usize },
}

impl LayerSpec {
    fn out_shape(&self, input: Shape) -> std::result::Result<Shape, String> {
        match *self {
            LayerSpec::Conv { in_channels, out_channels } => {
                if input.c != in_channels {
                    return Err(format!("expects {in_channels} channels, input has {}", input.c));
                }
                Ok(Shape::new(out_channels, input.h, input.w))
            }
            LayerSpec::ReLU => Ok(input),
            LayerSpec::MaxPool => {
                if input.h < 2 || input.w < 2 {
                    return Err(format!("input {}x{} too small to pool", input.h, input.w));
                }
                Ok(Shape::new(input.c, input.h / 2, input.w / 2))
            }
            LayerSpec::GlobalAvgPool => Ok(Shape::new(input.c, 1, 1)),
            LayerSpec::Dense { in_units, out_units } => {
                if input.flat() != in_units {
                    return Err(format!("expects {in_units} inputs, got {}", input.flat()));
                }
                Ok(Shape::new(out_units, 1, 1))
            }
        }
    }

    fn describe(&self) -> String {
        format!("{self:?}")
    }
}

/// Validated layer chain with precomputed activation shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderSpec {
    layers: Vec<LayerSpec>,
    input: Shape,
    /// shapes[i] is the input of layer i; shapes[len] is the output.
    shapes: Vec<Shape>,
}

impl EncoderSpec {
    /// Validate a chain: shapes must compose, the last three layers must be
    /// the `Dense -> ReLU -> Dense` head, and the backbone must end flat.
    pub fn new(input: Shape, layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.len() < 3 {
            return Err(Error::Config {
                reason: "encoder needs at least the Dense-ReLU-Dense head".into(),
            });
        }
        let n = layers.len();
        if !matches!(layers[n - 3], LayerSpec::Dense { .. })
            || !matches!(layers[n - 2], LayerSpec::ReLU)
            || !matches!(layers[n - 1], LayerSpec::Dense { .. })
        {
            return Err(Error::Config {
                reason: "the last three layers must be Dense, ReLU, Dense".into(),
            });
        }
        let mut shapes = Vec::with_capacity(n + 1);
        shapes.push(input);
        for (i, layer) in layers.iter().enumerate() {
            let out = layer.out_shape(shapes[i]).map_err(|reason| Error::LayerShape {
                index: i,
                layer: layer.describe(),
                reason,
            })?;
            shapes.push(out);
        }
        // the backbone output (H) is consumed flattened by the head's
        // first dense layer, so any composing shape is acceptable here
        Ok(EncoderSpec { layers, input, shapes })
    }

    /// The laptop-scale default: two conv/pool blocks into a 64-unit `H`
    /// and a 128-unit hidden head.
    pub fn desk(input: Shape, readout_dim: usize) -> Result<Self> {
        EncoderSpec::new(
            input,
            vec![
                LayerSpec::Conv { in_channels: input.c, out_channels: 16 },
                LayerSpec::ReLU,
                LayerSpec::MaxPool,
                LayerSpec::Conv { in_channels: 16, out_channels: 32 },
                LayerSpec::ReLU,
                LayerSpec::MaxPool,
                LayerSpec::GlobalAvgPool,
                LayerSpec::Dense { in_units: 32, out_units: 64 },
                LayerSpec::Dense { in_units: 64, out_units: 128 },
                LayerSpec::ReLU,
                LayerSpec::Dense { in_units: 128, out_units: readout_dim },
            ],
        )
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    /// Dimension of the backbone output `H`.
    pub fn h_dim(&self) -> usize {
        self.shapes[self.layers.len() - 3].flat()
    }

    /// Dimension of the head output `Z` (the readout width).
    pub fn z_dim(&self) -> usize {
        self.shapes[self.layers.len()].flat()
    }

    fn readout_index(&self) -> usize {
        self.layers.len() - 1
    }

    fn with_readout(&self, new_dim: usize) -> Result<Self> {
        let mut layers = self.layers.clone();
        let idx = self.readout_index();
        if let LayerSpec::Dense { in_units, .. } = layers[idx] {
            layers[idx] = LayerSpec::Dense { in_units, out_units: new_dim };
        }
        EncoderSpec::new(self.input, layers)
    }
}

/// Weight and bias tensors of one parameterized layer. Conv weights are
/// `[out_ch][in_ch][ky][kx]`, dense weights `[out][in]`, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensors<T> {
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Real> ParamTensors<T> {
    fn zeros(w_len: usize, b_len: usize) -> Self {
        ParamTensors { w: vec![T::ZERO; w_len], b: vec![T::ZERO; b_len] }
    }
}

fn param_sizes(layer: &LayerSpec) -> Option<(usize, usize, usize, usize)> {
    // (w_len, b_len, fan_in, fan_out)
    match *layer {
        LayerSpec::Conv { in_channels, out_channels } => {
            Some((out_channels * in_channels * 9, out_channels, in_channels * 9, out_channels * 9))
        }
        LayerSpec::Dense { in_units, out_units } => {
            Some((out_units * in_units, out_units, in_units, out_units))
        }
        _ => None,
    }
}

/// All trainable state of an encoder: the spec, per-layer tensors, and the
/// per-layer freeze mask.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T> {
    spec: EncoderSpec,
    layers: Vec<Option<ParamTensors<T>>>,
    freeze: Vec<bool>,
}

/// Per-layer gradients, same shapes as the parameters they refer to.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub layers: Vec<Option<ParamTensors<T>>>,
}

impl<T: Real> Gradients<T> {
    fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                for (x, &y) in a.w.iter_mut().zip(&b.w) {
                    *x += y;
                }
                for (x, &y) in a.b.iter_mut().zip(&b.b) {
                    *x += y;
                }
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for lp in self.layers.iter().flatten() {
            for v in lp.w.iter().chain(&lp.b) {
                m = m.max(v.abs().to_f64());
            }
        }
        m
    }
}

impl<T: Real> EncoderParams<T> {
    /// Fresh parameters: weights uniform in `±sqrt(6 / (fan_in + fan_out))`
    /// drawn in layer order from `rng`, biases zero, nothing frozen.
    pub fn init(spec: EncoderSpec, rng: &mut RandomStream) -> Self {
        let layers = spec
            .layers
            .iter()
            .map(|layer| {
                param_sizes(layer).map(|(w_len, b_len, fan_in, fan_out)| {
                    let mut p = ParamTensors::zeros(w_len, b_len);
                    fill_uniform(&mut p.w, fan_in, fan_out, rng);
                    p
                })
            })
            .collect();
        let freeze = vec![false; spec.layers.len()];
        EncoderParams { spec, layers, freeze }
    }

    /// Rebuild parameters from stored tensors (checkpoint loading).
    pub fn from_tensors(
        spec: EncoderSpec,
        layers: Vec<Option<ParamTensors<T>>>,
        freeze: Vec<bool>,
    ) -> Result<Self> {
        if layers.len() != spec.layers.len() || freeze.len() != spec.layers.len() {
            return Err(Error::Config {
                reason: format!(
                    "expected {} layers of tensors, got {} (freeze {})",
                    spec.layers.len(),
                    layers.len(),
                    freeze.len()
                ),
            });
        }
        for (i, (layer, tensors)) in spec.layers.iter().zip(&layers).enumerate() {
            match (param_sizes(layer), tensors) {
                (None, None) => {}
                (Some((w_len, b_len, _, _)), Some(t)) if t.w.len() == w_len && t.b.len() == b_len => {}
                _ => {
                    return Err(Error::Config {
                        reason: format!("tensor shapes at layer {i} do not match the spec"),
                    })
                }
            }
        }
        Ok(EncoderParams { spec, layers, freeze })
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn layer(&self, i: usize) -> Option<&ParamTensors<T>> {
        self.layers[i].as_ref()
    }

    pub fn layer_mut(&mut self, i: usize) -> Option<&mut ParamTensors<T>> {
        self.layers[i].as_mut()
    }

    pub fn freeze_mask(&self) -> &[bool] {
        &self.freeze
    }

    pub fn readout_dim(&self) -> usize {
        self.spec.z_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().flatten().map(|p| p.w.len() + p.b.len()).sum()
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| l.as_ref().map(|p| ParamTensors::zeros(p.w.len(), p.b.len())))
                .collect(),
        }
    }

    /// Replace the readout layer with fresh random weights of width
    /// `new_dim`; every other tensor is carried over bit-identically. The
    /// readout is re-randomized even when the width does not change.
    pub fn reinit_readout(&self, new_dim: usize, rng: &mut RandomStream) -> Result<Self> {
        let spec = self.spec.with_readout(new_dim)?;
        let idx = spec.readout_index();
        let mut layers = self.layers.clone();
        let (w_len, b_len, fan_in, fan_out) =
            param_sizes(&spec.layers[idx]).expect("readout is dense");
        let mut p = ParamTensors::zeros(w_len, b_len);
        fill_uniform(&mut p.w, fan_in, fan_out, rng);
        layers[idx] = Some(p);
        Ok(EncoderParams { spec, layers, freeze: self.freeze.clone() })
    }

    /// Return params with exactly the given layers frozen.
    pub fn set_freeze(&self, frozen_layers: &[usize]) -> Result<Self> {
        let mut freeze = vec![false; self.layers.len()];
        for &i in frozen_layers {
            if i >= self.layers.len() {
                return Err(Error::LayerIndex { index: i, layers: self.layers.len() });
            }
            freeze[i] = true;
        }
        Ok(EncoderParams { spec: self.spec.clone(), layers: self.layers.clone(), freeze })
    }

    /// Freeze everything except the readout layer.
    pub fn freeze_all_but_readout(&self) -> Self {
        let readout = self.spec.readout_index();
        let freeze = (0..self.layers.len()).map(|i| i != readout).collect();
        EncoderParams { spec: self.spec.clone(), layers: self.layers.clone(), freeze }
    }

    pub fn unfreeze_all(&self) -> Self {
        EncoderParams {
            spec: self.spec.clone(),
            layers: self.layers.clone(),
            freeze: vec![false; self.layers.len()],
        }
    }

    /// Narrow to the f32 storage used by checkpoints.
    pub fn to_f32(&self) -> EncoderParams<f32> {
        EncoderParams {
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| {
                    l.as_ref().map(|p| ParamTensors {
                        w: p.w.iter().map(|v| v.to_f64() as f32).collect(),
                        b: p.b.iter().map(|v| v.to_f64() as f32).collect(),
                    })
                })
                .collect(),
            freeze: self.freeze.clone(),
        }
    }
}

fn fill_uniform<T: Real>(w: &mut [T], fan_in: usize, fan_out: usize, rng: &mut RandomStream) {
    let limit = T::from_f64((6.0 / (fan_in + fan_out) as f64).sqrt());
    let two = T::from_f64(2.0);
    for v in w.iter_mut() {
        *v = (two * T::unit_from(rng) - T::ONE) * limit;
    }
}

/// Activation record of one image's forward pass: the input of every layer.
struct ViewCache<T> {
    inputs: Vec<Vec<T>>,
}

/// Batch forward cache consumed by [`backward`].
pub struct Cache<T> {
    spec: EncoderSpec,
    views: Vec<ViewCache<T>>,
}

/// Result of a batch [`forward`] pass.
pub struct ForwardPass<T> {
    /// Backbone outputs, one row per image.
    pub h: Matrix<T>,
    /// Head outputs (the embedding), one row per image.
    pub z: Matrix<T>,
    pub cache: Cache<T>,
}

/// Run the encoder on a batch of images.
pub fn forward<T: Real>(images: &[FloatImage<T>], params: &EncoderParams<T>) -> Result<ForwardPass<T>> {
    if images.is_empty() {
        return Err(Error::Empty { what: "image batch" });
    }
    let spec = &params.spec;
    let expect = spec.input;
    for img in images {
        if img.c != expect.c || img.h != expect.h || img.w != expect.w {
            return Err(Error::InputShape {
                c: img.c,
                h: img.h,
                w: img.w,
                ec: expect.c,
                eh: expect.h,
                ew: expect.w,
            });
        }
    }

    let results: Vec<(Vec<T>, Vec<T>, ViewCache<T>)> =
        images.par_iter().map(|img| forward_one(img, params)).collect();

    let mut h = Matrix::zeros(images.len(), spec.h_dim());
    let mut z = Matrix::zeros(images.len(), spec.z_dim());
    let mut views = Vec::with_capacity(images.len());
    for (i, (h_row, z_row, cache)) in results.into_iter().enumerate() {
        h.row_mut(i).copy_from_slice(&h_row);
        z.row_mut(i).copy_from_slice(&z_row);
        views.push(cache);
    }
    Ok(ForwardPass { h, z, cache: Cache { spec: spec.clone(), views } })
}

fn forward_one<T: Real>(img: &FloatImage<T>, params: &EncoderParams<T>) -> (Vec<T>, Vec<T>, ViewCache<T>) {
    let spec = &params.spec;
    let n_layers = spec.layers.len();
    let mut inputs: Vec<Vec<T>> = Vec::with_capacity(n_layers);
    let mut act = img.data.clone();
    let mut h_row = Vec::new();
    for (i, layer) in spec.layers.iter().enumerate() {
        if i == n_layers - 3 {
            h_row = act.clone();
        }
        let shape = spec.shapes[i];
        let out_len = spec.shapes[i + 1].flat();
        let mut out = vec![T::ZERO; out_len];
        match layer {
            LayerSpec::Conv { in_channels, out_channels } => {
                let p = params.layers[i].as_ref().expect("conv has params");
                layers::conv_forward(
                    &act,
                    *in_channels,
                    shape.h,
                    shape.w,
                    &p.w,
                    &p.b,
                    *out_channels,
                    &mut out,
                );
            }
            LayerSpec::ReLU => layers::relu_forward(&act, &mut out),
            LayerSpec::MaxPool => layers::maxpool_forward(&act, shape.c, shape.h, shape.w, &mut out),
            LayerSpec::GlobalAvgPool => {
                layers::gap_forward(&act, shape.c, shape.h * shape.w, &mut out)
            }
            LayerSpec::Dense { .. } => {
                let p = params.layers[i].as_ref().expect("dense has params");
                layers::dense_forward(&act, &p.w, &p.b, &mut out);
            }
        }
        inputs.push(act);
        act = out;
    }
    (h_row, act, ViewCache { inputs })
}

/// Backpropagate `dZ` through the cached forward pass.
///
/// Returns the gradient of `<dZ, Z>` for every parameter; frozen layers get
/// zeros, and propagation stops once every remaining upstream layer is
/// frozen. Gradients of the batch accumulate in fixed chunk order, so the
/// result does not depend on the worker count.
pub fn backward<T: Real>(
    cache: &Cache<T>,
    dz: &Matrix<T>,
    params: &EncoderParams<T>,
) -> Result<Gradients<T>> {
    if cache.spec != params.spec {
        return Err(Error::CacheMismatch { reason: "cache built for a different encoder".into() });
    }
    if dz.rows() != cache.views.len() || dz.cols() != params.spec.z_dim() {
        return Err(Error::CacheMismatch {
            reason: format!(
                "dZ is {}x{}, cache holds {} views of width {}",
                dz.rows(),
                dz.cols(),
                cache.views.len(),
                params.spec.z_dim()
            ),
        });
    }

    let first_unfrozen = (0..params.layers.len())
        .find(|&i| params.layers[i].is_some() && !params.freeze[i]);
    let Some(first_unfrozen) = first_unfrozen else {
        return Ok(params.zero_gradients());
    };

    const CHUNK: usize = 32;
    let chunks: Vec<Gradients<T>> = cache
        .views
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(chunk_idx, views)| {
            let mut acc = params.zero_gradients();
            for (off, view) in views.iter().enumerate() {
                let row = chunk_idx * CHUNK + off;
                backward_one(view, dz.row(row), params, first_unfrozen, &mut acc);
            }
            acc
        })
        .collect();

    let mut total = params.zero_gradients();
    for chunk in &chunks {
        total.add_assign(chunk);
    }
    Ok(total)
}

fn backward_one<T: Real>(
    view: &ViewCache<T>,
    dz: &[T],
    params: &EncoderParams<T>,
    first_unfrozen: usize,
    grads: &mut Gradients<T>,
) {
    let spec = &params.spec;
    let mut grad = dz.to_vec();
    for i in (first_unfrozen..spec.layers.len()).rev() {
        let input = &view.inputs[i];
        let shape = spec.shapes[i];
        let trainable = params.layers[i].is_some() && !params.freeze[i];
        let need_din = i > first_unfrozen;
        match spec.layers[i] {
            LayerSpec::Conv { in_channels, out_channels } => {
                if trainable {
                    let g = grads.layers[i].as_mut().expect("gradient slot exists");
                    layers::conv_backward_params(
                        input,
                        &grad,
                        in_channels,
                        shape.h,
                        shape.w,
                        out_channels,
                        &mut g.w,
                        &mut g.b,
                    );
                }
                if need_din {
                    let p = params.layers[i].as_ref().expect("conv has params");
                    let mut din = vec![T::ZERO; shape.flat()];
                    layers::conv_backward_input(
                        &grad,
                        in_channels,
                        shape.h,
                        shape.w,
                        &p.w,
                        out_channels,
                        &mut din,
                    );
                    grad = din;
                }
            }
            LayerSpec::Dense { .. } => {
                if trainable {
                    let g = grads.layers[i].as_mut().expect("gradient slot exists");
                    layers::dense_backward_params(input, &grad, &mut g.w, &mut g.b);
                }
                if need_din {
                    let p = params.layers[i].as_ref().expect("dense has params");
                    let mut din = vec![T::ZERO; shape.flat()];
                    layers::dense_backward_input(&p.w, &grad, &mut din);
                    grad = din;
                }
            }
            LayerSpec::ReLU => {
                if need_din {
                    let mut din = vec![T::ZERO; shape.flat()];
                    layers::relu_backward(input, &grad, &mut din);
                    grad = din;
                }
            }
            LayerSpec::MaxPool => {
                if need_din {
                    let mut din = vec![T::ZERO; shape.flat()];
                    layers::maxpool_backward(input, &grad, shape.c, shape.h, shape.w, &mut din);
                    grad = din;
                }
            }
            LayerSpec::GlobalAvgPool => {
                if need_din {
                    let mut din = vec![T::ZERO; shape.flat()];
                    layers::gap_backward(&grad, shape.c, shape.h * shape.w, &mut din);
                    grad = din;
                }
            }
        }
        if !need_din {
            break;
        }
    }
}
