//! Feed-forward prediction block mapping a context vector to a
//! [`ParamPack`], with exact backpropagation and Adam.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::pack::{Field, PackLayout, ParamPack};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    ReLU,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::ReLU => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative in terms of the preactivation `p` and output `y`.
    fn derivative(self, p: f64, y: f64) -> f64 {
        match self {
            Activation::ReLU => {
                if p > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`.
    pub w: Mat,
    pub b: Vector,
    pub act: Activation,
}

/// Multi-layer perceptron whose output vector is read as a [`ParamPack`]
/// with the given layout; the layout blocks are the output heads.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorNet {
    layers: Vec<Layer>,
    layout: Arc<PackLayout>,
}

/// Inputs and outputs of every layer from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    inputs: Vec<Vector>,
    pre: Vec<Vector>,
    post: Vec<Vector>,
}

impl PredictorNet {
    /// `widths = [input, hidden…, output]`, one activation per layer. The
    /// output width must equal the layout length. Weights are Glorot-uniform,
    /// biases zero.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], acts: &[Activation], layout: Arc<PackLayout>, rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || acts.len() != widths.len() - 1 {
            return Err(Error::InvalidConfig("need at least one layer and one activation per layer".into()));
        }
        if *widths.last().expect("nonempty") != layout.len() {
            return Err(Error::DimensionMismatch { what: "output width vs layout", expected: layout.len(), got: *widths.last().expect("nonempty") });
        }
        if widths.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        let layers = widths
            .windows(2)
            .zip(acts)
            .map(|(w, &act)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("valid bound");
                Layer { w: Mat::from_fn(fan_out, fan_in, |_, _| dist.sample(rng)), b: Vector::zeros(fan_out), act }
            })
            .collect();
        Ok(Self { layers, layout })
    }

    /// Builds a net from explicit layers.
    pub fn from_layers(layers: Vec<Layer>, layout: Arc<PackLayout>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("empty network".into()));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.b.len() != layer.w.nrows() {
                return Err(Error::DimensionMismatch { what: "layer bias", expected: layer.w.nrows(), got: layer.b.len() });
            }
            if k > 0 && layer.w.ncols() != layers[k - 1].w.nrows() {
                return Err(Error::DimensionMismatch { what: "layer chaining", expected: layers[k - 1].w.nrows(), got: layer.w.ncols() });
            }
        }
        let out = layers.last().expect("nonempty").w.nrows();
        if out != layout.len() {
            return Err(Error::DimensionMismatch { what: "output width vs layout", expected: layout.len(), got: out });
        }
        Ok(Self { layers, layout })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layout(&self) -> &Arc<PackLayout> {
        &self.layout
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.w.nrows()));
        w
    }

    /// Sets the output bias of every factor head to `scale·I` (row-major,
    /// truncated or padded for non-square factors), so the predicted
    /// quadratics start near `scale²·I`.
    pub fn init_factor_bias(&mut self, scale: f64) {
        let layout = self.layout.clone();
        let last = self.layers.last_mut().expect("nonempty");
        for block in layout.blocks() {
            if matches!(block.field, Field::ObjectiveFactor | Field::ConstraintFactor(_)) {
                for r in 0..block.rows {
                    for c in 0..block.cols {
                        last.b[block.offset + r * block.cols + c] = if r == c { scale } else { 0.0 };
                    }
                }
            }
        }
    }

    /// Sets the output bias of one head directly.
    pub fn set_head_bias(&mut self, field: Field, values: &[f64]) -> Result<()> {
        let block = *self.layout.block(field).ok_or(Error::InvalidConfig(alloc::format!("no head for {field:?}")))?;
        if values.len() != block.len() {
            return Err(Error::DimensionMismatch { what: "head bias", expected: block.len(), got: values.len() });
        }
        let last = self.layers.last_mut().expect("nonempty");
        last.b.rows_mut(block.offset, block.len()).copy_from_slice(values);
        Ok(())
    }

    pub fn forward(&self, z: &Vector) -> Result<(ParamPack, ForwardCache)> {
        if z.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { what: "context", expected: self.input_dim(), got: z.len() });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut h = z.clone();
        for layer in &self.layers {
            let p = &layer.w * &h + &layer.b;
            let y = p.map(|v| layer.act.apply(v));
            inputs.push(h);
            pre.push(p);
            h = y.clone();
            post.push(y);
        }
        let pack = ParamPack::from_values(self.layout.clone(), h.iter().copied().collect())?;
        Ok((pack, ForwardCache { inputs, pre, post }))
    }

    /// Reverse-mode gradient of all weights and biases, flattened as in
    /// [`PredictorNet::params`], for an output gradient `g_out`.
    pub fn backward(&self, cache: &ForwardCache, g_out: &[f64]) -> Result<Vec<f64>> {
        if cache.pre.len() != self.layers.len() {
            return Err(Error::DimensionMismatch { what: "stale cache layers", expected: self.layers.len(), got: cache.pre.len() });
        }
        for (layer, p) in self.layers.iter().zip(&cache.pre) {
            if p.len() != layer.w.nrows() {
                return Err(Error::DimensionMismatch { what: "stale cache width", expected: layer.w.nrows(), got: p.len() });
            }
        }
        if g_out.len() != self.layout.len() {
            return Err(Error::DimensionMismatch { what: "output gradient", expected: self.layout.len(), got: g_out.len() });
        }
        let mut grads: Vec<(Mat, Vector)> = Vec::with_capacity(self.layers.len());
        let mut g = Vector::from_column_slice(g_out);
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let p = &cache.pre[k];
            let y = &cache.post[k];
            let delta = Vector::from_fn(g.len(), |i, _| g[i] * layer.act.derivative(p[i], y[i]));
            let gw = &delta * cache.inputs[k].transpose();
            g = layer.w.tr_mul(&delta);
            grads.push((gw, delta));
        }
        grads.reverse();
        let mut flat = Vec::with_capacity(self.n_params());
        for (gw, gb) in grads {
            push_rows(&mut flat, &gw);
            flat.extend(gb.iter());
        }
        Ok(flat)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flat parameters: per layer, `W` row-major then `b`.
    pub fn params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            push_rows(&mut flat, &l.w);
            flat.extend(l.b.iter());
        }
        flat
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::DimensionMismatch { what: "network parameters", expected: self.n_params(), got: flat.len() });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let (r, c) = l.w.shape();
            l.w = Mat::from_row_slice(r, c, &flat[off..off + r * c]);
            off += r * c;
            l.b.copy_from_slice(&flat[off..off + r]);
            off += r;
        }
        Ok(())
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.act).collect()
    }
}

fn push_rows(out: &mut Vec<f64>, m: &Mat) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-2, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub cfg: AdamConfig,
}

impl AdamState {
    pub fn new(dim: usize, cfg: AdamConfig) -> Self {
        Self { m: vec![0.0; dim], v: vec![0.0; dim], step: 0, cfg }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(Error::DimensionMismatch { what: "adam state", expected: state.m.len(), got: params.len().max(grads.len()) });
    }
    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.cfg;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for i in 0..params.len() {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
