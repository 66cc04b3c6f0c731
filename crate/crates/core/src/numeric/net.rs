//! Dense networks built from a fixed layer vocabulary with hand-written
//! backpropagation.
//!
//! Supported layers: affine, layer norm, relu, inverted dropout, and
//! residual wrappers (`x + f(x)`) around any sequence of these.
//! Parameters are exposed in a fixed depth-first order (affine: weight then
//! bias; layer norm: gain then bias) which gradients, optimizer state and
//! EMA shadows all share.

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::rng::SeededRng;
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    /// `(in, out)`; forward is `x · w + b`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn new(input: usize, output: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let data = (0..input * output).map(|_| rng.uniform_range(-bound, bound)).collect();
        Self {
            weight: Matrix::from_vec(input, output, data).expect("sized"),
            bias: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gain: vec![1.0; dim],
            bias: vec![0.0; dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Affine(Affine),
    LayerNorm(LayerNorm),
    Relu,
    Dropout { rate: f64 },
    Residual { body: Vec<Layer> },
}

impl Layer {
    fn output_dim(&self, input: usize) -> usize {
        match self {
            Layer::Affine(a) => a.output_dim(),
            Layer::Residual { .. } | Layer::LayerNorm(_) | Layer::Relu | Layer::Dropout { .. } => input,
        }
    }

    fn collect_params<'a>(&'a self, out: &mut Vec<&'a [f64]>) {
        match self {
            Layer::Affine(a) => {
                out.push(a.weight.as_slice());
                out.push(&a.bias);
            }
            Layer::LayerNorm(n) => {
                out.push(&n.gain);
                out.push(&n.bias);
            }
            Layer::Residual { body } => body.iter().for_each(|l| l.collect_params(out)),
            Layer::Relu | Layer::Dropout { .. } => {}
        }
    }

    fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        match self {
            Layer::Affine(a) => {
                out.push(a.weight.as_mut_slice());
                out.push(&mut a.bias);
            }
            Layer::LayerNorm(n) => {
                out.push(&mut n.gain);
                out.push(&mut n.bias);
            }
            Layer::Residual { body } => body.iter_mut().for_each(|l| l.collect_params_mut(out)),
            Layer::Relu | Layer::Dropout { .. } => {}
        }
    }

    fn signature(&self, h: &mut u64) {
        fn mix(h: &mut u64, v: u64) {
            *h = (*h ^ v).wrapping_mul(0x0100_0000_01b3);
        }
        match self {
            Layer::Affine(a) => {
                mix(h, 1);
                mix(h, a.input_dim() as u64);
                mix(h, a.output_dim() as u64);
            }
            Layer::LayerNorm(n) => {
                mix(h, 2);
                mix(h, n.gain.len() as u64);
            }
            Layer::Relu => mix(h, 3),
            Layer::Dropout { rate } => {
                mix(h, 4);
                mix(h, rate.to_bits());
            }
            Layer::Residual { body } => {
                mix(h, 5);
                body.iter().for_each(|l| l.signature(h));
                mix(h, 6);
            }
        }
    }
}

/// Per-parameter-tensor gradients, ordered like [`Parameterized::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Vec<f64>>);

impl Grads {
    pub fn zeros_like(params: &[&[f64]]) -> Self {
        Grads(params.iter().map(|p| vec![0.0; p.len()]).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn extend(&mut self, other: Grads) {
        self.0.extend(other.0);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Anything holding trainable parameter tensors in a stable order.
pub trait Parameterized {
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn params_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    fn snapshot(&self) -> Vec<Vec<f64>> {
        self.params().iter().map(|p| p.to_vec()).collect()
    }

    /// Overwrites parameters from a snapshot with matching shapes.
    fn load_snapshot(&mut self, snapshot: &[Vec<f64>]) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != snapshot.len() || params.iter().zip(snapshot).any(|(p, s)| p.len() != s.len()) {
            return Err(Error::shape("snapshot does not match parameter shapes"));
        }
        for (p, s) in params.iter_mut().zip(snapshot) {
            p.copy_from_slice(s);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum LayerCache {
    Affine { input: Matrix },
    LayerNorm { xhat: Matrix, inv_std: Vec<f64> },
    Relu { output: Matrix },
    Dropout { mask: Option<Vec<f64>> },
    Residual { body: Vec<LayerCache> },
}

/// Activations retained by [`DenseNet::forward`] for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    signature: u64,
    batch: usize,
    output_dim: usize,
    layers: Vec<LayerCache>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    input_dim: usize,
    layers: Vec<Layer>,
}

impl DenseNet {
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        let net = Self { input_dim, layers };
        net.validate()?;
        Ok(net)
    }

    /// Plain MLP: `dims[0] -> dims[1] -> ... -> dims[last]` with `hidden`
    /// after every layer except the last, which gets `last`.
    pub fn mlp(dims: &[usize], hidden: Activation, last: Activation, rng: &mut SeededRng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::config("an MLP needs at least input and output widths"));
        }
        let mut layers = Vec::new();
        for (i, w) in dims.windows(2).enumerate() {
            layers.push(Layer::Affine(Affine::new(w[0], w[1], rng)));
            let act = if i + 2 == dims.len() { last } else { hidden };
            if act == Activation::Relu {
                layers.push(Layer::Relu);
            }
        }
        Self::new(dims[0], layers)
    }

    /// `LayerNorm -> affine -> relu -> dropout -> affine`, wrapped residually.
    pub fn residual_block(width: usize, dropout: f64, rng: &mut SeededRng) -> Layer {
        let mut body = vec![
            Layer::LayerNorm(LayerNorm::new(width)),
            Layer::Affine(Affine::new(width, width, rng)),
            Layer::Relu,
        ];
        if dropout > 0.0 {
            body.push(Layer::Dropout { rate: dropout });
        }
        body.push(Layer::Affine(Affine::new(width, width, rng)));
        Layer::Residual { body }
    }

    fn validate(&self) -> Result<()> {
        fn walk(layers: &[Layer], mut dim: usize) -> Result<usize> {
            for (i, layer) in layers.iter().enumerate() {
                match layer {
                    Layer::Affine(a) => {
                        if a.input_dim() != dim {
                            return Err(Error::shape(format!(
                                "layer {i} expects width {}, receives {dim}",
                                a.input_dim()
                            )));
                        }
                        if a.bias.len() != a.output_dim() {
                            return Err(Error::shape(format!("layer {i} bias length")));
                        }
                    }
                    Layer::LayerNorm(n) => {
                        if n.gain.len() != dim || n.bias.len() != dim {
                            return Err(Error::shape(format!(
                                "layer norm {i} width {} on input {dim}",
                                n.gain.len()
                            )));
                        }
                    }
                    Layer::Dropout { rate } => {
                        if !(0.0..1.0).contains(rate) {
                            return Err(Error::config(format!("dropout rate {rate} not in [0,1)")));
                        }
                    }
                    Layer::Residual { body } => {
                        let out = walk(body, dim)?;
                        if out != dim {
                            return Err(Error::shape(format!("residual block {i} maps {dim} to {out}")));
                        }
                    }
                    Layer::Relu => {}
                }
                dim = layer.output_dim(dim);
            }
            Ok(dim)
        }
        walk(&self.layers, self.input_dim)?;
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.iter().fold(self.input_dim, |d, l| l.output_dim(d))
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    fn signature(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325 ^ self.input_dim as u64;
        self.layers.iter().for_each(|l| l.signature(&mut h));
        h
    }

    /// Forward pass. `rng` is only consumed by dropout in training mode.
    pub fn forward(&self, x: &Matrix, mode: Mode, rng: &mut SeededRng) -> Result<(Matrix, ForwardCache)> {
        if x.cols() != self.input_dim {
            return Err(Error::shape(format!(
                "batch width {} but network input width {}",
                x.cols(),
                self.input_dim
            )));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("network input".into()));
        }
        let (out, layers) = forward_layers(&self.layers, x.clone(), mode, rng);
        let cache = ForwardCache {
            signature: self.signature(),
            batch: x.rows(),
            output_dim: out.cols(),
            layers,
        };
        Ok((out, cache))
    }

    /// Evaluation-mode forward without keeping a cache.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let mut rng = SeededRng::new(0, 0);
        self.forward(x, Mode::Eval, &mut rng).map(|(y, _)| y)
    }

    /// Gradients of a scalar loss given `grad_out = dL/d(output)`.
    /// Returns `dL/d(input)` and parameter gradients.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Matrix) -> Result<(Matrix, Grads)> {
        if cache.signature != self.signature() || cache.layers.len() != self.layers.len() {
            return Err(Error::shape("forward cache was produced by a different network"));
        }
        if grad_out.shape() != (cache.batch, cache.output_dim) {
            return Err(Error::shape(format!(
                "gradient shape {:?} does not match cached output ({}, {})",
                grad_out.shape(),
                cache.batch,
                cache.output_dim
            )));
        }
        let (gx, grads) = backward_layers(&self.layers, &cache.layers, grad_out.clone());
        Ok((gx, Grads(grads)))
    }
}

impl Parameterized for DenseNet {
    fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        self.layers.iter().for_each(|l| l.collect_params(&mut out));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.layers.iter_mut().for_each(|l| l.collect_params_mut(&mut out));
        out
    }
}

fn forward_layers(layers: &[Layer], mut x: Matrix, mode: Mode, rng: &mut SeededRng) -> (Matrix, Vec<LayerCache>) {
    let mut caches = Vec::with_capacity(layers.len());
    for layer in layers {
        let (y, cache) = match layer {
            Layer::Affine(a) => {
                let mut y = x.matmul(&a.weight);
                y.add_row_vector(&a.bias);
                (y, LayerCache::Affine { input: x })
            }
            Layer::LayerNorm(n) => layer_norm_forward(n, &x),
            Layer::Relu => {
                let y = x.map(|v| v.max(0.0));
                (y.clone(), LayerCache::Relu { output: y })
            }
            Layer::Dropout { rate } => {
                if mode == Mode::Train && *rate > 0.0 {
                    let keep = 1.0 - rate;
                    let mask: Vec<f64> = (0..x.as_slice().len())
                        .map(|_| if rng.uniform() < *rate { 0.0 } else { 1.0 / keep })
                        .collect();
                    for (v, m) in x.as_mut_slice().iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    (x, LayerCache::Dropout { mask: Some(mask) })
                } else {
                    (x, LayerCache::Dropout { mask: None })
                }
            }
            Layer::Residual { body } => {
                let (mut y, inner) = forward_layers(body, x.clone(), mode, rng);
                y.add_assign(&x);
                (y, LayerCache::Residual { body: inner })
            }
        };
        caches.push(cache);
        x = y;
    }
    (x, caches)
}

fn layer_norm_forward(n: &LayerNorm, x: &Matrix) -> (Matrix, LayerCache) {
    let d = x.cols();
    let mut xhat = Matrix::zeros(x.rows(), d);
    let mut inv_std = Vec::with_capacity(x.rows());
    let mut y = Matrix::zeros(x.rows(), d);
    for i in 0..x.rows() {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std.push(r);
        let xh = xhat.row_mut(i);
        for (h, v) in xh.iter_mut().zip(row) {
            *h = (v - mean) * r;
        }
        let yr = y.row_mut(i);
        for j in 0..d {
            yr[j] = n.gain[j] * xhat[(i, j)] + n.bias[j];
        }
    }
    (y, LayerCache::LayerNorm { xhat, inv_std })
}

fn backward_layers(layers: &[Layer], caches: &[LayerCache], mut grad: Matrix) -> (Matrix, Vec<Vec<f64>>) {
    let mut per_layer: Vec<Vec<Vec<f64>>> = vec![Vec::new(); layers.len()];
    for (idx, (layer, cache)) in layers.iter().zip(caches).enumerate().rev() {
        grad = match (layer, cache) {
            (Layer::Affine(a), LayerCache::Affine { input }) => {
                let gw = input.t_matmul(&grad);
                let gb = grad.column_sums();
                per_layer[idx] = vec![gw.into_vec(), gb];
                grad.matmul_t(&a.weight)
            }
            (Layer::LayerNorm(n), LayerCache::LayerNorm { xhat, inv_std }) => {
                let d = grad.cols();
                let mut gg = vec![0.0; d];
                let mut gbias = vec![0.0; d];
                let mut gx = Matrix::zeros(grad.rows(), d);
                for (i, &r) in inv_std.iter().enumerate() {
                    let go = grad.row(i);
                    let xh = xhat.row(i);
                    let mut sum_dxh = 0.0;
                    let mut sum_dxh_xh = 0.0;
                    for j in 0..d {
                        gg[j] += go[j] * xh[j];
                        gbias[j] += go[j];
                        let dxh = go[j] * n.gain[j];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh[j];
                    }
                    let df = d as f64;
                    let gr = gx.row_mut(i);
                    for j in 0..d {
                        let dxh = go[j] * n.gain[j];
                        gr[j] = r / df * (df * dxh - sum_dxh - xh[j] * sum_dxh_xh);
                    }
                }
                per_layer[idx] = vec![gg, gbias];
                gx
            }
            (Layer::Relu, LayerCache::Relu { output }) => {
                for (g, o) in grad.as_mut_slice().iter_mut().zip(output.as_slice()) {
                    if *o <= 0.0 {
                        *g = 0.0;
                    }
                }
                grad
            }
            (Layer::Dropout { .. }, LayerCache::Dropout { mask }) => {
                if let Some(mask) = mask {
                    for (g, m) in grad.as_mut_slice().iter_mut().zip(mask) {
                        *g *= m;
                    }
                }
                grad
            }
            (Layer::Residual { body }, LayerCache::Residual { body: inner }) => {
                let (mut gx, g) = backward_layers(body, inner, grad.clone());
                per_layer[idx] = g;
                gx.add_assign(&grad);
                gx
            }
            _ => unreachable!("cache signature checked before backward"),
        };
    }
    (grad, per_layer.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_net(d: usize) -> DenseNet {
        let affine = Affine {
            weight: Matrix::identity(d),
            bias: vec![0.0; d],
        };
        DenseNet::new(d, vec![Layer::Affine(affine)]).unwrap()
    }

    #[test]
    fn identity_net_passes_input_through() {
        let net = identity_net(3);
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]]).unwrap();
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn relu_layer_clips_negatives() {
        let mut net = identity_net(2);
        net.layers.push(Layer::Relu);
        let x = Matrix::from_rows(&[[-1.0, 2.0]]).unwrap();
        assert_eq!(net.predict(&x).unwrap().as_slice(), &[0.0, 2.0]);
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let mut rng = SeededRng::new(1, 0);
        let mut layers = vec![Layer::Affine(Affine::new(4, 8, &mut rng))];
        layers.push(DenseNet::residual_block(8, 0.3, &mut rng));
        let net = DenseNet::new(4, layers).unwrap();
        let x = rng.normal_matrix(5, 4);
        let a = net.predict(&x).unwrap();
        let b = net.predict(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_affine_bias_gradient_is_output() {
        let mut rng = SeededRng::new(2, 0);
        let net = DenseNet::new(3, vec![Layer::Affine(Affine::new(3, 2, &mut rng))]).unwrap();
        let x = rng.normal_matrix(1, 3);
        let (y, cache) = net.forward(&x, Mode::Eval, &mut rng).unwrap();
        // L = ½‖y‖² so dL/dy = y
        let (_, grads) = net.backward(&cache, &y).unwrap();
        assert_eq!(grads.0[1], y.row(0).to_vec());
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let mut rng = SeededRng::new(3, 0);
        let net = DenseNet::mlp(&[3, 5, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let x = rng.normal_matrix(4, 3);
        let (_, cache) = net.forward(&x, Mode::Eval, &mut rng).unwrap();
        let (gx, grads) = net.backward(&cache, &Matrix::zeros(4, 2)).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
        assert_eq!(gx.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs())), 0.0);
    }

    #[test]
    fn mismatched_width_is_rejected() {
        let net = identity_net(3);
        assert!(matches!(net.predict(&Matrix::zeros(1, 2)), Err(Error::Shape(_))));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let net = identity_net(2);
        let x = Matrix::from_rows(&[[f64::NAN, 0.0]]).unwrap();
        assert!(matches!(net.predict(&x), Err(Error::NonFinite(_))));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = SeededRng::new(4, 0);
        let a = DenseNet::mlp(&[2, 3], Activation::Identity, Activation::Identity, &mut rng).unwrap();
        let b = DenseNet::mlp(&[2, 4], Activation::Identity, Activation::Identity, &mut rng).unwrap();
        let x = rng.normal_matrix(1, 2);
        let (y, cache) = a.forward(&x, Mode::Eval, &mut rng).unwrap();
        assert!(b.backward(&cache, &y).is_err());
        assert!(a.backward(&cache, &Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn chained_dimensions_are_validated() {
        let mut rng = SeededRng::new(5, 0);
        let layers = vec![
            Layer::Affine(Affine::new(2, 3, &mut rng)),
            Layer::Affine(Affine::new(4, 1, &mut rng)),
        ];
        assert!(DenseNet::new(2, layers).is_err());
    }

    #[test]
    fn dropout_only_active_in_training() {
        let mut rng = SeededRng::new(6, 0);
        let net = DenseNet::new(50, vec![Layer::Dropout { rate: 0.5 }]).unwrap();
        let x = Matrix::filled(1, 50, 1.0);
        let (train, _) = net.forward(&x, Mode::Train, &mut rng).unwrap();
        assert!(train.as_slice().contains(&0.0));
        assert!(train.as_slice().iter().all(|&v| v == 0.0 || v == 2.0));
        assert_eq!(net.predict(&x).unwrap(), x);
    }

    #[test]
    fn init_is_centered_uniform_with_fan_in_scale() {
        let mut rng = SeededRng::new(7, 0);
        let a = Affine::new(16, 200, &mut rng);
        let bound = 0.25;
        assert!(a.weight.as_slice().iter().all(|w| w.abs() <= bound));
        assert!(a.bias.iter().all(|&b| b == 0.0));
        let mean = a.weight.as_slice().iter().sum::<f64>() / 3200.0;
        assert!(mean.abs() < 0.02);
    }
}
