//! Dense feedforward classifier with hand-written backpropagation.
//!
//! The network is a chain `x → hidden… → F(x) → l(x)`. The layer that emits
//! `F` is the *feature layer*; the last layer maps `F` to logits and is the
//! only layer whose bias is constrained (the entropic and objectosphere
//! losses need `l = W·F`, so that `F = 0` forces all logits to zero).

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numeric::{matvec, matvec_transposed, outer, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative evaluated at a pre-activation; the ReLU kink counts as 0.
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            _ => Err(Error::config(format!("unknown activation `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    /// Dimension of the deep feature `F`.
    pub feature_dim: usize,
    pub num_logits: usize,
    /// Off by default: a bias-free ReLU stack is positively homogeneous,
    /// `F(αx) = αF(x)` for `α > 0`, so magnitudes learned on background
    /// samples carry along rays away from the origin.
    pub hidden_bias: bool,
    pub logit_bias: bool,
    /// Applied after every hidden layer.
    pub activation: Activation,
    /// Applied to the feature layer output.
    pub feature_activation: Activation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_dim: 2,
            hidden_dims: vec![64, 64],
            feature_dim: 2,
            num_logits: 4,
            hidden_bias: false,
            logit_bias: false,
            activation: Activation::Relu,
            feature_activation: Activation::Identity,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.feature_dim == 0 || self.num_logits == 0 {
            return Err(Error::config("network dimensions must be at least 1"));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::config("hidden layer widths must be at least 1"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out, has_bias, activation)` for every layer in order.
    fn layer_specs(&self) -> Vec<(usize, usize, bool, Activation)> {
        let mut specs = Vec::with_capacity(self.hidden_dims.len() + 2);
        let mut fan_in = self.input_dim;
        for &h in &self.hidden_dims {
            specs.push((fan_in, h, self.hidden_bias, self.activation));
            fan_in = h;
        }
        specs.push((fan_in, self.feature_dim, self.hidden_bias, self.feature_activation));
        specs.push((self.feature_dim, self.num_logits, self.logit_bias, Activation::Identity));
        specs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Option<Vec<f64>>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    seed: u64,
    layers: Vec<Layer>,
}

/// Cached intermediate values from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    /// Per layer, before the activation.
    pub pre_activations: Vec<Vec<f64>>,
    /// Per layer, after the activation. The last two entries are `F` and `l`.
    pub activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn feature(&self) -> &[f64] {
        &self.activations[self.activations.len() - 2]
    }

    pub fn logits(&self) -> &[f64] {
        &self.activations[self.activations.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Matrix,
    pub bias: Option<Vec<f64>>,
}

/// Gradients for every parameter of a [`Network`], in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGradient>,
}

impl GradientSet {
    pub fn zeros_like(net: &Network) -> Self {
        GradientSet {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: l.bias.as_ref().map(|b| vec![0.0; b.len()]),
                })
                .collect(),
        }
    }

    fn check_shape(&self, other: &GradientSet) -> Result<()> {
        let same = self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weights.shape() == b.weights.shape()
                    && a.bias.as_ref().map(Vec::len) == b.bias.as_ref().map(Vec::len)
            });
        if same {
            Ok(())
        } else {
            Err(Error::invalid("gradient shapes disagree"))
        }
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &GradientSet, scale: f64) -> Result<()> {
        self.check_shape(other)?;
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.as_mut_slice().iter_mut().zip(b.weights.as_slice()) {
                *x += scale * y;
            }
            if let (Some(ab), Some(bb)) = (a.bias.as_mut(), b.bias.as_ref()) {
                for (x, y) in ab.iter_mut().zip(bb) {
                    *x += scale * y;
                }
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.as_mut_slice().iter_mut().for_each(|x| *x *= s);
            if let Some(b) = l.bias.as_mut() {
                b.iter_mut().for_each(|x| *x *= s);
            }
        }
    }

    /// All entries flattened in the same order as [`Network::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            if let Some(b) = &l.bias {
                out.extend_from_slice(b);
            }
        }
        out
    }
}

/// Velocity buffer for classical momentum SGD.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    velocity: GradientSet,
}

impl MomentumState {
    pub fn new(net: &Network) -> Self {
        MomentumState {
            velocity: GradientSet::zeros_like(net),
        }
    }
}

impl Network {
    /// Uniform `[-1/√fan_in, 1/√fan_in]` weights and zero biases, drawn from a
    /// ChaCha8 stream seeded with `seed`.
    pub fn init(config: &NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = config
            .layer_specs()
            .into_iter()
            .map(|(fan_in, fan_out, has_bias, activation)| {
                let bound = 1.0 / (fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                Layer {
                    weights: Matrix::from_vec(fan_out, fan_in, data).expect("shape"),
                    bias: has_bias.then(|| vec![0.0; fan_out]),
                    activation,
                }
            })
            .collect();
        Ok(Network {
            config: config.clone(),
            seed,
            layers,
        })
    }

    /// Assembles a network from explicit layers, checking that shapes chain
    /// and agree with `config`.
    pub fn from_layers(config: NetworkConfig, seed: u64, layers: Vec<Layer>) -> Result<Self> {
        config.validate()?;
        let specs = config.layer_specs();
        if specs.len() != layers.len() {
            return Err(Error::invalid(format!(
                "config implies {} layers, got {}",
                specs.len(),
                layers.len()
            )));
        }
        for (i, ((fan_in, fan_out, has_bias, act), layer)) in specs.iter().zip(&layers).enumerate() {
            if layer.weights.shape() != (*fan_out, *fan_in) {
                return Err(Error::invalid(format!(
                    "layer {i}: expected {fan_out}x{fan_in} weights, got {:?}",
                    layer.weights.shape()
                )));
            }
            if layer.bias.as_ref().map(Vec::len) != has_bias.then_some(*fan_out) {
                return Err(Error::invalid(format!("layer {i}: bias does not match config")));
            }
            if layer.activation != *act {
                return Err(Error::invalid(format!("layer {i}: activation does not match config")));
            }
        }
        Ok(Network {
            config,
            seed,
            layers,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn logit_weights(&self) -> &Matrix {
        &self.layers[self.layers.len() - 1].weights
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        if x.len() != self.config.input_dim {
            return Err(Error::invalid(format!(
                "input has {} entries, network expects {}",
                x.len(),
                self.config.input_dim
            )));
        }
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = activations.last().map_or(x, Vec::as_slice);
            let mut z = matvec(&layer.weights, input)?;
            if let Some(b) = &layer.bias {
                z.iter_mut().zip(b).for_each(|(zi, bi)| *zi += bi);
            }
            activations.push(z.iter().map(|&v| layer.activation.apply(v)).collect());
            pre_activations.push(z);
        }
        Ok(ForwardTrace {
            input: x.to_vec(),
            pre_activations,
            activations,
        })
    }

    /// Backpropagates `dJ/dl` and a direct `dJ/dF` term through the network.
    /// The feature receives `Wᵀ·grad_logits + grad_feature_direct`.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        grad_logits: &[f64],
        grad_feature_direct: &[f64],
    ) -> Result<GradientSet> {
        if grad_logits.len() != self.config.num_logits {
            return Err(Error::invalid("grad_logits length does not match logits"));
        }
        if grad_feature_direct.len() != self.config.feature_dim {
            return Err(Error::invalid("grad_feature_direct length does not match feature"));
        }
        if trace.activations.len() != self.layers.len() {
            return Err(Error::invalid("trace does not belong to this network"));
        }
        let n = self.layers.len();
        let mut grads: Vec<LayerGradient> = Vec::with_capacity(n);
        // gradient w.r.t. the current layer's output
        let mut upstream = grad_logits.to_vec();
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            if i == n - 2 {
                upstream
                    .iter_mut()
                    .zip(grad_feature_direct)
                    .for_each(|(u, g)| *u += g);
            }
            let delta: Vec<f64> = upstream
                .iter()
                .zip(&trace.pre_activations[i])
                .map(|(&u, &z)| u * layer.activation.derivative(z))
                .collect();
            let input = if i == 0 {
                &trace.input
            } else {
                &trace.activations[i - 1]
            };
            grads.push(LayerGradient {
                weights: outer(&delta, input),
                bias: layer.bias.as_ref().map(|_| delta.clone()),
            });
            if i > 0 {
                upstream = matvec_transposed(&layer.weights, &delta)?;
            }
        }
        grads.reverse();
        Ok(GradientSet { layers: grads })
    }

    /// Momentum step: `v ← momentum·v + g`, `w ← w − lr·v`.
    pub fn apply_gradients(
        &mut self,
        grads: &GradientSet,
        lr: f64,
        state: &mut MomentumState,
        momentum: f64,
    ) -> Result<()> {
        let zero = GradientSet::zeros_like(self);
        zero.check_shape(grads)?;
        zero.check_shape(&state.velocity)?;
        state.velocity.scale(momentum);
        state.velocity.add_scaled(grads, 1.0)?;
        for (layer, v) in self.layers.iter_mut().zip(&state.velocity.layers) {
            for (w, dv) in layer.weights.as_mut_slice().iter_mut().zip(v.weights.as_slice()) {
                *w -= lr * dv;
            }
            if let (Some(b), Some(vb)) = (layer.bias.as_mut(), v.bias.as_ref()) {
                for (w, dv) in b.iter_mut().zip(vb) {
                    *w -= lr * dv;
                }
            }
        }
        Ok(())
    }

    /// Flat copy of every parameter (weights then bias, per layer).
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            if let Some(b) = &l.bias {
                out.extend_from_slice(b);
            }
        }
        out
    }

    /// Inverse of [`Network::parameters`].
    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameters().len() {
            return Err(Error::invalid("parameter count mismatch"));
        }
        let mut it = params.iter();
        for l in &mut self.layers {
            for w in l.weights.as_mut_slice() {
                *w = *it.next().unwrap();
            }
            if let Some(b) = l.bias.as_mut() {
                for w in b {
                    *w = *it.next().unwrap();
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "{MODEL_MAGIC} {MODEL_VERSION}");
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "input_dim = {}", c.input_dim);
        let dims: Vec<String> = c.hidden_dims.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "hidden_dims = {}", dims.join(","));
        let _ = writeln!(s, "feature_dim = {}", c.feature_dim);
        let _ = writeln!(s, "num_logits = {}", c.num_logits);
        let _ = writeln!(s, "hidden_bias = {}", c.hidden_bias);
        let _ = writeln!(s, "logit_bias = {}", c.logit_bias);
        let _ = writeln!(s, "activation = {}", c.activation.name());
        let _ = writeln!(s, "feature_activation = {}", c.feature_activation.name());
        for (i, l) in self.layers.iter().enumerate() {
            let _ = writeln!(s, "layer {i} weights {} {}", l.weights.rows(), l.weights.cols());
            let _ = writeln!(s, "{}", join(l.weights.as_slice()));
            if let Some(b) = &l.bias {
                let _ = writeln!(s, "layer {i} bias {}", b.len());
                let _ = writeln!(s, "{}", join(b));
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let (n, header) = lines.next().ok_or_else(|| Error::parse(1, "empty model file"))?;
        if header != format!("{MODEL_MAGIC} {MODEL_VERSION}") {
            return Err(Error::parse(n, format!("unsupported model header `{header}`")));
        }

        let mut kv = |key: &str| -> Result<(usize, String)> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::parse(0, format!("missing `{key}`")))?;
            match line.split_once('=') {
                Some((k, v)) if k.trim() == key => Ok((n, v.trim().to_string())),
                _ => Err(Error::parse(n, format!("expected `{key} = …`"))),
            }
        };
        fn num<T: std::str::FromStr>(n: usize, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::parse(n, format!("bad value `{v}`")))
        }

        let (ln, v) = kv("seed")?;
        let seed: u64 = num(ln, &v)?;
        let (ln, v) = kv("input_dim")?;
        let input_dim = num(ln, &v)?;
        let (ln, v) = kv("hidden_dims")?;
        let hidden_dims = if v.is_empty() {
            Vec::new()
        } else {
            v.split(',').map(|d| num(ln, d.trim())).collect::<Result<_>>()?
        };
        let (ln, v) = kv("feature_dim")?;
        let feature_dim = num(ln, &v)?;
        let (ln, v) = kv("num_logits")?;
        let num_logits = num(ln, &v)?;
        let (ln, v) = kv("hidden_bias")?;
        let hidden_bias = num(ln, &v)?;
        let (ln, v) = kv("logit_bias")?;
        let logit_bias = num(ln, &v)?;
        let (_, v) = kv("activation")?;
        let activation = Activation::parse(&v)?;
        let (_, v) = kv("feature_activation")?;
        let feature_activation = Activation::parse(&v)?;
        let config = NetworkConfig {
            input_dim,
            hidden_dims,
            feature_dim,
            num_logits,
            hidden_bias,
            logit_bias,
            activation,
            feature_activation,
        };
        config.validate()?;

        let rest: Vec<(usize, &str)> = lines.filter(|(_, l)| !l.is_empty()).collect();
        let mut layers = Vec::new();
        let mut idx = 0;
        for (i, (_, _, has_bias, act)) in config.layer_specs().into_iter().enumerate() {
            let read_values = |idx: &mut usize, what: &str| -> Result<(usize, Vec<usize>, Vec<f64>)> {
                let (n, head) = *rest
                    .get(*idx)
                    .ok_or_else(|| Error::parse(0, format!("missing layer {i} {what}")))?;
                let toks: Vec<&str> = head.split_whitespace().collect();
                if toks.len() < 3 || toks[0] != "layer" || toks[1] != i.to_string() || toks[2] != what {
                    return Err(Error::parse(n, format!("expected `layer {i} {what} …`")));
                }
                let dims = toks[3..].iter().map(|t| num(n, t)).collect::<Result<Vec<usize>>>()?;
                let (vn, body) = *rest
                    .get(*idx + 1)
                    .ok_or_else(|| Error::parse(n + 1, "missing values"))?;
                let vals = body
                    .split_whitespace()
                    .map(|t| num(vn, t))
                    .collect::<Result<Vec<f64>>>()?;
                if vals.iter().any(|x| !x.is_finite()) {
                    return Err(Error::parse(vn, "non-finite parameter"));
                }
                *idx += 2;
                Ok((vn, dims, vals))
            };
            let (vn, dims, vals) = read_values(&mut idx, "weights")?;
            if dims.len() != 2 {
                return Err(Error::parse(vn - 1, "weights header needs rows and cols"));
            }
            let weights =
                Matrix::from_vec(dims[0], dims[1], vals).map_err(|e| Error::parse(vn, e.to_string()))?;
            let bias = if has_bias {
                let (vn, dims, vals) = read_values(&mut idx, "bias")?;
                if dims != [vals.len()] {
                    return Err(Error::parse(vn, "bias length mismatch"));
                }
                Some(vals)
            } else {
                None
            };
            layers.push(Layer {
                weights,
                bias,
                activation: act,
            });
        }
        if let Some((n, _)) = rest.get(idx) {
            return Err(Error::parse(*n, "trailing content after last layer"));
        }
        Network::from_layers(config, seed, layers)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Network::from_text(&std::fs::read_to_string(path)?)
    }
}

const MODEL_MAGIC: &str = "agnosto-model";
const MODEL_VERSION: u32 = 1;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::softmax;

    fn small_config() -> NetworkConfig {
        NetworkConfig {
            input_dim: 3,
            hidden_dims: vec![5],
            feature_dim: 2,
            num_logits: 10,
            hidden_bias: true,
            ..NetworkConfig::default()
        }
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let cfg = small_config();
        let a = Network::init(&cfg, 7).unwrap();
        let b = Network::init(&cfg, 7).unwrap();
        let c = Network::init(&cfg, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.parameters(), c.parameters());
        assert_eq!(a.logit_weights().shape(), (10, 2));
        assert!(a.layers().last().unwrap().bias.is_none());
        let bound = 1.0 / 3f64.sqrt();
        assert!(a.layers()[0].weights.as_slice().iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = small_config();
        cfg.feature_dim = 0;
        assert!(matches!(Network::init(&cfg, 1), Err(Error::Config(_))));
        cfg.feature_dim = 2;
        cfg.hidden_dims = vec![4, 0];
        assert!(Network::init(&cfg, 1).is_err());
    }

    #[test]
    fn zero_weights_give_zero_feature_and_uniform_softmax() {
        let mut net = Network::init(&small_config(), 3).unwrap();
        let n = net.parameters().len();
        net.set_parameters(&vec![0.0; n]).unwrap();
        let t = net.forward(&[1.0, -2.0, 0.5]).unwrap();
        assert!(t.feature().iter().all(|&f| f == 0.0));
        assert!(t.logits().iter().all(|&l| l == 0.0));
        assert!(softmax(t.logits()).unwrap().iter().all(|&p| p == 0.1));
    }

    #[test]
    fn bias_free_logits_vanish_when_feature_is_zero() {
        // random weights everywhere, feature layer forced to output 0
        let mut net = Network::init(&small_config(), 11).unwrap();
        let feat = net.layers().len() - 2;
        let layer = &mut net.layers_mut()[feat];
        layer.weights.as_mut_slice().iter_mut().for_each(|w| *w = 0.0);
        if let Some(b) = layer.bias.as_mut() {
            b.iter_mut().for_each(|b| *b = 0.0);
        }
        let t = net.forward(&[0.3, 0.1, -0.9]).unwrap();
        assert_eq!(t.logits(), &[0.0; 10]);
    }

    #[test]
    fn identity_network_projects_input() {
        let cfg = NetworkConfig {
            input_dim: 2,
            hidden_dims: vec![],
            feature_dim: 2,
            num_logits: 2,
            hidden_bias: false,
            ..NetworkConfig::default()
        };
        let layers = vec![
            Layer {
                weights: Matrix::identity(2),
                bias: None,
                activation: Activation::Identity,
            },
            Layer {
                weights: Matrix::identity(2),
                bias: None,
                activation: Activation::Identity,
            },
        ];
        let net = Network::from_layers(cfg, 0, layers).unwrap();
        let t = net.forward(&[0.25, -4.0]).unwrap();
        assert_eq!(t.logits(), &[0.25, -4.0]);
        assert!(net.forward(&[1.0]).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let net = Network::init(&small_config(), 5).unwrap();
        let x = [0.2, 0.4, -1.0];
        assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn backward_base_cases() {
        let net = Network::init(&small_config(), 5).unwrap();
        let t = net.forward(&[0.2, 0.4, -1.0]).unwrap();
        let g = net.backward(&t, &[0.0; 10], &[0.0; 2]).unwrap();
        assert!(g.flatten().iter().all(|&x| x == 0.0));
        assert!(net.backward(&t, &[0.0; 3], &[0.0; 2]).is_err());
        assert!(net.backward(&t, &[0.0; 10], &[0.0; 3]).is_err());

        // last layer gradient is outer(grad_logits, F)
        let gl: Vec<f64> = (0..10).map(|i| i as f64 * 0.1 - 0.45).collect();
        let g = net.backward(&t, &gl, &[0.0; 2]).unwrap();
        assert_eq!(g.layers.last().unwrap().weights, outer(&gl, t.feature()));
    }

    #[test]
    fn momentum_updates() {
        let cfg = small_config();
        let mut net = Network::init(&cfg, 1).unwrap();
        let before = net.parameters();
        let mut ones = GradientSet::zeros_like(&net);
        for l in &mut ones.layers {
            l.weights.as_mut_slice().iter_mut().for_each(|x| *x = 1.0);
            if let Some(b) = l.bias.as_mut() {
                b.iter_mut().for_each(|x| *x = 1.0);
            }
        }
        let mut state = MomentumState::new(&net);
        net.apply_gradients(&ones, 1.0, &mut state, 0.0).unwrap();
        for (a, b) in before.iter().zip(net.parameters()) {
            assert_eq!(b, a - 1.0);
        }

        let mut frozen = Network::init(&cfg, 1).unwrap();
        let mut state = MomentumState::new(&frozen);
        frozen.apply_gradients(&ones, 0.0, &mut state, 0.9).unwrap();
        assert_eq!(frozen.parameters(), before);

        let mut net = Network::init(&cfg, 1).unwrap();
        let mut state = MomentumState::new(&net);
        let lr = 0.01;
        net.apply_gradients(&ones, lr, &mut state, 0.9).unwrap();
        let mid = net.parameters();
        net.apply_gradients(&ones, lr, &mut state, 0.9).unwrap();
        for (a, b) in mid.iter().zip(net.parameters()) {
            assert!(((a - b) - 1.9 * lr).abs() < 1e-12);
        }

        let other = Network::init(&NetworkConfig { feature_dim: 3, ..cfg }, 1).unwrap();
        let bad = GradientSet::zeros_like(&other);
        assert!(net.apply_gradients(&bad, lr, &mut state, 0.9).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let net = Network::init(&small_config(), 99).unwrap();
        let back = Network::from_text(&net.to_text()).unwrap();
        assert_eq!(back, net);
        let x = [0.7, -0.3, 0.11];
        assert_eq!(back.forward(&x).unwrap(), net.forward(&x).unwrap());

        let no_hidden = Network::init(
            &NetworkConfig {
                hidden_dims: vec![],
                logit_bias: true,
                ..small_config()
            },
            4,
        )
        .unwrap();
        assert_eq!(Network::from_text(&no_hidden.to_text()).unwrap(), no_hidden);
    }

    #[test]
    fn corrupt_model_text_is_rejected() {
        let text = Network::init(&small_config(), 2).unwrap().to_text();
        assert!(Network::from_text(&text.replace("agnosto-model 1", "agnosto-model 9")).is_err());
        let truncated: String = text.lines().take(14).collect::<Vec<_>>().join("\n");
        assert!(Network::from_text(&truncated).is_err());
        assert!(Network::from_text(&format!("{text}layer 9 weights 1 1\n0\n")).is_err());
    }
}
