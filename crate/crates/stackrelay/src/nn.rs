//! Minimal fully connected network machinery.
//!
//! Everything the learning agents need and nothing more: forward passes,
//! exact reverse-mode gradients — including gradients with respect to the
//! *inputs*, which the actor update chains through the critic — an RMSProp
//! optimizer, Polyak (soft) target updates, and plain-text checkpoints.
//!
//! All arithmetic is `f64`. Forward and backward operate on row-major
//! batches (`batch x dim`); each row is processed independently, so the
//! single-vector contract is recovered row by row. Parameter gradients are
//! *summed* over the batch — callers scale the output gradient by `1/batch`
//! when optimizing a mean objective.
//!
//! Shape mismatches and stale caches are programming errors and panic;
//! recoverable failures (checkpoint parsing, I/O) return [`crate::Error`].

use std::fmt;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

/// Element-wise nonlinearity applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// `max(0, x)`.
    Relu,
    /// Hyperbolic tangent.
    Tanh,
    /// Logistic sigmoid mapping into `(0, 1)`; action heads scale this unit
    /// box into their physical ranges.
    SigmoidScaled,
    /// Pass-through, used for critic value heads.
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::SigmoidScaled => 1.0 / (1.0 + (-x).exp()),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the *post-activation* value, which is
    /// what the forward cache stores.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::SigmoidScaled => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::SigmoidScaled => "sigmoid_scaled",
            Activation::Identity => "identity",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "sigmoid_scaled" => Some(Activation::SigmoidScaled),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Shape and nonlinearity of one fully connected layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    /// Input width; must equal the previous layer's output width.
    pub in_dim: usize,
    /// Output width.
    pub out_dim: usize,
    /// Nonlinearity applied to the affine output.
    pub activation: Activation,
}

impl LayerSpec {
    /// Convenience constructor.
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self { in_dim, out_dim, activation }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    /// `out_dim x in_dim` weight matrix.
    weight: Array2<f64>,
    /// `out_dim` bias vector.
    bias: Array1<f64>,
    activation: Activation,
}

/// A fully connected network: an alternating chain of affine maps and
/// element-wise nonlinearities.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Per-layer values saved by [`Mlp::forward`] for the matching
/// [`Mlp::backward`] call.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (the previous layer's post-activation output).
    inputs: Vec<Array2<f64>>,
    /// Final network output.
    output: Array2<f64>,
}

/// Gradients of a scalar objective with respect to every parameter, in the
/// same shapes as the network itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// One `out_dim x in_dim` matrix per layer.
    pub weights: Vec<Array2<f64>>,
    /// One `out_dim` vector per layer.
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    /// Multiplies every gradient entry by `factor` in place. `scale(-1.0)`
    /// turns a descent direction into an ascent direction and vice versa.
    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            w.mapv_inplace(|g| g * factor);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|g| g * factor);
        }
    }
}

impl Mlp {
    /// Builds a network from a layer chain, initializing weights and biases
    /// uniformly in `[-1/sqrt(in_dim), +1/sqrt(in_dim)]`.
    pub fn new<R: Rng + ?Sized>(specs: &[LayerSpec], rng: &mut R) -> Self {
        assert!(!specs.is_empty(), "a network needs at least one layer");
        for pair in specs.windows(2) {
            assert_eq!(
                pair[0].out_dim, pair[1].in_dim,
                "layer widths must chain: {} -> {}",
                pair[0].out_dim, pair[1].in_dim
            );
        }
        let layers = specs
            .iter()
            .map(|spec| {
                assert!(spec.in_dim >= 1 && spec.out_dim >= 1, "layer dims must be >= 1");
                let limit = 1.0 / (spec.in_dim as f64).sqrt();
                let weight = Array2::from_shape_fn((spec.out_dim, spec.in_dim), |_| {
                    rng.random_range(-limit..=limit)
                });
                let bias = Array1::from_shape_fn(spec.out_dim, |_| rng.random_range(-limit..=limit));
                Layer { weight, bias, activation: spec.activation }
            })
            .collect();
        Self { layers }
    }

    /// Input width of the network.
    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    /// Output width of the network.
    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.nrows()
    }

    /// Layer chain describing this network.
    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .map(|l| LayerSpec::new(l.weight.ncols(), l.weight.nrows(), l.activation))
            .collect()
    }

    /// Runs the network on a batch (rows are independent samples), returning
    /// the output and the cache needed for [`Mlp::backward`].
    pub fn forward(&self, input: ArrayView2<'_, f64>) -> (Array2<f64>, ForwardCache) {
        assert_eq!(
            input.ncols(),
            self.input_dim(),
            "input width {} does not match network input {}",
            input.ncols(),
            self.input_dim()
        );
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = input.to_owned();
        for layer in &self.layers {
            inputs.push(current.clone());
            let mut z = current.dot(&layer.weight.t());
            z += &layer.bias;
            z.mapv_inplace(|v| layer.activation.apply(v));
            current = z;
        }
        let cache = ForwardCache { inputs, output: current.clone() };
        (current, cache)
    }

    /// Convenience single-sample forward pass without a cache.
    pub fn forward_vec(&self, input: &[f64]) -> Vec<f64> {
        let view = ArrayView2::from_shape((1, input.len()), input).expect("contiguous input");
        let (out, _) = self.forward(view);
        out.row(0).to_vec()
    }

    /// Exact reverse-mode differentiation through the cached forward pass.
    ///
    /// `output_grad` is the gradient of a scalar objective with respect to
    /// each output element (`batch x out_dim`). Returns parameter gradients
    /// summed over the batch and the gradient with respect to the input
    /// batch itself.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<'_, f64>,
    ) -> (Gradients, Array2<f64>) {
        assert_eq!(cache.inputs.len(), self.layers.len(), "cache does not match network depth");
        assert_eq!(
            output_grad.shape(),
            cache.output.shape(),
            "output gradient shape {:?} does not match cached output {:?}",
            output_grad.shape(),
            cache.output.shape()
        );
        let n_layers = self.layers.len();
        let mut weight_grads = vec![Array2::zeros((0, 0)); n_layers];
        let mut bias_grads = vec![Array1::zeros(0); n_layers];

        // Pull the objective gradient through the final nonlinearity.
        let last = &self.layers[n_layers - 1];
        let mut g = output_grad.to_owned();
        g.zip_mut_with(&cache.output, |gi, &a| *gi *= last.activation.derivative_from_output(a));

        let mut input_grad = Array2::zeros((0, 0));
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            let x = &cache.inputs[l];
            assert_eq!(
                x.ncols(),
                layer.weight.ncols(),
                "stale cache: layer {l} input width changed"
            );
            weight_grads[l] = g.t().dot(x);
            bias_grads[l] = g.sum_axis(Axis(0));
            let upstream = g.dot(&layer.weight);
            if l == 0 {
                input_grad = upstream;
            } else {
                let prev_activation = self.layers[l - 1].activation;
                g = upstream;
                g.zip_mut_with(x, |gi, &a| *gi *= prev_activation.derivative_from_output(a));
            }
        }
        (Gradients { weights: weight_grads, biases: bias_grads }, input_grad)
    }
}

/// RMSProp optimizer state for one network.
#[derive(Debug, Clone)]
pub struct RmsProp {
    /// Exponential decay of the squared-gradient accumulator.
    pub decay: f64,
    /// Step size.
    pub learning_rate: f64,
    /// Added under the square root to avoid division by zero.
    pub numeric_floor: f64,
    acc_weights: Vec<Array2<f64>>,
    acc_biases: Vec<Array1<f64>>,
}

impl RmsProp {
    /// Default accumulator decay.
    pub const DEFAULT_DECAY: f64 = 0.99;
    /// Default numeric floor. Small enough that weakly activated paths
    /// (saturated squashing heads, rare relu branches) still receive
    /// full-strength adaptive normalization.
    pub const DEFAULT_FLOOR: f64 = 1e-10;

    /// Zero-initialized optimizer for `net` with default decay and floor.
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        Self::with_options(net, learning_rate, Self::DEFAULT_DECAY, Self::DEFAULT_FLOOR)
    }

    /// Zero-initialized optimizer with explicit decay and floor.
    pub fn with_options(net: &Mlp, learning_rate: f64, decay: f64, numeric_floor: f64) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        assert!((0.0..1.0).contains(&decay), "decay must lie in [0, 1)");
        assert!(numeric_floor > 0.0, "numeric floor must be positive");
        Self {
            decay,
            learning_rate,
            numeric_floor,
            acc_weights: net.layers.iter().map(|l| Array2::zeros(l.weight.dim())).collect(),
            acc_biases: net.layers.iter().map(|l| Array1::zeros(l.bias.dim())).collect(),
        }
    }

    /// One descent step: `acc <- decay*acc + (1-decay)*g^2`, then
    /// `param <- param - lr * g / sqrt(acc + floor)`, elementwise.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        assert_eq!(grads.weights.len(), net.layers.len(), "gradient/network depth mismatch");
        let decay = self.decay;
        let lr = self.learning_rate;
        let floor = self.numeric_floor;
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let gw = &grads.weights[l];
            let gb = &grads.biases[l];
            assert_eq!(gw.dim(), layer.weight.dim(), "weight gradient shape mismatch");
            assert_eq!(gb.dim(), layer.bias.dim(), "bias gradient shape mismatch");
            let acc_w = &mut self.acc_weights[l];
            acc_w.zip_mut_with(gw, |a, &g| *a = decay * *a + (1.0 - decay) * g * g);
            ndarray::Zip::from(&mut layer.weight)
                .and(&*acc_w)
                .and(gw)
                .for_each(|w, &a, &g| *w -= lr * g / (a + floor).sqrt());
            let acc_b = &mut self.acc_biases[l];
            acc_b.zip_mut_with(gb, |a, &g| *a = decay * *a + (1.0 - decay) * g * g);
            ndarray::Zip::from(&mut layer.bias)
                .and(&*acc_b)
                .and(gb)
                .for_each(|b, &a, &g| *b -= lr * g / (a + floor).sqrt());
        }
    }
}

/// Polyak averaging toward the online network:
/// `target <- tau * online + (1 - tau) * target`, elementwise.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) {
    assert!(tau > 0.0 && tau <= 1.0, "tau must lie in (0, 1]");
    assert_eq!(target.layers.len(), online.layers.len(), "network depth mismatch");
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        assert_eq!(t.weight.dim(), o.weight.dim(), "weight shape mismatch");
        t.weight.zip_mut_with(&o.weight, |tv, &ov| *tv = tau * ov + (1.0 - tau) * *tv);
        t.bias.zip_mut_with(&o.bias, |tv, &ov| *tv = tau * ov + (1.0 - tau) * *tv);
    }
}

const CHECKPOINT_MAGIC: &str = "stackrelay-mlp";
const CHECKPOINT_VERSION: &str = "v1";

/// Writes the network to a plain-text checkpoint: a versioned header, the
/// layer chain, then row-major weights and biases with full `f64` round-trip
/// precision.
pub fn save_checkpoint<P: AsRef<Path>>(net: &Mlp, path: P) -> Result<()> {
    let mut text = String::new();
    text.push_str(&format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n"));
    text.push_str(&format!("layers {}\n", net.layers.len()));
    for layer in &net.layers {
        text.push_str(&format!(
            "layer {} {} {}\n",
            layer.weight.ncols(),
            layer.weight.nrows(),
            layer.activation
        ));
        for row in layer.weight.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            text.push_str(&cells.join(" "));
            text.push('\n');
        }
        let cells: Vec<String> = layer.bias.iter().map(|v| format!("{v}")).collect();
        text.push_str(&cells.join(" "));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint<P: AsRef<Path>>(path: P) -> Result<Mlp> {
    let path = path.as_ref();
    let fail = |reason: &str| Error::Checkpoint {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| fail("empty file"))?;
    if header != format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}") {
        return Err(fail(&format!("unsupported header {header:?}")));
    }
    let count_line = lines.next().ok_or_else(|| fail("missing layer count"))?;
    let n_layers: usize = count_line
        .strip_prefix("layers ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| fail("malformed layer count"))?;
    if n_layers == 0 {
        return Err(fail("network must have at least one layer"));
    }
    let parse_floats = |line: &str, expected: usize, what: &str| -> Result<Vec<f64>> {
        let values: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse).collect();
        match values {
            Ok(v) if v.len() == expected => Ok(v),
            Ok(v) => Err(fail(&format!("{what}: expected {expected} values, found {}", v.len()))),
            Err(_) => Err(fail(&format!("{what}: unparsable float"))),
        }
    };
    let mut layers = Vec::with_capacity(n_layers);
    for idx in 0..n_layers {
        let meta = lines.next().ok_or_else(|| fail("missing layer header"))?;
        let fields: Vec<&str> = meta.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "layer" {
            return Err(fail(&format!("malformed layer header {meta:?}")));
        }
        let in_dim: usize = fields[1].parse().map_err(|_| fail("bad input dim"))?;
        let out_dim: usize = fields[2].parse().map_err(|_| fail("bad output dim"))?;
        if in_dim == 0 || out_dim == 0 {
            return Err(fail("layer dims must be positive"));
        }
        let activation = Activation::from_name(fields[3])
            .ok_or_else(|| fail(&format!("unknown activation {:?}", fields[3])))?;
        let mut weight = Array2::zeros((out_dim, in_dim));
        for r in 0..out_dim {
            let line = lines.next().ok_or_else(|| fail("missing weight row"))?;
            let row = parse_floats(line, in_dim, &format!("layer {idx} weight row {r}"))?;
            for (c, v) in row.into_iter().enumerate() {
                weight[(r, c)] = v;
            }
        }
        let line = lines.next().ok_or_else(|| fail("missing bias row"))?;
        let bias = Array1::from_vec(parse_floats(line, out_dim, &format!("layer {idx} bias"))?);
        layers.push(Layer { weight, bias, activation });
    }
    for pair in layers.windows(2) {
        if pair[0].weight.nrows() != pair[1].weight.ncols() {
            return Err(fail("layer widths do not chain"));
        }
    }
    Ok(Mlp { layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_net(activation: Activation, rng: &mut ChaCha8Rng) -> Mlp {
        Mlp::new(
            &[
                LayerSpec::new(3, 5, Activation::Tanh),
                LayerSpec::new(5, 2, activation),
            ],
            rng,
        )
    }

    /// Builds a network whose parameters are all set via a closure.
    fn constant_net(specs: &[LayerSpec], value: f64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::new(specs, &mut rng);
        for layer in &mut net.layers {
            layer.weight.fill(value);
            layer.bias.fill(value);
        }
        net
    }

    #[test]
    fn forward_of_zero_network_is_zero() {
        let net = constant_net(&[LayerSpec::new(4, 3, Activation::Identity)], 0.0);
        let out = net.forward_vec(&[1.0, -2.0, 3.0, 4.0]);
        assert_eq!(out, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn forward_of_scalar_affine_layer() {
        let mut net = constant_net(&[LayerSpec::new(1, 1, Activation::Identity)], 0.0);
        net.layers[0].weight[(0, 0)] = 2.0;
        net.layers[0].bias[0] = 1.0;
        assert_eq!(net.forward_vec(&[3.0]), vec![7.0]);
    }

    #[test]
    fn forward_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = tiny_net(Activation::SigmoidScaled, &mut rng);
        let a = net.forward_vec(&[0.1, 0.2, 0.3]);
        let b = net.forward_vec(&[0.1, 0.2, 0.3]);
        assert_eq!(a, b);
    }

    #[test]
    fn batched_forward_equals_per_row_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = tiny_net(Activation::Identity, &mut rng);
        let batch =
            Array2::from_shape_vec((3, 3), vec![0.5, -0.2, 0.9, 0.0, 0.0, 0.0, -1.0, 2.0, 0.25])
                .unwrap();
        let (out, _) = net.forward(batch.view());
        for (row_in, row_out) in batch.rows().into_iter().zip(out.rows()) {
            let single = net.forward_vec(row_in.as_slice().unwrap());
            for (a, b) in single.iter().zip(row_out.iter()) {
                assert_relative_eq!(a, b, max_relative = 1e-15);
            }
        }
    }

    #[test]
    fn identity_layer_maps_input_grad_through_weight_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[LayerSpec::new(3, 2, Activation::Identity)], &mut rng);
        let x = Array2::from_shape_vec((1, 3), vec![0.3, -0.7, 1.1]).unwrap();
        let (_, cache) = net.forward(x.view());
        let g = Array2::from_shape_vec((1, 2), vec![0.5, -1.5]).unwrap();
        let (_, input_grad) = net.backward(&cache, g.view());
        let expected = g.dot(&net.layers[0].weight);
        for (a, b) in input_grad.iter().zip(expected.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-14);
        }
    }

    #[test]
    fn zero_output_gradient_yields_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = tiny_net(Activation::Tanh, &mut rng);
        let x = Array2::from_shape_vec((2, 3), vec![0.1; 6]).unwrap();
        let (_, cache) = net.forward(x.view());
        let g = Array2::zeros((2, 2));
        let (grads, input_grad) = net.backward(&cache, g.view());
        assert!(grads.weights.iter().all(|w| w.iter().all(|&v| v == 0.0)));
        assert!(grads.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
        assert!(input_grad.iter().all(|&v| v == 0.0));
    }

    /// Central finite differences of a random linear objective with respect
    /// to every parameter and input. `floor` guards the relative error where
    /// both derivatives vanish; genuine errors surface long before it.
    fn finite_difference_check(net: &Mlp, batch: usize, rng: &mut ChaCha8Rng) -> f64 {
        const H: f64 = 1e-5;
        const FLOOR: f64 = 1e-3;
        let in_dim = net.input_dim();
        let out_dim = net.output_dim();
        // Keep every relu pre-activation away from its kink so the finite
        // difference sees a locally smooth function.
        let x = loop {
            let candidate = Array2::from_shape_fn((batch, in_dim), |_| rng.random_range(-1.0..1.0));
            let mut clear = true;
            let mut current = candidate.clone();
            for layer in &net.layers {
                let mut z = current.dot(&layer.weight.t());
                z += &layer.bias;
                if layer.activation == Activation::Relu
                    && z.iter().any(|v| v.abs() < 1e-3)
                {
                    clear = false;
                    break;
                }
                z.mapv_inplace(|v| layer.activation.apply(v));
                current = z;
            }
            if clear {
                break candidate;
            }
        };
        let weights = Array2::from_shape_fn((batch, out_dim), |_| rng.random_range(-1.0..1.0));
        let objective = |net: &Mlp, x: &Array2<f64>| -> f64 {
            let (out, _) = net.forward(x.view());
            (&out * &weights).sum()
        };
        let (_, cache) = net.forward(x.view());
        let (grads, input_grad) = net.backward(&cache, weights.view());

        let mut worst: f64 = 0.0;
        let mut check = |analytic: f64, plus: f64, minus: f64| {
            let numeric = (plus - minus) / (2.0 * H);
            let denom = analytic.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max((analytic - numeric).abs() / denom);
        };
        let mut perturbed = net.clone();
        for l in 0..net.layers.len() {
            for idx in 0..net.layers[l].weight.len() {
                let (r, c) = (idx / net.layers[l].weight.ncols(), idx % net.layers[l].weight.ncols());
                let orig = perturbed.layers[l].weight[(r, c)];
                perturbed.layers[l].weight[(r, c)] = orig + H;
                let plus = objective(&perturbed, &x);
                perturbed.layers[l].weight[(r, c)] = orig - H;
                let minus = objective(&perturbed, &x);
                perturbed.layers[l].weight[(r, c)] = orig;
                check(grads.weights[l][(r, c)], plus, minus);
            }
            for j in 0..net.layers[l].bias.len() {
                let orig = perturbed.layers[l].bias[j];
                perturbed.layers[l].bias[j] = orig + H;
                let plus = objective(&perturbed, &x);
                perturbed.layers[l].bias[j] = orig - H;
                let minus = objective(&perturbed, &x);
                perturbed.layers[l].bias[j] = orig;
                check(grads.biases[l][j], plus, minus);
            }
        }
        let mut x_pert = x.clone();
        for idx in 0..x.len() {
            let (r, c) = (idx / in_dim, idx % in_dim);
            let orig = x_pert[(r, c)];
            x_pert[(r, c)] = orig + H;
            let plus = objective(net, &x_pert);
            x_pert[(r, c)] = orig - H;
            let minus = objective(net, &x_pert);
            x_pert[(r, c)] = orig;
            check(input_grad[(r, c)], plus, minus);
        }
        worst
    }

    #[test]
    fn backward_matches_finite_differences_across_depths_and_activations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2025);
        let activations = [
            Activation::Relu,
            Activation::Tanh,
            Activation::SigmoidScaled,
            Activation::Identity,
        ];
        let mut cases = 0;
        for depth in 1..=3 {
            for &hidden_act in &activations {
                for &head_act in &activations {
                    let mut specs = Vec::new();
                    let mut width = 4;
                    for d in 0..depth {
                        let next = if d + 1 == depth { 2 } else { 3 + d };
                        let act = if d + 1 == depth { head_act } else { hidden_act };
                        specs.push(LayerSpec::new(width, next, act));
                        width = next;
                    }
                    let net = Mlp::new(&specs, &mut rng);
                    let batch = 1 + (cases % 3);
                    let worst = finite_difference_check(&net, batch, &mut rng);
                    assert!(
                        worst <= 1e-4,
                        "finite-difference mismatch {worst} for depth {depth}, hidden {hidden_act}, head {head_act}"
                    );
                    cases += 1;
                }
            }
        }
        assert!(cases >= 48);
    }

    #[test]
    fn rmsprop_leaves_parameters_alone_for_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut net = tiny_net(Activation::Identity, &mut rng);
        let before = net.clone();
        let grads = Gradients {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weight.dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.dim())).collect(),
        };
        let mut opt = RmsProp::new(&net, 0.01);
        opt.step(&mut net, &grads);
        assert_eq!(net, before);
    }

    #[test]
    fn rmsprop_step_magnitude_approaches_learning_rate() {
        // With a constant gradient the accumulator converges to g^2, so the
        // per-step move approaches lr * g / |g| = lr.
        let mut net = constant_net(&[LayerSpec::new(1, 1, Activation::Identity)], 0.0);
        let mut opt = RmsProp::new(&net, 0.01);
        let grads = Gradients {
            weights: vec![Array2::from_elem((1, 1), 3.0)],
            biases: vec![Array1::from_elem(1, 3.0)],
        };
        let mut prev = net.layers[0].weight[(0, 0)];
        for _ in 0..2000 {
            opt.step(&mut net, &grads);
            prev = net.layers[0].weight[(0, 0)];
        }
        let before = prev;
        opt.step(&mut net, &grads);
        let step = before - net.layers[0].weight[(0, 0)];
        assert_relative_eq!(step, 0.01, max_relative = 1e-6);
    }

    #[test]
    fn rmsprop_descends_a_quadratic_bowl() {
        // f(x) = x^2 from x = 1 with lr 0.01: well under 0.1 after 500 steps.
        let mut net = constant_net(&[LayerSpec::new(1, 1, Activation::Identity)], 0.0);
        net.layers[0].weight[(0, 0)] = 1.0;
        let mut opt = RmsProp::new(&net, 0.01);
        for _ in 0..500 {
            let x = net.layers[0].weight[(0, 0)];
            let grads = Gradients {
                weights: vec![Array2::from_elem((1, 1), 2.0 * x)],
                biases: vec![Array1::zeros(1)],
            };
            opt.step(&mut net, &grads);
        }
        assert!(net.layers[0].weight[(0, 0)].abs() < 0.1);
    }

    #[test]
    fn soft_update_blends_and_contracts() {
        let specs = [LayerSpec::new(2, 2, Activation::Identity)];
        let online = constant_net(&specs, 1.0);
        let mut target = constant_net(&specs, 0.0);

        let mut copied = target.clone();
        soft_update(&mut copied, &online, 1.0);
        assert_eq!(copied, online);

        soft_update(&mut target, &online, 0.001);
        assert_relative_eq!(target.layers[0].weight[(0, 0)], 0.001, max_relative = 1e-12);

        // Geometric convergence of the gap.
        let mut target = constant_net(&specs, 0.0);
        let tau = 0.05;
        let mut gap_prev = 1.0;
        for n in 1..=100 {
            soft_update(&mut target, &online, tau);
            let gap = 1.0 - target.layers[0].weight[(0, 0)];
            assert!(gap < gap_prev, "gap must strictly decrease");
            assert_relative_eq!(gap, (1.0 - tau).powi(n), max_relative = 1e-9);
            gap_prev = gap;
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = Mlp::new(
            &[
                LayerSpec::new(8, 64, Activation::Relu),
                LayerSpec::new(64, 64, Activation::Relu),
                LayerSpec::new(64, 5, Activation::SigmoidScaled),
            ],
            &mut rng,
        );
        let dir = std::env::temp_dir().join("stackrelay-nn-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.ckpt");
        save_checkpoint(&net, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(net, loaded);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn malformed_checkpoints_are_rejected() {
        let dir = std::env::temp_dir().join("stackrelay-nn-test");
        std::fs::create_dir_all(&dir).unwrap();
        for (name, body) in [
            ("empty.ckpt", String::new()),
            ("header.ckpt", "other-format v9\nlayers 1\n".to_string()),
            (
                "truncated.ckpt",
                format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\nlayers 1\nlayer 2 1 identity\n0.5 0.5\n"),
            ),
            (
                "badfloat.ckpt",
                format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\nlayers 1\nlayer 1 1 identity\nnope\n0\n"),
            ),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, body).unwrap();
            assert!(
                matches!(load_checkpoint(&path), Err(Error::Checkpoint { .. })),
                "{name} should fail to load"
            );
            std::fs::remove_file(&path).ok();
        }
    }
}
