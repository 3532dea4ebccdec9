//! Dense feed-forward networks with analytic backpropagation.
//!
//! Everything is `f64` and state-explicit: a [`Network`] is a plain value,
//! gradients come back as a [`GradientBundle`], and optimizers own their
//! accumulators.

mod checkpoint;
mod gradcheck;
mod loss;
mod optim;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{NetworkCheckpoint, CHECKPOINT_VERSION};
pub use gradcheck::{
    finite_diff_check, max_relative_error, numeric_gradient, Parametric, FD_STEP,
};
pub use loss::{mean_squared_error, softmax, softmax_cross_entropy, squared_error, LossKind};
pub use optim::{Optimizer, OptimizerConfig, OptimizerState, RmsProp, Sgd};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

/// Fully connected layer. `weights` is row-major, `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    /// Uniform initialisation in `±1/√fan_in`; biases likewise.
    pub fn new<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        let bias = (0..outputs).map(|_| rng.gen_range(-bound..=bound)).collect();
        Self {
            inputs,
            outputs,
            weights,
            bias,
            activation,
        }
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let z = self.bias[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
            out.push(self.activation.apply(z));
        }
    }

    fn check(&self) -> Result<()> {
        if self.weights.len() != self.inputs * self.outputs {
            return Err(Error::Dimension {
                expected: self.inputs * self.outputs,
                got: self.weights.len(),
            });
        }
        if self.bias.len() != self.outputs {
            return Err(Error::Dimension {
                expected: self.outputs,
                got: self.bias.len(),
            });
        }
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite parameter".into()));
        }
        Ok(())
    }
}

/// Gradient of one [`Dense`] layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Per-parameter gradients laid out like the owning [`Network`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBundle {
    pub layers: Vec<LayerGrad>,
}

impl GradientBundle {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.values_mut().for_each(|g| *g *= c);
    }

    pub fn add(&mut self, other: &GradientBundle) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn flat(&self) -> Vec<f64> {
        self.values().collect()
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|g| g == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }
}

/// Activations recorded by a forward pass: `[input, layer1 out, ..., output]`.
#[derive(Debug, Clone)]
pub struct Trace {
    pub activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace holds the input")
    }
}

/// Stack of dense layers. An empty stack is the identity on `input_dim` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    input_dim: usize,
    layers: Vec<Dense>,
}

impl Network {
    /// Randomly initialised network; `sizes` has one more entry than `activations`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activations: &[Activation], rng: &mut R) -> Self {
        assert_eq!(sizes.len(), activations.len() + 1, "one activation per layer");
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| Dense::new(w[0], w[1], act, rng))
            .collect();
        Self {
            input_dim: sizes[0],
            layers,
        }
    }

    /// Single hidden layer MLP: `input → hidden (ReLU) → output (head)`.
    pub fn mlp<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        output: usize,
        head: Activation,
        rng: &mut R,
    ) -> Self {
        Self::new(&[input, hidden, output], &[Activation::Relu, head], rng)
    }

    pub fn from_layers(input_dim: usize, layers: Vec<Dense>) -> Result<Self> {
        let mut dim = input_dim;
        for l in &layers {
            if l.inputs != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: l.inputs,
                });
            }
            l.check()?;
            dim = l.outputs;
        }
        Ok(Self { input_dim, layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Architecture string such as `41-relu80-linear11`.
    pub fn fingerprint(&self) -> String {
        let mut s = self.input_dim.to_string();
        for l in &self.layers {
            s.push('-');
            s.push_str(l.activation.tag());
            s.push_str(&l.outputs.to_string());
        }
        s
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in &self.layers {
            l.forward_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        for l in &self.layers {
            let mut out = Vec::with_capacity(l.outputs);
            l.forward_into(activations.last().expect("nonempty"), &mut out);
            activations.push(out);
        }
        Ok(Trace { activations })
    }

    /// Accumulate `∂loss/∂θ` into `grads` given `∂loss/∂output`; returns `∂loss/∂input`.
    pub fn backward_into(
        &self,
        trace: &Trace,
        grad_output: &[f64],
        grads: &mut GradientBundle,
    ) -> Result<Vec<f64>> {
        if grad_output.len() != self.output_dim() {
            return Err(Error::Dimension {
                expected: self.output_dim(),
                got: grad_output.len(),
            });
        }
        let mut upstream = grad_output.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let x = &trace.activations[i];
            let y = &trace.activations[i + 1];
            let delta: Vec<f64> = upstream
                .iter()
                .zip(y)
                .map(|(g, &y)| g * l.activation.derivative_from_output(y))
                .collect();
            let g = &mut grads.layers[i];
            let mut down = vec![0.0; l.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                let grow = &mut g.weights[o * l.inputs..(o + 1) * l.inputs];
                for k in 0..l.inputs {
                    grow[k] += d * x[k];
                    down[k] += d * row[k];
                }
            }
            upstream = down;
        }
        Ok(upstream)
    }

    /// Gradient of a loss whose derivative at the output is `grad_output`, for input `x`.
    pub fn backward(&self, x: &[f64], grad_output: &[f64]) -> Result<GradientBundle> {
        let trace = self.forward_trace(x)?;
        let mut grads = GradientBundle::zeros_like(self);
        self.backward_into(&trace, grad_output, &mut grads)?;
        Ok(grads)
    }

    /// Overwrite all parameters with those of `other`, which must share the architecture.
    pub fn copy_params_from(&mut self, other: &Network) -> Result<()> {
        if self.fingerprint() != other.fingerprint() {
            return Err(Error::Usage(format!(
                "cannot copy {} into {}",
                other.fingerprint(),
                self.fingerprint()
            )));
        }
        self.layers.clone_from(&other.layers);
        Ok(())
    }

    fn locate(&self, mut i: usize) -> (usize, bool, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            if i < l.weights.len() {
                return (li, true, i);
            }
            i -= l.weights.len();
            if i < l.bias.len() {
                return (li, false, i);
            }
            i -= l.bias.len();
        }
        panic!("parameter index out of range");
    }
}

impl Parametric for Network {
    fn num_params(&self) -> usize {
        self.param_count()
    }

    fn param(&self, i: usize) -> f64 {
        let (l, w, j) = self.locate(i);
        if w {
            self.layers[l].weights[j]
        } else {
            self.layers[l].bias[j]
        }
    }

    fn set_param(&mut self, i: usize, v: f64) {
        let (l, w, j) = self.locate(i);
        if w {
            self.layers[l].weights[j] = v;
        } else {
            self.layers[l].bias[j] = v;
        }
    }
}
