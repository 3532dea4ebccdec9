use serde::{Deserialize, Serialize};

use super::{GradientBundle, Network};
use crate::error::{Error, Result};

/// Hyperparameters of an optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    RmsProp { lr: f64, decay: f64, eps: f64 },
    Sgd { lr: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::RmsProp {
            lr: 1e-3,
            decay: 0.9,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn rmsprop(lr: f64) -> Self {
        OptimizerConfig::RmsProp {
            lr,
            decay: 0.9,
            eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerConfig::RmsProp { lr, decay, eps } => {
                lr > 0.0 && lr.is_finite() && (0.0..1.0).contains(&decay) && eps >= 0.0
            }
            OptimizerConfig::Sgd { lr } => lr > 0.0 && lr.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }

    pub fn build(&self, net: &Network) -> Optimizer {
        match *self {
            OptimizerConfig::RmsProp { lr, decay, eps } => {
                Optimizer::RmsProp(RmsProp::new(net, lr, decay, eps))
            }
            OptimizerConfig::Sgd { lr } => Optimizer::Sgd(Sgd { lr }),
        }
    }
}

/// RMSProp state: the running second moment of every parameter's gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    pub accumulator: GradientBundle,
}

/// Serialized optimizer state.
pub type OptimizerState = Optimizer;

impl RmsProp {
    pub fn new(net: &Network, lr: f64, decay: f64, eps: f64) -> Self {
        Self {
            lr,
            decay,
            eps,
            accumulator: GradientBundle::zeros_like(net),
        }
    }

    /// `acc ← ρ·acc + (1−ρ)·g²`, then `θ ← θ − lr·g/√(acc + ε)`.
    pub fn step(&mut self, net: &mut Network, grads: &GradientBundle) -> Result<()> {
        check_shapes(net, grads)?;
        check_shapes(net, &self.accumulator)?;
        for ((layer, g), acc) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.accumulator.layers)
        {
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let gs = g.weights.iter().chain(&g.bias);
            let accs = acc.weights.iter_mut().chain(acc.bias.iter_mut());
            for ((p, &g), a) in params.zip(gs).zip(accs) {
                *a = self.decay * *a + (1.0 - self.decay) * g * g;
                let denom = (*a + self.eps).sqrt();
                if denom > 0.0 {
                    *p -= self.lr * g / denom;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn step(&mut self, net: &mut Network, grads: &GradientBundle) -> Result<()> {
        check_shapes(net, grads)?;
        for (layer, g) in net.layers_mut().iter_mut().zip(&grads.layers) {
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            for (p, g) in params.zip(g.weights.iter().chain(&g.bias)) {
                *p -= self.lr * g;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    RmsProp(RmsProp),
    Sgd(Sgd),
}

impl Optimizer {
    pub fn step(&mut self, net: &mut Network, grads: &GradientBundle) -> Result<()> {
        match self {
            Optimizer::RmsProp(o) => o.step(net, grads),
            Optimizer::Sgd(o) => o.step(net, grads),
        }
    }

    pub fn validate_for(&self, net: &Network) -> Result<()> {
        match self {
            Optimizer::RmsProp(o) => {
                check_shapes(net, &o.accumulator)?;
                if o.accumulator.values().any(|a| !(a >= 0.0 && a.is_finite())) {
                    return Err(Error::Config("RMSProp accumulator must be finite and nonnegative".into()));
                }
                OptimizerConfig::RmsProp {
                    lr: o.lr,
                    decay: o.decay,
                    eps: o.eps,
                }
                .validate()
            }
            Optimizer::Sgd(o) => OptimizerConfig::Sgd { lr: o.lr }.validate(),
        }
    }
}

fn check_shapes(net: &Network, grads: &GradientBundle) -> Result<()> {
    if grads.layers.len() != net.layers().len() {
        return Err(Error::Dimension {
            expected: net.layers().len(),
            got: grads.layers.len(),
        });
    }
    for (l, g) in net.layers().iter().zip(&grads.layers) {
        if l.weights.len() != g.weights.len() || l.bias.len() != g.bias.len() {
            return Err(Error::Dimension {
                expected: l.param_count(),
                got: g.weights.len() + g.bias.len(),
            });
        }
    }
    Ok(())
}
