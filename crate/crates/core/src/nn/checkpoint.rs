use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dense, Network, Optimizer};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON snapshot of one network and, optionally, its optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCheckpoint {
    pub version: u32,
    pub fingerprint: String,
    pub input_dim: usize,
    pub layers: Vec<Dense>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<Optimizer>,
}

impl NetworkCheckpoint {
    pub fn capture(net: &Network, optimizer: Option<&Optimizer>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            fingerprint: net.fingerprint(),
            input_dim: net.input_dim(),
            layers: net.layers().to_vec(),
            optimizer: optimizer.cloned(),
        }
    }

    /// Rebuild the network, checking version, shapes, fingerprint and finiteness.
    pub fn restore(&self) -> Result<(Network, Option<Optimizer>)> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let net = Network::from_layers(self.input_dim, self.layers.clone())?;
        if net.fingerprint() != self.fingerprint {
            return Err(Error::Config(format!(
                "checkpoint fingerprint {} does not match layers {}",
                self.fingerprint,
                net.fingerprint()
            )));
        }
        if !net.is_finite() {
            return Err(Error::Config("checkpoint holds non-finite parameters".into()));
        }
        if let Some(opt) = &self.optimizer {
            opt.validate_for(&net)?;
        }
        Ok((net, self.optimizer.clone()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cp: Self = serde_json::from_str(text)?;
        cp.restore()?;
        Ok(cp)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, OptimizerConfig};
    use crate::seed::{stream, Stream};

    #[test]
    fn round_trip_is_exact() {
        let mut rng = stream(3, Stream::NetInit);
        let net = Network::mlp(41, 80, 11, Activation::Linear, &mut rng);
        let opt = OptimizerConfig::default().build(&net);
        let cp = NetworkCheckpoint::capture(&net, Some(&opt));
        let back = NetworkCheckpoint::from_json(&cp.to_json().unwrap()).unwrap();
        let (net2, opt2) = back.restore().unwrap();
        assert_eq!(net, net2);
        assert_eq!(Some(opt), opt2);
    }

    #[test]
    fn rejects_tampering() {
        let mut rng = stream(3, Stream::NetInit);
        let net = Network::mlp(4, 5, 2, Activation::Linear, &mut rng);
        let mut cp = NetworkCheckpoint::capture(&net, None);
        cp.fingerprint = "4-relu6-linear2".into();
        assert!(cp.restore().is_err());
        let mut cp = NetworkCheckpoint::capture(&net, None);
        cp.version = 99;
        assert!(cp.restore().is_err());
        let mut cp = NetworkCheckpoint::capture(&net, None);
        cp.layers[0].weights.pop();
        assert!(cp.restore().is_err());
        assert!(NetworkCheckpoint::from_json("{\"version\":1}").is_err());
    }
}
