//! Adaptive coordinator: a small DQN over learning-progress states that picks
//! how many simulated dialogs to run per real dialog.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{
    argmax, epsilon_greedy, sample_minibatch, BufferLabel, DqnLearner, ReplayBuffer, Transition,
};
use crate::error::{Error, Result};
use crate::nn::{Activation, Network, OptimizerConfig};

/// `[SR, R, ΔSR, ΔR]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptationState(pub [f64; 4]);

pub fn adaptation_state(sr_i: f64, r_i: f64, sr_prev: f64, r_prev: f64, i: usize) -> AdaptationState {
    if i == 0 {
        AdaptationState([0.0; 4])
    } else {
        AdaptationState([sr_i, r_i, sr_i - sr_prev, r_i - r_prev])
    }
}

/// Affine map of `[−2L, 2L−1]` onto `[0, 1]`; out-of-range input is clamped.
pub fn normalize_avg_reward(raw: f64, max_turns: usize) -> f64 {
    let l = max_turns as f64;
    let lo = -2.0 * l;
    let hi = 2.0 * l - 1.0;
    let clamped = raw.clamp(lo, hi);
    if clamped != raw {
        log::warn!("average reward {raw} outside [{lo}, {hi}], clamped");
    }
    (clamped - lo) / (hi - lo)
}

/// Relative success-rate gain weighted by `k/(k+1)`; zero when `sr_i` is zero.
pub fn coordinator_reward(sr_i: f64, sr_prev: f64, k: usize) -> f64 {
    if sr_i == 0.0 {
        return 0.0;
    }
    let k = k as f64;
    (sr_i - sr_prev) / sr_i * (k / (k + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoordinatorConfig {
    /// Largest selectable k.
    pub max_k: usize,
    /// LHU calls per adaptation episode.
    pub horizon: usize,
    pub hidden: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for CoordinatorConfig {
    fn default() -> Self {
        Self {
            max_k: 20,
            horizon: 8,
            hidden: 64,
            gamma: 0.95,
            epsilon: 0.1,
            batch_size: 16,
            buffer_capacity: 5000,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl CoordinatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_k == 0 || self.horizon == 0 || self.hidden == 0 || self.batch_size == 0 || self.buffer_capacity == 0 {
            return Err(Error::Config("coordinator sizes must be positive".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) || !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config("coordinator gamma or epsilon out of range".into()));
        }
        self.optimizer.validate()
    }
}

/// Value network over adaptation states with one output per k.
#[derive(Debug, Clone)]
pub struct CoordinatorAgent {
    pub learner: DqnLearner,
    pub epsilon: f64,
    pub batch_size: usize,
    pub buffer: ReplayBuffer<Transition>,
}

impl CoordinatorAgent {
    pub fn new<R: Rng + ?Sized>(config: &CoordinatorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let net = Network::mlp(4, config.hidden, config.max_k, Activation::Linear, rng);
        Ok(Self {
            learner: DqnLearner::new(net, &config.optimizer, config.gamma),
            epsilon: config.epsilon,
            batch_size: config.batch_size,
            buffer: ReplayBuffer::new(BufferLabel::Coordinator, config.buffer_capacity),
        })
    }

    pub fn max_k(&self) -> usize {
        self.learner.num_actions()
    }

    /// ε-greedy k in `1..=K`; ties go to the smallest k.
    pub fn select_k<R: Rng + ?Sized>(&self, s: &AdaptationState, epsilon: f64, rng: &mut R) -> Result<usize> {
        let q = self.learner.q_values(&s.0)?;
        Ok(epsilon_greedy(&q, epsilon, rng) + 1)
    }

    pub fn greedy_k(&self, s: &AdaptationState) -> Result<usize> {
        Ok(argmax(&self.learner.q_values(&s.0)?) + 1)
    }

    pub fn store(&mut self, s: AdaptationState, k: usize, r: f64, s_next: AdaptationState, done: bool) -> Result<()> {
        if !(1..=self.max_k()).contains(&k) || !r.is_finite() {
            return Err(Error::Usage(format!("invalid coordinator transition k={k} r={r}")));
        }
        self.buffer.push(Transition {
            s: s.0.to_vec(),
            a: k - 1,
            r,
            s_next: s_next.0.to_vec(),
            done,
        });
        Ok(())
    }

    /// One minibatch DQN step followed by a target sync; `None` when B^A is empty.
    pub fn train<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<f64>> {
        if self.buffer.is_empty() {
            log::info!("coordinator buffer empty, skipping update");
            return Ok(None);
        }
        let batch = sample_minibatch(&[&self.buffer], self.batch_size, rng)?;
        let loss = self.learner.td_train_step(&batch)?;
        self.learner.sync_target();
        Ok(Some(loss))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{stream, Stream};

    #[test]
    fn state_formula() {
        assert_eq!(adaptation_state(0.7, 0.2, 0.1, 0.9, 0).0, [0.0; 4]);
        let s = adaptation_state(0.5, 0.6, 0.4, 0.6, 3).0;
        assert_eq!(s[..2], [0.5, 0.6]);
        assert!((s[2] - 0.1).abs() < 1e-12);
        assert_eq!(s[3], 0.0);
    }

    #[test]
    fn reward_normalisation() {
        assert_eq!(normalize_avg_reward(-80.0, 40), 0.0);
        assert_eq!(normalize_avg_reward(79.0, 40), 1.0);
        assert!((normalize_avg_reward(0.0, 40) - 80.0 / 159.0).abs() < 1e-15);
        assert_eq!(normalize_avg_reward(1e6, 40), 1.0);
        assert_eq!(normalize_avg_reward(-1e6, 40), 0.0);
    }

    #[test]
    fn reward_formula() {
        let expected: f64 = (0.1 / 0.5) * (10.0 / 11.0);
        assert!((expected - 0.18182).abs() < 1e-5);
        assert!((coordinator_reward(0.5, 0.4, 10) - expected).abs() < 1e-12);
        assert_eq!(coordinator_reward(0.4, 0.4, 7), 0.0);
        assert_eq!(coordinator_reward(0.0, 0.3, 7), 0.0);
        assert!(coordinator_reward(0.5, 0.4, 12) > coordinator_reward(0.5, 0.4, 11));
        assert!(coordinator_reward(0.3, 0.4, 5) < 0.0);
    }

    #[test]
    fn k_selection() {
        let mut rng = stream(1, Stream::NetInit);
        let mut c = CoordinatorAgent::new(&CoordinatorConfig::default(), &mut rng).unwrap();
        let s = AdaptationState([0.1, 0.2, 0.0, 0.0]);
        // Zeroed output layer: all values tie at the bias.
        let last = c.learner.q_net.layers_mut().last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w = 0.0);
        last.bias.iter_mut().for_each(|b| *b = 0.0);
        assert_eq!(c.greedy_k(&s).unwrap(), 1);
        let last = c.learner.q_net.layers_mut().last_mut().unwrap();
        last.bias[9] = 1.0;
        let mut explore = stream(1, Stream::Coordinator);
        assert_eq!(c.select_k(&s, 0.0, &mut explore).unwrap(), 10);
        let mut counts = [0usize; 20];
        for _ in 0..20_000 {
            counts[c.select_k(&s, 1.0, &mut explore).unwrap() - 1] += 1;
        }
        for n in counts {
            assert!((n as f64 / 20_000.0 - 0.05).abs() <= 0.01, "{counts:?}");
        }
    }

    #[test]
    fn training_overfits_single_transition() {
        let mut rng = stream(2, Stream::NetInit);
        let config = CoordinatorConfig {
            optimizer: OptimizerConfig::rmsprop(1e-2),
            ..CoordinatorConfig::default()
        };
        let mut c = CoordinatorAgent::new(&config, &mut rng).unwrap();
        let mut replay = stream(2, Stream::Replay);
        assert_eq!(c.train(&mut replay).unwrap(), None);
        let s = AdaptationState([0.5, 0.6, 0.1, 0.0]);
        c.store(s, 10, 0.18, AdaptationState([0.6, 0.6, 0.1, 0.0]), false).unwrap();
        let mut last = f64::INFINITY;
        for _ in 0..2000 {
            last = c.train(&mut replay).unwrap().unwrap();
        }
        let t = c.buffer.get(0).unwrap();
        let post = c.learner.td_loss(&[t]).unwrap();
        assert!(post < 1e-3, "loss {post} (last pre-step {last})");
        assert!(c.store(s, 0, 0.0, s, false).is_err());
        assert!(c.store(s, 21, 0.0, s, false).is_err());
    }

    #[test]
    fn zero_discount_targets_are_rewards() {
        let mut rng = stream(3, Stream::NetInit);
        let config = CoordinatorConfig {
            gamma: 0.0,
            ..CoordinatorConfig::default()
        };
        let c = CoordinatorAgent::new(&config, &mut rng).unwrap();
        let t = Transition {
            s: vec![0.1; 4],
            a: 3,
            r: 0.25,
            s_next: vec![0.9; 4],
            done: false,
        };
        assert_eq!(c.learner.td_target(&t).unwrap(), 0.25);
    }

    #[test]
    fn deterministic_given_seed() {
        let run = || {
            let mut rng = stream(4, Stream::NetInit);
            let mut c = CoordinatorAgent::new(&CoordinatorConfig::default(), &mut rng).unwrap();
            let mut replay = stream(4, Stream::Replay);
            for i in 0..10 {
                let s = AdaptationState([i as f64 / 10.0, 0.5, 0.0, 0.0]);
                c.store(s, i + 1, 0.1, s, i == 9).unwrap();
                c.train(&mut replay).unwrap();
            }
            c.learner.q_net
        };
        assert_eq!(run(), run());
    }
}
