//! DQN: replay buffers, a reusable TD learner, and the dialog agent built on it.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{StateVector, TrackerState, Turn, NUM_AGENT_ACTIONS};
use crate::error::{Error, Result};
use crate::nn::{Activation, Network, NetworkCheckpoint, Optimizer, OptimizerConfig};

pub const DEFAULT_BUFFER_CAPACITY: usize = 5000;
pub const DEFAULT_BATCH_SIZE: usize = 16;
pub const AGENT_CHECKPOINT_VERSION: u32 = 1;

/// Anything a TD update can consume: `(s, a, r, s', done)`.
pub trait Experience {
    fn state(&self) -> &[f64];
    fn action(&self) -> usize;
    fn reward(&self) -> f64;
    fn next_state(&self) -> &[f64];
    fn terminal(&self) -> bool;
}

impl Experience for Turn {
    fn state(&self) -> &[f64] {
        &self.s
    }
    fn action(&self) -> usize {
        self.a
    }
    fn reward(&self) -> f64 {
        self.r
    }
    fn next_state(&self) -> &[f64] {
        &self.s_next
    }
    fn terminal(&self) -> bool {
        self.done
    }
}

/// Plain transition, used by the coordinator and by checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: usize,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

impl Transition {
    pub fn of<E: Experience + ?Sized>(e: &E) -> Self {
        Self {
            s: e.state().to_vec(),
            a: e.action(),
            r: e.reward(),
            s_next: e.next_state().to_vec(),
            done: e.terminal(),
        }
    }
}

impl Experience for Transition {
    fn state(&self) -> &[f64] {
        &self.s
    }
    fn action(&self) -> usize {
        self.a
    }
    fn reward(&self) -> f64 {
        self.r
    }
    fn next_state(&self) -> &[f64] {
        &self.s_next
    }
    fn terminal(&self) -> bool {
        self.done
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BufferLabel {
    Real,
    Simulated,
    Coordinator,
}

/// Bounded FIFO experience store.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    label: BufferLabel,
    capacity: usize,
    items: VecDeque<T>,
    pushed: u64,
}

impl<T> ReplayBuffer<T> {
    pub fn new(label: BufferLabel, capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            label,
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 14)),
            pushed: 0,
        }
    }

    pub fn label(&self) -> BufferLabel {
        self.label
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total pushes over the buffer's life, evicted ones included.
    pub fn total_pushed(&self) -> u64 {
        self.pushed
    }

    /// Append, evicting the oldest item when full.
    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
        self.pushed += 1;
    }

    pub fn pop_oldest(&mut self) -> Option<T> {
        self.items.pop_front()
    }

    pub fn get(&self, i: usize) -> Option<&T> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> + '_ {
        self.items.iter()
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }
}

/// `n` items drawn uniformly with replacement from the concatenation of `buffers`.
pub fn sample_minibatch<'a, T, R: Rng + ?Sized>(
    buffers: &[&'a ReplayBuffer<T>],
    n: usize,
    rng: &mut R,
) -> Result<Vec<&'a T>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let total: usize = buffers.iter().map(|b| b.len()).sum();
    if total == 0 {
        return Err(Error::Sampling("all replay buffers are empty".into()));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut i = rng.gen_range(0..total);
        for b in buffers {
            if i < b.len() {
                out.push(&b.items[i]);
                break;
            }
            i -= b.len();
        }
    }
    Ok(out)
}

/// Lowest index among the maxima.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Uniform action with probability `epsilon`, else the lowest-index argmax.
pub fn epsilon_greedy<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q.len())
    } else {
        argmax(q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub hidden: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden: 80,
            gamma: 0.95,
            epsilon: 0.1,
            batch_size: DEFAULT_BATCH_SIZE,
            buffer_capacity: DEFAULT_BUFFER_CAPACITY,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 || self.buffer_capacity == 0 {
            return Err(Error::Config(
                "hidden, batch_size and buffer_capacity must be positive".into(),
            ));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon {} outside [0, 1]", self.epsilon)));
        }
        self.optimizer.validate()
    }
}

/// Q-network, target network and optimizer with the one-step TD update.
#[derive(Debug, Clone, PartialEq)]
pub struct DqnLearner {
    pub q_net: Network,
    pub target_net: Network,
    pub optimizer: Optimizer,
    pub gamma: f64,
}

impl DqnLearner {
    /// Target starts as an exact copy of the freshly initialised Q-network.
    pub fn new(q_net: Network, optimizer: &OptimizerConfig, gamma: f64) -> Self {
        Self {
            target_net: q_net.clone(),
            optimizer: optimizer.build(&q_net),
            q_net,
            gamma,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.q_net.output_dim()
    }

    pub fn q_values(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.q_net.forward(s)
    }

    /// `y = r` for terminal tuples, else `r + γ max_a' Q_target(s', a')`.
    pub fn td_target<E: Experience + ?Sized>(&self, e: &E) -> Result<f64> {
        if e.terminal() {
            return Ok(e.reward());
        }
        let next = self.target_net.forward(e.next_state())?;
        Ok(e.reward() + self.gamma * next.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Mean squared TD error of `batch` under the current networks.
    pub fn td_loss<E: Experience + ?Sized>(&self, batch: &[&E]) -> Result<f64> {
        let mut total = 0.0;
        for e in batch {
            let q = self.q_net.forward(e.state())?;
            let d = q[self.action_index(e.action())?] - self.td_target(*e)?;
            total += d * d;
        }
        Ok(total / batch.len().max(1) as f64)
    }

    fn action_index(&self, a: usize) -> Result<usize> {
        if a >= self.num_actions() {
            return Err(Error::Dimension {
                expected: self.num_actions(),
                got: a,
            });
        }
        Ok(a)
    }

    /// One optimizer step on the mean squared TD error; returns the pre-step loss.
    ///
    /// Targets come from the target network and are constants of the update.
    pub fn td_train_step<E: Experience + ?Sized>(&mut self, batch: &[&E]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Usage("TD step on an empty batch".into()));
        }
        let n = batch.len() as f64;
        let mut grads = crate::nn::GradientBundle::zeros_like(&self.q_net);
        let mut loss = 0.0;
        let mut grad_out = vec![0.0; self.num_actions()];
        for e in batch {
            let a = self.action_index(e.action())?;
            let y = self.td_target(*e)?;
            let trace = self.q_net.forward_trace(e.state())?;
            let d = trace.output()[a] - y;
            loss += d * d;
            grad_out.iter_mut().for_each(|g| *g = 0.0);
            grad_out[a] = 2.0 * d / n;
            self.q_net.backward_into(&trace, &grad_out, &mut grads)?;
        }
        self.optimizer.step(&mut self.q_net, &grads)?;
        Ok(loss / n)
    }

    pub fn sync_target(&mut self) {
        self.target_net
            .copy_params_from(&self.q_net)
            .expect("target shares the Q-network architecture");
    }
}

/// The dialog policy agent.
#[derive(Debug, Clone, PartialEq)]
pub struct QAgent {
    pub learner: DqnLearner,
    pub epsilon: f64,
}

impl QAgent {
    /// Agent over `state_dim` inputs with the 11 dialog actions.
    pub fn new<R: Rng + ?Sized>(state_dim: usize, config: &DqnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let q_net = Network::mlp(state_dim, config.hidden, NUM_AGENT_ACTIONS, Activation::Linear, rng);
        Ok(Self {
            learner: DqnLearner::new(q_net, &config.optimizer, config.gamma),
            epsilon: config.epsilon,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.learner.gamma
    }

    pub fn q_values(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.learner.q_values(s)
    }

    pub fn select_action<R: Rng + ?Sized>(&self, s: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
        Ok(epsilon_greedy(&self.q_values(s)?, epsilon, rng))
    }

    pub fn greedy_action(&self, s: &[f64]) -> Result<usize> {
        Ok(argmax(&self.q_values(s)?))
    }

    pub fn td_train_step(&mut self, batch: &[&Turn]) -> Result<f64> {
        self.learner.td_train_step(batch)
    }

    pub fn sync_target(&mut self) {
        self.learner.sync_target();
    }

    pub fn checkpoint(&self, buffers: &[&ReplayBuffer<Turn>], include_tuples: bool) -> AgentCheckpoint {
        AgentCheckpoint {
            version: AGENT_CHECKPOINT_VERSION,
            q_net: NetworkCheckpoint::capture(&self.learner.q_net, Some(&self.learner.optimizer)),
            target_net: NetworkCheckpoint::capture(&self.learner.target_net, None),
            epsilon: self.epsilon,
            gamma: self.learner.gamma,
            buffer_counts: buffers.iter().map(|b| (b.label(), b.len())).collect(),
            tuples: include_tuples.then(|| {
                buffers
                    .iter()
                    .map(|b| (b.label(), b.iter().map(Transition::of).collect()))
                    .collect()
            }),
        }
    }

    pub fn from_checkpoint(cp: &AgentCheckpoint) -> Result<Self> {
        cp.validate()?;
        let (q_net, optimizer) = cp.q_net.restore()?;
        let (target_net, _) = cp.target_net.restore()?;
        if q_net.output_dim() != NUM_AGENT_ACTIONS {
            return Err(Error::Config(format!(
                "checkpoint Q-network has {} outputs, expected {NUM_AGENT_ACTIONS}",
                q_net.output_dim()
            )));
        }
        let optimizer = optimizer.unwrap_or_else(|| OptimizerConfig::default().build(&q_net));
        Ok(Self {
            learner: DqnLearner {
                q_net,
                target_net,
                optimizer,
                gamma: cp.gamma,
            },
            epsilon: cp.epsilon,
        })
    }
}

/// Agent snapshot: both networks plus replay buffer statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub version: u32,
    pub q_net: NetworkCheckpoint,
    pub target_net: NetworkCheckpoint,
    pub epsilon: f64,
    pub gamma: f64,
    pub buffer_counts: BTreeMap<BufferLabel, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuples: Option<BTreeMap<BufferLabel, Vec<Transition>>>,
}

impl AgentCheckpoint {
    pub fn validate(&self) -> Result<()> {
        if self.version != AGENT_CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported agent checkpoint version {}",
                self.version
            )));
        }
        if self.q_net.fingerprint != self.target_net.fingerprint {
            return Err(Error::Config("Q and target networks differ in shape".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config("gamma or epsilon out of range".into()));
        }
        self.q_net.restore()?;
        self.target_net.restore()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cp: Self = serde_json::from_str(text)?;
        cp.validate()?;
        Ok(cp)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// [`crate::env::Policy`] adapter: ε-greedy over an agent's Q-values.
pub struct EpsilonGreedy<'a, R: Rng + ?Sized> {
    pub agent: &'a QAgent,
    pub epsilon: f64,
    pub rng: &'a mut R,
}

impl<R: Rng + ?Sized> crate::env::Policy for EpsilonGreedy<'_, R> {
    fn act(&mut self, _tracker: &TrackerState, state: &StateVector) -> usize {
        self.agent
            .select_action(state, self.epsilon, self.rng)
            .expect("state vector matches the agent input")
    }
}
