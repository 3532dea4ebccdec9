//! Learned simulated user: predicts next state, reward and termination.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{sample_minibatch, BufferLabel, QAgent, ReplayBuffer};
use crate::env::{
    DialogEnv, Dialog, Outcome, Source, StateVector, TrackerState, Turn, UserAct, UserIntent,
    NUM_AGENT_ACTIONS,
};
use crate::error::{Error, Result};
use crate::nn::{
    mean_squared_error, softmax, softmax_cross_entropy, Activation, GradientBundle, Network,
    NetworkCheckpoint, Optimizer, OptimizerConfig, Parametric,
};
use crate::ontology::Goal;

/// Termination classes in head order.
pub const TERM_SUCCESS: usize = 0;
pub const TERM_FAILURE: usize = 1;
pub const TERM_CONTINUE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldModelConfig {
    pub hidden: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for WorldModelConfig {
    fn default() -> Self {
        Self {
            hidden: 80,
            batch_size: 16,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl WorldModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::Config("world model hidden and batch_size must be positive".into()));
        }
        self.optimizer.validate()
    }
}

/// Output of one model query.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub s_next: StateVector,
    pub reward: f64,
    pub done: bool,
    pub outcome: Outcome,
    /// Termination probabilities `[success, failure, continue]`.
    pub termination: [f64; 3],
}

/// Pre-step losses of one training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldModelLoss {
    pub state_mse: f64,
    pub reward_mse: f64,
    pub term_xent: f64,
}

impl WorldModelLoss {
    pub fn total(&self) -> f64 {
        self.state_mse + self.reward_mse + self.term_xent
    }
}

/// Shared two-layer trunk feeding three single-hidden-layer heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub trunk: Network,
    pub state_head: Network,
    pub reward_head: Network,
    pub term_head: Network,
    pub max_turns: usize,
}

struct Forward {
    trunk: crate::nn::Trace,
    state: crate::nn::Trace,
    reward: crate::nn::Trace,
    term: crate::nn::Trace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldModelGrads {
    pub trunk: GradientBundle,
    pub state_head: GradientBundle,
    pub reward_head: GradientBundle,
    pub term_head: GradientBundle,
}

impl WorldModelGrads {
    fn zeros_like(m: &WorldModel) -> Self {
        Self {
            trunk: GradientBundle::zeros_like(&m.trunk),
            state_head: GradientBundle::zeros_like(&m.state_head),
            reward_head: GradientBundle::zeros_like(&m.reward_head),
            term_head: GradientBundle::zeros_like(&m.term_head),
        }
    }

    /// Flattened in [`Parametric`] order.
    pub fn flat(&self) -> Vec<f64> {
        [&self.trunk, &self.state_head, &self.reward_head, &self.term_head]
            .iter()
            .flat_map(|g| g.values())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.flat().iter().all(|g| *g == 0.0)
    }
}

/// One optimizer per sub-network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModelOptimizer {
    pub trunk: Optimizer,
    pub state_head: Optimizer,
    pub reward_head: Optimizer,
    pub term_head: Optimizer,
}

impl WorldModel {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, max_turns: usize, hidden: usize, rng: &mut R) -> Self {
        let relu = Activation::Relu;
        let input = state_dim + NUM_AGENT_ACTIONS;
        Self {
            trunk: Network::new(&[input, hidden, hidden], &[relu, relu], rng),
            state_head: Network::mlp(hidden, hidden, state_dim, Activation::Sigmoid, rng),
            reward_head: Network::mlp(hidden, hidden, 1, Activation::Linear, rng),
            term_head: Network::mlp(hidden, hidden, 3, Activation::Linear, rng),
            max_turns,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_head.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    fn nets(&self) -> [&Network; 4] {
        [&self.trunk, &self.state_head, &self.reward_head, &self.term_head]
    }

    fn nets_mut(&mut self) -> [&mut Network; 4] {
        [
            &mut self.trunk,
            &mut self.state_head,
            &mut self.reward_head,
            &mut self.term_head,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.nets().iter().all(|n| n.is_finite())
    }

    pub fn new_optimizer(&self, config: &OptimizerConfig) -> WorldModelOptimizer {
        WorldModelOptimizer {
            trunk: config.build(&self.trunk),
            state_head: config.build(&self.state_head),
            reward_head: config.build(&self.reward_head),
            term_head: config.build(&self.term_head),
        }
    }

    /// `s ++ one_hot(a)`.
    pub fn input(&self, s: &[f64], a: usize) -> Result<Vec<f64>> {
        if s.len() != self.state_dim() {
            return Err(Error::Dimension {
                expected: self.state_dim(),
                got: s.len(),
            });
        }
        if a >= NUM_AGENT_ACTIONS {
            return Err(Error::Usage(format!("action index {a} out of range")));
        }
        let mut x = Vec::with_capacity(self.input_dim());
        x.extend_from_slice(s);
        x.extend((0..NUM_AGENT_ACTIONS).map(|i| if i == a { 1.0 } else { 0.0 }));
        Ok(x)
    }

    fn forward(&self, x: &[f64]) -> Result<Forward> {
        let trunk = self.trunk.forward_trace(x)?;
        let h = trunk.output();
        Ok(Forward {
            state: self.state_head.forward_trace(h)?,
            reward: self.reward_head.forward_trace(h)?,
            term: self.term_head.forward_trace(h)?,
            trunk,
        })
    }

    /// Raw head outputs: next state, reward, termination logits.
    pub fn raw(&self, s: &[f64], a: usize) -> Result<(Vec<f64>, f64, Vec<f64>)> {
        let f = self.forward(&self.input(s, a)?)?;
        Ok((
            f.state.output().to_vec(),
            f.reward.output()[0],
            f.term.output().to_vec(),
        ))
    }

    /// Query the model, sampling termination from its softmax.
    pub fn predict<R: Rng + ?Sized>(&self, s: &[f64], a: usize, rng: &mut R) -> Result<Prediction> {
        let (s_next, r, logits) = self.raw(s, a)?;
        let p = softmax(&logits);
        Ok(self.resolve(s_next, r, [p[0], p[1], p[2]], rng))
    }

    /// Apply the clamps, sample termination and override terminal rewards.
    pub fn resolve<R: Rng + ?Sized>(
        &self,
        s_next: Vec<f64>,
        r: f64,
        termination: [f64; 3],
        rng: &mut R,
    ) -> Prediction {
        let l = self.max_turns as f64;
        let s_next: Vec<f64> = s_next.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let class = if termination[TERM_CONTINUE] >= 1.0 {
            TERM_CONTINUE
        } else {
            let u: f64 = rng.gen();
            if u < termination[TERM_SUCCESS] {
                TERM_SUCCESS
            } else if u < termination[TERM_SUCCESS] + termination[TERM_FAILURE] {
                TERM_FAILURE
            } else {
                TERM_CONTINUE
            }
        };
        let (reward, done, outcome) = match class {
            TERM_SUCCESS => (2.0 * l - 1.0, true, Outcome::Success),
            TERM_FAILURE => (-l - 1.0, true, Outcome::Failure),
            _ => (r.clamp(-l, 2.0 * l), false, Outcome::Ongoing),
        };
        Prediction {
            s_next: StateVector(s_next),
            reward,
            done,
            outcome,
            termination,
        }
    }

    /// Termination class a real turn teaches.
    pub fn termination_class(turn: &Turn) -> usize {
        match (turn.done, turn.r > 0.0) {
            (false, _) => TERM_CONTINUE,
            (true, true) => TERM_SUCCESS,
            (true, false) => TERM_FAILURE,
        }
    }

    /// Batch losses and their gradient, without updating anything.
    pub fn loss_and_grad(&self, batch: &[&Turn]) -> Result<(WorldModelLoss, WorldModelGrads)> {
        let n = batch.len() as f64;
        let mut grads = WorldModelGrads::zeros_like(self);
        let mut loss = WorldModelLoss {
            state_mse: 0.0,
            reward_mse: 0.0,
            term_xent: 0.0,
        };
        for t in batch {
            let f = self.forward(&self.input(&t.s, t.a)?)?;
            let (ls, mut gs) = mean_squared_error(f.state.output(), &t.s_next);
            let dr = f.reward.output()[0] - t.r;
            let mut target = [0.0; 3];
            target[Self::termination_class(t)] = 1.0;
            let (lt, mut gt) = softmax_cross_entropy(f.term.output(), &target);
            loss.state_mse += ls / n;
            loss.reward_mse += dr * dr / n;
            loss.term_xent += lt / n;

            gs.iter_mut().for_each(|g| *g /= n);
            gt.iter_mut().for_each(|g| *g /= n);
            let h = f.trunk.output();
            let mut dh = self
                .state_head
                .backward_into(&f.state, &gs, &mut grads.state_head)?;
            let dh_r = self
                .reward_head
                .backward_into(&f.reward, &[2.0 * dr / n], &mut grads.reward_head)?;
            let dh_t = self.term_head.backward_into(&f.term, &gt, &mut grads.term_head)?;
            for ((a, b), c) in dh.iter_mut().zip(&dh_r).zip(&dh_t) {
                *a += b + c;
            }
            debug_assert_eq!(dh.len(), h.len());
            self.trunk.backward_into(&f.trunk, &dh, &mut grads.trunk)?;
        }
        Ok((loss, grads))
    }

    /// Summed batch loss, as a plain number (used by gradient checks).
    pub fn batch_loss(&self, batch: &[&Turn]) -> Result<f64> {
        Ok(self.loss_and_grad(batch)?.0.total())
    }

    /// One optimizer step on a batch that must come from the real-experience buffer.
    pub fn train_batch(
        &mut self,
        opt: &mut WorldModelOptimizer,
        label: BufferLabel,
        batch: &[&Turn],
    ) -> Result<WorldModelLoss> {
        if label != BufferLabel::Real {
            return Err(Error::Usage(format!(
                "world model trains on real experience only, got a {label:?} batch"
            )));
        }
        if batch.is_empty() {
            return Err(Error::Usage("world model step on an empty batch".into()));
        }
        let (loss, g) = self.loss_and_grad(batch)?;
        opt.trunk.step(&mut self.trunk, &g.trunk)?;
        opt.state_head.step(&mut self.state_head, &g.state_head)?;
        opt.reward_head.step(&mut self.reward_head, &g.reward_head)?;
        opt.term_head.step(&mut self.term_head, &g.term_head)?;
        Ok(loss)
    }

    /// Sample a minibatch from `buffer` and train on it.
    pub fn train_from<R: Rng + ?Sized>(
        &mut self,
        opt: &mut WorldModelOptimizer,
        buffer: &ReplayBuffer<Turn>,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<WorldModelLoss> {
        let batch = sample_minibatch(&[buffer], batch_size, rng)?;
        self.train_batch(opt, buffer.label(), &batch)
    }

    pub fn checkpoint(&self, opt: Option<&WorldModelOptimizer>) -> WorldModelCheckpoint {
        WorldModelCheckpoint {
            max_turns: self.max_turns,
            trunk: NetworkCheckpoint::capture(&self.trunk, opt.map(|o| &o.trunk)),
            state_head: NetworkCheckpoint::capture(&self.state_head, opt.map(|o| &o.state_head)),
            reward_head: NetworkCheckpoint::capture(&self.reward_head, opt.map(|o| &o.reward_head)),
            term_head: NetworkCheckpoint::capture(&self.term_head, opt.map(|o| &o.term_head)),
        }
    }
}

impl Parametric for WorldModel {
    fn num_params(&self) -> usize {
        self.nets().iter().map(|n| n.num_params()).sum()
    }

    fn param(&self, mut i: usize) -> f64 {
        for n in self.nets() {
            if i < n.num_params() {
                return n.param(i);
            }
            i -= n.num_params();
        }
        panic!("parameter index out of range")
    }

    fn set_param(&mut self, mut i: usize, v: f64) {
        for n in self.nets_mut() {
            if i < n.num_params() {
                return n.set_param(i, v);
            }
            i -= n.num_params();
        }
        panic!("parameter index out of range")
    }
}

/// World model snapshot in the shared network checkpoint format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModelCheckpoint {
    pub max_turns: usize,
    pub trunk: NetworkCheckpoint,
    pub state_head: NetworkCheckpoint,
    pub reward_head: NetworkCheckpoint,
    pub term_head: NetworkCheckpoint,
}

impl WorldModelCheckpoint {
    pub fn restore(&self) -> Result<WorldModel> {
        let m = WorldModel {
            trunk: self.trunk.restore()?.0,
            state_head: self.state_head.restore()?.0,
            reward_head: self.reward_head.restore()?.0,
            term_head: self.term_head.restore()?.0,
            max_turns: self.max_turns,
        };
        let h = m.trunk.output_dim();
        let heads_ok = [&m.state_head, &m.reward_head, &m.term_head]
            .iter()
            .all(|n| n.input_dim() == h);
        if !heads_ok
            || m.reward_head.output_dim() != 1
            || m.term_head.output_dim() != 3
            || m.trunk.input_dim() != m.state_dim() + NUM_AGENT_ACTIONS
        {
            return Err(Error::Config("world model checkpoint has inconsistent shapes".into()));
        }
        Ok(m)
    }
}

/// Roll the agent out against the model for `goal`.
///
/// The opening state comes from the real user's opening act. Trackers stored
/// on simulated turns are decoded from the predicted vectors.
pub fn simulate_dialog<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    env: &DialogEnv,
    agent: &QAgent,
    model: &WorldModel,
    goal: Goal,
    epsilon: f64,
    id: u64,
    explore_rng: &mut R1,
    model_rng: &mut R2,
) -> Result<Dialog> {
    let ont = env.ontology();
    let layout = env.layout();
    let max_turns = env.config().max_turns;
    let rewards = env.rewards();
    let mut tracker = Arc::new(env.initial_tracker(&goal, model_rng));
    let mut s = env.encode(&tracker);
    let mut turns = Vec::new();
    let mut outcome = Outcome::Ongoing;
    while outcome == Outcome::Ongoing {
        let a = agent.select_action(&s, epsilon, explore_rng)?;
        let mut p = model.predict(&s, a, model_rng)?;
        if !p.done && turns.len() + 1 >= max_turns {
            p.done = true;
            p.outcome = Outcome::Failure;
            p.reward = rewards.failure();
        }
        let next = Arc::new(TrackerState::decode(ont, layout, &p.s_next));
        let agent_act = env.realize_action(&tracker, a)?;
        let user_act = next
            .last_user_act
            .clone()
            .unwrap_or_else(|| UserAct::new(UserIntent::Inform));
        turns.push(Turn {
            s: std::mem::replace(&mut s, p.s_next.clone()),
            a,
            r: p.reward,
            s_next: p.s_next,
            done: p.done,
            tracker_snapshot: Arc::clone(&tracker),
            tracker_next: Arc::clone(&next),
            agent_act,
            user_act,
        });
        tracker = next;
        outcome = p.outcome;
    }
    Ok(Dialog {
        id,
        goal,
        turns,
        outcome,
        source: Source::Simulated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::DqnConfig;
    use crate::env::{EnvConfig, RuleAgent};
    use crate::nn::{max_relative_error, numeric_gradient};
    use crate::ontology::{sample_goal, Domain};
    use crate::seed::{stream, Stream};

    fn env() -> DialogEnv {
        DialogEnv::new(Domain::desk(), EnvConfig::default()).unwrap()
    }

    fn real_turns(env: &DialogEnv, dialogs: usize, seed: u64) -> Vec<Turn> {
        let mut rng = stream(seed, Stream::Goals);
        let mut user_rng = stream(seed, Stream::User);
        let mut out = Vec::new();
        for _ in 0..dialogs {
            let goal = sample_goal(&env.domain().templates, &mut rng).unwrap();
            let mut rule = RuleAgent::default();
            let session = env.run_dialog(goal, &mut rule, &mut user_rng).unwrap();
            out.extend(session.turns().iter().cloned());
        }
        out
    }

    /// Set the termination head's final bias so that one class dominates.
    fn force_termination(m: &mut WorldModel, class: usize) {
        let last = m.term_head.layers_mut().last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w = 0.0);
        for (i, b) in last.bias.iter_mut().enumerate() {
            *b = if i == class { 1e3 } else { -1e3 };
        }
    }

    #[test]
    fn untrained_predictions_respect_clamps() {
        let env = env();
        let mut rng = stream(1, Stream::WorldModel);
        let m = WorldModel::new(env.state_dim(), 40, 80, &mut rng);
        for t in real_turns(&env, 3, 1) {
            for a in 0..NUM_AGENT_ACTIONS {
                let p = m.predict(&t.s, a, &mut rng).unwrap();
                assert!(p.s_next.iter().all(|v| (0.0..=1.0).contains(v)));
                if p.done {
                    assert!(p.reward == 79.0 || p.reward == -41.0);
                } else {
                    assert!((-40.0..=80.0).contains(&p.reward));
                }
            }
        }
    }

    #[test]
    fn certain_continue_never_terminates() {
        let mut rng = stream(2, Stream::WorldModel);
        let m = WorldModel::new(5, 40, 8, &mut rng);
        for _ in 0..100 {
            let p = m.resolve(vec![0.5; 5], -1.0, [0.0, 0.0, 1.0], &mut rng);
            assert!(!p.done);
            assert_eq!(p.outcome, Outcome::Ongoing);
        }
        let p = m.resolve(vec![2.0; 5], 1e9, [0.0, 0.0, 1.0], &mut rng);
        assert!(p.s_next.iter().all(|v| *v == 1.0));
        assert_eq!(p.reward, 80.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let env = env();
        let mut rng = stream(3, Stream::NetInit);
        let mut m = WorldModel::new(env.state_dim(), 40, 12, &mut rng);
        let turns = real_turns(&env, 2, 3);
        let batch: Vec<&Turn> = turns.iter().take(4).collect();
        let analytic = m.loss_and_grad(&batch).unwrap().1.flat();
        let numeric = numeric_gradient(&mut m, |m| m.batch_loss(&batch).unwrap());
        let err = max_relative_error(&analytic, &numeric);
        assert!(err <= 1e-4, "relative error {err}");
    }

    #[test]
    fn rejects_non_real_batches() {
        let env = env();
        let mut rng = stream(4, Stream::NetInit);
        let mut m = WorldModel::new(env.state_dim(), 40, 8, &mut rng);
        let mut opt = m.new_optimizer(&OptimizerConfig::default());
        let turns = real_turns(&env, 1, 4);
        let batch: Vec<&Turn> = turns.iter().collect();
        let before = m.clone();
        assert!(matches!(
            m.train_batch(&mut opt, BufferLabel::Simulated, &batch),
            Err(Error::Usage(_))
        ));
        assert_eq!(m, before);
        assert!(m.train_batch(&mut opt, BufferLabel::Real, &batch).is_ok());
    }

    #[test]
    fn overfits_a_fixed_batch() {
        let env = env();
        let mut rng = stream(5, Stream::NetInit);
        let mut m = WorldModel::new(env.state_dim(), 40, 80, &mut rng);
        let mut opt = m.new_optimizer(&OptimizerConfig::default());
        let turns = real_turns(&env, 4, 5);
        let batch: Vec<&Turn> = turns.iter().step_by(turns.len() / 16).take(16).collect();
        let first = m.train_batch(&mut opt, BufferLabel::Real, &batch).unwrap().total();
        for _ in 0..2000 {
            m.train_batch(&mut opt, BufferLabel::Real, &batch).unwrap();
        }
        let last = m.loss_and_grad(&batch).unwrap().0.total();
        assert!(last < 0.1 * first, "{first} -> {last}");
    }

    #[test]
    fn learns_one_transition() {
        let env = env();
        let mut rng = stream(6, Stream::NetInit);
        let mut m = WorldModel::new(env.state_dim(), 40, 80, &mut rng);
        let mut opt = m.new_optimizer(&OptimizerConfig::default());
        let turns = real_turns(&env, 1, 6);
        let t = &turns[0];
        for _ in 0..3000 {
            m.train_batch(&mut opt, BufferLabel::Real, &[t]).unwrap();
        }
        let (s, r, _) = m.raw(&t.s, t.a).unwrap();
        let (mse, _) = mean_squared_error(&s, &t.s_next);
        assert!(mse < 1e-3, "state mse {mse}");
        assert!((r - t.r).powi(2) < 1e-3, "reward {r} vs {}", t.r);
    }

    #[test]
    fn simulated_rollouts() {
        let env = env();
        let mut rng = stream(7, Stream::NetInit);
        let agent = QAgent::new(env.state_dim(), &DqnConfig::default(), &mut rng).unwrap();
        let mut m = WorldModel::new(env.state_dim(), 40, 16, &mut rng);
        let goal = sample_goal(&env.domain().templates, &mut stream(7, Stream::Goals)).unwrap();

        force_termination(&mut m, TERM_CONTINUE);
        let run = |m: &WorldModel, seed: u64| {
            simulate_dialog(
                &env,
                &agent,
                m,
                goal.clone(),
                0.1,
                0,
                &mut stream(seed, Stream::Exploration),
                &mut stream(seed, Stream::WorldModel),
            )
            .unwrap()
        };
        let d = run(&m, 1);
        assert_eq!(d.len(), 40);
        assert_eq!(d.outcome, Outcome::Failure);
        assert_eq!(d.turns.last().unwrap().r, -41.0);
        d.check_invariants().unwrap();
        assert_eq!(d, run(&m, 1));

        force_termination(&mut m, TERM_SUCCESS);
        let d = run(&m, 2);
        assert_eq!(d.len(), 1);
        assert_eq!(d.turns[0].r, 79.0);
        assert_eq!(d.outcome, Outcome::Success);
        assert_eq!(d.source, Source::Simulated);
    }

    #[test]
    fn training_reduces_held_out_error() {
        let env = env();
        let mut rng = stream(8, Stream::NetInit);
        let mut m = WorldModel::new(env.state_dim(), 40, 80, &mut rng);
        let mut opt = m.new_optimizer(&OptimizerConfig::default());
        let mut buf = ReplayBuffer::new(BufferLabel::Real, 5000);
        real_turns(&env, 60, 8).into_iter().for_each(|t| buf.push(t));
        let held = real_turns(&env, 20, 9);
        let held: Vec<&Turn> = held.iter().collect();
        let before = m.loss_and_grad(&held).unwrap().0.state_mse;
        let mut replay = stream(8, Stream::Replay);
        for _ in 0..2000 {
            m.train_from(&mut opt, &buf, 16, &mut replay).unwrap();
        }
        let after = m.loss_and_grad(&held).unwrap().0.state_mse;
        assert!(after < before, "{before} -> {after}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = stream(9, Stream::NetInit);
        let m = WorldModel::new(41, 40, 8, &mut rng);
        let cp = m.checkpoint(None);
        let text = serde_json::to_string(&cp).unwrap();
        let back: WorldModelCheckpoint = serde_json::from_str(&text).unwrap();
        assert_eq!(back.restore().unwrap(), m);
    }
}
