//! Training loops, ablation variants, evaluation and run outputs.

mod metrics;
mod output;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use metrics::{auc, evaluate_policy, mean_std, EpisodeRecord, Evaluation, LearningCurve};
pub use output::{
    aggregate_curves, emit_outputs, plot_svg, read_aggregate_csv, read_run_csv, write_aggregate_csv,
    write_run_csv, write_sweep_csv, AggregateRow, RunPaths,
};

use crate::agent::{sample_minibatch, BufferLabel, DqnConfig, EpsilonGreedy, QAgent, ReplayBuffer};
use crate::coordinator::{
    adaptation_state, coordinator_reward, normalize_avg_reward, CoordinatorAgent, CoordinatorConfig,
};
use crate::env::{Dialog, DialogEnv, EnvConfig, Outcome, RuleAgent, Source, Turn};
use crate::error::{Error, Result};
use crate::hindsight::{
    head_seg_gen_all, tail_seg_gen, AuditRecord, SegmentRecord, SegmentStore, DEFAULT_DELTA,
    DEFAULT_SEGMENT_CAPACITY,
};
use crate::ontology::{sample_goal, Domain};
use crate::seed::RngStreams;
use crate::nn::OptimizerConfig;
use crate::worldmodel::{simulate_dialog, WorldModel, WorldModelConfig, WorldModelOptimizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Dqn,
    Lu,
    Lh,
    Lhu,
    Lhua,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Dqn, Variant::Lu, Variant::Lh, Variant::Lhu, Variant::Lhua];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Dqn => "dqn",
            Variant::Lu => "lu",
            Variant::Lh => "lh",
            Variant::Lhu => "lhu",
            Variant::Lhua => "lhua",
        }
    }

    pub fn uses_world_model(self) -> bool {
        matches!(self, Variant::Lu | Variant::Lhu | Variant::Lhua)
    }

    pub fn uses_hindsight(self) -> bool {
        matches!(self, Variant::Lh | Variant::Lhu | Variant::Lhua)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?} (expected dqn, lu, lh, lhu or lhua)")))
    }
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub variant: Variant,
    pub seed: u64,
    pub episodes: usize,
    pub eval_dialogs: usize,
    /// `"desk"`, `"full"`, or a path to an ontology JSON file.
    pub domain: String,
    pub max_turns: usize,
    pub user_noise: f64,
    /// Simulated dialogs per real dialog for the fixed-k variants.
    pub k: usize,
    /// Default values for `sweep-k`.
    pub k_sweep: Vec<usize>,
    pub delta: f64,
    pub segment_capacity: usize,
    /// Rule-agent dialogs placed in the real buffer before training.
    pub warm_start_dialogs: usize,
    /// Agent minibatch steps on the warm-start data.
    pub warm_start_steps: usize,
    /// World-model minibatch steps on the warm-start data.
    pub world_model_warm_start_steps: usize,
    /// Agent minibatch steps per LHU call, before the replay-ratio term.
    pub agent_updates: usize,
    /// Additional agent steps per LHU call: `ceil(replay_ratio * new_turns / batch_size)`,
    /// where `new_turns` counts every turn added to either buffer in that call.
    pub replay_ratio: f64,
    /// Cap on agent steps per LHU call.
    pub max_agent_updates: usize,
    /// World-model minibatch steps per LHU call.
    pub world_model_updates: usize,
    pub agent: DqnConfig,
    pub world_model: WorldModelConfig,
    pub coordinator: CoordinatorConfig,
    /// Keep segment and stitching records for the audit file.
    pub audit: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Lhua,
            seed: 0,
            episodes: 250,
            eval_dialogs: 50,
            domain: "desk".into(),
            max_turns: 40,
            user_noise: 0.0,
            k: 10,
            k_sweep: vec![6, 8, 10, 12, 14, 16],
            delta: DEFAULT_DELTA,
            segment_capacity: DEFAULT_SEGMENT_CAPACITY,
            warm_start_dialogs: 100,
            warm_start_steps: 100,
            world_model_warm_start_steps: 1000,
            agent_updates: 1,
            replay_ratio: 2.0,
            max_agent_updates: 1000,
            world_model_updates: 20,
            agent: DqnConfig::default(),
            world_model: WorldModelConfig {
                optimizer: OptimizerConfig::rmsprop(1e-2),
                ..WorldModelConfig::default()
            },
            coordinator: CoordinatorConfig::default(),
            audit: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("episodes", self.episodes),
            ("eval_dialogs", self.eval_dialogs),
            ("max_turns", self.max_turns),
            ("segment_capacity", self.segment_capacity),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.variant != Variant::Dqn && self.variant != Variant::Lh && self.variant != Variant::Lhua && self.k == 0 {
            return Err(Error::Config("k must be positive for fixed-k variants".into()));
        }
        if self.k_sweep.contains(&0) {
            return Err(Error::Config("k_sweep values must be positive".into()));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::Config(format!("delta {} must be nonnegative", self.delta)));
        }
        if !(self.replay_ratio >= 0.0 && self.replay_ratio.is_finite()) {
            return Err(Error::Config(format!("replay_ratio {} must be finite and nonnegative", self.replay_ratio)));
        }
        if !(0.0..=1.0).contains(&self.user_noise) {
            return Err(Error::Config(format!("user_noise {} outside [0, 1]", self.user_noise)));
        }
        self.agent.validate()?;
        self.world_model.validate()?;
        self.coordinator.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn env(&self) -> Result<DialogEnv> {
        let domain = Domain::resolve(&self.domain)?;
        DialogEnv::new(
            domain,
            EnvConfig {
                max_turns: self.max_turns,
                noise: self.user_noise,
            },
        )
    }

    /// Simulated dialogs per LHU call for fixed-k variants.
    pub fn fixed_k(&self) -> usize {
        match self.variant {
            Variant::Dqn | Variant::Lh => 0,
            _ => self.k,
        }
    }
}

/// Result of one LHU(k) call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LhuOutcome {
    /// Success rate over the 1 real + k simulated dialogs.
    pub success_rate: f64,
    /// Mean raw return over the same dialogs.
    pub avg_reward: f64,
    pub hindsight_dialogs: usize,
    pub agent_loss: Option<f64>,
}

/// Mutable state shared by successive LHU calls.
pub struct LhuState {
    pub config: RunConfig,
    pub env: DialogEnv,
    pub agent: QAgent,
    pub world_model: Option<(WorldModel, WorldModelOptimizer)>,
    pub segments: Option<SegmentStore>,
    pub real: ReplayBuffer<Turn>,
    pub simulated: ReplayBuffer<Turn>,
    pub rngs: RngStreams,
    pub audit: Vec<AuditRecord>,
    next_dialog_id: u64,
}

impl LhuState {
    /// Build the learners and apply the warm start.
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let env = config.env()?;
        let mut rngs = RngStreams::new(config.seed);
        let agent = QAgent::new(env.state_dim(), &config.agent, &mut rngs.net_init)?;
        let world_model = config.variant.uses_world_model().then(|| {
            let m = WorldModel::new(env.state_dim(), config.max_turns, config.world_model.hidden, &mut rngs.net_init);
            let opt = m.new_optimizer(&config.world_model.optimizer);
            (m, opt)
        });
        let segments = config
            .variant
            .uses_hindsight()
            .then(|| SegmentStore::new(config.segment_capacity));
        let mut state = Self {
            real: ReplayBuffer::new(BufferLabel::Real, config.agent.buffer_capacity),
            simulated: ReplayBuffer::new(BufferLabel::Simulated, config.agent.buffer_capacity),
            env,
            agent,
            world_model,
            segments,
            rngs,
            audit: Vec::new(),
            next_dialog_id: 0,
            config,
        };
        state.warm_start()?;
        Ok(state)
    }

    fn next_id(&mut self) -> u64 {
        let id = self.next_dialog_id;
        self.next_dialog_id += 1;
        id
    }

    /// Rule-agent dialogs into the real buffer, then pre-training steps.
    fn warm_start(&mut self) -> Result<()> {
        let templates = &self.env.domain().templates;
        for _ in 0..self.config.warm_start_dialogs {
            let goal = sample_goal(templates, &mut self.rngs.warm_start)?;
            let session = self.env.run_dialog(goal, &mut RuleAgent::default(), &mut self.rngs.warm_start)?;
            for t in session.turns() {
                self.real.push(t.clone());
            }
        }
        if self.real.is_empty() {
            return Ok(());
        }
        for _ in 0..self.config.warm_start_steps {
            let batch = sample_minibatch(&[&self.real], self.config.agent.batch_size, &mut self.rngs.warm_start)?;
            self.agent.td_train_step(&batch)?;
        }
        if let Some((m, opt)) = self.world_model.as_mut() {
            for _ in 0..self.config.world_model_warm_start_steps {
                m.train_from(opt, &self.real, self.config.world_model.batch_size, &mut self.rngs.warm_start)?;
            }
        }
        self.agent.sync_target();
        Ok(())
    }

    fn collect_segments(&mut self, dialog: &Arc<Dialog>) -> Result<()> {
        let Some(store) = self.segments.as_mut() else {
            return Ok(());
        };
        let heads = head_seg_gen_all(self.env.ontology(), dialog, store);
        let tails = tail_seg_gen(dialog, store)?;
        if self.config.audit {
            self.audit.extend(heads.iter().map(|h| AuditRecord::Head(SegmentRecord::of(h))));
            self.audit.extend(tails.iter().map(|t| AuditRecord::Tail(SegmentRecord::of(t))));
        }
        Ok(())
    }

    /// Agent steps owed for `new_turns` fresh turns.
    pub fn agent_updates(&self, new_turns: usize) -> usize {
        let c = &self.config;
        let extra = (c.replay_ratio * new_turns as f64 / c.agent.batch_size as f64).ceil() as usize;
        (c.agent_updates + extra).min(c.max_agent_updates)
    }

    /// One LHU(k) call: a real dialog, `k` simulated dialogs, hindsight
    /// stitching, then agent and world-model updates and a target sync.
    pub fn run_lhu(&mut self, k: usize) -> Result<LhuOutcome> {
        let epsilon = self.agent.epsilon;
        let pushed_before = self.real.total_pushed() + self.simulated.total_pushed();
        let goal = sample_goal(&self.env.domain().templates, &mut self.rngs.goals)?;
        let session = {
            let mut policy = EpsilonGreedy {
                agent: &self.agent,
                epsilon,
                rng: &mut self.rngs.exploration,
            };
            self.env.run_dialog(goal, &mut policy, &mut self.rngs.user)?
        };
        let id = self.next_id();
        let real = Arc::new(session.into_dialog(id, Source::Real));
        for t in &real.turns {
            self.real.push(t.clone());
        }
        self.collect_segments(&real)?;
        let mut successes = usize::from(real.outcome == Outcome::Success);
        let mut total_reward = real.total_reward();

        let mut simulated = 0;
        if self.world_model.is_some() {
            for _ in 0..k {
                let goal = sample_goal(&self.env.domain().templates, &mut self.rngs.simulation)?;
                let id = self.next_id();
                let (m, _) = self.world_model.as_ref().expect("checked above");
                let d = simulate_dialog(
                    &self.env,
                    &self.agent,
                    m,
                    goal,
                    epsilon,
                    id,
                    &mut self.rngs.simulation,
                    &mut self.rngs.world_model,
                )?;
                let d = Arc::new(d);
                for t in &d.turns {
                    self.simulated.push(t.clone());
                }
                self.collect_segments(&d)?;
                successes += usize::from(d.outcome == Outcome::Success);
                total_reward += d.total_reward();
                simulated += 1;
            }
        }

        let mut hindsight_dialogs = 0;
        if let Some(store) = self.segments.as_mut() {
            let stitched = store.stitch_new(self.env.layout(), self.config.delta, self.env.rewards())?;
            hindsight_dialogs = stitched.len();
            for s in &stitched {
                for t in &s.dialog.turns {
                    self.simulated.push(t.clone());
                }
            }
            if self.config.audit {
                self.audit.extend(stitched.iter().map(AuditRecord::stitched));
            }
        }

        let n = (1 + simulated) as f64;
        let mut agent_loss = None;
        let new_turns = (self.real.total_pushed() + self.simulated.total_pushed() - pushed_before) as usize;
        for _ in 0..self.agent_updates(new_turns) {
            let batch = sample_minibatch(&[&self.real, &self.simulated], self.config.agent.batch_size, &mut self.rngs.replay)?;
            agent_loss = Some(self.agent.td_train_step(&batch)?);
        }
        if let Some((m, opt)) = self.world_model.as_mut() {
            for _ in 0..self.config.world_model_updates {
                m.train_from(opt, &self.real, self.config.world_model.batch_size, &mut self.rngs.replay)?;
            }
        }
        self.agent.sync_target();
        Ok(LhuOutcome {
            success_rate: successes as f64 / n,
            avg_reward: total_reward / n,
            hindsight_dialogs,
            agent_loss,
        })
    }

    /// Greedy evaluation against the scripted user.
    pub fn evaluate(&mut self) -> Result<Evaluation> {
        evaluate_policy(&self.env, &self.agent, self.config.eval_dialogs, &mut self.rngs.evaluation)
    }

    fn record(&mut self, episode: usize, k: usize, out: &LhuOutcome) -> Result<EpisodeRecord> {
        let eval = self.evaluate()?;
        log::info!(
            "{} seed {} episode {episode}: eval success {:.3}, k {k}, hindsight {}",
            self.config.variant,
            self.config.seed,
            eval.success_rate,
            out.hindsight_dialogs
        );
        Ok(EpisodeRecord {
            variant: self.config.variant,
            seed: self.config.seed,
            episode,
            eval_success_rate: eval.success_rate,
            eval_avg_reward: eval.avg_reward,
            train_success_rate: out.success_rate,
            train_avg_reward: out.avg_reward,
            k_chosen: k,
            real_buffer: self.real.len(),
            sim_buffer: self.simulated.len(),
            hindsight_dialogs: out.hindsight_dialogs,
        })
    }
}

/// A finished run.
pub struct RunOutput {
    pub curve: LearningCurve,
    pub state: LhuState,
}

/// Fixed-k loop: one LHU call and one evaluation per episode.
fn run_fixed(mut state: LhuState) -> Result<RunOutput> {
    let k = state.config.fixed_k();
    let mut records = Vec::with_capacity(state.config.episodes);
    for episode in 1..=state.config.episodes {
        let out = state.run_lhu(k)?;
        records.push(state.record(episode, k, &out)?);
        log::debug!("{} seed {} episode {episode}: eval sr {:.3}", state.config.variant, state.config.seed, records.last().unwrap().eval_success_rate);
    }
    Ok(RunOutput {
        curve: LearningCurve { records },
        state,
    })
}

/// Adaptive loop: the coordinator picks k for every LHU call; adaptation
/// episodes last `H` calls and end with one coordinator update.
pub fn run_lhua(config: RunConfig) -> Result<(RunOutput, CoordinatorAgent)> {
    let mut state = LhuState::new(config)?;
    let cfg = state.config.coordinator;
    let mut coordinator = CoordinatorAgent::new(&cfg, &mut state.rngs.net_init)?;
    let mut records = Vec::with_capacity(state.config.episodes);
    let (mut sr_prev, mut r_prev) = (0.0, 0.0);
    let mut s = adaptation_state(0.0, 0.0, 0.0, 0.0, 0);
    let episodes = state.config.episodes;
    for episode in 1..=episodes {
        let h = (episode - 1) % cfg.horizon;
        if h == 0 {
            s = adaptation_state(0.0, 0.0, 0.0, 0.0, 0);
        }
        let k = coordinator.select_k(&s, coordinator.epsilon, &mut state.rngs.coordinator)?;
        let out = state.run_lhu(k)?;
        let sr = out.success_rate;
        let r = normalize_avg_reward(out.avg_reward, state.config.max_turns);
        let s_next = adaptation_state(sr, r, sr_prev, r_prev, h + 1);
        let reward = coordinator_reward(sr, sr_prev, k);
        let last = h + 1 == cfg.horizon || episode == episodes;
        coordinator.store(s, k, reward, s_next, last)?;
        s = s_next;
        sr_prev = sr;
        r_prev = r;
        records.push(state.record(episode, k, &out)?);
        if last {
            coordinator.train(&mut state.rngs.coordinator)?;
        }
    }
    Ok((
        RunOutput {
            curve: LearningCurve { records },
            state,
        },
        coordinator,
    ))
}

/// Run the configured variant.
pub fn run_ablation(config: RunConfig) -> Result<RunOutput> {
    match config.variant {
        Variant::Lhua => Ok(run_lhua(config)?.0),
        _ => run_fixed(LhuState::new(config)?),
    }
}

/// Policy checkpoint written by `train` and read by `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub domain: String,
    pub env: EnvConfig,
    pub agent: crate::agent::AgentCheckpoint,
}

impl PolicyCheckpoint {
    pub fn capture(state: &LhuState, include_tuples: bool) -> Self {
        Self {
            domain: state.config.domain.clone(),
            env: *state.env.config(),
            agent: state.agent.checkpoint(&[&state.real, &state.simulated], include_tuples),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cp: Self = serde_json::from_str(text)?;
        cp.agent.validate()?;
        Ok(cp)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn env(&self) -> Result<DialogEnv> {
        DialogEnv::new(Domain::resolve(&self.domain)?, self.env)
    }
}

/// Headline numbers of one run, written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: Variant,
    pub seed: u64,
    pub episodes: usize,
    pub auc: f64,
    pub final_eval_success_rate: f64,
    pub mean_k: f64,
    pub hindsight_dialogs: usize,
}

impl RunSummary {
    pub fn of(curve: &LearningCurve) -> Result<Self> {
        let last = curve
            .records
            .last()
            .ok_or_else(|| Error::Usage("empty learning curve".into()))?;
        let n = curve.records.len();
        Ok(Self {
            variant: last.variant,
            seed: last.seed,
            episodes: n,
            auc: auc(curve, n)?,
            final_eval_success_rate: last.eval_success_rate,
            mean_k: curve.records.iter().map(|r| r.k_chosen as f64).sum::<f64>() / n as f64,
            hindsight_dialogs: curve.records.iter().map(|r| r.hindsight_dialogs).sum(),
        })
    }
}

/// AUC of a fixed-k LHU run for each k, `seeds` runs per value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub seeds: usize,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub final_sr_mean: f64,
}

pub fn sweep_k(base: &RunConfig, values: &[usize], seeds: &[u64]) -> Result<(Vec<SweepRow>, Vec<LearningCurve>)> {
    if values.is_empty() || seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one k and one seed".into()));
    }
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for &k in values {
        let mut aucs = Vec::new();
        let mut finals = Vec::new();
        for &seed in seeds {
            let config = RunConfig {
                variant: Variant::Lhu,
                k,
                seed,
                ..base.clone()
            };
            let out = run_ablation(config)?;
            aucs.push(auc(&out.curve, out.curve.records.len())?);
            finals.push(out.curve.records.last().map_or(0.0, |r| r.eval_success_rate));
            curves.push(out.curve);
        }
        let (auc_mean, auc_std) = metrics::mean_std(&aucs);
        rows.push(SweepRow {
            k,
            seeds: seeds.len(),
            auc_mean,
            auc_std,
            final_sr_mean: metrics::mean_std(&finals).0,
        });
    }
    Ok((rows, curves))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(variant: Variant) -> RunConfig {
        RunConfig {
            variant,
            episodes: 3,
            eval_dialogs: 5,
            warm_start_dialogs: 5,
            warm_start_steps: 5,
            world_model_warm_start_steps: 5,
            ..RunConfig::default()
        }
    }

    #[test]
    fn variant_wiring() {
        let dqn = run_ablation(quick(Variant::Dqn)).unwrap();
        assert!(dqn.state.simulated.is_empty());
        assert!(dqn.state.world_model.is_none());
        assert!(dqn.curve.records.iter().all(|r| r.k_chosen == 0));

        let lh = run_ablation(quick(Variant::Lh)).unwrap();
        assert!(lh.state.world_model.is_none());
        assert!(lh.state.simulated.iter().all(|t| t.done == (t.r == 79.0)));

        let lu = run_ablation(quick(Variant::Lu)).unwrap();
        assert!(lu.state.segments.is_none());
        assert!(lu.curve.records.iter().all(|r| r.k_chosen == 10 && r.hindsight_dialogs == 0));
        assert!(lu.state.simulated.len() >= 30);
    }

    #[test]
    fn lhu_is_deterministic_and_bounded() {
        let mut a = LhuState::new(quick(Variant::Lhu)).unwrap();
        let mut b = LhuState::new(quick(Variant::Lhu)).unwrap();
        for _ in 0..2 {
            let x = a.run_lhu(10).unwrap();
            let y = b.run_lhu(10).unwrap();
            assert_eq!(x, y);
            assert!((0.0..=1.0).contains(&x.success_rate));
        }
        let mut c = LhuState::new(quick(Variant::Lhu)).unwrap();
        let out = c.run_lhu(0).unwrap();
        assert!(out.success_rate == 0.0 || out.success_rate == 1.0);
    }

    #[test]
    fn adaptation_loop_arithmetic() {
        let config = RunConfig {
            episodes: 8,
            ..quick(Variant::Lhua)
        };
        let (out, coord) = run_lhua(config).unwrap();
        assert_eq!(out.curve.records.len(), 8);
        assert_eq!(coord.buffer.len(), 8);
        let first = coord.buffer.get(0).unwrap();
        assert_eq!(first.s, vec![0.0; 4]);
        let terminal: Vec<bool> = coord.buffer.iter().map(|t| t.done).collect();
        assert_eq!(terminal.iter().filter(|d| **d).count(), 1);
        assert!(terminal[7]);
        assert!(out.curve.records.iter().all(|r| (1..=20).contains(&r.k_chosen)));
    }

    #[test]
    fn update_schedule() {
        let mut config = quick(Variant::Dqn);
        config.replay_ratio = 0.0;
        config.agent_updates = 3;
        let state = LhuState::new(config.clone()).unwrap();
        assert_eq!(state.agent_updates(500), 3);
        config.replay_ratio = 2.0;
        config.max_agent_updates = 50;
        let state = LhuState::new(config).unwrap();
        // 2 * 17 / 16 rounds up to 3.
        assert_eq!(state.agent_updates(17), 6);
        assert_eq!(state.agent_updates(0), 3);
        assert_eq!(state.agent_updates(10_000), 50);
    }

    #[test]
    fn config_parsing() {
        let c = RunConfig::from_json(r#"{"variant":"lh","episodes":12,"agent":{"gamma":0.9}}"#).unwrap();
        assert_eq!(c.variant, Variant::Lh);
        assert_eq!(c.episodes, 12);
        assert_eq!(c.agent.gamma, 0.9);
        assert_eq!(c.agent.hidden, 80);
        assert!(RunConfig::from_json(r#"{"variant":"ddq"}"#).unwrap_err().is_config());
        assert!(RunConfig::from_json(r#"{"episodes":0}"#).is_err());
        assert!(RunConfig::from_json(r#"{"delta":-1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"bogus":1}"#).is_err());
        assert_eq!("lhua".parse::<Variant>().unwrap(), Variant::Lhua);
        assert!("x".parse::<Variant>().is_err());
    }
}
